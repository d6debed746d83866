"""Semantic distortion between dense and sparse marked fields."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concentration_lab import BoundReport, sample_nonempty_field, whitened_dispersion
from .errors import EmptyWindow, InfeasibleThreshold
from .gaussian_manifold import MetricKind, as_spd, gaussian_distance_sq
from .rng import StreamFactory
from .spatial_field import MarkedField, MarkModel, PppConfig, Window, empirical_frechet_mean
from .trials import map_trials

INDEPENDENT = "independent"
THINNING = "thinning"


@dataclass(frozen=True)
class CompressionSpec:
    dense_intensity: float
    sparse_intensity: float
    window: Window
    threshold: float
    metric: MetricKind = MetricKind.WASSERSTEIN2

    def __post_init__(self):
        if not (self.dense_intensity >= self.sparse_intensity > 0):
            raise ValueError("need dense_intensity >= sparse_intensity > 0")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        object.__setattr__(self, "metric", MetricKind.parse(self.metric))


def _trace(m):
    return float(np.trace(as_spd(m).entries))


def semantic_distortion(dense: MarkedField, sparse: MarkedField, metric=MetricKind.WASSERSTEIN2,
                        **solver_opts) -> float:
    """Squared distance between the Frechet means of the two fields."""
    if len(dense) == 0 or len(sparse) == 0:
        raise EmptyWindow("both fields need at least one point")
    p = empirical_frechet_mean(dense, metric, **solver_opts)
    q = empirical_frechet_mean(sparse, metric, **solver_opts)
    return gaussian_distance_sq(metric, p, q)


def semantic_similarity(field1: MarkedField, field2: MarkedField, metric=MetricKind.WASSERSTEIN2,
                        **solver_opts) -> float:
    return semantic_distortion(field1, field2, metric, **solver_opts)


def expected_distortion_bound(gamma, spec: CompressionSpec) -> float:
    area = spec.window.area
    return _trace(gamma) * (1.0 / (spec.dense_intensity * area) + 1.0 / (spec.sparse_intensity * area))


def min_sparse_intensity(gamma, intensity: float, window: Window, eps: float) -> float:
    """Smallest sparse intensity whose distortion bound does not exceed ``eps``."""
    tr = _trace(gamma)
    area = window.area
    dense_term = tr / (intensity * area)
    if not eps > dense_term:
        raise InfeasibleThreshold(
            f"threshold {eps} must exceed the dense-field floor {dense_term}"
        )
    return tr / (area * (eps - dense_term))


def effective_dispersion(model: MarkModel, metric) -> np.ndarray:
    """Dispersion whose trace is the mean squared deviation under ``metric``."""
    if MetricKind.parse(metric) is MetricKind.FISHER_RAO:
        return whitened_dispersion(model.common_cov, model.mean_dispersion)
    return model.mean_dispersion.entries


@dataclass
class CompressionReport:
    variant: str
    spec: CompressionSpec
    bound: float
    report: BoundReport
    fraction_within_eps: float
    distortions: np.ndarray = field(repr=False)
    n_dense: np.ndarray = field(repr=False)
    n_sparse: np.ndarray = field(repr=False)
    empty_resampled: int = 0

    @property
    def empirical_mean(self) -> float:
        return self.report.empirical_value

    def rows(self):
        for i, (nd, ns, dist) in enumerate(zip(self.n_dense, self.n_sparse, self.distortions)):
            yield i, nd, ns, dist

    def summary(self):
        return {
            "variant": self.variant,
            "lambda": self.spec.dense_intensity,
            "lambda_sparse": self.spec.sparse_intensity,
            "eps": self.spec.threshold,
            "bound": self.bound,
            "empirical_mean": self.empirical_mean,
            "mc_slack": self.report.mc_slack,
            "dominance": self.report.dominance_holds,
            "fraction_within_eps": self.fraction_within_eps,
            "empty_resampled": self.empty_resampled,
        }


def _thinned(dense: MarkedField, keep: float, rng):
    for redraws in range(10_000):
        mask = rng.uniform(size=len(dense)) < keep
        if mask.any():
            return dense.subset(mask), redraws
    raise EmptyWindow("thinning kept no points")


def run_compression_protocol(model: MarkModel, spec: CompressionSpec, trials: int,
                             streams: StreamFactory, variant: str = INDEPENDENT,
                             min_trials: int = 1000) -> CompressionReport:
    """Monte-Carlo distortion between dense and sparse fields.

    ``independent`` draws the sparse field as its own PPP; ``thinning``
    keeps each dense point with probability sparse/dense intensity.  Empty
    fields are redrawn and counted.
    """
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    if variant not in (INDEPENDENT, THINNING):
        raise ValueError(f"unknown variant {variant!r}")
    dense_cfg = PppConfig(spec.dense_intensity, spec.window)
    sparse_cfg = PppConfig(spec.sparse_intensity, spec.window)
    sub = streams.child("semantic", variant, int(round(spec.sparse_intensity * 1e6)))

    def one(i):
        rng = sub(i)
        dense, r1 = sample_nonempty_field(dense_cfg, model, rng)
        if variant == INDEPENDENT:
            sparse, r2 = sample_nonempty_field(sparse_cfg, model, rng)
        else:
            sparse, r2 = _thinned(dense, spec.sparse_intensity / spec.dense_intensity, rng)
        return semantic_distortion(dense, sparse, spec.metric), len(dense), len(sparse), r1 + r2

    out = map_trials(one, trials)
    dist = np.array([o[0] for o in out])
    gamma_eff = effective_dispersion(model, spec.metric)
    bound = expected_distortion_bound(gamma_eff, spec)
    slack = 3.0 * float(dist.std(ddof=1)) / np.sqrt(trials)
    report = BoundReport(f"distortion_{variant}", bound, float(dist.mean()), trials, slack,
                         spec.sparse_intensity)
    return CompressionReport(
        variant=variant,
        spec=spec,
        bound=bound,
        report=report,
        fraction_within_eps=float(np.mean(dist <= spec.threshold)),
        distortions=dist,
        n_dense=np.array([o[1] for o in out]),
        n_sparse=np.array([o[2] for o in out]),
        empty_resampled=int(sum(o[3] for o in out)),
    )
