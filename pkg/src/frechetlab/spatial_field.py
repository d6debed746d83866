"""Marked Poisson point processes on square windows.

Points live in ``B_R = [-R, R]^2``.  Each point carries a Gaussian mark
``N(mu_x, Sigma)`` whose mean is drawn i.i.d. from ``N(mu_bar, Gamma)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, EmptyWindow, Unsupported
from .frechet_solvers import DEFAULT_MAX_ITER, DEFAULT_TOL, WeightedGaussianSet, frechet_mean
from .gaussian_manifold import EQUAL_TOL, Gaussian, MetricKind, SpdMatrix, as_spd, spd_sqrt


@dataclass(frozen=True)
class Window:
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("window half-width must be positive")

    @property
    def area(self) -> float:
        return 4.0 * self.half_width**2

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(np.abs(pts) <= self.half_width, axis=1)


@dataclass(frozen=True)
class PppConfig:
    """Poisson process on a window.

    ``intensity`` is the homogeneous rate.  When ``inhomogeneity`` is given
    it maps an (n, 2) array of locations to local rates, and ``intensity``
    must be its declared supremum; sampling thins a process of that rate.
    """

    intensity: float
    window: Window
    inhomogeneity: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")

    @property
    def homogeneous(self) -> bool:
        return self.inhomogeneity is None

    @property
    def mean_count(self) -> float:
        return self.intensity * self.window.area


@dataclass(frozen=True, eq=False)
class MarkModel:
    mean_of_means: np.ndarray
    mean_dispersion: SpdMatrix
    common_cov: SpdMatrix

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean_of_means, dtype=float))
        gamma = as_spd(self.mean_dispersion)
        sigma = as_spd(self.common_cov)
        if not (mu.shape[0] == gamma.dim == sigma.dim):
            raise DimensionMismatch("mark model dimensions disagree")
        object.__setattr__(self, "mean_of_means", mu)
        object.__setattr__(self, "mean_dispersion", gamma)
        object.__setattr__(self, "common_cov", sigma)

    @property
    def dim(self) -> int:
        return self.mean_of_means.shape[0]

    @classmethod
    def isotropic(cls, dim, gamma, sigma, mean=None):
        mean = np.zeros(dim) if mean is None else mean
        return cls(mean, SpdMatrix(gamma * np.eye(dim)), SpdMatrix(sigma * np.eye(dim)))

    @property
    def global_mean(self) -> Gaussian:
        return Gaussian(self.mean_of_means, self.common_cov)

    @cached_property
    def _gamma_root(self) -> np.ndarray:
        return spd_sqrt(self.mean_dispersion).entries

    def draw_means(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean_of_means + z @ self._gamma_root


class MarkedField:
    """Points in a window with one Gaussian mark each.

    Marks are stored as arrays: ``means`` is (n, d) and ``covs`` is either a
    single shared :class:`SpdMatrix` or an (n, d, d) array.
    """

    def __init__(self, points, means, covs, window: Optional[Window] = None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        mus = np.asarray(means, dtype=float)
        if mus.ndim == 1:
            mus = mus.reshape(len(pts), -1) if len(pts) else mus.reshape(0, -1)
        if len(mus) != len(pts):
            raise DimensionMismatch("one mark per point is required")
        if window is not None and len(pts) and not np.all(window.contains(pts)):
            raise ValueError("field has points outside its window")
        if not isinstance(covs, SpdMatrix):
            covs = np.asarray(covs, dtype=float)
            if covs.shape != (len(pts), mus.shape[1], mus.shape[1]):
                raise DimensionMismatch("per-point covariances must be (n, d, d)")
        self.points = pts
        self.means = mus
        self.covs = covs
        self.window = window
        for a in (self.points, self.means):
            a.setflags(write=False)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def common_cov(self) -> Optional[SpdMatrix]:
        if isinstance(self.covs, SpdMatrix):
            return self.covs
        if len(self.covs) and np.all(np.abs(self.covs - self.covs[0]) <= EQUAL_TOL):
            return SpdMatrix(self.covs[0])
        return None

    def cov_at(self, i: int) -> SpdMatrix:
        return self.covs if isinstance(self.covs, SpdMatrix) else SpdMatrix(self.covs[i])

    @property
    def marks(self) -> list:
        return [Gaussian(self.means[i], self.cov_at(i)) for i in range(len(self))]

    def subset(self, mask) -> "MarkedField":
        mask = np.asarray(mask)
        covs = self.covs if isinstance(self.covs, SpdMatrix) else self.covs[mask]
        return MarkedField(self.points[mask], self.means[mask], covs, self.window)

    def with_point(self, location, mark: Gaussian) -> "MarkedField":
        pts = np.vstack([np.asarray(location, float).reshape(1, 2), self.points])
        mus = np.vstack([mark.mean.reshape(1, -1), self.means])
        if isinstance(self.covs, SpdMatrix) and mark.cov == self.covs:
            covs = self.covs
        else:
            own = self.covs if not isinstance(self.covs, SpdMatrix) else np.broadcast_to(
                self.covs.entries, (len(self), self.dim, self.dim))
            covs = np.concatenate([mark.cov.entries[None], own])
        return MarkedField(pts, mus, covs, self.window)

    @classmethod
    def from_marks(cls, points, marks, window=None) -> "MarkedField":
        marks = list(marks)
        means = np.stack([g.mean for g in marks])
        covs = np.stack([g.cov.entries for g in marks])
        return cls(points, means, covs, window)

    def write_csv(self, path) -> None:
        d = self.dim
        header = ["x", "y"] + [f"mu_{i + 1}" for i in range(d)] + [f"cov_{k + 1}" for k in range(d * d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                row = list(self.points[i]) + list(self.means[i]) + list(self.cov_at(i).entries.ravel())
                w.writerow([format(float(v), ".17g") for v in row])


def sample_ppp(cfg: PppConfig, rng: np.random.Generator) -> np.ndarray:
    """Sample PPP locations, sorted lexicographically by (x, y)."""
    R = cfg.window.half_width
    n = rng.poisson(cfg.mean_count)
    pts = rng.uniform(-R, R, size=(n, 2))
    if cfg.inhomogeneity is not None:
        # one retention uniform per candidate, drawn unconditionally
        u = rng.uniform(size=n)
        rate = np.asarray(cfg.inhomogeneity(pts), dtype=float).reshape(n)
        if np.any(rate < 0) or np.any(rate > cfg.intensity * (1 + 1e-12)):
            raise ValueError("inhomogeneous rate outside [0, declared supremum]")
        pts = pts[u * cfg.intensity < rate]
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order]


def attach_marks(points, model: MarkModel, rng: np.random.Generator, window=None) -> MarkedField:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    return MarkedField(pts, model.draw_means(len(pts), rng), model.common_cov, window)


def sample_field(cfg: PppConfig, model: MarkModel, rng: np.random.Generator) -> MarkedField:
    return attach_marks(sample_ppp(cfg, rng), model, rng, cfg.window)


def palm_field(cfg: PppConfig, model: MarkModel, rng: np.random.Generator):
    """Slivnyak construction of the Palm version at the origin.

    Returns the reduced field (an ordinary marked PPP, origin excluded) and
    the independently drawn mark of the typical point at ``(0, 0)``.  Use
    ``field.with_point((0, 0), typical)`` for the non-reduced version.
    """
    if not cfg.homogeneous:
        raise Unsupported("Palm sampling is only implemented for homogeneous processes")
    typical = Gaussian(model.draw_means(1, rng)[0], model.common_cov)
    field = sample_field(cfg, model, rng)
    return field, typical


def empirical_frechet_mean(field: MarkedField, metric=MetricKind.WASSERSTEIN2,
                           tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> Gaussian:
    """Uniform-weight Frechet mean of a field's marks."""
    if len(field) == 0:
        raise EmptyWindow("the window contains no points")
    common = field.common_cov
    if common is not None:
        return Gaussian(field.means.mean(axis=0), common)
    return frechet_mean(WeightedGaussianSet(field.marks), metric, tol, max_iter)
