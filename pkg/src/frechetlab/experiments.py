"""Named studies: sensor-network aggregation, bound validation, compression, bandits.

Each ``study_*`` function runs one study, writes its CSV/JSON outputs into
a directory and returns a summary dict with an ``ok`` flag.  ``ok`` is
False when any asserted bound report fails its dominance check.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bandit_lab import ClassicalUcb, FrechetUcb, FrechetUcbConfig, make_reference_env, reward_tape, run_policy
from .concentration_lab import (
    DEFAULT_RADII,
    REPORT_HEADER,
    validate_clt_and_mse,
    validate_meta_distribution,
    validate_palm_deviation,
    validate_tail,
)
from .frechet_solvers import precision_weighted_mean_arrays
from .gaussian_manifold import MetricKind, SpdMatrix
from .reporting import write_csv, write_json
from .rng import StreamFactory
from .semantic_compression import (
    INDEPENDENT,
    THINNING,
    CompressionSpec,
    min_sparse_intensity,
    run_compression_protocol,
)
from .spatial_field import MarkModel, PppConfig, Window, sample_ppp
from .trials import map_trials


@dataclass
class WsnConfig:
    intensity: float = 0.1
    radii: tuple = DEFAULT_RADII
    reliable_fraction: float = 0.7
    reliable_cov: SpdMatrix = field(default_factory=lambda: SpdMatrix(0.1 * np.eye(2)))
    unreliable_cov: SpdMatrix = field(default_factory=lambda: SpdMatrix(10.0 * np.eye(2)))
    unreliable_bias: np.ndarray = field(default_factory=lambda: np.array([5.0, 5.0]))
    trials: int = 500
    truth: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.radii = tuple(float(r) for r in self.radii)
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must be strictly increasing")
        if not 0 <= self.reliable_fraction <= 1:
            raise ValueError("reliable_fraction must lie in [0, 1]")
        self.reliable_cov = SpdMatrix(self.reliable_cov) if not isinstance(self.reliable_cov, SpdMatrix) else self.reliable_cov
        self.unreliable_cov = SpdMatrix(self.unreliable_cov) if not isinstance(self.unreliable_cov, SpdMatrix) else self.unreliable_cov
        self.unreliable_bias = np.asarray(self.unreliable_bias, dtype=float)
        self.truth = np.asarray(self.truth, dtype=float)


@dataclass
class MseRow:
    radius: float
    euclidean_mse: float
    frechet_mse: float
    trials: int
    empty_resampled: int
    euclidean_se: float
    frechet_se: float
    win_rate: float


@dataclass
class MseTable:
    rows: list

    def csv_rows(self):
        for r in self.rows:
            yield r.radius, r.euclidean_mse, r.frechet_mse, r.trials, r.empty_resampled

    def summary(self):
        return [vars(r) for r in self.rows]


WSN_HEADER = ("R", "euclidean_mse", "frechet_mse", "trials", "empty_resampled")


def _wsn_trial(cfg: WsnConfig, window: Window, rng):
    """One deployment: returns (euclid sq error, frechet sq error, redraws)."""
    ppp = PppConfig(cfg.intensity, window)
    redraws = 0
    pts = sample_ppp(ppp, rng)
    while len(pts) == 0:
        redraws += 1
        pts = sample_ppp(ppp, rng)
    n = len(pts)
    reliable = rng.uniform(size=n) < cfg.reliable_fraction
    d = cfg.truth.shape[0]
    z = rng.standard_normal((n, d))
    r_root = np.linalg.cholesky(cfg.reliable_cov.entries)
    u_root = np.linalg.cholesky(cfg.unreliable_cov.entries)
    means = np.where(reliable[:, None], z @ r_root.T, cfg.unreliable_bias + z @ u_root.T)
    covs = np.where(reliable[:, None, None], cfg.reliable_cov.entries, cfg.unreliable_cov.entries)
    euclid = means.mean(axis=0)
    frechet = precision_weighted_mean_arrays(means, covs)
    return (float(np.sum((euclid - cfg.truth) ** 2)), float(np.sum((frechet - cfg.truth) ** 2)), redraws)


def run_wsn_experiment(cfg: WsnConfig, streams: StreamFactory) -> MseTable:
    """Euclidean vs precision-weighted aggregation of heteroscedastic sensor beliefs."""
    rows = []
    for radius in cfg.radii:
        window = Window(radius)
        sub = streams.child("wsn", int(round(radius * 1000)))
        out = map_trials(lambda i: _wsn_trial(cfg, window, sub(i)), cfg.trials)
        e = np.array([o[0] for o in out])
        f = np.array([o[1] for o in out])
        rows.append(MseRow(
            radius=radius,
            euclidean_mse=float(e.mean()),
            frechet_mse=float(f.mean()),
            trials=cfg.trials,
            empty_resampled=int(sum(o[2] for o in out)),
            euclidean_se=float(e.std(ddof=1) / np.sqrt(cfg.trials)),
            frechet_se=float(f.std(ddof=1) / np.sqrt(cfg.trials)),
            win_rate=float(np.mean(f <= e)),
        ))
    return MseTable(rows)


def required_region_size(gamma_trace: float, intensity: float, eps: float) -> float:
    """Smallest window area with Tr(Gamma)/(lambda |B|) <= eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not (gamma_trace > 0 and intensity > 0):
        raise ValueError("trace and intensity must be positive")
    return gamma_trace / (intensity * eps)


# ---------------------------------------------------------------------------
# studies


def _iso(dim, value):
    return SpdMatrix(value * np.eye(dim))


PALM_PAIRS = (
    (np.eye(2), np.eye(2)),
    (np.diag([1.0, 4.0]), np.diag([0.5, 2.0])),
)
TAIL_PAIRS = (
    (np.eye(2), np.eye(2)),
    (np.eye(2), np.diag([1.0, 4.0])),
    (np.diag([1.0, 4.0]), np.diag([0.5, 2.0])),
    (0.1 * np.eye(2), 0.1 * np.eye(2)),
)
SPARSE_FRACTIONS = (0.05, 0.1, 0.2, 0.4)

DEFAULT_TRIALS = {
    "clt": 10_000,
    "palm": 10_000,
    "palm_draws": 100_000,
    "bounds": 100_000,
    "semantic": 1_000,
    "wsn": 500,
    "bandit": 100,
}


def _model(sigma, gamma):
    return MarkModel(np.zeros(len(sigma)), SpdMatrix(gamma), SpdMatrix(sigma))


def study_clt(out: Path, streams: StreamFactory, trials=None, intensity=0.1, radii=DEFAULT_RADII,
              gamma=0.1, sigma=0.1):
    model = MarkModel(np.zeros(2), _iso(2, gamma), _iso(2, sigma))
    res = validate_clt_and_mse(model, intensity, trials or DEFAULT_TRIALS["clt"], streams, radii, min_trials=1)
    write_csv(out / "clt_mse.csv", REPORT_HEADER, [r.row() for r in res.reports])
    summary = res.summary()
    write_json(out / "clt_summary.json", summary)
    ok = res.dominance_holds and -1.15 <= res.rate.fitted_slope <= -0.85 and max(res.clt_cov_rel_errors) <= 0.10
    return {"ok": bool(ok), "dominance": res.dominance_holds, **summary}, res


def study_palm(out: Path, streams: StreamFactory, trials=None, palm_draws=None, intensity=0.1,
               radii=DEFAULT_RADII, pairs=PALM_PAIRS):
    results, rows, summaries = [], [], []
    for k, (sigma, gamma) in enumerate(pairs):
        res = validate_palm_deviation(_model(sigma, gamma), intensity, trials or DEFAULT_TRIALS["palm"],
                                      streams.child("pair", k), radii,
                                      palm_draws or DEFAULT_TRIALS["palm_draws"], min_trials=1)
        results.append(res)
        rows += [(f"pair{k}_{r.bound_name}",) + r.row()[1:] for r in res.reports]
        summaries.append({"sigma": np.asarray(sigma), "gamma": np.asarray(gamma), **res.summary()})
    write_csv(out / "palm.csv", REPORT_HEADER, rows)
    write_json(out / "palm_summary.json", {"pairs": summaries})
    ok = all(
        max(r.typical_relative_errors().values()) <= 0.03
        and -1.15 <= r.mean_rate.fitted_slope <= -0.85
        and -2.3 <= r.var_rate.fitted_slope <= -1.7
        for r in results
    )
    return {"ok": bool(ok), "pairs": summaries}, results


def study_bounds(out: Path, streams: StreamFactory, trials=None, pairs=TAIL_PAIRS):
    trials = trials or DEFAULT_TRIALS["bounds"]
    rows, reports = [], []
    for k, (sigma, gamma) in enumerate(pairs):
        for metric in (MetricKind.FISHER_RAO, MetricKind.WASSERSTEIN2):
            reps = validate_tail(metric, _model(sigma, gamma), trials, streams("tail", k, metric.value),
                                 min_trials=1)
            reports += reps
            rows += [(f"pair{k}_{r.bound_name}",) + r.row()[1:] for r in reps]
    meta = validate_meta_distribution(np.eye(2), 0.1, Window(10.0), trials, streams("meta"),
                                      inverse_count_mean=41.0)
    reports += meta.reports
    rows += [r.row() for r in meta.reports]
    write_csv(out / "bounds.csv", REPORT_HEADER, rows)
    summary = {"pairs": [{"sigma": np.asarray(s), "gamma": np.asarray(g)} for s, g in pairs],
               "meta": meta.summary()}
    write_json(out / "bounds_summary.json", summary)
    ok = all(r.dominance_holds for r in reports)
    return {"ok": bool(ok), **summary}, (reports, meta)


def study_semantic(out: Path, streams: StreamFactory, trials=None, intensity=1.0, radius=10.0, eps=0.05,
                   fractions=SPARSE_FRACTIONS, metric=MetricKind.WASSERSTEIN2):
    trials = trials or DEFAULT_TRIALS["semantic"]
    model = _model(np.eye(2), np.eye(2))
    window = Window(radius)
    lam_min = min_sparse_intensity(model.mean_dispersion, intensity, window, eps)
    grid = sorted({intensity * f for f in fractions} | {lam_min})
    results, summaries = [], []
    for variant in (INDEPENDENT, THINNING):
        for lam_s in grid:
            spec = CompressionSpec(intensity, lam_s, window, eps, metric)
            res = run_compression_protocol(model, spec, trials, streams, variant, min_trials=1)
            tag = f"{variant}_lambda{lam_s:.6g}"
            write_csv(out / f"semantic_{tag}.csv", ("trial", "n_dense", "n_sparse", "distortion"), res.rows())
            results.append(res)
            summaries.append(res.summary())
    write_json(out / "semantic_summary.json", {"min_sparse_intensity": lam_min, "runs": summaries})
    # the bound is asserted only for independently drawn sparse fields
    ok = all(r.report.dominance_holds for r in results if r.variant == INDEPENDENT)
    return {"ok": bool(ok), "min_sparse_intensity": lam_min, "runs": summaries}, results


def study_wsn(out: Path, streams: StreamFactory, trials=None, **overrides):
    cfg = WsnConfig(trials=trials or DEFAULT_TRIALS["wsn"], **overrides)
    table = run_wsn_experiment(cfg, streams)
    write_csv(out / "wsn_mse.csv", WSN_HEADER, table.csv_rows())
    write_json(out / "wsn_summary.json", {"rows": table.summary()})
    return {"ok": True, "rows": table.summary()}, table


def study_bandit(out: Path, streams: StreamFactory, trials=None, horizon=3000, eps=None, beta=1.0,
                 metric=MetricKind.WASSERSTEIN2, seed=None):
    trials = trials or DEFAULT_TRIALS["bandit"]
    env = make_reference_env(horizon)
    tape = reward_tape(env, trials, streams)
    policies = [ClassicalUcb(), FrechetUcb(FrechetUcbConfig(eps=eps, beta=beta, metric=metric))]
    traces, entries = {}, []
    env_desc = {"arms": [[a.mean, a.variance] for a in env.arms], "horizon": env.horizon}
    for pol in policies:
        trace = run_policy(env, pol, trials, streams, tape=tape)
        traces[pol.name] = trace
        write_csv(out / f"bandit_{pol.name}.csv", ("round", "mean_cum_regret", "ci95"), trace.rows())
        counts = trace.pull_counts(env.n_arms).mean(axis=0)
        manifest = {"env": env_desc, "policy": pol.name, "params": pol.params(), "seed": seed, "trials": trials}
        write_json(out / f"bandit_{pol.name}.json", manifest)
        final, ci = trace.final()
        entries.append({"policy": pol.name, "final_regret": final, "ci95": ci, "mean_pulls": counts,
                        "high_variance_pulls_after_500": float(trace.pulls_after(500, (0, 1, 2)).mean())})
    return {"ok": True, "policies": entries}, traces


STUDIES = {
    "clt": study_clt,
    "palm": study_palm,
    "bounds": study_bounds,
    "semantic": study_semantic,
    "wsn": study_wsn,
    "bandit": study_bandit,
}

STUDY_HELP = {
    "wsn": "sensor-network aggregation, Euclidean vs precision-weighted Frechet mean",
    "semantic": "dense/sparse semantic distortion and minimum sparse intensity",
    "bandit": "Frechet-UCB vs classical UCB regret on the 10-arm environment",
    "bounds": "Hanson-Wright/Cantelli tails and meta-distribution Cantelli bounds",
    "palm": "typical-point Palm deviation and reduced-Palm rates",
    "clt": "windowed empirical mean: MSE bound, CLT covariance, 1/|B| rate",
    "all": "every study above, in one output directory",
}


def run_study(name: str, out: Path, seed: int, trials: Optional[int] = None, params: Optional[dict] = None):
    fn = STUDIES[name]
    out.mkdir(parents=True, exist_ok=True)
    streams = StreamFactory(seed, name)
    kwargs = dict(params or {})
    if name == "bandit":
        kwargs.setdefault("seed", seed)
    t0 = time.perf_counter()
    summary, _ = fn(out, streams, trials, **kwargs)
    return {"study": name, "ok": summary["ok"], "wall_clock_s": time.perf_counter() - t0, "summary": summary}


def _manifest_studies(entries):
    """Expand study entries into the manifest list (one line per bandit policy)."""
    listed = []
    for e in entries:
        if e["study"] == "bandit":
            for p in e["summary"]["policies"]:
                listed.append({"study": f"bandit_{p['policy']}", "ok": e["ok"], "wall_clock_s": e["wall_clock_s"]})
        else:
            listed.append({"study": e["study"], "ok": e["ok"], "wall_clock_s": e["wall_clock_s"]})
    return listed


def write_manifest(out: Path, seed: int, entries, command=None):
    manifest = {
        "seed": seed,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "versions": {"frechetlab": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "command": command,
        "studies": _manifest_studies(entries),
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def reproduce_all(seed: int, out_root, trials: Optional[int] = None, params: Optional[dict] = None,
                  run_dir: Optional[Path] = None):
    """Run every study under one timestamped directory and write the manifest."""
    out = Path(run_dir) if run_dir else Path(out_root) / f"all-seed{seed}-{time.strftime('%Y%m%d-%H%M%S')}"
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in STUDIES:
        try:
            entries.append(run_study(name, out / name, seed, trials, (params or {}).get(name)))
        except Exception as exc:
            raise RuntimeError(f"study {name!r} failed: {exc}") from exc
    manifest = write_manifest(out, seed, entries)
    return out, manifest, entries
