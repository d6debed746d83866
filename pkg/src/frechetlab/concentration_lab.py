"""Closed-form concentration bounds and their Monte-Carlo validators.

Bounds covered: Hanson-Wright and Cantelli tails of the squared distance of
a single mark to the global mean (Fisher-Rao and Wasserstein), the MSE of
the windowed empirical mean, Palm deviations, and the conditional and
meta-distributional Cantelli bounds on the windowed mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, EmptyWindow
from .gaussian_manifold import MetricKind, as_spd, mahalanobis_sq, spd_inv_sqrt
from .rng import StreamFactory
from .spatial_field import MarkModel, PppConfig, Window, palm_field, sample_field
from .trials import map_trials

TAIL_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)
DEFAULT_RADII = (5.0, 10.0, 15.0, 20.0)


@dataclass
class BoundReport:
    bound_name: str
    analytic_value: float
    empirical_value: float
    trials: int
    mc_slack: float
    parameter: float = float("nan")
    dominance_holds: bool = field(init=False)

    def __post_init__(self):
        self.dominance_holds = bool(self.empirical_value <= self.analytic_value + self.mc_slack)

    @property
    def slack(self) -> float:
        return self.analytic_value - self.empirical_value

    def row(self):
        return (self.bound_name, self.parameter, self.analytic_value, self.empirical_value,
                self.trials, self.slack, self.dominance_holds)


REPORT_HEADER = ("bound_name", "t_or_size", "analytic", "empirical", "trials", "slack", "dominance")


@dataclass
class RateFit:
    sizes: np.ndarray
    estimates: np.ndarray
    fitted_slope: float
    intercept: float

    @property
    def constant(self) -> float:
        """Fitted multiplicative constant, exp(intercept)."""
        return float(np.exp(self.intercept))

    def to_dict(self):
        return {"sizes": list(self.sizes), "estimates": list(self.estimates),
                "slope": self.fitted_slope, "intercept": self.intercept, "constant": self.constant}


def fit_rate(sizes, estimates) -> RateFit:
    """Least-squares fit of log(estimate) against log(size)."""
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(estimates, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least three (size, estimate) pairs")
    if np.any(np.diff(x) <= 0):
        raise ValueError("sizes must be strictly increasing")
    if np.any(y <= 0):
        raise ValueError("estimates must be positive for a log-log fit")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return RateFit(x, y, float(slope), float(intercept))


def binomial_slack(p_hat: float, trials: int) -> float:
    return 3.0 * np.sqrt(p_hat * (1.0 - p_hat) / trials)


# ---------------------------------------------------------------------------
# closed-form bounds


def whitened_dispersion(sigma, gamma) -> np.ndarray:
    """Sigma^{-1/2} Gamma Sigma^{-1/2}; same spectrum as Sigma^{-1} Gamma."""
    ris = spd_inv_sqrt(as_spd(sigma))
    m = ris @ as_spd(gamma).entries @ ris
    return 0.5 * (m + m.T)


def fr_tail_moments(sigma, gamma):
    """Mean and variance of the squared Fisher-Rao deviation of one mark."""
    lam = whitened_dispersion(sigma, gamma)
    tr2 = float(np.trace(lam @ lam))
    return float(np.trace(lam)), 2.0 * tr2


def fr_tail_bound(sigma, gamma, t: float) -> float:
    if not t > 0:
        raise DomainError("t must be positive")
    _, var = fr_tail_moments(sigma, gamma)
    return hanson_wright_tail(t, var / 2.0)


def hanson_wright_tail(t: float, trace_sq: float) -> float:
    """exp(-t^2 / (8 Tr(A^2))) for a quadratic form with matrix A."""
    return float(np.exp(-(t**2) / (8.0 * trace_sq)))


def cantelli_bound(alpha: float) -> float:
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return 1.0 / (1.0 + alpha**2)


fr_cantelli_bound = cantelli_bound


def fr_cantelli_threshold(sigma, gamma, alpha: float) -> float:
    mean, var = fr_tail_moments(sigma, gamma)
    return mean + alpha * np.sqrt(var)


def w2_tail_moments(gamma):
    g = as_spd(gamma).entries
    return float(np.trace(g)), 2.0 * float(np.trace(g @ g))


def w2_tail_bounds(gamma, t: float, alpha: float):
    """(Hanson-Wright tail at excess t, Cantelli tail at alpha std devs)."""
    if not t > 0:
        raise DomainError("t must be positive")
    _, var = w2_tail_moments(gamma)
    return hanson_wright_tail(t, var / 2.0), cantelli_bound(alpha)


def mse_bound(gamma, intensity: float, window: Window) -> float:
    n = intensity * window.area
    if not n > 0:
        raise DomainError("intensity times area must be positive")
    return float(np.trace(as_spd(gamma).entries)) / n


def conditional_cantelli(gamma, n: float, t: float) -> float:
    """Cantelli bound on P(|mu_hat - mu_bar|^2 >= t) given n points."""
    g = as_spd(gamma).entries
    mean = float(np.trace(g)) / n
    if t < mean:
        raise DomainError(f"threshold {t} is below the conditional mean {mean}")
    var = 2.0 * float(np.trace(g @ g)) / n**2
    return var / ((t - mean) ** 2 + var)


def meta_cantelli(gamma, intensity: float, window: Window, t: float) -> float:
    return conditional_cantelli(gamma, intensity * window.area, t)


def inverse_count_approx(mean_count: float) -> float:
    """Large-count approximation E[1/N] ~ 1/(E[N] - 1) for Poisson N."""
    if not mean_count > 1:
        raise DomainError("approximation needs a mean count above 1")
    return 1.0 / (mean_count - 1.0)


# ---------------------------------------------------------------------------
# Monte-Carlo validators


def _squared_deviation(metric, diffs, sigma):
    metric = MetricKind.parse(metric)
    if metric is MetricKind.FISHER_RAO:
        return mahalanobis_sq(diffs, sigma)
    if metric is MetricKind.WASSERSTEIN2:
        return np.einsum("ij,ij->i", diffs, diffs)
    raise ValueError(f"unsupported metric {metric}")


def tail_moments(metric, model: MarkModel):
    if MetricKind.parse(metric) is MetricKind.FISHER_RAO:
        return fr_tail_moments(model.common_cov, model.mean_dispersion)
    return w2_tail_moments(model.mean_dispersion)


def sample_tail_statistic(metric, model: MarkModel, trials: int, rng) -> np.ndarray:
    """Draws of d^2(p_x, p_bar) for independent marks."""
    mus = model.draw_means(trials, rng)
    return _squared_deviation(metric, mus - model.mean_of_means, model.common_cov)


def validate_tail(metric, model: MarkModel, trials: int, rng, t_grid=None,
                  min_trials: int = 10_000) -> list:
    """Empirical exceedance frequencies against both tail bounds.

    ``t_grid`` holds excesses above the mean; by default it is the mean
    times (0.25, 0.5, 1, 2, 4).  The Cantelli report at each t uses
    ``alpha = t / std``.
    """
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    metric = MetricKind.parse(metric)
    mean, var = tail_moments(metric, model)
    grid = [mean * f for f in TAIL_GRID] if t_grid is None else list(t_grid)
    x = sample_tail_statistic(metric, model, trials, rng)
    tag = "fr" if metric is MetricKind.FISHER_RAO else "w2"
    reports = []
    for t in grid:
        p_hat = float(np.mean(x >= mean + t))
        slack = binomial_slack(p_hat, trials)
        hw = hanson_wright_tail(t, var / 2.0)
        reports.append(BoundReport(f"{tag}_hanson_wright", hw, p_hat, trials, slack, t))
        alpha = t / np.sqrt(var)
        reports.append(BoundReport(f"{tag}_cantelli", cantelli_bound(alpha), p_hat, trials, slack, t))
    return reports


def sample_nonempty_field(cfg: PppConfig, model: MarkModel, rng, max_tries=10_000):
    """Sample a marked field, redrawing empty windows. Returns (field, redraws)."""
    for redraws in range(max_tries):
        f = sample_field(cfg, model, rng)
        if len(f):
            return f, redraws
    raise EmptyWindow(f"window stayed empty after {max_tries} draws")


@dataclass
class WindowStats:
    """Per-window Monte-Carlo results of the windowed empirical mean."""

    radius: float
    mean_count: float
    sq_errors: np.ndarray
    scaled_errors: np.ndarray
    counts: np.ndarray
    empty_resampled: int


def simulate_window_means(model: MarkModel, intensity: float, radius: float, trials: int,
                          streams: StreamFactory, metric=MetricKind.WASSERSTEIN2) -> WindowStats:
    cfg = PppConfig(intensity, Window(radius))

    def one(i):
        rng = streams(radius_key(radius), i)
        f, redraws = sample_nonempty_field(cfg, model, rng)
        return f.means.mean(axis=0), len(f), redraws

    out = map_trials(one, trials)
    mu_hat = np.stack([o[0] for o in out])
    counts = np.array([o[1] for o in out])
    diffs = mu_hat - model.mean_of_means
    return WindowStats(
        radius=radius,
        mean_count=cfg.mean_count,
        sq_errors=_squared_deviation(metric, diffs, model.common_cov),
        scaled_errors=diffs * np.sqrt(counts)[:, None],
        counts=counts,
        empty_resampled=int(sum(o[2] for o in out)),
    )


def radius_key(radius: float) -> int:
    return int(round(radius * 1000))


def _mean_report(name, analytic, samples, parameter):
    n = samples.size
    emp = float(samples.mean())
    slack = 3.0 * float(samples.std(ddof=1)) / np.sqrt(n)
    return BoundReport(name, analytic, emp, n, slack, parameter)


@dataclass
class CltMseResult:
    reports: list
    rate: RateFit
    clt_cov_rel_errors: list
    empty_resampled: dict
    windows: list = field(repr=False, default_factory=list)

    @property
    def dominance_holds(self) -> bool:
        return all(r.dominance_holds for r in self.reports)

    def summary(self):
        return {
            "rate": self.rate.to_dict(),
            "clt_cov_rel_errors": self.clt_cov_rel_errors,
            "empty_resampled": {fmt_radius(k): v for k, v in self.empty_resampled.items()},
        }


def fmt_radius(r):
    return f"{float(r):g}"


def clt_cov_rel_error(scaled_errors, gamma) -> float:
    g = as_spd(gamma).entries
    emp = np.cov(scaled_errors, rowvar=False, bias=False).reshape(g.shape)
    return float(np.linalg.norm(emp - g) / np.linalg.norm(g))


def validate_clt_and_mse(model: MarkModel, intensity: float, trials: int, streams: StreamFactory,
                         radii=DEFAULT_RADII, min_trials: int = 10_000) -> CltMseResult:
    """MSE of the windowed mean against Tr(Gamma)/(lambda |B_R|) over a radius grid."""
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    radii = sorted(radii)
    windows = [simulate_window_means(model, intensity, r, trials, streams.child("clt")) for r in radii]
    reports = [
        _mean_report("mse", mse_bound(model.mean_dispersion, intensity, Window(w.radius)),
                     w.sq_errors, w.mean_count)
        for w in windows
    ]
    rate = fit_rate([w.mean_count for w in windows], [r.empirical_value for r in reports])
    errs = [clt_cov_rel_error(w.scaled_errors, model.mean_dispersion) for w in windows]
    return CltMseResult(reports, rate, errs, {w.radius: w.empty_resampled for w in windows}, windows)


@dataclass
class PalmResult:
    typical_fr: BoundReport
    typical_w2: BoundReport
    mean_rate: RateFit
    var_rate: RateFit
    empty_resampled: dict

    def typical_relative_errors(self):
        return {
            "fisher_rao": abs(self.typical_fr.empirical_value / self.typical_fr.analytic_value - 1),
            "wasserstein2": abs(self.typical_w2.empirical_value / self.typical_w2.analytic_value - 1),
        }

    @property
    def reports(self):
        return [self.typical_fr, self.typical_w2]

    def summary(self):
        return {
            "typical_relative_errors": self.typical_relative_errors(),
            "mean_rate": self.mean_rate.to_dict(),
            "variance_rate": self.var_rate.to_dict(),
            "empty_resampled": {fmt_radius(k): v for k, v in self.empty_resampled.items()},
        }


def sample_typical_marks(cfg: PppConfig, model: MarkModel, draws: int, rng) -> np.ndarray:
    """Means of the typical-point mark over repeated Palm realizations."""
    return np.stack([palm_field(cfg, model, rng)[1].mean for _ in range(draws)])


def validate_palm_deviation(model: MarkModel, intensity: float, trials: int, streams: StreamFactory,
                            radii=DEFAULT_RADII, palm_draws: int = 100_000,
                            metric=MetricKind.WASSERSTEIN2, min_trials: int = 10_000) -> PalmResult:
    """Typical-point deviation and reduced-Palm convergence rates.

    The typical-point part compares the mean of d^2(p_0, p_bar) with
    Tr(Sigma^{-1} Gamma) (Fisher-Rao) and Tr(Gamma) (Wasserstein).  The
    reduced-Palm part fits log-log slopes of the mean and variance of
    d^2(p_hat_R, p_bar) against lambda |B_R|.
    """
    if trials < min_trials:
        raise ValueError(f"need at least {min_trials} trials")
    radii = sorted(radii)
    cfg = PppConfig(intensity, Window(radii[0]))
    mus = sample_typical_marks(cfg, model, palm_draws, streams("palm-typical"))
    diffs = mus - model.mean_of_means
    fr_mean, _ = fr_tail_moments(model.common_cov, model.mean_dispersion)
    w2_mean, _ = w2_tail_moments(model.mean_dispersion)
    typical_fr = _mean_report("palm_typical_fr", fr_mean,
                              _squared_deviation(MetricKind.FISHER_RAO, diffs, model.common_cov), 0.0)
    typical_w2 = _mean_report("palm_typical_w2", w2_mean,
                              _squared_deviation(MetricKind.WASSERSTEIN2, diffs, model.common_cov), 0.0)
    # Slivnyak: the reduced Palm field has the law of the original process
    windows = [simulate_window_means(model, intensity, r, trials, streams.child("palm-reduced"), metric)
               for r in radii]
    sizes = [w.mean_count for w in windows]
    means = [float(w.sq_errors.mean()) for w in windows]
    variances = [float(w.sq_errors.var(ddof=1)) for w in windows]
    return PalmResult(typical_fr, typical_w2, fit_rate(sizes, means), fit_rate(sizes, variances),
                      {w.radius: w.empty_resampled for w in windows})


def mc_inverse_count(mean_count: float, trials: int, rng):
    """Monte-Carlo E[1/N] for N ~ Poisson(mean_count) with zero draws redrawn.

    Returns (estimate, standard error, number of redrawn zeros).
    """
    n = rng.poisson(mean_count, size=trials)
    redrawn = 0
    while np.any(n == 0):
        zero = n == 0
        redrawn += int(zero.sum())
        n[zero] = rng.poisson(mean_count, size=int(zero.sum()))
    inv = 1.0 / n
    return float(inv.mean()), float(inv.std(ddof=1) / np.sqrt(trials)), redrawn


@dataclass
class MetaResult:
    inverse_count_mc: float
    inverse_count_se: float
    inverse_count_approx: float
    zero_redrawn: int
    reports: list

    @property
    def dominance_holds(self):
        return all(r.dominance_holds for r in self.reports)

    def summary(self):
        return {"inverse_count_mc": self.inverse_count_mc, "inverse_count_se": self.inverse_count_se,
                "inverse_count_approx": self.inverse_count_approx, "zero_redrawn": self.zero_redrawn}


def sample_conditional_mean_error(gamma, counts, rng) -> np.ndarray:
    """|mu_hat - mu_bar|^2 given point counts, using mu_hat | N ~ N(mu_bar, Gamma/N)."""
    g = as_spd(gamma)
    counts = np.asarray(counts, dtype=float)
    z = rng.standard_normal((counts.size, g.dim))
    w, v = g.eigh
    x = (z * np.sqrt(w)) @ v.T / np.sqrt(counts)[:, None]
    return np.einsum("ij,ij->i", x, x)


def validate_meta_distribution(gamma, intensity: float, window: Window, trials: int, rng,
                               conditional_counts=(10, 40), t_factors=TAIL_GRID,
                               inverse_count_mean: Optional[float] = None) -> MetaResult:
    """E[1/N] estimate plus conditional and meta Cantelli dominance checks.

    Thresholds are ``mean * (1 + f)`` for each factor f, so every t sits
    above the mean the bound requires.
    """
    g = as_spd(gamma)
    trg = float(np.trace(g.entries))
    m = intensity * window.area if inverse_count_mean is None else inverse_count_mean
    est, se, redrawn = mc_inverse_count(m, trials, rng)
    reports = []
    for n in conditional_counts:
        x = sample_conditional_mean_error(g, np.full(trials, n), rng)
        for f in t_factors:
            t = trg / n * (1 + f)
            p_hat = float(np.mean(x >= t))
            reports.append(BoundReport(f"conditional_cantelli_n{n}", conditional_cantelli(g, n, t),
                                       p_hat, trials, binomial_slack(p_hat, trials), t))
    n = rng.poisson(intensity * window.area, size=trials)
    while np.any(n == 0):
        n[n == 0] = rng.poisson(intensity * window.area, size=int((n == 0).sum()))
    x = sample_conditional_mean_error(g, n, rng)
    for f in t_factors:
        t = trg / (intensity * window.area) * (1 + f)
        p_hat = float(np.mean(x >= t))
        reports.append(BoundReport("meta_cantelli", meta_cantelli(g, intensity, window, t), p_hat,
                                   trials, binomial_slack(p_hat, trials), t))
    return MetaResult(est, se, inverse_count_approx(m), redrawn, reports)
