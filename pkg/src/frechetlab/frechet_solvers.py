"""Frechet barycenters of weighted Gaussian collections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NearSingular, NoConvergence, UnsupportedGeodesic
from .gaussian_manifold import (
    EIG_FLOOR,
    EQUAL_TOL,
    Gaussian,
    MetricKind,
    SpdMatrix,
    as_spd,
    spd_inv_sqrt,
    spd_log,
    spd_sqrt,
    sym_exp,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True)
class WeightedGaussianSet:
    gaussians: tuple
    weights: np.ndarray

    def __init__(self, gaussians, weights=None):
        gaussians = tuple(gaussians)
        if not gaussians:
            raise ValueError("a weighted Gaussian set needs at least one element")
        dims = {g.dim for g in gaussians}
        if len(dims) != 1:
            raise DimensionMismatch(f"Gaussians of mixed dimensions {sorted(dims)}")
        w = np.ones(len(gaussians)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(gaussians),):
            raise ValueError("one weight per Gaussian is required")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "gaussians", gaussians)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, gaussians):
        return cls(gaussians)

    @property
    def dim(self) -> int:
        return self.gaussians[0].dim

    def __len__(self):
        return len(self.gaussians)

    @property
    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def means(self) -> np.ndarray:
        return np.stack([g.mean for g in self.gaussians])

    def covs(self) -> np.ndarray:
        return np.stack([g.cov.entries for g in self.gaussians])


@dataclass(frozen=True)
class BarycenterResult:
    barycenter: Gaussian
    iterations: int
    residual: float
    residual_history: tuple = ()


def mean_component(gset: WeightedGaussianSet) -> np.ndarray:
    return gset.normalized_weights @ gset.means()


def _sym(a):
    return 0.5 * (a + a.T)


def _wasserstein_map(s, covs, w):
    rs = spd_sqrt(s).entries
    ris = spd_inv_sqrt(s)
    acc = np.zeros_like(s)
    for wi, ci in zip(w, covs):
        acc += wi * spd_sqrt(_sym(rs @ ci @ rs)).entries
    return _sym(ris @ _sym(acc @ acc) @ ris)


def wasserstein_fixed_point_residual(cov, gset: WeightedGaussianSet) -> float:
    """Frobenius gap between ``cov`` and its image under the barycenter map."""
    s = as_spd(cov).entries
    return float(np.linalg.norm(_wasserstein_map(s, gset.covs(), gset.normalized_weights) - s))


def wasserstein_barycenter(gset: WeightedGaussianSet, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """2-Wasserstein barycenter via the fixed-point covariance iteration.

    The mean is the weighted average of means.  The covariance iterates
    ``S <- S^{-1/2} (sum_i w_i (S^{1/2} C_i S^{1/2})^{1/2})^2 S^{-1/2}``
    starting from the arithmetic mean of the covariances, and stops once the
    Frobenius size of an update drops to ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mu = mean_component(gset)
    if len(gset) == 1:
        return BarycenterResult(Gaussian(mu, gset.gaussians[0].cov), 0, 0.0)
    w = gset.normalized_weights
    covs = gset.covs()
    s = _sym(np.einsum("i,ijk->jk", w, covs))
    history = []
    for it in range(1, max_iter + 1):
        s_new = _wasserstein_map(s, covs, w)
        residual = float(np.linalg.norm(s_new - s))
        history.append(residual)
        s = s_new
        if residual <= tol:
            return BarycenterResult(Gaussian(mu, SpdMatrix(s)), it, residual, tuple(history))
    raise NoConvergence(
        f"Wasserstein barycenter did not converge in {max_iter} iterations (residual {residual:.3g})",
        residual=residual,
        iterations=max_iter,
    )


def karcher_gradient(s, mats, weights) -> np.ndarray:
    """Riemannian gradient direction sum_i w_i log(S^{-1/2} M_i S^{-1/2})."""
    ris = spd_inv_sqrt(s)
    g = np.zeros((s.dim, s.dim))
    for wi, m in zip(weights, mats):
        g += wi * spd_log(_sym(ris @ m.entries @ ris))
    return g


def karcher_mean_spd(mats, weights=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> SpdMatrix:
    """Affine-invariant Riemannian barycenter of SPD matrices.

    Geodesic gradient steps ``S <- S^{1/2} exp(eta * G) S^{1/2}`` with unit
    step, halved whenever the gradient norm increases.
    """
    mats = [as_spd(m) for m in mats]
    if not mats:
        raise ValueError("need at least one matrix")
    if len({m.dim for m in mats}) != 1:
        raise DimensionMismatch("matrices of mixed dimension")
    w = np.ones(len(mats)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(mats),) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per matrix")
    w = w / w.sum()
    if len(mats) == 1:
        return mats[0]
    s = SpdMatrix(_sym(sum(wi * m.entries for wi, m in zip(w, mats))))
    grad = karcher_gradient(s, mats, w)
    gnorm = np.linalg.norm(grad)
    eta = 1.0
    for _ in range(max_iter):
        if gnorm <= tol:
            return s
        rs = spd_sqrt(s).entries
        cand = SpdMatrix(_sym(rs @ sym_exp(eta * grad).entries @ rs))
        cand_grad = karcher_gradient(cand, mats, w)
        cand_norm = np.linalg.norm(cand_grad)
        if cand_norm > gnorm and eta > 1e-8:
            eta *= 0.5
            continue
        s, grad, gnorm = cand, cand_grad, cand_norm
    if gnorm <= tol:
        return s
    raise NoConvergence(
        f"Karcher mean did not converge in {max_iter} iterations (gradient norm {gnorm:.3g})",
        residual=float(gnorm),
        iterations=max_iter,
    )


def precision_weighted_mean_arrays(means, covs) -> np.ndarray:
    """Precision-weighted mean from (n, d) means and (n, d, d) covariances."""
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    if np.linalg.eigvalsh(covs).min() < EIG_FLOOR:
        raise NearSingular("a covariance is near singular")
    prec = np.linalg.inv(covs)
    total = prec.sum(axis=0)
    if np.linalg.eigvalsh(total).min() < EIG_FLOOR:
        raise NearSingular("aggregate precision is near singular")
    return np.linalg.solve(total, np.einsum("nij,nj->i", prec, means))


def precision_weighted_mean(gset: WeightedGaussianSet) -> np.ndarray:
    """(sum_i C_i^{-1})^{-1} sum_i C_i^{-1} mu_i; the set's own weights are ignored."""
    return precision_weighted_mean_arrays(gset.means(), gset.covs())


def frechet_mean(gset: WeightedGaussianSet, metric, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> Gaussian:
    """Weighted Frechet mean of Gaussians under the chosen metric.

    With a common covariance both metrics return the weighted mean of the
    means with that covariance.  Fisher-Rao is otherwise only available for
    a common mean, where the covariance part is an affine-invariant
    barycenter.
    """
    metric = MetricKind.parse(metric)
    covs = gset.covs()
    common_cov = all(np.linalg.norm(c - covs[0]) <= EQUAL_TOL for c in covs[1:])
    if common_cov:
        return Gaussian(mean_component(gset), gset.gaussians[0].cov)
    if metric is MetricKind.WASSERSTEIN2:
        return wasserstein_barycenter(gset, tol, max_iter).barycenter
    if metric is MetricKind.FISHER_RAO:
        means = gset.means()
        if all(np.linalg.norm(m - means[0]) <= EQUAL_TOL for m in means[1:]):
            cov = karcher_mean_spd([g.cov for g in gset.gaussians], gset.weights, tol, max_iter)
            return Gaussian(mean_component(gset), cov)
        raise UnsupportedGeodesic("Fisher-Rao barycenter needs a common mean or a common covariance")
    raise UnsupportedGeodesic(f"no Gaussian barycenter for metric {metric.value}")
