"""Gaussian value type, SPD matrix calculus and closed-form distances.

All matrix functions go through a symmetric eigendecomposition.  Eigenvalues
are clamped at ``EIG_FLOOR`` before square roots so that round-off on a
nominally SPD input cannot produce NaNs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidMatrix,
    NearSingular,
    NumericalBreakdown,
    Unsupported,
    UnsupportedGeodesic,
)

EIG_FLOOR = 1e-12
SYM_TOL = 1e-12
EQUAL_TOL = 1e-10
TRACE_CLAMP = 1e-10


class MetricKind(str, enum.Enum):
    FISHER_RAO = "fisher_rao"
    WASSERSTEIN2 = "wasserstein2"
    AFFINE_INVARIANT = "affine_invariant"

    @classmethod
    def parse(cls, value) -> "MetricKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"fr": "fisher_rao", "w2": "wasserstein2", "wasserstein": "wasserstein2",
                   "ai": "affine_invariant"}
        return cls(aliases.get(key, key))


def _symmetrize(a):
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric positive-definite matrix, validated at construction."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidMatrix(f"expected a nonempty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidMatrix("matrix has non-finite entries")
        tol = SYM_TOL * np.maximum(1.0, np.abs(a))
        if np.any(np.abs(a - a.T) > tol):
            raise InvalidMatrix("matrix is not symmetric")
        a = _symmetrize(a)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        if self.eigh[0][0] <= 0.0:
            raise InvalidMatrix(f"matrix is not positive definite (min eigenvalue {self.eigh[0][0]:.3g})")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigh(self):
        w, v = np.linalg.eigh(self.entries)
        return w, v

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, SpdMatrix):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"SpdMatrix({self.entries.tolist()!r})"

    @classmethod
    def identity(cls, dim: int) -> "SpdMatrix":
        return cls(np.eye(dim))

    @classmethod
    def diag(cls, values) -> "SpdMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))


def as_spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal distribution N(mean, cov)."""

    mean: np.ndarray
    cov: SpdMatrix

    def __post_init__(self):
        mu = np.atleast_1d(np.array(self.mean, dtype=float))
        if mu.ndim != 1:
            raise DimensionMismatch("mean must be a vector")
        if not np.all(np.isfinite(mu)):
            raise InvalidMatrix("mean has non-finite entries")
        cov = as_spd(self.cov)
        if cov.dim != mu.shape[0]:
            raise DimensionMismatch(f"mean has length {mu.shape[0]} but covariance is {cov.dim}x{cov.dim}")
        mu.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Gaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and self.cov == other.cov

    def __hash__(self):
        return hash((self.mean.tobytes(), hash(self.cov)))

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()!r}, cov={self.cov.entries.tolist()!r})"


def _eig_apply(m: SpdMatrix, fn, floor=EIG_FLOOR):
    w, v = m.eigh
    w = np.maximum(w, floor)
    return _symmetrize((v * fn(w)) @ v.T)


def spd_sqrt(m) -> SpdMatrix:
    return SpdMatrix(_eig_apply(as_spd(m), np.sqrt))


def spd_inv_sqrt(m) -> np.ndarray:
    m = as_spd(m)
    if m.eigh[0][0] < EIG_FLOOR:
        raise NearSingular("cannot invert a near-singular matrix")
    return _eig_apply(m, lambda w: 1.0 / np.sqrt(w))


def spd_inv(m) -> np.ndarray:
    m = as_spd(m)
    if m.eigh[0][0] < EIG_FLOOR:
        raise NearSingular("cannot invert a near-singular matrix")
    return _eig_apply(m, lambda w: 1.0 / w)


def spd_log(m) -> np.ndarray:
    """Principal matrix logarithm of an SPD matrix (a symmetric matrix)."""
    m = as_spd(m)
    if m.eigh[0][0] < EIG_FLOOR:
        raise NearSingular(f"eigenvalue {m.eigh[0][0]:.3g} below floor {EIG_FLOOR}")
    return _eig_apply(m, np.log)


def sym_exp(s) -> SpdMatrix:
    """Matrix exponential of a symmetric matrix."""
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise InvalidMatrix("matrix has non-finite entries")
    w, v = np.linalg.eigh(_symmetrize(s))
    return SpdMatrix(_symmetrize((v * np.exp(w)) @ v.T))


def _whitened_eigenvalues(a: SpdMatrix, b: SpdMatrix) -> np.ndarray:
    """Eigenvalues of a^{-1/2} b a^{-1/2}."""
    ais = spd_inv_sqrt(a)
    return np.linalg.eigvalsh(_symmetrize(ais @ b.entries @ ais))


def _check_same_dim(p, q):
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimension mismatch: {p.dim} vs {q.dim}")


def fisher_rao_distance_sq(p: Gaussian, q: Gaussian) -> float:
    """Squared Fisher-Rao distance for the two closed-form special cases.

    Equal covariances give the Mahalanobis form, equal means give half the
    sum of squared log-eigenvalues of the whitened covariance.  Anything
    else raises :class:`UnsupportedGeodesic`.
    """
    _check_same_dim(p, q)
    same_cov = np.linalg.norm(p.cov.entries - q.cov.entries) <= EQUAL_TOL
    same_mean = np.linalg.norm(p.mean - q.mean) <= EQUAL_TOL
    if same_cov:
        diff = p.mean - q.mean
        cov = SpdMatrix(0.5 * (p.cov.entries + q.cov.entries))
        return float(max(diff @ spd_inv(cov) @ diff, 0.0))
    if same_mean:
        lam = _whitened_eigenvalues(p.cov, q.cov)
        if lam.min() < EIG_FLOOR:
            raise NearSingular("whitened covariance is near singular")
        return float(0.5 * np.sum(np.log(lam) ** 2))
    raise UnsupportedGeodesic(
        "Fisher-Rao distance has no closed form when both mean and covariance differ"
    )


def fisher_rao_univariate_sq(mu1, var1, mu2, var2):
    """Exact squared Fisher-Rao geodesic distance between 1-D normals.

    Uses the hyperbolic half-plane form; broadcasts over array inputs.
    """
    s1 = np.sqrt(var1)
    s2 = np.sqrt(var2)
    arg = 1.0 + (0.5 * (np.asarray(mu1) - mu2) ** 2 + (s1 - s2) ** 2) / (2.0 * s1 * s2)
    return 2.0 * np.arccosh(np.maximum(arg, 1.0)) ** 2


def _lex_key(g: Gaussian):
    return tuple(g.mean.tolist()) + tuple(g.cov.entries.ravel().tolist())


def wasserstein2_distance_sq(p: Gaussian, q: Gaussian) -> float:
    _check_same_dim(p, q)
    if _lex_key(q) > _lex_key(p):
        p, q = q, p
    # q is now the lexicographically smaller argument; it sits inside the root
    rq = spd_sqrt(q.cov).entries
    cross = spd_sqrt(_symmetrize(rq @ p.cov.entries @ rq)).entries
    trace_term = float(np.trace(p.cov.entries) + np.trace(q.cov.entries) - 2.0 * np.trace(cross))
    if trace_term < -TRACE_CLAMP:
        raise NumericalBreakdown(f"negative covariance trace residual {trace_term:.3g}")
    diff = p.mean - q.mean
    return float(diff @ diff) + max(trace_term, 0.0)


def affine_invariant_distance(a, b) -> float:
    a, b = as_spd(a), as_spd(b)
    _check_same_dim(a, b)
    lam = _whitened_eigenvalues(a, b)
    if lam.min() < EIG_FLOOR:
        raise NearSingular("whitened matrix is near singular")
    return float(np.sqrt(np.sum(np.log(lam) ** 2)))


def gaussian_distance_sq(metric, p: Gaussian, q: Gaussian) -> float:
    metric = MetricKind.parse(metric)
    if metric is MetricKind.FISHER_RAO:
        return fisher_rao_distance_sq(p, q)
    if metric is MetricKind.WASSERSTEIN2:
        return wasserstein2_distance_sq(p, q)
    raise Unsupported("the affine-invariant metric acts on SPD matrices, not Gaussians")


def mahalanobis_sq(diffs, cov) -> np.ndarray:
    """Row-wise (x^T cov^{-1} x) for an (n, d) array of differences."""
    diffs = np.atleast_2d(np.asarray(diffs, dtype=float))
    prec = spd_inv(cov)
    return np.einsum("ij,jk,ik->i", diffs, prec, diffs)
