"""Noise-free Gaussian process posteriors.

Scalar layers use the usual interpolating posterior; vector-valued layers
with the separable kernel k(x, x') I_n share one Cholesky factor across the
n outputs.  A dense block assembly of the same posterior is kept as a
reference path for small problems.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .kernels import KernelSpec, as_points, gram_matrix, kernel_matrix

__all__ = [
    "Dataset",
    "PosteriorModel",
    "ConditioningError",
    "ConsistencyError",
    "ScaleError",
    "NumericalWarning",
    "fit",
    "posterior_mean",
    "posterior_std",
    "add_observation",
    "confidence_interval",
    "multi_posterior",
    "negative_variance_events",
    "DEFAULT_JITTER",
    "MAX_JITTER",
]

DEFAULT_JITTER = 1e-10
MAX_JITTER = 1e-6
DUPLICATE_TOL = 1e-12
INCREMENTAL_THRESHOLD = 64
FULL_BLOCK_LIMIT = 64

_negative_variance_events = 0


class ConditioningError(np.linalg.LinAlgError):
    """Cholesky factorization failed for every jitter level tried."""

    def __init__(self, ladder):
        self.ladder = list(ladder)
        tried = ", ".join(f"{j:.0e}" for j in self.ladder)
        super().__init__(f"Gram matrix not factorizable with jitter ladder [{tried}]")


class ConsistencyError(ValueError):
    """A repeated input point was observed with a different value."""


class ScaleError(ValueError):
    """The dense reference path was asked for a system that is too large."""


class NumericalWarning(RuntimeWarning):
    pass


def negative_variance_events() -> int:
    """Number of posterior variances below -1e-8 seen (and clamped) so far."""
    return _negative_variance_events


def _values_equal(a, b) -> bool:
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return bool(np.all(np.abs(np.asarray(a) - np.asarray(b)) <= 1e-9 * scale))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Input points ``(t, d)`` and scalar ``(t,)`` or vector ``(t, n)`` values."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        V = np.asarray(self.values, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        if P.shape[0] != V.shape[0]:
            raise ValueError(f"{P.shape[0]} points but {V.shape[0]} values")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "values", V)

    @classmethod
    def empty(cls, dim: int, n_outputs: int | None = None) -> "Dataset":
        vshape = (0,) if n_outputs is None else (0, n_outputs)
        return cls(np.zeros((0, dim)), np.zeros(vshape))

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def deduplicated(self) -> "Dataset":
        """Drop repeated points, checking that repeats carry equal values."""
        P, V = self.points, self.values
        t = P.shape[0]
        if t < 2:
            return self
        keep = np.ones(t, dtype=bool)
        for i in range(1, t):
            close = np.max(np.abs(P[:i] - P[i]), axis=1) <= DUPLICATE_TOL
            if close.any():
                j = int(np.argmax(close))
                if not _values_equal(V[i], V[j]):
                    raise ConsistencyError(
                        f"point {P[i].tolist()} observed with values {V[j]!r} and {V[i]!r}"
                    )
                keep[i] = False
        if keep.all():
            return self
        return Dataset(P[keep], V[keep])


def _factorize(K: np.ndarray, jitter: float):
    """Cholesky of K + jitter*I, escalating jitter x10 up to MAX_JITTER."""
    ladder = []
    j = jitter
    n = K.shape[0]
    while True:
        ladder.append(j)
        try:
            L = linalg.cholesky(K + j * np.eye(n), lower=True, check_finite=False)
            if np.all(np.diag(L) > 0):
                return L, j
        except linalg.LinAlgError:
            pass
        if j >= MAX_JITTER:
            raise ConditioningError(ladder)
        j = DEFAULT_JITTER if j == 0.0 else min(j * 10.0, MAX_JITTER)


@dataclass(frozen=True, eq=False)
class PosteriorModel:
    """A fitted noise-free GP; immutable, query with :meth:`mean` / :meth:`std`."""

    spec: KernelSpec
    data: Dataset
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float
    base_jitter: float = DEFAULT_JITTER

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def t(self) -> int:
        return len(self.data)

    @property
    def points(self) -> np.ndarray:
        return self.data.points

    @property
    def n_outputs(self) -> int | None:
        v = self.data.values
        return None if v.ndim == 1 else v.shape[1]

    @property
    def min_eig_estimate(self) -> float:
        """Smallest squared Cholesky pivot, an upper bound on lambda_min(K + jitter I)."""
        if self.t == 0:
            return 1.0
        return float(np.min(np.diag(self.chol)) ** 2)

    def _cross(self, Z):
        return kernel_matrix(self.spec, Z, self.data.points)

    def mean(self, Z) -> np.ndarray:
        Z = as_points(Z, self.dim)
        if self.t == 0:
            shape = (Z.shape[0],) if self.n_outputs is None else (Z.shape[0], self.n_outputs)
            return np.zeros(shape)
        return self._cross(Z) @ self.alpha

    def var(self, Z) -> np.ndarray:
        Z = as_points(Z, self.dim)
        if self.t == 0:
            return np.ones(Z.shape[0])
        return self._var_from_cross(self._cross(Z))

    def _var_from_cross(self, Kx):
        global _negative_variance_events
        V = linalg.solve_triangular(self.chol, Kx.T, lower=True, check_finite=False)
        var = 1.0 - np.einsum("ij,ij->j", V, V)
        # at a training point x_s the same quantity equals lam (1 - lam [(K + lam I)^-1]_ss),
        # which avoids the cancellation in 1 - |v|^2 that leaves sigma^2 a few ulps above lam
        rows, cols = np.nonzero(Kx == 1.0)
        if rows.size:
            lam = self.jitter
            var[rows] = lam * (1.0 - lam * self._inverse_diag[cols])
        bad = int(np.count_nonzero(var < -1e-8))
        if bad:
            _negative_variance_events += bad
            warnings.warn(f"{bad} posterior variances below -1e-8 clamped to 0", NumericalWarning)
        return np.clip(var, 0.0, 1.0)

    @cached_property
    def _inverse_diag(self) -> np.ndarray:
        Linv = linalg.solve_triangular(self.chol, np.eye(self.t), lower=True, check_finite=False)
        return np.einsum("ij,ij->j", Linv, Linv)

    def std(self, Z) -> np.ndarray:
        return np.sqrt(self.var(Z))

    def mean_std(self, Z):
        """Posterior mean and standard deviation sharing one cross-kernel evaluation."""
        Z = as_points(Z, self.dim)
        if self.t == 0:
            return self.mean(Z), np.ones(Z.shape[0])
        Kx = self._cross(Z)
        return Kx @ self.alpha, np.sqrt(self._var_from_cross(Kx))

    def coordinate(self, j: int) -> "PosteriorModel":
        """Scalar model for output ``j`` of a vector-valued model (shares the factor)."""
        if self.n_outputs is None:
            raise ValueError("model is already scalar")
        data = Dataset(self.data.points, self.data.values[:, j])
        return PosteriorModel(self.spec, data, self.chol, self.alpha[:, j], self.jitter, self.base_jitter)


def fit(spec: KernelSpec, data: Dataset, jitter: float = DEFAULT_JITTER) -> PosteriorModel:
    """Condition the zero-mean unit-variance prior on noise-free data."""
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    data = data.deduplicated()
    if len(data) == 0:
        return PosteriorModel(spec, data, np.zeros((0, 0)), np.zeros(data.values.shape), jitter, jitter)
    K = gram_matrix(spec, data.points)
    L, used = _factorize(K, jitter)
    alpha = linalg.cho_solve((L, True), data.values, check_finite=False)
    return PosteriorModel(spec, data, L, alpha, used, jitter)


def add_observation(model: PosteriorModel, x, y) -> PosteriorModel:
    """Return a new model with (x, y) appended.

    Small models are refit from scratch; larger ones extend the Cholesky
    factor by one row, falling back to a full refit if the new pivot is not
    safely positive.
    """
    x = as_points(x, model.dim)
    if x.shape[0] != 1:
        raise ValueError("add_observation takes a single point")
    y = np.asarray(y, dtype=float)
    if model.n_outputs is None:
        y = y.reshape(())
    else:
        y = y.reshape(model.n_outputs)
    if model.t:
        close = np.max(np.abs(model.points - x[0]), axis=1) <= DUPLICATE_TOL
        if close.any():
            j = int(np.argmax(close))
            if not _values_equal(model.data.values[j], y):
                raise ConsistencyError(
                    f"point {x[0].tolist()} observed with values {model.data.values[j]!r} and {y!r}"
                )
            return model
    points = np.vstack([model.points, x])
    values = np.concatenate([model.data.values, y[None]], axis=0)
    data = Dataset(points, values)
    if model.t + 1 < INCREMENTAL_THRESHOLD:
        return fit(model.spec, data, model.base_jitter)
    k = kernel_matrix(model.spec, model.points, x)[:, 0]
    row = linalg.solve_triangular(model.chol, k, lower=True, check_finite=False)
    pivot2 = 1.0 + model.jitter - float(row @ row)
    if pivot2 <= 0.5 * model.jitter or pivot2 <= 0.0:
        return fit(model.spec, data, model.base_jitter)
    t = model.t
    L = np.zeros((t + 1, t + 1))
    L[:t, :t] = model.chol
    L[t, :t] = row
    L[t, t] = np.sqrt(pivot2)
    alpha = linalg.cho_solve((L, True), values, check_finite=False)
    return PosteriorModel(model.spec, data, L, alpha, model.jitter, model.base_jitter)


def _query(model: PosteriorModel, x):
    a = np.asarray(x, dtype=float)
    single = a.ndim == 0 or (a.ndim == 1 and (model.dim > 1 or a.shape[0] == 1))
    return as_points(a.reshape(1, -1) if single else a, model.dim), single


def posterior_mean(model: PosteriorModel, x):
    """mu_t(x); a float (or length-n vector) for one point, an array for a batch."""
    Z, single = _query(model, x)
    m = model.mean(Z)
    if single:
        return float(m[0]) if m.ndim == 1 else m[0]
    return m


def posterior_std(model: PosteriorModel, x):
    """sigma_t(x), clamped to [0, 1]."""
    Z, single = _query(model, x)
    s = model.std(Z)
    return float(s[0]) if single else s


def confidence_interval(model: PosteriorModel, x, B: float):
    """(mu - B sigma, mu + B sigma), valid for every f with RKHS norm <= B."""
    if not B > 0:
        raise ValueError("B must be positive")
    Z, single = _query(model, x)
    m, s = model.mean_std(Z)
    lo, hi = m - B * s, m + B * s
    if single:
        return float(lo[0]), float(hi[0])
    return lo, hi


def _full_block(spec: KernelSpec, data: Dataset, x: np.ndarray, jitter: float):
    n = data.values.shape[1]
    t = len(data)
    if n * t > FULL_BLOCK_LIMIT:
        raise ScaleError(f"full_block path limited to n*t <= {FULL_BLOCK_LIMIT}, got {n * t}")
    if t == 0:
        return np.zeros(n), np.eye(n)
    eye = np.eye(n)
    G = np.zeros((n * t, n * t))
    for i in range(t):
        for j in range(t):
            kij = 1.0 if i == j else float(kernel_matrix(spec, data.points[i : i + 1], data.points[j : j + 1])[0, 0])
            G[i * n : (i + 1) * n, j * n : (j + 1) * n] = kij * eye
    Gx = np.zeros((n * t, n))
    kx = kernel_matrix(spec, data.points, x[None])[:, 0]
    for i in range(t):
        Gx[i * n : (i + 1) * n] = kx[i] * eye
    Y = data.values.reshape(n * t)
    L, _ = _factorize(G, jitter)
    mean = Gx.T @ linalg.cho_solve((L, True), Y)
    W = linalg.solve_triangular(L, Gx, lower=True)
    var = eye - W.T @ W
    return mean, 0.5 * (var + var.T)


def multi_posterior(spec: KernelSpec, data: Dataset, x, path: str = "kronecker", jitter: float = DEFAULT_JITTER):
    """Posterior mean vector and covariance matrix of a vector-valued layer at ``x``.

    ``path="kronecker"`` shares one scalar factorization across outputs and
    returns sigma^2 I; ``path="full_block"`` assembles the (nt x nt) block
    system directly and is restricted to n*t <= 64.
    """
    if data.values.ndim != 2:
        raise ValueError("multi_posterior needs (t, n) vector values")
    n = data.values.shape[1]
    x = as_points(x, data.dim)[0]
    if path == "kronecker":
        model = fit(spec, data, jitter)
        m, s = model.mean_std(x[None])
        return m[0], (s[0] ** 2) * np.eye(n)
    if path == "full_block":
        return _full_block(spec, data.deduplicated(), x, jitter)
    raise ValueError(f"unknown path {path!r}")
