"""Matérn kernels, Gram matrices and finite kernel expansions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

__all__ = [
    "KernelSpec",
    "Expansion",
    "NumericalError",
    "matern",
    "kernel_eval",
    "kernel_matrix",
    "gram_matrix",
    "rkhs_norm",
    "as_points",
]

_CLOSED_FORM_TOL = 1e-12
# below this scaled distance the general-nu profile is evaluated without the log form
_SMALL_S = 0.5
_SERIES_TERMS = 14
_INTEGER_GAP = 0.02


class NumericalError(ArithmeticError):
    """Raised when a quantity that is analytically valid fails numerically."""


@dataclass(frozen=True)
class KernelSpec:
    """Unit-variance Matérn kernel with smoothness ``nu`` and ``lengthscale``."""

    nu: float = 1.5
    lengthscale: float = 0.2
    family: str = "matern"

    def __post_init__(self):
        if self.family != "matern":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")

    def to_dict(self) -> dict:
        return {"family": self.family, "nu": float(self.nu), "lengthscale": float(self.lengthscale)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(nu=float(d["nu"]), lengthscale=float(d["lengthscale"]), family=d.get("family", "matern"))

    def __call__(self, r):
        """Kernel value as a function of distance."""
        return matern(r, self.nu, self.lengthscale)


def matern(r, nu: float, lengthscale: float):
    """Evaluate the Matérn profile k(r) at distances ``r`` (array or scalar).

    Closed forms are used for nu in {1/2, 3/2, 5/2}; other values go
    through the modified Bessel function of the second kind.
    """
    r = np.asarray(r, dtype=float)
    if abs(nu - 0.5) < _CLOSED_FORM_TOL:
        return np.exp(-r / lengthscale)
    if abs(nu - 1.5) < _CLOSED_FORM_TOL:
        s = np.sqrt(3.0) * r / lengthscale
        return (1.0 + s) * np.exp(-s)
    if abs(nu - 2.5) < _CLOSED_FORM_TOL:
        s = np.sqrt(5.0) * r / lengthscale
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    s = np.sqrt(2.0 * nu) * r / lengthscale
    with np.errstate(all="ignore"):
        # kve(nu, s) = kv(nu, s) * exp(s); recombining in log space avoids overflow
        log_val = (1.0 - nu) * np.log(2.0) - special.gammaln(nu) + nu * np.log(s) + np.log(special.kve(nu, s)) - s
        out = np.exp(log_val)
        # near zero the log form loses |nu log s| ulps, enough to break monotonicity
        small = s < _SMALL_S
        if np.any(small):
            out = np.where(small, _matern_small(s, nu), out)
    out = np.where(s == 0.0, 1.0, out)
    # below the representable range of kv the limit value 1 applies
    out = np.where(np.isfinite(out), out, np.where(s < 1.0, 1.0, 0.0))
    return np.minimum(out, 1.0)


def _matern_small(s: np.ndarray, nu: float) -> np.ndarray:
    """General-nu profile for small scaled distance ``s``.

    Away from integer nu this sums the ascending series
    Gamma(1-nu) [sum z^k / (k! Gamma(k+1-nu)) - z^nu sum z^k / (k! Gamma(k+1+nu))],
    z = (s/2)^2, which is accurate to a few ulps for s < 0.5.  Near integers
    the two sums cancel, so the direct product with kv is used instead.
    """
    if abs(nu - round(nu)) < _INTEGER_GAP:
        return 2.0 ** (1.0 - nu) / special.gamma(nu) * s**nu * special.kv(nu, s)
    z = (np.minimum(s, _SMALL_S) / 2.0) ** 2
    k = np.arange(_SERIES_TERMS).reshape((-1,) + (1,) * z.ndim)
    fk = special.factorial(k)
    a = np.sum(z**k / (fk * special.gamma(k + 1.0 - nu)), axis=0)
    b = np.sum(z**k / (fk * special.gamma(k + 1.0 + nu)), axis=0)
    return special.gamma(1.0 - nu) * (a - z**nu * b)


def as_points(x, dim: int | None = None) -> np.ndarray:
    """Coerce a point or a batch of points into a 2-D ``(n, d)`` array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1) if dim == 1 else a.reshape(1, -1)
    if dim is not None and a.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {a.shape[1]}")
    return a


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """k(x, x2) for two single points."""
    a = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    b = np.atleast_1d(np.asarray(x2, dtype=float)).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    r = float(np.sqrt(np.sum((a - b) ** 2)))
    if r == 0.0:
        return 1.0
    return float(matern(r, spec.nu, spec.lengthscale))


def kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """Cross-kernel matrix [k(X_i, Y_j)]."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[1] == 1:
        r = np.abs(X[:, 0, None] - Y[None, :, 0])
    else:
        r = cdist(X, Y)
    return matern(r, spec.nu, spec.lengthscale)


def gram_matrix(spec: KernelSpec, points) -> np.ndarray:
    """Symmetric Gram matrix K = [k(x_i, x_j)] with an exact unit diagonal."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("gram_matrix needs a non-empty (n, d) point array")
    K = kernel_matrix(spec, P, P)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


@dataclass(frozen=True, eq=False)
class Expansion:
    """The function z -> sum_i coeffs[i] * k(z, centers[i]).

    An expansion with no centers is the zero function on R^dim.
    """

    centers: np.ndarray
    coeffs: np.ndarray
    spec: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        a = np.asarray(self.coeffs, dtype=float).ravel()
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.shape[0] != a.shape[0]:
            raise ValueError(f"{c.shape[0]} centers but {a.shape[0]} coefficients")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def zero(cls, dim: int, spec: KernelSpec) -> "Expansion":
        return cls(np.zeros((0, dim)), np.zeros(0), spec)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def __len__(self):
        return self.coeffs.shape[0]

    def __call__(self, Z) -> np.ndarray:
        Z = as_points(Z, self.dim)
        if len(self) == 0:
            return np.zeros(Z.shape[0])
        return kernel_matrix(self.spec, Z, self.centers) @ self.coeffs

    def scaled(self, c: float) -> "Expansion":
        return Expansion(self.centers, c * self.coeffs, self.spec)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict, spec: KernelSpec, dim: int) -> "Expansion":
        centers = np.asarray(d["centers"], dtype=float).reshape(-1, dim)
        return cls(centers, np.asarray(d["coeffs"], dtype=float), spec)


def rkhs_norm(f: Expansion) -> float:
    """Exact RKHS norm sqrt(a^T K a) of a finite expansion."""
    if len(f) == 0:
        return 0.0
    K = gram_matrix(f.spec, f.centers)
    q = float(f.coeffs @ K @ f.coeffs)
    if q < -1e-10:
        raise NumericalError(f"negative quadratic form a^T K a = {q:.3e}")
    return float(np.sqrt(max(q, 0.0)))
