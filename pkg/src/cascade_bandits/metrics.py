"""Regret accounting, fill distance, deviation sums and bound checks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .gp import Dataset, fit
from .kernels import KernelSpec, gram_matrix
from .networks import NetworkInstance, normalize_structure

__all__ = [
    "BoundReport",
    "simple_regret",
    "cumulative_regret",
    "fill_distance",
    "sigma_trajectory_sums",
    "info_gain",
    "bound_coefficients",
    "verify_bounds",
    "sigma_fill_scaling",
    "PER_STEP_TOL",
    "CONTAINMENT_TOL",
    "LINALG_TOL",
]

PER_STEP_TOL = 1e-3
CONTAINMENT_TOL = 1e-6
LINALG_TOL = 1e-8


class RegretWarning(RuntimeWarning):
    pass


def simple_regret(net: NetworkInstance, x_returned, grid_optimum_value: float) -> float:
    """grid_optimum_value - g(x_returned), clamped at 0 if negative.

    A warning is raised only when the deficit exceeds round-off (LINALG_TOL).
    """
    x = np.atleast_1d(np.asarray(x_returned, dtype=float)).reshape(1, -1)
    r = float(grid_optimum_value - net(x)[0])
    if r < -LINALG_TOL:
        warnings.warn(f"returned point beats the oracle optimum by {-r:.3e}; clamped to 0", RegretWarning)
    return max(r, 0.0)


def cumulative_regret(r) -> np.ndarray:
    """Prefix sums R_t of per-step regrets."""
    return np.cumsum(np.asarray(r, dtype=float))


def fill_distance(samples, domain_probe_grid) -> float:
    """max over probe points of the distance to the nearest sample."""
    S = np.asarray(samples, dtype=float)
    if S.size == 0:
        raise ValueError("fill distance needs at least one sample")
    P = np.asarray(domain_probe_grid, dtype=float)
    if S.ndim == 1:
        S = S.reshape(-1, 1)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    dist, _ = cKDTree(S).query(P)
    return float(dist.max())


def sigma_trajectory_sums(trace) -> tuple[np.ndarray, bool]:
    """Per-layer sums of sigma_{t-1}(x_t^(i)) and whether the trace is complete."""
    S = trace.sigma_array
    sums = np.nansum(S, axis=0) if S.size else np.zeros(trace.m)
    return sums, not trace.incomplete


def info_gain(points, spec: KernelSpec, lam: float = 1.0) -> float:
    """0.5 * log det(I + K / lam) at the given points."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    if P.shape[0] == 0:
        return 0.0
    K = gram_matrix(spec, P)
    sign, logdet = np.linalg.slogdet(np.eye(P.shape[0]) + K / lam)
    if sign <= 0:
        raise ArithmeticError("I + K/lambda is not positive definite")
    return 0.5 * float(logdet)


def bound_coefficients(structure: str, B: float, L: float, dims) -> np.ndarray:
    """Per-layer weights c_i of the per-step inequality r_t <= sum_i c_i sigma_i.

    chain:  2B (2L)^(m-i)
    multi:  2B for the last layer, 2L (5L)^(m-1-i) 4B before it
    ffn:    2^(m-i+1) B L^(m-i) prod_{s=i+1..m} sqrt(d_s)
    (layers numbered i = 1..m, dims = (d_1, ..., d_{m+1})).
    """
    structure = normalize_structure(structure)
    dims = tuple(dims)
    m = len(dims) - 1
    c = np.empty(m)
    for i in range(1, m + 1):
        if structure == "chain":
            c[i - 1] = 2 * B * (2 * L) ** (m - i)
        elif structure == "multi":
            c[i - 1] = 2 * B if i == m else 2 * L * (5 * L) ** (m - 1 - i) * 4 * B
        else:
            prod = float(np.prod([np.sqrt(dims[s - 1]) for s in range(i + 1, m + 1)]))
            c[i - 1] = 2 ** (m - i + 1) * B * L ** (m - i) * prod
    return c


@dataclass
class BoundReport:
    """Outcome of checking the per-step and aggregate regret inequalities."""

    structure: str
    coefficients: np.ndarray
    tolerance: float
    per_step_pass: np.ndarray
    violations: np.ndarray
    aggregate_lhs: float
    aggregate_rhs: float

    @property
    def max_violation(self) -> float:
        """Largest r_t - sum_i c_i sigma_i over steps (negative when slack everywhere)."""
        return float(self.violations.max()) if self.violations.size else -np.inf

    @property
    def aggregate_pass(self) -> bool:
        return self.aggregate_lhs <= self.aggregate_rhs

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance and self.aggregate_pass)


def verify_bounds(trace, net: NetworkInstance, structure: str | None = None,
                  tol: float = PER_STEP_TOL, B: float | None = None, L: float | None = None) -> BoundReport:
    """Check r_t <= sum_i c_i sigma_i + tol at every step and R_T <= sum_t (...) + T tol."""
    structure = normalize_structure(structure or net.structure)
    if structure != net.structure:
        raise ValueError(f"trace comes from a {net.structure} instance, not {structure}")
    if trace.algo != "gpn_ucb":
        raise ValueError("bounds apply to GPN-UCB traces")
    c = bound_coefficients(structure, net.B if B is None else B, net.L if L is None else L, net.dims)
    S = trace.sigma_array
    r = np.asarray(trace.r, dtype=float)
    rhs = S @ c if S.size else np.zeros(0)
    viol = r - rhs
    return BoundReport(structure, c, tol, viol <= tol, viol, float(r.sum()),
                       float(rhs.sum() + len(r) * tol))


def sigma_fill_scaling(spec: KernelSpec, sample_sizes, probe_factor: int = 16):
    """Max posterior std and fill distance of cell-centered 1-D grids.

    Returns ``(deltas, sigmas, slope)`` where ``slope`` is the least-squares
    slope of log sigma against log delta.
    """
    sizes = [int(n) for n in sample_sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sample sizes must be strictly increasing")
    probe = np.linspace(0.0, 1.0, probe_factor * max(sizes) + 1)[:, None]
    deltas, sigmas = [], []
    for n in sizes:
        P = ((np.arange(n) + 0.5) / n)[:, None]
        model = fit(spec, Dataset(P, np.zeros(n)))
        deltas.append(fill_distance(P, probe))
        sigmas.append(float(model.std(probe).max()))
    deltas, sigmas = np.asarray(deltas), np.asarray(sigmas)
    slope = float(np.polyfit(np.log(deltas), np.log(sigmas), 1)[0])
    return deltas, sigmas, slope
