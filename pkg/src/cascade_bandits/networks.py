"""Ground-truth function networks.

A network is a list of layers; layer ``i`` maps R^{d_i} to R^{d_{i+1}} and is
stored as one scalar function per output coordinate.  Three structures are
supported:

* ``chain``: every layer is scalar valued (d_2 = ... = d_m = 1 after the
  input layer),
* ``multi``: vector valued layers modelled jointly with the kernel k(x, x') I,
* ``ffn``: feed-forward layers with an independent scalar function per
  output coordinate.

Layer indices are 0-based in code: ``layers[0]`` acts on the input domain
[0, 1]^{d_1} and ``layer_domains[0]`` is that unit box.

Besides random instances, the module builds the "bump plus needle"
constructions used to show lower bounds: a compactly supported bump of small
height in the first layer, followed by layers that amplify small inputs by a
kernel difference with RKHS norm exactly B.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy import optimize

from .gp import Dataset, fit
from .kernels import Expansion, KernelSpec, as_points, rkhs_norm

__all__ = [
    "STRUCTURES",
    "Bump",
    "NetworkInstance",
    "HardInstance",
    "HardFamily",
    "InfeasibleError",
    "normalize_structure",
    "evaluate",
    "synthesize_network",
    "estimate_lipschitz",
    "layer_range",
    "lattice",
    "bump_value",
    "needle_expansion",
    "needle_value",
    "needle_lipschitz",
    "check_u_utilde",
    "select_u_utilde",
    "solve_eps1",
    "build_hard_instance",
    "hard_family",
    "family_centers",
    "calibrate_width",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
    "dumps_instance",
]

STRUCTURES = ("chain", "multi", "ffn")
_ALIASES = {
    "chain": "chain",
    "multi": "multi",
    "multi-output": "multi",
    "multioutputchain": "multi",
    "multi_output_chain": "multi",
    "ffn": "ffn",
    "feedforward": "ffn",
    "feed-forward": "ffn",
    "feed_forward": "ffn",
}

PAD_FRACTION = 0.01
LIPSCHITZ_SAFETY = 1.05
MAX_ATTEMPTS = 10


class InfeasibleError(ValueError):
    """A hard-instance construction cannot satisfy one of its conditions."""


def normalize_structure(name: str) -> str:
    key = str(name).lower().replace(" ", "")
    if key not in _ALIASES:
        raise ValueError(f"unknown structure {name!r}; expected one of {STRUCTURES}")
    return _ALIASES[key]


def default_grid_per_dim(d: int) -> int:
    """Grid density used for Lipschitz and range estimation."""
    if d <= 2:
        return 256
    if d == 3:
        return 64
    return 16


def lattice(lo, hi, n: int) -> np.ndarray:
    """Lexicographic ``n^d`` lattice (endpoints included) over the box [lo, hi]."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = [np.linspace(a, b, n) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# --------------------------------------------------------------------------
# bump functions


def _h(r2: np.ndarray) -> np.ndarray:
    """Unnormalized bump exp(-1 / (1 - |z|^2)) on the open unit ball."""
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def bump_value(x, eps1: float, w: float, center) -> float | np.ndarray:
    """Scaled bump of height ``2 * eps1`` at ``center`` and support radius ``w``.

    Returns a float for a single point and an array for a batch.
    """
    if not w > 0:
        raise ValueError(f"support radius must be positive, got {w}")
    center = np.atleast_1d(np.asarray(center, dtype=float))
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1 and arr.size == center.size
    Z = as_points(x, center.size)
    r2 = np.sum(((Z - center) / w) ** 2, axis=1)
    vals = 2.0 * eps1 * np.e * _h(r2)
    return float(vals[0]) if single else vals


def _bump_max_slope() -> float:
    """max_r |d/dr exp(-1/(1-r^2))| on (0, 1)."""

    def neg(r):
        return -2.0 * r / (1.0 - r * r) ** 2 * np.exp(-1.0 / (1.0 - r * r))

    res = optimize.minimize_scalar(neg, bounds=(1e-6, 1.0 - 1e-6), method="bounded",
                                   options={"xatol": 1e-12})
    return float(-res.fun)


@dataclass(frozen=True, eq=False)
class Bump:
    """Coordinate function z -> bump_value(z, eps1, w, center)."""

    center: np.ndarray
    eps1: float
    w: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))

    @property
    def dim(self) -> int:
        return self.center.size

    def __call__(self, Z) -> np.ndarray:
        return np.atleast_1d(bump_value(as_points(Z, self.dim), self.eps1, self.w, self.center))

    def lipschitz(self) -> float:
        return 2.0 * self.eps1 * np.e * _bump_max_slope() / self.w

    def to_dict(self) -> dict:
        return {"type": "bump", "center": self.center.tolist(), "eps1": float(self.eps1), "w": float(self.w)}


def _fn_to_dict(fn) -> dict:
    if isinstance(fn, Bump):
        return fn.to_dict()
    return fn.to_dict()


def _fn_from_dict(d: dict, spec: KernelSpec, dim: int):
    if d.get("type") == "bump":
        return Bump(np.asarray(d["center"], dtype=float), float(d["eps1"]), float(d["w"]))
    return Expansion.from_dict(d, spec, dim)


# --------------------------------------------------------------------------
# network instances


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """A function network with its assumed norm bound B and Lipschitz constant L."""

    structure: str
    dims: tuple
    layers: tuple
    B: float
    L: float
    layer_domains: tuple
    spec: KernelSpec = field(default_factory=KernelSpec)
    label: str = ""
    seed: int | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        structure = normalize_structure(self.structure)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2 or dims[-1] != 1:
            raise ValueError(f"dims must end with output dimension 1, got {dims}")
        if structure == "chain" and any(d != 1 for d in dims[1:]):
            raise ValueError(f"a chain needs scalar intermediate layers, got dims {dims}")
        layers = tuple(tuple(layer) for layer in self.layers)
        if len(layers) != len(dims) - 1:
            raise ValueError(f"{len(layers)} layers do not match dims {dims}")
        for i, layer in enumerate(layers):
            if len(layer) != dims[i + 1]:
                raise ValueError(f"layer {i} has {len(layer)} coordinates, expected {dims[i + 1]}")
            for fn in layer:
                if fn.dim != dims[i]:
                    raise ValueError(f"layer {i} coordinate acts on R^{fn.dim}, expected R^{dims[i]}")
        domains = tuple(
            (np.asarray(lo, dtype=float).reshape(-1), np.asarray(hi, dtype=float).reshape(-1))
            for lo, hi in self.layer_domains
        )
        if len(domains) != len(layers):
            raise ValueError("one domain box per layer is required")
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "layer_domains", domains)
        object.__setattr__(self, "B", float(self.B))
        object.__setattr__(self, "L", float(self.L))

    @property
    def m(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    def layer_output(self, i: int, Z) -> np.ndarray:
        """Outputs ``(N, d_{i+1})`` of layer ``i`` at inputs ``Z``."""
        Z = as_points(Z, self.dims[i])
        return np.stack([fn(Z) for fn in self.layers[i]], axis=1)

    def forward(self, X) -> list[np.ndarray]:
        """All layer inputs x^(1), ..., x^(m) and the output, as 2-D arrays."""
        Z = as_points(X, self.dims[0])
        outs = [Z]
        for i in range(self.m):
            Z = self.layer_output(i, Z)
            outs.append(Z)
        return outs

    def __call__(self, X) -> np.ndarray:
        """End-to-end values g(X) for a batch of inputs."""
        return self.forward(X)[-1][:, 0]


def evaluate(net: NetworkInstance, x) -> tuple[list[np.ndarray], float]:
    """Evaluate one input and return the intermediates x^(2..m) and the output y."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if x.size != net.input_dim:
        raise ValueError(f"input has dimension {x.size}, network expects {net.input_dim}")
    outs = net.forward(x.reshape(1, -1))
    return [z[0] for z in outs[1:-1]], float(outs[-1][0, 0])


def estimate_lipschitz(fn, box, grid_per_dim: int) -> float:
    """Largest finite-difference slope between adjacent lattice points of ``box``.

    ``fn`` may be one coordinate function or a list of them, in which case the
    slope of the vector map is measured in the Euclidean norm.  The result is a
    lower bound on the true constant.
    """
    if grid_per_dim < 16:
        raise ValueError("grid_per_dim must be at least 16")
    fns = list(fn) if isinstance(fn, (list, tuple)) else [fn]
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in box)
    axes = [np.linspace(a, b, grid_per_dim) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    shape = tuple(len(a) for a in axes)
    P = lattice(lo, hi, grid_per_dim)
    F = np.stack([f(P) for f in fns], axis=-1).reshape(shape + (len(fns),))
    best = 0.0
    for ax, a in enumerate(axes):
        if len(a) < 2:
            continue
        dF = np.diff(F, axis=ax)
        slope = np.sqrt(np.sum(dF * dF, axis=-1)) / (a[1] - a[0])
        best = max(best, float(slope.max()))
    return best


def _pad(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    width = hi - lo
    pad = np.where(width > 0, PAD_FRACTION * width, PAD_FRACTION)
    return lo - pad, hi + pad


def _range_on_box(layer, box, grid_per_dim: int):
    P = lattice(box[0], box[1], grid_per_dim)
    V = np.stack([f(P) for f in layer], axis=1)
    return V.min(axis=0), V.max(axis=0)


def layer_range(net: NetworkInstance, i: int, grid_per_dim: int | None = None, pad: bool = True):
    """Bounding box of layer ``i``'s outputs over ``net.layer_domains[i]``.

    The box is padded by 1% of its width (or by 0.01 when degenerate).
    """
    n = grid_per_dim or default_grid_per_dim(net.dims[i])
    lo, hi = _range_on_box(net.layers[i], net.layer_domains[i], n)
    return _pad(lo, hi) if pad else (lo, hi)


def _random_expansion(rng, box, n_centers: int, n_out: int, spec: KernelSpec):
    lo, hi = box
    C = lo + (hi - lo) * rng.random((n_centers, lo.size))
    A = rng.standard_normal((n_centers, n_out))
    return C, A


def synthesize_network(seed: int, structure: str, dims, spec: KernelSpec, B: float,
                       n_centers: int = 8, label: str | None = None) -> NetworkInstance:
    """Random network whose coordinate functions are finite kernel expansions.

    Each coordinate (or, for the multi-output structure, each layer jointly)
    is rescaled to RKHS norm ``B * s`` with ``s ~ U[0.5, 1]``.  Centers are
    drawn uniformly in the padded range of the previous layer, and L is the
    largest measured Lipschitz estimate times 1.05 (and at least 1.05).
    """
    if n_centers < 1:
        raise ValueError("n_centers must be at least 1")
    structure = normalize_structure(structure)
    dims = tuple(int(d) for d in dims)
    rng = np.random.default_rng(seed)
    domains = [(np.zeros(dims[0]), np.ones(dims[0]))]
    layers = []
    lips = []
    for i in range(len(dims) - 1):
        d_in, d_out = dims[i], dims[i + 1]
        box = domains[i]
        for _ in range(MAX_ATTEMPTS):
            if structure == "multi":
                C, A = _random_expansion(rng, box, n_centers, d_out, spec)
                fns = [Expansion(C, A[:, j], spec) for j in range(d_out)]
                norm = float(np.sqrt(sum(rkhs_norm(f) ** 2 for f in fns)))
                if norm <= 1e-12:
                    continue
                scale = B * rng.uniform(0.5, 1.0) / norm
                fns = [f.scaled(scale) for f in fns]
            else:
                fns = []
                for _j in range(d_out):
                    C, A = _random_expansion(rng, box, n_centers, 1, spec)
                    f = Expansion(C, A[:, 0], spec)
                    norm = rkhs_norm(f)
                    if norm <= 1e-12:
                        break
                    fns.append(f.scaled(B * rng.uniform(0.5, 1.0) / norm))
                if len(fns) < d_out:
                    continue
            break
        else:
            raise ValueError(f"layer {i}: could not draw a non-degenerate expansion in {MAX_ATTEMPTS} attempts")
        layers.append(fns)
        n = default_grid_per_dim(d_in)
        if structure == "multi":
            lips.append(estimate_lipschitz(fns, box, n))
        else:
            lips.extend(estimate_lipschitz(f, box, n) for f in fns)
        if i + 1 < len(dims) - 1:
            lo, hi = _range_on_box(fns, box, n)
            domains.append(_pad(lo, hi))
    L = max(LIPSCHITZ_SAFETY * max(lips), LIPSCHITZ_SAFETY)
    if label is None:
        label = f"{structure}-m{len(dims) - 1}-d{dims[0]}-seed{seed}"
    return NetworkInstance(structure, dims, layers, B, L, domains, spec, label, seed)


# --------------------------------------------------------------------------
# needle layers


def _needle_scale(spec: KernelSpec, u: float, B: float) -> float:
    gap = 1.0 - float(spec(2.0 * u))
    if not gap > 0:
        raise InfeasibleError(f"k(0) - k(2u) vanishes numerically at u={u}")
    return np.sqrt(2.0) * B / np.sqrt(gap)


def needle_expansion(spec: KernelSpec, u: float, B: float, dim: int = 1) -> Expansion:
    """(L~/2)(k(., u e_1) - k(., -u e_1)) as an expansion on R^dim; its norm is B."""
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    Lt = _needle_scale(spec, u, B)
    C = np.zeros((2, dim))
    C[0, 0], C[1, 0] = u, -u
    return Expansion(C, np.array([Lt / 2.0, -Lt / 2.0]), spec)


def needle_value(z, u: float, B: float, spec: KernelSpec):
    """Scalar needle (L~/2)(k(z, u) - k(z, -u)); vectorized over ``z``."""
    if not u > 0:
        raise ValueError(f"u must be positive, got {u}")
    Lt = _needle_scale(spec, u, B)
    z = np.asarray(z, dtype=float)
    out = 0.5 * Lt * (spec(np.abs(z - u)) - spec(np.abs(z + u)))
    return float(out) if out.ndim == 0 else out


def _slope_ratio(spec: KernelSpec, u: float, z: np.ndarray) -> np.ndarray:
    return (spec(np.abs(u - z)) - spec(u + z)) / (2.0 * z)


def _slope_extremes(spec: KernelSpec, u: float, ut: float, n: int = 8192) -> tuple[float, float]:
    """min and max of (k(u-z) - k(u+z)) / (2z) over z in (0, ut]."""
    z = ut * np.arange(1, n + 1) / n
    # a geometric tail resolves the z -> 0 limit
    z = np.concatenate([ut / n * np.logspace(-6, 0, 64, endpoint=False), z])
    r = _slope_ratio(spec, u, z)
    lo, hi = float(r.min()), float(r.max())
    for k, sign in ((int(np.argmin(r)), 1.0), (int(np.argmax(r)), -1.0)):
        a = z[max(k - 1, 0)]
        b = z[min(k + 1, z.size - 1)]
        if b > a:
            res = optimize.minimize_scalar(lambda s: sign * _slope_ratio(spec, u, np.array([s]))[0],
                                           bounds=(a, b), method="bounded", options={"xatol": 1e-14})
            val = sign * float(res.fun)
            lo, hi = min(lo, val), max(hi, val)
    return lo, hi


def needle_lipschitz(spec: KernelSpec, u: float, ut: float, B: float) -> tuple[float, float]:
    """(inf, sup) of needle(z)/z over (0, ut], with a 1e-9 relative safety margin."""
    Lt = _needle_scale(spec, u, B)
    lo, hi = _slope_extremes(spec, u, ut)
    return Lt * lo * (1.0 - 1e-9), Lt * hi * (1.0 + 1e-9)


def check_u_utilde(spec: KernelSpec, B: float, u: float, ut: float) -> dict:
    """Evaluate the conditions a needle pair (u, u~) has to satisfy.

    Returns a dict with the slack of the monotonicity, the kernel-gap and the
    amplification conditions and an overall ``feasible`` flag.
    """
    if not (0 < ut < u):
        return {"feasible": False, "violated": "0 < u_tilde < u", "u": u, "u_tilde": ut}
    gap = 1.0 - float(spec(2.0 * u))
    cond2 = float(spec(u - ut) - spec(u + ut)) - np.sqrt(2.0) * np.sqrt(max(gap, 0.0)) / B
    Lt = _needle_scale(spec, u, B)
    r_min, r_max = _slope_extremes(spec, u, ut)
    amplification = r_min * Lt - 1.0
    violated = None
    if cond2 < 0:
        violated = "kernel gap k(u-u~) - k(u+u~) >= sqrt(2)*sqrt(k(0)-k(2u))/B"
    elif amplification <= 0:
        violated = "amplification: needle slope must exceed 1 on (0, u~]"
    return {
        "feasible": violated is None,
        "violated": violated,
        "u": float(u),
        "u_tilde": float(ut),
        "condition_monotone": True,  # Matérn profiles are non-increasing in r
        "condition_gap": float(cond2),
        "amplification": float(amplification),
        "L_tilde": float(Lt),
        "r_min": float(r_min),
        "r_max": float(r_max),
    }


def select_u_utilde(spec: KernelSpec, B: float) -> tuple[float, float, float, float]:
    """Search a feasible needle pair (u, u~) and its slope constants.

    Candidates are ``u = a * l`` and ``u~ = b * u`` on fixed grids; among
    feasible pairs the one with the largest needle height at u~ is returned.
    Returns ``(u, u_tilde, L_eff, alpha)`` with ``L_eff`` the largest and
    ``alpha * L_eff`` the smallest slope of the needle over (0, u~].
    """
    if not B > 0:
        raise ValueError("B must be positive")
    best = None
    reasons = set()
    for a in np.round(np.arange(0.1, 2.01, 0.1), 10):
        u = float(a * spec.lengthscale)
        for b in (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8):
            ut = float(b * u)
            chk = check_u_utilde(spec, B, u, ut)
            if not chk["feasible"]:
                reasons.add(chk["violated"])
                continue
            height = float(needle_value(ut, u, B, spec))
            if best is None or height > best[0] + 1e-15:
                best = (height, chk)
    if best is None:
        raise InfeasibleError("no feasible (u, u_tilde): violated " + "; ".join(sorted(reasons)))
    chk = best[1]
    lo, hi = needle_lipschitz(spec, chk["u"], chk["u_tilde"], B)
    return float(chk["u"]), float(chk["u_tilde"]), float(hi), float(lo / hi)


def _compose_needle(spec, B, u, ut, m, z0):
    # inputs are clamped to (0, u~], where the needle is increasing, so the
    # composition is monotone in z0; the clamp is inactive at the solution
    z = z0
    for _ in range(m - 1):
        z = needle_value(min(z, ut), u, B, spec)
    return z


def solve_eps1(spec: KernelSpec, B: float, u: float, ut: float, m: int, eps: float) -> float:
    """Bump half-height ``eps1`` such that m-1 needle layers map 2*eps1 to 2*eps.

    Every intermediate height stays in (0, u~], which requires
    2*eps <= needle(u~).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if m == 1:
        return float(eps)
    cap = float(needle_value(ut, u, B, spec))
    if 2.0 * eps > cap:
        raise InfeasibleError(f"eps={eps} is outside the admissible range (0, {cap / 2:.6g}]")
    lo, hi = 0.0, float(eps)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _compose_needle(spec, B, u, ut, m, 2.0 * mid) < 2.0 * eps:
            lo = mid
        else:
            hi = mid
    eps1 = hi
    resid = abs(_compose_needle(spec, B, u, ut, m, 2.0 * eps1) - 2.0 * eps)
    if resid > 1e-10:
        raise InfeasibleError(f"bisection residual {resid:.3e} exceeds 1e-10")
    return eps1


# --------------------------------------------------------------------------
# hard instances


def _interp_norm(spec: KernelSpec, eps1: float, w: float, d: int) -> float:
    """Kernel-interpolation norm of the bump on a 64-point lattice of its support."""
    n = max(2, int(round(64 ** (1.0 / d))))
    center = np.zeros(d)
    P = lattice(center - w, center + w, n)
    y = bump_value(P, eps1, w, center)
    model = fit(spec, Dataset(P, y))
    a = np.asarray(model.alpha).ravel()
    return float(np.sqrt(max(float(y @ a), 0.0)))


def calibrate_width(spec: KernelSpec, B: float, eps1: float, d: int, w0: float = 0.5,
                    shrink: float = 0.8, max_steps: int = 200) -> float:
    """Smallest width ``w0 * shrink^k`` whose bump interpolation norm stays <= B/2."""
    if _interp_norm(spec, eps1, w0, d) > B / 2:
        raise InfeasibleError(f"bump of width {w0} already exceeds norm B/2; reduce eps")
    w = w0
    for _ in range(max_steps):
        nxt = w * shrink
        if _interp_norm(spec, eps1, nxt, d) > B / 2:
            break
        w = nxt
    return w


@dataclass(frozen=True, eq=False)
class HardInstance:
    """Bump followed by m-1 needle layers; ``network`` evaluates it."""

    network: NetworkInstance
    center: np.ndarray
    w: float
    eps: float
    eps1: float
    u: float
    u_tilde: float
    L_tilde: float
    alpha: float
    L_eff: float
    L_bump: float
    m: int
    d: int
    B: float
    structure: str

    @property
    def heights(self) -> list[float]:
        """Peak value of coordinate 1 after each layer."""
        h = [2.0 * self.eps1]
        for _ in range(self.m - 1):
            h.append(float(needle_value(h[-1], self.u, self.B, self.network.spec)))
        return h

    def __call__(self, X) -> np.ndarray:
        return self.network(X)


def _hard_network(spec, B, m, d, structure, inner_dim, center, eps1, w, u, heights, L, label, extras):
    if structure == "chain":
        dims = (d,) + (1,) * m
    else:
        dims = (d,) + (inner_dim,) * (m - 1) + (1,)
    layers = []
    for i in range(m):
        d_in, d_out = dims[i], dims[i + 1]
        first = Bump(center, eps1, w) if i == 0 else needle_expansion(spec, u, B, d_in)
        layers.append([first] + [Expansion.zero(d_in, spec) for _ in range(d_out - 1)])
    domains = [(np.zeros(d), np.ones(d))]
    for i in range(1, m):
        lo = np.zeros(dims[i])
        hi = np.zeros(dims[i])
        hi[0] = heights[i - 1]
        domains.append(_pad(lo, hi))
    return NetworkInstance(structure, dims, layers, B, L, domains, spec, label, None, extras)


def _hard_params(spec, B, m, d, eps, w=None):
    u, ut, L_needle, alpha_needle = select_u_utilde(spec, B)
    eps1 = solve_eps1(spec, B, u, ut, m, eps)
    if w is None:
        w = calibrate_width(spec, B, eps1, d)
    if not 2 * w < 1:
        raise InfeasibleError(f"support radius w={w:.4g} is too wide (need 2w < 1); reduce eps")
    heights = [2.0 * eps1]
    for _ in range(m - 1):
        heights.append(float(needle_value(heights[-1], u, B, spec)))
    L_bump = Bump(np.zeros(d), eps1, w).lipschitz()
    L_eff = float(max(L_bump, L_needle))
    return {
        "u": u, "u_tilde": ut, "eps1": eps1, "w": float(w), "heights": heights,
        "L_tilde": float(_needle_scale(spec, u, B)), "L_bump": float(L_bump), "L_eff": L_eff,
        # alpha * L_eff is the smallest needle slope on (0, u~]
        "alpha": alpha_needle * L_needle / L_eff,
    }


def _assemble(spec, B, m, d, eps, structure, center, inner_dim, p) -> HardInstance:
    extras = {
        "eps": float(eps), "eps1": p["eps1"], "w": p["w"], "u": p["u"],
        "u_tilde": p["u_tilde"], "alpha": p["alpha"], "center": center.tolist(),
    }
    label = f"hard-{structure}-m{m}-d{d}-eps{eps:g}"
    net = _hard_network(spec, B, m, d, structure, inner_dim, center, p["eps1"], p["w"], p["u"],
                        p["heights"], p["L_eff"], label, extras)
    return HardInstance(net, center, p["w"], float(eps), p["eps1"], p["u"], p["u_tilde"],
                        p["L_tilde"], p["alpha"], p["L_eff"], p["L_bump"], m, d, float(B), structure)


def _check_hard_args(spec, m, d, structure, center):
    if m < 1 or d < 1:
        raise ValueError("m and d must be at least 1")
    if spec.nu < 1:
        raise ValueError("hard instances require nu >= 1")
    structure = normalize_structure(structure)
    center = np.full(d, 0.5) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    if center.size != d:
        raise ValueError(f"center has dimension {center.size}, expected {d}")
    return structure, center


def build_hard_instance(spec: KernelSpec, B: float, m: int, d: int, eps: float,
                        structure: str = "chain", center=None, inner_dim: int = 2,
                        w: float | None = None) -> HardInstance:
    """Hard instance with maximum 2*eps and support of radius w around ``center``.

    For the multi-output and feed-forward structures the bump feeds coordinate
    1 of an ``inner_dim``-dimensional layer and every other coordinate is the
    zero function.  Passing ``w`` skips the width calibration.
    """
    structure, center = _check_hard_args(spec, m, d, structure, center)
    p = _hard_params(spec, B, m, d, eps, w)
    return _assemble(spec, B, m, d, eps, structure, center, inner_dim, p)


@dataclass(frozen=True, eq=False)
class HardFamily:
    """Shifted copies of one hard instance with pairwise disjoint supports."""

    instances: tuple
    w: float

    @property
    def M(self) -> int:
        return len(self.instances)


def family_centers(w: float, d: int) -> np.ndarray:
    """Cell centers of the lattice with spacing 2w inside [0, 1]^d."""
    n = int(np.floor(1.0 / (2.0 * w) + 1e-12))
    axis = (np.arange(n) + 0.5) * 2.0 * w
    return np.array(list(product(axis, repeat=d)), dtype=float).reshape(-1, d)


def hard_family(spec: KernelSpec, B: float, m: int, d: int, eps: float,
                structure: str = "chain", inner_dim: int = 2) -> HardFamily:
    """All shifted hard instances centered on the cells of a 2w-spaced grid."""
    structure, _ = _check_hard_args(spec, m, d, structure, None)
    p = _hard_params(spec, B, m, d, eps)
    centers = family_centers(p["w"], d)
    if len(centers) < 2:
        raise InfeasibleError(f"only {len(centers)} disjoint copies fit (w={p['w']:.4g}); use a smaller eps")
    members = tuple(_assemble(spec, B, m, d, eps, structure, c, inner_dim, p) for c in centers)
    return HardFamily(members, p["w"])


# --------------------------------------------------------------------------
# serialization


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def instance_to_dict(net: NetworkInstance) -> dict:
    d = {
        "structure": net.structure,
        "dims": list(net.dims),
        "B": net.B,
        "L": net.L,
        "kernel": net.spec.to_dict(),
        "layers": [[_fn_to_dict(fn) for fn in layer] for layer in net.layers],
        "layer_domains": [{"lo": lo.tolist(), "hi": hi.tolist()} for lo, hi in net.layer_domains],
        "label": net.label,
        "seed": net.seed,
    }
    for k, v in net.extras.items():
        d[k] = _jsonable(v)
    return d


def instance_from_dict(d: dict) -> NetworkInstance:
    spec = KernelSpec.from_dict(d["kernel"])
    dims = tuple(int(v) for v in d["dims"])
    layers = [[_fn_from_dict(f, spec, dims[i]) for f in layer] for i, layer in enumerate(d["layers"])]
    domains = [(np.asarray(b["lo"], dtype=float), np.asarray(b["hi"], dtype=float)) for b in d["layer_domains"]]
    known = {"structure", "dims", "B", "L", "kernel", "layers", "layer_domains", "label", "seed"}
    extras = {k: v for k, v in d.items() if k not in known}
    return NetworkInstance(d["structure"], dims, layers, d["B"], d["L"], domains, spec,
                           d.get("label", ""), d.get("seed"), extras)


def dumps_instance(net: NetworkInstance) -> str:
    # json uses repr for floats, the shortest string that round-trips exactly
    return json.dumps(instance_to_dict(net), indent=1) + "\n"


def save_instance(net: NetworkInstance, path) -> Path:
    path = Path(path)
    path.write_text(dumps_instance(net), encoding="utf-8")
    return path


def load_instance(path) -> NetworkInstance:
    return instance_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

