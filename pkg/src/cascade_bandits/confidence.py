"""Lipschitz-tightened confidence envelopes and confidence-region propagation.

For a layer with posterior mean mu, standard deviation sigma, norm bound B and
Lipschitz constant L, every anchor z' gives the valid upper bound

    f(z) <= mu(z') + B sigma(z') + L |z - z'|,

and the envelope is the minimum over a finite anchor set (observed inputs and
the query point itself).  Lower envelopes mirror this.

Confidence regions are propagated layer by layer as boxes.  Extremes of the
envelope over a box are computed on a lattice of the box.  The lattice points
also serve as anchors for each other, and a Lipschitz gap term covers the
space between lattice points, so the resulting region contains every value
the layer can take on the box, not only its values on the lattice.

Every layer is handled as a vector-valued model with outputs in R^{d_{i+1}}
(a chain simply has d_{i+1} = 1), so chains, multi-output chains and
feed-forward networks share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gp import PosteriorModel
from .kernels import as_points

__all__ = [
    "Interval",
    "Box",
    "EnvelopeContext",
    "Propagation",
    "ucb_env",
    "lcb_env",
    "propagate",
    "propagate_chain",
    "propagate_multi",
    "propagate_ffn",
    "region_lattice_size",
    "ENVELOPES",
]

ENVELOPES = ("anchored", "plain")
INSIDE_TOL = 1e-12
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, v) -> bool:
        return self.lo <= float(v) <= self.hi


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box given by per-coordinate bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lo <= hi coordinatewise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def intervals(self) -> list[Interval]:
        return [Interval(float(a), float(b)) for a, b in zip(self.lo, self.hi)]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diameter(self) -> float:
        return float(np.sqrt(np.sum(self.widths**2)))

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return bool(np.all(z >= self.lo - tol) and np.all(z <= self.hi + tol))


@dataclass(frozen=True, eq=False)
class EnvelopeContext:
    """A fitted layer model together with its constants B and L.

    ``model`` may be scalar valued or vector valued; envelope values always
    come back with a trailing output axis.  With ``envelope="plain"`` no
    anchors are used and the envelopes reduce to mu +/- B sigma.
    """

    model: PosteriorModel
    B: float
    L: float
    envelope: str = "anchored"
    anchors: np.ndarray = field(init=False)
    anchor_upper: np.ndarray = field(init=False)
    anchor_lower: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.envelope not in ENVELOPES:
            raise ValueError(f"envelope must be one of {ENVELOPES}, got {self.envelope!r}")
        if not self.B > 0 or not self.L >= 0:
            raise ValueError("B must be positive and L non-negative")
        if self.envelope == "anchored" and self.model.t > 0:
            A = self.model.points
            mu, s = self.plain(A)
        else:
            A = np.zeros((0, self.model.dim))
            mu, s = np.zeros((0, self.n_outputs)), np.zeros(0)
        object.__setattr__(self, "anchors", A)
        object.__setattr__(self, "anchor_upper", mu + self.B * s[:, None])
        object.__setattr__(self, "anchor_lower", mu - self.B * s[:, None])

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def n_outputs(self) -> int:
        return self.model.n_outputs or 1

    def plain(self, Z):
        """Posterior mean ``(N, n)`` and standard deviation ``(N,)`` at ``Z``."""
        mu, s = self.model.mean_std(Z)
        return mu.reshape(mu.shape[0], -1), s


def _cone(Z, A, V, L, sign):
    """min (sign=+1) or max (sign=-1) over anchors of V_a + sign*L*|z - a|."""
    N, t = Z.shape[0], A.shape[0]
    n = V.shape[1]
    out = np.empty((N, n))
    step = max(1, _CHUNK_ELEMENTS // max(1, t * n))
    for s in range(0, N, step):
        Zc = Z[s : s + step]
        D = np.sqrt(np.sum((Zc[:, None, :] - A[None, :, :]) ** 2, axis=2))
        vals = V[None, :, :] + sign * L * D[:, :, None]
        out[s : s + step] = vals.min(axis=1) if sign > 0 else vals.max(axis=1)
    return out


def _envelopes(ctx: EnvelopeContext, Z):
    """Upper and lower envelopes ``(N, n)`` at points Z (each its own anchor)."""
    mu, s = ctx.plain(Z)
    up = mu + ctx.B * s[:, None]
    lo = mu - ctx.B * s[:, None]
    if ctx.anchors.shape[0]:
        up = np.minimum(up, _cone(Z, ctx.anchors, ctx.anchor_upper, ctx.L, +1))
        lo = np.maximum(lo, _cone(Z, ctx.anchors, ctx.anchor_lower, ctx.L, -1))
    return up, lo


def _single(ctx, z):
    a = np.asarray(z, dtype=float)
    single = a.ndim == 0 or (a.ndim == 1 and (ctx.dim > 1 or a.shape[0] == 1))
    Z = as_points(a.reshape(1, -1) if single else a, ctx.dim)
    return Z, single


def _shape_out(ctx, v, single):
    if ctx.model.n_outputs is None:
        v = v[:, 0]
        return float(v[0]) if single else v
    return v[0] if single else v


def ucb_env(ctx: EnvelopeContext, z):
    """min over anchors z' (observed inputs and z itself) of mu(z') + B sigma(z') + L|z - z'|."""
    Z, single = _single(ctx, z)
    return _shape_out(ctx, _envelopes(ctx, Z)[0], single)


def lcb_env(ctx: EnvelopeContext, z):
    """max over anchors z' of mu(z') - B sigma(z') - L|z - z'|."""
    Z, single = _single(ctx, z)
    return _shape_out(ctx, _envelopes(ctx, Z)[1], single)


def region_lattice_size(d: int, G: int, box_cap: int = 4096) -> int:
    """Points per dimension of the evaluation lattice of a d-dimensional box."""
    if G < 2:
        raise ValueError("region grid needs at least 2 points per dimension")
    if d == 1:
        return G
    return max(2, min(G, int(np.floor(box_cap ** (1.0 / d) + 1e-9))))


def _unit_lattice(d: int, n: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n)
    mesh = np.meshgrid(*([s] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _extremes_1d(ctx, E, Pu, Pl, inside_anchor):
    """Region extremes for scalar inputs via sorted two-pass cone envelopes."""
    c, K = E.shape
    A = ctx.anchors[:, 0]
    t = A.shape[0]
    n = Pu.shape[2]
    S = np.concatenate([E, np.broadcast_to(A, (c, t))], axis=1)
    Vu = np.concatenate([Pu, np.broadcast_to(ctx.anchor_upper, (c, t, n))], axis=1)
    Vl = np.concatenate([Pl, np.broadcast_to(ctx.anchor_lower, (c, t, n))], axis=1)
    inside = np.concatenate([np.ones((c, K), dtype=bool), inside_anchor], axis=1)
    order = np.argsort(S, axis=1, kind="stable")
    S = np.take_along_axis(S, order, axis=1)
    Vu = np.take_along_axis(Vu, order[:, :, None], axis=1)
    Vl = np.take_along_axis(Vl, order[:, :, None], axis=1)
    inside = np.take_along_axis(inside, order, axis=1)
    L = ctx.L
    gaps = L * np.diff(S, axis=1)[:, :, None]
    for k in range(1, S.shape[1]):
        np.minimum(Vu[:, k], Vu[:, k - 1] + gaps[:, k - 1], out=Vu[:, k])
        np.maximum(Vl[:, k], Vl[:, k - 1] - gaps[:, k - 1], out=Vl[:, k])
    for k in range(S.shape[1] - 2, -1, -1):
        np.minimum(Vu[:, k], Vu[:, k + 1] + gaps[:, k], out=Vu[:, k])
        np.maximum(Vl[:, k], Vl[:, k + 1] - gaps[:, k], out=Vl[:, k])
    # between consecutive evaluation points the cones of both ends bound f
    pair = (inside[:, 1:] & inside[:, :-1])[:, :, None]
    top = 0.5 * (Vu[:, 1:] + Vu[:, :-1] + gaps)
    bot = 0.5 * (Vl[:, 1:] + Vl[:, :-1] - gaps)
    hi = np.where(pair, top, -np.inf).max(axis=1)
    lo = np.where(pair, bot, np.inf).min(axis=1)
    hi = np.maximum(hi, np.where(inside[:, :, None], Vu, -np.inf).max(axis=1))
    lo = np.minimum(lo, np.where(inside[:, :, None], Vl, np.inf).min(axis=1))
    return lo, hi


def _extremes_nd(ctx, E, Pu, Pl, inside_anchor, radius, widths, offsets):
    """Region extremes for vector inputs via exact Euclidean cone envelopes.

    ``offsets[k]`` holds squared unit-lattice coordinate differences along
    axis k, so lattice-to-lattice distances only need a weighted sum.
    """
    A = ctx.anchors
    L = ctx.L
    D_ee = np.sqrt(np.einsum("ck,kij->cij", widths**2, offsets))
    Eu = np.min(Pu[:, None, :, :] + L * D_ee[:, :, :, None], axis=2)
    El = np.max(Pl[:, None, :, :] - L * D_ee[:, :, :, None], axis=2)
    hi = Eu.max(axis=1)
    lo = El.min(axis=1)
    if A.shape[0]:
        D_ea = np.sqrt(np.sum((E[:, :, None, :] - A[None, None, :, :]) ** 2, axis=3))
        Ua, La = ctx.anchor_upper, ctx.anchor_lower
        Eu = np.minimum(Eu, np.min(Ua[None, None] + L * D_ea[..., None], axis=2))
        El = np.maximum(El, np.max(La[None, None] - L * D_ea[..., None], axis=2))
        hi = Eu.max(axis=1)
        lo = El.min(axis=1)
        # observed inputs inside the box are evaluation points too
        D_aa = np.sqrt(np.sum((A[:, None, :] - A[None, :, :]) ** 2, axis=2))
        Au = np.minimum(np.min(Ua[None, :, :] + L * D_aa[:, :, None], axis=1)[None],
                        np.min(Pu[:, :, None, :] + L * D_ea[..., None], axis=1))
        Al = np.maximum(np.max(La[None, :, :] - L * D_aa[:, :, None], axis=1)[None],
                        np.max(Pl[:, :, None, :] - L * D_ea[..., None], axis=1))
        ins = inside_anchor[:, :, None]
        hi = np.maximum(hi, np.where(ins, Au, -np.inf).max(axis=1))
        lo = np.minimum(lo, np.where(ins, Al, np.inf).min(axis=1))
    return lo - L * radius[:, None], hi + L * radius[:, None]


def _region_extremes(ctx: EnvelopeContext, blo, bhi, G: int, box_cap: int):
    """Lower and upper bounds ``(N, n)`` on the layer over boxes [blo, bhi]."""
    N, d = blo.shape
    n_per = region_lattice_size(d, G, box_cap)
    U = _unit_lattice(d, n_per)
    K = U.shape[0]
    t = ctx.anchors.shape[0]
    n = ctx.n_outputs
    # lattice cell half-diagonals; the Lipschitz gap between lattice points
    radius = 0.5 * np.sqrt(np.sum(((bhi - blo) / (n_per - 1)) ** 2, axis=1))
    if d > 1:
        step = max(1, _CHUNK_ELEMENTS // ((K + t) * K * n + K * t * d))
        offsets = (U.T[:, :, None] - U.T[:, None, :]) ** 2
    else:
        step = max(1, _CHUNK_ELEMENTS // ((K + t) * n * 4))
    out_lo = np.empty((N, n))
    out_hi = np.empty((N, n))
    for s in range(0, N, step):
        lo_c, hi_c = blo[s : s + step], bhi[s : s + step]
        c = lo_c.shape[0]
        E = lo_c[:, None, :] + (hi_c - lo_c)[:, None, :] * U[None, :, :]
        mu, sd = ctx.plain(E.reshape(c * K, d))
        mu = mu.reshape(c, K, n)
        sd = sd.reshape(c, K, 1)
        Pu, Pl = mu + ctx.B * sd, mu - ctx.B * sd
        if t:
            A = ctx.anchors
            inside = np.all((A[None] >= lo_c[:, None] - INSIDE_TOL) & (A[None] <= hi_c[:, None] + INSIDE_TOL), axis=2)
        else:
            inside = np.zeros((c, 0), dtype=bool)
        if ctx.envelope == "plain":
            r = ctx.L * radius[s : s + step, None]
            lo_v, hi_v = Pl.min(axis=1) - r, Pu.max(axis=1) + r
        elif d == 1:
            lo_v, hi_v = _extremes_1d(ctx, E[:, :, 0], Pu, Pl, inside)
        else:
            lo_v, hi_v = _extremes_nd(ctx, E, Pu, Pl, inside, radius[s : s + step], hi_c - lo_c, offsets)
        out_lo[s : s + step] = lo_v
        out_hi[s : s + step] = hi_v
    return out_lo, out_hi


@dataclass(frozen=True, eq=False)
class Propagation:
    """Batched propagation result.

    ``regions[i]`` is the pair ``(lo, hi)`` of arrays ``(N, d_{i+2})`` bounding
    the output of layer ``i`` (so ``regions[i]`` is the box for the input of
    layer ``i + 1``); the last entry bounds the scalar output.
    """

    ucb: np.ndarray
    lcb: np.ndarray
    regions: list


def propagate(contexts, X, G: int = 64, box_cap: int = 4096) -> Propagation:
    """UCB and LCB of the network output for every row of X.

    ``contexts[i]`` is the envelope context of layer ``i``.  The first layer is
    evaluated at the point itself; later layers are bounded over the box
    produced by the previous layer.
    """
    contexts = list(contexts)
    if not contexts:
        raise ValueError("at least one layer is required")
    X = as_points(X, contexts[0].dim)
    hi, lo = _envelopes(contexts[0], X)
    regions = [(lo, hi)]
    for ctx in contexts[1:]:
        if ctx.dim != hi.shape[1]:
            raise ValueError(f"layer expects inputs of dimension {ctx.dim}, region has {hi.shape[1]}")
        lo, hi = _region_extremes(ctx, lo, hi, G, box_cap)
        regions.append((lo, hi))
    if hi.shape[1] != 1:
        raise ValueError("the last layer must be scalar valued")
    return Propagation(hi[:, 0], lo[:, 0], regions)


def _single_propagation(contexts, x, G, box_cap):
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    p = propagate(contexts, x, G, box_cap)
    boxes = [Box(lo[0], hi[0]) for lo, hi in p.regions[:-1]]
    return boxes, float(p.ucb[0]), float(p.lcb[0])


def propagate_chain(contexts, x, G: int = 64, box_cap: int = 4096):
    """Regions as intervals and the UCB of a chain at a single input x."""
    for ctx in contexts[1:]:
        if ctx.dim != 1:
            raise ValueError("chain layers after the first must have scalar inputs")
    boxes, ucb, _ = _single_propagation(contexts, x, G, box_cap)
    return [b.intervals[0] for b in boxes], ucb


def propagate_multi(contexts, x, G: int = 64, box_cap: int = 4096):
    """Box regions and the UCB of a multi-output chain at a single input x."""
    boxes, ucb, _ = _single_propagation(contexts, x, G, box_cap)
    return boxes, ucb


def propagate_ffn(contexts, x, G: int = 64, box_cap: int = 4096):
    """Product-box regions and the UCB of a feed-forward network at x."""
    boxes, ucb, _ = _single_propagation(contexts, x, G, box_cap)
    return boxes, ucb
