"""GPN-UCB, non-adaptive grid sampling and a black-box GP-UCB baseline.

All algorithms work on a fixed candidate lattice of the input domain,
``linspace(0, 1, n)^d`` in lexicographic order; ties in every argmax go to
the first (lexicographically smallest) candidate.  Per-step regret is measured
against the best candidate, so r_t >= 0 by construction.
"""

from __future__ import annotations

import time
import weakref
from dataclasses import dataclass, field

import numpy as np

from .confidence import ENVELOPES, EnvelopeContext, propagate
from .gp import DEFAULT_JITTER, Dataset, add_observation, fit
from .networks import NetworkInstance, lattice

__all__ = [
    "ALGORITHMS",
    "RunConfig",
    "Trace",
    "candidate_grid",
    "grid_points",
    "run",
    "run_gpn_ucb",
    "run_blackbox_ucb",
    "run_nonadaptive",
    "composite_mean",
    "projected_composite_mean",
    "layer_contexts",
    "oracle_points",
    "oracle_value",
]

ALGORITHMS = ("gpn_ucb", "nonadaptive", "nonadaptive_projected", "blackbox_ucb")


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by all algorithms.

    ``candidate_grid`` is the number of candidates per input dimension; the
    default (None) means 512 for d=1 and 64 per dimension otherwise.
    """

    T: int = 100
    candidate_grid: int | None = None
    region_grid: int = 64
    envelope: str = "anchored"
    jitter: float = DEFAULT_JITTER
    seed: int = 0
    algo: str = "gpn_ucb"
    inflate_B: float = 1.0
    box_cap: int = 4096

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.candidate_grid is not None and self.candidate_grid < 2:
            raise ValueError("candidate_grid must be at least 2")
        if self.region_grid < 2:
            raise ValueError("region_grid must be at least 2")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"envelope must be one of {ENVELOPES}")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo must be one of {ALGORITHMS}")
        if not self.inflate_B > 0:
            raise ValueError("inflate_B must be positive")

    def grid_size(self, d: int) -> int:
        if self.candidate_grid is not None:
            return self.candidate_grid
        return 512 if d == 1 else 64

    def to_dict(self) -> dict:
        return {
            "T": self.T, "candidate_grid": self.candidate_grid, "region_grid": self.region_grid,
            "envelope": self.envelope, "jitter": self.jitter, "seed": self.seed, "algo": self.algo,
            "inflate_B": self.inflate_B, "box_cap": self.box_cap,
        }


@dataclass
class Trace:
    """Per-step record of a run.

    ``sigma[t, i]`` is the posterior standard deviation of layer ``i`` before
    step t, at the layer input actually reached at step t.  ``validity_gap``
    is min over candidates of UCB(x) - g(x), which is nonnegative whenever
    the UCB is valid on the whole grid.
    """

    algo: str
    m: int
    d: int
    grid_optimum: float
    x: list = field(default_factory=list)
    intermediates: list = field(default_factory=list)
    y: list = field(default_factory=list)
    r: list = field(default_factory=list)
    R: list = field(default_factory=list)
    ucb: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    jitter_max: list = field(default_factory=list)
    min_eig: list = field(default_factory=list)
    validity_gap: list = field(default_factory=list)
    x_star: np.ndarray | None = None
    simple_regret: float | None = None
    incomplete: bool = False
    error: str | None = None
    caveats: list = field(default_factory=list)
    models: list | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.y)

    @property
    def sigma_array(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float).reshape(len(self), -1)

    @property
    def R_T(self) -> float:
        return float(self.R[-1]) if self.R else 0.0

    def append(self, x, inter, y, r, ucb, sigma, wall, jitter_max, min_eig, gap):
        self.x.append(np.asarray(x, dtype=float))
        self.intermediates.append([np.asarray(z, dtype=float) for z in inter])
        self.y.append(float(y))
        self.r.append(float(r))
        self.R.append(float(r) + (self.R[-1] if self.R else 0.0))
        self.ucb.append(float(ucb))
        self.sigma.append([float(s) for s in sigma])
        self.wall_ms.append(float(wall))
        self.jitter_max.append(float(jitter_max))
        self.min_eig.append(float(min_eig))
        self.validity_gap.append(float(gap))


def candidate_grid(d: int, n: int) -> np.ndarray:
    """Lexicographic lattice linspace(0, 1, n)^d."""
    return lattice(np.zeros(d), np.ones(d), n)


def grid_points(d: int, T: int) -> np.ndarray:
    """Cell-centered lattice with n = floor(T^(1/d)) points per dimension."""
    if T < 1:
        raise ValueError("T must be at least 1")
    n = int(np.floor(T ** (1.0 / d) + 1e-9))
    axis = (np.arange(n) + 0.5) / n
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _empty_models(net: NetworkInstance, jitter: float):
    return [fit(net.spec, Dataset.empty(net.dims[i], net.dims[i + 1]), jitter) for i in range(net.m)]


def layer_contexts(models, B: float, L: float, envelope: str):
    return [EnvelopeContext(model, B, L, envelope) for model in models]


def _diagnostics(models):
    jit = max(m.jitter for m in models)
    eig = min(m.min_eig_estimate for m in models)
    return jit, eig


def _ucb_loop(net, cfg, models, layer_inputs, B, L, on_step, trace, C, gC):
    """Shared selection loop; ``layer_inputs`` maps forward outputs to model data."""
    for t in range(cfg.T):
        t0 = time.perf_counter()
        ctxs = layer_contexts(models, B, L, cfg.envelope)
        prop = propagate(ctxs, C, cfg.region_grid, cfg.box_cap)
        k = int(np.argmax(prop.ucb))
        x = C[k]
        outs = net.forward(x[None])
        pairs = layer_inputs(outs)
        sigma = [float(m.std(z[None])[0]) for m, (z, _) in zip(models, pairs)]
        y = float(outs[-1][0, 0])
        jit, eig = _diagnostics(models)
        gap = float(np.min(prop.ucb - gC))
        models[:] = [add_observation(m, z, v) for m, (z, v) in zip(models, pairs)]
        wall = 1e3 * (time.perf_counter() - t0)
        trace.append(x, [o[0] for o in outs[1:-1]], y, trace.grid_optimum - y, prop.ucb[k], sigma,
                     wall, jit, eig, gap)
        trace.models = list(models)
        if on_step is not None:
            on_step(trace)
    return trace


def _guarded(fn, trace, net):
    try:
        fn()
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        trace.incomplete = True
        trace.error = f"{type(exc).__name__}: {exc}"
    if trace.y:
        # sequential runs report their best query, scored against the oracle lattice
        from .metrics import simple_regret  # local import avoids a cycle

        k = int(np.argmax(trace.y))
        trace.x_star = trace.x[k]
        trace.simple_regret = simple_regret(net, trace.x[k], oracle_value(net))
    return trace


def run_gpn_ucb(net: NetworkInstance, cfg: RunConfig, on_step=None) -> Trace:
    """Sequentially query the candidate maximizing the network UCB."""
    C = candidate_grid(net.input_dim, cfg.grid_size(net.input_dim))
    gC = net(C)
    trace = Trace("gpn_ucb", net.m, net.input_dim, float(gC.max()))
    models = _empty_models(net, cfg.jitter)
    B = net.B * cfg.inflate_B

    def pairs(outs):
        return [(outs[i][0], outs[i + 1][0]) for i in range(net.m)]

    return _guarded(lambda: _ucb_loop(net, cfg, models, pairs, B, net.L, on_step, trace, C, gC), trace, net)


def run_blackbox_ucb(net: NetworkInstance, cfg: RunConfig, on_step=None) -> Trace:
    """GP-UCB on x -> y ignoring intermediates.

    The single model uses the network's B and the end-to-end Lipschitz
    constant L^m; for m = 1 this is exactly GPN-UCB.
    """
    C = candidate_grid(net.input_dim, cfg.grid_size(net.input_dim))
    gC = net(C)
    trace = Trace("blackbox_ucb", net.m, net.input_dim, float(gC.max()))
    if net.m > 1:
        trace.caveats.append("B is not a valid norm bound for the composed function")
    models = [fit(net.spec, Dataset.empty(net.input_dim, 1), cfg.jitter)]
    B = net.B * cfg.inflate_B

    def pairs(outs):
        return [(outs[0][0], outs[-1][0])]

    L = net.L**net.m
    return _guarded(lambda: _ucb_loop(net, cfg, models, pairs, B, L, on_step, trace, C, gC), trace, net)


def composite_mean(models, structure: str, X) -> np.ndarray:
    """Posterior means composed layer by layer, evaluated at every row of X.

    Multi-output and feed-forward layers both compose coordinatewise means,
    so ``structure`` only validates dimensions.
    """
    Z = np.asarray(X, dtype=float)
    Z = Z.reshape(-1, models[0].dim)
    for m in models:
        Z = m.mean(Z).reshape(Z.shape[0], -1)
    if Z.shape[1] != 1:
        raise ValueError(f"{structure}: last layer is not scalar valued")
    return Z[:, 0]


def projected_composite_mean(models, structure: str, X, layer_domains) -> np.ndarray:
    """Composite mean with each intermediate mean clamped into the next layer's domain box."""
    Z = np.asarray(X, dtype=float).reshape(-1, models[0].dim)
    for i, m in enumerate(models):
        Z = m.mean(Z).reshape(Z.shape[0], -1)
        if i + 1 < len(models):
            lo, hi = layer_domains[i + 1]
            Z = np.clip(Z, lo, hi)
    if Z.shape[1] != 1:
        raise ValueError(f"{structure}: last layer is not scalar valued")
    return Z[:, 0]


def oracle_points(d: int) -> np.ndarray:
    """Dense evaluation lattice used to approximate max g."""
    n = {1: 8192, 2: 256}.get(d, max(4, int(np.floor(65536 ** (1.0 / d)))))
    return candidate_grid(d, n)


def run_nonadaptive(net: NetworkInstance, cfg: RunConfig, projected: bool = False):
    """Sample the cell-centered grid once and return the composite-mean maximizer.

    Returns ``(x_star, trace)``; the trace holds the batch in lexicographic
    order and its ``simple_regret`` is measured against a dense oracle sweep.
    Without an explicit candidate grid the maximizer is searched on the oracle
    lattice itself, so the reported regret is not floored by grid spacing.
    """
    if cfg.candidate_grid is None:
        C = oracle_points(net.input_dim)
    else:
        C = candidate_grid(net.input_dim, cfg.candidate_grid)
    gC = net(C)
    algo = "nonadaptive_projected" if projected else "nonadaptive"
    trace = Trace(algo, net.m, net.input_dim, float(gC.max()))
    t0 = time.perf_counter()
    try:
        P = grid_points(net.input_dim, cfg.T)
        outs = net.forward(P)
        models = [fit(net.spec, Dataset(outs[i], outs[i + 1]), cfg.jitter) for i in range(net.m)]
        if projected:
            score = projected_composite_mean(models, net.structure, C, net.layer_domains)
        else:
            score = composite_mean(models, net.structure, C)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        trace.incomplete = True
        trace.error = f"{type(exc).__name__}: {exc}"
        return None, trace
    wall = 1e3 * (time.perf_counter() - t0) / len(P)
    trace.models = models
    jit, eig = _diagnostics(models)
    for s in range(len(P)):
        y = float(outs[-1][s, 0])
        trace.append(P[s], [o[s] for o in outs[1:-1]], y, trace.grid_optimum - y, np.nan,
                     [np.nan] * net.m, wall, jit, eig, np.nan)
    k = int(np.argmax(score))
    trace.x_star = C[k]
    from .metrics import simple_regret  # local import avoids a cycle

    trace.simple_regret = simple_regret(net, C[k], oracle_value(net))
    return C[k], trace


_ORACLE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def oracle_value(net: NetworkInstance) -> float:
    """max g over the dense oracle lattice, cached per instance object."""
    hit = _ORACLE_CACHE.get(net)
    if hit is not None:
        return hit
    P = oracle_points(net.input_dim)
    best = -np.inf
    for s in range(0, len(P), 65536):
        best = max(best, float(net(P[s : s + 65536]).max()))
    _ORACLE_CACHE[net] = best
    return best


def run(net: NetworkInstance, cfg: RunConfig, on_step=None) -> Trace:
    """Dispatch on ``cfg.algo``."""
    if cfg.algo == "gpn_ucb":
        return run_gpn_ucb(net, cfg, on_step)
    if cfg.algo == "blackbox_ucb":
        return run_blackbox_ucb(net, cfg, on_step)
    _, trace = run_nonadaptive(net, cfg, projected=cfg.algo == "nonadaptive_projected")
    if on_step is not None:
        on_step(trace)
    return trace
