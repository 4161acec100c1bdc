import numpy as np
import pytest

from cascade_bandits.confidence import (
    Box,
    EnvelopeContext,
    Interval,
    lcb_env,
    propagate,
    propagate_chain,
    propagate_ffn,
    propagate_multi,
    region_lattice_size,
    ucb_env,
)
from cascade_bandits.gp import Dataset, fit
from cascade_bandits.kernels import Expansion, KernelSpec, rkhs_norm
from cascade_bandits.networks import estimate_lipschitz, synthesize_network

SPEC = KernelSpec(1.5, 0.2)


def _scaled_function(seed, B=2.0, dim=1):
    rng = np.random.default_rng(seed)
    f = Expansion(rng.random((10, dim)), rng.standard_normal(10), SPEC)
    return f.scaled(B / rkhs_norm(f))


def _context(f, X, B=2.0, envelope="anchored"):
    L = 1.05 * estimate_lipschitz(f, (np.full(f.dim, -0.5), np.full(f.dim, 1.5)), 512 if f.dim == 1 else 64)
    return EnvelopeContext(fit(SPEC, Dataset(X, f(X))), B, L, envelope), L


def test_interval_and_box_basics():
    iv = Interval(-1.0, 2.0)
    assert iv.width == 3.0 and 0.5 in iv and 3.0 not in iv
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    b = Box([0.0, 1.0], [2.0, 1.0])
    assert np.allclose(b.widths, [2.0, 0.0])
    assert b.diameter == pytest.approx(2.0)
    assert b.contains([1.0, 1.0]) and not b.contains([1.0, 1.1])
    assert [i.width for i in b.intervals] == [2.0, 0.0]


def test_region_lattice_size():
    assert region_lattice_size(1, 64) == 64
    assert region_lattice_size(2, 64) == 64
    assert region_lattice_size(3, 64) == 16
    assert region_lattice_size(2, 8) == 8
    with pytest.raises(ValueError):
        region_lattice_size(1, 1)


@pytest.mark.parametrize("seed", range(5))
def test_envelopes_contain_function_and_tighten_plain_bounds(seed):
    f = _scaled_function(seed)
    X = np.random.default_rng(100 + seed).random((6, 1))
    ctx, _ = _context(f, X)
    Q = np.linspace(0.0, 1.0, 801)
    up, lo = ucb_env(ctx, Q), lcb_env(ctx, Q)
    v = f(Q)
    assert np.all(v <= up + 1e-6) and np.all(v >= lo - 1e-6)
    mu, s = ctx.plain(Q[:, None])
    assert np.all(up <= mu[:, 0] + 2.0 * s + 1e-15)
    assert np.all(lo >= mu[:, 0] - 2.0 * s - 1e-15)


def test_plain_envelope_is_mean_plus_minus_B_sigma():
    f = _scaled_function(1)
    ctx, _ = _context(f, np.array([[0.2], [0.7]]), envelope="plain")
    Q = np.linspace(0, 1, 11)
    mu, s = ctx.plain(Q[:, None])
    assert np.allclose(ucb_env(ctx, Q), mu[:, 0] + 2.0 * s, rtol=0, atol=0)
    assert ctx.anchors.shape == (0, 1)
    with pytest.raises(ValueError):
        EnvelopeContext(ctx.model, 2.0, 1.0, "tight")


def test_single_point_queries_return_floats():
    f = _scaled_function(2)
    ctx, _ = _context(f, np.array([[0.4]]))
    assert isinstance(ucb_env(ctx, 0.3), float)
    assert ucb_env(ctx, 0.4) >= lcb_env(ctx, 0.4)


@pytest.mark.parametrize("seed", range(3))
def test_chain_regions_contain_true_intermediates(seed):
    net = synthesize_network(seed, "chain", (1, 1, 1), SPEC, 3.0)
    rng = np.random.default_rng(seed)
    X = rng.random((8, 1))
    outs = net.forward(X)
    ctxs = [EnvelopeContext(fit(SPEC, Dataset(outs[i], outs[i + 1][:, 0])), net.B, net.L) for i in range(2)]
    Q = np.linspace(0, 1, 257)[:, None]
    prop = propagate(ctxs, Q, G=64)
    true = net.forward(Q)
    for i, (lo, hi) in enumerate(prop.regions):
        assert np.all(true[i + 1] >= lo - 1e-6) and np.all(true[i + 1] <= hi + 1e-6)
    assert np.all(prop.ucb >= net(Q) - 1e-6)
    regions, ucb = propagate_chain(ctxs, Q[100], G=64)
    assert isinstance(regions[0], Interval) and ucb == pytest.approx(prop.ucb[100])


@pytest.mark.parametrize("structure", ["multi", "ffn"])
def test_vector_regions_contain_true_intermediates(structure):
    net = synthesize_network(4, structure, (1, 2, 1), SPEC, 3.0)
    X = np.random.default_rng(4).random((8, 1))
    outs = net.forward(X)
    B = net.B
    ctxs = [EnvelopeContext(fit(SPEC, Dataset(outs[i], outs[i + 1])), B, net.L) for i in range(2)]
    Q = np.linspace(0, 1, 65)[:, None]
    prop = propagate(ctxs, Q, G=12)
    true = net.forward(Q)
    lo, hi = prop.regions[0]
    assert np.all(true[1] >= lo - 1e-6) and np.all(true[1] <= hi + 1e-6)
    assert np.all(prop.ucb >= net(Q) - 1e-6)
    fn = propagate_multi if structure == "multi" else propagate_ffn
    boxes, ucb = fn(ctxs, Q[10], G=12)
    assert isinstance(boxes[0], Box) and ucb == pytest.approx(prop.ucb[10])


def test_propagation_rejects_dimension_mismatch():
    f = _scaled_function(0)
    ctx, _ = _context(f, np.array([[0.5]]))
    g = Expansion(np.zeros((1, 2)), [1.0], SPEC)
    ctx2 = EnvelopeContext(fit(SPEC, Dataset(np.zeros((1, 2)), g(np.zeros((1, 2))))), 1.0, 1.0)
    with pytest.raises(ValueError):
        propagate([ctx, ctx2], np.array([[0.5]]))
    with pytest.raises(ValueError):
        propagate([], np.array([[0.5]]))
