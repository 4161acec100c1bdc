import json

import numpy as np
import pytest

from cascade_bandits.kernels import Expansion, KernelSpec, rkhs_norm
from cascade_bandits.networks import (
    Bump,
    InfeasibleError,
    NetworkInstance,
    build_hard_instance,
    bump_value,
    check_u_utilde,
    dumps_instance,
    estimate_lipschitz,
    evaluate,
    family_centers,
    hard_family,
    instance_from_dict,
    lattice,
    layer_range,
    load_instance,
    needle_expansion,
    needle_lipschitz,
    needle_value,
    normalize_structure,
    save_instance,
    select_u_utilde,
    solve_eps1,
    synthesize_network,
)

SPEC = KernelSpec(1.5, 0.2)
HARD_SPEC = KernelSpec(1.5, 0.2)


# lattices and bumps -----------------------------------------------------------------


def test_lattice_order_and_degenerate_axis():
    assert np.allclose(lattice([0.0], [1.0], 5)[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    P = lattice([0.0, 0.0], [1.0, 1.0], 3)
    assert P.shape == (9, 2)
    assert np.allclose(P[:4], [[0, 0], [0, 0.5], [0, 1], [0.5, 0]])
    assert lattice([0.0, 2.0], [1.0, 2.0], 4).shape == (4, 2)


def test_bump_height_shape_and_support():
    c = np.array([0.3, 0.6])
    assert bump_value(c, 1.0, 0.1, c) == pytest.approx(2.0)
    # |z - c|^2 / w^2 = 1/2 gives 2 e exp(-2) = 2/e (frozen: 0.7357588823428847)
    z = c + np.array([0.1 / np.sqrt(2.0), 0.0])
    assert bump_value(z, 1.0, 0.1, c) == pytest.approx(0.7357588823428847, rel=1e-12)
    ring = c + 0.1 * np.array([[1.0, 0.0], [0.0, -1.2], [0.9, 0.9]])
    assert np.all(bump_value(ring, 1.0, 0.1, c) == 0.0)
    with pytest.raises(ValueError):
        bump_value(c, 1.0, 0.0, c)


def test_bump_lipschitz_bounds_finite_differences():
    b = Bump(np.array([0.5]), 0.3, 0.05)
    x = np.linspace(0.4, 0.6, 20001)[:, None]
    slopes = np.abs(np.diff(b(x))) / np.diff(x[:, 0])
    assert slopes.max() <= b.lipschitz()
    assert slopes.max() >= 0.99 * b.lipschitz()


# networks ---------------------------------------------------------------------------


def test_normalize_structure_aliases():
    assert normalize_structure("feed-forward") == "ffn"
    assert normalize_structure("Multi-Output") == "multi"
    with pytest.raises(ValueError):
        normalize_structure("tree")


def test_network_validation():
    f = Expansion([[0.5]], [1.0], SPEC)
    box = ((np.zeros(1), np.ones(1)),)
    with pytest.raises(ValueError):
        NetworkInstance("chain", (1, 2), ((f, f),), 1.0, 1.0, box, SPEC)
    with pytest.raises(ValueError):
        NetworkInstance("chain", (1, 1, 1), ((f,),), 1.0, 1.0, box, SPEC)
    net = NetworkInstance("chain", (1, 1), ((f,),), 1.0, 1.0, box, SPEC)
    inter, y = evaluate(net, [0.5])
    assert inter == [] and y == pytest.approx(1.0)


@pytest.mark.parametrize("structure,dims", [("chain", (1, 1, 1)), ("multi", (1, 2, 1)), ("ffn", (2, 2, 1))])
def test_synthesized_networks_respect_norm_and_lipschitz(structure, dims):
    net = synthesize_network(3, structure, dims, SPEC, 3.0)
    assert net.dims == dims
    norms = [[rkhs_norm(f) for f in layer] for layer in net.layers]
    if structure == "multi":
        assert all(np.sqrt(sum(n * n for n in layer)) <= 3.0 + 1e-9 for layer in norms)
    else:
        assert all(n <= 3.0 + 1e-9 for layer in norms for n in layer)
    for i in range(net.m):
        lo, hi = net.layer_domains[i]
        assert net.L >= estimate_lipschitz(list(net.layers[i]), (lo, hi), 64)
    X = np.random.default_rng(0).random((50, dims[0]))
    outs = net.forward(X)
    for i in range(1, net.m):
        lo, hi = net.layer_domains[i]
        assert np.all(outs[i] >= lo - 1e-12) and np.all(outs[i] <= hi + 1e-12)


def test_synthesis_is_deterministic():
    a = synthesize_network(7, "chain", (1, 1, 1), SPEC, 3.0)
    b = synthesize_network(7, "chain", (1, 1, 1), SPEC, 3.0)
    c = synthesize_network(8, "chain", (1, 1, 1), SPEC, 3.0)
    assert dumps_instance(a) == dumps_instance(b) != dumps_instance(c)


def test_estimate_lipschitz_of_known_function():
    class Linear:
        dim = 2

        def __call__(self, Z):
            return np.asarray(Z) @ np.array([3.0, 4.0])

    assert estimate_lipschitz(Linear(), (np.zeros(2), np.ones(2)), 16) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        estimate_lipschitz(Linear(), (np.zeros(2), np.ones(2)), 8)


def test_layer_range_contains_sampled_outputs():
    net = synthesize_network(2, "multi", (1, 2, 1), SPEC, 3.0)
    lo, hi = layer_range(net, 0, pad=False)
    out = net.layer_output(0, np.random.default_rng(1).random((200, 1)))
    assert np.all(out >= lo - 1e-3) and np.all(out <= hi + 1e-3)


def test_instance_round_trip_is_byte_identical(tmp_path):
    net = synthesize_network(11, "ffn", (1, 2, 1), SPEC, 3.0)
    p = save_instance(net, tmp_path / "a.json")
    back = load_instance(p)
    assert dumps_instance(back) == p.read_text(encoding="utf-8")
    X = np.random.default_rng(2).random((20, 1))
    assert np.array_equal(back(X), net(X))
    assert dumps_instance(instance_from_dict(json.loads(dumps_instance(net)))) == dumps_instance(net)


# needles and hard instances ---------------------------------------------------------


def test_needle_has_norm_B_and_is_odd():
    f = needle_expansion(HARD_SPEC, 0.28, 5.0)
    assert rkhs_norm(f) == pytest.approx(5.0, abs=1e-9)
    z = np.linspace(-0.5, 0.5, 101)
    assert np.allclose(needle_value(z, 0.28, 5.0, HARD_SPEC), -needle_value(-z, 0.28, 5.0, HARD_SPEC))
    assert needle_value(0.0, 0.28, 5.0, HARD_SPEC) == 0.0
    assert np.allclose(f(z[:, None]), needle_value(z, 0.28, 5.0, HARD_SPEC), atol=1e-14)


def test_feasibility_anchor_from_figure():
    # nu = 3/2, l = 1, B = 5 admits (u, u~) = (0.5, 0.3)
    chk = check_u_utilde(KernelSpec(1.5, 1.0), 5.0, 0.5, 0.3)
    assert chk["feasible"] and chk["violated"] is None
    assert chk["condition_gap"] > 0 and chk["amplification"] > 0


def test_infeasible_pairs_name_their_condition():
    assert check_u_utilde(HARD_SPEC, 5.0, 0.3, 0.4)["violated"] == "0 < u_tilde < u"
    bad = check_u_utilde(HARD_SPEC, 0.05, 0.28, 0.224)
    assert not bad["feasible"] and "kernel gap" in bad["violated"]


def test_selected_needle_pair_and_slope_sandwich():
    u, ut, L, alpha = select_u_utilde(HARD_SPEC, 5.0)
    # recorded output of the fixed (a, b) search grid for nu=3/2, l=0.2, B=5
    assert (u, ut) == pytest.approx((0.28, 0.224))
    lo, hi = needle_lipschitz(HARD_SPEC, u, ut, 5.0)
    assert hi == L and alpha == pytest.approx(lo / hi)
    z = ut * np.arange(1, 1025) / 1024
    ratio = needle_value(z, u, 5.0, HARD_SPEC) / z
    assert 1.0 < alpha * L <= ratio.min() and ratio.max() <= L


def test_solve_eps1_composes_to_two_eps():
    u, ut, _, _ = select_u_utilde(HARD_SPEC, 5.0)
    for m in (2, 3):
        eps1 = solve_eps1(HARD_SPEC, 5.0, u, ut, m, 0.05)
        h = 2.0 * eps1
        for _ in range(m - 1):
            h = needle_value(h, u, 5.0, HARD_SPEC)
        assert h == pytest.approx(0.1, abs=1e-10)
    assert solve_eps1(HARD_SPEC, 5.0, u, ut, 1, 0.05) == 0.05
    with pytest.raises(InfeasibleError, match="admissible range"):
        solve_eps1(HARD_SPEC, 5.0, u, ut, 2, 5.0)


@pytest.mark.parametrize("structure", ["chain", "multi", "ffn"])
def test_hard_instance_peak_support_and_inactive_coordinates(structure):
    inst = build_hard_instance(HARD_SPEC, 5.0, 2, 1, 0.05, structure)
    c = inst.center
    assert inst(c[None])[0] == pytest.approx(0.1, abs=1e-12)
    x = np.linspace(c[0] - inst.w, c[0] + inst.w, 2001)[:, None]
    assert inst(x).max() == pytest.approx(0.1, abs=1e-12)
    outside = np.concatenate([np.linspace(0, c[0] - inst.w, 50), np.linspace(c[0] + inst.w, 1, 50)])
    assert np.max(np.abs(inst(outside[:, None]))) <= 1e-12
    for out in inst.network.forward(x)[1:-1]:
        assert np.all(out[:, 1:] == 0.0)
    assert inst.heights[-1] == pytest.approx(0.1, abs=1e-10)


def test_hard_family_disjoint_and_counted():
    fam = hard_family(HARD_SPEC, 5.0, 2, 1, 0.05)
    n = int(np.floor(1.0 / (2.0 * fam.w)))
    assert fam.M == n == len(family_centers(fam.w, 1))
    C = np.sort(np.array([g.center[0] for g in fam.instances]))
    assert np.min(np.diff(C)) >= 2 * fam.w - 1e-12
    assert C[0] - fam.w >= -1e-12 and C[-1] + fam.w <= 1 + 1e-12
    # each member vanishes on every other member's center (up to BLAS round-off)
    g0 = fam.instances[0]
    assert np.max(np.abs(g0(C[1:, None]))) <= 1e-15


def test_family_centers_grid_arithmetic():
    assert np.allclose(family_centers(0.125, 1)[:, 0], [0.125, 0.375, 0.625, 0.875])
    assert family_centers(0.2, 2).shape == (4, 2)
