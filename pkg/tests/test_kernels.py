import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_bandits.kernels import (
    Expansion,
    KernelSpec,
    gram_matrix,
    kernel_eval,
    kernel_matrix,
    matern,
    rkhs_norm,
)

# Oracle values below were computed once with mpmath at 30 digits from the
# closed forms / Bessel representation and frozen here.
MATERN_AT_LENGTHSCALE = {
    0.5: 0.36787944117144232,  # exp(-1)
    1.5: 0.48335772459650765,  # (1 + sqrt3) exp(-sqrt3)
    2.5: 0.52399410883182031,  # (1 + sqrt5 + 5/3) exp(-sqrt5)
    1.0: 0.44434252363223604,  # sqrt2 K_1(sqrt2)
}


@pytest.mark.parametrize("nu", sorted(MATERN_AT_LENGTHSCALE))
def test_matern_matches_oracle_at_one_lengthscale(nu):
    assert matern(0.2, nu, 0.2) == pytest.approx(MATERN_AT_LENGTHSCALE[nu], rel=1e-12)


def test_matern_bessel_path_fractional_nu():
    # nu = 3/4 at r = 0.3, l = 0.2 (mpmath oracle)
    assert matern(0.3, 0.75, 0.2) == pytest.approx(0.24165852992258421, rel=1e-10)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_bessel_path_agrees_with_closed_forms(nu):
    r = np.linspace(0.0, 2.0, 41)
    near = matern(r, nu + 1e-7, 0.3)
    assert np.max(np.abs(near - matern(r, nu, 0.3))) < 1e-6


def test_matern_at_zero_and_far_away():
    for nu in (0.5, 1.0, 1.5, 2.5, 3.7):
        assert matern(0.0, nu, 0.2) == 1.0
        assert 0.0 <= matern(1e4, nu, 0.2) < 1e-100


@settings(max_examples=60, deadline=None)
@given(nu=st.sampled_from([0.5, 0.8, 1.5, 2.0, 2.5]),
       r=st.lists(st.floats(0.0, 5.0), min_size=2, max_size=20))
def test_matern_is_monotone_and_bounded(nu, r):
    r = np.sort(np.asarray(r))
    k = matern(r, nu, 0.4)
    assert np.all(k <= 1.0) and np.all(k >= 0.0)
    assert np.all(np.diff(k) <= 1e-15)


def test_kernel_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        KernelSpec(nu=0.0)
    with pytest.raises(ValueError):
        KernelSpec(lengthscale=-1.0)
    with pytest.raises(ValueError):
        KernelSpec(family="rbf")
    spec = KernelSpec(2.5, 0.3)
    assert KernelSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_kernel_eval_and_matrix_consistent():
    spec = KernelSpec(1.5, 0.2)
    rng = np.random.default_rng(1)
    X, Y = rng.random((5, 2)), rng.random((4, 2))
    K = kernel_matrix(spec, X, Y)
    assert K.shape == (5, 4)
    assert K[2, 3] == pytest.approx(kernel_eval(spec, X[2], Y[3]), rel=1e-14)
    assert kernel_eval(spec, X[0], X[0]) == 1.0
    with pytest.raises(ValueError):
        kernel_eval(spec, [0.1], [0.1, 0.2])


def test_gram_matrix_symmetric_psd_unit_diagonal():
    spec = KernelSpec(1.5, 0.2)
    P = np.random.default_rng(2).random((30, 3))
    K = gram_matrix(spec, P)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    assert np.linalg.eigvalsh(K).min() > -1e-12


def test_rkhs_norm_single_and_pair():
    spec = KernelSpec(0.5, 1.0)
    assert rkhs_norm(Expansion([[0.3]], [-2.0], spec)) == pytest.approx(2.0)
    # centers 0 and 0.5: a^T K a with a = (1, 1) and k = exp(-0.5)
    f = Expansion([[0.0], [0.5]], [1.0, 1.0], spec)
    assert rkhs_norm(f) == pytest.approx(np.sqrt(2.0 + 2.0 * np.exp(-0.5)), rel=1e-14)
    assert rkhs_norm(Expansion.zero(2, spec)) == 0.0


def test_expansion_evaluation_scaling_and_serialization():
    spec = KernelSpec(1.5, 0.2)
    f = Expansion(np.array([[0.1, 0.2], [0.7, 0.4]]), np.array([1.5, -0.5]), spec)
    Z = np.array([[0.1, 0.2], [0.5, 0.5]])
    expect = [1.5 + -0.5 * kernel_eval(spec, Z[0], f.centers[1]),
              1.5 * kernel_eval(spec, Z[1], f.centers[0]) - 0.5 * kernel_eval(spec, Z[1], f.centers[1])]
    assert np.allclose(f(Z), expect, rtol=0, atol=1e-15)
    assert rkhs_norm(f.scaled(3.0)) == pytest.approx(3.0 * rkhs_norm(f))
    g = Expansion.from_dict(json.loads(json.dumps(f.to_dict())), spec, 2)
    assert np.array_equal(g.centers, f.centers) and np.array_equal(g.coeffs, f.coeffs)
    with pytest.raises(ValueError):
        Expansion([[0.0], [1.0]], [1.0], spec)
    assert np.array_equal(Expansion.zero(1, spec)(np.zeros((3, 1))), np.zeros(3))


def test_general_nu_near_zero_is_accurate_and_monotone():
    # mpmath oracle (40 digits) for nu = 0.8, r = 1e-3, l = 0.2
    assert matern(1e-3, 0.8, 0.2) == pytest.approx(0.99955709176824993, rel=1e-14)
    r = np.logspace(-300, 0, 20001)
    for nu in (0.3, 0.8, 1.3, 2.0, 3.7):
        k = matern(r, nu, 0.4)
        assert np.all(np.diff(k) <= 1e-15) and k.max() <= 1.0
