import warnings

import numpy as np
import pytest

from cascade_bandits.gp import (
    DEFAULT_JITTER,
    FULL_BLOCK_LIMIT,
    INCREMENTAL_THRESHOLD,
    MAX_JITTER,
    ConditioningError,
    ConsistencyError,
    Dataset,
    ScaleError,
    _factorize,
    add_observation,
    confidence_interval,
    fit,
    multi_posterior,
    posterior_mean,
    posterior_std,
)
from cascade_bandits.kernels import Expansion, KernelSpec, rkhs_norm

SPEC = KernelSpec(1.5, 0.2)


def test_prior_when_empty():
    model = fit(SPEC, Dataset.empty(1))
    assert posterior_mean(model, 0.3) == 0.0
    assert posterior_std(model, 0.3) == 1.0


def test_two_point_exponential_kernel_oracle():
    # nu = 1/2, l = 1, data (0, 1) and (0.5, 0): at x = 0.25
    # mean = e^{-1/4} / (1 + e^{-1/2}), var = (1 - e^{-1/2}) / (1 + e^{-1/2})  (mpmath)
    spec = KernelSpec(0.5, 1.0)
    model = fit(spec, Dataset([[0.0], [0.5]], [1.0, 0.0]))
    assert posterior_mean(model, 0.25) == pytest.approx(0.48477181457010729, abs=1e-9)
    assert posterior_std(model, 0.25) ** 2 == pytest.approx(0.24491866240370913, abs=1e-9)


def test_interpolates_training_data():
    rng = np.random.default_rng(0)
    X = rng.random((60, 1))
    y = np.sin(6 * X[:, 0])
    model = fit(SPEC, Dataset(X, y))
    mu, sd = model.mean_std(X)
    assert np.max(np.abs(mu - y)) <= 1e-6
    # sigma at data points is at most sqrt(jitter) = 1e-5 for the base jitter
    assert model.jitter == 1e-10
    assert np.max(sd) <= 1e-5


def test_confidence_interval_contains_rkhs_function():
    rng = np.random.default_rng(3)
    f = Expansion(rng.random((12, 1)), rng.standard_normal(12), SPEC)
    f = f.scaled(2.0 / rkhs_norm(f))
    X = rng.random((6, 1))
    model = fit(SPEC, Dataset(X, f(X)))
    Q = np.linspace(0, 1, 501)
    lo, hi = confidence_interval(model, Q, B=2.0)
    v = f(Q)
    assert np.all(v >= lo - 1e-6) and np.all(v <= hi + 1e-6)
    with pytest.raises(ValueError):
        confidence_interval(model, Q, B=0.0)


def test_variance_is_clipped_to_unit_interval():
    model = fit(SPEC, Dataset([[0.2], [0.21], [0.9]], [0.0, 0.1, 0.0]))
    s = model.std(np.linspace(-1, 2, 301))
    assert np.all(s >= 0.0) and np.all(s <= 1.0)


def test_duplicates_are_merged_and_conflicts_raise():
    d = Dataset([[0.1], [0.1], [0.4]], [1.0, 1.0, 2.0]).deduplicated()
    assert len(d) == 2
    with pytest.raises(ConsistencyError):
        fit(SPEC, Dataset([[0.1], [0.1]], [1.0, 2.0]))
    model = fit(SPEC, Dataset([[0.1]], [1.0]))
    assert add_observation(model, [0.1], 1.0) is model
    with pytest.raises(ConsistencyError):
        add_observation(model, [0.1], 1.5)


def _with_min_eig(lam, n=6, seed=0):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    eig = np.linspace(1.0, 2.0, n)
    eig[0] = lam
    return (Q * eig) @ Q.T


def test_jitter_ladder_escalates_then_gives_up():
    # smallest eigenvalue -1e-8: 1e-10 and 1e-9 fail, 1e-7 is the first rung that works
    L, used = _factorize(_with_min_eig(-1e-8), DEFAULT_JITTER)
    assert used == pytest.approx(1e-7)
    assert np.all(np.diag(L) > 0)
    with pytest.raises(ConditioningError) as info:
        _factorize(_with_min_eig(-1e-5), DEFAULT_JITTER)
    assert info.value.ladder[0] == DEFAULT_JITTER and info.value.ladder[-1] == MAX_JITTER


def test_well_conditioned_data_keeps_base_jitter():
    X = np.array([[0.5], [0.5 + 1e-9], [0.5 + 2e-9]])
    assert fit(KernelSpec(2.5, 1.0), Dataset(X, np.zeros(3))).jitter == DEFAULT_JITTER


def test_incremental_update_matches_refit():
    rng = np.random.default_rng(5)
    X = rng.random((INCREMENTAL_THRESHOLD + 10, 1))
    y = np.cos(4 * X[:, 0])
    model = fit(SPEC, Dataset.empty(1))
    for x, v in zip(X, y):
        model = add_observation(model, x, v)
    ref = fit(SPEC, Dataset(X, y))
    Q = np.linspace(0, 1, 200)[:, None]
    assert np.max(np.abs(model.mean(Q) - ref.mean(Q))) < 1e-6
    assert np.max(np.abs(model.std(Q) - ref.std(Q))) < 1e-6


def test_vector_valued_model_shares_factor():
    rng = np.random.default_rng(6)
    X = rng.random((5, 1))
    Y = rng.standard_normal((5, 2))
    vec = fit(SPEC, Dataset(X, Y))
    Q = rng.random((7, 1))
    for j in range(2):
        scalar = fit(SPEC, Dataset(X, Y[:, j]))
        assert np.allclose(vec.mean(Q)[:, j], scalar.mean(Q), atol=1e-12)
        assert np.array_equal(vec.coordinate(j).std(Q), vec.std(Q))
    assert np.allclose(vec.std(Q), fit(SPEC, Dataset(X, Y[:, 0])).std(Q), atol=1e-14)


def test_kronecker_equals_full_block():
    rng = np.random.default_rng(7)
    for _ in range(5):
        data = Dataset(rng.random((4, 1)), rng.standard_normal((4, 3)))
        x = rng.random(1)
        m1, v1 = multi_posterior(SPEC, data, x, "kronecker")
        m2, v2 = multi_posterior(SPEC, data, x, "full_block")
        assert np.max(np.abs(v1 - v2)) <= 1e-8
        assert np.max(np.abs(m1 - m2)) <= 1e-8
        assert np.allclose(v1, v1[0, 0] * np.eye(3))


def test_full_block_size_limit():
    n = 2
    t = FULL_BLOCK_LIMIT // n + 1
    data = Dataset(np.linspace(0, 1, t)[:, None], np.zeros((t, n)))
    with pytest.raises(ScaleError):
        multi_posterior(SPEC, data, [0.5], "full_block")
    with pytest.raises(ValueError):
        multi_posterior(SPEC, data, [0.5], "dense")


def test_no_numerical_warnings_on_regular_data():
    rng = np.random.default_rng(8)
    X = rng.random((40, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit(SPEC, Dataset(X, X.sum(axis=1))).std(rng.random((100, 2)))
