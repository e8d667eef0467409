import warnings

import numpy as np
import pytest
from scipy import stats

from stochmix.errors import ContractViolation
from stochmix.hmc import (Chain, DiffDensity, DualAveraging, HmcConfig, _kinetic, _leapfrog,
                          adapt_step_size, hmc_step, leapfrog, run_chain)
from stochmix.psi import PsiDensity, PsiParams
from stochmix.targets import make_target


def quad_density(prec):
    prec = np.asarray(prec, dtype=float)
    return DiffDensity(prec.size, lambda q: (-0.5 * float(q @ (prec * q)), -prec * q))


STD2 = quad_density([1.0, 1.0])


def test_leapfrog_reversible():
    dens = DiffDensity.from_target(make_target("banana", {}))
    mass = np.array([1.0, 2.0])
    q0, p0 = np.array([0.4, -0.3]), np.array([1.1, 0.7])
    q, p = q0, p0
    for _ in range(25):
        q, p = leapfrog(q, p, 0.05, mass, dens)
    p = -p
    for _ in range(25):
        q, p = leapfrog(q, p, 0.05, mass, dens)
    np.testing.assert_allclose(q, q0, atol=1e-10)
    np.testing.assert_allclose(-p, p0, atol=1e-10)


def _energy_error(step, n_total_time=1.0):
    dens = quad_density([1.0, 4.0])
    inv_mass = np.ones(2)
    q, p = np.array([1.0, 0.5]), np.array([0.3, -0.8])
    h0 = -dens.value(q) + _kinetic(p, inv_mass)
    g = dens.gradient(q)
    for _ in range(int(round(n_total_time / step))):
        q, p, lp, g = _leapfrog(q, p, g, step, inv_mass, dens.value_and_grad)
    return abs(-lp + _kinetic(p, inv_mass) - h0)


def test_leapfrog_second_order():
    e1, e2 = _energy_error(0.02), _energy_error(0.01)
    assert 3.5 < e1 / e2 < 4.5


def test_leapfrog_free_particle():
    dens = DiffDensity(2, lambda q: (0.0, np.zeros(2)))
    q, p = leapfrog(np.array([1.0, 2.0]), np.array([0.5, -1.0]), 0.1, np.array([2.0, 0.5]), dens)
    np.testing.assert_allclose(q, [1.0 + 0.1 * 0.25, 2.0 - 0.1 * 2.0])
    np.testing.assert_array_equal(p, [0.5, -1.0])


def test_tiny_steps_always_accept(rng):
    cfg = HmcConfig(step_size=1e-4, max_leapfrog=5)
    q = np.array([0.3, -0.2])
    acc = []
    for _ in range(200):
        q, a, d = hmc_step(q, cfg, STD2, rng)
        acc.append(a)
        assert not d
    assert np.mean(acc) > 0.99


def test_hmc_step_calls_hook_once_per_transition(rng):
    calls = []
    dens = DiffDensity(2, STD2.value_and_grad, lambda r: calls.append(1))
    for _ in range(7):
        hmc_step(np.zeros(2), HmcConfig(max_leapfrog=8), dens, rng)
    assert len(calls) == 7


def test_divergence_is_rejected(rng):
    q0 = np.array([1.0, 1.0])
    q, acc, div = hmc_step(q0, HmcConfig(step_size=50.0, max_leapfrog=10), quad_density([100.0, 100.0]), rng)
    assert div and not acc
    np.testing.assert_array_equal(q, q0)


def test_normal_2d_moments():
    chain = run_chain(STD2, HmcConfig(warmup=500), np.zeros(2), 20_000, np.random.default_rng(11))
    assert np.all(np.abs(chain.draws.mean(axis=0)) < 0.05)
    assert np.all(np.abs(chain.draws.var(axis=0) - 1.0) < 0.1)


def test_ks_against_direct_draws():
    rng = np.random.default_rng(21)
    chain = run_chain(quad_density([1.0]), HmcConfig(warmup=500), np.zeros(1), 20_000, rng)
    direct = rng.standard_normal(20_000)
    res = stats.ks_2samp(chain.draws[:, 0], direct)
    crit = 1.628 * np.sqrt(2 / 20_000)  # two-sample KS, alpha = 0.01
    assert res.statistic < crit


def test_seeded_replay():
    a = run_chain(STD2, HmcConfig(warmup=50), np.ones(2), 100, np.random.default_rng(3), seed=3)
    b = run_chain(STD2, HmcConfig(warmup=50), np.ones(2), 100, np.random.default_rng(3), seed=3)
    np.testing.assert_array_equal(a.draws, b.draws)
    assert a.step_size_final == b.step_size_final


def test_dual_averaging_fixed_point():
    st = DualAveraging.start(0.3, 0.8)
    steps = []
    for _ in range(200):
        st, s = adapt_step_size(st, 0.8)
        steps.append(s)
    assert steps[-1] == pytest.approx(steps[-2]) and steps[-1] == pytest.approx(3.0)


def test_dual_averaging_shrinks_on_rejection():
    st = DualAveraging.start(0.3, 0.8)
    steps = []
    for _ in range(100):
        st, s = adapt_step_size(st, 0.0)
        steps.append(s)
    assert np.all(np.diff(steps) < 0)
    with pytest.raises(ContractViolation):
        adapt_step_size(st, 1.5)


def test_adapted_acceptance_near_target():
    chain = run_chain(quad_density([1.0]), HmcConfig(warmup=1000, target_accept=0.8), np.zeros(1),
                      4000, np.random.default_rng(8))
    assert abs(chain.accept_prob_mean - 0.8) < 0.05


def test_single_draw():
    chain = run_chain(STD2, HmcConfig(warmup=10), np.zeros(2), 1, np.random.default_rng(0))
    assert isinstance(chain, Chain) and chain.draws.shape == (1, 2)
    assert 0.0 <= chain.accept_rate <= 1.0
    with pytest.raises(ContractViolation):
        run_chain(STD2, HmcConfig(), np.zeros(2), 0, np.random.default_rng(0))


def test_banana_y_mean_positive():
    chain = run_chain(make_target("banana", {}), HmcConfig(warmup=500), np.zeros(2), 4000,
                      np.random.default_rng(2))
    # E[y] = E[x^2] / 4 = 0.5
    assert chain.draws[:, 1].mean() > 0
    assert chain.draws[:, 1].mean() == pytest.approx(0.5, abs=0.2)


def test_psi_concentrates_with_lambda():
    target = make_target("gaussian", {"mean": [0.0], "sd": [1.0]})
    spreads = {}
    for lam in (25.0, 100.0):
        dens = PsiDensity(target, PsiParams(lam=lam, K=256))
        chain = run_chain(dens, HmcConfig(warmup=300, mass_diag=np.array([lam])),
                          np.array([0.5, 0.0]), 1500, np.random.default_rng(int(lam)))
        assert np.all(np.abs(chain.draws.mean(axis=0)) < 0.1)
        spreads[lam] = chain.draws[:, 0].std()
    # spread ~ 1/sqrt(lambda): quadrupling lambda roughly halves it
    assert 1.5 < spreads[25.0] / spreads[100.0] < 2.7


def test_lambda_one_components_narrow():
    target = make_target("laplace_mixture", {})
    dens = PsiDensity(target, PsiParams(lam=1.0, K=32))
    chain = run_chain(dens, HmcConfig(warmup=200), np.array([0.0, 0.0]), 3000, np.random.default_rng(4))
    sig = np.exp(chain.draws[:, 1])
    meds = [np.median(sig[: n]) for n in (300, 1000, 3000)]
    assert meds[0] > meds[1] > meds[2]


def test_divergence_warning():
    cfg = HmcConfig(step_size=100.0, warmup=0, max_leapfrog=4)
    with pytest.warns(RuntimeWarning):
        chain = run_chain(quad_density([100.0]), cfg, np.ones(1), 50, np.random.default_rng(0))
    assert chain.warning and chain.divergences > 5


def test_config_contracts():
    for kw in ({"step_size": 0.0}, {"max_leapfrog": 0}, {"target_accept": 1.0}, {"jitter": 2.0},
               {"mass_diag": np.array([-1.0])}):
        with pytest.raises(ContractViolation):
            HmcConfig(**kw)
