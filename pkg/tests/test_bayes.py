import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdopt.bayes import (
    HypothesisEnsemble,
    average_risk,
    coherent_ml_certificate,
    helstrom_binary,
    optimality_check,
    optimize_min_error,
    posterior_risk_operators,
    risk_gap,
)
from qdopt.fock import TruncationError, coherent_amplitudes
from qdopt.gaussian import displaced_thermal_state
from qdopt.measurement import DiscretePOVM


def projectors(betas, n_max):
    return [np.outer(v, v.conj()) for v in coherent_amplitudes(betas, n_max)]


def pure_helstrom(p0, overlap_sq):
    return 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * p0 * (1.0 - p0) * overlap_sq))


def sdp_min_error(states, priors):
    cp = pytest.importorskip("cvxpy")
    d = states[0].shape[0]
    pis = [cp.Variable((d, d), hermitian=True) for _ in states]
    success = sum(p * cp.real(cp.trace(rho @ pi)) for p, rho, pi in zip(priors, states, pis))
    cons = [pi >> 0 for pi in pis] + [sum(pis) == np.eye(d)]
    prob = cp.Problem(cp.Maximize(success), cons)
    prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200000)
    return 1.0 - prob.value


def test_ensemble_validation():
    rho = np.diag([1.0, 0.0])
    with pytest.raises(ValueError):
        HypothesisEnsemble((rho, rho), np.array([0.7, 0.7]), -np.eye(2))
    with pytest.raises(ValueError):
        HypothesisEnsemble((rho, np.eye(3) / 3), np.array([0.5, 0.5]), -np.eye(2))
    with pytest.raises(ValueError):
        HypothesisEnsemble((rho,), np.array([1.0]), np.array([1.0]))


def test_ensemble_round_trip():
    ens = HypothesisEnsemble.min_error(projectors([0.3j, -0.2], 5), [0.4, 0.6])
    back = HypothesisEnsemble.from_dict(ens.to_dict())
    assert back.is_min_error()
    for a, b in zip(ens.states, back.states):
        np.testing.assert_allclose(a, b)


def test_posterior_risk_operators_min_error():
    states = projectors([0.5, -0.5], 6)
    ens = HypothesisEnsemble.min_error(states, [0.3, 0.7])
    R = posterior_risk_operators(ens)
    np.testing.assert_allclose(R[0], -0.3 * states[0], atol=1e-15)
    np.testing.assert_allclose(R[1], -0.7 * states[1], atol=1e-15)


@given(st.floats(0.05, 1.5), st.floats(0.1, 0.9))
def test_helstrom_pure_closed_form(alpha, p0):
    rho0, rho1 = projectors([alpha, -alpha], 40)
    res = helstrom_binary(p0, rho0, 1.0 - p0, rho1)
    assert res.error_probability == pytest.approx(pure_helstrom(p0, math.exp(-4 * alpha**2)), abs=1e-10)
    assert res.direct_error_probability == pytest.approx(res.error_probability, abs=1e-10)


def test_helstrom_orthogonal_and_identical():
    e0, e1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    assert helstrom_binary(0.5, e0, 0.5, e1).error_probability == pytest.approx(0.0, abs=1e-15)
    assert helstrom_binary(0.3, e0, 0.7, e0).error_probability == pytest.approx(0.3, abs=1e-15)


def test_helstrom_warns_on_unnormalized_states():
    with pytest.warns(RuntimeWarning):
        helstrom_binary(0.5, np.diag([0.5, 0.0]), 0.5, np.diag([0.0, 1.0]))


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
def test_optimizer_matches_helstrom_and_is_certified(alpha):
    rho0, rho1 = projectors([alpha, -alpha], 29)
    ens = HypothesisEnsemble.min_error([rho0, rho1], [0.5, 0.5])
    opt = optimize_min_error(ens)
    hel = helstrom_binary(0.5, rho0, 0.5, rho1)
    assert abs(opt.error_probability - hel.error_probability) <= 1e-6
    assert opt.report.optimal
    assert optimality_check(hel.povm, ens).optimal


def test_optimizer_mixed_states_against_helstrom():
    rho0 = displaced_thermal_state(0.7, 1.5, 40)
    rho1 = displaced_thermal_state(-0.7, 1.5, 40)
    ens = HypothesisEnsemble.min_error([rho0, rho1], [0.4, 0.6])
    opt = optimize_min_error(ens, max_iters=5000)
    hel = helstrom_binary(0.4, rho0, 0.6, rho1)
    assert abs(opt.error_probability - hel.error_probability) <= 1e-6


def test_optimizer_ternary_against_sdp():
    betas = [0.8 * np.exp(2j * np.pi * k / 3) for k in range(3)]
    states = [displaced_thermal_state(b, 1.2, 7) for b in betas]
    states = [s / np.trace(s).real for s in states]
    priors = [0.2, 0.3, 0.5]
    opt = optimize_min_error(HypothesisEnsemble.min_error(states, priors), max_iters=20000, tol=1e-14)
    assert opt.error_probability == pytest.approx(sdp_min_error(states, priors), abs=1e-5)
    assert opt.report.nonnegativity_ok


def test_pessimal_rule_fails_certificate():
    rho0, rho1 = projectors([0.5, -0.5], 29)
    ens = HypothesisEnsemble.min_error([rho0, rho1], [0.5, 0.5])
    hel = helstrom_binary(0.5, rho0, 0.5, rho1)
    swapped = DiscretePOVM.from_matrices([hel.povm.element(1), hel.povm.element(0)])
    rep = optimality_check(swapped, ens)
    assert not rep.nonnegativity_ok and np.min(rep.min_eig_B) < 0


def test_risk_gap_is_excess_risk():
    rho0, rho1 = projectors([0.5, -0.5], 20)
    ens = HypothesisEnsemble.min_error([rho0, rho1], [0.5, 0.5])
    opt = optimize_min_error(ens)
    trivial = DiscretePOVM.from_matrices([np.eye(21), np.zeros((21, 21))])
    gap = risk_gap(trivial, ens, opt.report)
    assert gap == pytest.approx(average_risk(trivial, ens) - opt.risk, abs=1e-10)
    assert gap > 0


def test_optimizer_rejects_bad_cost():
    states = projectors([0.5, -0.5], 5)
    with pytest.raises(ValueError):
        optimize_min_error(HypothesisEnsemble(tuple(states), np.array([0.5, 0.5]), np.ones((2, 2))))


@pytest.mark.parametrize("L", [1.0, 1.5, 3.0])
def test_ml_certificate_passes(L):
    grid = np.array([0, 0.5 + 0.5j, -1.0 + 2.0j, 2.0 - 2.0j])
    cert = coherent_ml_certificate(L, grid, 39)
    assert cert.passed
    assert cert.worst_residual <= 1e-6 and cert.worst_min_eigenvalue >= -1e-9


def test_ml_certificate_truncation():
    with pytest.raises(TruncationError):
        coherent_ml_certificate(1.0, [4.0], 10)
    with pytest.raises(ValueError):
        coherent_ml_certificate(0.5, [0.0], 10)
