import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homogamy.branching import (CRITICAL_TOL, ResidentContext, branching_rates,
                                extinction_closed_form_rho1, extinction_equations,
                                extinction_phase_matrix, extinction_probabilities, growth_spectrum,
                                is_supercritical, lyapunov_weights, simulate_branching,
                                simulate_branching_many, supercriticality_threshold)
from homogamy.rates import ModelParams

P = ModelParams(b=1.0, d=0.0, c=1.0, beta1=0.5, beta2=0.3)


def test_mean_matrix_reference_values():
    # hand-evaluated rates at rho_A = 0.8
    J = branching_rates(0.8, P).J
    np.testing.assert_allclose(J, [[0.085, 0.085], [0.34, -0.41]], atol=1e-15)


def test_growth_rate_reference_value():
    # trace -0.325, determinant -0.06375
    lam_ref = (-0.325 + math.sqrt(0.325 ** 2 + 4 * 0.06375)) / 2
    spec = branching_rates(0.8, P).spectrum
    assert spec.lam == pytest.approx(lam_ref, abs=1e-15)
    assert spec.lam == pytest.approx(0.137760, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 3), st.floats(0, 1), st.floats(0.1, 5))
def test_spectrum_against_numpy(rho, beta1, beta2, b):
    J = branching_rates(rho, ModelParams(b=b, beta1=beta1, beta2=beta2)).J
    spec = growth_spectrum(J)
    assert spec.lam == pytest.approx(np.linalg.eigvals(J).real.max(), abs=1e-12 * b)
    assert spec.pi.sum() == pytest.approx(1.0)
    assert np.all(spec.pi >= 0) and np.all(spec.gamma >= 0)
    if not spec.degenerate:
        np.testing.assert_allclose(spec.pi @ J, spec.lam * spec.pi, atol=1e-10 * b)
        np.testing.assert_allclose(J @ spec.gamma, spec.lam * spec.gamma,
                                   atol=1e-10 * b * spec.gamma.max())


def test_spectrum_rejects_negative_offdiagonal():
    with pytest.raises(ValueError):
        growth_spectrum([[0.0, -1.0], [1.0, 0.0]])


def test_monomorphic_resident_spectrum():
    # at rho_A = 1 the a-type cannot give birth to A, so lam = J_AA = b beta1 / 2
    spec = branching_rates(1.0, P).spectrum
    assert spec.lam == pytest.approx(P.b * P.beta1 / 2, abs=1e-15)
    np.testing.assert_allclose(spec.pi, [1.0, 0.0])


def test_lyapunov_weights_scale():
    spec = branching_rates(0.8, P).spectrum
    w = lyapunov_weights(spec)
    assert np.all(spec.lam * w[w > 0] >= 2 - 1e-12)
    np.testing.assert_allclose(w / w.max(), spec.gamma / spec.gamma.max())


def test_threshold_reference_value():
    # beta1 = 0.2, beta2 = 0.7: 0.2 * 2.7 / (2 * 0.9 * 2.2)
    assert supercriticality_threshold(0.2, 0.7) == pytest.approx(0.54 / 3.96, rel=1e-15)
    rho_star = (1 + math.sqrt(1 - 4 * 0.54 / 3.96)) / 2
    assert rho_star == pytest.approx(0.8371, abs=1e-4)


rhos = [k / 40 for k in range(41)]
betas1 = [0.0, 0.05, 0.2, 0.5, 1.0, 2.0]
betas2 = [0.0, 0.1, 0.3, 0.7, 1.0]


@pytest.mark.parametrize("beta1", betas1)
@pytest.mark.parametrize("beta2", betas2)
def test_criterion_matches_growth_rate(beta1, beta2):
    p = ModelParams(beta1=beta1, beta2=beta2)
    for rho in rhos:
        lam = branching_rates(rho, p).lam
        if abs(lam) <= CRITICAL_TOL:
            continue
        assert is_supercritical(rho, p) == (lam > 0), (rho, lam)
        q = extinction_probabilities(branching_rates(rho, p))
        assert (q.q_A < 1 and q.q_a < 1) == (lam > 0)


def test_no_preference_is_neutral():
    p = ModelParams(beta1=0.0, beta2=0.0)
    for rho in rhos:
        assert branching_rates(rho, p).lam == pytest.approx(0.0, abs=1e-15)
        assert not is_supercritical(rho, p)
        assert extinction_probabilities(branching_rates(rho, p))[:2] == (1.0, 1.0)


def test_extinction_closed_form_rho1():
    for beta1 in (0.1, 0.5, 1.0, 3.0):
        for beta2 in (0.0, 0.3, 0.9, 1.0):
            p = ModelParams(beta1=beta1, beta2=beta2)
            q = extinction_probabilities(branching_rates(1.0, p))
            q_A, q_a = extinction_closed_form_rho1(p)
            assert q.q_A == pytest.approx(2 / (2 + beta1), abs=1e-12)
            assert q.q_A == pytest.approx(q_A, abs=1e-12)
            assert q.q_a == pytest.approx(q_a, abs=1e-12)


def test_closed_form_q_a_reference():
    # q_a solves (2 - beta2) s^2 - X s + 2 = 0 with X = (6 - b1 b2 + 4 b1 - b2)/(2 + b1)
    X = (6 - 0.15 + 2 - 0.3) / 2.5
    q_a = (X - math.sqrt(X * X - 4 * 1.7)) / 1.7
    assert extinction_closed_form_rho1(P)[1] == pytest.approx(q_a, abs=1e-14)
    assert q_a == pytest.approx(0.880420045914, abs=1e-11)


@settings(max_examples=150, deadline=None)
@given(st.floats(0, 1), st.floats(0, 3), st.floats(0, 1))
def test_extinction_solution_properties(rho, beta1, beta2):
    model = branching_rates(rho, ModelParams(beta1=beta1, beta2=beta2))
    q = extinction_probabilities(model)
    assert 0 <= q.q_A <= 1 and 0 <= q.q_a <= 1
    if model.lam > CRITICAL_TOL:
        assert np.abs(extinction_equations(model, (q.q_A, q.q_a))).max() < 1e-12
        assert q.q_A < 1 and q.q_a < 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 400), st.floats(0, 3), st.floats(0, 1))
def test_label_symmetry_is_exact(k, beta1, beta2):
    p = ModelParams(beta1=beta1, beta2=beta2)
    ctx = ResidentContext(k / 400, (400 - k) / 400)
    q = extinction_probabilities(branching_rates(ctx, p))
    q_sw = extinction_probabilities(branching_rates(ctx.swapped(), p))
    assert q.q_a == q_sw.q_A and q.q_A == q_sw.q_a


def test_extinction_near_criticality():
    p = ModelParams(beta1=0.2, beta2=0.7)
    rho_star = (1 + math.sqrt(1 - 4 * supercriticality_threshold(0.2, 0.7))) / 2
    for offset in (1e-3, 1e-5, 1e-7):
        q = extinction_probabilities(branching_rates(rho_star + offset, p))
        assert q.q_A < 1 and q.q_a < 1
        assert q.solver_residual < 1e-12
    assert extinction_probabilities(branching_rates(rho_star - 1e-3, p))[:2] == (1.0, 1.0)


def test_context_validation():
    with pytest.raises(ValueError):
        ResidentContext(1.2)
    with pytest.raises(ValueError):
        ResidentContext(0.3, 0.3)


def test_branching_simulation_agrees_with_extinction_probability():
    model = branching_rates(0.8, P)
    q = extinction_probabilities(model)
    n = 20000
    status, _, _ = simulate_branching_many(model, n, initial="A", seed=11, size_cap=2000)
    assert np.all(status != 2)
    p_hat = np.mean(status == 0)
    se = math.sqrt(q.q_A * (1 - q.q_A) / n)
    assert abs(p_hat - q.q_A) < 4 * se
    status, _, _ = simulate_branching_many(model, n, initial="a", seed=12, size_cap=2000)
    se = math.sqrt(q.q_a * (1 - q.q_a) / n)
    assert abs(np.mean(status == 0) - q.q_a) < 4 * se


def test_single_branching_run():
    run = simulate_branching(branching_rates(0.8, P), seed=3, size_cap=50)
    assert run.status in ("extinct", "survived")
    assert run.n_A + run.n_a in (0,) or run.n_A + run.n_a >= 50


def test_extinction_phase_matrix():
    for beta1, beta2, b in [(0.5, 0.3, 1.0), (2.0, 0.9, 3.0), (0.1, 0.0, 0.5)]:
        M, r = extinction_phase_matrix(ModelParams(b=b, beta1=beta1, beta2=beta2))
        np.testing.assert_allclose(np.diag(M), [-b * beta1 / 2, -b / 4 * (2 + 4 * beta1 + beta2),
                                                -b * (beta1 + beta2)], atol=1e-14)
        assert r == pytest.approx(-b * beta1 / 2, abs=1e-12)
        assert np.all(M - np.diag(np.diag(M)) >= 0)


def test_growth_rate_scales_with_b():
    for rho in (0.1, 0.5, 0.8, 1.0):
        lam1 = branching_rates(rho, ModelParams(b=1.0, beta1=0.3, beta2=0.6)).lam
        lam2 = branching_rates(rho, ModelParams(b=2.0, beta1=0.3, beta2=0.6)).lam
        assert lam2 / 2 == pytest.approx(lam1, abs=1e-15)


def test_criterion_examples():
    p = ModelParams(beta1=0.2, beta2=0.7)
    assert not is_supercritical(0.5, p) and branching_rates(0.5, p).lam < 0
    assert is_supercritical(0.9, p) and branching_rates(0.9, p).lam > 0
    assert all(is_supercritical(r, ModelParams(beta1=0.4, beta2=0.3)) for r in rhos)


def test_closed_form_examples():
    q_A, q_a = extinction_closed_form_rho1(ModelParams(beta1=0.5, beta2=0.0))
    assert q_A == pytest.approx(0.8, abs=1e-15)
    assert q_a == pytest.approx((3.2 - math.sqrt(2.24)) / 2, abs=1e-14)
    assert q_a == pytest.approx(0.85167, abs=1e-5)
    assert extinction_closed_form_rho1(ModelParams(beta1=0.0, beta2=0.4))[0] == 1.0


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.6, 0.9, 1.0])
def test_extinction_monotone_in_beta1(rho):
    for beta2 in (0.0, 0.5, 1.0):
        prev = None
        for beta1 in np.linspace(0, 2, 21):
            q = extinction_probabilities(branching_rates(rho, ModelParams(beta1=beta1,
                                                                          beta2=beta2)))
            if prev is not None:
                assert q.q_A <= prev.q_A + 1e-12 and q.q_a <= prev.q_a + 1e-12
            prev = q


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 3), st.floats(0, 1))
def test_newton_agrees_with_fixed_point_iteration(rho, beta1, beta2):
    from homogamy.branching import FIXED_POINT_MAX_ITER, _fixed_point
    model = branching_rates(rho, ModelParams(beta1=beta1, beta2=beta2))
    if model.lam < 1e-2:
        return
    q = extinction_probabilities(model)
    bb = model.beta_bar
    f_A, f_a, _, ok = _fixed_point(model.b, bb[0, 0], bb[0, 1], bb[1, 0], bb[1, 1], 2.0, 2.0,
                                   1e-13, FIXED_POINT_MAX_ITER)
    assert ok
    assert abs(f_A - q.q_A) < 1e-9 and abs(f_a - q.q_a) < 1e-9


def test_monte_carlo_oracle_monomorphic_residents():
    model = branching_rates(1.0, P)
    status, _, _ = simulate_branching_many(model, 100_000, initial="A", seed=21, size_cap=1000)
    assert abs(np.mean(status == 0) - 0.8) < 0.004


def test_monte_carlo_oracle_near_threshold():
    model = branching_rates(0.9, ModelParams(beta1=0.2, beta2=0.7))
    q = extinction_probabilities(model)
    n = 100_000
    status, n_A, n_a = simulate_branching_many(model, n, initial="A", seed=22, size_cap=1000)
    assert np.all(status != 2)
    se = math.sqrt(q.q_A * (1 - q.q_A) / n)
    assert abs(np.mean(status == 0) - q.q_A) < 3 * se


def test_composition_at_cap_approaches_pi():
    model = branching_rates(0.8, P)
    status, n_A, n_a = simulate_branching_many(model, 4000, initial="A", seed=23)
    alive = status == 1
    frac = n_A[alive] / (n_A[alive] + n_a[alive])
    assert abs(frac.mean() - model.spectrum.pi[0]) < 0.02


def test_critical_runs_can_be_undecided():
    model = branching_rates(0.5, ModelParams(beta1=0.0, beta2=0.0))
    status, _, _ = simulate_branching_many(model, 500, seed=24, t_max=20.0)
    assert set(np.unique(status)) <= {0, 1, 2}
    assert np.any(status == 2)
    assert np.mean(status == 0) > 0.8
