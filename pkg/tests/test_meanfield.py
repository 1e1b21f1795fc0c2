import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homogamy.branching import branching_rates
from homogamy.meanfield import (OriginJacobianError, chi_AP, convergence_condition, diversity_D,
                                equilibria, integrate, jacobian, monomorphic_P_eigenvalues,
                                p_line_mutant_block, p_line_point, pi_product, swap_labels,
                                symmetric_P_eigenvalues, symmetric_P_point, vector_field)
from homogamy.rates import ModelParams

P = ModelParams(b=1.0, d=0.0, c=1.0, beta1=0.5, beta2=0.3)
densities = st.lists(st.floats(0, 5), min_size=4, max_size=4).filter(lambda z: sum(z) > 1e-3)


def test_field_vanishes_at_origin():
    assert np.all(vector_field(np.zeros(4), P) == 0)
    with pytest.raises(OriginJacobianError):
        jacobian(np.zeros(4), P)


@pytest.mark.parametrize("params", [P, ModelParams(b=2.0, d=0.3, c=0.7, beta1=1.3, beta2=0.9)])
def test_equilibria_are_stationary(params):
    for rec in equilibria(params, rhos=(0.0, 0.25, 0.8, 1.0)):
        assert np.abs(vector_field(rec.point, params)).max() < 1e-13


def test_chi_AP_eigenvalues():
    for params in (P, ModelParams(b=2.0, d=0.3, c=0.7, beta1=1.3, beta2=0.9)):
        num = np.sort(np.linalg.eigvals(jacobian(chi_AP(params), params)).real)
        np.testing.assert_allclose(num, np.sort(monomorphic_P_eigenvalues(params)), atol=1e-5)


def test_symmetric_P_eigenvalues():
    for params in (P, ModelParams(b=2.0, d=0.3, c=0.7, beta1=0.2, beta2=0.9)):
        point = symmetric_P_point(params)
        num = np.sort(np.linalg.eigvals(jacobian(point, params)).real)
        np.testing.assert_allclose(num, np.sort(symmetric_P_eigenvalues(params)), atol=1e-5)


def test_symmetric_P_point_absent_when_not_viable():
    assert symmetric_P_point(ModelParams(b=1.0, d=0.9, beta1=0.0, beta2=1.0)) is None


def test_p_line_block_is_transposed_mean_matrix():
    for rho in (0.0, 0.3, 0.8, 1.0):
        block = p_line_mutant_block(rho, P)
        np.testing.assert_allclose(block, branching_rates(rho, P).J.T, atol=1e-6)


def test_equilibrium_labels():
    recs = {(r.family, r.rho): r for r in equilibria(P, rhos=(0.5,))}
    assert recs[("chi_AP", None)].stability == "stable"
    assert recs[("symmetric-P", None)].stability == "unstable"
    assert recs[("p-line", 0.5)].stability == "unstable"
    sub = ModelParams(beta1=0.2, beta2=0.7)
    recs = {(r.family, r.rho): r for r in equilibria(sub, rhos=(0.5,))}
    assert recs[("p-line", 0.5)].stability == "non-hyperbolic"


@settings(max_examples=100, deadline=None)
@given(densities)
def test_label_swap_equivariance(z):
    z = np.array(z)
    np.testing.assert_allclose(vector_field(swap_labels(z), P), swap_labels(vector_field(z, P)),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(densities)
def test_p_free_states_stay_p_free(z):
    z = np.array(z)
    z[[0, 2]] = 0
    if z.sum() == 0:
        return
    f = vector_field(z, P)
    assert f[0] == 0 and f[2] == 0


def test_diversity_bounds_and_product():
    z = np.array([0.3, 0.5, 0.1, 0.2])
    assert diversity_D(z) == pytest.approx(0.8 * 0.3 / 1.1 ** 2)
    assert pi_product(z) == pytest.approx((0.3 - 0.1) * (0.5 - 0.2))
    assert diversity_D(np.array([1.0, 0, 1.0, 0])) == 0.25


def test_convergence_condition_flags():
    cond = convergence_condition([0.3, 0.5, 0.1, 0.2], P)
    assert cond["holds"] and cond["ordering"] and cond["beta1_gt_beta2"]
    sub = ModelParams(beta1=0.2, beta2=0.7)
    cond = convergence_condition([0.3, 0.5, 0.1, 0.2], sub)
    assert not cond["beta1_gt_beta2"]
    cond = convergence_condition([0.9, 0.9, 0.01, 0.01], sub)
    assert cond["holds"] and cond["diversity_below_threshold"]
    assert not convergence_condition([0.1, 0.5, 0.3, 0.2], P)["holds"]


def test_trajectory_converges_monotonically():
    traj = integrate([0.3, 0.5, 0.1, 0.2], P, 400.0, t_eval=np.linspace(0, 400, 4001))
    assert np.abs(traj.final - chi_AP(P)).max() < 1e-6
    assert np.all(np.diff(traj.D) <= 1e-9)
    assert np.all(traj.Pi > 0)


def test_stop_at_equilibrium_reports_flag():
    traj = integrate([0.3, 0.5, 0.1, 0.2], P, 400.0, rtol=1e-12, atol=1e-14,
                     stop_at_equilibrium=True)
    if traj.converged:
        assert np.abs(vector_field(traj.final, P)).max() <= 1.1e-10
        assert traj.t[-1] == traj.t_stop < 400
    else:
        assert traj.t_stop == 400


def test_integrate_validation():
    with pytest.raises(ValueError):
        integrate([-0.1, 0, 0, 1], P, 10)
    with pytest.raises(ValueError):
        integrate([0.1, 0, 0, 1], P, 0)


def test_p_line_is_invariant_under_integration():
    traj = integrate(p_line_point(0.3, P) * 0.5, P, 50.0)
    assert np.all(traj.z[:, [0, 2]] == 0)
    np.testing.assert_allclose(traj.final, p_line_point(0.3, P), atol=1e-6)


def test_trajectory_csv(tmp_path):
    traj = integrate([0.3, 0.5, 0.1, 0.2], P, 5.0, t_eval=np.linspace(0, 5, 11))
    path = tmp_path / "mf.csv"
    traj.to_csv(path)
    lines = path.read_bytes().split(b"\n")
    assert lines[0] == b"t,z_AP,z_Ap,z_aP,z_ap,D,Pi"
    assert len([ln for ln in lines if ln]) == 12
    assert b"\r" not in path.read_bytes()
