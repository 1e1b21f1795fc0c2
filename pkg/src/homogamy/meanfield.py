"""Deterministic large-population limit of the rescaled process N/K.

The state is a density vector ``z = (z_AP, z_Ap, z_aP, z_ap)``.  Integration
uses scipy's Dormand-Prince 5(4) pair with dense output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .branching import growth_spectrum, branching_rates, is_supercritical, supercriticality_threshold
from .rates import LABEL_SWAP, ModelParams, birth_terms

NEGATIVE_BAND = 1e-10
CONVERGED_FIELD_NORM = 1e-10


class StepSizeUnderflow(RuntimeError):
    pass


class NegativeDensityError(ArithmeticError):
    pass


class OriginJacobianError(ValueError):
    pass


def vector_field(z, params: ModelParams) -> np.ndarray:
    """Right-hand side ``b_i(z) - (d + c z) z_i``; zero at the origin."""
    z = np.asarray(z, dtype=float)
    total = z.sum()
    if total == 0:
        return np.zeros(4)
    return birth_terms(z, params.b, params.beta1, params.beta2) - (params.d + params.c * total) * z


def totals(z):
    """``(z, z_A, z_a, z_P, z_p)`` for a density vector or an (m, 4) array."""
    z = np.asarray(z, dtype=float)
    zAP, zAp, zaP, zap = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    return zAP + zAp + zaP + zap, zAP + zAp, zaP + zap, zAP + zaP, zAp + zap


def diversity_D(z) -> float:
    """Locus-1 diversity ``z_A z_a / z^2`` (at most 1/4)."""
    total, zA, za, _, _ = totals(z)
    if np.any(total <= 0):
        raise ValueError("diversity is undefined for an empty population")
    return zA * za / total ** 2


def pi_product(z) -> float:
    """``(z_AP - z_aP)(z_Ap - z_ap)``."""
    z = np.asarray(z, dtype=float)
    return (z[..., 0] - z[..., 2]) * (z[..., 1] - z[..., 3])


def jacobian(z, params: ModelParams) -> np.ndarray:
    """Central finite-difference Jacobian of :func:`vector_field`."""
    z = np.asarray(z, dtype=float)
    if not np.any(z != 0):
        raise OriginJacobianError("the vector field is not differentiable at the origin")
    h = max(1e-6, 1e-6 * np.abs(z).max())
    jac = np.empty((4, 4))
    for k in range(4):
        dz = np.zeros(4)
        dz[k] = h
        jac[:, k] = (vector_field(z + dz, params) - vector_field(z - dz, params)) / (2 * h)
    return jac


def convergence_condition(z0, params: ModelParams) -> dict:
    """Hypotheses for convergence to the AP-monomorphic equilibrium.

    Checks the orderings ``z_Ap > z_ap`` and ``z_AP > z_aP`` and the two
    alternatives ``beta1 > beta2`` or ``D(z0) < threshold``.  The returned
    dict has the individual flags and ``holds``.
    """
    z0 = np.asarray(z0, dtype=float)
    ordering = bool(z0[1] > z0[3] and z0[0] > z0[2])
    by_betas = params.beta1 > params.beta2
    by_diversity = bool(diversity_D(z0) < supercriticality_threshold(params.beta1, params.beta2))
    return {
        "ordering": ordering,
        "beta1_gt_beta2": by_betas,
        "diversity_below_threshold": by_diversity,
        "holds": ordering and (by_betas or by_diversity),
    }


@dataclass
class MFTrajectory:
    t: np.ndarray
    z: np.ndarray                       # shape (len(t), 4)
    converged: bool = False             # stopped because the field vanished
    t_stop: float = math.nan
    nfev: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.z[-1]

    @property
    def D(self) -> np.ndarray:
        return diversity_D(self.z)

    @property
    def Pi(self) -> np.ndarray:
        return pi_product(self.z)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "z_AP", "z_Ap", "z_aP", "z_ap", "D", "Pi"])
            total = self.z.sum(axis=1)
            D = np.full(len(self.t), math.nan)
            nz = total > 0
            D[nz] = diversity_D(self.z[nz])
            for t, row, d_val, p_val in zip(self.t, self.z, D, self.Pi):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row]
                                + [repr(float(d_val)), repr(float(p_val))])


def integrate(z0, params: ModelParams, t_end: float, t_eval=None, rtol: float = 1e-8,
              atol: float = 1e-10, stop_at_equilibrium: bool = False) -> MFTrajectory:
    """Integrate the mean-field system from ``z0`` up to ``t_end``.

    Args:
        t_eval: output times (defaults to 201 evenly spaced points).
        stop_at_equilibrium: end early once the sup-norm of the field drops
            below ``1e-10``; the trajectory then ends at the stopping time.

    Undershoots in ``[-1e-10, 0)`` are clamped to zero; larger negative values
    raise :class:`NegativeDensityError`.
    """
    z0 = np.asarray(z0, dtype=float)
    if np.any(z0 < 0):
        raise ValueError("initial densities must be nonnegative")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, 201)
    t_eval = np.asarray(t_eval, dtype=float)

    events = None
    if stop_at_equilibrium:
        def settled(t, y):
            return np.abs(vector_field(y, params)).max() - CONVERGED_FIELD_NORM
        settled.terminal = True
        settled.direction = -1
        events = settled

    sol = solve_ivp(lambda t, y: vector_field(y, params), (0.0, t_end), z0, method="RK45",
                    dense_output=True, rtol=rtol, atol=atol, events=events,
                    first_step=None)
    if sol.status == -1:
        raise StepSizeUnderflow(sol.message)

    converged = bool(stop_at_equilibrium and sol.status == 1)
    t_stop = float(sol.t[-1])
    times = t_eval[t_eval <= t_stop]
    if converged and (len(times) == 0 or times[-1] < t_stop):
        times = np.append(times, t_stop)
    z = sol.sol(times).T if len(times) else np.empty((0, 4))
    if np.any(z < -NEGATIVE_BAND):
        raise NegativeDensityError(f"density fell to {z.min():.3e}")
    z = np.where(z < 0, 0.0, z)
    return MFTrajectory(t=times, z=z, converged=converged, t_stop=t_stop, nfev=sol.nfev)


def swap_labels(z) -> np.ndarray:
    """Exchange the A and a labels of a density vector (or array of them)."""
    z = np.asarray(z, dtype=float)
    return z[..., list(LABEL_SWAP)]


# --------------------------------------------------------------------------
# equilibria

@dataclass
class EquilibriumRecord:
    point: np.ndarray
    family: str            # origin, p-line, chi_AP, chi_aP, symmetric-P
    stability: str         # stable, unstable, non-hyperbolic
    eigenvalues: np.ndarray
    rho: float = None      # position along the p-line
    closed_form: bool = field(default=False)


def chi_AP(params: ModelParams) -> np.ndarray:
    return np.array([params.fixation_density, 0.0, 0.0, 0.0])


def chi_aP(params: ModelParams) -> np.ndarray:
    return np.array([0.0, 0.0, params.fixation_density, 0.0])


def p_line_point(rho: float, params: ModelParams) -> np.ndarray:
    zeta = params.resident_density
    return np.array([0.0, rho * zeta, 0.0, (1 - rho) * zeta])


def monomorphic_P_eigenvalues(params: ModelParams) -> np.ndarray:
    b, d, beta1, beta2 = params.b, params.d, params.beta1, params.beta2
    return np.array([-b * beta1 / 2, -b * (beta1 + beta2),
                     -b / 4 * (2 + 4 * beta1 + beta2), -b * (1 + beta1) + d])


def symmetric_P_point(params: ModelParams):
    b, d, c, beta1, beta2 = params.b, params.d, params.c, params.beta1, params.beta2
    x = (b * (1 + (beta1 - beta2) / 2) - d) / (2 * c)
    if x <= 0:
        return None
    return np.array([x, 0.0, x, 0.0])


def symmetric_P_eigenvalues(params: ModelParams) -> np.ndarray:
    b, d, beta1, beta2 = params.b, params.d, params.beta1, params.beta2
    return np.array([b / 2 * (beta1 + beta2), b / 4 * (beta2 - beta1),
                     -b / 4 * (2 + beta1 - 2 * beta2), -b / 2 * (2 + beta1 - beta2) + d])


def _label(eigenvalues, tol=1e-8) -> str:
    top = np.max(np.real(eigenvalues))
    if top > tol:
        return "unstable"
    if top < -tol:
        return "stable"
    return "non-hyperbolic"


def equilibria(params: ModelParams, rhos=(0.0, 0.5, 1.0)) -> list[EquilibriumRecord]:
    """Catalogue of the equilibria having at least one null coordinate.

    The p-line is sampled at ``rhos``.  A p-line point is labelled unstable
    when the mutant block has a positive eigenvalue and non-hyperbolic
    otherwise (it always carries a zero eigenvalue).
    """
    out = [EquilibriumRecord(np.zeros(4), "origin", "unstable", np.array([]))]
    for rho in rhos:
        point = p_line_point(rho, params)
        eig = np.sort(np.linalg.eigvals(jacobian(point, params)).real)[::-1]
        unstable = is_supercritical(rho, params)
        out.append(EquilibriumRecord(point, "p-line", "unstable" if unstable else "non-hyperbolic",
                                     eig, rho=float(rho)))
    mono = monomorphic_P_eigenvalues(params)
    out.append(EquilibriumRecord(chi_AP(params), "chi_AP", _label(mono), mono, closed_form=True))
    out.append(EquilibriumRecord(chi_aP(params), "chi_aP", _label(mono), mono, closed_form=True))
    sym = symmetric_P_point(params)
    if sym is not None:
        eig = symmetric_P_eigenvalues(params)
        out.append(EquilibriumRecord(sym, "symmetric-P", _label(eig), eig, closed_form=True))
    return out


def p_line_mutant_block(rho: float, params: ModelParams) -> np.ndarray:
    """The (z_AP, z_aP) block of the Jacobian at a p-line point."""
    jac = jacobian(p_line_point(rho, params), params)
    idx = [0, 2]
    return jac[np.ix_(idx, idx)]


def p_line_growth_rate(rho: float, params: ModelParams) -> float:
    return growth_spectrum(branching_rates(rho, params).J).lam
