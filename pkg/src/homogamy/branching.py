"""Two-type branching approximation of the early mutant population.

While the P-mutants are few, the residents stay near ``(b - d)K/c`` with a
fixed A-fraction ``rho_A``, and the mutant counts ``(N_AP, N_aP)`` behave like
a linear two-type branching process with types ``A`` and ``a`` (index 0 and 1
below).  Every 2x2 object uses rows for the parent type and columns for the
offspring type.

All per-type arithmetic is written so that exchanging the A and a labels of
the inputs exchanges the outputs bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from .rates import ModelParams

CRITICAL_TOL = 1e-10
RESIDUAL_TOL = 1e-12
AGREEMENT_TOL = 1e-9
NEWTON_MAX_ITER = 200
NEWTON_MAX_HALVINGS = 60
FIXED_POINT_TOL = 1e-13
FIXED_POINT_MAX_ITER = 1_000_000


class ConvergenceError(RuntimeError):
    """Neither the Newton solver nor the fixed-point iteration converged."""


@dataclass(frozen=True)
class ResidentContext:
    """Allele composition of the p-resident population.

    ``rho_a`` defaults to ``1 - rho_A``; pass it explicitly to keep a grid
    exactly mirror-symmetric.
    """

    rho_A: float
    rho_a: float = None

    def __post_init__(self):
        if self.rho_a is None:
            object.__setattr__(self, "rho_a", 1.0 - self.rho_A)
        if not (0 <= self.rho_A <= 1 and 0 <= self.rho_a <= 1):
            raise ValueError(f"resident fractions must lie in [0, 1], got {self}")
        if abs(self.rho_A + self.rho_a - 1) > 1e-12:
            raise ValueError(f"rho_A + rho_a must equal 1, got {self}")

    def swapped(self) -> "ResidentContext":
        return ResidentContext(self.rho_a, self.rho_A)


def _context(rho) -> ResidentContext:
    return rho if isinstance(rho, ResidentContext) else ResidentContext(float(rho))


class Spectrum(NamedTuple):
    lam: float
    pi: np.ndarray
    gamma: np.ndarray
    degenerate: bool


@dataclass(frozen=True)
class BranchingModel:
    """Birth rates of the approximating branching process.

    ``beta_bar[i, j]`` is the rate at which a type-i individual gives birth to a
    type-j individual; every individual dies at rate ``b``.
    """

    beta_bar: np.ndarray
    b: float
    context: ResidentContext = field(default=None)

    @property
    def J(self) -> np.ndarray:
        return mean_matrix(self)

    @property
    def spectrum(self) -> Spectrum:
        return growth_spectrum(self.J)

    @property
    def lam(self) -> float:
        return self.spectrum.lam


def _own_rate(b, beta1, beta2, rho_own, rho_other):
    return b / 2 * (1 + (beta1 + 1) * rho_own - beta2 / 2 * rho_other)


def _cross_rate(b, beta2, rho_other):
    return b / 2 * (1 - beta2 / 2) * rho_other


def branching_rates(rho, params: ModelParams) -> BranchingModel:
    """Branching birth rates seen by a P-mutant among p-residents."""
    ctx = _context(rho)
    b, beta1, beta2 = params.b, params.beta1, params.beta2
    beta_bar = np.array([
        [_own_rate(b, beta1, beta2, ctx.rho_A, ctx.rho_a), _cross_rate(b, beta2, ctx.rho_a)],
        [_cross_rate(b, beta2, ctx.rho_A), _own_rate(b, beta1, beta2, ctx.rho_a, ctx.rho_A)],
    ])
    return BranchingModel(beta_bar=beta_bar, b=b, context=ctx)


def mean_matrix(model: BranchingModel) -> np.ndarray:
    J = model.beta_bar.copy()
    J[0, 0] -= model.b
    J[1, 1] -= model.b
    return J


def growth_spectrum(J) -> Spectrum:
    """Perron eigenvalue and eigenvectors of a 2x2 matrix with nonnegative
    off-diagonal entries.

    Returns the largest eigenvalue ``lam``, the left eigenvector ``pi``
    normalised to sum to one, and the right eigenvector ``gamma`` normalised so
    that its smallest positive entry is one.  When an off-diagonal entry
    vanishes the eigenvectors may have a zero entry; the dominant type keeps
    the mass.
    """
    J = np.asarray(J, dtype=float)
    j00, j01, j10, j11 = J[0, 0], J[0, 1], J[1, 0], J[1, 1]
    if j01 < 0 or j10 < 0:
        raise ValueError("off-diagonal entries must be nonnegative")
    tr = j00 + j11
    # discriminant written as a sum of nonnegative terms
    disc = (j00 - j11) ** 2 + 4 * (j01 * j10)
    root = math.sqrt(disc)
    lam = (tr + root) / 2
    degenerate = root == 0.0

    # pi (J - lam I) = 0 and (J - lam I) gamma = 0; take the better-scaled
    # of the two available null vectors
    left = _pick(np.array([j10, lam - j00]), np.array([lam - j11, j01]))
    right = _pick(np.array([j01, lam - j00]), np.array([lam - j11, j10]))
    if degenerate:
        # the dominant type is the one with the larger diagonal growth rate
        dom = 0 if j00 >= j11 else 1
        left = np.eye(2)[dom]
        right = np.eye(2)[dom]
    pi = np.abs(left) / np.abs(left).sum()
    gamma = np.abs(right)
    gamma = gamma / gamma[gamma > 0].min()
    return Spectrum(lam=lam, pi=pi, gamma=gamma, degenerate=degenerate)


def _pick(u, v):
    return u if np.abs(u).sum() >= np.abs(v).sum() else v


def lyapunov_weights(spectrum: Spectrum) -> np.ndarray:
    """Right eigenvector rescaled so that ``lam * gamma_i >= 2`` for every
    positive entry.  Undefined at criticality."""
    if abs(spectrum.lam) < CRITICAL_TOL:
        raise ValueError("weights are undefined when lambda == 0")
    gamma = spectrum.gamma
    return 2 * gamma / (spectrum.lam * gamma[gamma > 0].min())


def supercriticality_threshold(beta1: float, beta2: float) -> float:
    """Right-hand side of the invasion condition on ``rho_A (1 - rho_A)``."""
    if beta1 + beta2 == 0:
        return 0.0
    return beta1 * (beta2 + 2) / (2 * (beta1 + beta2) * (beta1 + 2))


def is_supercritical(rho, params: ModelParams) -> bool:
    """Explicit invasion criterion on ``(rho_A, beta1, beta2)``.

    Exact ties (where the largest eigenvalue is zero) count as not
    supercritical; a relative margin absorbs rounding in the threshold.
    """
    ctx = _context(rho)
    beta1, beta2 = params.beta1, params.beta2
    if beta1 == 0 and beta2 == 0:
        return False
    if beta1 > beta2:
        return True
    threshold = supercriticality_threshold(beta1, beta2)
    return threshold - ctx.rho_A * ctx.rho_a > 1e-12 * max(threshold, 1e-300)


class ExtinctionProbs(NamedTuple):
    q_A: float
    q_a: float
    solver_residual: float
    method: str

    @property
    def q(self) -> np.ndarray:
        return np.array([self.q_A, self.q_a])


def extinction_equations(model: BranchingModel, s) -> np.ndarray:
    """The pair ``(u_A, u_a)`` whose smallest common root in [0,1]^2 gives the
    extinction probabilities."""
    bb, b = model.beta_bar, model.b
    s_A, s_a = float(s[0]), float(s[1])
    return np.array([
        _u_one(b, bb[0, 0], bb[0, 1], s_A, s_a),
        _u_one(b, bb[1, 1], bb[1, 0], s_a, s_A),
    ])


def _u_one(b, own, cross, s_own, s_other):
    return b * (1 - s_own) + own * (s_own * s_own - s_own) + cross * (s_own * s_other - s_own)


def _du_one(b, own, cross, s_own, s_other):
    """Partial derivatives of ``_u_one`` w.r.t. (s_own, s_other)."""
    return -b + own * (2 * s_own - 1) + cross * (s_other - 1), cross * s_own


def _newton(b, bAA, bAa, baA, baa, start=(0.0, 0.0)):
    s_A, s_a = start
    polish = 0
    for _ in range(NEWTON_MAX_ITER):
        uA = _u_one(b, bAA, bAa, s_A, s_a)
        ua = _u_one(b, baa, baA, s_a, s_A)
        if max(abs(uA), abs(ua)) < RESIDUAL_TOL:
            # a few extra steps take the root to rounding level
            polish += 1
            if polish > 3 or max(abs(uA), abs(ua)) == 0.0:
                return s_A, s_a, True
        gAA, gAa = _du_one(b, bAA, bAa, s_A, s_a)
        gaa, gaA = _du_one(b, baa, baA, s_a, s_A)
        det = gAA * gaa - gAa * gaA
        if det == 0:
            return s_A, s_a, False
        dA = (uA * gaa - gAa * ua) / det
        da = (ua * gAA - gaA * uA) / det
        step = 1.0
        for _ in range(NEWTON_MAX_HALVINGS):
            nA, na = s_A - step * dA, s_a - step * da
            if 0 <= nA <= 1 and 0 <= na <= 1:
                break
            step /= 2
        else:
            return s_A, s_a, False
        if nA == s_A and na == s_a:
            return s_A, s_a, max(abs(uA), abs(ua)) < 1e3 * RESIDUAL_TOL
        if polish and max(abs(_u_one(b, bAA, bAa, nA, na)),
                          abs(_u_one(b, baa, baA, na, nA))) > max(abs(uA), abs(ua)):
            return s_A, s_a, True
        s_A, s_a = nA, na
    uA = _u_one(b, bAA, bAa, s_A, s_a)
    ua = _u_one(b, baa, baA, s_a, s_A)
    return s_A, s_a, max(abs(uA), abs(ua)) < RESIDUAL_TOL


@numba.njit(cache=True)
def _fixed_point(b, bAA, bAa, baA, baa, target_A, target_a, tol, max_iter):
    """Iterate the offspring generating function from (0, 0).

    The iterates increase monotonically towards the smallest fixed point, so
    each one is a certified lower bound.  With a target (a known root) the
    loop runs until the iterate is within ``1e-10`` of it or stalls; without
    one (target > 1) it stops when the increments fall below ``tol``.
    """
    has_target = target_A <= 1.0
    tot_A = b + bAA + bAa
    tot_a = b + baa + baA
    s_A = 0.0
    s_a = 0.0
    for it in range(max_iter):
        n_A = (b + bAA * s_A * s_A + bAa * s_A * s_a) / tot_A
        n_a = (b + baa * s_a * s_a + baA * s_a * s_A) / tot_a
        change = max(abs(n_A - s_A), abs(n_a - s_a))
        s_A = n_A
        s_a = n_a
        if has_target:
            if target_A - s_A < 1e-10 and target_a - s_a < 1e-10:
                return s_A, s_a, it + 1, True
            if change == 0.0:
                return s_A, s_a, it + 1, False
        elif change < tol:
            return s_A, s_a, it + 1, True
    return s_A, s_a, max_iter, False


def extinction_probabilities(model: BranchingModel) -> ExtinctionProbs:
    """Extinction probabilities from a single A- or a-individual.

    Newton's method started at (0, 0) locates a root.  Apart from (1, 1) the
    generating function has no fixed point in the unit square other than the
    minimal one once both coordinates are below 1, so such a root is accepted;
    the monotone fixed-point iteration from (0, 0) must then stay below it.
    A root touching 1 is refined from the fixed-point lower bound instead.
    """
    lam = growth_spectrum(mean_matrix(model)).lam
    if lam < CRITICAL_TOL:
        return ExtinctionProbs(1.0, 1.0, 0.0, "subcritical" if lam < -CRITICAL_TOL else "critical")

    bb, b = model.beta_bar, model.b
    args = (b, bb[0, 0], bb[0, 1], bb[1, 0], bb[1, 1])
    s_A, s_a, newton_ok = _newton(*args)
    target = (s_A, s_a) if newton_ok else (2.0, 2.0)
    f_A, f_a, _, fp_ok = _fixed_point(*args, target[0], target[1],
                                      FIXED_POINT_TOL, FIXED_POINT_MAX_ITER)
    if newton_ok and max(s_A, s_a) >= 1.0:
        # non-minimal root; restart from the lower bound
        s_A, s_a, newton_ok = _newton(*args, start=(f_A, f_a))
        if newton_ok and max(s_A, s_a) >= 1.0:
            raise ConvergenceError(f"Newton stuck on a non-minimal root {(s_A, s_a)}")
    if newton_ok:
        if f_A > s_A + AGREEMENT_TOL or f_a > s_a + AGREEMENT_TOL:
            raise ConvergenceError(f"fixed-point lower bound {(f_A, f_a)} exceeds the "
                                   f"Newton root {(s_A, s_a)}")
        method = "newton"
    elif fp_ok:
        s_A, s_a, method = f_A, f_a, "fixed-point"
    else:
        raise ConvergenceError("no-convergence")
    residual = float(np.abs(extinction_equations(model, (s_A, s_a))).max())
    return ExtinctionProbs(float(s_A), float(s_a), residual, method)


def extinction_closed_form_rho1(params: ModelParams) -> tuple[float, float]:
    """Closed-form extinction probabilities when every resident carries A."""
    beta1, beta2 = params.beta1, params.beta2
    q_A = 2 / (2 + beta1)
    x = (6 - beta1 * beta2 + 4 * beta1 - beta2) / (2 + beta1)
    q_a = (x - math.sqrt(x * x - 4 * (2 - beta2))) / (2 - beta2)
    return q_A, q_a


# --------------------------------------------------------------------------
# direct simulation of the branching process

class BranchingRun(NamedTuple):
    status: str          # "extinct", "survived" or "undecided"
    n_A: int
    n_a: int
    time: float


_STATUS = ("extinct", "survived", "undecided")


@numba.njit(cache=True)
def _simulate_branching(rng, bAA, bAa, baA, baa, death, n_A, n_a, size_cap, t_max):
    t = 0.0
    while True:
        if n_A + n_a == 0:
            return 0, n_A, n_a, t
        if n_A + n_a >= size_cap:
            return 1, n_A, n_a, t
        r0 = bAA * n_A + baA * n_a   # new A
        r1 = bAa * n_A + baa * n_a   # new a
        r2 = death * n_A
        r3 = death * n_a
        total = r0 + r1 + r2 + r3
        t += rng.exponential(1.0 / total)
        if t > t_max:
            return 2, n_A, n_a, t_max
        u = rng.random() * total
        if u < r0:
            n_A += 1
        elif u < r0 + r1:
            n_a += 1
        elif u < r0 + r1 + r2:
            n_A -= 1
        else:
            n_a -= 1


@numba.njit(cache=True)
def _simulate_branching_batch(rng, bAA, bAa, baA, baa, death, n_A, n_a, size_cap, t_max, reps):
    out_status = np.empty(reps, np.int64)
    out_A = np.empty(reps, np.int64)
    out_a = np.empty(reps, np.int64)
    for i in range(reps):
        s, a1, a2, _ = _simulate_branching(rng, bAA, bAa, baA, baa, death, n_A, n_a, size_cap, t_max)
        out_status[i] = s
        out_A[i] = a1
        out_a[i] = a2
    return out_status, out_A, out_a


def _initial_counts(initial):
    if initial in ("A", 0):
        return 1, 0
    if initial in ("a", 1):
        return 0, 1
    n_A, n_a = initial
    return int(n_A), int(n_a)


def simulate_branching(model: BranchingModel, initial="A", seed=None,
                       size_cap: int = 10_000, t_max: float = math.inf) -> BranchingRun:
    """Exact simulation of the branching process until extinction, until the
    total size reaches ``size_cap`` ("survived"), or until ``t_max``
    ("undecided")."""
    if size_cap <= 0:
        raise ValueError("size_cap must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bb = model.beta_bar
    n_A, n_a = _initial_counts(initial)
    status, a1, a2, t = _simulate_branching(rng, bb[0, 0], bb[0, 1], bb[1, 0], bb[1, 1],
                                            model.b, n_A, n_a, size_cap, t_max)
    return BranchingRun(_STATUS[status], int(a1), int(a2), float(t))


def simulate_branching_many(model: BranchingModel, replicas: int, initial="A", seed=None,
                            size_cap: int = 10_000, t_max: float = math.inf):
    """Vectorised :func:`simulate_branching`.

    Returns ``(status, n_A, n_a)`` arrays with status codes 0 = extinct,
    1 = survived, 2 = undecided.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bb = model.beta_bar
    n_A, n_a = _initial_counts(initial)
    return _simulate_branching_batch(rng, bb[0, 0], bb[0, 1], bb[1, 0], bb[1, 1],
                                     model.b, n_A, n_a, size_cap, t_max, int(replicas))


# --------------------------------------------------------------------------
# subcritical three-type process of the final extinction phase

EXTINCTION_PHASE_TYPES = ("Ap", "ap", "aP")


def extinction_phase_matrix(params: ModelParams) -> tuple[np.ndarray, float]:
    """Mean matrix of the residual types ``(Ap, ap, aP)`` once AP has fixed.

    Ap begets Ap at ``b(2 + beta1)/2``, aP begets aP at ``b(1 - beta2)``, every
    type begets ap at ``b(2 - beta2)/4`` and every individual dies at
    ``b(1 + beta1)``.  Returns the matrix and its largest eigenvalue.
    """
    b, beta1, beta2 = params.b, params.beta1, params.beta2
    death = b * (1 + beta1)
    to_ap = b * (2 - beta2) / 4
    M = np.zeros((3, 3))
    M[0, 0] = b * (2 + beta1) / 2
    M[2, 2] = b * (1 - beta2)
    M[:, 1] += to_ap
    M -= death * np.eye(3)
    r = float(np.max(np.linalg.eigvals(M).real))
    return M, r
