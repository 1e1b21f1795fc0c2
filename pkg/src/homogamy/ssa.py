"""Exact stochastic simulation of the four-genotype population process.

The direct method is used: all eight rates are recomputed from the current
counts at every event, the waiting time is exponential with the total rate
and the event is chosen proportionally to its rate.  The event loop is
compiled with numba and driven by a numpy ``Generator``, so a replica is fully
determined by its seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict

import numba
import numpy as np

from .rates import GENOTYPES, ModelParams, PopState

# event codes: 0..3 birth of genotype i, 4..7 death of genotype i - 4
EVENT_NAMES = tuple(f"birth {g}" for g in GENOTYPES) + tuple(f"death {g}" for g in GENOTYPES)

FIXATION, MUTANT_EXTINCTION, UNDECIDED = 0, 1, 2
OUTCOMES = ("fixation", "mutant-extinction", "undecided")

MIN_RESIDENTS = 10


class AbsorbedError(RuntimeError):
    """No event can happen: the population is empty."""


class DegenerateKError(ValueError):
    """The carrying capacity is too small to hold a resident population."""


@numba.njit(cache=True, inline="always")
def _fill_rates(n, b, d, c_over_K, beta1, beta2, out):
    """Write the 4 birth and 4 death rates of state ``n`` into ``out``;
    return their sum."""
    x0 = float(n[0])
    x1 = float(n[1])
    x2 = float(n[2])
    x3 = float(n[3])
    tot = x0 + x1 + x2 + x3
    if tot == 0.0:
        for k in range(8):
            out[k] = 0.0
        return 0.0
    inv = 1.0 / tot
    half_delta = 0.5 * (x2 * x1 - x0 * x3) * inv
    out[0] = b * (x0 + inv * (beta1 * x0 * (x0 + 0.5 * x1)
                              - beta2 * (x0 * (x2 + 0.25 * x3) + 0.25 * x1 * x2)) + half_delta)
    out[1] = b * (x1 + inv * (0.5 * beta1 * x1 * x0
                              - 0.25 * beta2 * (x1 * x2 + x0 * x3)) - half_delta)
    out[2] = b * (x2 + inv * (beta1 * x2 * (x2 + 0.5 * x3)
                              - beta2 * (x2 * (x0 + 0.25 * x1) + 0.25 * x3 * x0)) - half_delta)
    out[3] = b * (x3 + inv * (0.5 * beta1 * x3 * x2
                              - 0.25 * beta2 * (x3 * x0 + x2 * x1)) + half_delta)
    floor = -1e-9 * b * tot
    for k in range(4):
        if out[k] < 0.0:
            if out[k] < floor:
                raise ArithmeticError("materially negative birth rate")
            out[k] = 0.0
    per_capita_death = d + c_over_K * tot
    total = 0.0
    for k in range(4):
        out[4 + k] = float(n[k]) * per_capita_death
    for k in range(8):
        total += out[k]
    return total


@numba.njit(cache=True, inline="always")
def _choose(rates, total, u):
    target = u * total
    acc = 0.0
    for k in range(7):
        acc += rates[k]
        if target < acc and rates[k] > 0.0:
            return k
    # rounding can push target past the last partial sum
    for k in range(7, -1, -1):
        if rates[k] > 0.0:
            return k
    return 7


@numba.njit(cache=True)
def _step(rng, n, b, d, c_over_K, beta1, beta2):
    rates = np.empty(8)
    total = _fill_rates(n, b, d, c_over_K, beta1, beta2, rates)
    if total <= 0.0:
        return -1.0, -1
    dt = rng.exponential(1.0 / total)
    return dt, _choose(rates, total, rng.random())


@numba.njit(cache=True)
def rates_kernel(n, b, d, c_over_K, beta1, beta2):
    """Compiled rate vector (births then deaths); exposed for testing."""
    rates = np.empty(8)
    _fill_rates(n, b, d, c_over_K, beta1, beta2, rates)
    return rates


@numba.njit(cache=True)
def frozen_state_draws(rng, n, b, d, c_over_K, beta1, beta2, n_draws):
    """Draw ``n_draws`` events from a fixed state, recomputing the rates at
    every draw exactly as the event loop does.

    Returns per-event tallies and the sum of the waiting times.
    """
    tally = np.zeros(8, np.int64)
    rates = np.empty(8)
    state = n.copy()
    wait = 0.0
    for _ in range(n_draws):
        total = _fill_rates(state, b, d, c_over_K, beta1, beta2, rates)
        wait += rng.exponential(1.0 / total)
        k = _choose(rates, total, rng.random())
        tally[k] += 1
        # apply the event and undo it, so the loop touches the state as the
        # real simulator does while keeping it frozen
        delta = 1 if k < 4 else -1
        state[k % 4] += delta
        state[k % 4] -= delta
    return tally, wait


@numba.njit(cache=True)
def _run(rng, n0, b, d, c_over_K, beta1, beta2, K, rho0, zeta,
         thr_eps, thr_sqrt, fix_lo, fix_hi, max_events, stride):
    n = n0.copy()
    rates = np.empty(8)
    t = 0.0
    events = 0

    t_eps = -1.0
    t_sqrt = -1.0
    t_res = -1.0
    frac_at_eps = -1.0
    at_eps = np.full(4, -1, np.int64)
    max_prop_dev = 0.0
    max_size_dev = 0.0

    cap = 1024 if stride > 0 else 1
    log_t = np.empty(cap)
    log_n = np.empty((cap, 4), np.int64)
    n_log = 0
    if stride > 0:
        log_t[0] = 0.0
        log_n[0, :] = n
        n_log = 1

    outcome = 2
    while events < max_events:
        total = _fill_rates(n, b, d, c_over_K, beta1, beta2, rates)
        if total <= 0.0:
            # empty population: the mutant is gone
            outcome = 1
            break
        t += rng.exponential(1.0 / total)
        k = _choose(rates, total, rng.random())
        if k < 4:
            n[k] += 1
        else:
            n[k - 4] -= 1
        events += 1

        nP = n[0] + n[2]
        n_p = n[1] + n[3]
        if t_eps < 0.0:
            if n_p > 0:
                dev = abs(n[1] / n_p - rho0)
                if dev > max_prop_dev:
                    max_prop_dev = dev
            dev = abs(n_p / K - zeta)
            if dev > max_size_dev:
                max_size_dev = dev
            if nP == thr_eps:
                t_eps = t
                frac_at_eps = n[0] / nP
                at_eps[:] = n
        if t_sqrt < 0.0 and nP == thr_sqrt:
            t_sqrt = t
        if t_eps >= 0.0 and t_res < 0.0 and n[1] + n[2] + n[3] <= thr_eps:
            t_res = t

        if stride > 0 and events % stride == 0:
            if n_log == cap:
                cap *= 2
                new_t = np.empty(cap)
                new_n = np.empty((cap, 4), np.int64)
                new_t[:n_log] = log_t[:n_log]
                new_n[:n_log] = log_n[:n_log]
                log_t = new_t
                log_n = new_n
            log_t[n_log] = t
            log_n[n_log, :] = n
            n_log += 1

        if nP == 0:
            outcome = 1
            break
        if n[1] == 0 and n[2] == 0 and n[3] == 0 and fix_lo <= n[0] <= fix_hi:
            outcome = 0
            break

    return (outcome, t, events, n, t_eps, t_sqrt, t_res, frac_at_eps, at_eps,
            max_prop_dev, max_size_dev, log_t[:n_log], log_n[:n_log])


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one replica.

    ``mu`` defaults to a tenth of the fixation density and ``max_events`` to
    ``200 K ln K``.  ``record_stride`` > 0 keeps every k-th state.
    """

    params: ModelParams
    rho_A: float = 0.8
    mutant_allele: str = "A"
    eps: float = 0.05
    mu: float = None
    seed: int = 0
    max_events: int = None
    record_stride: int = 0

    def __post_init__(self):
        if self.mu is None:
            object.__setattr__(self, "mu", 0.1 * self.params.fixation_density)
        if self.max_events is None:
            K = self.params.K
            object.__setattr__(self, "max_events", int(200 * K * max(math.log(K), 1.0)))
        if self.mutant_allele not in ("A", "a"):
            raise ValueError(f"mutant_allele must be 'A' or 'a', got {self.mutant_allele!r}")
        if not 0 <= self.rho_A <= 1:
            raise ValueError(f"rho_A must lie in [0, 1], got {self.rho_A}")
        if not 0 < self.mu < self.params.fixation_density:
            raise ValueError(f"0 < mu < {self.params.fixation_density} required, got mu={self.mu}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.max_events > 0:
            raise ValueError("max_events must be positive")
        if self.record_stride < 0:
            raise ValueError("record_stride must be nonnegative")

    def with_(self, **changes) -> "SimConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if "params" in changes and "mu" not in changes:
            values["mu"] = None
        if ("params" in changes or "K" in changes) and "max_events" not in changes:
            values["max_events"] = None
        K = changes.pop("K", None)
        values.update(changes)
        if K is not None:
            values["params"] = values["params"].replace(K=float(K))
        return SimConfig(**values)

    @property
    def eps_threshold(self) -> int:
        return int(math.floor(self.eps * self.params.K))

    @property
    def sqrt_eps_threshold(self) -> int:
        return int(math.floor(math.sqrt(self.eps) * self.params.K))


@dataclass
class ReplicaOutcome:
    outcome: str
    t_absorb: float
    t_eps: float                        # None when the threshold was not hit
    t_sqrt_eps: float
    final_state: PopState
    proportion_A_in_P_at_eps: float
    events: int
    seed: int = None
    K: float = None
    t_residual: float = None            # residents + aP back below the eps threshold
    state_at_eps: PopState = None
    max_proportion_deviation: float = 0.0   # sup |N_Ap/N_p - rho_A| before t_eps
    max_size_deviation: float = 0.0         # sup |N_p/K - (b-d)/c| before t_eps
    trajectory: tuple = field(default=None, repr=False)   # (times, counts) when recorded

    @property
    def phase_durations(self):
        """Growth, sweep and clean-up durations of a fixation run."""
        if self.outcome != "fixation" or self.t_eps is None or self.t_residual is None:
            return None
        return (self.t_eps, self.t_residual - self.t_eps, self.t_absorb - self.t_residual)

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("trajectory")
        return row


def init_state(config: SimConfig) -> PopState:
    """Resident p-population at its equilibrium size plus one P-mutant."""
    p = config.params
    n_p = int(math.floor(p.resident_density * p.K))
    if n_p < MIN_RESIDENTS:
        raise DegenerateKError(f"only {n_p} residents for K={p.K}")
    n_Ap = int(math.floor(config.rho_A * n_p))
    n_ap = n_p - n_Ap
    if config.mutant_allele == "A":
        return PopState(1, n_Ap, 0, n_ap)
    return PopState(0, n_Ap, 1, n_ap)


def make_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def step(state: PopState, params: ModelParams, rng):
    """One transition of the chain.

    Returns ``(waiting_time, event_code, next_state)``; the event name is
    ``EVENT_NAMES[event_code]``.
    """
    n = state.counts
    dt, k = _step(make_rng(rng), n, params.b, params.d, params.c / params.K,
                  params.beta1, params.beta2)
    if k < 0:
        raise AbsorbedError("the population is empty")
    if k < 4:
        n[k] += 1
    else:
        n[k - 4] -= 1
    return dt, k, PopState.from_counts(n)


def _none_if_negative(x):
    return None if x < 0 else float(x)


def run_replica(config: SimConfig, initial: PopState = None) -> ReplicaOutcome:
    """Simulate until the mutant P-population dies out, the population enters
    the fixation neighbourhood, or the event budget is exhausted."""
    p = config.params
    state = init_state(config) if initial is None else initial
    n0 = state.counts
    n_p0 = state.n_p
    rho0 = state.n_Ap / n_p0 if n_p0 > 0 else config.rho_A
    chi = p.fixation_density
    # integer window of N_AP such that |N_AP/K - chi| <= mu
    fix_lo = int(math.ceil((chi - config.mu) * p.K - 1e-9))
    fix_hi = int(math.floor((chi + config.mu) * p.K + 1e-9))
    rng = make_rng(config.seed)
    (code, t, events, n, t_eps, t_sqrt, t_res, frac, at_eps, prop_dev, size_dev,
     log_t, log_n) = _run(rng, n0, p.b, p.d, p.c / p.K, p.beta1, p.beta2, float(p.K), rho0,
                          p.resident_density, config.eps_threshold, config.sqrt_eps_threshold,
                          fix_lo, fix_hi, int(config.max_events), int(config.record_stride))
    return ReplicaOutcome(
        outcome=OUTCOMES[code],
        t_absorb=float(t),
        t_eps=_none_if_negative(t_eps),
        t_sqrt_eps=_none_if_negative(t_sqrt),
        final_state=PopState.from_counts(n),
        proportion_A_in_P_at_eps=_none_if_negative(frac),
        events=int(events),
        seed=config.seed if not isinstance(config.seed, np.random.Generator) else None,
        K=p.K,
        t_residual=_none_if_negative(t_res),
        state_at_eps=PopState.from_counts(at_eps) if at_eps[0] >= 0 else None,
        max_proportion_deviation=float(prop_dev),
        max_size_deviation=float(size_dev),
        trajectory=(log_t.copy(), log_n.copy()) if config.record_stride > 0 else None,
    )


def write_trajectory_csv(outcome: ReplicaOutcome, path) -> None:
    """Strided trajectory as CSV with columns t, n_AP, n_Ap, n_aP, n_ap."""
    if outcome.trajectory is None:
        raise ValueError("no trajectory was recorded (record_stride = 0)")
    times, counts = outcome.trajectory
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "n_AP", "n_Ap", "n_aP", "n_ap"])
        for t, row in zip(times, counts):
            writer.writerow([repr(float(t))] + [int(v) for v in row])
