"""Replica ensembles and their reduction to invasion statistics.

Replica seeds are derived from ``(master seed, K, replica index)`` with
:class:`numpy.random.SeedSequence`, so every replica is reproducible on its own
and the aggregation does not depend on how replicas were scheduled.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .branching import (CRITICAL_TOL, ResidentContext, branching_rates, extinction_probabilities,
                        growth_spectrum)
from .rates import ModelParams
from .ssa import ReplicaOutcome, SimConfig, run_replica

log = __import__("logging").getLogger(__name__)


class CriticalParametersError(ValueError):
    """The branching approximation is critical (lambda == 0)."""


class SubcriticalError(ValueError):
    """Ensemble requested for a subcritical model without opting in."""


class InsufficientDataError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    config: SimConfig
    replicas: int
    K_values: tuple
    master_seed: int = 0
    allow_subcritical: bool = False

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not self.K_values or any(K <= 0 for K in self.K_values):
            raise ValueError("K schedule must be nonempty and positive")


@dataclass(frozen=True)
class Predictions:
    """Analytic limits computed from the ensemble's own parameters."""

    lam: float
    q_A: float
    q_a: float
    pi_A: float
    mutant_allele: str
    b: float
    beta1: float

    @property
    def q(self) -> float:
        return self.q_A if self.mutant_allele == "A" else self.q_a

    @property
    def invasion_probability(self) -> float:
        return 1.0 - self.q

    @property
    def supercritical(self) -> bool:
        return self.lam > CRITICAL_TOL

    @property
    def fixation_slope(self):
        """Limit of (fixation time)/ln K; None unless supercritical."""
        if not self.supercritical or self.beta1 <= 0:
            return None
        return 1.0 / self.lam + 2.0 / (self.b * self.beta1)

    @property
    def growth_slope(self):
        return 1.0 / self.lam if self.supercritical else None


def predictions_for(config: SimConfig) -> Predictions:
    p = config.params
    model = branching_rates(ResidentContext(config.rho_A), p)
    spec = growth_spectrum(model.J)
    q = extinction_probabilities(model)
    return Predictions(lam=spec.lam, q_A=q.q_A, q_a=q.q_a, pi_A=float(spec.pi[0]),
                       mutant_allele=config.mutant_allele, b=p.b, beta1=p.beta1)


def replica_seed(master_seed: int, K: float, index: int) -> int:
    """64-bit seed of replica ``index`` at carrying capacity ``K``."""
    k_bits = int(np.float64(K).view(np.uint64))
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(k_bits, int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    if trials == 0:
        return (0.0, 1.0)
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def predicted_extinction_state(config: SimConfig) -> np.ndarray:
    """Rescaled state left behind when the mutant dies out: the unchanged
    resident population."""
    zeta = config.params.resident_density
    return np.array([0.0, config.rho_A * zeta, 0.0, (1 - config.rho_A) * zeta])


@dataclass
class KSummary:
    K: float
    replicas: int
    fixations: int
    extinctions: int
    undecided: int
    invasion_frequency: float
    invasion_interval: tuple
    mean_fixation_time: float
    median_fixation_time: float
    mean_extinction_time: float
    mean_t_eps_given_fixation: float
    mean_extinction_l1: float
    mean_fraction_A_at_eps: float
    reached_eps: int
    proportion_exits: int        # replicas with sup |N_Ap/N_p - rho_A| > eps^(1/6) before t_eps
    size_exits: int              # replicas with sup |N_p/K - (b-d)/c| > eps before t_eps
    predicted_invasion: float
    predicted_fixation_time: float
    predicted_growth_time: float


@dataclass
class EnsembleSummary:
    spec: EnsembleSpec
    predictions: Predictions
    per_K: list
    outcomes: dict = field(repr=False)   # K -> list of ReplicaOutcome in index order

    def for_K(self, K) -> KSummary:
        for s in self.per_K:
            if s.K == K:
                return s
        raise KeyError(K)


def _nanmean(values):
    return float(np.mean(values)) if len(values) else math.nan


def summarize(config: SimConfig, K: float, outcomes: list, pred: Predictions) -> KSummary:
    fix = [o for o in outcomes if o.outcome == "fixation"]
    ext = [o for o in outcomes if o.outcome == "mutant-extinction"]
    undecided = len(outcomes) - len(fix) - len(ext)
    decided = len(fix) + len(ext)
    freq = len(fix) / decided if decided else math.nan
    target = predicted_extinction_state(config) * 1.0
    l1 = [float(np.abs(o.final_state.counts / K - target).sum()) for o in ext]
    at_eps = [o.proportion_A_in_P_at_eps for o in outcomes if o.proportion_A_in_P_at_eps is not None]
    fix_times = [o.t_absorb for o in fix]
    u_thr = config.eps ** (1 / 6)
    lnK = math.log(K)
    return KSummary(
        K=K,
        replicas=len(outcomes),
        fixations=len(fix),
        extinctions=len(ext),
        undecided=undecided,
        invasion_frequency=freq,
        invasion_interval=wilson_interval(len(fix), decided),
        mean_fixation_time=_nanmean(fix_times),
        median_fixation_time=float(np.median(fix_times)) if fix_times else math.nan,
        mean_extinction_time=_nanmean([o.t_absorb for o in ext]),
        mean_t_eps_given_fixation=_nanmean([o.t_eps for o in fix if o.t_eps is not None]),
        mean_extinction_l1=_nanmean(l1),
        mean_fraction_A_at_eps=_nanmean(at_eps),
        reached_eps=len(at_eps),
        proportion_exits=sum(o.max_proportion_deviation > u_thr for o in outcomes),
        size_exits=sum(o.max_size_deviation > config.eps for o in outcomes),
        predicted_invasion=pred.invasion_probability,
        predicted_fixation_time=pred.fixation_slope * lnK if pred.fixation_slope else math.nan,
        predicted_growth_time=lnK / pred.lam if pred.supercritical else math.nan,
    )


def _run_chunk(config: SimConfig, seeds):
    return [run_replica(config.with_(seed=s)) for s in seeds]


def worker_count(workers=None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("HOMOGAMY_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_replicas(config: SimConfig, seeds, workers=None) -> list:
    """Run one replica per seed; results come back in seed order."""
    seeds = list(seeds)
    n_workers = min(worker_count(workers), len(seeds)) if seeds else 1
    if n_workers <= 1:
        return _run_chunk(config, seeds)
    chunk = max(1, len(seeds) // (8 * n_workers))
    pieces = [seeds[i:i + chunk] for i in range(0, len(seeds), chunk)]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        results = pool.map(_run_chunk, [config] * len(pieces), pieces)
        return [o for part in results for o in part]


def run_ensemble(spec: EnsembleSpec, workers=None) -> EnsembleSummary:
    """Run ``spec.replicas`` replicas at every K of the schedule."""
    pred = predictions_for(spec.config)
    if abs(pred.lam) < CRITICAL_TOL:
        raise CriticalParametersError(f"lambda = {pred.lam:.3e} is critical")
    if not pred.supercritical and not spec.allow_subcritical:
        raise SubcriticalError(f"lambda = {pred.lam:.4g} < 0; pass allow_subcritical=True")
    per_K, outcomes = [], {}
    for K in spec.K_values:
        config = spec.config.with_(K=float(K))
        seeds = [replica_seed(spec.master_seed, K, i) for i in range(spec.replicas)]
        log.info("K=%s: running %d replicas", K, spec.replicas)
        runs = run_replicas(config, seeds, workers)
        outcomes[K] = runs
        per_K.append(summarize(config, float(K), runs, pred))
    return EnsembleSummary(spec=spec, predictions=pred, per_K=per_K, outcomes=outcomes)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    predicted_slope: float
    growth_slope: float
    growth_intercept: float
    predicted_growth_slope: float
    log_K: np.ndarray
    mean_times: np.ndarray
    mean_t_eps: np.ndarray

    @property
    def relative_error(self) -> float:
        return abs(self.slope - self.predicted_slope) / self.predicted_slope

    @property
    def growth_relative_error(self) -> float:
        return abs(self.growth_slope - self.predicted_growth_slope) / self.predicted_growth_slope


def fixation_time_scaling(summary: EnsembleSummary, min_fixations: int = 200) -> ScalingFit:
    """Least-squares fit of the mean fixation time (and of the mean growth
    phase duration ``t_eps``) against ``ln K``."""
    rows = summary.per_K
    if len({s.K for s in rows}) < 3:
        raise InsufficientDataError("insufficient-fixations: need at least 3 distinct K")
    short = [s.K for s in rows if s.fixations < min_fixations]
    if short:
        raise InsufficientDataError(f"insufficient-fixations at K={short}")
    pred = summary.predictions
    if pred.fixation_slope is None:
        raise InsufficientDataError("insufficient-fixations: model is not supercritical")
    log_K = np.log([s.K for s in rows])
    times = np.array([s.mean_fixation_time for s in rows])
    t_eps = np.array([s.mean_t_eps_given_fixation for s in rows])
    slope, intercept = np.polyfit(log_K, times, 1)
    g_slope, g_intercept = np.polyfit(log_K, t_eps, 1)
    return ScalingFit(float(slope), float(intercept), pred.fixation_slope,
                      float(g_slope), float(g_intercept), pred.growth_slope,
                      log_K, times, t_eps)


def extinction_composition_check(summary: EnsembleSummary, min_extinctions: int = 200) -> dict:
    """Distance between the state left by a failed invasion and the untouched
    resident equilibrium, per K."""
    short = [s.K for s in summary.per_K if s.extinctions < min_extinctions]
    if short:
        raise InsufficientDataError(f"insufficient-extinctions at K={short}")
    config = summary.spec.config
    distances = {s.K: s.mean_extinction_l1 for s in summary.per_K}
    Ks = sorted(distances)
    return {
        "predicted_state": predicted_extinction_state(config),
        "mean_l1": distances,
        "scale": config.params.resident_density,
        "shrinks": distances[Ks[-1]] < distances[Ks[0]],
    }


def composition_at_eps(summary: EnsembleSummary, K=None) -> tuple[float, int]:
    """Mean A-fraction among P-individuals at the first hit of ``eps K``,
    pooled over the replicas that got there."""
    Ks = summary.outcomes if K is None else [K]
    fractions = [o.proportion_A_in_P_at_eps for k in Ks for o in summary.outcomes[k]
                 if o.proportion_A_in_P_at_eps is not None]
    return _nanmean(fractions), len(fractions)


# --------------------------------------------------------------------------
# extinction probability curves

def figure1_panels(b: float = 1.0):
    """Default curve families: beta2 = 0.7 with varying beta1, and beta1 = 0.2
    with varying beta2."""
    left = [(beta1, 0.7) for beta1 in (0.1, 0.2, 0.4, 0.6, 0.8)]
    right = [(0.2, beta2) for beta2 in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)]
    return {"left": left, "right": right}


def symmetric_grid(points: int):
    """Contexts ``rho_A = k/(points-1)`` whose mirror images are exact."""
    m = points - 1
    return [ResidentContext(k / m, (m - k) / m) for k in range(points)]


def figure1_sweep(pairs, b: float = 1.0, points: int = 201) -> list[dict]:
    """Extinction probabilities along a ``rho_A`` grid for each (beta1, beta2)."""
    if not pairs or points < 2:
        raise ValueError("need at least one (beta1, beta2) pair and two grid points")
    rows = []
    for beta1, beta2 in pairs:
        params = ModelParams(b=b, d=0.0, c=1.0, K=1.0, beta1=beta1, beta2=beta2)
        for ctx in symmetric_grid(points):
            q = extinction_probabilities(branching_rates(ctx, params))
            rows.append({"beta1": beta1, "beta2": beta2, "rho_A": ctx.rho_A,
                         "q_A": q.q_A, "q_a": q.q_a})
    return rows


# --------------------------------------------------------------------------
# CSV output

REPLICA_COLUMNS = ("seed", "K", "outcome", "t_eps", "t_sqrt_eps", "t_absorb",
                   "n_AP", "n_Ap", "n_aP", "n_ap", "events")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_replicas_csv(summary: EnsembleSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(REPLICA_COLUMNS)
        for K in summary.spec.K_values:
            for o in summary.outcomes[K]:
                s = o.final_state
                w.writerow([_fmt(v) for v in (o.seed, K, o.outcome, o.t_eps, o.t_sqrt_eps,
                                              o.t_absorb, s.n_AP, s.n_Ap, s.n_aP, s.n_ap,
                                              o.events)])


SUMMARY_COLUMNS = ("K", "replicas", "fixations", "extinctions", "undecided",
                   "invasion_frequency", "invasion_low", "invasion_high",
                   "mean_fixation_time", "median_fixation_time", "mean_extinction_time",
                   "mean_t_eps_given_fixation", "mean_extinction_l1", "mean_fraction_A_at_eps",
                   "predicted_invasion", "predicted_fixation_time", "predicted_growth_time")


def write_summary_csv(summary: EnsembleSummary, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summary.per_K:
            lo, hi = s.invasion_interval
            w.writerow([_fmt(v) for v in (
                s.K, s.replicas, s.fixations, s.extinctions, s.undecided,
                s.invasion_frequency, lo, hi, s.mean_fixation_time, s.median_fixation_time,
                s.mean_extinction_time, s.mean_t_eps_given_fixation, s.mean_extinction_l1,
                s.mean_fraction_A_at_eps, s.predicted_invasion, s.predicted_fixation_time,
                s.predicted_growth_time)])


def write_figure1_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["beta1", "beta2", "rho_A", "q_A", "q_a"])
        for r in rows:
            w.writerow([_fmt(r[k]) for k in ("beta1", "beta2", "rho_A", "q_A", "q_a")])
