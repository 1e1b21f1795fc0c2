"""Model parameters, population states and the transition rates of the
four-genotype birth-and-death process.

Genotypes are always indexed in the order ``AP, Ap, aP, ap``.  Birth rates are
computed twice: once from the closed-form expressions (:func:`birth_rates`) and
once by enumerating ordered parent pairs (:func:`pair_rate_aggregate`).  The two
routes share no code and are expected to agree to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GENOTYPES = ("AP", "Ap", "aP", "ap")
AP, Ap, aP, ap = range(4)

# index permutation exchanging the A and a labels
LABEL_SWAP = (aP, ap, AP, Ap)

NEGATIVE_RATE_SLACK = 1e-9


class ParameterError(ValueError):
    """Raised when model parameters violate the model assumptions."""


class ModelViolationError(ArithmeticError):
    """Raised when a computed rate is materially negative."""


@dataclass(frozen=True)
class ModelParams:
    """The six model constants.

    Args:
        b: per-capita birth rate under random mating.
        d: natural death rate.
        c: competition coefficient.
        K: carrying-capacity scale.
        beta1: reproductive bonus of homogamous matings initiated by a P carrier.
        beta2: penalty of heterogamous matings initiated by a P carrier.
    """

    b: float = 1.0
    d: float = 0.0
    c: float = 1.0
    K: float = 1000.0
    beta1: float = 0.5
    beta2: float = 0.3

    def __post_init__(self):
        for name in ("b", "d", "c", "K", "beta1", "beta2"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        if not self.b > self.d:
            raise ParameterError(f"b > d required, got b={self.b}, d={self.d}")
        if self.d < 0:
            raise ParameterError(f"d >= 0 required, got d={self.d}")
        if not self.beta1 >= 0:
            raise ParameterError(f"beta1 >= 0 required, got beta1={self.beta1}")
        if not 0 <= self.beta2 <= 1:
            raise ParameterError(f"0 <= beta2 <= 1 required, got beta2={self.beta2}")
        if not self.c > 0:
            raise ParameterError(f"c > 0 required, got c={self.c}")
        if not self.K > 0:
            raise ParameterError(f"K > 0 required, got K={self.K}")

    @property
    def resident_density(self) -> float:
        """Equilibrium density (b - d)/c of a p-only population."""
        return (self.b - self.d) / self.c

    @property
    def fixation_density(self) -> float:
        """Density ((1 + beta1) b - d)/c of the AP-monomorphic equilibrium."""
        return (self.b * (1 + self.beta1) - self.d) / self.c

    def replace(self, **changes) -> "ModelParams":
        fields = dict(b=self.b, d=self.d, c=self.c, K=self.K,
                      beta1=self.beta1, beta2=self.beta2)
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class PopState:
    """Genotype counts of the population."""

    n_AP: int
    n_Ap: int
    n_aP: int
    n_ap: int

    def __post_init__(self):
        for name in ("n_AP", "n_Ap", "n_aP", "n_ap"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @classmethod
    def from_counts(cls, counts) -> "PopState":
        return cls(*(int(x) for x in counts))

    @property
    def counts(self) -> np.ndarray:
        return np.array([self.n_AP, self.n_Ap, self.n_aP, self.n_ap], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.n_AP + self.n_Ap + self.n_aP + self.n_ap

    @property
    def n_P(self) -> int:
        return self.n_AP + self.n_aP

    @property
    def n_p(self) -> int:
        return self.n_Ap + self.n_ap

    @property
    def n_A(self) -> int:
        return self.n_AP + self.n_Ap

    @property
    def n_a(self) -> int:
        return self.n_aP + self.n_ap

    @property
    def delta_aP(self) -> int:
        return self.n_aP * self.n_Ap - self.n_AP * self.n_ap

    def swapped(self) -> "PopState":
        """The same population with the A and a labels exchanged."""
        return PopState(self.n_aP, self.n_ap, self.n_AP, self.n_Ap)


@dataclass(frozen=True)
class RateVector:
    birth: np.ndarray
    death: np.ndarray

    @property
    def total(self) -> float:
        return float(self.birth.sum() + self.death.sum())


def death_rates(state: PopState, params: ModelParams) -> np.ndarray:
    """Per-genotype death rates ``n_i (d + c n / K)``."""
    counts = state.counts.astype(float)
    return counts * (params.d + params.c / params.K * state.n)


def birth_terms(x, b: float, beta1: float, beta2: float) -> np.ndarray:
    """Closed-form birth rates for a real-valued state ``x`` (counts or densities).

    Returns zeros for an empty population.  No sign guard is applied here.
    """
    x_AP, x_Ap, x_aP, x_ap = (float(v) for v in x)
    total = x_AP + x_Ap + x_aP + x_ap
    if total <= 0:
        return np.zeros(4)
    delta = x_aP * x_Ap - x_AP * x_ap
    inv = 1.0 / total
    return b * np.array([
        x_AP + inv * (beta1 * x_AP * (x_AP + x_Ap / 2)
                      - beta2 * (x_AP * (x_aP + x_ap / 4) + x_Ap * x_aP / 4))
        + delta * inv / 2,
        x_Ap + inv * (beta1 * x_Ap * x_AP / 2
                      - beta2 * (x_Ap * x_aP / 4 + x_AP * x_ap / 4))
        - delta * inv / 2,
        x_aP + inv * (beta1 * x_aP * (x_aP + x_ap / 2)
                      - beta2 * (x_aP * (x_AP + x_Ap / 4) + x_ap * x_AP / 4))
        - delta * inv / 2,
        x_ap + inv * (beta1 * x_ap * x_aP / 2
                      - beta2 * (x_ap * x_AP / 4 + x_aP * x_Ap / 4))
        + delta * inv / 2,
    ])


def birth_rates(state: PopState, params: ModelParams) -> np.ndarray:
    """Per-genotype birth rates of the population process.

    Tiny negative values produced by cancellation are clamped to zero; anything
    below ``-1e-9 * b * n`` raises :class:`ModelViolationError`.
    """
    rates = birth_terms(state.counts, params.b, params.beta1, params.beta2)
    floor = -NEGATIVE_RATE_SLACK * params.b * state.n
    if np.any(rates < floor):
        raise ModelViolationError(f"negative birth rate {rates} in state {state}")
    return np.maximum(rates, 0.0)


def rate_vector(state: PopState, params: ModelParams) -> RateVector:
    return RateVector(birth_rates(state, params), death_rates(state, params))


# Ordered mating pairs (first parent, second parent).  The first parent
# initiates the mating; when it carries P its fertility is scaled by
# 1 + beta1 (same locus-1 allele), or 1 - beta2 (different allele).
# Offspring inherit each locus from either parent with probability 1/2.
def _fertility_factor(first: str, second: str, beta1: float, beta2: float) -> float:
    if first[1] == "p":
        return 1.0
    if first[0] == second[0]:
        return 1.0 + beta1
    return 1.0 - beta2


def _mendelian_offspring(first: str, second: str) -> dict[str, float]:
    dist: dict[str, float] = {}
    for locus1 in (first[0], second[0]):
        for locus2 in (first[1], second[1]):
            child = locus1 + locus2
            dist[child] = dist.get(child, 0.0) + 0.25
    return dist


MATING_TABLE = tuple(
    (first, second, _mendelian_offspring(first, second))
    for first in GENOTYPES for second in GENOTYPES
)


def pair_rate_aggregate(state: PopState, params: ModelParams) -> np.ndarray:
    """Birth rates obtained by summing over all ordered parent pairs.

    A first parent of genotype i meets a partner of genotype j at rate
    ``b n_i n_j / n``; the pair then produces offspring according to its
    fertility factor and Mendelian segregation.
    """
    counts = dict(zip(GENOTYPES, (float(x) for x in state.counts)))
    n = state.n
    out = dict.fromkeys(GENOTYPES, 0.0)
    if n == 0:
        return np.zeros(4)
    for first, second, offspring in MATING_TABLE:
        pair_rate = (params.b * _fertility_factor(first, second, params.beta1, params.beta2)
                     * counts[first] * counts[second] / n)
        for child, prob in offspring.items():
            out[child] += pair_rate * prob
    return np.array([out[g] for g in GENOTYPES])
