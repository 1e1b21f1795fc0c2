"""Invasion of a homogamy-inducing mutant allele in a two-locus
birth-and-death population: exact simulation, branching approximation and
mean-field limit."""

from .branching import (BranchingModel, ConvergenceError, ExtinctionProbs, ResidentContext,
                        Spectrum, branching_rates, extinction_closed_form_rho1,
                        extinction_phase_matrix, extinction_probabilities, growth_spectrum,
                        is_supercritical, simulate_branching, supercriticality_threshold)
from .meanfield import MFTrajectory, equilibria, integrate, vector_field
from .montecarlo import (EnsembleSpec, EnsembleSummary, extinction_composition_check,
                         figure1_sweep, fixation_time_scaling, run_ensemble)
from .rates import (GENOTYPES, ModelParams, ModelViolationError, ParameterError, PopState,
                    birth_rates, death_rates, pair_rate_aggregate)
from .ssa import ReplicaOutcome, SimConfig, run_replica, step

__version__ = "0.1.0"
