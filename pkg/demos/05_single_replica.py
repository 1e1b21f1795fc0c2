"""One exact stochastic run: a single AP-mutant among 10^4 p-residents.

Most runs end quickly with the mutant lost; the loop below keeps drawing seeds
until it finds an invasion and then prints its three phases.
"""

import math

from homogamy import ModelParams, SimConfig, run_replica
from homogamy.branching import branching_rates

params = ModelParams(K=10_000.0, beta1=0.5, beta2=0.3)
config = SimConfig(params, rho_A=0.8)
lam = branching_rates(0.8, params).lam

for seed in range(100):
    out = run_replica(config.with_(seed=seed))
    if out.outcome == "fixation":
        break
print(f"seed {seed}: {out.outcome} after {out.events} events, t = {out.t_absorb:.1f}")
growth, sweep, cleanup = out.phase_durations
print(f"growth to eps K: {growth:.1f}   sweep: {sweep:.1f}   clean-up: {cleanup:.1f}")
print(f"A-fraction among P at eps K: {out.proportion_A_in_P_at_eps:.3f}")
print(f"large-K prediction for the total: {(1 / lam + 2 / params.beta1) * math.log(params.K):.1f}")
