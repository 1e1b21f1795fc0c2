"""Invasion frequency over many replicas, compared with 1 - q_A.

Uses HOMOGAMY_THREADS worker processes when set.
"""

from homogamy import EnsembleSpec, ModelParams, SimConfig, run_ensemble

config = SimConfig(ModelParams(beta1=0.5, beta2=0.3), rho_A=1.0)
summary = run_ensemble(EnsembleSpec(config, replicas=1000, K_values=(500, 1000), master_seed=1))
for k in summary.per_K:
    lo, hi = k.invasion_interval
    print(f"K={k.K:>6.0f}  invasion {k.invasion_frequency:.3f}  95% CI [{lo:.3f}, {hi:.3f}]  "
          f"predicted {k.predicted_invasion:.3f}  mean fixation time {k.mean_fixation_time:.1f}")
