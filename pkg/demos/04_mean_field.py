"""The deterministic large-population limit.

Starting with more AP than aP and more Ap than ap, the system settles on the
AP-only equilibrium; the locus-1 diversity D never increases on the way.
"""

import numpy as np

from homogamy import ModelParams, equilibria, integrate
from homogamy.meanfield import chi_AP, convergence_condition

params = ModelParams(b=1.0, beta1=0.5, beta2=0.3)
z0 = np.array([0.3, 0.5, 0.1, 0.2])
print("hypotheses:", convergence_condition(z0, params))

traj = integrate(z0, params, 300.0, t_eval=np.linspace(0, 300, 3001))
for t in (0, 10, 50, 100, 300):
    i = int(t * 10)
    print(f"t={t:5.0f}  z={np.array2string(traj.z[i], precision=5)}  D={traj.D[i]:.5f}")
print("distance to chi_AP:", np.abs(traj.final - chi_AP(params)).max())
print("D nonincreasing:", bool(np.all(np.diff(traj.D) <= 1e-12)))

for rec in equilibria(params):
    print(f"{rec.family:>12} {rec.stability:>15}  {np.array2string(rec.point, precision=3)}")
