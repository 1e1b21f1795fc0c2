"""Extinction probability of an A-mutant as a function of the resident
A-frequency, for two families of (beta1, beta2).

Writes figure1.csv in the current directory (beta1, beta2, rho_A, q_A, q_a).
"""

import numpy as np

from homogamy import montecarlo as mc

panels = mc.figure1_panels(b=1.0)
rows = mc.figure1_sweep(panels["left"] + panels["right"], b=1.0, points=201)
mc.write_figure1_csv(rows, "figure1.csv")

for k, (beta1, beta2) in enumerate(panels["left"] + panels["right"]):
    curve = rows[201 * k:201 * (k + 1)]
    q_A = np.array([r["q_A"] for r in curve])
    rho = np.array([r["rho_A"] for r in curve])
    flat = rho[q_A == 1.0]
    where = f"q_A = 1 on [{flat.min():.3f}, {flat.max():.3f}]" if len(flat) else "no plateau"
    print(f"beta1={beta1:.1f} beta2={beta2:.1f}: q_A(1) = {q_A[-1]:.4f}, {where}")
