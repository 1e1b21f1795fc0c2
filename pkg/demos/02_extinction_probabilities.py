"""Will a single P-mutant invade?

The branching approximation gives a growth rate lambda and extinction
probabilities (q_A, q_a) for a mutant born with allele A or a.  When every
resident carries A there are closed forms to compare against.
"""

from homogamy import ModelParams, branching_rates, extinction_probabilities, is_supercritical
from homogamy.branching import extinction_closed_form_rho1

params = ModelParams(b=1.0, beta1=0.5, beta2=0.3)

for rho_A in (0.0, 0.2, 0.5, 0.8, 1.0):
    model = branching_rates(rho_A, params)
    q = extinction_probabilities(model)
    print(f"rho_A={rho_A:.1f}  lambda={model.lam:+.5f}  q_A={q.q_A:.6f}  q_a={q.q_a:.6f}")

print("closed forms at rho_A = 1:", extinction_closed_form_rho1(params))

# With beta2 > beta1 a mutant cannot invade a well-mixed resident population.
choosy = ModelParams(beta1=0.2, beta2=0.7)
for rho_A in (0.5, 0.8, 0.85, 0.9):
    print(f"beta1=0.2 beta2=0.7 rho_A={rho_A}: supercritical={is_supercritical(rho_A, choosy)}")
