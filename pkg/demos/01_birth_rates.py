"""Birth rates of the four genotypes, computed two ways.

The closed-form rates and the sum over ordered mating pairs should agree to
rounding error.  With no preference (beta1 = beta2 = 0) the population
reproduces at rate b per individual whatever its composition.
"""

import numpy as np

from homogamy import ModelParams, PopState, birth_rates, pair_rate_aggregate

params = ModelParams(b=1.0, beta1=0.5, beta2=0.3)
state = PopState(n_AP=12, n_Ap=300, n_aP=5, n_ap=80)

closed = birth_rates(state, params)
pairs = pair_rate_aggregate(state, params)
print("genotype   closed form      pair sum")
for name, x, y in zip(("AP", "Ap", "aP", "ap"), closed, pairs):
    print(f"{name:>8} {x:14.9f} {y:14.9f}")
print("max relative difference:", np.max(np.abs(closed - pairs) / pairs))

neutral = ModelParams(b=1.0, beta1=0.0, beta2=0.0)
print("total births without preference:", birth_rates(state, neutral).sum(), "= b n =", state.n)
