# %% First and second moment curves for random k-SAT
import numpy as np
from ksat1rsb import moments

for k in (3, 4, 5, 8):
    print(k, moments.alpha1_root(k), 2 ** k * np.log(2))

# %% Below alpha_1 the pair curve phi(z) - 2 phi_1 peaks at z = 1/2 for large k;
# for k = 3 other maxima appear well before alpha_1
curve = moments.moment_curve(3, 3.0, "phi_minus_2phi1", grid=201)
print(curve.flags)

# %% exact pair count on a tiny instance against the asymptotic formula
from fractions import Fraction
print(moments.exact_pair_moment(6, 4, 3, Fraction(1, 2), exact=True))
print(moments.brute_force_pair_moment(6, 4, 3, Fraction(1, 2)))
