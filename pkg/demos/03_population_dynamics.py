# %% Population dynamics and the 1RSB free energy at k = 5
import math
from ksat1rsb import popdyn as pd, free_energy as fe

k = 5
lbd, ubd = 2 ** k * math.log(2) - 2, 2 ** k * math.log(2) - 1
pops = {a: pd.run_to_stationarity(k, a, 50000, seed=1) for a in (lbd, ubd)}
for a, p in pops.items():
    print(f"alpha={a:.3f}: {p.iteration} iterations, W1 history tail {p.history[-3:]}")

# %% Phi changes sign between the two ends of the window
for a, p in pops.items():
    e = fe.phi_estimate(p, a, 2 * 10 ** 5, seed=2)
    print(f"Phi({a:.3f}) = {e.mean:.5f} +- {e.stderr:.1e}")

# %% distance between coupled chains shrinks geometrically
D = pd.contraction_profile(k, lbd, 20000, 15, seed=3)
print(D[1:] / D[:-1])
