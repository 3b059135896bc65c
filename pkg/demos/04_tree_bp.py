# %% Colorings on a factor tree: belief propagation against brute force
import numpy as np
from ksat1rsb import tree_bp as tb

g = tb.random_factor_tree(3, 5, seed=4)
w = tb.random_weights(g, seed=4)
ms = tb.solve_tree_bp(g, w)
edge, vertex, count, _ = tb.gibbs_marginals(g, w)
err = max(np.abs(tb.edge_marginal(ms.qdot[e], ms.qhat[e]) - np.asarray(edge[e])).max() for e in ms.qdot)
print(count, "colorings; largest marginal error", err)
print("z identity gap", tb.z_identity_gap(g, ms))

# %% bootstrap percolation on a sparse graph from two seeds
from ksat1rsb.factor_graph import generate_instance
from ksat1rsb.preprocess import bsp
h = generate_instance(200, 1.5, 3, seed=1)
print(len(bsp({1, 2}, h)), "of", h.n)
