# %% Solutions, clusters, frozen configurations and colorings of a small instance
from ksat1rsb.factor_graph import drop_tautologies, generate_instance
from ksat1rsb import cluster_models as cm

g = generate_instance(12, 3.0, 3, seed=11)
sols = cm.enumerate_solutions(g)
cl = cm.clusters(sols, g.n)
print(g.n, g.m, len(sols), "solutions in", len(cl), "clusters")

# %% every cluster coarsens to a single frozen configuration once tautological
# clauses (a variable twice with opposite signs) are dropped
red = drop_tautologies(g)
print(red.m, cm.coarsen_consistent(red, cm.enumerate_solutions(red)))

# %% the full census row, as the clusters subcommand writes it
print(cm.census(g))
