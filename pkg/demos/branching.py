"""Equal trace laws do not imply a small bisimulation distance.

Both starts emit a, a, then b or c with probability 1/2 each.  s1 decides the
branch early, s2 decides it late, and that costs 1/2 in bisimulation terms.
"""
from approxbisim import branching_example, maximal_bisim, minimal_epsilon
from approxbisim.traces import trace_distances, trace_distribution

m = branching_example()
print(m.states)
print(m.kernel)

for s in ("s1", "s2"):
    print(s, {tuple("".join(sorted(o)) or "-" for o in t): p for t, p in trace_distribution(m, s, 2).probs.items()})

print("d_TV for k = 0..6:", trace_distances(m, "s1", "s2", 6))
print("least eps:", minimal_epsilon(m, "s1", "s2"))

for eps in (0.49, 0.5):
    print(f"eps={eps}:", maximal_bisim(m, eps).named_pairs())
