"""How fast can two eps-bisimilar states drift apart?

s1 emits nothing forever, s2 jumps to an `a`-state with probability eps per
step.  The trace distance after k steps meets 1 - (1 - eps)^k exactly.
"""
import numpy as np

from approxbisim import minimal_epsilon, tightness
from approxbisim.traces import bisim_bound, trace_distances

for eps in (0.1, 0.3, 0.7):
    m = tightness(eps)
    d = trace_distances(m, "s1", "s2", 10)
    bound = np.array([bisim_bound(eps, k) for k in range(11)])
    print(f"eps={eps}  least eps of (s1, s2) = {minimal_epsilon(m, 's1', 's2'):.6f}")
    for k in (1, 2, 5, 10):
        print(f"   k={k:2d}  d_TV={d[k]:.6f}  bound={bound[k]:.6f}")
    print("   max gap:", np.abs(d - bound).max())
