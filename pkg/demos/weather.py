"""Weather case study: rain r in {0, 1}, humidity h in [0, 1).

The abstract chain has 2N cells.  The probability of two rainy days in a row
within three days is compared with the exact value of the continuous model,
and the gap must stay under 1 - (1 - 1/N)^3.
"""
import time

from approxbisim import abstraction, ltl
from approxbisim.traces import bisim_bound

phi = ltl.parse(abstraction.TWO_RAINY_DAYS)
exact = abstraction.weather_analytic().total
print("formula:", abstraction.TWO_RAINY_DAYS, " horizon", ltl.horizon(phi))
print(f"continuous model: {exact:.6f}")

for N in (4, 10, 100, 1000):
    t0 = time.perf_counter()
    W = abstraction.weather_abstract(N)
    p = ltl.probability(W, abstraction.weather_state(0, N // 2), phi)
    b = bisim_bound(1.0 / N, 3)
    print(f"N={N:5d}  P={p:.6f}  |diff|={abs(p - exact):.6f}  bound={b:.6f}  ({time.perf_counter() - t0:.2f} s)")

# the same chain through numerical integration of the concrete kernel
A = abstraction.build_abstract(abstraction.weather_concrete(), abstraction.weather_partition(10))
print("quadrature vs closed form, N=10:", abs(A.kernel - abstraction.weather_abstract(10).kernel).max())

rep = abstraction.verify_partition(abstraction.weather_concrete(), abstraction.weather_partition(10), 0.1)
print(f"sampled same-cell distance {rep.max_distance:.4f} at {rep.worst_pair}")
