"""An observer sees one trace and guesses which of two states produced it.

The best possible success rate is 1/2 + d_TV/2.  A MAP observer gets there.
"""
from approxbisim import tightness
from approxbisim.traces import distinguishability_game

m = tightness(0.5)
for k in (1, 2, 4):
    for rounds in (1000, 100_000):
        rep = distinguishability_game(m, "s1", "s2", k, rounds, seed=1)
        print(f"k={k} rounds={rounds:6d}  empirical={rep.empirical_rate:.4f}  optimal={rep.exact_rate:.4f}")
