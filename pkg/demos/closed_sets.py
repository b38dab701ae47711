"""Quantifying only over closed sets gives a much weaker notion.

With N + 1 chained t-states the relation t_k ~ t_{k+1} links t_0 to t_N through
a path of small steps.  Its closed sets can not split the chain, so s1 and s2
pass at eps = 1/N even though one reaches `a` surely in two steps and the
other never does.
"""
from approxbisim import alt_counterexample, check_alt_bisim, check_relation, minimal_epsilon
from approxbisim.bisim import alt_relation
from approxbisim.ltl import probability

for N in (4, 20, 100):
    m = alt_counterexample(N)
    rel = alt_relation(N)
    alt = check_alt_bisim(m, rel, 1.0 / N)
    lift = check_relation(m, rel, 1.0 / N)
    print(f"N={N}")
    print("   closed-set notion at 1/N:", alt.ok)
    print("   lifting notion at 1/N:   ", lift.ok, lift.reason)
    print("   P(F<=2 a):", probability(m, "s1", "F<=2 a"), probability(m, "s2", "F<=2 a"))
    print("   least eps:", minimal_epsilon(m, "s1", "s2"))
