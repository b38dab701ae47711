"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (the lines are repeated in the terminal summary) or directly
with ``python3 tests/test_acceptance.py``.
"""

import contextlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from approxbisim.abstraction import build_abstract, embed_finite, grid_partition, verify_partition  # noqa: E402
from approxbisim.abstraction import weather_concrete, weather_partition  # noqa: E402
from approxbisim.bisim import (  # noqa: E402
    alt_relation,
    check_alt_bisim,
    exact_bisim,
    lifting_check,
    maximal_bisim,
    minimal_epsilon,
    minimal_epsilons,
)
from approxbisim.cli import main  # noqa: E402
from approxbisim.lmc import alt_counterexample, branching_example, tightness, trace_probability  # noqa: E402
from approxbisim.ltl import TRUE, And, Atom, Next, Not, Until, horizon, probability, satisfying_traces  # noqa: E402
from approxbisim.traces import bisim_bound, distinguishability_game, trace_distance, trace_distance_matrix  # noqa: E402
from helpers import planted_lmc, random_lmc, report  # noqa: E402


def test_criterion_1_case_study():
    buf = io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        code = main(["casestudy", "--n", "1000", "--analytic", "--format", "doc"])
    elapsed = time.perf_counter() - t0
    res = json.loads(buf.getvalue())["result"]
    p, a, diff, bound = res["abstract_probability"], res["analytic"], res["difference"], res["bound"]
    ok = (code == 0 and abs(p - 0.365437) <= 5e-5 and abs(a - 0.365845) <= 1e-5
          and diff <= bound and abs(bound - 0.002997) <= 5e-7 and elapsed < 10.0)
    assert report(1, ok, f"abstract {p:.6f}, analytic {a:.6f}, |diff| {diff:.6f} <= bound {bound:.6f}, "
                         f"{elapsed:.2f} s")


def test_criterion_2_tightness():
    worst_d, worst_e = 0.0, 0.0
    t0 = time.perf_counter()
    for eps in (0.1, 0.3, 0.7):
        m = tightness(eps)
        for k in range(1, 11):
            worst_d = max(worst_d, abs(trace_distance(m, "s1", "s2", k) - (1 - (1 - eps) ** k)))
        worst_e = max(worst_e, abs(minimal_epsilon(m, "s1", "s2") - eps))
    elapsed = time.perf_counter() - t0
    ok = worst_d <= 1e-12 and worst_e <= 1e-9
    assert report(2, ok, f"max |d_TV - (1-(1-eps)^k)| = {worst_d:.1e}, max |eps* - eps| = {worst_e:.1e}, "
                         f"{1e3 * elapsed:.0f} ms")


def test_criterion_3_no_converse():
    m = branching_example()
    d = max(trace_distance(m, "s1", "s2", k) for k in range(7))
    e = minimal_epsilon(m, "s1", "s2")
    ok = d <= 1e-12 and abs(e - 0.5) <= 1e-6
    assert report(3, ok, f"max d_TV over k <= 6 is {d:.1e}, minimal eps {e:.9f}")


def test_criterion_4_main_bound():
    rng = np.random.default_rng(20240401)
    t0 = time.perf_counter()
    checked, finite_pairs, violations = 0, 0, 0
    for trial in range(200):
        n = int(rng.integers(1, 7))
        grid = 4 if trial % 2 else None
        m = random_lmc(rng, n, n_ap=int(rng.integers(1, 3)), density=float(rng.uniform(0.3, 1.0)), grid=grid,
                       n_labels=int(rng.integers(1, 3)))
        D = trace_distance_matrix(m, 5)
        E = minimal_epsilons(m)
        for i in range(n):
            for j in range(n):
                if math.isfinite(E[i, j]):
                    finite_pairs += 1
                for k in range(6):
                    bound = bisim_bound(min(E[i, j] + 1e-9, 1.0), k) if math.isfinite(E[i, j]) else 1.0
                    checked += 1
                    violations += D[k, i, j] > bound + 1e-9
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 120
    assert report(4, ok, f"{checked} (pair, k) checks on 200 chains, {finite_pairs} pairs with finite eps*, "
                         f"{violations} violations, {elapsed:.1f} s")


def _random_instance(rng):
    n = int(rng.integers(1, 11))
    supp1 = rng.random(n) < rng.uniform(0.3, 1.0)
    supp2 = rng.random(n) < rng.uniform(0.3, 1.0)
    supp1[rng.integers(n)] = supp2[rng.integers(n)] = True
    if rng.random() < 0.5:
        mu1 = rng.integers(1, 5, n) * supp1 / 1.0
        mu2 = rng.integers(1, 5, n) * supp2 / 1.0
    else:
        mu1, mu2 = rng.random(n) * supp1, rng.random(n) * supp2
    mu1, mu2 = mu1 / mu1.sum(), mu2 / mu2.sum()
    R = rng.random((n, n)) < rng.uniform(0.0, 0.6)
    return mu1, mu2, R


def _random_formula(rng, depth=3):
    if depth == 0 or rng.random() < 0.3:
        return [TRUE, Atom("a"), Atom("b")][rng.integers(3)]
    op = rng.integers(4)
    if op == 0:
        return Not(_random_formula(rng, depth - 1))
    if op == 1:
        return Next(_random_formula(rng, depth - 1))
    if op == 2:
        return And(_random_formula(rng, depth - 1), _random_formula(rng, depth - 1))
    return Until(_random_formula(rng, depth - 1), _random_formula(rng, depth - 1), int(rng.integers(0, 4)))


def test_criterion_5_oracles():
    rng = np.random.default_rng(5)
    disagree = 0
    for trial in range(1000):
        mu1, mu2, R = _random_instance(rng)
        gap = lifting_check(mu1, mu2, R, 0.0, method="enumerate").deficiency
        # a third of the instances sit exactly on the threshold
        eps = [float(rng.uniform(0, 0.5)), min(gap, 1.0), min(gap + 1e-6, 1.0)][trial % 3]
        a = lifting_check(mu1, mu2, R, eps, method="flow").holds
        b = lifting_check(mu1, mu2, R, eps, method="enumerate").holds
        disagree += a != b
    worst, done = 0.0, 0
    while done < 200:
        f = _random_formula(rng)
        if horizon(f) > 3:
            continue
        m = random_lmc(rng, int(rng.integers(1, 5)), n_ap=2)
        ts = satisfying_traces(f, m.ap, horizon(f))
        for s in range(m.n):
            worst = max(worst, abs(probability(m, s, f) - trace_probability(m, s, ts)))
        done += 1
    ok = disagree == 0 and worst <= 1e-12
    assert report(5, ok, f"(a) {disagree} flow/enumeration disagreements in 1000 liftings; "
                         f"(b) max |DP - enumeration| = {worst:.1e} over 200 formulas")


def test_criterion_6_exact_case():
    rng = np.random.default_rng(6)
    mismatches = 0
    nontrivial = 0
    for trial in range(200):
        if trial % 2:
            m, _ = planted_lmc(rng, int(rng.integers(1, 5)), max_copies=3, n_ap=int(rng.integers(1, 3)))
        else:
            m = random_lmc(rng, int(rng.integers(1, 8)), n_ap=1, grid=2, density=0.8)
        blocks = exact_bisim(m)
        nontrivial += any(len(b) > 1 for b in blocks)
        mismatches += maximal_bisim(m, 0.0).classes() != blocks
    ok = mismatches == 0
    assert report(6, ok, f"{mismatches} mismatches on 200 chains ({nontrivial} with a non-singleton class)")


def test_criterion_7_closed_set_separation():
    details, ok = [], True
    for N in (4, 100):
        m = alt_counterexample(N)
        accepted = check_alt_bisim(m, alt_relation(N), 1.0 / N).ok
        p1, p2 = probability(m, "s1", "F<=2 a"), probability(m, "s2", "F<=2 a")
        e = minimal_epsilon(m, "s1", "s2")
        ok &= accepted and p1 == 1.0 and p2 == 0.0 and e >= 1 - 1 / N - 1e-6
        details.append(f"N={N}: accepted at 1/N={accepted}, P(F<=2 a) {p1:g} vs {p2:g}, eps* {e:.6f}")
    assert report(7, ok, "; ".join(details))


def test_criterion_8_game():
    m = tightness(0.5)
    t0 = time.perf_counter()
    rep = distinguishability_game(m, "s1", "s2", 1, 10**5, seed=8)
    elapsed = time.perf_counter() - t0
    again = distinguishability_game(m, "s1", "s2", 1, 10**5, seed=8)
    tol = 3 * math.sqrt(0.1875 / 1e5)
    ok = abs(rep.empirical_rate - 0.75) <= tol and again.wins == rep.wins and elapsed < 10
    assert report(8, ok, f"win rate {rep.empirical_rate:.5f} vs 0.75 (tol {tol:.4f}), repeatable, {elapsed:.2f} s")


def test_criterion_9_abstraction():
    ok, details = True, []
    model = weather_concrete()
    for N in (10, 100):
        rep = verify_partition(model, weather_partition(N), 1.0 / N, samples=500, seed=9)
        ok &= rep.max_distance <= 1.0 / N + 1e-6
        details.append(f"N={N}: max distance {rep.max_distance:.6f} <= {1 / N:g}")
    identical = 0
    chains = [branching_example(), tightness(0.3), alt_counterexample(4)]
    chains += [random_lmc(np.random.default_rng(s), 5, n_ap=2) for s in range(3)]
    for chain in chains:
        emb = embed_finite(chain)
        A = build_abstract(emb, grid_partition(emb, 0.5))
        identical += (A.states == chain.states and A.labels == chain.labels
                      and np.array_equal(A.kernel, chain.kernel))
    ok &= identical == len(chains)
    details.append(f"singleton cells reproduce {identical}/{len(chains)} chains exactly")
    assert report(9, ok, "; ".join(details))


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
