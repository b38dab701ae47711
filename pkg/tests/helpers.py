"""Random chain generators and brute-force oracles shared by the tests."""

import itertools

import numpy as np

from approxbisim.bisim import enumerate_deficiency, label_equal
from approxbisim.lmc import FiniteLmc, trace_probability, TraceSet, all_observations

ACCEPTANCE_LINES = []

AP_NAMES = ("a", "b")


def random_lmc(rng, n, n_ap=1, density=0.6, grid=None, n_labels=None):
    """Random chain; with ``grid`` the weights are small integers (ties are common)."""
    mask = rng.random((n, n)) < density
    if grid:
        W = rng.integers(1, grid + 1, (n, n)) * mask
    else:
        W = rng.random((n, n)) * mask
    for i in range(n):
        if W[i].sum() == 0:
            W[i, rng.integers(n)] = 1
    K = W / W.sum(axis=1, keepdims=True)
    ap = AP_NAMES[:n_ap]
    obs = all_observations(ap)
    if n_labels is not None:
        obs = obs[:n_labels]
    labels = [obs[rng.integers(len(obs))] for _ in range(n)]
    return FiniteLmc([f"x{i}" for i in range(n)], labels, K, ap)


def planted_lmc(rng, base_n, max_copies=2, n_ap=1, density=0.7):
    """Chain whose states come in groups of copies that are exactly bisimilar.

    Each base state is copied; a copy's mass towards a base state is split at
    random among that state's copies.
    """
    base = random_lmc(rng, base_n, n_ap=n_ap, density=density, grid=4)
    copies = rng.integers(1, max_copies + 1, base_n)
    owner = np.repeat(np.arange(base_n), copies)
    n = len(owner)
    K = np.zeros((n, n))
    for i in range(n):
        for j in range(base_n):
            cols = np.flatnonzero(owner == j)
            split = rng.dirichlet(np.ones(len(cols)))
            K[i, cols] = base.kernel[owner[i], j] * split
    K /= K.sum(axis=1, keepdims=True)
    labels = [base.labels[o] for o in owner]
    return FiniteLmc([f"y{i}" for i in range(n)], labels, K, base.ap), owner


def naive_maximal_bisim(model, eps):
    """Greatest fixpoint with subset enumeration for every lifting check."""
    R = label_equal(model)
    K = model.kernel
    while True:
        bad = []
        for i, j in zip(*np.nonzero(R)):
            d1, _ = enumerate_deficiency(K[i], K[j], R)
            d2, _ = enumerate_deficiency(K[j], K[i], R)
            if max(d1, d2) > eps + 1e-12:
                bad.append((i, j))
        if not bad:
            return R
        for i, j in bad:
            R[i, j] = R[j, i] = False


def sup_over_sets_tv(model, s, t, k):
    """max over trace sets A of P_s(A) - P_t(A), by enumerating every A."""
    alphabet = all_observations(model.ap)
    space = list(itertools.product(alphabet, repeat=k + 1))
    ps = np.array([trace_probability(model, s, TraceSet(k, frozenset([tr]))) for tr in space])
    pt = np.array([trace_probability(model, t, TraceSet(k, frozenset([tr]))) for tr in space])
    best = 0.0
    for bits in itertools.product((0, 1), repeat=len(space)):
        sel = np.array(bits, dtype=bool)
        best = max(best, abs(ps[sel].sum() - pt[sel].sum()))
    return best


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
