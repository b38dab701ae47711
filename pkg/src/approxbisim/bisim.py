"""Exact and epsilon-approximate probabilistic bisimulation on finite chains.

A symmetric relation ``R`` is an eps-bisimulation when related states carry the
same label and, for every related ``(s1, s2)`` and every set ``T`` of states,
``kappa(s2, R(T)) >= kappa(s1, T) - eps``.  On a finite space this "lifting"
condition is a transportation feasibility question, decided here by max-flow.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .flow import max_flow, max_weight_closure
from .lmc import CMP_SLACK, ROW_TOL, FiniteLmc, LmcError, ScaleGuardError, alt_counterexample

CLOSED_SET_LIMIT = 24
ENUM_LIMIT = 20


@dataclass(frozen=True, eq=False)
class Relation:
    """Boolean relation matrix over the states of one chain, with its tolerance."""

    matrix: np.ndarray
    eps: float = 0.0
    states: tuple | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=bool, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LmcError(f"relation must be square, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_pairs(cls, model: FiniteLmc, pairs: Iterable, eps: float = 0.0, symmetrize: bool = False) -> "Relation":
        m = np.zeros((model.n, model.n), dtype=bool)
        for a, b in pairs:
            i, j = model.index(a), model.index(b)
            m[i, j] = True
            if symmetrize:
                m[j, i] = True
        return cls(m, eps, model.states)

    @classmethod
    def identity(cls, model: FiniteLmc, eps: float = 0.0) -> "Relation":
        return cls(np.eye(model.n, dtype=bool), eps, model.states)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __contains__(self, pair) -> bool:
        i, j = pair
        return bool(self.matrix[i, j])

    def __eq__(self, other) -> bool:
        return isinstance(other, Relation) and np.array_equal(self.matrix, other.matrix)

    __hash__ = object.__hash__

    def pairs(self) -> list:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.matrix))]

    def named_pairs(self) -> list:
        names = self.states or tuple(str(i) for i in range(self.n))
        return [(names[i], names[j]) for i, j in self.pairs()]

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.matrix, self.matrix.T))

    def image(self, subset) -> np.ndarray:
        """R(T) as a boolean mask, for T given as a mask or an index collection."""
        mask = _as_mask(subset, self.n)
        return self.matrix[mask].any(axis=0)

    def issubset(self, other: "Relation") -> bool:
        return bool(np.all(~self.matrix | other.matrix))

    def classes(self) -> list:
        """Equivalence classes of the reflexive-transitive closure."""
        from scipy.sparse.csgraph import connected_components

        _, comp = connected_components(self.matrix | self.matrix.T, directed=False)
        out: dict = {}
        for i, c in enumerate(comp):
            out.setdefault(c, []).append(i)
        return sorted((frozenset(v) for v in out.values()), key=min)


def _as_mask(subset, n: int) -> np.ndarray:
    arr = np.asarray(subset)
    if arr.dtype == bool and arr.shape == (n,):
        return arr
    mask = np.zeros(n, dtype=bool)
    mask[list(subset)] = True
    return mask


def _rel_matrix(rel) -> np.ndarray:
    return rel.matrix if isinstance(rel, Relation) else np.asarray(rel, dtype=bool)


@dataclass
class LiftingWitness:
    holds: bool
    witness_set: frozenset = frozenset()
    # max over T of mu1(T) - mu2(R(T)) when known
    deficiency: float | None = None


def _check_dist(mu, name: str) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1:
        raise LmcError(f"{name} must be a vector")
    if abs(mu.sum() - 1.0) > ROW_TOL:
        raise LmcError(f"{name} sums to {mu.sum():.12g}, not 1")
    return mu


def _check_eps(eps: float) -> float:
    if not 0.0 <= eps <= 1.0:
        raise LmcError(f"eps must lie in [0, 1], got {eps}")
    return float(eps)


def _transport(mu1, mu2, R, slack: float | None):
    """Flow network source -> supp(mu1) -> R -> supp(mu2) -> sink (+ pooled slack)."""
    left = np.flatnonzero(mu1 > 0)
    right = np.flatnonzero(mu2 > 0)
    a, b = len(left), len(right)
    extra = 1 if slack is not None else 0
    src, snk = 0, a + b + extra + 1
    cap = np.zeros((snk + 1, snk + 1))
    big = 4.0
    cap[src, 1:a + 1] = mu1[left]
    cap[1:a + 1, a + 1:a + b + 1] = np.where(R[np.ix_(left, right)], big, 0.0)
    cap[a + 1:a + b + 1, snk] = mu2[right]
    if slack is not None:
        hub = a + b + 1
        cap[1:a + 1, hub] = big
        cap[hub, snk] = slack
    value, side = max_flow(cap, src, snk)
    return value, frozenset(int(x) for x in left[side[1:a + 1]])


def lifting_deficiency(mu1, mu2, rel) -> tuple[float, frozenset]:
    """``max_T mu1(T) - mu2(R(T))`` and a maximising ``T`` (via min cut)."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    flow, T = _transport(mu1, mu2, _rel_matrix(rel), None)
    return max(0.0, float(mu1.sum() - flow)), T


def lifting_check(mu1, mu2, rel, eps: float, method: str = "flow") -> LiftingWitness:
    """Does ``mu2(R(T)) >= mu1(T) - eps`` hold for every set ``T``?

    ``method="flow"`` solves a max-flow with a pooled slack of capacity
    ``eps``; ``method="enumerate"`` is the brute-force oracle over subsets of
    ``supp(mu1)`` (at most 20 support points).
    """
    mu1 = _check_dist(mu1, "mu1")
    mu2 = _check_dist(mu2, "mu2")
    eps = _check_eps(eps)
    R = _rel_matrix(rel)
    n = len(mu1)
    if mu2.shape != (n,) or R.shape != (n, n):
        raise LmcError(f"dimension mismatch: mu1 {mu1.shape}, mu2 {mu2.shape}, relation {R.shape}")
    if method == "flow":
        total = float(mu1.sum())
        value, T = _transport(mu1, mu2, R, eps)
        if value >= total - CMP_SLACK:
            return LiftingWitness(True)
        T_mask = _as_mask(sorted(T), n) if T else np.zeros(n, bool)
        gap = float(mu1[T_mask].sum() - mu2[R[T_mask].any(axis=0)].sum())
        return LiftingWitness(False, T, gap)
    if method == "enumerate":
        gap, T = enumerate_deficiency(mu1, mu2, R)
        return LiftingWitness(gap <= eps + CMP_SLACK, frozenset() if gap <= eps + CMP_SLACK else T, gap)
    raise LmcError(f"unknown lifting method {method!r}")


def enumerate_deficiency(mu1, mu2, R) -> tuple[float, frozenset]:
    """Brute force ``max_T mu1(T) - mu2(R(T))`` over subsets of ``supp(mu1)``."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    R = _rel_matrix(R)
    supp = np.flatnonzero(mu1 > 0)
    if len(supp) > ENUM_LIMIT:
        raise ScaleGuardError(f"subset enumeration limited to {ENUM_LIMIT} support points, got {len(supp)}")
    best, best_T = 0.0, frozenset()
    for r in range(1, len(supp) + 1):
        for T in itertools.combinations(supp.tolist(), r):
            img = R[list(T)].any(axis=0)
            gap = mu1[list(T)].sum() - mu2[img].sum()
            if gap > best + 1e-15:
                best, best_T = float(gap), frozenset(T)
    return best, best_T


# --------------------------------------------------------------------------
# relations on a chain

def label_equal(model: FiniteLmc) -> np.ndarray:
    ids = {obs: k for k, obs in enumerate(model.observations)}
    lab = np.array([ids[l] for l in model.labels])
    return lab[:, None] == lab[None, :]


@dataclass
class BisimCheck:
    ok: bool
    pair: tuple | None = None
    witness: frozenset | None = None
    reason: str = ""


def check_relation(model: FiniteLmc, rel: Relation, eps: float) -> BisimCheck:
    """Is ``rel`` an eps-bisimulation on ``model``?

    The first failing pair (row-major order) is reported together with the
    violating set ``T`` when the failure is in the lifting condition.
    """
    eps = _check_eps(eps)
    R = _rel_matrix(rel)
    if R.shape != (model.n, model.n):
        raise LmcError(f"relation is {R.shape[0]}x{R.shape[1]} but model has {model.n} states")
    if not np.array_equal(R, R.T):
        raise LmcError("relation is not symmetric")
    same = label_equal(model)
    K = model.kernel
    for i, j in zip(*np.nonzero(R)):
        if not same[i, j]:
            return BisimCheck(False, (int(i), int(j)), None, "labels differ")
    for i, j in zip(*np.nonzero(R)):
        w = lifting_check(K[i], K[j], R, eps)
        if not w.holds:
            return BisimCheck(False, (int(i), int(j)), w.witness_set, f"lifting fails by {w.deficiency - eps:.3g}")
    return BisimCheck(True)


def _pair_fails(K, R, i, j, eps) -> bool:
    return not (lifting_check(K[i], K[j], R, eps).holds and lifting_check(K[j], K[i], R, eps).holds)


def _affected(succ: np.ndarray, removed: list) -> np.ndarray:
    """Pairs whose lifting problem involves one of the removed pairs.

    The check for (i, j) only reads R on supp(K_i) x supp(K_j), so it can
    change only if some removed (a, b) has a in one support and b in the other.
    """
    D = np.zeros(succ.shape, dtype=np.int64)
    for a, b in removed:
        D[a, b] = D[b, a] = 1
    P = succ.astype(np.int64)
    return (P @ D @ P.T) > 0


def maximal_bisim(model: FiniteLmc, eps: float) -> Relation:
    """Coarsest eps-bisimulation: delete failing pairs from the label-equality
    relation, all failures of a sweep at once, until nothing changes.

    After the first sweep only pairs affected by the previous deletions are
    re-checked; the others would give the same verdict.
    """
    eps = _check_eps(eps)
    R = label_equal(model)
    K = model.kernel
    succ = K > 0
    pending = np.triu(R, 1)
    while True:
        iu, ju = np.nonzero(pending)
        failed = [(i, j) for i, j in zip(iu, ju) if _pair_fails(K, R, i, j, eps)]
        if not failed:
            return Relation(R, eps, model.states)
        for i, j in failed:
            R[i, j] = R[j, i] = False
        pending = _affected(succ, failed) & np.triu(R, 1)


def bisim_thresholds(model: FiniteLmc) -> np.ndarray:
    """For every pair, the least eps at which it lies in the maximal eps-bisimulation.

    Descends from eps = 1: at each level the pairs with the largest lifting
    deficiency (against the current relation) are dropped, with cascades at the
    same level, until the remaining relation has no positive deficiency.
    Label-different pairs get ``inf``.
    """
    R = label_equal(model)
    theta = np.where(R, 0.0, math.inf)
    K = model.kernel
    succ = K > 0

    def deficiency(i, j):
        return max(lifting_deficiency(K[i], K[j], R)[0], lifting_deficiency(K[j], K[i], R)[0])

    d = {(i, j): deficiency(i, j) for i, j in zip(*np.nonzero(np.triu(R, 1)))}
    while d:
        level = max(d.values())
        if level <= CMP_SLACK:
            break
        while True:
            drop = [p for p, x in d.items() if x > level - CMP_SLACK]
            if not drop:
                break
            for i, j in drop:
                R[i, j] = R[j, i] = False
                theta[i, j] = theta[j, i] = level
                del d[(i, j)]
            touched = _affected(succ, drop)
            for p in d:
                if touched[p]:
                    d[p] = deficiency(*p)
    return theta


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    # invariant: pred(hi) true, pred(lo) false (or lo is the left end)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def minimal_epsilon(model: FiniteLmc, s, t, tol: float = 1e-9) -> float:
    """Least eps (to within ``tol``) for which ``s`` and ``t`` are eps-bisimilar.

    The exact level from :func:`bisim_thresholds` is certified by evaluating
    the maximal relation at the level and ``tol`` below it; if either check
    disagrees the answer falls back to bisection on [0, 1].  Returns ``inf``
    when the labels differ.
    """
    if tol <= 0:
        raise LmcError("tol must be positive")
    i, j = model.index(s), model.index(t)
    if model.labels[i] != model.labels[j]:
        return math.inf
    if i == j:
        return 0.0
    cache: dict = {}

    def related(e: float) -> bool:
        if e not in cache:
            cache[e] = maximal_bisim(model, min(max(e, 0.0), 1.0)).matrix
        return bool(cache[e][i, j])

    level = float(bisim_thresholds(model)[i, j])
    if related(level) and (level - tol < 0 or not related(level - tol)):
        return level
    if related(0.0):
        return 0.0
    return _bisect(related, 0.0, 1.0, tol)


def minimal_epsilons(model: FiniteLmc, tol: float = 1e-9) -> np.ndarray:
    """All-pairs version of :func:`minimal_epsilon`, sharing the relation computations."""
    if tol <= 0:
        raise LmcError("tol must be positive")
    theta = bisim_thresholds(model)
    cache: dict = {}

    def rel_at(e: float) -> np.ndarray:
        e = min(max(e, 0.0), 1.0)
        if e not in cache:
            cache[e] = maximal_bisim(model, e).matrix
        return cache[e]

    out = theta.copy()
    n = model.n
    for i in range(n):
        for j in range(i + 1, n):
            level = theta[i, j]
            if not math.isfinite(level):
                continue
            ok = rel_at(level)[i, j] and (level - tol < 0 or not rel_at(level - tol)[i, j])
            if not ok:
                if rel_at(0.0)[i, j]:
                    level = 0.0
                else:
                    level = _bisect(lambda e: bool(rel_at(e)[i, j]), 0.0, 1.0, tol)
            out[i, j] = out[j, i] = level
    np.fill_diagonal(out, 0.0)
    return out


def exact_bisim(model: FiniteLmc, tol: float = ROW_TOL) -> list:
    """Coarsest exact probabilistic bisimulation, as a list of state-index blocks.

    Partition refinement from the label classes: a block is split whenever its
    members send different total mass (beyond ``tol``) into some current block.
    """
    blocks = [np.flatnonzero(m) for m in model.label_masks.values()]
    K = model.kernel
    while True:
        B = np.zeros((model.n, len(blocks)))
        for b, members in enumerate(blocks):
            B[members, b] = 1.0
        mass = K @ B
        new_blocks = []
        for members in blocks:
            groups: list = []
            for s in members:
                for g in groups:
                    if np.max(np.abs(mass[s] - mass[g[0]])) <= tol:
                        g.append(s)
                        break
                else:
                    groups.append([s])
            new_blocks.extend(np.array(g) for g in groups)
        if len(new_blocks) == len(blocks):
            return sorted((frozenset(int(x) for x in b) for b in new_blocks), key=min)
        blocks = new_blocks


def closed_sets(rel: Relation) -> list:
    """Every subset ``T`` with ``R(T) ⊆ T``, by filtering the powerset (n <= 24)."""
    R = _rel_matrix(rel)
    n = R.shape[0]
    if n > CLOSED_SET_LIMIT:
        raise ScaleGuardError(f"closed-set enumeration limited to {CLOSED_SET_LIMIT} states, got {n}")
    rows = (R.astype(np.int64) * (1 << np.arange(n, dtype=np.int64))).sum(axis=1)
    img = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        lo = 1 << b
        img[lo:2 * lo] = img[:lo] | rows[b]
    masks = np.arange(1 << n, dtype=np.int64)
    closed = np.flatnonzero((img & ~masks) == 0)
    return [frozenset(b for b in range(n) if (m >> b) & 1) for m in closed.tolist()]


@dataclass
class AltCheck:
    ok: bool
    pair: tuple | None = None
    closed_set: frozenset | None = None
    gap: float = 0.0


def check_alt_bisim(model: FiniteLmc, rel: Relation, eps: float, method: str = "closure") -> AltCheck:
    """Closed-set notion: ``|kappa(s1, T) - kappa(s2, T)| <= eps`` only over R-closed ``T``.

    ``method="closure"`` finds the worst closed set per pair as a maximum
    weight closure (min cut), so it is not limited in size;
    ``method="enumerate"`` filters the powerset via :func:`closed_sets`.
    """
    eps = _check_eps(eps)
    R = _rel_matrix(rel)
    if R.shape != (model.n, model.n):
        raise LmcError(f"relation is {R.shape[0]}x{R.shape[1]} but model has {model.n} states")
    same = label_equal(model)
    K = model.kernel
    pairs = list(zip(*np.nonzero(R)))
    for i, j in pairs:
        if not same[i, j]:
            return AltCheck(False, (int(i), int(j)), None, math.inf)
    if method == "enumerate":
        sets = closed_sets(R)
        masks = np.array([_as_mask(sorted(T), model.n) if T else np.zeros(model.n, bool) for T in sets])
    elif method != "closure":
        raise LmcError(f"unknown method {method!r}")
    for i, j in pairs:
        w = K[i] - K[j]
        if method == "closure":
            best, T = 0.0, np.zeros(model.n, bool)
            for sign in (1.0, -1.0):
                val, closure = max_weight_closure(sign * w, R)
                if val > best:
                    best, T = val, closure
            witness = frozenset(int(x) for x in np.flatnonzero(T))
        else:
            vals = np.abs(masks.astype(float) @ w)
            k = int(np.argmax(vals))
            best, witness = float(vals[k]), sets[k]
        if best > eps + CMP_SLACK:
            return AltCheck(False, (int(i), int(j)), witness, best)
    return AltCheck(True)


def alt_relation(N: int) -> Relation:
    """Symmetric relation ``s1 ~ s2`` and ``t_k ~ t_{k+1}`` on :func:`alt_counterexample`.

    Its closed sets are unions of ``{s1, s2}``, ``{t_0..t_N}``, ``{u1}`` and
    ``{u2}``, so it passes the closed-set check at ``eps = 1/N``.
    """
    model = alt_counterexample(N)
    pairs = [("s1", "s2")] + [(f"t{k}", f"t{k + 1}") for k in range(int(N))]
    return Relation.from_pairs(model, pairs, 1.0 / N, symmetrize=True)
