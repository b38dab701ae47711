"""Finite-horizon trace distributions and their total-variation distance."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .lmc import CMP_SLACK, PRUNE_MASS, FiniteLmc, LmcError, ScaleGuardError

PREFIX_LIMIT = 10**7


@dataclass(frozen=True)
class TraceDistribution:
    k: int
    probs: dict

    def __getitem__(self, trace) -> float:
        return self.probs.get(tuple(frozenset(o) for o in trace), 0.0)

    def total(self) -> float:
        return float(sum(self.probs.values()))

    def to_doc(self) -> list:
        rows = [([sorted(o) for o in t], p) for t, p in self.probs.items()]
        rows.sort(key=lambda r: (r[0], r[1]))
        return [{"trace": t, "p": p} for t, p in rows]


def live_prefix_counts(model: FiniteLmc, starts: Sequence[int], k: int) -> list[int]:
    """Number of positive-probability trace prefixes at each depth 0..k.

    Prefixes are grouped by the support they reach, so the count is obtained
    without listing them.  Mass pruning can only make the real frontier smaller.
    """
    succ = model.kernel > 0
    masks = [m.astype(bool) for m in model.label_masks.values()]
    init = np.zeros(model.n, dtype=bool)
    init[list(starts)] = True
    level = {}
    for m in masks:
        S = init & m
        if S.any():
            level[S.tobytes()] = level.get(S.tobytes(), 0) + 1
    counts = [sum(level.values())]
    for _ in range(k):
        nxt: dict = {}
        for key, c in level.items():
            reach = succ[np.frombuffer(key, dtype=bool)].any(axis=0)
            for m in masks:
                S = reach & m
                if S.any():
                    nxt[S.tobytes()] = nxt.get(S.tobytes(), 0) + c
        level = nxt
        counts.append(sum(level.values()))
    return counts


def _frontiers(model: FiniteLmc, starts: Sequence[int], k: int, limit: int = PREFIX_LIMIT):
    """Yield, for depth 0..k, the live prefixes as ``(ids, V)``.

    ``ids`` is a ``(P, depth + 1)`` array of observation indices into
    ``model.observations`` and ``V`` a ``(P, len(starts), n)`` array of masses,
    one row per start state.  A prefix survives while some row still carries at
    least ``PRUNE_MASS``.  Prefix counts are predicted from supports first,
    so the guard refuses before any mass arrays are built.
    """
    if k < 0:
        raise LmcError("horizon must be non-negative")
    starts = list(starts)
    for depth, count in enumerate(live_prefix_counts(model, starts, k)):
        if count > limit:
            raise ScaleGuardError(f"{count} live trace prefixes at horizon {depth} exceed the limit {limit}")
    K = model.kernel
    masks = np.array(list(model.label_masks.values()), dtype=float)  # (|O|, n)
    V0 = np.zeros((1, len(starts), model.n))
    V0[0, np.arange(len(starts)), starts] = 1.0
    ids = np.zeros((1, 0), dtype=np.int64)
    W = V0
    for depth in range(k + 1):
        # mass of each (prefix, observation) extension, per start
        ext = np.einsum("prn,qn->pqr", W, masks)
        live = ext.max(axis=2) >= PRUNE_MASS
        count = int(live.sum())
        if count > limit:
            raise ScaleGuardError(f"{count} live trace prefixes at horizon {depth} exceed the limit {limit}")
        p_idx, q_idx = np.nonzero(live)
        V = W[p_idx] * masks[q_idx][:, None, :]
        ids = np.concatenate([ids[p_idx], q_idx[:, None]], axis=1)
        yield ids, V
        if depth < k:
            W = V @ K


def trace_distribution(model: FiniteLmc, start, k: int) -> TraceDistribution:
    """Exact distribution of the first ``k + 1`` observations from ``start``."""
    s = model.index(start)
    *_, (ids, V) = _frontiers(model, [s], k)
    obs = model.observations
    mass = V.sum(axis=(1, 2))
    return TraceDistribution(k, {tuple(obs[q] for q in row): float(m) for row, m in zip(ids.tolist(), mass)})


def trace_distances(model: FiniteLmc, s, t, kmax: int) -> np.ndarray:
    """``d_TV`` between the length-(k+1) trace laws of ``s`` and ``t`` for k = 0..kmax.

    Half the L1 distance over shared prefixes; both mass vectors ride along
    the same prefix frontier.
    """
    i, j = model.index(s), model.index(t)
    out = []
    for _, V in _frontiers(model, [i, j], kmax):
        m = V.sum(axis=2)
        out.append(0.5 * float(np.abs(m[:, 0] - m[:, 1]).sum()))
    return np.array(out)


def trace_distance_matrix(model: FiniteLmc, kmax: int) -> np.ndarray:
    """All-pairs ``d_TV``: array of shape ``(kmax + 1, n, n)`` from one shared DP."""
    n = model.n
    out = np.zeros((kmax + 1, n, n))
    for k, (_, V) in enumerate(_frontiers(model, range(n), kmax)):
        m = V.sum(axis=2)
        for lo in range(0, len(m), 4096):
            chunk = m[lo:lo + 4096]
            out[k] += np.abs(chunk[:, :, None] - chunk[:, None, :]).sum(axis=0)
    return 0.5 * out


def trace_distance(model: FiniteLmc, s, t, k: int) -> float:
    return float(trace_distances(model, s, t, k)[-1])


def bisim_bound(eps: float, k: int) -> float:
    """``1 - (1 - eps)^k`` evaluated as ``-expm1(k * log1p(-eps))``."""
    if not 0.0 <= eps <= 1.0:
        raise LmcError(f"eps must lie in [0, 1], got {eps}")
    if k < 0 or int(k) != k:
        raise LmcError(f"horizon must be a non-negative integer, got {k}")
    if k == 0 or eps == 0.0:
        return 0.0
    if eps == 1.0:
        return 1.0
    return -math.expm1(k * math.log1p(-eps))


def distinguishability_exact(model: FiniteLmc, s, t, k: int) -> float:
    """Success probability of the optimal observer: 1/2 + d_TV / 2."""
    return 0.5 + 0.5 * trace_distance(model, s, t, k)


@dataclass
class GameReport:
    rounds: int
    wins: int
    empirical_rate: float
    exact_rate: float
    d_tv: float

    def to_doc(self) -> dict:
        return asdict(self)


def _simulate_batch(model: FiniteLmc, starts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Observation-id matrix (rounds, k + 1) for runs launched from ``starts``."""
    obs_id = {o: q for q, o in enumerate(model.observations)}
    lab = np.array([obs_id[l] for l in model.labels])
    cum = np.cumsum(model.kernel, axis=1)
    cur = starts.copy()
    out = np.empty((len(starts), k + 1), dtype=np.int64)
    out[:, 0] = lab[cur]
    for step in range(1, k + 1):
        u = rng.random(len(cur)) * cum[cur, -1]
        nxt = np.empty_like(cur)
        for c in np.unique(cur):
            sel = cur == c
            nxt[sel] = np.searchsorted(cum[c], u[sel], side="right")
        cur = np.minimum(nxt, model.n - 1)
        out[:, step] = lab[cur]
    return out


def distinguishability_game(model: FiniteLmc, s, t, k: int, rounds: int, seed: int = 0) -> GameReport:
    """Play the guessing game: a fair coin picks ``s`` or ``t``, one trace is shown,
    the observer answers with the MAP rule on exact trace probabilities
    (ties go to ``s``)."""
    if rounds < 1:
        raise LmcError("rounds must be at least 1")
    i, j = model.index(s), model.index(t)
    rng = np.random.default_rng(seed)
    coin = rng.integers(0, 2, size=rounds)
    runs = _simulate_batch(model, np.where(coin == 0, i, j), k, rng)
    ps, pt = trace_distribution(model, i, k), trace_distribution(model, j, k)
    obs = model.observations
    uniq, inverse = np.unique(runs, axis=0, return_inverse=True)
    guess_t = np.array([pt[tuple(obs[q] for q in row)] > ps[tuple(obs[q] for q in row)] for row in uniq])
    guesses = guess_t[np.ravel(inverse)].astype(int)
    wins = int((guesses == coin).sum())
    d = trace_distance(model, i, j, k)
    return GameReport(rounds, wins, wins / rounds, 0.5 + 0.5 * d, d)


def trace_equivalence_check(model: FiniteLmc, s, t, f, kmax: int) -> bool:
    """Is ``d_TV`` at every horizon k <= kmax bounded by ``f(k)``?

    ``f`` is a callable or a list of ``(k, value)`` samples covering 0..kmax;
    it must be non-decreasing with values in [0, 1].
    """
    if callable(f):
        values = [float(f(k)) for k in range(kmax + 1)]
    else:
        table = {int(k): float(v) for k, v in f}
        missing = [k for k in range(kmax + 1) if k not in table]
        if missing:
            raise LmcError(f"bound function has no value for k = {missing}")
        ordered = [table[k] for k in sorted(table)]
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise LmcError("bound function must be non-decreasing")
        values = [table[k] for k in range(kmax + 1)]
    if any(b < a for a, b in zip(values, values[1:])):
        raise LmcError("bound function must be non-decreasing")
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise LmcError("bound function values must lie in [0, 1]")
    d = trace_distances(model, s, t, kmax)
    return bool(np.all(d <= np.array(values) + CMP_SLACK))
