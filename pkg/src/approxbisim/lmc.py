"""Finite labelled Markov chains.

A chain is a list of named states, a label set (subset of a finite universe of
atomic propositions) per state, and a row-stochastic transition matrix.  Only
labels are observable; a *trace* of horizon ``k`` is the sequence of the
``k + 1`` label sets seen along ``X_0, ..., X_k``.
"""

from __future__ import annotations

import itertools
from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

Observation = frozenset
Trace = tuple

ROW_TOL = 1e-9
RENORM_TOL = 1e-6
CMP_SLACK = 1e-12
PRUNE_MASS = 1e-15


class LmcError(ValueError):
    """Malformed model, unknown state or parameter outside its domain."""


class ScaleGuardError(RuntimeError):
    """A computation would exceed a documented size limit."""


def _obs(labels: Iterable[str]) -> frozenset:
    return frozenset(str(a) for a in labels)


@dataclass(frozen=True, eq=False)
class FiniteLmc:
    states: tuple
    labels: tuple
    kernel: np.ndarray
    ap: tuple = ()
    check: InitVar[bool] = True

    def __post_init__(self, check: bool) -> None:
        states = tuple(str(s) for s in self.states)
        labels = tuple(_obs(l) for l in self.labels)
        kernel = np.array(self.kernel, dtype=float, copy=True)
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
            raise LmcError(f"kernel must be a square matrix, got shape {kernel.shape}")
        if kernel.shape[0] != len(states):
            raise LmcError(f"kernel is {kernel.shape[0]}x{kernel.shape[1]} but there are {len(states)} states")
        if len(labels) != len(states):
            raise LmcError(f"{len(labels)} label sets for {len(states)} states")
        if self.ap:
            ap = tuple(str(a) for a in self.ap)
        else:
            ap = tuple(sorted(set().union(*labels))) if labels else ()
        kernel.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "ap", ap)
        if check:
            report = validate(self, strict=True)
            if not report.ok:
                raise LmcError("; ".join(report.issues))

    @property
    def n(self) -> int:
        return len(self.states)

    @cached_property
    def _index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    def index(self, state) -> int:
        """Index of ``state``, given by name or by integer position."""
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            if 0 <= state < self.n:
                return int(state)
            raise LmcError(f"state index {state} out of range 0..{self.n - 1}")
        try:
            return self._index[str(state)]
        except KeyError:
            raise LmcError(f"unknown state {state!r}") from None

    @cached_property
    def label_masks(self) -> dict:
        """Observation -> boolean mask of the states emitting it."""
        masks = {}
        for i, obs in enumerate(self.labels):
            masks.setdefault(obs, np.zeros(self.n, dtype=bool))[i] = True
        for m in masks.values():
            m.setflags(write=False)
        return masks

    @property
    def observations(self) -> list:
        """Distinct label sets that occur in the model, in first-seen order."""
        return list(self.label_masks)

    def mask(self, obs) -> np.ndarray:
        m = self.label_masks.get(_obs(obs))
        return m if m is not None else np.zeros(self.n, dtype=bool)

    def row(self, state) -> np.ndarray:
        return self.kernel[self.index(state)]


@dataclass
class ValidationReport:
    ok: bool
    issues: list = field(default_factory=list)
    adjustments: list = field(default_factory=list)
    model: FiniteLmc | None = None


def validate(model: FiniteLmc, strict: bool = True) -> ValidationReport:
    """Check the chain invariants and list every violation with its location.

    In non-strict mode rows whose sum is off by at most ``1e-6`` are
    renormalised; the corrected chain is returned in ``report.model``.
    """
    issues, adjustments = [], []
    seen = set()
    for s in model.states:
        if s in seen:
            issues.append(f"duplicate state name {s!r}")
        seen.add(s)
    universe = set(model.ap)
    for i, lab in enumerate(model.labels):
        unknown = sorted(lab - universe)
        if unknown:
            issues.append(f"state {model.states[i]!r} uses unknown atomic propositions {unknown}")
    K = np.array(model.kernel)
    bad = ~np.isfinite(K)
    for i, j in zip(*np.nonzero(bad)):
        issues.append(f"entry ({i}, {j}) is not finite")
    K[bad] = 0.0
    for i, j in zip(*np.nonzero(K < 0)):
        issues.append(f"entry ({i}, {j}) is negative ({K[i, j]:.12g})")
    for i, j in zip(*np.nonzero(K > 1)):
        issues.append(f"entry ({i}, {j}) exceeds 1 ({K[i, j]:.12g})")
    sums = K.sum(axis=1)
    fixed = K.copy()
    for i, s in enumerate(sums):
        defect = abs(s - 1.0)
        if defect <= ROW_TOL:
            continue
        if not strict and defect <= RENORM_TOL and s > 0:
            fixed[i] = K[i] / s
            adjustments.append(f"row {i} sums to {s:.12g}; renormalised")
        else:
            issues.append(f"row {i} sums to {s:.12g}")
    ok = not issues
    out = None
    if ok:
        out = model if not adjustments else FiniteLmc(model.states, model.labels, fixed, model.ap, check=False)
    return ValidationReport(ok, issues, adjustments, out)


def direct_sum(m1: FiniteLmc, m2: FiniteLmc, prefixes=("A.", "B.")):
    """Disjoint union of two chains with a block-diagonal kernel.

    Returns ``(model, idx1, idx2)`` where ``idx1[i]`` is the position of state
    ``i`` of ``m1`` in the sum (likewise ``idx2``).  Names are prefixed only if
    the two name sets overlap.
    """
    n1, n2 = m1.n, m2.n
    names1, names2 = list(m1.states), list(m2.states)
    if set(names1) & set(names2):
        names1 = [prefixes[0] + s for s in names1]
        names2 = [prefixes[1] + s for s in names2]
    K = np.zeros((n1 + n2, n1 + n2))
    K[:n1, :n1] = m1.kernel
    K[n1:, n1:] = m2.kernel
    ap = tuple(dict.fromkeys(m1.ap + m2.ap))
    model = FiniteLmc(names1 + names2, m1.labels + m2.labels, K, ap)
    return model, np.arange(n1), np.arange(n1, n1 + n2)


def all_observations(ap: Sequence[str]) -> list:
    """The full observation alphabet 2^AP in a fixed order."""
    ap = list(ap)
    return [frozenset(c) for r in range(len(ap) + 1) for c in itertools.combinations(ap, r)]


@dataclass(frozen=True)
class TraceSet:
    """A set of traces sharing the horizon ``k`` (each has ``k + 1`` observations)."""

    k: int
    traces: frozenset

    @classmethod
    def of(cls, traces: Iterable[Sequence[Iterable[str]]], k: int | None = None) -> "TraceSet":
        ts = frozenset(tuple(_obs(o) for o in t) for t in traces)
        lengths = {len(t) for t in ts}
        if len(lengths) > 1:
            raise LmcError(f"traces of different lengths {sorted(lengths)}")
        if lengths:
            (length,) = lengths
            if k is not None and k + 1 != length:
                raise LmcError(f"traces have length {length}, expected {k + 1}")
            k = length - 1
        if k is None or k < 0:
            raise LmcError("horizon of an empty trace set must be given")
        return cls(k, ts)

    @classmethod
    def everything(cls, ap: Sequence[str], k: int) -> "TraceSet":
        return cls(k, frozenset(itertools.product(all_observations(ap), repeat=k + 1)))

    def __len__(self) -> int:
        return len(self.traces)


def trace_probability(model: FiniteLmc, start, traces: TraceSet) -> float:
    """Probability that the run from ``start`` emits one of ``traces``.

    Walks the prefix trie of the trace set carrying a per-state mass vector
    for each live prefix; prefixes whose mass drops below ``1e-15`` are cut.
    """
    s0 = model.index(start)
    if not traces.traces:
        return 0.0
    children: dict = {}
    for t in traces.traces:
        for d in range(len(t)):
            children.setdefault(t[:d], set()).add(t[d])
    v0 = np.zeros(model.n)
    v0[s0] = 1.0
    frontier = {}
    for obs in children[()]:
        v = v0 * model.mask(obs)
        if v.sum() >= PRUNE_MASS:
            frontier[(obs,)] = v
    for _ in range(traces.k):
        nxt = {}
        for prefix, v in frontier.items():
            w = v @ model.kernel
            for obs in children.get(prefix, ()):
                u = w * model.mask(obs)
                if u.sum() >= PRUNE_MASS:
                    nxt[prefix + (obs,)] = u
        frontier = nxt
    return float(sum(v.sum() for v in frontier.values()))


def simulate(model: FiniteLmc, start, k: int, seed: int | None = None, rng: np.random.Generator | None = None) -> Trace:
    """Sample one run of ``k`` transitions and return its label sequence."""
    if k < 0:
        raise LmcError("horizon must be non-negative")
    if rng is None:
        rng = np.random.default_rng(seed)
    cum = np.cumsum(model.kernel, axis=1)
    s = model.index(start)
    out = [model.labels[s]]
    for _ in range(k):
        u = rng.random() * cum[s, -1]
        s = min(int(np.searchsorted(cum[s], u, side="right")), model.n - 1)
        out.append(model.labels[s])
    return tuple(out)


# --------------------------------------------------------------------------
# builtin chains

def branching_example() -> FiniteLmc:
    """Two states with identical trace behaviour but different branching.

    Both ``s1`` and ``s2`` emit <{a},{a},{b}> and <{a},{a},{c}> with
    probability 1/2 each; ``s1`` decides late, ``s2`` decides early.
    """
    names = ["s1", "s2", "m", "m_b", "m_c", "end_b", "end_c"]
    ix = {s: i for i, s in enumerate(names)}
    K = np.zeros((7, 7))
    edges = [
        ("s1", "m", 1.0),
        ("m", "end_b", 0.5), ("m", "end_c", 0.5),
        ("s2", "m_b", 0.5), ("s2", "m_c", 0.5),
        ("m_b", "end_b", 1.0), ("m_c", "end_c", 1.0),
        ("end_b", "end_b", 1.0), ("end_c", "end_c", 1.0),
    ]
    for a, b, p in edges:
        K[ix[a], ix[b]] = p
    labels = [{"a"}] * 5 + [{"b"}, {"c"}]
    return FiniteLmc(names, labels, K, ("a", "b", "c"))


def tightness(eps: float) -> FiniteLmc:
    """Chain on which the bound ``1 - (1 - eps)^k`` is attained.

    ``s1`` loops forever; ``s2`` leaks into the absorbing ``a``-state ``v``
    with probability ``eps`` per step.
    """
    if not 0.0 <= eps <= 1.0:
        raise LmcError(f"eps must lie in [0, 1], got {eps}")
    K = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0 - eps, eps],
        [0.0, 0.0, 1.0],
    ])
    return FiniteLmc(["s1", "s2", "v"], [set(), set(), {"a"}], K, ("a",))


def alt_counterexample(N: int) -> FiniteLmc:
    """Chain separating closed-set bisimulation from the lifting notion.

    ``s1 -> t_0``, ``s2 -> t_N`` and ``t_i`` moves to ``u1`` (labelled ``a``)
    with probability ``1 - i/N``, otherwise to ``u2``.
    """
    if int(N) != N or N < 1:
        raise LmcError(f"N must be a positive integer, got {N}")
    N = int(N)
    names = ["s1", "s2"] + [f"t{i}" for i in range(N + 1)] + ["u1", "u2"]
    n = len(names)
    u1, u2 = n - 2, n - 1
    K = np.zeros((n, n))
    K[0, 2] = 1.0
    K[1, 2 + N] = 1.0
    for i in range(N + 1):
        K[2 + i, u1] = 1.0 - i / N
        K[2 + i, u2] = i / N
    K[u1, u1] = 1.0
    K[u2, u2] = 1.0
    labels = [set()] * (n - 2) + [{"a"}, set()]
    return FiniteLmc(names, labels, K, ("a",))


BUILTINS = ("branching_example", "tightness", "alt_counterexample", "weather_abstract")


def builtin(name: str, **params) -> FiniteLmc:
    """Construct a named builtin chain (``eps`` for tightness, ``N`` otherwise)."""
    if name == "branching_example":
        return branching_example()
    if name == "tightness":
        return tightness(params.get("eps", 0.3))
    if name == "alt_counterexample":
        return alt_counterexample(params.get("N", 4))
    if name == "weather_abstract":
        from .abstraction import weather_abstract

        return weather_abstract(params.get("N", 1000))
    raise LmcError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")
