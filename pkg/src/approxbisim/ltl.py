"""Bounded LTL: parser, pretty-printer and exact probability on finite chains.

Concrete syntax::

    phi := true | false | atom | "quoted atom" | ( phi )
         | ! phi | X phi | F<=t phi
         | phi & phi | phi | phi | phi U<=t phi

Binding strength ``!``/``X``/``F`` > ``&`` > ``|`` > ``U``; ``&`` and ``|``
associate to the left, ``U`` to the right.  ``|``, ``false`` and ``F<=t`` are
sugar and never appear in a parsed tree.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lmc import FiniteLmc, LmcError, ScaleGuardError, TraceSet, all_observations

ORACLE_LIMIT = 10**6


class Formula:
    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, repr=False)
class TrueF(Formula):
    def __repr__(self):
        return "True"


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    child: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    bound: int

    def __post_init__(self):
        if not isinstance(self.bound, int) or self.bound < 0:
            raise LmcError(f"until bound must be a non-negative integer, got {self.bound!r}")


TRUE = TrueF()
FALSE = Not(TRUE)


def Or(left: Formula, right: Formula) -> Formula:
    return Not(And(Not(left), Not(right)))


def Eventually(child: Formula, bound: int) -> Formula:
    return Until(TRUE, child, bound)


# --------------------------------------------------------------------------
# parsing

class LtlSyntaxError(LmcError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at position {pos}")
        self.pos = pos


_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>-?\d+(?:\.\d*)?)
      | (?P<le><=)
      | (?P<op>[()!&|])
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<quoted>"(?:[^"\\]|\\.)*")
    )""",
    re.VERBOSE,
)
KEYWORDS = {"X", "F", "U", "true", "false"}


def _tokenize(text: str) -> list:
    tokens, pos = [], 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LtlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        if kind == "quoted":
            kind, value = "atom", json.loads(value)
        elif kind == "ident":
            kind = value if value in KEYWORDS else "atom"
        elif kind == "op":
            kind = value
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("eof", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            want = "end of input" if kind == "eof" else repr(kind)
            raise LtlSyntaxError(f"expected {want}, found {tok[1] if tok[1] is not None else 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def bound(self) -> int:
        self.take("le")
        kind, value, pos = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", value):
            raise LtlSyntaxError(f"step bound must be a non-negative integer, found {value!r}", pos)
        return int(value)

    def until(self) -> Formula:
        left = self.disj()
        if self.peek()[0] == "U":
            self.take()
            t = self.bound()
            return Until(left, self.until(), t)
        return left

    def disj(self) -> Formula:
        left = self.conj()
        while self.peek()[0] == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self) -> Formula:
        left = self.unary()
        while self.peek()[0] == "&":
            self.take()
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "!":
            self.take()
            return Not(self.unary())
        if kind == "X":
            self.take()
            return Next(self.unary())
        if kind == "F":
            self.take()
            t = self.bound()
            return Until(TRUE, self.unary(), t)
        return self.primary()

    def primary(self) -> Formula:
        kind, value, pos = self.take()
        if kind == "true":
            return TRUE
        if kind == "false":
            return FALSE
        if kind == "atom":
            return Atom(value)
        if kind == "(":
            inner = self.until()
            self.take(")")
            return inner
        shown = "end of input" if kind == "eof" else repr(value)
        raise LtlSyntaxError(f"unexpected {shown}", pos)


def parse(text: str) -> Formula:
    p = _Parser(text)
    ast = p.until()
    p.take("eof")
    return ast


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _atom_text(name: str) -> str:
    return name if _IDENT.match(name) and name not in KEYWORDS else json.dumps(name)


def to_text(ast: Formula) -> str:
    """Render with the fewest parentheses that parse back to the same tree."""

    def go(f: Formula, level: int) -> str:
        # levels: 0 until, 1 conjunction operand (left), 2 unary operand
        if isinstance(f, TrueF):
            return "true"
        if isinstance(f, Atom):
            return _atom_text(f.name)
        if isinstance(f, Not):
            return "!" + go(f.child, 2)
        if isinstance(f, Next):
            return "X " + go(f.child, 2)
        if isinstance(f, And):
            s = f"{go(f.left, 1)} & {go(f.right, 2)}"
            return s if level <= 1 else f"({s})"
        if isinstance(f, Until):
            s = f"{go(f.left, 1)} U<={f.bound} {go(f.right, 0)}"
            return s if level == 0 else f"({s})"
        raise TypeError(f"not a formula: {f!r}")

    return go(ast, 0)


# --------------------------------------------------------------------------
# semantics

def horizon(ast: Formula) -> int:
    """Number of transitions the formula can look ahead."""
    if isinstance(ast, (TrueF, Atom)):
        return 0
    if isinstance(ast, Not):
        return horizon(ast.child)
    if isinstance(ast, And):
        return max(horizon(ast.left), horizon(ast.right))
    if isinstance(ast, Next):
        return 1 + horizon(ast.child)
    if isinstance(ast, Until):
        return ast.bound + max(horizon(ast.left), horizon(ast.right))
    raise TypeError(f"not a formula: {ast!r}")


def atoms(ast: Formula) -> set:
    if isinstance(ast, Atom):
        return {ast.name}
    if isinstance(ast, TrueF):
        return set()
    if isinstance(ast, (Not, Next)):
        return atoms(ast.child)
    return atoms(ast.left) | atoms(ast.right)


def holds(ast: Formula, trace, pos: int = 0) -> bool:
    """Finite-trace satisfaction at position ``pos``."""
    if pos >= len(trace):
        raise LmcError("trace too short for the formula's horizon")
    if isinstance(ast, TrueF):
        return True
    if isinstance(ast, Atom):
        return ast.name in trace[pos]
    if isinstance(ast, Not):
        return not holds(ast.child, trace, pos)
    if isinstance(ast, And):
        return holds(ast.left, trace, pos) and holds(ast.right, trace, pos)
    if isinstance(ast, Next):
        return holds(ast.child, trace, pos + 1)
    if isinstance(ast, Until):
        for i in range(ast.bound + 1):
            if holds(ast.right, trace, pos + i):
                return True
            if not holds(ast.left, trace, pos + i):
                return False
        return False
    raise TypeError(f"not a formula: {ast!r}")


def satisfying_traces(ast: Formula, ap, k: int | None = None) -> TraceSet:
    """All length-(k+1) traces over 2^AP that satisfy ``ast`` (enumeration)."""
    h = horizon(ast)
    k = h if k is None else k
    if k < h:
        raise LmcError(f"horizon {k} is shorter than the formula's horizon {h}")
    alphabet = all_observations(ap)
    if len(alphabet) ** (k + 1) > ORACLE_LIMIT:
        raise ScaleGuardError(f"{len(alphabet)}^{k + 1} traces exceed the enumeration limit {ORACLE_LIMIT}")
    return TraceSet(k, frozenset(t for t in itertools.product(alphabet, repeat=k + 1) if holds(ast, t)))


def _neg(f: Formula) -> Formula:
    return f.child if isinstance(f, Not) else Not(f)


def _conj(a: Formula, b: Formula) -> Formula:
    if a == FALSE or b == FALSE:
        return FALSE
    if a == TRUE:
        return b
    if b == TRUE or a == b:
        return a
    return And(a, b)


def _disj(a: Formula, b: Formula) -> Formula:
    return _neg(_conj(_neg(a), _neg(b)))


@lru_cache(maxsize=65536)
def progress(ast: Formula, obs: frozenset) -> Formula:
    """Obligation left for the next position after observing ``obs`` now."""
    if isinstance(ast, TrueF):
        return TRUE
    if isinstance(ast, Atom):
        return TRUE if ast.name in obs else FALSE
    if isinstance(ast, Not):
        return _neg(progress(ast.child, obs))
    if isinstance(ast, And):
        return _conj(progress(ast.left, obs), progress(ast.right, obs))
    if isinstance(ast, Next):
        return ast.child
    if isinstance(ast, Until):
        now = progress(ast.right, obs)
        if ast.bound == 0:
            return now
        later = _conj(progress(ast.left, obs), Until(ast.left, ast.right, ast.bound - 1))
        return _disj(now, later)
    raise TypeError(f"not a formula: {ast!r}")


def probability_vector(model: FiniteLmc, ast: Formula) -> np.ndarray:
    """``P[s |= ast]`` for every state ``s``.

    Backward recursion over obligations: the value of an obligation at ``s`` is
    fixed by progressing it through ``L(s)`` and averaging the value of the
    residual obligation over the successors.  Residual obligations have
    strictly smaller horizon, so the recursion is finite.
    """
    unknown = atoms(ast) - set(model.ap)
    if unknown:
        raise LmcError(f"atoms {sorted(unknown)} are not in the model's propositions {list(model.ap)}")
    K = model.kernel
    masks = list(model.label_masks.items())
    memo: dict = {}

    def value(f: Formula) -> np.ndarray:
        if f in memo:
            return memo[f]
        v = np.zeros(model.n)
        for obs, mask in masks:
            rest = progress(f, obs)
            if rest == TRUE:
                v[mask] = 1.0
            elif rest != FALSE:
                v[mask] = K[mask] @ value(rest)
        memo[f] = v
        return v

    return value(ast)


def probability(model: FiniteLmc, start, ast: Formula) -> float:
    if isinstance(ast, str):
        ast = parse(ast)
    return float(probability_vector(model, ast)[model.index(start)])


@dataclass
class Closeness:
    p_s: float
    p_t: float
    bound: float
    horizon: int

    @property
    def difference(self) -> float:
        return abs(self.p_s - self.p_t)


def closeness_bound(model: FiniteLmc, s, t, ast: Formula, eps: float) -> Closeness:
    """Both satisfaction probabilities and the eps-bisimulation bound for the formula's horizon.

    The pair must be related by the maximal eps-bisimulation; this is checked.
    """
    from .bisim import maximal_bisim, minimal_epsilon
    from .traces import bisim_bound

    if isinstance(ast, str):
        ast = parse(ast)
    i, j = model.index(s), model.index(t)
    # the identity is always an eps-bisimulation, so s = t needs no check
    if i != j and not maximal_bisim(model, eps).matrix[i, j]:
        hint = minimal_epsilon(model, i, j)
        raise LmcError(f"{model.states[i]} and {model.states[j]} are not {eps}-bisimilar (least eps is {hint:.9g})")
    vec = probability_vector(model, ast)
    k = horizon(ast)
    out = Closeness(float(vec[i]), float(vec[j]), bisim_bound(eps, k), k)
    if out.difference > out.bound + 1e-9:
        raise AssertionError(f"bound violated: |{out.p_s} - {out.p_t}| > {out.bound}")
    return out
