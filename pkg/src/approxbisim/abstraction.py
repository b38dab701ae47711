"""Finite abstractions of continuous-state labelled Markov chains.

A continuous model lives on ``modes x [lows, highs)``: a finite set of
discrete tags crossed with a half-open box (the box may have dimension 0, in
which case the model is just a finite chain).  The kernel is a density in the
continuous coordinates for every pair of modes.

An abstraction merges each cell of a partition into one state whose
transition row is the kernel of a chosen representative point, aggregated
over cells.  If every two points of a cell have aggregated kernels within
total variation ``eps``, each concrete point is eps-bisimilar to its cell.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .lmc import RENORM_TOL, ROW_TOL, FiniteLmc, LmcError, ScaleGuardError

CELL_LIMIT = 10**6
QUAD_TOL = 1e-9
ANALYTIC_TOL = 1e-7
GAUSS_ORDER = 8


@dataclass(frozen=True, eq=False)
class ContinuousModel:
    """Kernel on ``modes x [lows, highs)``.

    ``density(mode, x, mode2, Y)`` returns the transition density from
    ``(mode, x)`` into ``(mode2, y)`` for each row ``y`` of the ``(m, d)``
    array ``Y``.  ``breakpoints(mode, x, mode2)``, when given, lists per axis
    the coordinates where that density may jump; quadrature splits there.
    ``lipschitz_K`` bounds ``|f(x1, y) - f(x2, y)| <= K |x1 - x2|``; use
    ``inf`` for a kernel without such a bound.
    """

    modes: tuple
    lows: tuple
    highs: tuple
    density: Callable
    label_of: Callable
    ap: tuple
    lipschitz_K: float = math.inf
    breakpoints: Callable | None = None
    name: str = "continuous"

    def __post_init__(self):
        if len(self.lows) != len(self.highs):
            raise LmcError("lows and highs differ in dimension")
        if any(not lo < hi for lo, hi in zip(self.lows, self.highs)):
            raise LmcError("every axis needs lows < highs")
        if not self.lipschitz_K >= 0:
            raise LmcError("Lipschitz constant must be non-negative")
        if len(set(self.modes)) != len(self.modes) or not self.modes:
            raise LmcError("modes must be a non-empty list of distinct tags")

    @property
    def d(self) -> int:
        return len(self.lows)

    @property
    def box_volume(self) -> float:
        return float(np.prod(np.subtract(self.highs, self.lows))) if self.d else 1.0

    @property
    def volume(self) -> float:
        """Measure of the whole state space: mode count times box volume."""
        return len(self.modes) * self.box_volume

    def bounded(self) -> bool:
        return all(map(math.isfinite, self.lows + self.highs))

    def breaks(self, mode, x, mode2) -> list:
        if self.breakpoints is None:
            return [()] * self.d
        return [tuple(b) for b in self.breakpoints(mode, x, mode2)]


@dataclass(frozen=True)
class Cell:
    mode: object
    lows: tuple
    highs: tuple
    rep: tuple
    name: str

    def contains(self, mode, x) -> bool:
        return mode == self.mode and all(lo <= v < hi for v, lo, hi in zip(x, self.lows, self.highs))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.highs, self.lows)))


@dataclass(frozen=True)
class Partition:
    cells: tuple

    def __len__(self) -> int:
        return len(self.cells)

    def locate(self, mode, x) -> int:
        for i, c in enumerate(self.cells):
            if c.contains(mode, x):
                return i
        raise LmcError(f"no cell contains ({mode}, {tuple(x)})")

    def check(self, model: ContinuousModel) -> None:
        """Raise unless cells are non-empty, hold their representatives and tile the domain."""
        names = [c.name for c in self.cells]
        if len(set(names)) != len(names):
            raise LmcError("cell names must be distinct")
        for c in self.cells:
            if c.mode not in model.modes:
                raise LmcError(f"cell {c.name} has unknown mode {c.mode!r}")
            if len(c.lows) != model.d or any(not lo < hi for lo, hi in zip(c.lows, c.highs)):
                raise LmcError(f"cell {c.name} is empty or has the wrong dimension")
            if not c.contains(c.mode, c.rep):
                raise LmcError(f"representative of {c.name} lies outside the cell")
            if any(lo < L or hi > H for lo, hi, L, H in zip(c.lows, c.highs, model.lows, model.highs)):
                raise LmcError(f"cell {c.name} leaves the domain")
        for mode in model.modes:
            group = [c for c in self.cells if c.mode == mode]
            if not group:
                raise LmcError(f"mode {mode!r} is not covered")
            if model.d == 0:
                if len(group) > 1:
                    raise LmcError(f"mode {mode!r} is split into overlapping cells")
                continue
            lo = np.array([c.lows for c in group])
            hi = np.array([c.highs for c in group])
            vol = np.prod(hi - lo, axis=1).sum()
            if abs(vol - model.box_volume) > 1e-9 * model.box_volume:
                raise LmcError(f"cells of mode {mode!r} have total volume {vol}, not {model.box_volume}")
            if len(group) <= 4000:
                overlap = np.all(
                    (np.maximum(lo[:, None], lo[None]) < np.minimum(hi[:, None], hi[None]) - 1e-12), axis=2
                )
                np.fill_diagonal(overlap, False)
                if overlap.any():
                    a, b = np.argwhere(overlap)[0]
                    raise LmcError(f"cells {group[a].name} and {group[b].name} overlap")


@dataclass(frozen=True)
class LipschitzBudget:
    epsilon: float
    volume: float
    K: float

    @property
    def max_diameter(self) -> float:
        if self.K == 0:
            return math.inf
        return 2.0 * self.epsilon / (self.K * self.volume)


# --------------------------------------------------------------------------
# partitions

def grid_partition(model: ContinuousModel, eps: float) -> Partition:
    """Uniform grid fine enough that the Lipschitz bound certifies ``eps``.

    Each axis gets ``ceil(length * sqrt(d) / max_diameter)`` cells, so every
    cell's Euclidean diameter stays within ``max_diameter``.  A zero constant
    gives one cell per mode.  Representatives sit at the minimal corner.
    """
    if not 0.0 < eps <= 1.0:
        raise LmcError(f"eps must lie in (0, 1], got {eps}")
    if not model.bounded():
        raise LmcError("grid partitions need a bounded domain")
    if math.isinf(model.lipschitz_K):
        raise LmcError("the kernel has no Lipschitz constant; build a partition by hand")
    budget = LipschitzBudget(eps, model.volume, model.lipschitz_K)
    lengths = np.subtract(model.highs, model.lows)
    if model.lipschitz_K == 0 or model.d == 0:
        counts = [1] * model.d
    else:
        counts = [max(1, math.ceil(L * math.sqrt(model.d) / budget.max_diameter - 1e-9)) for L in lengths]
    total = len(model.modes) * math.prod(counts)
    if total > CELL_LIMIT:
        raise ScaleGuardError(f"grid would have {total} cells (limit {CELL_LIMIT})")
    edges = [np.linspace(lo, hi, c + 1) for lo, hi, c in zip(model.lows, model.highs, counts)]
    cells = []
    for mode in model.modes:
        for idx in itertools.product(*(range(c) for c in counts)):
            lows = tuple(float(e[i]) for e, i in zip(edges, idx))
            highs = tuple(float(e[i + 1]) for e, i in zip(edges, idx))
            name = str(mode) if not idx else f"{mode}_" + "_".join(map(str, idx))
            cell = Cell(mode, lows, highs, lows, name)
            if cell.diameter > budget.max_diameter * (1 + 1e-12):
                raise AssertionError(f"cell {name} has diameter {cell.diameter} > {budget.max_diameter}")
            cells.append(cell)
    return Partition(tuple(cells))


# --------------------------------------------------------------------------
# quadrature

def _gauss_rule(order: int, d: int):
    t, w = np.polynomial.legendre.leggauss(order)
    t, w = (t + 1) / 2, w / 2
    ref = np.array(list(itertools.product(t, repeat=d))).reshape(-1, d)
    refw = np.array([math.prod(c) for c in itertools.product(w, repeat=d)])
    return ref, refw


def _split(lo: np.ndarray, hi: np.ndarray, cid: np.ndarray, axis: int, points) -> tuple:
    for b in points:
        inside = (lo[:, axis] < b) & (b < hi[:, axis])
        if inside.any():
            lo2, hi2 = lo[inside].copy(), hi[inside].copy()
            hi[inside, axis] = b
            lo2[:, axis] = b
            lo, hi, cid = np.vstack([lo, lo2]), np.vstack([hi, hi2]), np.concatenate([cid, cid[inside]])
    return lo, hi, cid


def _masses_gauss(model, mode, x, cells, order) -> np.ndarray:
    out = np.zeros(len(cells))
    if model.d:
        ref, refw = _gauss_rule(order, model.d)
    x = np.asarray(x, dtype=float)
    for mode2 in model.modes:
        ids = np.array([i for i, c in enumerate(cells) if c.mode == mode2], dtype=int)
        if not len(ids):
            continue
        if model.d == 0:
            out[ids] = float(model.density(mode, x, mode2, np.zeros((1, 0)))[0])
            continue
        lo = np.array([cells[i].lows for i in ids], dtype=float)
        hi = np.array([cells[i].highs for i in ids], dtype=float)
        cid = np.arange(len(ids))
        for axis, pts in enumerate(model.breaks(mode, x, mode2)):
            lo, hi, cid = _split(lo, hi, cid, axis, pts)
        width = hi - lo
        Y = lo[:, None, :] + width[:, None, :] * ref[None]
        f = np.asarray(model.density(mode, x, mode2, Y.reshape(-1, model.d)), dtype=float).reshape(len(lo), -1)
        piece = (f * refw[None]).sum(axis=1) * np.prod(width, axis=1)
        out[ids] = np.bincount(cid, weights=piece, minlength=len(ids))
    return out


def _masses_adaptive(model, mode, x, cells, tol) -> np.ndarray:
    out = np.zeros(len(cells))
    x = np.asarray(x, dtype=float)
    brk = {m2: model.breaks(mode, x, m2) for m2 in model.modes}

    def f(*y, m2):
        return float(model.density(mode, x, m2, np.array([y], dtype=float))[0])

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for i, c in enumerate(cells):
            if model.d == 0:
                out[i] = float(model.density(mode, x, c.mode, np.zeros((1, 0)))[0])
                continue
            pts = [[p for p in b if lo < p < hi] for b, lo, hi in zip(brk[c.mode], c.lows, c.highs)]
            try:
                if model.d == 1:
                    out[i] = integrate.quad(
                        lambda y: f(y, m2=c.mode), c.lows[0], c.highs[0],
                        points=pts[0] or None, epsabs=tol, epsrel=0.0, limit=200,
                    )[0]
                else:
                    opts = [{"points": p or None, "epsabs": tol, "epsrel": 0.0, "limit": 200} for p in pts]
                    out[i] = integrate.nquad(
                        lambda *y: f(*y, m2=c.mode), list(zip(c.lows, c.highs)), opts=opts
                    )[0]
            except integrate.IntegrationWarning as exc:
                raise LmcError(f"quadrature failed on cell {c.name}: {exc}") from None
    return out


def cell_masses(model: ContinuousModel, mode, x, partition: Partition, quadrature: str = "adaptive",
                tol: float = QUAD_TOL, order: int = GAUSS_ORDER) -> np.ndarray:
    """Kernel mass from ``(mode, x)`` into every cell of ``partition``.

    ``quadrature`` is ``"adaptive"`` (scipy per cell, absolute tolerance
    ``tol``) or ``"gauss"`` (fixed ``order``-point Gauss-Legendre on each cell,
    split at the density's breakpoints; exact for piecewise polynomials of
    degree below ``2 * order``).
    """
    if quadrature == "adaptive":
        return _masses_adaptive(model, mode, x, partition.cells, tol)
    if quadrature == "gauss":
        return _masses_gauss(model, mode, x, partition.cells, order)
    raise LmcError(f"unknown quadrature scheme {quadrature!r}")


def _sample_in(cell: Cell, rng, size: int) -> np.ndarray:
    lo, hi = np.array(cell.lows), np.array(cell.highs)
    return lo + (hi - lo) * rng.random((size, len(lo)))


def _check_labels(model: ContinuousModel, partition: Partition, samples: int = 4, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    labels = []
    for c in partition.cells:
        ref = frozenset(model.label_of(c.mode, c.rep))
        pts = [np.add(c.lows, c.highs) / 2, *_sample_in(c, rng, samples)] if model.d else []
        for p in pts:
            if frozenset(model.label_of(c.mode, tuple(p))) != ref:
                raise LmcError(f"labels are not constant on cell {c.name} (differ at {tuple(np.round(p, 12))})")
        labels.append(ref)
    return labels


def build_abstract(model: ContinuousModel, partition: Partition, quadrature: str = "adaptive",
                   tol: float = QUAD_TOL, order: int = GAUSS_ORDER) -> FiniteLmc:
    """One state per cell; its row is the representative's kernel aggregated over cells."""
    partition.check(model)
    labels = _check_labels(model, partition)
    K = np.array([cell_masses(model, c.mode, c.rep, partition, quadrature, tol, order) for c in partition.cells])
    sums = K.sum(axis=1)
    defect = np.abs(sums - 1.0)
    bad = np.flatnonzero(defect > RENORM_TOL)
    if len(bad):
        i = bad[0]
        raise LmcError(f"row of cell {partition.cells[i].name} sums to {sums[i]:.12g}")
    fix = defect > ROW_TOL
    K[fix] /= sums[fix, None]
    return FiniteLmc([c.name for c in partition.cells], labels, K, model.ap)


@dataclass
class PartitionReport:
    max_distance: float
    worst_pair: tuple
    pairs: int
    eps: float
    tol: float
    distances: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.max_distance <= self.eps + self.tol


def verify_partition(model: ContinuousModel, partition: Partition, eps: float, samples: int = 500,
                     seed: int = 0, quadrature: str = "gauss", tol: float = QUAD_TOL) -> PartitionReport:
    """Largest total-variation gap between cell-aggregated kernels of sampled same-cell pairs."""
    if samples < 1:
        raise LmcError("samples must be at least 1")
    partition.check(model)
    _check_labels(model, partition, seed=seed)
    rng = np.random.default_rng(seed)
    dists = np.zeros(samples)
    worst, worst_pair = -1.0, None
    for s in range(samples):
        c = partition.cells[rng.integers(len(partition))]
        if model.d:
            x1, x2 = (tuple(p.tolist()) for p in _sample_in(c, rng, 2))
        else:
            x1 = x2 = ()
        l1 = frozenset(model.label_of(c.mode, x1))
        if l1 != frozenset(model.label_of(c.mode, x2)):
            raise LmcError(f"labels are not constant on cell {c.name}")
        m1 = cell_masses(model, c.mode, x1, partition, quadrature, tol)
        m2 = cell_masses(model, c.mode, x2, partition, quadrature, tol)
        dists[s] = 0.5 * np.abs(m1 - m2).sum()
        if dists[s] > worst:
            worst, worst_pair = dists[s], ((c.mode, x1), (c.mode, x2))
    return PartitionReport(float(dists.max()), worst_pair, samples, eps, tol, dists)


def concrete_embedding(model: ContinuousModel, partition: Partition, points: Sequence, quadrature: str = "gauss",
                       tol: float = QUAD_TOL):
    """Finite chain holding the abstract states plus the given concrete points.

    Each concrete point ``(mode, x)`` becomes a state ``p<i>`` whose row is its
    own kernel aggregated over cells (it moves into abstract states).  Returns
    the chain and the pairs ``(p<i>, cell containing it)``.
    """
    cells = partition.cells
    n_cells, n = len(cells), len(cells) + len(points)
    K = np.zeros((n, n))
    labels = []
    for i, c in enumerate(cells):
        K[i, :n_cells] = cell_masses(model, c.mode, c.rep, partition, quadrature, tol)
        labels.append(frozenset(model.label_of(c.mode, c.rep)))
    pairs = []
    for j, (mode, x) in enumerate(points):
        K[n_cells + j, :n_cells] = cell_masses(model, mode, x, partition, quadrature, tol)
        labels.append(frozenset(model.label_of(mode, x)))
        pairs.append((f"p{j}", cells[partition.locate(mode, x)].name))
    K /= K.sum(axis=1, keepdims=True)
    names = [c.name for c in cells] + [f"p{j}" for j in range(len(points))]
    return FiniteLmc(names, labels, K, model.ap), pairs


def embed_finite(chain: FiniteLmc) -> ContinuousModel:
    """A finite chain seen as a model with a zero-dimensional box per state."""
    K = chain.kernel
    index = {s: i for i, s in enumerate(chain.states)}

    def density(mode, x, mode2, Y):
        return np.full(len(Y), K[index[mode], index[mode2]])

    return ContinuousModel(
        tuple(chain.states), (), (), density,
        lambda mode, x: chain.labels[index[mode]], chain.ap, lipschitz_K=0.0, name="finite",
    )


# --------------------------------------------------------------------------
# rain / humidity case study

RAIN = "rain"


def rain_probability(r, h):
    """Chance of rain tomorrow given today's rain flag and humidity."""
    return np.where(np.asarray(r) == 1, 0.25, 0.0) + 0.75 * np.asarray(h, dtype=float)


def weather_concrete() -> ContinuousModel:
    """Rain flag ``r`` in {0, 1} and humidity ``h`` in [0, 1).

    Tomorrow rains with probability ``3h/4`` (plus ``1/4`` if it rains today).
    After rain the new humidity is uniform on ``[0, (1+h)/2)``, otherwise on
    ``[h/2, 1)``.
    """

    def density(r, x, r2, Y):
        h = float(x[0])
        y = Y[:, 0]
        p = float(rain_probability(r, h))
        if r2 == 1:
            return np.where(y < (1 + h) / 2, p * 2 / (1 + h), 0.0)
        return np.where(y >= h / 2, (1 - p) * 2 / (2 - h), 0.0)

    def breakpoints(r, x, r2):
        h = float(x[0])
        return [((1 + h) / 2,)] if r2 == 1 else [(h / 2,)]

    return ContinuousModel(
        (0, 1), (0.0,), (1.0,), density,
        lambda r, x: {RAIN} if r == 1 else set(), (RAIN,),
        lipschitz_K=math.inf, breakpoints=breakpoints, name="weather",
    )


def weather_state(r: int, h: int) -> str:
    return f"r{r}_h{h}"


def weather_partition(N: int) -> Partition:
    """Cells ``{r} x [h/N, (h+1)/N)`` with representatives at the lower humidity edge."""
    if int(N) != N or N < 1:
        raise LmcError(f"N must be a positive integer, got {N}")
    return Partition(tuple(
        Cell(r, (h / N,), ((h + 1) / N,), (h / N,), weather_state(r, h))
        for r in (0, 1) for h in range(N)
    ))


def weather_abstract(N: int) -> FiniteLmc:
    """Closed-form abstraction of the rain model on ``2N`` states ``(r, h)``."""
    if int(N) != N or N < 1:
        raise LmcError(f"N must be a positive integer, got {N}")
    N = int(N)
    h0 = np.arange(N, dtype=float)[:, None]
    h1 = np.arange(N, dtype=float)[None, :]
    p_rain_wet = 0.25 + 0.75 * h0 / N
    p_rain_dry = 0.75 * h0 / N
    h_after_rain = 2 / (N + h0) * np.clip((N + h0) / 2 - h1, 0, 1)
    h_after_dry = 2 / (2 * N - h0) * np.clip(h1 + 1 - h0 / 2, 0, 1)
    K = np.block([
        [(1 - p_rain_dry) * h_after_dry, p_rain_dry * h_after_rain],
        [(1 - p_rain_wet) * h_after_dry, p_rain_wet * h_after_rain],
    ])
    names = [weather_state(r, h) for r in (0, 1) for h in range(N)]
    labels = [set()] * N + [{RAIN}] * N
    return FiniteLmc(names, labels, K, (RAIN,))


TWO_RAINY_DAYS = "((X rain) & (X X rain)) | ((X X rain) & (X X X rain))"


@dataclass(frozen=True)
class AnalyticResult:
    p11: float
    p011: float

    @property
    def total(self) -> float:
        return self.p11 + self.p011

    def __iter__(self):
        return iter((self.p11, self.p011, self.total))


def weather_analytic(r0: int = 0, h0: float = 0.5, tol: float = ANALYTIC_TOL) -> AnalyticResult:
    """Exact chance of rain on days 1 and 2, and of dry-rain-rain on days 1..3.

    Integrates the humidity densities of the concrete model numerically.
    """

    def rain_next(r, h):
        return float(rain_probability(r, h))

    def rain_then_rain(h):
        # P[next two days both rain | rain today, humidity h] after the first rain
        top = (1 + h) / 2
        return integrate.quad(lambda y: rain_next(1, y) / top, 0.0, top, epsabs=tol, epsrel=0.0)[0]

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            p11 = rain_next(r0, h0) * rain_then_rain(h0)
            lo = h0 / 2
            p011 = (1 - rain_next(r0, h0)) * integrate.quad(
                lambda h1: rain_next(0, h1) * rain_then_rain(h1) / (1 - lo), lo, 1.0, epsabs=tol, epsrel=0.0
            )[0]
        except integrate.IntegrationWarning as exc:
            raise LmcError(f"quadrature failed: {exc}") from None
    return AnalyticResult(p11, p011)


def prism_listing(N: int) -> str:
    """PRISM dtmc text for the closed-form abstraction, one guarded update per target state."""
    if int(N) != N or N < 1:
        raise LmcError(f"N must be a positive integer, got {N}")
    N = int(N)
    w = len(str(N - 1))
    lines = [
        "// PRISM specification for the Abstract Model.",
        "",
        "dtmc",
        f"formula N = {N};",
        "formula pToRain = r = 1 ? 1/4 + 3/4 * h/N : 3/4 * h/N;",
        "module weatherAbstractModel",
        "",
        "// State space",
        "r : [0..1];",
        "h : [0.. (N-1)];",
        "",
        "[] true ->",
    ]
    updates = [
        (f"(pToRain * 2/(N + h) * max(min((N+h)/2 - {h:0{w}d}, 1), 0))", 1, h) for h in range(N)
    ] + [
        (f"((1-pToRain) * 2/(2*N-h) * max(min({h:0{w}d} + 1 - h/2, 1), 0))", 0, h) for h in range(N)
    ]
    for q, (expr, r, h) in enumerate(updates):
        lead = "   " if q == 0 else " + "
        tail = ";" if q == len(updates) - 1 else ""
        lines.append(f"{lead}{expr}")
        lines.append(f"        : (r'={r}) & (h'={h}){tail}")
    lines += ["", "endmodule", ""]
    return "\n".join(lines)


PRISM_PROPERTY = """filter(state, P=? [
  ( (X (r=1)) & (X X (r=1)) )
  | ( (X X (r=1)) & (X X X (r=1)) )
], r=0&h={h})"""
