import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from approxbisim.abstraction import (
    Cell,
    ContinuousModel,
    LipschitzBudget,
    Partition,
    build_abstract,
    cell_masses,
    concrete_embedding,
    embed_finite,
    grid_partition,
    prism_listing,
    rain_probability,
    verify_partition,
    weather_abstract,
    weather_analytic,
    weather_concrete,
    weather_partition,
)
from approxbisim.bisim import Relation, check_relation
from approxbisim.lmc import LmcError, ScaleGuardError, branching_example, tightness
from helpers import random_lmc


def tilted(d=1, K=4.0, modes=("m",)):
    """Density 1 + c (x0 - 1/2)(y0 - 1/2) on the unit box; Lipschitz constant |c|/2 in x."""
    c = 2 * K

    def density(mode, x, mode2, Y):
        return (1 + c * (x[0] - 0.5) * (Y[:, 0] - 0.5)) / len(modes)

    return ContinuousModel(tuple(modes), (0.0,) * d, (1.0,) * d, density, lambda m, x: set(), (), lipschitz_K=K)


def test_budget_formula():
    assert LipschitzBudget(0.1, 1.0, 4.0).max_diameter == pytest.approx(0.05)
    assert LipschitzBudget(0.1, 1.0, 0.0).max_diameter == math.inf


def test_grid_unit_interval():
    P = grid_partition(tilted(1, K=4.0), 0.1)
    assert len(P) == 20
    assert all(c.diameter <= 0.05 + 1e-15 for c in P.cells)
    assert all(c.rep == c.lows for c in P.cells)


def test_grid_unit_square():
    P = grid_partition(tilted(2, K=2.0), 0.1)
    widths = np.array([np.subtract(c.highs, c.lows) for c in P.cells])
    assert widths.max() <= 0.1 / math.sqrt(2) + 1e-15
    assert max(c.diameter for c in P.cells) <= 0.1 + 1e-15
    P.check(tilted(2, K=2.0))


def test_grid_zero_constant_and_errors():
    flat = tilted(1, K=0.0, modes=("p", "q"))
    assert len(grid_partition(flat, 0.3)) == 2
    with pytest.raises(LmcError):
        grid_partition(flat, 0.0)
    with pytest.raises(LmcError):
        grid_partition(weather_concrete(), 0.1)
    unbounded = ContinuousModel(("m",), (0.0,), (math.inf,), None, None, (), lipschitz_K=1.0)
    with pytest.raises(LmcError):
        grid_partition(unbounded, 0.1)
    with pytest.raises(ScaleGuardError):
        grid_partition(tilted(3, K=50.0), 0.01)


def test_grid_partition_certifies_eps():
    m = tilted(1, K=4.0)
    P = grid_partition(m, 0.1)
    rep = verify_partition(m, P, 0.1, samples=200, seed=1)
    assert rep.ok


def test_partition_check_catches_gaps_and_overlaps():
    m = tilted(1)
    with pytest.raises(LmcError):
        Partition((Cell("m", (0.0,), (0.5,), (0.0,), "a"),)).check(m)
    with pytest.raises(LmcError):
        Partition((Cell("m", (0.0,), (0.6,), (0.0,), "a"), Cell("m", (0.4,), (1.0,), (0.4,), "b"),
                   Cell("m", (0.6,), (0.6 + 1e-9,), (0.6,), "c"))).check(m)
    with pytest.raises(LmcError):
        Partition((Cell("m", (0.0,), (1.0,), (1.0,), "a"),)).check(m)


@pytest.mark.parametrize("chain", [branching_example(), tightness(0.3), random_lmc(np.random.default_rng(8), 6, 2)])
def test_singleton_cells_reproduce_finite_chain(chain):
    emb = embed_finite(chain)
    A = build_abstract(emb, grid_partition(emb, 0.5))
    assert A.states == chain.states and A.labels == chain.labels
    assert np.array_equal(A.kernel, chain.kernel)
    assert verify_partition(emb, grid_partition(emb, 0.5), 0.0, samples=20).max_distance == 0.0


def test_weather_concrete_kernel():
    assert float(rain_probability(1, 0.5)) == 0.625
    assert float(rain_probability(0, 0.0)) == 0.0
    m = weather_concrete()
    Y = np.array([[0.1], [0.3], [0.9]])
    assert np.allclose(m.density(0, (0.5,), 0, Y), [0.0, (1 - 0.375) / 0.75, (1 - 0.375) / 0.75])
    for r in (0, 1):
        for h in (0.0, 0.3, 0.999):
            total = cell_masses(m, r, (h,), weather_partition(1), quadrature="adaptive").sum()
            assert total == pytest.approx(1.0, abs=1e-9)
    assert m.label_of(1, (0.2,)) == {"rain"} and not m.label_of(0, (0.2,))


@pytest.mark.parametrize("N", [4, 100, 1000])
def test_weather_abstract_rows(N):
    W = weather_abstract(N)
    assert W.n == 2 * N
    assert np.allclose(W.kernel.sum(axis=1), 1.0, atol=1e-9, rtol=0)


def test_weather_abstract_entries():
    W = weather_abstract(1000)
    i = W.index("r0_h500")
    assert W.kernel[i, 1000:].sum() == pytest.approx(0.375, abs=1e-12)
    j = W.index("r1_h500")
    assert W.kernel[j, 1000:].sum() == pytest.approx(0.625, abs=1e-12)
    with pytest.raises(LmcError):
        weather_abstract(0)


@pytest.mark.parametrize("N", [4, 10])
@pytest.mark.parametrize("scheme", ["adaptive", "gauss"])
def test_quadrature_reproduces_closed_form(N, scheme):
    A = build_abstract(weather_concrete(), weather_partition(N), quadrature=scheme)
    W = weather_abstract(N)
    assert A.states == W.states and A.labels == W.labels
    assert np.abs(A.kernel - W.kernel).max() <= 1e-9


def test_analytic_values():
    res = weather_analytic()
    assert res.p11 == pytest.approx(0.19921875, abs=1e-9)
    # 0.625 * int_{1/4}^{1} h (7/16 + 3h/16) dh in closed form
    assert res.p011 == pytest.approx(0.1666259765625, abs=1e-9)
    assert abs(res.p11 - 0.199219) <= 1e-5
    assert abs(res.p011 - 0.166626) <= 1e-5
    assert abs(res.total - 0.365845) <= 1e-5
    assert tuple(res) == (res.p11, res.p011, res.total)


@pytest.mark.parametrize("N", [10, 100])
def test_weather_partition_within_one_over_n(N):
    rep = verify_partition(weather_concrete(), weather_partition(N), 1.0 / N, samples=200, seed=3)
    assert rep.ok and rep.max_distance <= 1.0 / N + 1e-9
    assert rep.max_distance > 0.5 / N


def test_verify_gauss_matches_adaptive():
    m, P = weather_concrete(), weather_partition(10)
    for x in [(0.13,), (0.57,), (0.99,)]:
        for r in (0, 1):
            g = cell_masses(m, r, x, P, quadrature="gauss")
            q = cell_masses(m, r, x, P, quadrature="adaptive")
            assert np.abs(g - q).max() <= 1e-9


def test_label_mixing_partition_rejected():
    m = weather_concrete()

    def label_by_humidity(r, x):
        return {"rain"} if x[0] >= 0.5 else set()

    mixed = ContinuousModel(m.modes, m.lows, m.highs, m.density, label_by_humidity, m.ap,
                            breakpoints=m.breakpoints)
    with pytest.raises(LmcError, match="not constant"):
        verify_partition(mixed, weather_partition(1), 0.5, samples=10)
    with pytest.raises(LmcError, match="not constant"):
        build_abstract(mixed, weather_partition(1))


@pytest.mark.parametrize("N", [4, 10])
def test_sampled_embedding_is_bisimulation(N):
    model, P = weather_concrete(), weather_partition(N)
    rng = np.random.default_rng(N)
    points = []
    for c in P.cells:
        points.append((c.mode, c.rep))
        points.append((c.mode, (c.lows[0] + (c.highs[0] - c.lows[0]) * rng.random(),)))
    chain, pairs = concrete_embedding(model, P, points)
    rel = Relation.from_pairs(chain, pairs + [(s, s) for s in chain.states], symmetrize=True)
    assert check_relation(chain, rel, 1.0 / N + 1e-9).ok


def test_prism_listing_layout():
    text = prism_listing(1000)
    lines = text.splitlines()
    assert lines[3] == "formula N = 1000;"
    assert lines[4] == "formula pToRain = r = 1 ? 1/4 + 3/4 * h/N : 3/4 * h/N;"
    assert lines[12] == "   (pToRain * 2/(N + h) * max(min((N+h)/2 - 000, 1), 0))"
    assert lines[13] == "        : (r'=1) & (h'=0)"
    assert " + ((1-pToRain) * 2/(2*N-h) * max(min(999 + 1 - h/2, 1), 0))" in lines
    assert "        : (r'=0) & (h'=999);" in lines
    assert text.count(" : (r'=") == 2000


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 400), st.floats(0.05, 1.0), st.floats(0.0, 2.0))  # tilted is a density for K <= 2
def test_abstract_chains_are_stochastic(N, eps, K):
    W = weather_abstract(N)
    assert np.all(W.kernel >= 0)
    assert np.abs(W.kernel.sum(axis=1) - 1).max() <= 1e-9
    m = tilted(1, K=K)
    A = build_abstract(m, grid_partition(m, eps), quadrature="gauss")
    assert np.all(A.kernel >= 0)
    assert np.abs(A.kernel.sum(axis=1) - 1).max() <= 1e-9
