import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from beliefmerge.belief import Belief, GridShape, ShapeMismatch, kl_divergence
from beliefmerge.merge import (
    DegenerateProduct,
    InfeasibleFloor,
    MergeStrategy,
    SolverParams,
    TooLarge,
    arithmetic_merge,
    brute_force_simplex_min,
    floor_mass,
    forward_kl_objective,
    geometric_merge,
    merge_beliefs,
    numeric_forward_kl_merge,
    numeric_reverse_kl_merge,
    project_floored_simplex,
    reverse_kl_objective,
    simplex_grid,
    visit_weighted_merge,
    visit_weights,
)

pytestmark = pytest.mark.invariant


def line(values):
    return Belief(GridShape(len(values), 1), values)


def random_instance(rng, n, positive=False):
    agents = int(rng.integers(1, 5))
    alpha = 1.0 if positive else 0.5
    bs = []
    for _ in range(agents):
        m = rng.dirichlet(np.full(n, alpha))
        if positive:
            m = np.maximum(m, 1e-6)
            m /= m.sum()
        bs.append(line(m))
    return bs, rng.dirichlet(np.ones(agents))


def summed_kl(p, q):
    # independent re-summation oracle with plain floats
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


# -- objectives ----------------------------------------------------------------

def test_forward_objective_examples():
    q = line([0.3, 0.7])
    assert forward_kl_objective([q, q], [0.5, 0.5], q) == 0.0
    b = line([0.9, 0.1])
    assert forward_kl_objective([b], [1.0], q) == kl_divergence(b, q)
    b1, b2, mid = [0.8, 0.2], [0.2, 0.8], [0.5, 0.5]
    expected = 0.5 * summed_kl(b1, mid) + 0.5 * summed_kl(b2, mid)
    got = forward_kl_objective([line(b1), line(b2)], [0.5, 0.5], line(mid))
    assert got == pytest.approx(expected, abs=1e-15)
    with pytest.raises(ShapeMismatch):
        forward_kl_objective([line([1, 0])], None, line([1, 0, 0]))


def test_reverse_objective_examples():
    q = line([0.3, 0.7])
    assert reverse_kl_objective([q, q], None, q) == 0.0
    assert reverse_kl_objective([line([0.5, 0.5])], [1.0], line([1, 0])) == pytest.approx(math.log(2), abs=1e-15)
    assert reverse_kl_objective([line([1, 0]), line([0.5, 0.5])], None, line([0.5, 0.5])) == math.inf


def test_weights_are_validated():
    b = line([0.5, 0.5])
    with pytest.raises(ValueError):
        arithmetic_merge([b, b], [0.7, 0.7])
    with pytest.raises(ValueError):
        arithmetic_merge([b, b], [1.0])


# -- closed forms ----------------------------------------------------------------

def test_arithmetic_merge_examples():
    b = line([0.1, 0.6, 0.3])
    assert arithmetic_merge([b, b, b]).isclose(b, 1e-15)
    out = arithmetic_merge([line([0.8, 0.2]), line([0.2, 0.8])], [0.25, 0.75])
    np.testing.assert_allclose(out.mass, [0.35, 0.65], atol=1e-15)


def test_geometric_merge_examples():
    b = line([0.1, 0.6, 0.3])
    assert geometric_merge([b, b]).isclose(b, 1e-12)
    out = geometric_merge([line([0.9, 0.1]), line([0.1, 0.9])], [0.5, 0.5])
    np.testing.assert_allclose(out.mass, [0.5, 0.5], atol=1e-15)


def test_geometric_merge_disjoint_supports():
    a, b = line([1, 0]), line([0, 1])
    np.testing.assert_allclose(geometric_merge([a, b]).mass, [0.5, 0.5])
    with pytest.raises(DegenerateProduct):
        geometric_merge([a, b], strict=True)


def test_geometric_merge_ignores_zero_weight_agents():
    out = geometric_merge([line([0.4, 0.6]), line([0.0, 1.0])], [1.0, 0.0])
    np.testing.assert_allclose(out.mass, [0.4, 0.6], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_arithmetic_beats_three_cell_scan(seed):
    rng = np.random.default_rng(seed)
    bs, w = random_instance(rng, 3)
    scan = brute_force_simplex_min(bs, w, "forward", 200)
    assert forward_kl_objective(bs, w, arithmetic_merge(bs, w)) <= forward_kl_objective(bs, w, scan) + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_geometric_beats_three_cell_scan(seed):
    rng = np.random.default_rng(100 + seed)
    bs, w = random_instance(rng, 3, positive=True)
    scan = brute_force_simplex_min(bs, w, "reverse", 200)
    assert reverse_kl_objective(bs, w, geometric_merge(bs, w)) <= reverse_kl_objective(bs, w, scan) + 1e-9


def test_visit_weights_examples():
    np.testing.assert_array_equal(visit_weights(np.zeros((2, 5), dtype=int)), 0.5)
    w = visit_weights(np.array([[3], [0]]))
    np.testing.assert_allclose(w[:, 0], [0.8, 0.2], atol=1e-15)
    w = visit_weights(np.array([[10 ** 6], [0]]))
    assert w[0, 0] >= 1 - 2e-6
    with pytest.raises(ValueError):
        visit_weights(np.array([[-1], [0]]))


def test_visit_weighted_merge_examples():
    b = line([0.2, 0.3, 0.5])
    rng = np.random.default_rng(0)
    assert visit_weighted_merge([b, b], rng.integers(0, 50, size=(2, 3))).isclose(b, 1e-15)
    out = visit_weighted_merge([line([1, 0]), line([0, 1])], np.array([[5, 5], [0, 0]]))
    # per-cell weights (5+1)/(5+1+0+1) = 6/7 and 1/7
    np.testing.assert_allclose(out.mass, [6 / 7, 1 / 7], atol=1e-15)


def test_visit_weighted_untrusted_rejection_example():
    n = 4
    truth = line([0.1, 0.2, 0.3, 0.4])
    ghost = line([0, 0, 0, 1.0])
    visits = np.zeros((2, n), dtype=np.int64)
    visits[0, 3] = 10 ** 6
    W = visit_weights(visits)
    assert W[1, 3] * ghost.mass[3] < 2e-6
    out = visit_weighted_merge([truth, ghost], visits)
    assert out.mass.sum() == pytest.approx(1.0, abs=1e-12)


def test_visit_weighted_merge_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        visit_weighted_merge([line([1, 0])], np.zeros((2, 2)))


def test_merge_dispatch():
    a, b = line([0.8, 0.2]), line([0.2, 0.8])
    v = np.zeros((2, 2), dtype=int)
    np.testing.assert_allclose(merge_beliefs("arithmetic", [a, b]).mass, [0.5, 0.5])
    np.testing.assert_allclose(merge_beliefs(MergeStrategy.GEOMETRIC, [a, b]).mass, [0.5, 0.5])
    np.testing.assert_allclose(merge_beliefs("visit_weighted", [a, b], v).mass, [0.5, 0.5])
    np.testing.assert_allclose(merge_beliefs("forward_kl", [a, b]).mass, [0.5, 0.5], atol=1e-8)
    np.testing.assert_allclose(merge_beliefs("reverse_kl", [a, b]).mass, [0.5, 0.5], atol=1e-8)
    with pytest.raises(ValueError):
        merge_beliefs("visit_weighted", [a, b])


# -- numeric baselines -------------------------------------------------------------

def test_floored_projection():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(2, 50))
        v = rng.normal(size=n)
        q = project_floored_simplex(v, 1e-3)
        assert q.min() >= 1e-3 - 1e-15
        assert q.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InfeasibleFloor):
        project_floored_simplex(np.ones(10), 0.1)


def test_numeric_near_identity():
    b = line([0.9, 0.1])
    res = numeric_forward_kl_merge([b, b], params=SolverParams(epsilon_floor=1e-5))
    assert res.converged
    np.testing.assert_allclose(res.belief.mass, b.mass, atol=2e-5)
    res = numeric_reverse_kl_merge([b, b], params=SolverParams(epsilon_floor=1e-5))
    np.testing.assert_allclose(res.belief.mass, b.mass, atol=2e-5)


def test_floor_mass_at_ten_thousand_cells():
    assert floor_mass(10_000, 1e-5) == pytest.approx(0.10, abs=1e-15)


def test_numeric_infeasible_floor():
    b = line([0.25] * 4)
    with pytest.raises(InfeasibleFloor):
        numeric_forward_kl_merge([b], params=SolverParams(epsilon_floor=0.25))


def test_numeric_reverse_on_disjoint_supports_is_interior():
    res = numeric_reverse_kl_merge([line([1, 0, 0]), line([0, 0, 1])])
    assert res.belief.mass.min() >= 1e-5 - 1e-15
    assert math.isfinite(res.objective)


def test_numeric_reports_nonconvergence():
    rng = np.random.default_rng(0)
    bs = [line(rng.dirichlet(np.ones(50))) for _ in range(2)]
    res = numeric_forward_kl_merge(bs, params=SolverParams(max_iterations=2))
    assert not res.converged
    assert res.iterations == 2


@pytest.mark.parametrize("seed", range(10))
def test_numeric_never_beats_closed_form(seed):
    rng = np.random.default_rng(seed)
    bs, w = random_instance(rng, 3, positive=True)
    num = numeric_forward_kl_merge(bs, w).belief
    assert forward_kl_objective(bs, w, num) >= forward_kl_objective(bs, w, arithmetic_merge(bs, w)) - 1e-12
    num = numeric_reverse_kl_merge(bs, w).belief
    assert reverse_kl_objective(bs, w, num) >= reverse_kl_objective(bs, w, geometric_merge(bs, w)) - 1e-12


def test_quantized_solver_is_worse():
    rng = np.random.default_rng(5)
    bs = [line(rng.dirichlet(np.ones(200))) for _ in range(2)]
    opt = forward_kl_objective(bs, None, arithmetic_merge(bs))
    plain = numeric_forward_kl_merge(bs).belief
    quant = numeric_forward_kl_merge(bs, params=SolverParams(quantization_levels=20)).belief
    assert forward_kl_objective(bs, None, quant) - opt > 10 * (forward_kl_objective(bs, None, plain) - opt)
    opt = reverse_kl_objective(bs, None, geometric_merge(bs))
    quant = numeric_reverse_kl_merge(bs, params=SolverParams(quantization_levels=20)).belief
    assert reverse_kl_objective(bs, None, quant) - opt > 1e-3


# -- brute-force oracle ---------------------------------------------------------------

def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert len(g) == 15
    np.testing.assert_allclose(g.sum(axis=1), 1.0)
    assert g.min() >= 0
    assert len({tuple(r) for r in g}) == 15


def test_brute_force_examples():
    bs = [line([0.8, 0.2]), line([0.2, 0.8])]
    fwd = brute_force_simplex_min(bs, [0.5, 0.5], "forward", 10_000)
    np.testing.assert_allclose(fwd.mass, [0.5, 0.5], atol=1e-4)
    rev = brute_force_simplex_min(bs, [0.5, 0.5], "reverse", 10_000)
    np.testing.assert_allclose(rev.mass, [0.5, 0.5], atol=1e-4)
    np.testing.assert_array_equal(brute_force_simplex_min([line([1.0])], None, "forward", 50).mass, [1.0])
    with pytest.raises(TooLarge):
        brute_force_simplex_min([line([0.2] * 5)], None, "forward", 10)
    with pytest.raises(ValueError):
        brute_force_simplex_min(bs, None, "sideways", 10)


# -- properties ------------------------------------------------------------------------

def test_arithmetic_minimizes_forward_objective_property():
    rng = np.random.default_rng(11)
    for n in (2, 3):
        for _ in range(500):
            bs, w = random_instance(rng, n)
            best = brute_force_simplex_min(bs, w, "forward", 200)
            analytic = forward_kl_objective(bs, w, arithmetic_merge(bs, w))
            assert analytic <= forward_kl_objective(bs, w, best) + 1e-9


def test_geometric_minimizes_reverse_objective_property():
    rng = np.random.default_rng(12)
    for n in (2, 3):
        for _ in range(500):
            bs, w = random_instance(rng, n, positive=True)
            best = brute_force_simplex_min(bs, w, "reverse", 200)
            analytic = reverse_kl_objective(bs, w, geometric_merge(bs, w))
            assert analytic <= reverse_kl_objective(bs, w, best) + 1e-9


@settings(max_examples=1000, deadline=None)
@given(data=st.data(), n=st.integers(2, 12), agents=st.integers(2, 5))
def test_zero_avoiding_vs_zero_forcing(data, n, agents):
    B = data.draw(arrays(float, (agents, n), elements=st.floats(0.01, 1.0)))
    s = data.draw(st.integers(0, n - 1))
    i = data.draw(st.integers(0, agents - 1))
    B[i, s] = 0.0
    bs = [line(row / row.sum()) for row in B]
    assert arithmetic_merge(bs).mass[s] > 0.0
    assert geometric_merge(bs).mass[s] == 0.0


@settings(max_examples=1000, deadline=None)
@given(visits=arrays(np.int64, st.tuples(st.integers(1, 6), st.integers(1, 20)),
                     elements=st.integers(0, 10 ** 6)))
def test_visit_weights_column_stochastic(visits):
    W = visit_weights(visits)
    np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-9)
    assert W.min() > 0.0


@pytest.mark.parametrize("agents", [2, 3, 5])
def test_trusted_acceptance_bound(agents):
    previous = 0.0
    for M in (10 ** 2, 10 ** 4, 10 ** 6):
        v = np.zeros((agents, 1), dtype=np.int64)
        v[0, 0] = M
        w = visit_weights(v)[0, 0]
        assert abs(w - 1.0) <= agents / M
        assert w > previous
        previous = w


@pytest.mark.parametrize("agents", [2, 3, 5])
def test_untrusted_rejection_bound(agents):
    rng = np.random.default_rng(agents)
    for M in (10 ** 2, 10 ** 4, 10 ** 6):
        v = np.zeros((agents, 1), dtype=np.int64)
        split = rng.multinomial(M, np.ones(agents - 1) / (agents - 1))
        v[1:, 0] = split
        assert visit_weights(v)[0, 0] <= 1.0 / (M + agents)


@settings(max_examples=1000, deadline=None)
@given(data=st.data(), n=st.integers(1, 15), agents=st.integers(1, 5), count=st.integers(0, 1000))
def test_equal_visits_reduce_to_arithmetic(data, n, agents, count):
    B = data.draw(arrays(float, (agents, n), elements=st.floats(0.01, 1.0)))
    bs = [line(row / row.sum()) for row in B]
    visits = np.full((agents, n), count)
    assert visit_weighted_merge(bs, visits).isclose(arithmetic_merge(bs), 1e-12)


def test_numeric_gap_grows_with_grid_area():
    """Splitting every cell into r equal parts leaves the analytic optimum
    unchanged but makes the solver floor bite harder."""
    rng = np.random.default_rng(21)
    base = [rng.dirichlet(np.full(10, 0.5)) for _ in range(2)]
    for objective, numeric, analytic in (
        (forward_kl_objective, numeric_forward_kl_merge, arithmetic_merge),
        (reverse_kl_objective, numeric_reverse_kl_merge, geometric_merge),
    ):
        gaps = []
        for r in (1, 10, 100, 1000):
            bs = [line(np.repeat(b / r, r)) for b in base]
            num = numeric(bs).belief
            gaps.append(objective(bs, None, num) - objective(bs, None, analytic(bs)))
        assert all(later >= earlier - 1e-9 for earlier, later in zip(gaps, gaps[1:])), gaps
        assert gaps[-1] > gaps[0]
