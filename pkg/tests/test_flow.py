import math

import numpy as np
import pytest

from conftest import complete_graph, path_graph, random_flow_graph
from oracles import brute_force_wasserstein

from curvflow import (
    FlowConfig,
    ValidationError,
    WeightedGraph,
    initial_state,
    normalize_metric,
    run_flow,
    shortest_path_metric,
    vertex_measure,
)
from curvflow.ricci_flow import (
    STATUS_CONVERGED,
    edge_deletion_step,
    flow_step,
    max_adjacent_ratio,
)


def test_config_validation():
    with pytest.raises(ValidationError):
        FlowConfig(alpha=0.0)
    with pytest.raises(ValidationError):
        FlowConfig(alpha=1.0)
    with pytest.raises(ValidationError):
        FlowConfig(tolerance=0.0)


def test_degree_precondition():
    heavy = WeightedGraph.from_edges(2, [(0, 1, 2.0, 1.0)], measure=[1.0, 1.0])
    with pytest.raises(ValidationError):
        initial_state(heavy)


def test_two_vertex_is_fixed_point():
    g = WeightedGraph.from_edges(2, [(0, 1, 1.0, 3.0)])
    state = flow_step(initial_state(g), FlowConfig())
    assert state.graph.edge_length(0, 1) == pytest.approx(3.0, abs=1e-15)
    result = run_flow(g, FlowConfig(tolerance=1e-12))
    assert result.status == STATUS_CONVERGED
    assert result.growth_rate[0] == pytest.approx(0.0, abs=1e-12)
    assert result.limits[0][(0, 1)] == 1.0


def test_equilateral_triangle_one_step():
    g = complete_graph(3, measure=2.0)
    cfg = FlowConfig(alpha=0.5, tolerance=1e-12)
    state = flow_step(initial_state(g), cfg)
    for u, v in g.edges():
        assert state.graph.edge_length(u, v) == pytest.approx(1.0 - 0.25, abs=1e-12)
    result = run_flow(g, cfg)
    assert result.status == STATUS_CONVERGED
    assert result.final.iteration == 1
    assert all(v == pytest.approx(1.0) for v in result.limits[0].values())
    assert result.growth_rate[0] == pytest.approx(math.log(1 - 0.25), abs=1e-12)
    assert result.final.trace[-1].kappa.max_spread < 1e-12


def test_asymmetric_path_single_step_matches_hand_oracle():
    g = path_graph([1.0, 2.0])
    d = shortest_path_metric(g)
    cfg = FlowConfig(alpha=0.5)
    mus = {x: vertex_measure(g, x) for x in range(3)}
    expected = {}
    for u, v in g.edges():
        sub = d.values[np.ix_(mus[u].support, mus[v].support)]
        w_cost = brute_force_wasserstein(mus[u].mass, mus[v].mass, sub)
        ln = g.edge_length(u, v)
        expected[(u, v)] = ln - cfg.alpha * (1.0 - w_cost / ln) * ln
    state = flow_step(initial_state(g), cfg)
    for e, val in expected.items():
        assert state.graph.edge_length(*e) == pytest.approx(val, abs=1e-12)


def test_deletion_rule_examples():
    cfg = FlowConfig(deletion_threshold=2.0)
    # lengths (3, 1): 3 > 2 * 1, delete the long edge
    g = path_graph([3.0, 1.0])
    state = edge_deletion_step(initial_state(g), cfg)
    assert list(state.graph.edges()) == [(1, 2)]
    assert state.deletion_log[0][1] == (0, 1)
    # lengths (3, 2): 3 <= 4, keep both
    g2 = path_graph([3.0, 2.0])
    state2 = edge_deletion_step(initial_state(g2), cfg)
    assert state2.graph.edge_count() == 2
    # isolated single edge never violates
    g3 = WeightedGraph.from_edges(2, [(0, 1, 1.0, 9.0)])
    assert edge_deletion_step(initial_state(g3), cfg).graph.edge_count() == 1


def test_star_deletes_longest_then_stops():
    star = WeightedGraph.from_edges(
        4, [(0, 1, 1.0, 5.0), (0, 2, 1.0, 1.0), (0, 3, 1.0, 1.0)],
        measure=[3.0, 3.0, 3.0, 3.0])
    cfg = FlowConfig(deletion_threshold=2.0)
    state = edge_deletion_step(initial_state(star), cfg)
    assert (0, 1) not in set(state.graph.edges())
    assert state.graph.edge_count() == 2
    assert len(state.deletion_log) == 1


def test_normalize_metric_per_component():
    g = WeightedGraph.from_edges(
        5, [(0, 1, 1.0, 1.0), (1, 2, 1.0, 2.0), (3, 4, 1.0, 8.0)],
        measure=[2.0] * 5)
    norm = normalize_metric(initial_state(g))
    assert norm[(0, 1)] == pytest.approx(0.5)
    assert norm[(1, 2)] == pytest.approx(1.0)
    assert norm[(3, 4)] == pytest.approx(1.0)


def test_threshold_precondition_checked():
    g = path_graph([3.0, 1.0])
    assert max_adjacent_ratio(g) == pytest.approx(3.0)
    with pytest.raises(ValidationError):
        run_flow(g, FlowConfig(deletion_threshold=2.5, max_iterations=2))


def test_lengths_stay_positive_and_normalized_scale_invariant():
    rng = np.random.default_rng(21)
    g = random_flow_graph(rng, 7)
    cfg = FlowConfig(alpha=0.5, tolerance=1e-10, max_iterations=400)
    res1 = run_flow(g, cfg)
    for row in res1.final.trace:
        assert all(v > 0 for v in row.normalized.values())
    g_scaled = g.with_lengths(g.lengths * 11.0)
    res2 = run_flow(g_scaled, cfg)
    assert res1.status == res2.status == STATUS_CONVERGED
    for r1, r2 in zip(res1.final.trace, res2.final.trace):
        assert r1.deleted_edges == r2.deleted_edges
        for e, v in r1.normalized.items():
            assert v == pytest.approx(r2.normalized[e], abs=1e-9)


def test_random_flows_reach_constant_curvature():
    rng = np.random.default_rng(22)
    for _ in range(5):
        g = random_flow_graph(rng, int(rng.integers(4, 9)))
        res = run_flow(g, FlowConfig(alpha=0.5, tolerance=1e-10))
        assert res.status == STATUS_CONVERGED
        assert res.final.trace[-1].kappa.max_spread < 1e-6


def test_lambda_plus_monotone_after_topology_stabilizes():
    rng = np.random.default_rng(23)
    g = random_flow_graph(rng, 8)
    res = run_flow(g, FlowConfig(alpha=0.5, tolerance=1e-10))
    last_del = max((i for i, r in enumerate(res.final.trace) if r.deleted_edges),
                   default=-1)
    rows = res.final.trace[last_del + 1:]
    for a, b in zip(rows, rows[1:]):
        assert b.lambda_plus <= a.lambda_plus + 1e-12
        assert b.lambda_minus >= a.lambda_minus - 1e-12


def test_stationarity_one_more_step_keeps_normalized_metric():
    rng = np.random.default_rng(24)
    g = random_flow_graph(rng, 6)
    cfg = FlowConfig(alpha=0.5, tolerance=1e-11)
    res = run_flow(g, cfg)
    assert res.status == STATUS_CONVERGED
    before = normalize_metric(res.final)
    after = normalize_metric(flow_step(res.final, cfg))
    for e, v in before.items():
        assert after[e] == pytest.approx(v, abs=1e-9)


def test_disconnected_input_converges_per_component():
    g = WeightedGraph.from_edges(
        6, [(0, 1, 1, 1.0), (1, 2, 1, 1.3), (0, 2, 1, 0.9),
            (3, 4, 1, 2.0), (4, 5, 1, 1.0)],
        measure=[2.0] * 6)
    res = run_flow(g, FlowConfig(alpha=0.5, tolerance=1e-10))
    assert res.status == STATUS_CONVERGED
    assert sorted(res.limits) == [0, 3]
    for stats in res.final.trace[-1].kappa.component_stats.values():
        assert stats[2] < 1e-10


def test_surgery_splits_multiscale_graph():
    # two unit triangles joined by a long bridge: the fast-shrinking
    # triangle edges eventually violate the ratio threshold and the
    # graph splits into constant-curvature pieces
    edges = [(0, 1, 1, 1.0), (1, 2, 1, 1.0), (0, 2, 1, 1.0),
             (3, 4, 1, 1.0), (4, 5, 1, 1.0), (3, 5, 1, 1.0),
             (2, 3, 1, 5.0)]
    g = WeightedGraph.from_edges(7, edges, measure=[3.0] * 7)
    res = run_flow(g, FlowConfig(alpha=0.5, tolerance=1e-10,
                                 deletion_threshold=6.0))
    assert res.status == STATUS_CONVERGED
    assert len(res.final.deletion_log) > 0
    assert len(res.limits) > 1
    for stats in res.final.trace[-1].kappa.component_stats.values():
        assert stats[2] < 1e-10
    # the edge set only ever shrinks
    counts = [len(r.normalized) for r in res.final.trace]
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_edgeless_graph_converges_trivially():
    g = WeightedGraph.from_edges(3, [])
    res = run_flow(g, FlowConfig(tolerance=1e-12))
    assert res.status == STATUS_CONVERGED
    assert res.limits == {} and res.growth_rate == {}


def test_multi_step_trajectory_matches_oracle():
    # five full steps recomputed edge by edge with the enumeration oracle
    rng = np.random.default_rng(31)
    g = random_flow_graph(rng, 6)
    cfg = FlowConfig(alpha=0.4, deletion_threshold=1e9)
    state = initial_state(g)
    for _ in range(5):
        cur = state.graph
        d = shortest_path_metric(cur)
        mus = {x: vertex_measure(cur, x) for x in range(cur.n)
               if cur.neighbors(x).size}
        expected = {}
        for u, v in cur.edges():
            sub = d.values[np.ix_(mus[u].support, mus[v].support)]
            w_cost = brute_force_wasserstein(mus[u].mass, mus[v].mass, sub)
            expected[(u, v)] = (1 - cfg.alpha) * cur.edge_length(u, v) \
                + cfg.alpha * w_cost
        state = flow_step(state, cfg)
        for e, val in expected.items():
            assert state.graph.edge_length(*e) == pytest.approx(val, abs=1e-10)
