from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meaf import (
    Instance,
    build_network,
    dashed_edges,
    feasible,
    max_flow,
    min_cost_max_flow,
    to_dot,
)

import _oracles
from conftest import tiny_instances


def _inst(num_apps, caps, users):
    return Instance.from_users(num_apps, caps, users)


def _conservation_ok(net, flows, value):
    """Net flow out of every node: +value at source, -value at sink, 0 inside."""
    balance = [0] * net.num_nodes
    for e in range(0, net.num_arcs, 2):
        f = int(flows[e])
        frm = int(net.arc_to[e ^ 1])
        to = int(net.arc_to[e])
        balance[frm] -= f
        balance[to] += f
    if balance[net.source] != -value or balance[net.sink] != value:
        return False
    return all(
        balance[v] == 0
        for v in range(net.num_nodes)
        if v not in (net.source, net.sink)
    )


# ------------------------------------------------------------------ build


def test_build_single_user_solid_only():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    net = build_network(inst)
    # s->u0, u0->a0, a0->t, a1->t
    assert net.num_arcs == 8  # 4 forward + 4 reverse
    assert len(net.edge_arcs) == 1
    aid, u, a, is_dashed = net.edge_arcs[0]
    assert (u, a, is_dashed) == (0, 0, False)
    assert int(net.base_cap[aid]) == 2
    # source arc carries the demand, app arcs carry the caps
    assert int(net.base_cap[0]) == 2
    app_caps = sorted(
        int(net.base_cap[e])
        for e in range(0, net.num_arcs, 2)
        if int(net.arc_to[e]) == net.sink
    )
    assert app_caps == [3, 3]


def test_build_adds_activated_arc():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    net = build_network(inst, active={("u0", 1)})
    assert len(net.edge_arcs) == 2
    dashed = [(u, a) for _, u, a, d in net.edge_arcs if d]
    assert dashed == [(0, 1)]
    aid = next(aid for aid, _, a, d in net.edge_arcs if d)
    assert int(net.base_cap[aid]) == 2


def test_build_no_solid_edges_routes_nothing():
    inst = _inst(1, [3], [("u0", 1, []), ("u1", 1, []), ("u2", 1, [])])
    net = build_network(inst)
    assert net.edge_arcs == []
    assert max_flow(net).value == 0


def test_active_accepts_index_or_id():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    by_id = build_network(inst, active={("u0", 1)})
    by_idx = build_network(inst, active={(0, 1)})
    assert [(u, a) for _, u, a, _ in by_id.edge_arcs] == [
        (u, a) for _, u, a, _ in by_idx.edge_arcs
    ]


def test_active_duplicates_collapse():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    net = build_network(inst, active=[("u0", 1), (0, 1), ("u0", 1)])
    assert sum(1 for _, _, _, d in net.edge_arcs if d) == 1


def test_active_rejects_preinstalled_pair():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    with pytest.raises(ValueError, match="preinstalled edge"):
        build_network(inst, active={("u0", 0)})


def test_active_rejects_out_of_range_app():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    with pytest.raises(ValueError, match="app id out of range"):
        build_network(inst, active={("u0", 2)})


# --------------------------------------------------------------- max_flow


def test_max_flow_single_user_full():
    inst = _inst(1, [3], [("u0", 3, [0])])
    assert max_flow(build_network(inst)).value == 3


def test_max_flow_single_user_capped():
    inst = _inst(1, [2], [("u0", 3, [0])])
    assert max_flow(build_network(inst)).value == 2


def test_max_flow_three_users_shared_app():
    inst = _inst(2, [2, 2], [("u0", 1, [0]), ("u1", 2, [0]), ("u2", 2, [1])])
    res = max_flow(build_network(inst))
    assert res.value == 4
    # independent route: exhaustive search over partial allocations
    assert _oracles.max_routable(inst, _oracles.user_masks(inst)) == 4


def test_max_flow_matches_exhaustive_search():
    rng = np.random.RandomState(2024)
    for _ in range(120):
        inst = _oracles.random_tiny_instance(rng, max_users=4, max_apps=3,
                                             max_t=3, max_cap=4)
        got = max_flow(build_network(inst)).value
        want = _oracles.max_routable(inst, _oracles.user_masks(inst))
        assert got == want


def test_max_flow_deterministic_flows():
    inst = _inst(3, [4, 1, 2], [("u0", 3, [0, 1]), ("u1", 4, [0, 2]), ("u2", 2, [1, 2])])
    first = max_flow(build_network(inst))
    second = max_flow(build_network(inst))
    assert first.value == second.value
    assert np.array_equal(first.arc_flows, second.arc_flows)


def test_reset_allows_resolving():
    inst = _inst(2, [2, 3], [("u0", 3, [0, 1]), ("u1", 2, [0])])
    net = build_network(inst)
    first = max_flow(net)
    net.reset()
    second = max_flow(net)
    assert first.value == second.value
    assert np.array_equal(first.arc_flows, second.arc_flows)


@given(tiny_instances(max_users=5, max_apps=3, max_t=4, max_cap=6))
def test_max_flow_conservation(inst):
    net = build_network(inst, active=list(dashed_edges(inst))[:3])
    res = max_flow(net)
    assert _conservation_ok(net, res.arc_flows, res.value)
    # no arc over capacity
    assert np.all(res.arc_flows <= net.base_cap)


@given(tiny_instances(max_users=4, max_apps=3, max_t=3, max_cap=5), st.randoms())
def test_max_flow_monotone_in_active_set(inst, rnd):
    dashed = list(dashed_edges(inst))
    rnd.shuffle(dashed)
    prev = max_flow(build_network(inst)).value
    for i in range(len(dashed)):
        value = max_flow(build_network(inst, active=dashed[: i + 1])).value
        assert value >= prev
        prev = value


# --------------------------------------------------------------- feasible


def _reduction_111():
    return _inst(1, [3], [("u0", 1, []), ("u1", 1, []), ("u2", 1, [])])


def test_feasible_all_edges_active():
    inst = _reduction_111()
    active = [("u0", 0), ("u1", 0), ("u2", 0)]
    assert feasible(inst, active) is True
    # cut route: every user holds app 0, total 3 fits cap 3
    assert _oracles.cut_feasible(1, [3], [1, 1, 1], [1, 1, 1]) is True


def test_feasible_missing_one_edge():
    inst = _reduction_111()
    for drop in range(3):
        active = [("u%d" % u, 0) for u in range(3) if u != drop]
        assert feasible(inst, active) is False


def test_feasible_demand_exceeds_total_caps():
    inst = _inst(2, [2, 1], [("u0", 3, [0]), ("u1", 2, [1])])
    assert feasible(inst, list(dashed_edges(inst))) is False


def test_feasible_agrees_with_cut_condition():
    rng = np.random.RandomState(555)
    hits = 0
    for _ in range(250):
        inst = _oracles.random_tiny_instance(rng, max_users=4, max_apps=3,
                                             max_t=3, max_cap=4)
        masks = _oracles.user_masks(inst)
        caps = [int(c) for c in inst.capacities]
        demands = [int(t) for t in inst.demands]
        want = _oracles.cut_feasible(inst.num_apps, caps, demands, masks)
        assert feasible(inst) is want
        hits += want
        # and again with every dashed edge switched on
        full = [(1 << inst.num_apps) - 1] * inst.num_users
        want_full = _oracles.cut_feasible(inst.num_apps, caps, demands, full)
        assert feasible(inst, list(dashed_edges(inst))) is want_full
    assert 0 < hits < 250  # both outcomes exercised


# ------------------------------------------------------- min_cost_max_flow


def test_min_cost_zero_cost_network():
    inst = _inst(2, [2, 2], [("u0", 1, [0]), ("u1", 2, [0]), ("u2", 2, [1])])
    res = min_cost_max_flow(build_network(inst))
    assert res.cost == 0
    assert isinstance(res.cost, Fraction)
    assert res.value == max_flow(build_network(inst)).value


def test_min_cost_single_user_split():
    inst = _inst(2, [1, 1], [("u0", 2, [])])
    net = build_network(inst, active=list(dashed_edges(inst)), activation_costs=True)
    res = min_cost_max_flow(net)
    assert res.value == 2
    assert res.cost == Fraction(1)
    assert _oracles.min_relaxation_over_flows(inst) == Fraction(1)


def test_min_cost_two_users_prefers_solid():
    inst = _inst(2, [2, 2], [("u0", 1, [0]), ("u1", 3, [])])
    net = build_network(inst, active=list(dashed_edges(inst)), activation_costs=True)
    res = min_cost_max_flow(net)
    assert res.value == 4
    assert res.cost == Fraction(1)
    assert _oracles.min_relaxation_over_flows(inst) == Fraction(1)
    assert _conservation_ok(net, res.arc_flows, res.value)


def test_min_cost_value_matches_max_flow():
    rng = np.random.RandomState(808)
    for _ in range(80):
        inst = _oracles.random_tiny_instance(rng, max_users=4, max_apps=3,
                                             max_t=3, max_cap=4)
        active = list(dashed_edges(inst))
        res = min_cost_max_flow(build_network(inst, active, activation_costs=True))
        plain = max_flow(build_network(inst, active)).value
        assert res.value == plain


def test_min_cost_matches_flow_enumeration():
    rng = np.random.RandomState(909)
    checked = 0
    for _ in range(60):
        inst = _oracles.random_tiny_instance(rng, max_users=3, max_apps=3,
                                             max_t=3, max_cap=4)
        want = _oracles.min_relaxation_over_flows(inst)
        active = list(dashed_edges(inst))
        res = min_cost_max_flow(build_network(inst, active, activation_costs=True))
        if want is None:
            assert res.value < inst.total_demand
            continue
        assert res.value == inst.total_demand
        assert res.cost == want
        checked += 1
    assert checked >= 20


def test_cost_scaling_uses_demand_lcm():
    inst = _inst(2, [5, 5], [("u0", 2, [0]), ("u1", 3, [1])])
    net = build_network(inst, active=list(dashed_edges(inst)), activation_costs=True)
    assert net.cost_den == 6
    cost_by_user = {
        u: net.arc_cost[aid] for aid, u, _, d in net.edge_arcs if d
    }
    assert cost_by_user == {0: 3, 1: 2}  # 6/2 and 6/3, i.e. 1/demand scaled by 6


# ------------------------------------------------------------------ to_dot


def test_to_dot_plain_network():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    dot = to_dot(build_network(inst))
    assert dot.startswith("digraph")
    assert "s -> u0" in dot
    assert "u0 -> a0" in dot
    assert "a0 -> t" in dot and "a1 -> t" in dot
    assert "style=dashed" not in dot


def test_to_dot_marks_dashed_and_costs():
    inst = _inst(2, [3, 3], [("u0", 2, [0])])
    net = build_network(inst, active={("u0", 1)}, activation_costs=True)
    dot = to_dot(net, user_ids=inst.user_ids)
    assert '"u0" -> a1 [label="2, 1/2" style=dashed];' in dot
    assert dot.endswith("}\n")
