"""Exact and relaxation solvers.

exact_solve finds the minimum number of activations by iterative
deepening: for k = k_lb, k_lb+1, ... it enumerates the k-subsets of the
dashed edges in lexicographic order and accepts the first feasible one.
The enumeration is realised as a depth-first search with pruning rules
that only skip subtrees provably containing no feasible subset, so the
accepted subset is exactly the lexicographically first feasible one.

lp_lower_bound solves the relaxation where each activation variable may
be fractional: its optimum equals a min-cost max-flow whose dashed arcs
cost one over the owning user's demand per unit, computed with exact
rational arithmetic.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .flowcore import build_network, max_flow, min_cost_max_flow
from .model import Allocation, Instance, SolveResult
from . import _kernels

__all__ = [
    "ExactConfig",
    "GloballyInfeasibleError",
    "exact_solve",
    "lp_lower_bound",
    "export_milp",
    "check_3partition",
]


class GloballyInfeasibleError(RuntimeError):
    """Total demand exceeds total capacity: no activation set can help."""

    def __init__(self, total_demand, total_capacity):
        super().__init__(
            "globally infeasible: total demand %d exceeds total capacity %d"
            % (total_demand, total_capacity)
        )
        self.total_demand = total_demand
        self.total_capacity = total_capacity


@dataclass
class ExactConfig:
    max_budget: "int | None" = None
    time_limit: "float | None" = None
    prune: bool = True


def _dashed_index_pairs(inst: Instance) -> list[tuple[int, int]]:
    pairs = []
    for u in range(inst.num_users):
        pre = set(int(a) for a in inst.preinstalled_of(u))
        for a in range(inst.num_apps):
            if a not in pre:
                pairs.append((u, a))
    return pairs


class _SubsetSearcher:
    """Lexicographic DFS over k-subsets of the dashed edges.

    Feasibility of a leaf is evaluated on one shared network holding every
    dashed arc: non-selected dashed arcs get capacity zero, which gives the
    same max-flow value as a network built without them.
    """

    def __init__(self, inst: Instance, dashed: list[tuple[int, int]]):
        self.inst = inst
        self.dashed = dashed
        self.net = build_network(inst, dashed)
        arc_of = {(u, a): aid for aid, u, a, is_d in self.net.edge_arcs if is_d}
        self.dashed_arcs = np.array([arc_of[p] for p in dashed], dtype=np.int64)
        self.pristine = self.net.base_cap.copy()
        self.total = inst.total_demand
        # users with no preinstalled app need at least one chosen edge;
        # their dashed edges sit in one contiguous index block
        n = inst.num_users
        counts = np.diff(inst.pre_indptr)
        self.needs_edge = [int(counts[u]) == 0 for u in range(n)]
        self.block_end = [0] * n
        for idx, (u, a) in enumerate(dashed):
            self.block_end[u] = idx + 1
        self.leaf_evals = 0

    def _leaf_feasible(self, chosen: list[int]) -> bool:
        self.leaf_evals += 1
        net = self.net
        np.copyto(net.arc_cap, self.pristine)
        net.arc_cap[self.dashed_arcs] = 0
        if chosen:
            sel = self.dashed_arcs[chosen]
            net.arc_cap[sel] = self.pristine[sel]
        value = _kernels.dinic_kernel(
            net.num_nodes,
            net.arc_to,
            net.arc_cap,
            net.adj_indptr,
            net.adj_arcs,
            net.source,
            net.sink,
        )
        return int(value) == self.total

    def first_feasible(self, k: int, deadline: "float | None") -> "list[int] | None | str":
        """Lexicographically first feasible k-subset, None, or 'timeout'."""
        D = len(self.dashed)
        if k > D:
            return None
        uncovered = sum(1 for u in range(self.inst.num_users) if self.needs_edge[u])
        chosen: list[int] = []
        cover_hits = [0] * self.inst.num_users

        def rec(start: int, uncovered: int) -> "list[int] | None | str":
            slots = k - len(chosen)
            if slots == 0:
                if deadline is not None and self.leaf_evals % 256 == 0 and time.perf_counter() > deadline:
                    return "timeout"
                return list(chosen) if self._leaf_feasible(chosen) else None
            if uncovered > slots:
                return None
            # every still-uncovered user must have a candidate edge ahead
            for u in range(self.inst.num_users):
                if self.needs_edge[u] and cover_hits[u] == 0 and self.block_end[u] <= start:
                    return None
            for idx in range(start, D - slots + 1):
                u = self.dashed[idx][0]
                newly = self.needs_edge[u] and cover_hits[u] == 0
                cover_hits[u] += 1
                chosen.append(idx)
                out = rec(idx + 1, uncovered - 1 if newly else uncovered)
                chosen.pop()
                cover_hits[u] -= 1
                if out is not None:
                    return out
            return None

        return rec(0, uncovered)


def exact_solve(inst: Instance, cfg: "ExactConfig | None" = None) -> SolveResult:
    """Minimum activation count by iterative deepening over subset sizes.

    Raises GloballyInfeasibleError when total demand exceeds total
    capacity.  A max_budget that is exhausted yields a structured result
    with status 'budget_exceeded' (optimal=False, no allocation); hitting
    time_limit yields status 'time_limit'.
    """
    cfg = cfg or ExactConfig()
    start = time.perf_counter()
    total_cap = int(inst.capacities.sum())
    if inst.total_demand > total_cap:
        raise GloballyInfeasibleError(inst.total_demand, total_cap)

    dashed = _dashed_index_pairs(inst)
    D = len(dashed)
    if cfg.max_budget is not None:
        if cfg.max_budget < 0:
            raise ValueError("max_budget must be non-negative")
        if cfg.max_budget > D:
            raise ValueError(
                "max_budget %d exceeds the number of dashed edges %d" % (cfg.max_budget, D)
            )

    deadline = None if cfg.time_limit is None else start + cfg.time_limit

    k_lb = 0
    if cfg.prune:
        bound = lp_lower_bound(inst)
        k_lb = max(0, math.ceil(bound.activation_count))

    budget = cfg.max_budget if cfg.max_budget is not None else D
    searcher = _SubsetSearcher(inst, dashed)
    for k in range(k_lb, budget + 1):
        found = searcher.first_feasible(k, deadline)
        if found == "timeout":
            return SolveResult(
                algorithm="exact",
                status="time_limit",
                optimal=False,
                activation_count=None,
                total_unallocated=None,
                wall_time=time.perf_counter() - start,
                allocation=None,
            )
        if found is not None:
            subset = [dashed[i] for i in found]
            alloc = _witness_allocation(inst, subset)
            return SolveResult(
                algorithm="exact",
                status="optimal",
                optimal=True,
                activation_count=k,
                total_unallocated=0,
                wall_time=time.perf_counter() - start,
                allocation=alloc,
            )
        if deadline is not None and time.perf_counter() > deadline:
            return SolveResult(
                algorithm="exact",
                status="time_limit",
                optimal=False,
                activation_count=None,
                total_unallocated=None,
                wall_time=time.perf_counter() - start,
                allocation=None,
            )
    return SolveResult(
        algorithm="exact",
        status="budget_exceeded",
        optimal=False,
        activation_count=None,
        total_unallocated=None,
        wall_time=time.perf_counter() - start,
        allocation=None,
    )


def _witness_allocation(inst: Instance, subset: list[tuple[int, int]]) -> Allocation:
    net = build_network(inst, subset)
    res = max_flow(net)
    fu, fa, fx = [], [], []
    for aid, u, a, _is_d in net.edge_arcs:
        f = int(res.arc_flows[aid])
        if f > 0:
            fu.append(u); fa.append(a); fx.append(f)
    au = [u for u, _a in subset]
    aa = [a for _u, a in subset]
    return Allocation(inst.user_ids, fu, fa, fx, au, aa)


def lp_lower_bound(inst: Instance) -> SolveResult:
    """Fractional-activation lower bound.

    Over all integral routings of the full demand with every dashed edge
    present, minimizes the sum of (flow on dashed edge) / (owning user's
    demand) -- a min-cost max-flow with that per-unit cost.  Exact
    rational arithmetic throughout; the activation_count is a Fraction.
    """
    start = time.perf_counter()
    total_cap = int(inst.capacities.sum())
    if inst.total_demand > total_cap:
        raise GloballyInfeasibleError(inst.total_demand, total_cap)
    dashed = _dashed_index_pairs(inst)
    net = build_network(inst, dashed, activation_costs=True)
    res = min_cost_max_flow(net)
    if res.value != inst.total_demand:
        # cannot happen when caps cover demand; kept as a hard guard
        raise GloballyInfeasibleError(inst.total_demand, total_cap)
    fu, fa, fx = [], [], []
    au, aa = [], []
    for aid, u, a, is_d in net.edge_arcs:
        f = int(res.arc_flows[aid])
        if f > 0:
            fu.append(u); fa.append(a); fx.append(f)
            if is_d:
                au.append(u); aa.append(a)
    alloc = Allocation(inst.user_ids, fu, fa, fx, au, aa)
    return SolveResult(
        algorithm="lp",
        status="bound",
        optimal=False,
        activation_count=res.cost,
        total_unallocated=0,
        wall_time=time.perf_counter() - start,
        allocation=alloc,
    )


_NAME_RE = re.compile(r"[^A-Za-z0-9_]")


def _var_name(prefix: str, uid: str, app: int) -> str:
    return "%s_%s_%d" % (prefix, _NAME_RE.sub("_", uid), app)


def _wrap_terms(label: str, terms: list[str], tail: str) -> list[str]:
    lines = []
    current = " %s: %s" % (label, terms[0])
    for term in terms[1:]:
        piece = " + " + term
        if len(current) + len(piece) > 200:
            lines.append(current)
            current = "   + " + term
        else:
            current += piece
    lines.append(current + tail)
    return lines


def export_milp(inst: Instance, path) -> None:
    """Write the activation-minimisation model in LP text format.

    Flow variables f_<user>_<app> exist for every user/app pair; binary
    x_<user>_<app> variables exist for dashed pairs only, linked by
    f <= demand * x.  Row names: R_user_<id>, R_cap_<a>, R_act_<u>_<a>.
    Any MILP solver reading LP files can cross-check exact_solve.
    """
    n = inst.num_users
    m = inst.num_apps
    solid = [set(int(a) for a in inst.preinstalled_of(u)) for u in range(n)]

    lines = ["\\ activation minimization model", "Minimize"]
    obj_terms = []
    for u in range(n):
        for a in range(m):
            if a not in solid[u]:
                obj_terms.append(_var_name("x", inst.user_ids[u], a))
    if obj_terms:
        lines.extend(_wrap_terms("obj", obj_terms, ""))
    else:
        lines.append(" obj: 0 %s" % _var_name("f", inst.user_ids[0], 0))

    lines.append("Subject To")
    for u in range(n):
        terms = [_var_name("f", inst.user_ids[u], a) for a in range(m)]
        label = "R_user_%s" % _NAME_RE.sub("_", inst.user_ids[u])
        lines.extend(_wrap_terms(label, terms, " = %d" % int(inst.demands[u])))
    for a in range(m):
        terms = [_var_name("f", inst.user_ids[u], a) for u in range(n)]
        lines.extend(_wrap_terms("R_cap_%d" % a, terms, " <= %d" % int(inst.capacities[a])))
    for u in range(n):
        demand = int(inst.demands[u])
        for a in range(m):
            if a not in solid[u]:
                f = _var_name("f", inst.user_ids[u], a)
                x = _var_name("x", inst.user_ids[u], a)
                label = "R_act_%s_%d" % (_NAME_RE.sub("_", inst.user_ids[u]), a)
                lines.append(" %s: %s - %d %s <= 0" % (label, f, demand, x))

    lines.append("Bounds")
    for term in obj_terms:
        lines.append(" 0 <= %s <= 1" % term)

    lines.append("Generals")
    f_names = [
        _var_name("f", inst.user_ids[u], a) for u in range(n) for a in range(m)
    ]
    for i in range(0, len(f_names), 12):
        lines.append(" " + " ".join(f_names[i : i + 12]))
    if obj_terms:
        lines.append("Binaries")
        for i in range(0, len(obj_terms), 12):
            lines.append(" " + " ".join(obj_terms[i : i + 12]))
    lines.append("End")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def check_3partition(items, B: int) -> bool:
    """Decide 3-Partition by solving the equivalent activation instance.

    items must contain 3m values strictly between B/4 and B/2 summing to
    m*B.  The answer is True exactly when the derived instance is solvable
    with 3m activations (one app install per user).
    """
    from .synth import reduce_3partition

    inst, budget = reduce_3partition(items, B)
    res = exact_solve(inst, ExactConfig(max_budget=budget, prune=True))
    return res.status == "optimal" and res.activation_count == budget
