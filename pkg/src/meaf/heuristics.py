"""Capacity-aware allocation heuristics.

Both heuristics process users in a deterministic order and greedily
drain the app with the most remaining capacity at each step (ties go to
the lowest app id).  They differ in what a single user may touch:

* carl: per user, three layers in sequence: own preinstalled apps, apps
  some user already activated, then brand-new apps.  Users are ordered
  by demand divided by the preinstalled capacity mass (sum of caps over
  the user's preinstalled apps); users with no preinstalled capacity
  rank as infinity.  Ascending order (the default) lets small users fill
  shared capacity first; descending is kept for comparison.
* dtas: ascending (demand, preinstall count) order, two phases: everyone
  first allocates over preinstalled apps only, then leftover demand
  reuses activated apps before installing new ones.

With total demand <= total capacity both always route everything: a
user's layers/phases jointly reach every app with remaining capacity.
"""

from __future__ import annotations

import os
import time

import numpy as np

from . import _kernels
from .model import Allocation, Instance, SolveResult

__all__ = ["carl", "dtas", "HeuristicState"]

_DEBUG = os.environ.get("MEAF_DEBUG", "") not in ("", "0", "false", "no")


class HeuristicState:
    """Final allocator state, mainly for invariant checks in tests.

    remaining_capacity[a] + transactions_handled[a] == capacities[a] is
    maintained after every user (checked inside the kernels when debug
    is on) and re-checked here on construction.
    """

    __slots__ = ("remaining_capacity", "transactions_handled", "total_remaining")

    def __init__(self, capacities, handled, remaining, total_remaining):
        if np.any(handled + remaining != capacities) or np.any(remaining < 0):
            raise AssertionError("capacity accounting violated")
        self.remaining_capacity = remaining
        self.transactions_handled = handled
        self.total_remaining = int(total_remaining)


def _run_kernel(kernel, inst: Instance, order: np.ndarray, debug: bool):
    f_user, f_app, f_amt, f_new, handled, remaining, unalloc = kernel(
        inst.demands,
        inst.capacities,
        inst.pre_indptr,
        inst.pre_indices,
        order,
        1 if debug else 0,
    )
    state = HeuristicState(inst.capacities, handled, remaining, unalloc.sum())
    act_mask = f_new == 1
    nz = np.nonzero(unalloc)[0]
    alloc = Allocation(
        inst.user_ids,
        f_user,
        f_app,
        f_amt,
        f_user[act_mask],
        f_app[act_mask],
        nz,
        unalloc[nz],
    )
    return alloc, state


def _carl_order(inst: Instance, descending: bool) -> np.ndarray:
    counts = np.diff(inst.pre_indptr)
    mass = np.zeros(inst.num_users, dtype=np.int64)
    if inst.pre_indices.size:
        rows = np.repeat(np.arange(inst.num_users, dtype=np.int64), counts)
        np.add.at(mass, rows, inst.capacities[inst.pre_indices])
    with np.errstate(divide="ignore"):
        key = np.where(
            mass > 0,
            inst.demands.astype(np.float64) / np.maximum(mass, 1),
            np.inf,
        )
    if descending:
        key = -key
    return np.argsort(key, kind="stable").astype(np.int64)


def carl(inst: Instance, order: str = "ascending", debug: "bool | None" = None) -> SolveResult:
    """Layered greedy allocation; order is 'ascending' or 'descending'."""
    if order not in ("ascending", "descending"):
        raise ValueError("order must be 'ascending' or 'descending'")
    if debug is None:
        debug = _DEBUG
    start = time.perf_counter()
    perm = _carl_order(inst, descending=(order == "descending"))
    alloc, state = _run_kernel(_kernels.carl_kernel, inst, perm, debug)
    return SolveResult(
        algorithm="carl-asc" if order == "ascending" else "carl-desc",
        status="heuristic",
        optimal=False,
        activation_count=alloc.activation_count(),
        total_unallocated=state.total_remaining,
        wall_time=time.perf_counter() - start,
        allocation=alloc,
    )


def dtas(inst: Instance, debug: "bool | None" = None) -> SolveResult:
    """Two-phase greedy allocation in ascending (demand, preinstalled) order."""
    if debug is None:
        debug = _DEBUG
    start = time.perf_counter()
    counts = np.diff(inst.pre_indptr)
    perm = np.lexsort((counts, inst.demands)).astype(np.int64)
    alloc, state = _run_kernel(_kernels.dtas_kernel, inst, perm, debug)
    return SolveResult(
        algorithm="dtas",
        status="heuristic",
        optimal=False,
        activation_count=alloc.activation_count(),
        total_unallocated=state.total_remaining,
        wall_time=time.perf_counter() - start,
        allocation=alloc,
    )
