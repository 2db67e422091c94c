"""Domain types for activation-minimizing transaction routing.

An instance is a set of users with integer transaction demands, a set of
apps with integer capacity caps, and per-user preinstalled app sets.  A
user/app pair that is not preinstalled is a "dashed" edge: routing flow
over it requires activating (installing) the app for that user, and the
number of such activations is the objective solvers minimise.

Instances are stored columnwise (numpy arrays) so that million-user
inputs stay cheap; :class:`UserRecord` views are materialised on demand.
Instances are immutable after validation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "UserRecord",
    "Instance",
    "Allocation",
    "SolveResult",
    "VerificationReport",
    "validate_instance",
    "verify_allocation",
    "dashed_edges",
    "instance_to_dict",
    "instance_from_dict",
    "read_instance",
    "write_instance",
    "allocation_to_dict",
    "allocation_from_dict",
    "read_allocation",
    "write_allocation",
    "canonical_dumps",
    "format_count",
]


class InstanceError(ValueError):
    """Instance data violates a structural constraint."""


@dataclass(frozen=True)
class UserRecord:
    """One user: opaque id, positive demand, preinstalled app ids."""

    id: str
    demand: int
    preinstalled: frozenset[int] = field(default_factory=frozenset)


def canonical_dumps(obj) -> str:
    """Canonical JSON: sorted keys, compact separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


class Instance:
    """Validated, immutable problem instance.

    Parameters are columnar: ``demands`` (int64, one per user),
    ``pre_indptr``/``pre_indices`` in CSR layout with each user's
    preinstalled app ids sorted ascending.  ``alpha`` records that the
    capacities came from a uniform cap fraction, so serialisation can
    round-trip that form.
    """

    __slots__ = (
        "num_apps",
        "capacities",
        "alpha",
        "user_ids",
        "demands",
        "pre_indptr",
        "pre_indices",
        "total_demand",
        "_id_index",
        "_users",
    )

    def __init__(self, num_apps, capacities, user_ids, demands, pre_indptr, pre_indices, alpha=None):
        if not isinstance(num_apps, int) or num_apps < 1:
            raise InstanceError("num_apps must be a positive integer")
        caps = np.asarray(capacities, dtype=np.int64)
        if caps.ndim != 1 or caps.shape[0] != num_apps:
            raise InstanceError(
                "capacity list length %d != num_apps %d" % (caps.size, num_apps)
            )
        if caps.size and int(caps.min()) < 0:
            raise InstanceError("negative capacity for app %d" % int(np.argmin(caps)))

        ids = list(user_ids)
        n = len(ids)
        seen = set()
        for uid in ids:
            if not isinstance(uid, str):
                raise InstanceError("user id must be a string, got %r" % (uid,))
            if uid in seen:
                raise InstanceError("duplicate user id %r" % uid)
            seen.add(uid)

        dem = np.asarray(demands, dtype=np.int64)
        if dem.shape != (n,):
            raise InstanceError("demands length %d != number of users %d" % (dem.size, n))
        if n and int(dem.min()) < 1:
            bad = int(np.argmin(dem))
            raise InstanceError(
                "user %r has non-positive demand %d" % (ids[bad], int(dem[bad]))
            )

        indptr = np.asarray(pre_indptr, dtype=np.int64)
        indices = np.asarray(pre_indices, dtype=np.int64)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or int(indptr[-1]) != indices.size:
            raise InstanceError("malformed preinstalled index arrays")
        if np.any(np.diff(indptr) < 0):
            raise InstanceError("malformed preinstalled index arrays")
        if indices.size:
            if int(indices.min()) < 0 or int(indices.max()) >= num_apps:
                bad = int(indices[(indices < 0) | (indices >= num_apps)][0])
                raise InstanceError("app id out of range: %d" % bad)
            # rows must be strictly increasing: sorted and duplicate-free
            boundary = np.zeros(indices.size, dtype=bool)
            starts = indptr[1:-1]
            boundary[starts[starts < indices.size]] = True
            inner = ~boundary[1:]
            if np.any(inner & (np.diff(indices) <= 0)):
                raise InstanceError("duplicate or unsorted preinstalled app ids")

        if alpha is not None:
            alpha = float(alpha)
            if alpha < 1.0 / num_apps:
                raise InstanceError(
                    "alpha below 1/num_apps: %g < 1/%d" % (alpha, num_apps)
                )

        caps.setflags(write=False)
        dem.setflags(write=False)
        indptr.setflags(write=False)
        indices.setflags(write=False)

        object.__setattr__(self, "num_apps", num_apps)
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "user_ids", ids)
        object.__setattr__(self, "demands", dem)
        object.__setattr__(self, "pre_indptr", indptr)
        object.__setattr__(self, "pre_indices", indices)
        object.__setattr__(self, "total_demand", int(dem.sum()))
        object.__setattr__(self, "_id_index", None)
        object.__setattr__(self, "_users", None)

    def __setattr__(self, name, value):
        raise AttributeError("Instance is immutable")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_users(cls, num_apps, capacities, users, alpha=None):
        """Build from an iterable of UserRecord / (id, demand, preinstalled)."""
        ids = []
        demands = []
        indptr = [0]
        indices = []
        for rec in users:
            if isinstance(rec, UserRecord):
                uid, dem, pre = rec.id, rec.demand, rec.preinstalled
            elif isinstance(rec, Mapping):
                uid, dem, pre = rec["id"], rec["demand"], rec.get("preinstalled", ())
            else:
                uid, dem, pre = rec
            ids.append(uid)
            demands.append(dem)
            row = sorted(int(a) for a in pre)
            for a, b in zip(row, row[1:]):
                if a == b:
                    raise InstanceError("duplicate preinstalled app %d for user %r" % (a, uid))
            indices.extend(row)
            indptr.append(len(indices))
        return cls(num_apps, capacities, ids, demands, indptr, indices, alpha=alpha)

    def with_capacities(self, capacities=None, alpha=None):
        """Same users, new caps (explicit list or uniform ceil(alpha * T))."""
        if (capacities is None) == (alpha is None):
            raise ValueError("pass exactly one of capacities / alpha")
        if alpha is not None:
            alpha = float(alpha)
            if alpha < 1.0 / self.num_apps:
                raise InstanceError("alpha below 1/num_apps: %g < 1/%d" % (alpha, self.num_apps))
            cap = math.ceil(alpha * self.total_demand)
            capacities = [cap] * self.num_apps
        return Instance(
            self.num_apps,
            capacities,
            self.user_ids,
            self.demands,
            self.pre_indptr,
            self.pre_indices,
            alpha=alpha,
        )

    # -- views ----------------------------------------------------------------

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    @property
    def num_solid_edges(self) -> int:
        return int(self.pre_indices.size)

    @property
    def num_dashed_edges(self) -> int:
        return self.num_users * self.num_apps - self.num_solid_edges

    @property
    def users(self) -> list[UserRecord]:
        """Materialised user records (O(n); cached)."""
        if self._users is None:
            out = []
            for i, uid in enumerate(self.user_ids):
                lo, hi = int(self.pre_indptr[i]), int(self.pre_indptr[i + 1])
                out.append(
                    UserRecord(
                        uid,
                        int(self.demands[i]),
                        frozenset(int(a) for a in self.pre_indices[lo:hi]),
                    )
                )
            object.__setattr__(self, "_users", out)
        return self._users

    def preinstalled_of(self, user_index: int) -> np.ndarray:
        lo, hi = int(self.pre_indptr[user_index]), int(self.pre_indptr[user_index + 1])
        return self.pre_indices[lo:hi]

    def user_index(self, user) -> int:
        """Index of a user given its id (str) or an index (int)."""
        if isinstance(user, (int, np.integer)):
            i = int(user)
            if not 0 <= i < self.num_users:
                raise KeyError("user index out of range: %d" % i)
            return i
        if self._id_index is None:
            object.__setattr__(
                self, "_id_index", {uid: i for i, uid in enumerate(self.user_ids)}
            )
        try:
            return self._id_index[user]
        except KeyError:
            raise KeyError("unknown user id %r" % (user,)) from None

    def is_solid(self, user, app: int) -> bool:
        i = self.user_index(user)
        row = self.preinstalled_of(i)
        j = int(np.searchsorted(row, app))
        return j < row.size and int(row[j]) == app

    def solid_key_array(self) -> np.ndarray:
        """Sorted int64 keys u*num_apps+a over all solid edges."""
        if self.pre_indices.size == 0:
            return np.empty(0, dtype=np.int64)
        counts = np.diff(self.pre_indptr)
        rows = np.repeat(np.arange(self.num_users, dtype=np.int64), counts)
        return rows * self.num_apps + self.pre_indices

    def __repr__(self):
        return "Instance(users=%d, apps=%d, total_demand=%d)" % (
            self.num_users,
            self.num_apps,
            self.total_demand,
        )


def validate_instance(raw) -> Instance:
    """Parse and validate raw instance data (mapping or Instance) into an Instance."""
    if isinstance(raw, Instance):
        return raw
    if not isinstance(raw, Mapping):
        raise InstanceError("instance data must be a JSON object")
    try:
        num_apps = raw["num_apps"]
        cap_field = raw["capacities"]
        users = raw["users"]
    except KeyError as exc:
        raise InstanceError("missing required field %s" % exc) from None
    if not isinstance(num_apps, int) or isinstance(num_apps, bool):
        raise InstanceError("num_apps must be an integer")

    alpha = None
    if isinstance(cap_field, Mapping):
        if set(cap_field) != {"alpha"}:
            raise InstanceError("capacities object must have exactly the key 'alpha'")
        alpha = float(cap_field["alpha"])
        capacities = None
    else:
        capacities = list(cap_field)
        for c in capacities:
            if not isinstance(c, int) or isinstance(c, bool):
                raise InstanceError("capacities must be integers")

    ids = []
    demands = []
    indptr = [0]
    indices = []
    if not isinstance(users, Sequence):
        raise InstanceError("users must be an array")
    for rec in users:
        if not isinstance(rec, Mapping):
            raise InstanceError("each user must be a JSON object")
        try:
            uid = rec["id"]
            dem = rec["demand"]
        except KeyError as exc:
            raise InstanceError("user missing field %s" % exc) from None
        if not isinstance(dem, int) or isinstance(dem, bool):
            raise InstanceError("user %r demand must be an integer" % (uid,))
        pre = rec.get("preinstalled", [])
        row = sorted(int(a) for a in pre)
        for a, b in zip(row, row[1:]):
            if a == b:
                raise InstanceError("duplicate preinstalled app %d for user %r" % (a, uid))
        ids.append(uid)
        demands.append(dem)
        indices.extend(row)
        indptr.append(len(indices))

    if alpha is not None:
        if num_apps < 1:
            raise InstanceError("num_apps must be a positive integer")
        if alpha < 1.0 / num_apps:
            raise InstanceError("alpha below 1/num_apps: %g < 1/%d" % (alpha, num_apps))
        total = sum(demands)
        capacities = [math.ceil(alpha * total)] * num_apps

    return Instance(num_apps, capacities, ids, demands, indptr, indices, alpha=alpha)


def dashed_edges(inst: Instance) -> Iterator[tuple[str, int]]:
    """Yield (user id, app id) for every non-preinstalled pair.

    Order: users in input order, apps ascending within a user.
    """
    for i, uid in enumerate(inst.user_ids):
        row = inst.preinstalled_of(i)
        pre = set(int(a) for a in row)
        for a in range(inst.num_apps):
            if a not in pre:
                yield (uid, a)


# -- allocations ---------------------------------------------------------------


class Allocation:
    """Sparse integral routing plus the set of activated (installed) edges.

    Stored columnwise; ``flows`` / ``activated`` / ``unallocated`` views are
    materialised lazily for small-scale convenience.
    """

    __slots__ = (
        "user_ids",
        "flow_user",
        "flow_app",
        "flow_amount",
        "act_user",
        "act_app",
        "un_user",
        "un_amount",
        "_flows",
        "_activated",
        "_unallocated",
    )

    def __init__(self, user_ids, flow_user, flow_app, flow_amount, act_user, act_app,
                 un_user=None, un_amount=None):
        self.user_ids = list(user_ids)
        self.flow_user = np.asarray(flow_user, dtype=np.int64)
        self.flow_app = np.asarray(flow_app, dtype=np.int64)
        self.flow_amount = np.asarray(flow_amount, dtype=np.int64)
        self.act_user = np.asarray(act_user, dtype=np.int64)
        self.act_app = np.asarray(act_app, dtype=np.int64)
        self.un_user = np.asarray(
            un_user if un_user is not None else [], dtype=np.int64
        )
        self.un_amount = np.asarray(
            un_amount if un_amount is not None else [], dtype=np.int64
        )
        self._flows = None
        self._activated = None
        self._unallocated = None

    @classmethod
    def empty(cls, user_ids=()):
        return cls(user_ids, [], [], [], [], [])

    @property
    def flows(self) -> dict[tuple[str, int], int]:
        if self._flows is None:
            self._flows = {
                (self.user_ids[u], int(a)): int(x)
                for u, a, x in zip(
                    self.flow_user.tolist(), self.flow_app.tolist(), self.flow_amount.tolist()
                )
            }
        return self._flows

    @property
    def activated(self) -> set[tuple[str, int]]:
        if self._activated is None:
            self._activated = {
                (self.user_ids[u], int(a))
                for u, a in zip(self.act_user.tolist(), self.act_app.tolist())
            }
        return self._activated

    @property
    def unallocated(self) -> dict[str, int]:
        """Residual demand per user id; users not present implicitly have 0."""
        if self._unallocated is None:
            self._unallocated = {
                self.user_ids[u]: int(x)
                for u, x in zip(self.un_user.tolist(), self.un_amount.tolist())
            }
        return self._unallocated

    @property
    def total_unallocated(self) -> int:
        return int(self.un_amount.sum()) if self.un_amount.size else 0

    def activation_count(self) -> int:
        return int(self.act_user.size)

    def app_loads(self, num_apps: int) -> np.ndarray:
        """Handled transactions per app id over [0, num_apps)."""
        loads = np.zeros(num_apps, dtype=np.int64)
        np.add.at(loads, self.flow_app, self.flow_amount)
        return loads

    def __repr__(self):
        return "Allocation(flows=%d, activated=%d, unallocated=%d)" % (
            self.flow_user.size,
            self.act_user.size,
            self.total_unallocated,
        )


def allocation_to_dict(alloc: Allocation) -> dict:
    order = np.lexsort((alloc.flow_app, alloc.flow_user))
    flows = [
        [alloc.user_ids[int(alloc.flow_user[i])], int(alloc.flow_app[i]), int(alloc.flow_amount[i])]
        for i in order
    ]
    aorder = np.lexsort((alloc.act_app, alloc.act_user))
    activated = [
        [alloc.user_ids[int(alloc.act_user[i])], int(alloc.act_app[i])] for i in aorder
    ]
    return {
        "flows": flows,
        "activated": activated,
        "unallocated": {k: v for k, v in sorted(alloc.unallocated.items())},
    }


def allocation_from_dict(raw: Mapping) -> Allocation:
    ids = []
    index = {}

    def idx(uid):
        if uid not in index:
            index[uid] = len(ids)
            ids.append(uid)
        return index[uid]

    fu, fa, fx = [], [], []
    for trip in raw.get("flows", []):
        uid, a, x = trip
        fu.append(idx(uid)); fa.append(int(a)); fx.append(int(x))
    au, aa = [], []
    for pair in raw.get("activated", []):
        uid, a = pair
        au.append(idx(uid)); aa.append(int(a))
    uu, ux = [], []
    for uid, x in raw.get("unallocated", {}).items():
        uu.append(idx(uid)); ux.append(int(x))
    return Allocation(ids, fu, fa, fx, au, aa, uu, ux)


def write_allocation(alloc: Allocation, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(canonical_dumps(allocation_to_dict(alloc)))


def read_allocation(path) -> Allocation:
    with open(path, "r", encoding="utf-8") as fh:
        return allocation_from_dict(json.load(fh))


def instance_to_dict(inst: Instance) -> dict:
    if inst.alpha is not None:
        caps = {"alpha": inst.alpha}
    else:
        caps = [int(c) for c in inst.capacities]
    users = []
    for i, uid in enumerate(inst.user_ids):
        users.append(
            {
                "id": uid,
                "demand": int(inst.demands[i]),
                "preinstalled": [int(a) for a in inst.preinstalled_of(i)],
            }
        )
    return {"num_apps": inst.num_apps, "capacities": caps, "users": users}


def instance_from_dict(raw: Mapping) -> Instance:
    return validate_instance(raw)


def write_instance(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(canonical_dumps(instance_to_dict(inst)))


def read_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_instance(json.load(fh))


# -- results -------------------------------------------------------------------


@dataclass
class SolveResult:
    """Outcome of one solver run.

    ``activation_count`` is an int for integral solvers and a Fraction for
    the relaxation bound; it is None when no solution was produced
    (budget exceeded, time limit).
    """

    algorithm: str
    status: str  # optimal | heuristic | bound | budget_exceeded | time_limit
    optimal: bool
    activation_count: "int | Fraction | None"
    total_unallocated: "int | None"
    wall_time: float
    allocation: "Allocation | None"

    def to_json_dict(self, include_timing: bool = True) -> dict:
        count = self.activation_count
        if isinstance(count, Fraction) and count.denominator == 1:
            count = int(count)
        if isinstance(count, Fraction):
            count_field = "%d/%d" % (count.numerator, count.denominator)
            approx = float(count)
        else:
            count_field = count
            approx = None if count is None else float(count)
        out = {
            "algorithm": self.algorithm,
            "status": self.status,
            "optimal": self.optimal,
            "activation_count": count_field,
            "activation_count_approx": approx,
            "total_unallocated": self.total_unallocated,
            "allocation": None if self.allocation is None else allocation_to_dict(self.allocation),
        }
        if include_timing:
            out["wall_time_s"] = self.wall_time
        return out

    def canonical_json(self) -> str:
        """Deterministic serialisation: timing excluded."""
        return canonical_dumps(self.to_json_dict(include_timing=False))


def format_count(value) -> str:
    """Human form of an activation count: '26 1/33 ≈ 26.030' for fractions."""
    if value is None:
        return "n/a"
    if isinstance(value, Fraction) and value.denominator != 1:
        whole, rem = divmod(value.numerator, value.denominator)
        if whole:
            exact = "%d %d/%d" % (whole, rem, value.denominator)
        else:
            exact = "%d/%d" % (rem, value.denominator)
        return "%s ≈ %.3f" % (exact, float(value))
    return str(int(value))


# -- verification --------------------------------------------------------------


@dataclass
class VerificationReport:
    ok: bool
    violations: list[str]


def verify_allocation(inst: Instance, alloc: Allocation) -> VerificationReport:
    """Check an allocation against an instance.

    ok is True only when every structural invariant holds AND unallocated
    demand is zero everywhere.  Violations are human-readable strings.
    """
    violations: list[str] = []
    m = inst.num_apps
    n = inst.num_users

    # translate the allocation's local user indices to instance indices
    trans = np.empty(len(alloc.user_ids), dtype=np.int64)
    for j, uid in enumerate(alloc.user_ids):
        try:
            trans[j] = inst.user_index(uid)
        except KeyError:
            trans[j] = -1
            if (
                alloc.flow_user.size and np.any(alloc.flow_user == j)
            ) or (
                alloc.act_user.size and np.any(alloc.act_user == j)
            ) or (
                alloc.un_user.size and np.any(alloc.un_user == j)
            ):
                violations.append("unknown user id %r" % (uid,))

    fu = trans[alloc.flow_user] if alloc.flow_user.size else np.empty(0, np.int64)
    fa = alloc.flow_app
    fx = alloc.flow_amount
    known = fu >= 0
    if fa.size and (np.any(fa < 0) or np.any(fa >= m)):
        for a in sorted(set(fa[(fa < 0) | (fa >= m)].tolist())):
            violations.append("flow references app id out of range: %d" % a)
        known &= (fa >= 0) & (fa < m)
    if fx.size and np.any(fx < 0):
        for i in np.nonzero(fx < 0)[0][:5]:
            violations.append(
                "negative flow on (%r, %d)" % (alloc.user_ids[int(alloc.flow_user[i])], int(fa[i]))
            )
    fu, fa, fx = fu[known], fa[known], fx[known]

    if fu.size:
        keys = fu * m + fa
        uniq, counts = np.unique(keys, return_counts=True)
        for key in uniq[counts > 1][:5].tolist():
            violations.append(
                "duplicate flow entry (%r, %d)" % (inst.user_ids[key // m], key % m)
            )

    # conservation: per-user flow + unallocated == demand
    flow_per_user = np.zeros(n, dtype=np.int64)
    if fu.size:
        np.add.at(flow_per_user, fu, fx)
    un_per_user = np.zeros(n, dtype=np.int64)
    if alloc.un_user.size:
        uu = trans[alloc.un_user]
        ok_un = uu >= 0
        if np.any(alloc.un_amount < 0):
            for i in np.nonzero(alloc.un_amount < 0)[0][:5]:
                violations.append(
                    "negative unallocated for user %r" % alloc.user_ids[int(alloc.un_user[i])]
                )
        np.add.at(un_per_user, uu[ok_un], alloc.un_amount[ok_un])
    bad_users = np.nonzero(flow_per_user + un_per_user != inst.demands)[0]
    for i in bad_users[:10]:
        violations.append(
            "flow conservation violated for user %r: flow %d + unallocated %d != demand %d"
            % (inst.user_ids[int(i)], int(flow_per_user[i]), int(un_per_user[i]), int(inst.demands[i]))
        )

    # caps
    load = np.zeros(m, dtype=np.int64)
    if fu.size:
        np.add.at(load, fa, fx)
    over = np.nonzero(load > inst.capacities)[0]
    for a in over:
        violations.append(
            "capacity exceeded at app %d by %d" % (int(a), int(load[a] - inst.capacities[a]))
        )

    # activations
    au = trans[alloc.act_user] if alloc.act_user.size else np.empty(0, np.int64)
    aa = alloc.act_app
    akn = au >= 0
    if aa.size and (np.any(aa < 0) or np.any(aa >= m)):
        for a in sorted(set(aa[(aa < 0) | (aa >= m)].tolist())):
            violations.append("activated pair references app id out of range: %d" % a)
        akn &= (aa >= 0) & (aa < m)
    au, aa = au[akn], aa[akn]
    act_keys = np.sort(au * m + aa) if au.size else np.empty(0, np.int64)
    solid_keys = inst.solid_key_array()

    if act_keys.size:
        in_solid = np.isin(act_keys, solid_keys)
        for key in act_keys[in_solid][:10].tolist():
            violations.append(
                "activated pair (%r, %d) is a preinstalled edge" % (inst.user_ids[key // m], key % m)
            )

    # any positive flow on a dashed edge must be activated
    if fu.size:
        pos = fx > 0
        fkeys = (fu * m + fa)[pos]
        dashed = ~np.isin(fkeys, solid_keys)
        missing = dashed & ~np.isin(fkeys, act_keys)
        for key in fkeys[missing][:10].tolist():
            violations.append(
                "unactivated dashed edge (%r, %d)" % (inst.user_ids[key // m], key % m)
            )

    # full routing required for ok
    short = np.nonzero(un_per_user > 0)[0]
    for i in short[:10]:
        violations.append(
            "user %r has %d unallocated transactions" % (inst.user_ids[int(i)], int(un_per_user[i]))
        )

    return VerificationReport(ok=not violations, violations=violations)
