import json
from fractions import Fraction

import pytest
from hypothesis import given

import meaf
from meaf import (
    Allocation,
    Instance,
    InstanceError,
    SolveResult,
    UserRecord,
    dashed_edges,
    format_count,
    read_allocation,
    read_instance,
    validate_instance,
    verify_allocation,
    write_allocation,
    write_instance,
)
from meaf.model import (
    allocation_from_dict,
    allocation_to_dict,
    canonical_dumps,
    instance_from_dict,
    instance_to_dict,
)

from conftest import tiny_instances


def simple_instance():
    return Instance.from_users(
        2, [3, 3], [("u0", 4, [0]), ("u1", 1, [0]), ("u2", 1, [0])]
    )


class TestUserRecord:
    def test_frozen(self):
        rec = UserRecord("u", 3, frozenset({0, 1}))
        with pytest.raises(AttributeError):
            rec.demand = 5

    def test_preinstalled_is_frozenset(self):
        rec = UserRecord("u", 3, frozenset({1}))
        assert rec.preinstalled == frozenset({1})


class TestInstanceValidation:
    def test_basic_fields(self):
        inst = simple_instance()
        assert inst.num_users == 3
        assert inst.num_apps == 2
        assert inst.total_demand == 6
        assert inst.num_solid_edges == 3
        assert inst.num_dashed_edges == 3
        assert [u.id for u in inst.users] == ["u0", "u1", "u2"]
        assert inst.users[0].preinstalled == frozenset({0})

    def test_empty_preinstall_rows(self):
        inst = Instance.from_users(3, [2, 2, 2], [("a", 2, []), ("b", 1, [2]), ("c", 1, [])])
        assert inst.num_solid_edges == 1
        assert inst.num_dashed_edges == 8
        assert list(inst.preinstalled_of(0)) == []
        assert list(inst.preinstalled_of(1)) == [2]

    def test_duplicate_user_id(self):
        with pytest.raises(InstanceError, match="duplicate user id"):
            Instance.from_users(1, [5], [("u", 1, []), ("u", 1, [])])

    def test_non_string_id(self):
        with pytest.raises(InstanceError, match="user id must be a string"):
            Instance.from_users(1, [5], [(7, 1, [])])

    def test_zero_demand_rejected(self):
        with pytest.raises(InstanceError, match="non-positive demand"):
            Instance.from_users(1, [5], [("u", 0, [])])

    def test_negative_capacity_rejected(self):
        with pytest.raises(InstanceError, match="negative capacity"):
            Instance.from_users(2, [3, -1], [("u", 1, [])])

    def test_capacity_length_mismatch(self):
        with pytest.raises(InstanceError, match="capacity list length"):
            Instance.from_users(2, [3], [("u", 1, [])])

    def test_app_id_out_of_range(self):
        with pytest.raises(InstanceError, match="app id out of range: 2"):
            Instance.from_users(2, [3, 3], [("u", 1, [2])])

    def test_duplicate_preinstall(self):
        with pytest.raises(InstanceError, match="duplicate preinstalled app"):
            Instance.from_users(2, [3, 3], [("u", 1, [0, 0])])

    def test_alpha_floor(self):
        with pytest.raises(InstanceError, match="alpha below 1/num_apps"):
            simple_instance().with_capacities(alpha=0.4)

    def test_immutable(self):
        inst = simple_instance()
        with pytest.raises(AttributeError):
            inst.num_apps = 5
        with pytest.raises(ValueError):
            inst.demands[0] = 9

    def test_with_capacities_alpha(self):
        inst = simple_instance().with_capacities(alpha=0.5)
        # ceil(0.5 * 6) = 3 per app
        assert inst.capacities.tolist() == [3, 3]
        assert inst.alpha == 0.5

    def test_with_capacities_explicit(self):
        inst = simple_instance().with_capacities(capacities=[1, 9])
        assert inst.capacities.tolist() == [1, 9]
        with pytest.raises(ValueError):
            simple_instance().with_capacities()

    def test_user_index_and_is_solid(self):
        inst = simple_instance()
        assert inst.user_index("u1") == 1
        assert inst.user_index(2) == 2
        with pytest.raises(KeyError):
            inst.user_index("nope")
        assert inst.is_solid("u0", 0)
        assert not inst.is_solid("u0", 1)
        assert inst.is_solid(1, 0)


class TestValidateInstance:
    def test_mapping_form(self):
        inst = validate_instance(
            {
                "num_apps": 2,
                "capacities": [3, 3],
                "users": [
                    {"id": "u0", "demand": 4, "preinstalled": [0]},
                    {"id": "u1", "demand": 1},
                ],
            }
        )
        assert inst.num_users == 2
        assert inst.num_dashed_edges == 3

    def test_alpha_capacities(self):
        inst = validate_instance(
            {
                "num_apps": 2,
                "capacities": {"alpha": 0.5},
                "users": [{"id": "u", "demand": 6, "preinstalled": []}],
            }
        )
        assert inst.capacities.tolist() == [3, 3]

    def test_bool_demand_rejected(self):
        with pytest.raises(InstanceError):
            validate_instance(
                {"num_apps": 1, "capacities": [1], "users": [{"id": "u", "demand": True}]}
            )

    def test_instance_passthrough(self):
        inst = simple_instance()
        assert validate_instance(inst) is inst


class TestDashedEdges:
    def test_order_and_content(self):
        inst = simple_instance()
        assert list(dashed_edges(inst)) == [("u0", 1), ("u1", 1), ("u2", 1)]

    def test_no_preinstalls(self):
        inst = Instance.from_users(2, [1, 1], [("u", 1, [])])
        assert list(dashed_edges(inst)) == [("u", 0), ("u", 1)]


class TestRoundTrips:
    def test_instance_json_roundtrip(self, tmp_path):
        inst = simple_instance()
        path = tmp_path / "inst.json"
        write_instance(inst, path)
        back = read_instance(path)
        assert back.user_ids == inst.user_ids
        assert back.demands.tolist() == inst.demands.tolist()
        assert back.capacities.tolist() == inst.capacities.tolist()
        assert back.pre_indices.tolist() == inst.pre_indices.tolist()

    def test_alpha_roundtrip(self, tmp_path):
        inst = simple_instance().with_capacities(alpha=0.5)
        path = tmp_path / "inst.json"
        write_instance(inst, path)
        raw = json.loads(path.read_text())
        assert raw["capacities"] == {"alpha": 0.5}
        back = read_instance(path)
        assert back.capacities.tolist() == [3, 3]

    def test_canonical_bytes_stable(self, tmp_path):
        inst = simple_instance()
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_instance(inst, p1)
        write_instance(inst, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_bytes().endswith(b"\n")

    @given(tiny_instances())
    def test_dict_roundtrip_property(self, inst):
        back = instance_from_dict(instance_to_dict(inst))
        assert back.user_ids == inst.user_ids
        assert back.demands.tolist() == inst.demands.tolist()
        assert back.capacities.tolist() == inst.capacities.tolist()
        assert back.pre_indptr.tolist() == inst.pre_indptr.tolist()
        assert back.pre_indices.tolist() == inst.pre_indices.tolist()

    def test_allocation_roundtrip(self, tmp_path):
        inst = simple_instance()
        res = meaf.carl(inst, "ascending")
        path = tmp_path / "alloc.json"
        write_allocation(res.allocation, path)
        back = read_allocation(path)
        assert back.flows == res.allocation.flows
        assert back.activated == res.allocation.activated
        assert back.unallocated == res.allocation.unallocated

    def test_allocation_dict_is_sorted(self):
        alloc = allocation_from_dict(
            {
                "flows": [["b", 1, 2], ["a", 0, 1], ["a", 1, 1]],
                "activated": [["b", 1], ["a", 1]],
                "unallocated": {"b": 3},
            }
        )
        d = allocation_to_dict(alloc)
        assert d["flows"] == [["b", 1, 2], ["a", 0, 1], ["a", 1, 1]]
        assert d["activated"] == [["b", 1], ["a", 1]]
        assert d["unallocated"] == {"b": 3}


class TestAllocation:
    def test_views(self):
        alloc = allocation_from_dict(
            {
                "flows": [["x", 0, 2], ["y", 1, 3]],
                "activated": [["y", 1]],
                "unallocated": {"x": 1},
            }
        )
        assert alloc.flows == {("x", 0): 2, ("y", 1): 3}
        assert alloc.activated == {("y", 1)}
        assert alloc.unallocated == {"x": 1}
        assert alloc.total_unallocated == 1
        assert alloc.activation_count() == 1
        assert alloc.app_loads(2).tolist() == [2, 3]

    def test_empty(self):
        alloc = Allocation.empty(["u"])
        assert alloc.flows == {}
        assert alloc.total_unallocated == 0
        assert alloc.app_loads(3).tolist() == [0, 0, 0]


class TestVerifyAllocation:
    def run(self, inst, raw):
        return verify_allocation(inst, allocation_from_dict(raw))

    def test_good(self):
        inst = simple_instance()
        rep = self.run(
            inst,
            {
                "flows": [["u0", 0, 1], ["u0", 1, 3], ["u1", 0, 1], ["u2", 0, 1]],
                "activated": [["u0", 1]],
                "unallocated": {},
            },
        )
        assert rep.ok and rep.violations == []

    def test_conservation_violation(self):
        rep = self.run(
            simple_instance(),
            {"flows": [["u0", 0, 1], ["u1", 0, 1], ["u2", 0, 1]], "activated": [], "unallocated": {}},
        )
        assert not rep.ok
        assert any("conservation" in v for v in rep.violations)

    def test_unallocated_counts_and_flags(self):
        rep = self.run(
            simple_instance(),
            {
                "flows": [["u0", 0, 1], ["u1", 0, 1], ["u2", 0, 1]],
                "activated": [],
                "unallocated": {"u0": 3},
            },
        )
        assert not rep.ok
        assert any("unallocated" in v for v in rep.violations)
        assert not any("conservation" in v for v in rep.violations)

    def test_capacity_violation(self):
        rep = self.run(
            simple_instance(),
            {
                "flows": [["u0", 0, 4], ["u1", 0, 1], ["u2", 0, 1]],
                "activated": [],
                "unallocated": {},
            },
        )
        assert any("capacity exceeded at app 0 by 3" in v for v in rep.violations)

    def test_unactivated_dashed_flow(self):
        rep = self.run(
            simple_instance(),
            {
                "flows": [["u0", 0, 1], ["u0", 1, 3], ["u1", 0, 1], ["u2", 0, 1]],
                "activated": [],
                "unallocated": {},
            },
        )
        assert any("unactivated dashed edge" in v for v in rep.violations)

    def test_activating_solid_edge_flagged(self):
        rep = self.run(
            simple_instance(),
            {
                "flows": [["u0", 0, 1], ["u0", 1, 3], ["u1", 0, 1], ["u2", 0, 1]],
                "activated": [["u0", 1], ["u1", 0]],
                "unallocated": {},
            },
        )
        assert any("preinstalled edge" in v for v in rep.violations)

    def test_unknown_user(self):
        rep = self.run(
            simple_instance(),
            {"flows": [["ghost", 0, 1]], "activated": [], "unallocated": {}},
        )
        assert any("unknown user id" in v for v in rep.violations)

    def test_negative_flow(self):
        inst = simple_instance()
        alloc = Allocation(inst.user_ids, [0], [0], [-1], [], [], [], [])
        rep = verify_allocation(inst, alloc)
        assert any("negative" in v for v in rep.violations)

    def test_app_out_of_range(self):
        rep = self.run(
            simple_instance(),
            {"flows": [["u0", 5, 1]], "activated": [], "unallocated": {}},
        )
        assert not rep.ok


class TestSolveResultSerialization:
    def test_fraction_rendering(self):
        res = SolveResult(
            algorithm="lp",
            status="bound",
            optimal=False,
            activation_count=Fraction(3, 4),
            total_unallocated=0,
            wall_time=1.5,
            allocation=None,
        )
        d = res.to_json_dict()
        assert d["activation_count"] == "3/4"
        assert d["activation_count_approx"] == 0.75
        assert d["wall_time_s"] == 1.5

    def test_whole_fraction_rendered_as_int(self):
        res = SolveResult("lp", "bound", False, Fraction(2, 1), 0, 0.0, None)
        assert res.to_json_dict()["activation_count"] == 2

    def test_canonical_json_excludes_timing(self):
        res = SolveResult("dtas", "heuristic", False, 1, 0, 2.5, None)
        payload = json.loads(res.canonical_json())
        assert "wall_time_s" not in payload
        assert res.canonical_json().endswith("\n")

    def test_canonical_json_identical_across_timings(self):
        a = SolveResult("dtas", "heuristic", False, 1, 0, 2.5, None)
        b = SolveResult("dtas", "heuristic", False, 1, 0, 9.9, None)
        assert a.canonical_json() == b.canonical_json()


class TestFormatCount:
    def test_mixed_fraction(self):
        assert format_count(Fraction(859, 33)) == "26 1/33 ≈ 26.030"

    def test_proper_fraction(self):
        assert format_count(Fraction(3, 4)) == "3/4 ≈ 0.750"

    def test_integers(self):
        assert format_count(5) == "5"
        assert format_count(Fraction(4, 2)) == "2"
        assert format_count(None) == "n/a"


def test_canonical_dumps_sorted_compact():
    assert canonical_dumps({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}\n'
