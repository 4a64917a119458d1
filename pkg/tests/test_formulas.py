"""AST construction, horizon, capability vectors, and parse/print round trips."""

import numpy as np
import pytest

from catl.formulas import (
    Capability,
    IAnd,
    IEventually,
    InRegion,
    ITrue,
    OAlways,
    OAnd,
    OEventually,
    ONot,
    OTrue,
    OUntil,
    Predicate,
    SpecError,
    Task,
    TimedTask,
    capability_vector,
    horizon,
    print_formula,
)
from catl.parsing import SpecSyntaxError, parse_inner, parse_spec

from generators import CAPS, REGIONS, random_inner, random_outer


def task(inner, cap, m, index=-1):
    return Task(inner, Capability(cap, index), m)


class TestParsing:
    def test_task_with_eventually(self):
        phi = parse_spec("task(F[0,8] in(C), Delivery, 6)")
        assert isinstance(phi, Task)
        assert phi.count == 6
        assert phi.cap.name == "Delivery"
        ev = phi.inner
        assert isinstance(ev, IEventually)
        assert (ev.a, ev.b) == (0, 8)
        assert isinstance(ev.child, Predicate)
        assert ev.child.fn == InRegion("C")

    def test_true(self):
        assert parse_spec("true") == OTrue()

    def test_always_not_task(self):
        phi = parse_spec("G[0,25] !task(in(B), Ground, 2)")
        assert phi == OAlways(ONot(task(Predicate(InRegion("B")), "Ground", 2)), 0, 25)

    def test_until_between_tasks(self):
        phi = parse_spec("!task(in(B), Ground, 1) U[0,5] task(in(B), Inspection, 2)")
        assert isinstance(phi, OUntil)
        assert (phi.a, phi.b) == (0, 5)
        assert isinstance(phi.left, ONot)

    def test_timed_task_postfix(self):
        phi = parse_spec("task(in(B), Ground, 1) @ 7")
        assert phi == TimedTask(task(Predicate(InRegion("B")), "Ground", 1), 7)

    def test_nary_flattening_vs_parens(self):
        flat = parse_spec("true & true & true")
        assert isinstance(flat, OAnd) and len(flat.children) == 3
        nested = parse_spec("(true & true) & true")
        assert isinstance(nested, OAnd) and len(nested.children) == 2
        assert isinstance(nested.children[0], OAnd)

    def test_syntax_error_carries_position(self):
        with pytest.raises(SpecSyntaxError) as exc:
            parse_spec("task(in(B), Ground, )")
        assert exc.value.line == 1
        assert exc.value.col == 21

    def test_reversed_interval_rejected(self):
        with pytest.raises(SpecSyntaxError, match="reversed"):
            parse_spec("F[3,1] true")

    def test_negative_interval_rejected(self):
        with pytest.raises(SpecSyntaxError):
            parse_spec("F[-1,3] true")

    def test_unknown_capability_with_vocabulary(self):
        with pytest.raises(SpecSyntaxError, match="unknown capability"):
            parse_spec("task(true, Lifting, 1)", capabilities=["Delivery"])

    def test_unknown_region_with_table(self):
        with pytest.raises(SpecSyntaxError, match="unknown region"):
            parse_spec("task(in(Z), red, 1)", regions=REGIONS)

    def test_halfplane_numbers(self):
        phi = parse_inner("halfplane(-1,0.5,2.25)")
        assert phi.fn.normal == (-1.0, 0.5)
        assert phi.fn.offset == 2.25

    def test_comments_and_whitespace(self):
        phi = parse_spec("# mission\n  true\n")
        assert phi == OTrue()


class TestRoundTrip:
    def test_random_outer_round_trips(self):
        rng = np.random.default_rng(2024)
        for _ in range(300):
            phi = random_outer(rng, depth=int(rng.integers(0, 6)), budget=6)
            text = print_formula(phi)
            reparsed = parse_spec(text, regions=REGIONS, capabilities=CAPS)
            assert reparsed == phi, text

    def test_random_inner_round_trips(self):
        rng = np.random.default_rng(77)
        for _ in range(200):
            phi = random_inner(rng, depth=int(rng.integers(0, 6)), budget=6)
            text = print_formula(phi)
            assert parse_inner(text, regions=REGIONS) == phi, text


class TestHorizon:
    def test_true_is_zero(self):
        assert horizon(OTrue()) == 0
        assert horizon(ITrue()) == 0

    def test_until_over_atomic_tasks(self):
        phi = parse_spec("!task(in(B), Ground, 1) U[0,5] task(in(B), Inspection, 2)")
        assert horizon(phi) == 5

    def test_task_inherits_inner_horizon(self):
        phi = parse_spec("task(F[0,8] in(C), Delivery, 6)")
        assert horizon(phi) == 8

    def test_timed_task_adds_offset(self):
        phi = parse_spec("task(F[0,8] in(C), Delivery, 6) @ 4")
        assert horizon(phi) == 12

    def test_temporal_adds_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            phi = random_outer(rng, depth=2, budget=4)
            assert horizon(OEventually(phi, 2, 5)) == 5 + horizon(phi)
            other = random_outer(rng, depth=2, budget=4)
            assert horizon(OAnd((phi, other))) == max(horizon(phi), horizon(other))

    def test_case_study_horizon_is_25(self):
        from catl.scenario import case_study

        _, phi = case_study()
        assert horizon(phi) == 25


class TestCapabilityVector:
    def test_ground_vehicle(self):
        vec = capability_vector({"Delivery", "Ground"}, ["Delivery", "Ground", "Inspection"])
        assert np.array_equal(vec, [1, 1, 0])

    def test_aerial_vehicle(self):
        vec = capability_vector({"Delivery", "Inspection"}, ["Delivery", "Ground", "Inspection"])
        assert np.array_equal(vec, [1, 0, 1])

    def test_empty(self):
        assert np.array_equal(capability_vector(set(), ["a", "b"]), [0, 0])

    def test_number_of_ones(self):
        rng = np.random.default_rng(3)
        vocab = [f"c{i}" for i in range(6)]
        for _ in range(50):
            pick = {c for c in vocab if rng.random() < 0.5}
            assert capability_vector(pick, vocab).sum() == len(pick)

    def test_unknown_capability_rejected(self):
        with pytest.raises(SpecError):
            capability_vector({"z"}, ["a"])


class TestValidation:
    def test_task_count_must_be_positive(self):
        with pytest.raises(SpecError):
            task(ITrue(), "red", 0)

    def test_and_needs_two_children(self):
        with pytest.raises(SpecError):
            IAnd((ITrue(),))

    def test_bad_interval(self):
        with pytest.raises(SpecError):
            IEventually(ITrue(), 3, 1)
