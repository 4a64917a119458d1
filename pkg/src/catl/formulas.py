"""Abstract syntax for the two-layer specification logic.

Inner formulas constrain one agent's trajectory (classic bounded STL over
differentiable predicates). Outer formulas replace predicates with counting
tasks over the team. All ASTs are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Region, halfplane_margin


class SpecError(Exception):
    """Malformed specification (bad interval, unknown name, bad count)."""


@dataclass(frozen=True)
class Capability:
    """Named capability; ``index`` is its position in the scenario vocabulary."""

    name: str
    index: int = -1


def capability_vector(agent_caps: set[str] | frozenset[str], vocab: list[str]) -> np.ndarray:
    """Binary membership vector of the agent's capabilities over the vocabulary."""
    unknown = set(agent_caps) - set(vocab)
    if unknown:
        raise SpecError(f"capabilities not in vocabulary: {sorted(unknown)}")
    return np.array([1.0 if c in agent_caps else 0.0 for c in vocab])


# -- predicates ------------------------------------------------------------


@dataclass(frozen=True)
class InRegion:
    """f(x) = region margin; >= 0 iff the point is inside the region."""

    region_name: str
    region: Region | None = None

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if self.region is None:
            raise SpecError(f"region {self.region_name!r} is unbound; bind to a scenario first")
        return self.region.margin(x)

    def bound(self, regions: dict[str, Region]) -> "InRegion":
        if self.region_name not in regions:
            raise SpecError(f"unknown region {self.region_name!r}")
        return InRegion(self.region_name, regions[self.region_name])


@dataclass(frozen=True)
class HalfPlane:
    """f(x) = offset - normal . x; >= 0 on the closed half-plane."""

    normal: tuple[float, float]
    offset: float

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return halfplane_margin(x, np.array(self.normal), self.offset)

    def bound(self, regions: dict[str, Region]) -> "HalfPlane":
        return self


PredicateFn = InRegion | HalfPlane


# -- inner formulas ----------------------------------------------------------


class InnerFormula:
    """Marker base; concrete node kinds below."""

    __slots__ = ()


@dataclass(frozen=True)
class ITrue(InnerFormula):
    pass


@dataclass(frozen=True)
class Predicate(InnerFormula):
    fn: PredicateFn


@dataclass(frozen=True)
class INot(InnerFormula):
    child: InnerFormula


@dataclass(frozen=True)
class IAnd(InnerFormula):
    children: tuple[InnerFormula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise SpecError("conjunction needs at least 2 children")


@dataclass(frozen=True)
class IOr(InnerFormula):
    children: tuple[InnerFormula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise SpecError("disjunction needs at least 2 children")


def _check_interval(a: int, b: int) -> None:
    if a != int(a) or b != int(b):
        raise SpecError("interval bounds must be integers")
    if a < 0 or b < a:
        raise SpecError(f"bad interval [{a},{b}]: need 0 <= a <= b")


@dataclass(frozen=True)
class IUntil(InnerFormula):
    left: InnerFormula
    right: InnerFormula
    a: int
    b: int

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class IEventually(InnerFormula):
    child: InnerFormula
    a: int
    b: int

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class IAlways(InnerFormula):
    child: InnerFormula
    a: int
    b: int

    def __post_init__(self):
        _check_interval(self.a, self.b)


# -- outer formulas ----------------------------------------------------------


class OuterFormula:
    """Marker base; concrete node kinds below."""

    __slots__ = ()


@dataclass(frozen=True)
class OTrue(OuterFormula):
    pass


@dataclass(frozen=True)
class Task(OuterFormula):
    """At least ``count`` agents holding ``cap`` satisfy ``inner`` at the eval time."""

    inner: InnerFormula
    cap: Capability
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise SpecError(f"task count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class TimedTask(OuterFormula):
    """A task anchored ``time`` steps after the evaluation time."""

    task: Task
    time: int

    def __post_init__(self):
        if self.time < 0 or self.time != int(self.time):
            raise SpecError(f"timed task offset must be a nonnegative integer, got {self.time}")


@dataclass(frozen=True)
class ONot(OuterFormula):
    child: OuterFormula


@dataclass(frozen=True)
class OAnd(OuterFormula):
    children: tuple[OuterFormula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise SpecError("conjunction needs at least 2 children")


@dataclass(frozen=True)
class OOr(OuterFormula):
    children: tuple[OuterFormula, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise SpecError("disjunction needs at least 2 children")


@dataclass(frozen=True)
class OUntil(OuterFormula):
    left: OuterFormula
    right: OuterFormula
    a: int
    b: int

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class OEventually(OuterFormula):
    child: OuterFormula
    a: int
    b: int

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class OAlways(OuterFormula):
    child: OuterFormula
    a: int
    b: int

    def __post_init__(self):
        _check_interval(self.a, self.b)


# -- horizon ------------------------------------------------------------------


def horizon(phi: InnerFormula | OuterFormula) -> int:
    """Latest future offset needed to decide satisfaction at the evaluation time."""
    match phi:
        case ITrue() | OTrue() | Predicate():
            return 0
        case Task(inner=inner):
            return horizon(inner)
        case TimedTask(task=task, time=t):
            return t + horizon(task)
        case INot(child=c) | ONot(child=c):
            return horizon(c)
        case IAnd(children=cs) | IOr(children=cs) | OAnd(children=cs) | OOr(children=cs):
            return max(horizon(c) for c in cs)
        case (IEventually(child=c, b=b) | IAlways(child=c, b=b)
              | OEventually(child=c, b=b) | OAlways(child=c, b=b)):
            return b + horizon(c)
        case IUntil(left=l, right=r, b=b) | OUntil(left=l, right=r, b=b):
            return b + max(horizon(l), horizon(r))
        case _:
            raise TypeError(f"not a formula: {phi!r}")


# -- pretty printing ----------------------------------------------------------


def _format_number(x: float) -> str:
    if x == int(x):
        return str(int(x))
    return repr(float(x))


def print_formula(phi: InnerFormula | OuterFormula) -> str:
    """Render in the surface grammar; parsing the result reproduces the AST."""
    match phi:
        case ITrue() | OTrue():
            return "true"
        case Predicate(fn=InRegion(region_name=name)):
            return f"in({name})"
        case Predicate(fn=HalfPlane(normal=n, offset=c)):
            return f"halfplane({_format_number(n[0])},{_format_number(n[1])},{_format_number(c)})"
        case Task(inner=inner, cap=cap, count=m):
            return f"task({print_formula(inner)}, {cap.name}, {m})"
        case TimedTask(task=task, time=t):
            return f"{print_formula(task)} @ {t}"
        case INot(child=c) | ONot(child=c):
            return f"!{_child_str(c)}"
        case IAnd(children=cs) | OAnd(children=cs):
            return "(" + " & ".join(print_formula(c) for c in cs) + ")"
        case IOr(children=cs) | OOr(children=cs):
            return "(" + " | ".join(print_formula(c) for c in cs) + ")"
        case IUntil(left=l, right=r, a=a, b=b) | OUntil(left=l, right=r, a=a, b=b):
            return f"({print_formula(l)} U[{a},{b}] {print_formula(r)})"
        case IEventually(child=c, a=a, b=b) | OEventually(child=c, a=a, b=b):
            return f"F[{a},{b}] {_child_str(c)}"
        case IAlways(child=c, a=a, b=b) | OAlways(child=c, a=a, b=b):
            return f"G[{a},{b}] {_child_str(c)}"
        case _:
            raise TypeError(f"not a formula: {phi!r}")


def _child_str(c) -> str:
    """Unary operators bind one atom-or-unary unit; wrap anything looser."""
    match c:
        case ITrue() | OTrue() | Predicate() | Task() | INot() | ONot() \
                | IEventually() | IAlways() | OEventually() | OAlways():
            return print_formula(c)
        case TimedTask():
            return "(" + print_formula(c) + ")"
        case _:
            return print_formula(c)  # And/Or/Until already parenthesize


def bind(phi, regions: dict[str, Region]):
    """Resolve region names against concrete geometry, returning a new AST."""
    match phi:
        case ITrue() | OTrue():
            return phi
        case Predicate(fn=fn):
            return Predicate(fn.bound(regions))
        case Task(inner=inner, cap=cap, count=m):
            return Task(bind(inner, regions), cap, m)
        case TimedTask(task=task, time=t):
            return TimedTask(bind(task, regions), t)
        case INot(child=c):
            return INot(bind(c, regions))
        case ONot(child=c):
            return ONot(bind(c, regions))
        case IAnd(children=cs):
            return IAnd(tuple(bind(c, regions) for c in cs))
        case OAnd(children=cs):
            return OAnd(tuple(bind(c, regions) for c in cs))
        case IOr(children=cs):
            return IOr(tuple(bind(c, regions) for c in cs))
        case OOr(children=cs):
            return OOr(tuple(bind(c, regions) for c in cs))
        case IUntil(left=l, right=r, a=a, b=b):
            return IUntil(bind(l, regions), bind(r, regions), a, b)
        case OUntil(left=l, right=r, a=a, b=b):
            return OUntil(bind(l, regions), bind(r, regions), a, b)
        case IEventually(child=c, a=a, b=b):
            return IEventually(bind(c, regions), a, b)
        case OEventually(child=c, a=a, b=b):
            return OEventually(bind(c, regions), a, b)
        case IAlways(child=c, a=a, b=b):
            return IAlways(bind(c, regions), a, b)
        case OAlways(child=c, a=a, b=b):
            return OAlways(bind(c, regions), a, b)
        case _:
            raise TypeError(f"not a formula: {phi!r}")
