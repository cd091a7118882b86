"""Core planning types: objects, atoms, lifted schemas, domains and problems.

States are frozensets of ground atoms under the closed-world assumption.
Everything here is immutable so values can be shared freely.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

ANY_TYPE = "object"


class NotApplicable(Exception):
    """Raised when an action's precondition does not hold in a state."""


class UnknownName(KeyError):
    """Raised when a domain set mentions a name outside the universe."""


class Atom(NamedTuple):
    predicate: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate, *self.args)) + ")"


class Literal(NamedTuple):
    """A possibly negated atom over variables (lifted) or objects (ground)."""

    predicate: str
    args: tuple[str, ...]
    positive: bool = True

    @property
    def atom(self) -> Atom:
        return Atom(self.predicate, self.args)

    def negate(self) -> "Literal":
        return Literal(self.predicate, self.args, not self.positive)

    def __str__(self) -> str:
        body = "(" + " ".join((self.predicate, *self.args)) + ")"
        return body if self.positive else f"(not {body})"


LogicalState = frozenset  # frozenset[Atom]


class GroundAction(NamedTuple):
    name: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return "(" + " ".join((self.name, *self.args)) + ")"


@dataclass(frozen=True, order=True)
class ObjectRef:
    name: str
    type_tag: str = ANY_TYPE

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("object name must be nonempty")


@dataclass(frozen=True, order=True)
class PredicateSchema:
    name: str
    param_types: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.param_types:
            raise ValueError(f"predicate {self.name} must have arity >= 1")

    @property
    def arity(self) -> int:
        return len(self.param_types)


def type_matches(param_type: str, obj_type: str) -> bool:
    return param_type == ANY_TYPE or param_type == obj_type


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    pre: frozenset[Literal] = frozenset()
    add: frozenset[Literal] = frozenset()
    delete: frozenset[Literal] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(tuple(p) for p in self.params))
        for attr in ("pre", "add", "delete"):
            object.__setattr__(self, attr, frozenset(getattr(self, attr)))
        variables = {v for v, _ in self.params}
        if len(variables) != len(self.params):
            raise ValueError(f"action {self.name}: duplicate parameter names")
        for lit in itertools.chain(self.pre, self.add, self.delete):
            missing = set(lit.args) - variables
            if missing:
                raise ValueError(
                    f"action {self.name}: literal {lit} uses unbound {sorted(missing)}")
        if any(not lit.positive for lit in itertools.chain(self.add, self.delete)):
            raise ValueError(f"action {self.name}: effects must be positive literals")
        if self.add & self.delete:
            raise ValueError(f"action {self.name}: add and delete effects overlap")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.params)

    @property
    def predicates(self) -> frozenset[str]:
        return frozenset(l.predicate for l in itertools.chain(self.pre, self.add, self.delete))

    def ground(self, args: Sequence[str]) -> "GroundOperator":
        if len(args) != len(self.params):
            raise ValueError(f"{self.name} expects {len(self.params)} arguments")
        sub = dict(zip(self.variables, args))

        def bind(lits: Iterable[Literal]) -> frozenset[Literal]:
            return frozenset(Literal(l.predicate, tuple(sub[a] for a in l.args), l.positive)
                             for l in lits)

        pre = bind(self.pre)
        return GroundOperator(
            GroundAction(self.name, tuple(args)),
            frozenset(l.atom for l in pre if l.positive),
            frozenset(l.atom for l in pre if not l.positive),
            frozenset(l.atom for l in bind(self.add)),
            frozenset(l.atom for l in bind(self.delete)),
        )


class GroundOperator(NamedTuple):
    action: GroundAction
    pre_pos: frozenset[Atom]
    pre_neg: frozenset[Atom]
    add: frozenset[Atom]
    delete: frozenset[Atom]

    def applicable(self, state: frozenset[Atom]) -> bool:
        return self.pre_pos <= state and not (self.pre_neg & state)

    def successor(self, state: frozenset[Atom]) -> frozenset[Atom]:
        return (state - self.delete) | self.add


@dataclass(frozen=True)
class Domain:
    name: str
    predicates: tuple[PredicateSchema, ...]
    actions: tuple[ActionSchema, ...]
    _pred_index: Mapping[str, PredicateSchema] = field(
        init=False, repr=False, compare=False, hash=False)
    _action_index: Mapping[str, ActionSchema] = field(
        init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        preds = tuple(sorted(self.predicates, key=lambda p: p.name))
        acts = tuple(sorted(self.actions, key=lambda a: a.name))
        object.__setattr__(self, "predicates", preds)
        object.__setattr__(self, "actions", acts)
        pidx = {p.name: p for p in preds}
        aidx = {a.name: a for a in acts}
        if len(pidx) != len(preds):
            raise ValueError("duplicate predicate names")
        if len(aidx) != len(acts):
            raise ValueError("duplicate action names")
        for act in acts:
            for lit in itertools.chain(act.pre, act.add, act.delete):
                schema = pidx.get(lit.predicate)
                if schema is None:
                    raise ValueError(
                        f"action {act.name} references unknown predicate {lit.predicate}")
                if schema.arity != len(lit.args):
                    raise ValueError(
                        f"action {act.name}: {lit.predicate} expects {schema.arity} args")
        object.__setattr__(self, "_pred_index", pidx)
        object.__setattr__(self, "_action_index", aidx)

    def predicate(self, name: str) -> PredicateSchema:
        return self._pred_index[name]

    def action(self, name: str) -> ActionSchema:
        return self._action_index[name]

    @property
    def predicate_names(self) -> frozenset[str]:
        return frozenset(self._pred_index)

    @property
    def action_names(self) -> frozenset[str]:
        return frozenset(self._action_index)

    @property
    def types(self) -> tuple[str, ...]:
        found = {t for p in self.predicates for t in p.param_types}
        found |= {t for a in self.actions for _, t in a.params}
        return tuple(sorted(found - {ANY_TYPE}))

    def domain_set(self) -> "DomainSet":
        return DomainSet(self.predicate_names, self.action_names)


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple[ObjectRef, ...]
    init: frozenset[Atom]
    goal: frozenset[Literal]

    def __post_init__(self) -> None:
        objs = tuple(sorted(self.objects))
        names = [o.name for o in objs]
        if len(set(names)) != len(names):
            raise ValueError(f"problem {self.name}: duplicate object names")
        object.__setattr__(self, "objects", objs)
        object.__setattr__(self, "init", frozenset(Atom(a[0], tuple(a[1])) for a in self.init))
        object.__setattr__(self, "goal", frozenset(
            Literal(g[0], tuple(g[1]), g[2] if len(g) > 2 else True) for g in self.goal))
        known = set(names)
        for item in itertools.chain(self.init, self.goal):
            unknown = set(item.args) - known
            if unknown:
                raise ValueError(f"problem {self.name}: unknown objects {sorted(unknown)}")

    @property
    def object_types(self) -> dict[str, str]:
        return {o.name: o.type_tag for o in self.objects}


@dataclass(frozen=True)
class ProblemSet:
    problems: tuple[Problem, ...]

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self) -> Iterator[Problem]:
        return iter(self.problems)

    def __getitem__(self, item):
        return self.problems[item]


@dataclass(frozen=True)
class DomainSet:
    """Names of predicates and actions making up a candidate domain."""

    predicate_names: frozenset[str] = frozenset()
    action_names: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "predicate_names", frozenset(self.predicate_names))
        object.__setattr__(self, "action_names", frozenset(self.action_names))

    @property
    def names(self) -> frozenset[str]:
        return self.predicate_names | self.action_names

    def __len__(self) -> int:
        return len(self.predicate_names) + len(self.action_names)

    def __contains__(self, name: object) -> bool:
        return name in self.predicate_names or name in self.action_names

    def __le__(self, other: "DomainSet") -> bool:
        return (self.predicate_names <= other.predicate_names
                and self.action_names <= other.action_names)

    def __or__(self, other: "DomainSet") -> "DomainSet":
        return DomainSet(self.predicate_names | other.predicate_names,
                         self.action_names | other.action_names)

    def without(self, name: str) -> "DomainSet":
        return DomainSet(self.predicate_names - {name}, self.action_names - {name})

    def sorted_names(self) -> list[str]:
        return sorted(self.names)

    def to_json(self) -> dict:
        return {"predicates": sorted(self.predicate_names),
                "actions": sorted(self.action_names)}

    @classmethod
    def from_json(cls, data: Mapping) -> "DomainSet":
        return cls(frozenset(data.get("predicates", ())), frozenset(data.get("actions", ())))


@dataclass(frozen=True)
class Plan:
    steps: tuple[GroundAction, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[GroundAction]:
        return iter(self.steps)


@dataclass(frozen=True)
class Trajectory:
    """Alternating states and actions ending in a final state.

    ``post_states`` is only present when the trajectory was grounded from a
    continuous trace, where the frame after an action ends need not coincide
    with the frame before the next action starts.
    """

    steps: tuple[tuple[frozenset[Atom], GroundAction], ...]
    final_state: frozenset[Atom]
    objects: tuple[ObjectRef, ...] = ()
    post_states: tuple[frozenset[Atom], ...] | None = None

    def __post_init__(self) -> None:
        if self.post_states is not None and len(self.post_states) != len(self.steps):
            raise ValueError("post_states must align with steps")

    @property
    def states(self) -> list[frozenset[Atom]]:
        return [s for s, _ in self.steps] + [self.final_state]

    @property
    def actions(self) -> list[GroundAction]:
        return [a for _, a in self.steps]

    @property
    def object_types(self) -> dict[str, str]:
        return {o.name: o.type_tag for o in self.objects}


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def ground_actions(domain: Domain, problem: Problem) -> list[GroundAction]:
    """Every type-consistent binding of every action, in deterministic order."""
    result = []
    for schema in domain.actions:
        pools = [[o.name for o in problem.objects if type_matches(t, o.type_tag)]
                 for _, t in schema.params]
        for combo in itertools.product(*pools):
            result.append(GroundAction(schema.name, combo))
    return result


def ground_operators(domain: Domain, problem: Problem) -> list[GroundOperator]:
    return [domain.action(g.name).ground(g.args) for g in ground_actions(domain, problem)]


def apply(state: frozenset[Atom], action: GroundAction, domain: Domain) -> frozenset[Atom]:
    op = domain.action(action.name).ground(action.args)
    if not op.applicable(state):
        raise NotApplicable(f"{action} is not applicable")
    return op.successor(state)


def satisfies(state: frozenset[Atom], goal: Iterable[Literal]) -> bool:
    for lit in goal:
        if (lit.atom in state) != lit.positive:
            return False
    return True


def _keep(lits: Iterable[Literal], names: frozenset[str]) -> frozenset[Literal]:
    return frozenset(l for l in lits if l.predicate in names)


def project(full_domain: Domain, omega: DomainSet) -> Domain:
    """Restrict a domain to the names in ``omega``.

    Literals over dropped predicates are deleted from the kept actions rather
    than invalidating them, so the projected domain stays executable.
    """
    unknown = (omega.predicate_names - full_domain.predicate_names) | (
        omega.action_names - full_domain.action_names)
    if unknown:
        raise UnknownName(f"names outside the universe: {sorted(unknown)}")
    keep = omega.predicate_names
    actions = tuple(
        replace(a, pre=_keep(a.pre, keep), add=_keep(a.add, keep),
                delete=_keep(a.delete, keep))
        for a in full_domain.actions if a.name in omega.action_names)
    predicates = tuple(p for p in full_domain.predicates if p.name in keep)
    return Domain(full_domain.name, predicates, actions)


def project_problem(problem: Problem, omega: DomainSet | Iterable[str]) -> Problem:
    keep = omega.predicate_names if isinstance(omega, DomainSet) else frozenset(omega)
    return replace(problem,
                   init=frozenset(a for a in problem.init if a.predicate in keep),
                   goal=_keep(problem.goal, keep))


def state_for(atoms: Iterable[Sequence]) -> frozenset[Atom]:
    """Build a state from ``(predicate, arg, ...)`` sequences."""
    return frozenset(Atom(a[0], tuple(a[1:])) for a in atoms)
