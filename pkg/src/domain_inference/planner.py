"""Grounded forward search with the additive delete-relaxation heuristic.

``solve_all`` is the completeness oracle used by the domain search. When a
reference ``world`` domain is supplied, a plan found under a candidate domain
only counts if it also executes in the world and the candidate never claims an
action is applicable where the world disagrees along the executed trajectory.
Those world queries stand in for motion-planner feasibility checks.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .logic import (
    Atom,
    Domain,
    GroundAction,
    GroundOperator,
    Plan,
    Problem,
    ground_operators,
    project_problem,
    satisfies,
)


@dataclass(frozen=True)
class SearchBudget:
    max_expansions: int = 200_000
    max_plan_length: int = 200

    def __post_init__(self) -> None:
        if self.max_expansions <= 0 or self.max_plan_length <= 0:
            raise ValueError("budget fields must be positive")


class Outcome(str, Enum):
    SOLVED = "solved"
    UNSOLVABLE = "unsolvable"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class PlanResult:
    outcome: Outcome
    plan: Plan | None = None
    expansions: int = 0
    generated: int = 0

    @property
    def solved(self) -> bool:
        return self.outcome is Outcome.SOLVED


@dataclass
class QueryLedger:
    planner_calls: int = 0
    expansions_total: int = 0
    applicability_checks: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record_plan(self, result: PlanResult) -> None:
        with self._lock:
            self.planner_calls += 1
            self.expansions_total += result.expansions

    def record_checks(self, n: int) -> None:
        with self._lock:
            self.applicability_checks += n

    def snapshot(self) -> dict[str, int]:
        return {"planner_calls": self.planner_calls,
                "expansions_total": self.expansions_total,
                "applicability_checks": self.applicability_checks}


# ---------------------------------------------------------------------------
# Grounded task
# ---------------------------------------------------------------------------

class GroundTask:
    """A grounded (domain, problem) pair with statically pruned operators."""

    def __init__(self, domain: Domain, problem: Problem):
        ops = ground_operators(domain, problem)
        fluent = {l.predicate for a in domain.actions for l in a.add | a.delete}
        init = problem.init
        keep = []
        for op in ops:
            if any(a.predicate not in fluent and a not in init for a in op.pre_pos):
                continue
            if any(a.predicate not in fluent and a in init for a in op.pre_neg):
                continue
            keep.append(op)
        self.operators: list[GroundOperator] = keep
        self.init = init
        self.goal_pos = frozenset(l.atom for l in problem.goal if l.positive)
        self.goal_neg = frozenset(l.atom for l in problem.goal if not l.positive)
        # relaxed-reachability indices for h_add
        self._by_pre: dict[Atom, list[int]] = {}
        for i, op in enumerate(keep):
            for a in op.pre_pos:
                self._by_pre.setdefault(a, []).append(i)
        self._no_pre = [i for i, op in enumerate(keep) if not op.pre_pos]

    def is_goal(self, state: frozenset[Atom]) -> bool:
        return self.goal_pos <= state and not (self.goal_neg & state)

    def h_add(self, state: frozenset[Atom]) -> float:
        missing_neg = len(self.goal_neg & state)
        if self.goal_pos <= state:
            return float(missing_neg)
        cost: dict[Atom, float] = {a: 0.0 for a in state}
        remaining = [len(op.pre_pos) for op in self.operators]
        op_cost = [0.0] * len(self.operators)
        heap: list[tuple[float, int, Atom]] = []
        counter = itertools.count()

        def fire(i: int) -> None:
            c = 1.0 + op_cost[i]
            for a in self.operators[i].add:
                if c < cost.get(a, float("inf")):
                    cost[a] = c
                    heapq.heappush(heap, (c, next(counter), a))

        for a in state:
            heapq.heappush(heap, (0.0, next(counter), a))
        for i in self._no_pre:
            fire(i)
        done: set[Atom] = set()
        goals_left = set(self.goal_pos)
        while heap and goals_left:
            c, _, a = heapq.heappop(heap)
            if a in done or c > cost[a]:
                continue
            done.add(a)
            goals_left.discard(a)
            for i in self._by_pre.get(a, ()):
                remaining[i] -= 1
                op_cost[i] += c
                if remaining[i] == 0:
                    fire(i)
        if goals_left:
            return float("inf")
        return sum(cost[a] for a in self.goal_pos) + missing_neg


_TASK_CACHE: dict[tuple[Domain, tuple, frozenset, frozenset], GroundTask] = {}
_CACHE_LIMIT = 4096


def ground_task(domain: Domain, problem: Problem) -> GroundTask:
    key = (domain, problem.objects, problem.init, problem.goal)
    task = _TASK_CACHE.get(key)
    if task is None:
        if len(_TASK_CACHE) >= _CACHE_LIMIT:
            _TASK_CACHE.clear()
        task = _TASK_CACHE[key] = GroundTask(domain, problem)
    return task


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def plan(domain: Domain, problem: Problem, budget: SearchBudget | None = None,
         mode: str = "gbfs") -> PlanResult:
    """Find a plan; ``mode`` is ``gbfs`` (greedy, h_add) or ``astar`` (h = 0, optimal)."""
    budget = budget or SearchBudget()
    task = ground_task(domain, problem)
    init = task.init
    if task.is_goal(init):
        return PlanResult(Outcome.SOLVED, Plan(()), 0, 0)
    h0 = task.h_add(init) if mode == "gbfs" else 0.0
    if h0 == float("inf"):
        return PlanResult(Outcome.UNSOLVABLE, None, 0, 0)

    counter = itertools.count()
    # node: (state, parent index, op index, depth)
    nodes: list[tuple[frozenset, int, int, int]] = [(init, -1, -1, 0)]
    seen = {init}
    heap = [(h0, next(counter), 0)]
    expansions = generated = 0
    truncated = False
    while heap:
        if expansions >= budget.max_expansions:
            return PlanResult(Outcome.BUDGET_EXHAUSTED, None, expansions, generated)
        _, _, idx = heapq.heappop(heap)
        state, _, _, depth = nodes[idx]
        if depth >= budget.max_plan_length:
            truncated = True
            continue
        expansions += 1
        for oi, op in enumerate(task.operators):
            if not op.applicable(state):
                continue
            child = op.successor(state)
            if child in seen:
                continue
            generated += 1
            seen.add(child)
            nodes.append((child, idx, oi, depth + 1))
            if task.is_goal(child):
                return PlanResult(Outcome.SOLVED, _extract(nodes, task, len(nodes) - 1),
                                  expansions, generated)
            if mode == "gbfs":
                h = task.h_add(child)
                if h == float("inf"):
                    continue
                prio = h
            else:
                prio = depth + 1
            heapq.heappush(heap, (prio, next(counter), len(nodes) - 1))
    outcome = Outcome.BUDGET_EXHAUSTED if truncated else Outcome.UNSOLVABLE
    return PlanResult(outcome, None, expansions, generated)


def _extract(nodes, task: GroundTask, idx: int) -> Plan:
    steps = []
    while nodes[idx][1] >= 0:
        _, parent, oi, _ = nodes[idx]
        steps.append(task.operators[oi].action)
        idx = parent
    return Plan(tuple(reversed(steps)))


def validate(domain: Domain, problem: Problem, plan_: Plan | Sequence[GroundAction]) -> bool:
    state = problem.init
    types = problem.object_types
    for step in plan_:
        if step.name not in domain.action_names or any(a not in types for a in step.args):
            return False
        schema = domain.action(step.name)
        if len(step.args) != len(schema.params):
            return False
        if any(t != "object" and types[a] != t for (_, t), a in zip(schema.params, step.args)):
            return False
        op = schema.ground(step.args)
        if not op.applicable(state):
            return False
        state = op.successor(state)
    return satisfies(state, problem.goal)


# ---------------------------------------------------------------------------
# Validation-set oracle
# ---------------------------------------------------------------------------

def _world_ops(world: Domain, task: GroundTask) -> dict[GroundAction, GroundOperator]:
    out = {}
    for op in task.operators:
        act = op.action
        if act.name in world.action_names:
            out[act] = world.action(act.name).ground(act.args)
    return out


def check_in_world(domain: Domain, problem: Problem, plan_: Plan, world: Domain,
                   ledger: QueryLedger | None = None, strict: bool = True) -> bool:
    """Execute ``plan_`` in ``world`` from the unprojected problem.

    With ``strict`` the candidate domain must also be sound on every visited
    state: no action it deems applicable may be inapplicable in the world.
    """
    task = ground_task(domain, project_problem(problem, domain.predicate_names))
    world_ops = _world_ops(world, task) if strict else {}
    checks = 0
    state = problem.init
    ok = True
    for i in range(len(plan_) + 1):
        if strict:
            for op in task.operators:
                if op.applicable(state):
                    checks += 1
                    wop = world_ops.get(op.action)
                    if wop is None or not wop.applicable(state):
                        ok = False
                        break
            if not ok:
                break
        if i == len(plan_):
            break
        step = plan_.steps[i]
        if step.name not in world.action_names:
            ok = False
            break
        wop = world.action(step.name).ground(step.args)
        checks += 1
        if not wop.applicable(state):
            ok = False
            break
        state = wop.successor(state)
    if ok:
        ok = satisfies(state, problem.goal)
    if ledger is not None:
        ledger.record_checks(checks)
    return ok


def solve_one(domain: Domain, problem: Problem, budget: SearchBudget | None,
              ledger: QueryLedger | None = None, world: Domain | None = None,
              strict: bool = True) -> bool:
    projected = project_problem(problem, domain.predicate_names)
    result = plan(domain, projected, budget)
    if ledger is not None:
        ledger.record_plan(result)
    if not result.solved:
        return False
    if world is None:
        return True
    return check_in_world(domain, problem, result.plan, world, ledger, strict)


def solve_all(domain: Domain, problems: Iterable[Problem], budget: SearchBudget | None = None,
              ledger: QueryLedger | None = None, world: Domain | None = None,
              strict: bool = True) -> bool:
    """True iff every problem is solved; stops at the first failure."""
    problems = list(problems)
    if not problems:
        raise ValueError("solve_all needs a nonempty problem set")
    for problem in problems:
        if not solve_one(domain, problem, budget, ledger, world, strict):
            return False
    return True


def solved_count(domain: Domain, problems: Iterable[Problem], budget: SearchBudget | None = None,
                 ledger: QueryLedger | None = None, world: Domain | None = None,
                 strict: bool = True) -> int:
    return sum(solve_one(domain, p, budget, ledger, world, strict) for p in problems)

