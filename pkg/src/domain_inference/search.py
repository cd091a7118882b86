"""Domain-set scoring and the expansion/contraction search, plus baselines.

Every search works over the names of a full (induced) domain and asks the
planner oracle whether a projected candidate solves the whole validation
set. Each oracle call is counted in a ``QueryLedger``.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .estimator import RelevanceScores
from .logic import Domain, DomainSet, Problem, project
from .planner import QueryLedger, SearchBudget, solve_all, solved_count


class Outcome(str, Enum):
    OPTIMAL = "optimal"
    NEEDS_MORE_DEMONSTRATIONS = "needs_more_demonstrations"


@dataclass(frozen=True)
class PriorityEntry:
    name: str
    kind: str
    score: float


@dataclass(frozen=True)
class PriorityList:
    entries: tuple[PriorityEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]


@dataclass
class OptimizationReport:
    method: str
    omega_top: DomainSet
    omega_expanded: DomainSet
    omega_optm: DomainSet
    outcome: Outcome
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    stages: dict[str, dict[str, int]] = field(default_factory=dict)
    ledger: dict[str, int] = field(default_factory=dict)
    solve_all_calls: int = 0

    @property
    def planner_calls(self) -> int:
        return self.ledger.get("planner_calls", 0)

    def to_json(self) -> dict:
        return {"method": self.method, "outcome": self.outcome.value,
                "omega_top": self.omega_top.to_json(),
                "omega_expanded": self.omega_expanded.to_json(),
                "omega_optm": self.omega_optm.to_json(),
                "added": self.added, "removed": self.removed,
                "stages": self.stages, "ledger": self.ledger,
                "solve_all_calls": self.solve_all_calls}


class SearchFailure(RuntimeError):
    def __init__(self, message: str, report: OptimizationReport):
        super().__init__(message)
        self.report = report


class Exhausted(SearchFailure):
    """No complete domain exists inside the universe."""


class Incomplete(SearchFailure):
    """Even the full universe fails the validation set."""


class Stuck(SearchFailure):
    """Hill-climbing ran out of moves before solving the validation set."""


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def _flat(scores: RelevanceScores | Mapping[str, float]) -> dict[str, float]:
    return scores.flat() if isinstance(scores, RelevanceScores) else dict(scores)


def log_score(scores: RelevanceScores | Mapping[str, float], omega: DomainSet | Iterable[str]) -> float:
    names = omega.names if isinstance(omega, DomainSet) else frozenset(omega)
    flat = _flat(scores)
    unknown = names - set(flat)
    if unknown:
        raise KeyError(f"names without scores: {sorted(unknown)}")
    total = 0.0
    for name, u in flat.items():
        q = u if name in names else 1.0 - u
        if q <= 0.0:
            return -math.inf
        total += math.log(q)
    return total


def score_domain_set(scores: RelevanceScores | Mapping[str, float],
                     omega: DomainSet | Iterable[str]) -> float:
    """Product of u for members and (1 - u) for non-members."""
    return math.exp(log_score(scores, omega))


def top_domain_set(scores: RelevanceScores) -> tuple[DomainSet, PriorityList]:
    top = DomainSet(frozenset(k for k, v in scores.predicate_scores.items() if v >= 0.5),
                    frozenset(k for k, v in scores.action_scores.items() if v >= 0.5))
    rest = [PriorityEntry(k, scores.kind(k), v) for k, v in scores.flat().items()
            if k not in top]
    rest.sort(key=lambda e: (-e.score, e.name))
    return top, PriorityList(tuple(rest))


# ---------------------------------------------------------------------------
# Oracle wrapper
# ---------------------------------------------------------------------------

class _Oracle:
    def __init__(self, full_domain: Domain, problems: Sequence[Problem],
                 budget: SearchBudget | None, world: Domain | None, strict: bool):
        self.full = full_domain
        self.problems = list(problems)
        if not self.problems:
            raise ValueError("the validation set must be nonempty")
        self.budget = budget
        self.world = world
        self.strict = strict
        self.ledger = QueryLedger()
        self.calls = 0

    def solves(self, omega: DomainSet) -> bool:
        self.calls += 1
        return solve_all(project(self.full, omega), self.problems, self.budget, self.ledger,
                         self.world, self.strict)

    def count(self, omega: DomainSet) -> int:
        self.calls += 1
        return solved_count(project(self.full, omega), self.problems, self.budget, self.ledger,
                            self.world, self.strict)


def _kind_of(full: Domain, name: str) -> str:
    return "predicate" if name in full.predicate_names else "action"


def _add(omega: DomainSet, full: Domain, name: str) -> DomainSet:
    if _kind_of(full, name) == "predicate":
        return DomainSet(omega.predicate_names | {name}, omega.action_names)
    return DomainSet(omega.predicate_names, omega.action_names | {name})


def _contract(oracle: _Oracle, omega: DomainSet, order: Sequence[str]) -> tuple[DomainSet, list[str]]:
    removed = []
    for name in order:
        candidate = omega.without(name)
        if oracle.solves(candidate):
            omega = candidate
            removed.append(name)
    return omega, removed


# ---------------------------------------------------------------------------
# Algorithm: expansion then contraction
# ---------------------------------------------------------------------------

def optimize(full_domain: Domain, scores: RelevanceScores, problems: Sequence[Problem],
             budget: SearchBudget | None = None, world: Domain | None = None,
             strict: bool = True) -> OptimizationReport:
    """Grow the most relevant domain set until it solves ``problems``, then prune it.

    Scores for names outside ``full_domain`` are ignored.
    """
    oracle = _Oracle(full_domain, problems, budget, world, strict)
    scores = scores.restricted(full_domain.domain_set().names)
    flat = scores.flat()
    missing = full_domain.domain_set().names - set(flat)
    if missing:
        raise KeyError(f"no scores for {sorted(missing)}")
    top, queue = top_domain_set(scores)
    omega, added = top, []
    pending = list(queue.names)
    solved = oracle.solves(omega)
    while not solved and pending:
        name = pending.pop(0)
        omega = _add(omega, full_domain, name)
        added.append(name)
        solved = oracle.solves(omega)
    expansion = oracle.ledger.snapshot()
    if not solved:
        return OptimizationReport("optimize", top, omega, omega,
                                  Outcome.NEEDS_MORE_DEMONSTRATIONS, added, [],
                                  {"expansion": expansion}, expansion, oracle.calls)
    expanded = omega
    order = sorted(expanded.names, key=lambda n: (flat[n], n))
    omega, removed = _contract(oracle, expanded, order)
    final = oracle.ledger.snapshot()
    return OptimizationReport("optimize", top, expanded, omega, Outcome.OPTIMAL, added, removed,
                              {"expansion": expansion, "contraction": _diff(final, expansion)},
                              final, oracle.calls)


def _diff(after: Mapping[str, int], before: Mapping[str, int]) -> dict[str, int]:
    return {k: after[k] - before.get(k, 0) for k in after}


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------

def rib_search(full_domain: Domain, problems: Sequence[Problem],
               budget: SearchBudget | None = None, seed: int = 0,
               world: Domain | None = None, strict: bool = True) -> OptimizationReport:
    """Random initial domain, blind random expansion, then contraction in random order."""
    rng = random.Random(seed)
    oracle = _Oracle(full_domain, problems, budget, world, strict)
    universe = sorted(full_domain.domain_set().names)
    start = frozenset(n for n in universe if rng.random() < 0.5)
    omega = DomainSet(start & full_domain.predicate_names, start & full_domain.action_names)
    top = omega
    untried = [n for n in universe if n not in start]
    rng.shuffle(untried)
    added = []
    solved = oracle.solves(omega)
    while not solved and untried:
        name = untried.pop()
        omega = _add(omega, full_domain, name)
        added.append(name)
        solved = oracle.solves(omega)
    expansion = oracle.ledger.snapshot()
    if not solved:
        report = OptimizationReport("rib", top, omega, omega, Outcome.NEEDS_MORE_DEMONSTRATIONS,
                                    added, [], {"expansion": expansion}, expansion, oracle.calls)
        raise Exhausted("no complete domain in the universe", report)
    expanded = omega
    order = sorted(expanded.names)
    rng.shuffle(order)
    omega, removed = _contract(oracle, expanded, order)
    final = oracle.ledger.snapshot()
    return OptimizationReport("rib", top, expanded, omega, Outcome.OPTIMAL, added, removed,
                              {"expansion": expansion, "contraction": _diff(final, expansion)},
                              final, oracle.calls)


def contraction_search(full_domain: Domain, problems: Sequence[Problem],
                       budget: SearchBudget | None = None, world: Domain | None = None,
                       strict: bool = True) -> OptimizationReport:
    """Start from everything and drop names in lexicographic order."""
    oracle = _Oracle(full_domain, problems, budget, world, strict)
    full = full_domain.domain_set()
    if not oracle.solves(full):
        snap = oracle.ledger.snapshot()
        report = OptimizationReport("contraction", full, full, full,
                                    Outcome.NEEDS_MORE_DEMONSTRATIONS, [], [],
                                    {"contraction": snap}, snap, oracle.calls)
        raise Incomplete("the full domain does not solve the validation set", report)
    omega, removed = _contract(oracle, full, sorted(full.names))
    snap = oracle.ledger.snapshot()
    return OptimizationReport("contraction", full, full, omega, Outcome.OPTIMAL, [], removed,
                              {"contraction": snap}, snap, oracle.calls)


def blind_hillclimb(full_domain: Domain, problems: Sequence[Problem],
                    budget: SearchBudget | None = None, world: Domain | None = None,
                    strict: bool = True) -> OptimizationReport:
    """Start empty; repeatedly add the name that solves the most problems.

    On a plateau the lexicographically first name is taken, so the climb keeps
    moving until the validation set is solved or nothing is left to add.
    """
    oracle = _Oracle(full_domain, problems, budget, world, strict)
    m = len(oracle.problems)
    omega = DomainSet()
    remaining = sorted(full_domain.domain_set().names)
    added = []
    current = oracle.count(omega)
    while current < m:
        if not remaining:
            snap = oracle.ledger.snapshot()
            report = OptimizationReport("blind_hillclimb", DomainSet(), omega, omega,
                                        Outcome.NEEDS_MORE_DEMONSTRATIONS, added, [],
                                        {"expansion": snap}, snap, oracle.calls)
            raise Stuck(f"plateau at {omega.sorted_names()} with {current}/{m} solved", report)
        best_name, best = None, -1
        for name in remaining:
            c = oracle.count(_add(omega, full_domain, name))
            if c > best:
                best_name, best = name, c
        omega = _add(omega, full_domain, best_name)
        remaining.remove(best_name)
        added.append(best_name)
        current = best
    expansion = oracle.ledger.snapshot()
    expanded = omega
    omega, removed = _contract(oracle, expanded, sorted(expanded.names))
    final = oracle.ledger.snapshot()
    return OptimizationReport("blind_hillclimb", DomainSet(), expanded, omega, Outcome.OPTIMAL,
                              added, removed,
                              {"expansion": expansion, "contraction": _diff(final, expansion)},
                              final, oracle.calls)


def check_one_minimal(omega: DomainSet, full_domain: Domain, problems: Sequence[Problem],
                      budget: SearchBudget | None = None, world: Domain | None = None,
                      strict: bool = True) -> bool:
    """``omega`` solves every problem and no single removal still does."""
    oracle = _Oracle(full_domain, problems, budget, world, strict)
    if not oracle.solves(omega):
        return False
    return not any(oracle.solves(omega.without(n)) for n in sorted(omega.names))


def exhaustive_minimum(full_domain: Domain, problems: Sequence[Problem],
                       budget: SearchBudget | None = None, world: Domain | None = None,
                       strict: bool = True) -> tuple[int | None, dict[DomainSet, bool]]:
    """Smallest complete subset size and the completeness of every subset (small universes)."""
    oracle = _Oracle(full_domain, problems, budget, world, strict)
    names = sorted(full_domain.domain_set().names)
    table = {}
    best = None
    for r in range(len(names) + 1):
        for combo in itertools.combinations(names, r):
            s = frozenset(combo)
            omega = DomainSet(s & full_domain.predicate_names, s & full_domain.action_names)
            ok = oracle.solves(omega)
            table[omega] = ok
            if ok and best is None:
                best = r
    return best, table


def is_monotone(table: Mapping[DomainSet, bool]) -> bool:
    """Every superset of a complete set is complete."""
    complete = [s for s, ok in table.items() if ok]
    return all(ok or not any(c <= s for c in complete) for s, ok in table.items())
