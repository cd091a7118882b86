"""End-to-end inference: demonstrations in, minimal domain out."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .estimator import RelevanceScores
from .induction import induce_domain
from .logic import Domain, Problem, Trajectory, project
from .planner import SearchBudget, solve_one
from .search import OptimizationReport, optimize
from .taskgen import demo_problem, universe


@dataclass
class InferenceResult:
    full_domain: Domain
    domain: Domain
    scores: RelevanceScores
    report: OptimizationReport


def infer(demos: Sequence[Trajectory], problems: Sequence[Problem], estimator,
          budget: SearchBudget | None = None, world: Domain | None = None,
          negative: bool = False, name: str = "inferred") -> InferenceResult:
    """Induce schemas from ``demos``, score the first demo's problem and optimize.

    ``world`` is the reference domain that stands in for execution feasibility
    checks; it also supplies the predicate universe.
    """
    if not demos:
        raise ValueError("at least one demonstration is required")
    world = world or universe()
    full = induce_domain(demos, world.predicates, negative=negative, name=name)
    scores = estimator.scores(demo_problem(demos[0]))
    report = optimize(full, scores, problems, budget, world)
    return InferenceResult(full, project(full, report.omega_optm), scores, report)


def success_rate(domain: Domain, problems: Sequence[Problem], budget: SearchBudget | None = None,
                 world: Domain | None = None) -> float:
    """Fraction of problems whose plan under ``domain`` also executes in ``world``."""
    if not problems:
        raise ValueError("no problems to evaluate")
    world = world or universe()
    solved = sum(solve_one(domain, p, budget, world=world, strict=False) for p in problems)
    return solved / len(problems)
