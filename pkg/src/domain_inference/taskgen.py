"""Symbolic task generators sharing one predicate/action universe.

Nine basic tasks and three composed ones. Each task carries a ground-truth
minimal domain set; every generated problem is checked to be solvable under
it (and valid in the full reference world) before it is returned.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .logic import (
    ActionSchema,
    Atom,
    Domain,
    DomainSet,
    Literal,
    NotApplicable,
    ObjectRef,
    PredicateSchema,
    Problem,
    ProblemSet,
    Trajectory,
    project,
)
from .planner import SearchBudget, plan, solve_one

UNIVERSE_NAME = "tamp-universe"

TYPES = ("robot", "block", "food", "item", "paper", "region", "disc", "peg")

PREDICATE_NAMES = ("on", "on_table", "clear", "holding", "handempty", "cleaned", "cooked",
                   "in_bin", "at_region", "painted", "labeled", "smaller")
ACTION_NAMES = ("pick", "place", "stack", "unstack", "wash", "grill", "store", "paint",
                "label", "move_disc")


class GenerationExhausted(RuntimeError):
    pass


def _lit(pred: str, *args: str) -> Literal:
    return Literal(pred, tuple(args))


def universe() -> Domain:
    """The shared reference world: every predicate and the true action schemas."""
    obj = "object"
    preds = [PredicateSchema(n, (obj,)) for n in
             ("on_table", "clear", "holding", "cleaned", "cooked", "in_bin", "painted", "labeled")]
    preds += [PredicateSchema("handempty", ("robot",)),
              PredicateSchema("on", (obj, obj)),
              PredicateSchema("smaller", (obj, obj)),
              PredicateSchema("at_region", (obj, "region"))]
    r, x, y, g = "?r", "?x", "?y", "?g"
    d, fr, to = "?d", "?from", "?to"
    on_hand = [(r, "robot"), (x, obj)]
    actions = [
        ActionSchema("pick", on_hand,
                     {_lit("handempty", r), _lit("clear", x), _lit("on_table", x)},
                     {_lit("holding", x)},
                     {_lit("handempty", r), _lit("clear", x), _lit("on_table", x)}),
        ActionSchema("place", on_hand + [(g, "region")],
                     {_lit("holding", x)},
                     {_lit("handempty", r), _lit("clear", x), _lit("on_table", x),
                      _lit("at_region", x, g)},
                     {_lit("holding", x)}),
        ActionSchema("stack", on_hand + [(y, obj)],
                     {_lit("holding", x), _lit("clear", y)},
                     {_lit("handempty", r), _lit("clear", x), _lit("on", x, y)},
                     {_lit("holding", x), _lit("clear", y)}),
        ActionSchema("unstack", on_hand + [(y, obj)],
                     {_lit("handempty", r), _lit("clear", x), _lit("on", x, y)},
                     {_lit("holding", x), _lit("clear", y)},
                     {_lit("handempty", r), _lit("clear", x), _lit("on", x, y)}),
        ActionSchema("wash", on_hand, {_lit("holding", x)}, {_lit("cleaned", x)}),
        ActionSchema("grill", on_hand, {_lit("holding", x)}, {_lit("cooked", x)}),
        ActionSchema("store", on_hand,
                     {_lit("holding", x)},
                     {_lit("handempty", r), _lit("in_bin", x), _lit("clear", x)},
                     {_lit("holding", x)}),
        ActionSchema("paint", on_hand,
                     {_lit("handempty", r), _lit("clear", x), _lit("on_table", x)},
                     {_lit("painted", x)}),
        ActionSchema("label", on_hand,
                     {_lit("handempty", r), _lit("clear", x), _lit("on_table", x)},
                     {_lit("labeled", x)}),
        ActionSchema("move_disc", [(d, "disc"), (fr, obj), (to, obj)],
                     {_lit("on", d, fr), _lit("clear", d), _lit("clear", to),
                      _lit("smaller", d, to)},
                     {_lit("on", d, to), _lit("clear", fr)},
                     {_lit("on", d, fr), _lit("clear", to)}),
    ]
    return Domain(UNIVERSE_NAME, tuple(preds), tuple(actions))


def _ds(preds: Iterable[str], acts: Iterable[str]) -> DomainSet:
    return DomainSet(frozenset(preds), frozenset(acts))


HAND = ("holding", "handempty")
GT_STACKING = _ds(("on", "on_table", "clear") + HAND, ("pick", "stack"))
GT_UNSTACKING = _ds(("on", "on_table", "clear") + HAND, ("unstack", "place"))
GT_SORTING = _ds(("at_region",) + HAND, ("pick", "place"))
GT_WASHING = _ds(("cleaned",) + HAND, ("pick", "place", "wash"))
GT_GRILLING = _ds(("cooked",) + HAND, ("pick", "place", "grill"))
GT_COOKING = GT_WASHING | GT_GRILLING
GT_TABLE_CLEANING = _ds(("in_bin", "on_table") + HAND, ("pick", "store"))
GT_PAINTING = _ds(("painted",), ("paint",))
GT_HANOI = _ds(("on", "clear", "smaller"), ("move_disc",))
LABELING_SKILL = _ds(("labeled",), ("label",))


# ---------------------------------------------------------------------------
# Problem generators: (n, rng) -> (objects, init atoms, goal literals)
# ---------------------------------------------------------------------------

Scene = tuple[list[ObjectRef], set[Atom], set[Literal]]


def _a(pred: str, *args: str) -> Atom:
    return Atom(pred, tuple(args))


def _things(prefix: str, type_tag: str, n: int) -> list[ObjectRef]:
    return [ObjectRef(f"{prefix}{i + 1}", type_tag) for i in range(n)]


def _robot_scene(things: list[ObjectRef], regions: Sequence[str] = ()) -> Scene:
    objects = [ObjectRef("r", "robot")] + things + [ObjectRef(g, "region") for g in regions]
    return objects, {_a("handempty", "r")}, set()


def _on_table(init: set[Atom], names: Iterable[str]) -> None:
    for n in names:
        init |= {_a("on_table", n), _a("clear", n)}


def _tower(init: set[Atom], order: Sequence[str]) -> None:
    """``order`` lists the tower bottom-up."""
    init.add(_a("on_table", order[0]))
    for lower, upper in zip(order, order[1:]):
        init.add(_a("on", upper, lower))
    init.add(_a("clear", order[-1]))


def _tower_goal(order: Sequence[str]) -> set[Literal]:
    return {_lit("on", upper, lower) for lower, upper in zip(order, order[1:])}


def gen_stacking(n: int, rng: random.Random) -> Scene:
    blocks = _things("b", "block", n)
    objects, init, goal = _robot_scene(blocks)
    names = [b.name for b in blocks]
    _on_table(init, names)
    goal |= _tower_goal(rng.sample(names, n))
    return objects, init, goal


def gen_unstacking(n: int, rng: random.Random) -> Scene:
    blocks = _things("b", "block", n)
    objects, init, goal = _robot_scene(blocks, ("counter",))
    names = [b.name for b in blocks]
    _tower(init, rng.sample(names, n))
    goal |= {_lit("on_table", b) for b in names}
    return objects, init, goal


def gen_sorting(n: int, rng: random.Random) -> Scene:
    blocks = _things("b", "block", n)
    objects, init, goal = _robot_scene(blocks, ("left", "right"))
    names = [b.name for b in blocks]
    _on_table(init, names)
    for b in names:
        target = rng.choice(("left", "right"))
        goal.add(_lit("at_region", b, target))
        if rng.random() < 0.25:
            init.add(_a("at_region", b, target))
    return objects, init, goal


def _process_scene(n: int, rng: random.Random, preds: Sequence[str]) -> Scene:
    food = _things("f", "food", n)
    objects, init, goal = _robot_scene(food, ("counter",))
    names = [f.name for f in food]
    _on_table(init, names)
    for f in names:
        for p in preds:
            goal.add(_lit(p, f))
    return objects, init, goal


def gen_washing(n: int, rng: random.Random) -> Scene:
    return _process_scene(n, rng, ("cleaned",))


def gen_grilling(n: int, rng: random.Random) -> Scene:
    return _process_scene(n, rng, ("cooked",))


def gen_cooking(n: int, rng: random.Random) -> Scene:
    return _process_scene(n, rng, ("cleaned", "cooked"))


def gen_table_cleaning(n: int, rng: random.Random) -> Scene:
    items = _things("i", "item", n)
    objects, init, goal = _robot_scene(items)
    names = [i.name for i in items]
    _on_table(init, names)
    goal |= {_lit("in_bin", i) for i in names}
    return objects, init, goal


def gen_painting(n: int, rng: random.Random) -> Scene:
    papers = _things("p", "paper", n)
    objects, init, goal = _robot_scene(papers)
    names = [p.name for p in papers]
    _on_table(init, names)
    targets = [p for p in names if rng.random() < 0.7] or [rng.choice(names)]
    goal |= {_lit("painted", p) for p in targets}
    return objects, init, goal


def gen_hanoi(n: int, rng: random.Random) -> Scene:
    """``n`` discs, d1 smallest, on three pegs; move the tower to another peg."""
    discs = [f"d{i + 1}" for i in range(n)]
    pegs = ["peg1", "peg2", "peg3"]
    objects = [ObjectRef(d, "disc") for d in discs] + [ObjectRef(p, "peg") for p in pegs]
    src, dst = rng.sample(pegs, 2)
    init: set[Atom] = set()
    for i, d in enumerate(discs):
        for bigger in discs[i + 1:]:
            init.add(_a("smaller", d, bigger))
        for p in pegs:
            init.add(_a("smaller", d, p))
    below = [*discs[1:], src]
    for d, under in zip(discs, below):
        init.add(_a("on", d, under))
    init.add(_a("clear", discs[0]))
    init |= {_a("clear", p) for p in pegs if p != src}
    goal = {_lit("on", d, under) for d, under in zip(discs, [*discs[1:], dst])}
    return objects, init, goal


def gen_unpack_and_cook(n: int, rng: random.Random) -> Scene:
    food = _things("f", "food", n)
    objects, init, goal = _robot_scene(food, ("counter",))
    names = [f.name for f in food]
    _tower(init, rng.sample(names, n))
    for f in names:
        goal |= {_lit("on_table", f), _lit("cleaned", f), _lit("cooked", f)}
    return objects, init, goal


def gen_cook_and_plate(n: int, rng: random.Random) -> Scene:
    food = _things("f", "food", n)
    objects, init, goal = _robot_scene(food, ("counter",))
    names = [f.name for f in food]
    _on_table(init, names)
    for f in names:
        goal |= {_lit("cleaned", f), _lit("cooked", f)}
    goal |= _tower_goal(rng.sample(names, n))
    return objects, init, goal


def gen_labeling(n: int, rng: random.Random) -> Scene:
    blocks = _things("b", "block", n)
    objects, init, goal = _robot_scene(blocks, ("counter",))
    names = [b.name for b in blocks]
    _tower(init, rng.sample(names, n))
    for b in names:
        goal |= {_lit("on_table", b), _lit("labeled", b)}
    return objects, init, goal


# ---------------------------------------------------------------------------
# Task specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    name: str
    generator: Callable[[int, random.Random], Scene] = field(repr=False)
    ground_truth: DomainSet
    object_range: tuple[int, int]
    composed: bool = False
    constituents: tuple[str, ...] = ()
    demo_objects: int = 4
    validation_range: tuple[int, int] = (3, 4)
    seed: int = 0

    def gt_domain(self, world: Domain | None = None) -> Domain:
        return project(world or universe(), self.ground_truth)


BASIC_TASKS = ("stacking", "unstacking", "sorting", "washing", "grilling", "cooking",
               "table_cleaning", "painting", "hanoi")
COMPOSED_TASKS = ("unpack_and_cook", "cook_and_plate", "labeling")

_SPECS = {
    "stacking": TaskSpec("stacking", gen_stacking, GT_STACKING, (2, 9)),
    "unstacking": TaskSpec("unstacking", gen_unstacking, GT_UNSTACKING, (2, 9)),
    "sorting": TaskSpec("sorting", gen_sorting, GT_SORTING, (2, 9)),
    "washing": TaskSpec("washing", gen_washing, GT_WASHING, (2, 9)),
    "grilling": TaskSpec("grilling", gen_grilling, GT_GRILLING, (2, 9)),
    "cooking": TaskSpec("cooking", gen_cooking, GT_COOKING, (2, 9),
                        constituents=("washing", "grilling")),
    "table_cleaning": TaskSpec("table_cleaning", gen_table_cleaning, GT_TABLE_CLEANING, (2, 9)),
    "painting": TaskSpec("painting", gen_painting, GT_PAINTING, (2, 9)),
    # plans for n discs need 2^n - 1 moves; eight discs exceed the default
    # 200-step plan bound
    "hanoi": TaskSpec("hanoi", gen_hanoi, GT_HANOI, (2, 7), demo_objects=3,
                      validation_range=(2, 3)),
    "unpack_and_cook": TaskSpec("unpack_and_cook", gen_unpack_and_cook,
                                GT_UNSTACKING | GT_COOKING, (3, 9), composed=True,
                                constituents=("unstacking", "cooking")),
    "cook_and_plate": TaskSpec("cook_and_plate", gen_cook_and_plate,
                               GT_STACKING | GT_COOKING, (3, 9), composed=True,
                               constituents=("stacking", "cooking")),
    "labeling": TaskSpec("labeling", gen_labeling, GT_UNSTACKING | LABELING_SKILL, (3, 9),
                         composed=True, constituents=("unstacking",)),
}


def task_spec(name: str) -> TaskSpec:
    try:
        return _SPECS[name]
    except KeyError:
        raise KeyError(f"unknown task {name!r}; choose from {sorted(_SPECS)}") from None


def all_specs(names: Iterable[str] | None = None) -> list[TaskSpec]:
    return [task_spec(n) for n in (names or (*BASIC_TASKS, *COMPOSED_TASKS))]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _rng(*parts) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def sample_problem(spec: TaskSpec, n_objects: int, seed: int, max_tries: int = 50,
                   nontrivial: bool = False, budget: SearchBudget | None = None) -> Problem:
    lo, hi = spec.object_range
    if not lo <= n_objects <= hi:
        raise ValueError(f"{spec.name}: object count {n_objects} outside [{lo}, {hi}]")
    world = universe()
    gt = spec.gt_domain(world)
    for attempt in range(max_tries):
        rng = _rng(spec.name, n_objects, seed, attempt)
        objects, init, goal = spec.generator(n_objects, rng)
        problem = Problem(f"{spec.name}-n{n_objects}-s{seed}", UNIVERSE_NAME, tuple(objects),
                          frozenset(init), frozenset(goal))
        if nontrivial and all((l.atom in problem.init) == l.positive for l in problem.goal):
            continue
        if solve_one(gt, problem, budget, world=world, strict=False):
            return problem
    raise GenerationExhausted(f"{spec.name}: no solvable problem after {max_tries} tries")


def make_validation_set(spec: TaskSpec, m: int = 5, seed: int = 0) -> ProblemSet:
    lo, hi = spec.validation_range
    lo, hi = max(lo, spec.object_range[0]), min(hi, spec.object_range[1])
    rng = _rng("validation", spec.name, seed)
    problems = []
    for i in range(m):
        n = rng.randint(lo, hi)
        p = sample_problem(spec, n, seed * 1000 + i, nontrivial=True)
        problems.append(Problem(f"{spec.name}-val{i}-s{seed}", p.domain_name, p.objects,
                                p.init, p.goal))
    return ProblemSet(tuple(problems))


@dataclass(frozen=True)
class LabeledExample:
    problem: Problem
    task: str
    predicate_labels: dict
    action_labels: dict

    def label_vector(self, predicates: Sequence[str] = PREDICATE_NAMES,
                     actions: Sequence[str] = ACTION_NAMES) -> list[int]:
        return ([self.predicate_labels[p] for p in predicates]
                + [self.action_labels[a] for a in actions])


def labels_for(gt: DomainSet) -> tuple[dict, dict]:
    return ({p: int(p in gt.predicate_names) for p in PREDICATE_NAMES},
            {a: int(a in gt.action_names) for a in ACTION_NAMES})


def make_dataset(specs: Sequence[TaskSpec] | None = None, per_task: int = 30, seed: int = 0,
                 object_range: tuple[int, int] = (2, 4)) -> list[LabeledExample]:
    specs = list(specs) if specs is not None else all_specs(BASIC_TASKS)
    out = []
    for spec in specs:
        lo = max(object_range[0], spec.object_range[0])
        hi = min(object_range[1], spec.object_range[1])
        rng = _rng("dataset", spec.name, seed)
        preds, acts = labels_for(spec.ground_truth)
        for i in range(per_task):
            n = rng.randint(lo, hi)
            p = sample_problem(spec, n, seed * 100_000 + i)
            p = Problem(f"{spec.name}-train{i}-s{seed}", p.domain_name, p.objects, p.init, p.goal)
            out.append(LabeledExample(p, spec.name, dict(preds), dict(acts)))
    return out


def replay(domain: Domain, problem: Problem, steps) -> Trajectory:
    states = [problem.init]
    for step in steps:
        op = domain.action(step.name).ground(step.args)
        if not op.applicable(states[-1]):
            raise NotApplicable(f"{step} is not applicable while replaying")
        states.append(op.successor(states[-1]))
    return Trajectory(tuple(zip(states[:-1], steps)), states[-1], problem.objects)


def make_demo(spec: TaskSpec, seed: int = 0, n_objects: int | None = None,
              budget: SearchBudget | None = None) -> Trajectory:
    """Plan under the ground truth and record the full world state at every step."""
    n = n_objects or spec.demo_objects
    problem = sample_problem(spec, n, 7_000_000 + seed, nontrivial=True, budget=budget)
    world = universe()
    result = plan(spec.gt_domain(world), problem, budget)
    if not result.solved:
        raise RuntimeError(f"{spec.name}: ground-truth planner failed on demo problem")
    return replay(world, problem, result.plan.steps)


def demo_problem(traj: Trajectory, name: str = "demo") -> Problem:
    """The (initial, achieved) problem a demonstration illustrates."""
    init = traj.states[0]
    goal = frozenset(Literal(a.predicate, a.args) for a in traj.final_state - init)
    return Problem(name, UNIVERSE_NAME, traj.objects, init, goal)


def make_test_suite(specs: Sequence[TaskSpec] | None = None, seed: int = 0, per_count: int = 10,
                    counts: Sequence[int] | None = None) -> dict[str, dict[int, list[Problem]]]:
    specs = list(specs) if specs is not None else all_specs()
    suite: dict[str, dict[int, list[Problem]]] = {}
    for spec in specs:
        lo, hi = spec.object_range
        rows = {}
        for n in (counts or range(lo, hi + 1)):
            if not lo <= n <= hi:
                continue
            rows[n] = [
                _renamed(sample_problem(spec, n, 9_000_000 + seed * 1000 + k),
                         f"{spec.name}-test-n{n}-{k}-s{seed}")
                for k in range(per_count)]
        suite[spec.name] = rows
    return suite


def _renamed(p: Problem, name: str) -> Problem:
    return Problem(name, p.domain_name, p.objects, p.init, p.goal)
