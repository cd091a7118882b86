"""Inducing lifted action schemas from demonstration trajectories.

Preconditions are the intersection of the lifted pre-images of every instance
of an action. Postconditions come from the intersection of lifted post-images,
with literals that are unchanged relative to the precondition removed.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .logic import (
    ANY_TYPE,
    ActionSchema,
    Atom,
    Domain,
    GroundAction,
    Literal,
    ObjectRef,
    PredicateSchema,
    Trajectory,
    type_matches,
)
from .pddl import MissingAction


class UnknownObject(ValueError):
    pass


class NonMonotonicTime(ValueError):
    pass


class OverlappingActions(ValueError):
    pass


class NoInstances(KeyError):
    pass


class InconsistentInstances(ValueError):
    pass


# ---------------------------------------------------------------------------
# Continuous traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousFrame:
    t: float
    poses: Mapping[str, tuple[float, ...]]

    def __post_init__(self) -> None:
        for name, pose in self.poses.items():
            if len(pose) != 7:
                raise ValueError(f"pose of {name} must have 7 entries")
            if abs(math.sqrt(sum(q * q for q in pose[3:])) - 1.0) > 1e-6:
                raise ValueError(f"quaternion of {name} is not unit length")


@dataclass(frozen=True)
class ActionMark:
    name: str
    args: tuple[str, ...]
    phase: str
    t: float | None = None
    position: int | None = None  # index of the first frame after the mark in the stream

    def __post_init__(self) -> None:
        if self.phase not in ("start", "end"):
            raise ValueError(f"unknown mark phase {self.phase!r}")


@dataclass(frozen=True)
class PredicateClassifier:
    """A per-frame test of a predicate over an argument tuple.

    ``evaluate(poses, args)`` receives every object's pose in the frame.
    """

    predicate: str
    param_types: tuple[str, ...]
    evaluate: Callable[[Mapping[str, tuple[float, ...]], tuple[str, ...], Mapping[str, str]], bool]
    thresholds: Mapping[str, float] | None = None


def _xy_dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def default_classifiers(on_xy: float = 0.025, on_z: tuple[float, float] = (0.005, 0.06),
                        table_z: float = 0.02, grip: float = 0.05) -> list[PredicateClassifier]:
    """Tabletop classifiers; distances in meters.

    ``on``: xy distance below ``on_xy`` and vertical gap within ``on_z``.
    ``on_table``: height below ``table_z``. ``clear``: nothing on top.
    ``holding``: within ``grip`` of a robot frame. ``handempty``: robot holds nothing.
    """

    def robots(types):
        return [n for n, t in types.items() if t == "robot"]

    def is_on(poses, args, types):
        x, y = poses[args[0]], poses[args[1]]
        gap = x[2] - y[2]
        return _xy_dist(x, y) < on_xy and on_z[0] <= gap <= on_z[1]

    def holding(poses, args, types):
        x = poses[args[0]]
        return any(math.dist(x[:3], poses[r][:3]) < grip for r in robots(types) if r in poses)

    def on_table(poses, args, types):
        return poses[args[0]][2] < table_z and not holding(poses, args, types)

    def clear(poses, args, types):
        return not any(is_on(poses, (o, args[0]), types) for o in poses
                       if o != args[0] and types.get(o) != "robot")

    def handempty(poses, args, types):
        r = poses[args[0]]
        return not any(math.dist(r[:3], poses[o][:3]) < grip for o in poses
                       if types.get(o) != "robot")

    th = {"on_xy": on_xy, "on_z_min": on_z[0], "on_z_max": on_z[1],
          "table_z": table_z, "grip": grip}
    return [
        PredicateClassifier("on", ("block", "block"), is_on, th),
        PredicateClassifier("on_table", ("block",), on_table, th),
        PredicateClassifier("clear", ("block",), clear, th),
        PredicateClassifier("holding", ("block",), holding, th),
        PredicateClassifier("handempty", ("robot",), handempty, th),
    ]


def classify_frame(frame: ContinuousFrame, classifiers: Sequence[PredicateClassifier],
                   objects: Sequence[ObjectRef]) -> frozenset[Atom]:
    types = {o.name: o.type_tag for o in objects if o.name in frame.poses}
    atoms = set()
    for clf in classifiers:
        pools = [[n for n, t in sorted(types.items()) if type_matches(pt, t)]
                 for pt in clf.param_types]
        for args in itertools.product(*pools):
            if len(set(args)) != len(args):
                continue
            if clf.evaluate(frame.poses, args, types):
                atoms.add(Atom(clf.predicate, args))
    return frozenset(atoms)


def ground_trace(frames: Sequence[ContinuousFrame], marks: Sequence[ActionMark],
                 classifiers: Sequence[PredicateClassifier],
                 objects: Sequence[ObjectRef]) -> Trajectory:
    """Turn a pose trace with explicit action start/end marks into a trajectory."""
    if not frames:
        raise MissingAction("trace has no frames")
    for a, b in zip(frames, frames[1:]):
        if b.t <= a.t:
            raise NonMonotonicTime(f"frame time {b.t} does not follow {a.t}")
    known = {n for f in frames for n in f.poses}
    intervals = []
    open_mark: ActionMark | None = None
    for m in marks:
        unknown = [a for a in m.args if a not in known]
        if unknown:
            raise UnknownObject(f"action {m.name} mentions unknown objects {unknown}")
        if m.phase == "start":
            if open_mark is not None:
                raise OverlappingActions(f"{m.name} starts before {open_mark.name} ends")
            open_mark = m
        else:
            if open_mark is None or (open_mark.name, open_mark.args) != (m.name, m.args):
                raise OverlappingActions(f"end of {m.name} does not match an open action")
            intervals.append((open_mark, m))
            open_mark = None
    if open_mark is not None:
        raise OverlappingActions(f"{open_mark.name} never ends")
    if not intervals:
        raise MissingAction("a demonstration must contain at least one action")

    states = [classify_frame(f, classifiers, objects) for f in frames]

    def before(mark: ActionMark) -> int:
        if mark.t is not None:
            idx = [i for i, f in enumerate(frames) if f.t < mark.t]
        else:
            idx = list(range(min(mark.position, len(frames))))
        if not idx:
            raise MissingAction(f"no frame precedes the start of {mark.name}")
        return idx[-1]

    def after(mark: ActionMark) -> int:
        if mark.t is not None:
            idx = [i for i, f in enumerate(frames) if f.t >= mark.t]
        else:
            idx = list(range(mark.position, len(frames)))
        if not idx:
            raise MissingAction(f"no frame follows the end of {mark.name}")
        return idx[0]

    prev_end = -1
    steps, posts = [], []
    for start, end in intervals:
        i, j = before(start), after(end)
        if i < prev_end:
            raise OverlappingActions(f"{start.name} starts before the previous action ends")
        prev_end = j
        steps.append((states[i], GroundAction(start.name, start.args)))
        posts.append(states[j])
    return Trajectory(tuple(steps), states[-1], tuple(objects), tuple(posts))


# ---------------------------------------------------------------------------
# Images and lifting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionInstanceImages:
    action: str
    args: tuple[str, ...]
    pre_image: frozenset[Atom]
    post_image: frozenset[Atom]


def extract_images(traj: Trajectory) -> list[ActionInstanceImages]:
    out = []
    states = traj.states
    for i, (pre, act) in enumerate(traj.steps):
        post = traj.post_states[i] if traj.post_states is not None else states[i + 1]
        out.append(ActionInstanceImages(act.name, act.args, pre, post))
    return out


def variables_for(n: int) -> tuple[str, ...]:
    return tuple(f"?x{i + 1}" for i in range(n))


def lift(image: Iterable[Atom], args: Sequence[str], params: Sequence[str]) -> frozenset[Literal]:
    """Replace argument objects by variables, dropping atoms over other objects."""
    if len(args) != len(params):
        raise ValueError("args and params differ in length")
    sub: dict[str, str] = {}
    for obj, var in zip(args, params):
        sub.setdefault(obj, var)
    return frozenset(Literal(a.predicate, tuple(sub[x] for x in a.args))
                     for a in image if all(x in sub for x in a.args))


def group_instances(trajectories: Iterable[Trajectory]) -> dict[str, list[ActionInstanceImages]]:
    groups: dict[str, list[ActionInstanceImages]] = defaultdict(list)
    for traj in trajectories:
        for inst in extract_images(traj):
            groups[inst.action].append(inst)
    for name, insts in groups.items():
        if len({len(i.args) for i in insts}) != 1:
            raise InconsistentInstances(f"{name} is used with different arities")
    return dict(groups)


def negative_candidates(image: frozenset[Atom], args: Sequence[str], params: Sequence[str],
                        predicates: Sequence[PredicateSchema]) -> frozenset[Literal]:
    """Negated lifted literals over ``params`` whose ground atom is absent."""
    lifted = lift(image, args, params)
    out = set()
    for p in predicates:
        for combo in itertools.product(params, repeat=p.arity):
            lit = Literal(p.name, combo)
            if lit not in lifted:
                out.add(lit.negate())
    return frozenset(out)


def induce_preconditions(groups: Mapping[str, Sequence[ActionInstanceImages]],
                         names: Iterable[str] | None = None,
                         negative: bool = False,
                         predicates: Sequence[PredicateSchema] = ()) -> dict[str, frozenset[Literal]]:
    """Intersect lifted pre-images per action.

    With ``negative`` set, also keep ``not l`` for literals absent from every
    pre-image (over the listed ``predicates``).
    """
    out = {}
    for name in (names if names is not None else sorted(groups)):
        insts = groups.get(name)
        if not insts:
            raise NoInstances(name)
        params = variables_for(len(insts[0].args))
        common = None
        for inst in insts:
            lits = lift(inst.pre_image, inst.args, params)
            if negative:
                lits = lits | negative_candidates(inst.pre_image, inst.args, params, predicates)
            common = lits if common is None else common & lits
        out[name] = frozenset(common)
    return out


def induce_effects(groups: Mapping[str, Sequence[ActionInstanceImages]],
                   preconditions: Mapping[str, frozenset[Literal]]
                   ) -> dict[str, tuple[frozenset[Literal], frozenset[Literal]]]:
    out = {}
    for name, pre in preconditions.items():
        insts = groups.get(name)
        if not insts:
            raise NoInstances(name)
        params = variables_for(len(insts[0].args))
        pre_pos = frozenset(l for l in pre if l.positive)
        lifted_posts = [lift(i.post_image, i.args, params) for i in insts]
        lifted_pres = [lift(i.pre_image, i.args, params) for i in insts]
        added = set().union(*(post - pre_i for post, pre_i in zip(lifted_posts, lifted_pres)))
        deleted = set().union(*(pre_i - post for post, pre_i in zip(lifted_posts, lifted_pres)))
        clash = added & deleted
        if clash:
            raise InconsistentInstances(
                f"{name}: {sorted(map(str, clash))} added in one instance and deleted in another")
        post_common = frozenset.intersection(*lifted_posts)
        add = post_common - pre_pos
        delete = frozenset(l for l in pre_pos if all(l not in p for p in lifted_posts))
        out[name] = (add, delete)
    return out


def parameter_types(insts: Sequence[ActionInstanceImages], object_types: Mapping[str, str]
                    ) -> tuple[str, ...]:
    """The shared type of each argument position, or ``object`` when they differ."""
    out = []
    for pos in range(len(insts[0].args)):
        found = {object_types.get(i.args[pos], ANY_TYPE) for i in insts}
        out.append(found.pop() if len(found) == 1 else ANY_TYPE)
    return tuple(out)


def induce_schemas(trajectories: Sequence[Trajectory], predicates: Sequence[PredicateSchema] = (),
                   negative: bool = False) -> list[ActionSchema]:
    trajectories = list(trajectories)
    groups = group_instances(trajectories)
    object_types: dict[str, str] = {}
    for traj in trajectories:
        object_types.update(traj.object_types)
    pre = induce_preconditions(groups, negative=negative, predicates=predicates)
    eff = induce_effects(groups, pre)
    if predicates:
        known = {p.name for p in predicates}

        def keep(lits):
            return frozenset(l for l in lits if l.predicate in known)

        pre = {k: keep(v) for k, v in pre.items()}
        eff = {k: (keep(a), keep(d)) for k, (a, d) in eff.items()}
    schemas = []
    for name in sorted(groups):
        params = variables_for(len(groups[name][0].args))
        types = parameter_types(groups[name], object_types)
        add, delete = eff[name]
        schemas.append(ActionSchema(name, tuple(zip(params, types)), pre[name], add, delete))
    return schemas


def build_full_domain(predicates: Sequence[PredicateSchema], schemas: Sequence[ActionSchema],
                      name: str = "induced") -> Domain:
    return Domain(name, tuple(predicates), tuple(schemas))


def induce_domain(trajectories: Sequence[Trajectory], predicates: Sequence[PredicateSchema],
                  negative: bool = False, name: str = "induced") -> Domain:
    """Induce schemas for every demonstrated action over the universe ``predicates``."""
    return build_full_domain(predicates, induce_schemas(trajectories, predicates, negative), name)
