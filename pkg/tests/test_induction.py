import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domain_inference import taskgen as tg
from domain_inference.induction import (
    ActionInstanceImages,
    ActionMark,
    ContinuousFrame,
    InconsistentInstances,
    NoInstances,
    NonMonotonicTime,
    OverlappingActions,
    UnknownObject,
    default_classifiers,
    extract_images,
    ground_trace,
    group_instances,
    induce_domain,
    induce_effects,
    induce_preconditions,
    lift,
)
from domain_inference.logic import Atom, GroundAction, Literal, ObjectRef, Trajectory, apply

from oracles import oracle_induction, random_trajectory_set


def L(pred, *args, positive=True):
    return Literal(pred, tuple(args), positive)


def A(pred, *args):
    return Atom(pred, tuple(args))


def inst(name, args, pre, post):
    return ActionInstanceImages(name, tuple(args), frozenset(pre), frozenset(post))


# ---------------------------------------------------------------------------
# lifting
# ---------------------------------------------------------------------------

def test_lift_keeps_only_argument_atoms():
    image = {A("on", "b1", "b2"), A("clear", "b1"), A("clear", "b3"), A("handempty", "r")}
    got = lift(image, ("r", "b1", "b2"), ("?x1", "?x2", "?x3"))
    assert got == {L("on", "?x2", "?x3"), L("clear", "?x2"), L("handempty", "?x1")}


def test_lift_repeated_argument_uses_first_variable():
    got = lift({A("on", "a", "a")}, ("a", "a"), ("?x1", "?x2"))
    assert got == {L("on", "?x1", "?x1")}


def test_lift_length_mismatch():
    with pytest.raises(ValueError):
        lift(set(), ("a",), ("?x1", "?x2"))


# ---------------------------------------------------------------------------
# preconditions and effects
# ---------------------------------------------------------------------------

PICK_PRE = {A("handempty", "r"), A("clear", "b1"), A("on_table", "b1")}
PICK_POST = {A("holding", "b1")}


def test_single_instance_preconditions_are_the_lifted_image():
    groups = {"pick": [inst("pick", ("r", "b1"), PICK_PRE | {A("clear", "b2")}, PICK_POST)]}
    pre = induce_preconditions(groups)
    assert pre["pick"] == {L("handempty", "?x1"), L("clear", "?x2"), L("on_table", "?x2")}


def test_intersection_drops_incidental_literals():
    # b1 is clear in the first instance only; b2 sits under b3 in the second
    a = inst("pick", ("r", "b1"), PICK_PRE | {A("cleaned", "b1")}, PICK_POST)
    b = inst("pick", ("r", "b2"), {A("handempty", "r"), A("clear", "b2"), A("on_table", "b2")},
             {A("holding", "b2")})
    pre = induce_preconditions({"pick": [a, b]})
    assert pre["pick"] == {L("handempty", "?x1"), L("clear", "?x2"), L("on_table", "?x2")}


def test_pick_effects():
    groups = {"pick": [inst("pick", ("r", "b1"), PICK_PRE, PICK_POST)]}
    pre = induce_preconditions(groups)
    add, delete = induce_effects(groups, pre)["pick"]
    assert add == {L("holding", "?x2")}
    assert delete == {L("handempty", "?x1"), L("clear", "?x2"), L("on_table", "?x2")}


def test_grill_effect_keeps_holding():
    pre_img = {A("holding", "f1")}
    groups = {"grill": [inst("grill", ("r", "f1"), pre_img, pre_img | {A("cooked", "f1")})]}
    add, delete = induce_effects(groups, induce_preconditions(groups))["grill"]
    assert add == {L("cooked", "?x2")} and delete == frozenset()


def test_no_change_gives_empty_effects():
    img = {A("clear", "b1")}
    groups = {"look": [inst("look", ("b1",), img, img)]}
    assert induce_effects(groups, induce_preconditions(groups))["look"] == (frozenset(), frozenset())


def test_inconsistent_instances():
    a = inst("toggle", ("x",), {A("on", "x")}, set())
    b = inst("toggle", ("y",), set(), {A("on", "y")})
    with pytest.raises(InconsistentInstances):
        induce_effects({"toggle": [a, b]}, induce_preconditions({"toggle": [a, b]}))


def test_arity_mismatch_is_inconsistent():
    t = Trajectory(((frozenset(), GroundAction("a", ("x",))),
                    (frozenset(), GroundAction("a", ("x", "y")))), frozenset())
    with pytest.raises(InconsistentInstances):
        group_instances([t])


def test_missing_action_has_no_instances():
    with pytest.raises(NoInstances):
        induce_preconditions({}, names=["stack"])


def test_extract_images_adjacent_states(demos):
    traj = demos["stacking"]
    images = extract_images(traj)
    states = traj.states
    assert len(images) == len(traj.steps) >= 4
    for i, im in enumerate(images):
        assert im.pre_image == states[i] and im.post_image == states[i + 1]
        assert (im.action, im.args) == tuple(traj.actions[i])


def test_stacking_demo_recovers_golden_core(demos, world):
    dom = induce_domain([demos["stacking"]], world.predicates)
    assert {a.name for a in dom.actions} == {"pick", "stack"}
    pick = dom.action("pick")
    assert {L("handempty", "?x1"), L("clear", "?x2"), L("on_table", "?x2")} <= pick.pre
    assert pick.add >= {L("holding", "?x2")}
    stack = dom.action("stack")
    assert {L("holding", "?x2"), L("clear", "?x3")} <= stack.pre
    assert {L("on", "?x2", "?x3"), L("handempty", "?x1")} <= stack.add
    assert [t for _, t in stack.params] == ["robot", "block", "block"]


def test_negative_preconditions_are_absent_in_every_instance(demos, world):
    dom = induce_domain([demos["washing"]], world.predicates, negative=True)
    wash = dom.action("wash")
    assert L("cleaned", "?x2", positive=False) in wash.pre
    assert L("holding", "?x2") in wash.pre


# ---------------------------------------------------------------------------
# continuous traces
# ---------------------------------------------------------------------------

def frame(t, **poses):
    return ContinuousFrame(t, {k: (*v, 0.0, 0.0, 0.0, 1.0) for k, v in poses.items()})


OBJS = (ObjectRef("g", "robot"), ObjectRef("b1", "block"))
FRAMES = [frame(0.0, g=(0, 0, 0.3), b1=(0, 0, 0.01)), frame(1.0, g=(0, 0, 0.1), b1=(0, 0, 0.08))]


def test_ground_trace_non_monotonic_time():
    with pytest.raises(NonMonotonicTime):
        ground_trace(FRAMES[::-1], [], default_classifiers(), OBJS)


def test_ground_trace_overlapping_actions():
    marks = [ActionMark("pick", ("g", "b1"), "start", 0.2),
             ActionMark("pick", ("g", "b1"), "start", 0.3)]
    with pytest.raises(OverlappingActions):
        ground_trace(FRAMES, marks, default_classifiers(), OBJS)


def test_ground_trace_unknown_object():
    marks = [ActionMark("pick", ("g", "b7"), "start", 0.2)]
    with pytest.raises(UnknownObject):
        ground_trace(FRAMES, marks, default_classifiers(), OBJS)


def test_ground_trace_needs_an_action():
    from domain_inference.pddl import MissingAction

    with pytest.raises(MissingAction):
        ground_trace(FRAMES, [], default_classifiers(), OBJS)


# ---------------------------------------------------------------------------
# oracle equivalence and properties
# ---------------------------------------------------------------------------

def check_against_oracle(preds, trajs):
    want_pre, want_eff, clashes = oracle_induction(preds, trajs)
    groups = group_instances(trajs)
    if any(clashes.values()):
        with pytest.raises(InconsistentInstances):
            induce_effects(groups, induce_preconditions(groups))
        return False
    pre = induce_preconditions(groups)
    assert pre == want_pre
    assert induce_effects(groups, pre) == want_eff
    return True


@pytest.mark.parametrize("seed", range(20))
def test_matches_bruteforce_oracle(seed):
    preds, trajs = random_trajectory_set(random.Random(seed))
    check_against_oracle(preds, trajs)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(tg.BASIC_TASKS + tg.COMPOSED_TASKS), st.integers(0, 1000))
def test_demos_replay_under_induced_domain(world, name, seed):
    spec = tg.task_spec(name)
    traj = tg.make_demo(spec, seed, n_objects=spec.object_range[0] + 1)
    dom = induce_domain([traj], world.predicates)
    state = traj.states[0]
    for step in traj.actions:
        state = apply(state, step, dom)
    # the demo only ever touches universe predicates, so replay is exact
    assert state == traj.final_state


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_more_instances_never_grow_preconditions(seed):
    rng = random.Random(seed)
    preds, trajs = random_trajectory_set(rng)
    groups = group_instances(trajs)
    full = induce_preconditions(groups)
    for name, insts in groups.items():
        part = induce_preconditions({name: insts[:1]})
        assert full[name] <= part[name]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_add_and_delete_are_disjoint(seed):
    preds, trajs = random_trajectory_set(random.Random(seed))
    groups = group_instances(trajs)
    try:
        eff = induce_effects(groups, induce_preconditions(groups))
    except InconsistentInstances:
        return
    for add, delete in eff.values():
        assert not add & delete
