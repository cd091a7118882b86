import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domain_inference import taskgen as tg
from domain_inference.estimator import (
    GATEstimator,
    NetConfig,
    NonFiniteLoss,
    SceneGraph,
    ShapeMismatch,
    TrainConfig,
    Vocabulary,
    accuracy,
    bce,
    encode,
    forward,
    frequency_estimate,
    init_params,
    loss_and_grad,
    train,
    train_estimator,
    zero_params,
)
from domain_inference.logic import Atom, Literal, ObjectRef, PredicateSchema, Problem

from oracles import gradient_error, random_graph


def scene(objs, init=(), goal=()):
    return Problem("p", "d", tuple(ObjectRef(n, t) for n, t in objs),
                   frozenset(Atom(p, tuple(a)) for p, *a in init),
                   frozenset(Literal(p, tuple(a)) for p, *a in goal))


FIG3_PREDS = (PredicateSchema("top", ("object",)), PredicateSchema("cleaned", ("object",)),
              PredicateSchema("cooked", ("object",)), PredicateSchema("is_on", ("object", "object")))


def test_fig3_cube_node_vector():
    vocab = Vocabulary.from_predicates(FIG3_PREDS, ("object", "cube"))
    p = scene([("blue", "cube"), ("cube", "cube"), ("green", "cube")],
              init=[("is_on", "blue", "cube"), ("top", "blue"), ("top", "green")])
    g = encode(p, vocab)
    row = g.nodes[g.names.index("cube")]
    assert list(row[:1 + len(vocab.unary)]) == [1, 0, 0, 0]
    # one edge, blue -> cube; nothing between green and cube
    assert list(zip(g.src, g.dst)) == [(0, 1)]
    assert list(g.edges[0]) == [1, 0]


def test_no_binary_atoms_gives_no_edges(world):
    vocab = Vocabulary.from_predicates(world.predicates)
    g = encode(scene([("f1", "food"), ("r", "robot")], init=[("handempty", "r")]), vocab)
    assert g.edges.shape == (0, vocab.edge_dim) and len(g.src) == 0


def test_ternary_atoms_expand_to_pairs():
    preds = (PredicateSchema("between", ("object",) * 3),)
    vocab = Vocabulary.from_predicates(preds, ("object",))
    g = encode(scene([("o1", "object"), ("o2", "object"), ("o3", "object")],
                     init=[("between", "o1", "o2", "o3")]), vocab)
    assert list(zip(g.src, g.dst)) == [(0, 1), (0, 2), (1, 2)]
    assert all(list(e) == [1, 0] for e in g.edges)


def test_goal_flags_use_second_half(world):
    vocab = Vocabulary.from_predicates(world.predicates)
    g = encode(scene([("f1", "food")], goal=[("cooked", "f1")]), vocab)
    k = vocab.unary.index("cooked")
    assert g.flags[0, k] == 0 and g.flags[0, len(vocab.unary) + k] == 1


def test_scene_graph_rejects_bad_endpoints():
    with pytest.raises(ShapeMismatch):
        SceneGraph(np.zeros((1, 1)), np.array([0]), np.array([3]), np.zeros((1, 0)))


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def tiny_cfg(**kw):
    base = dict(n_types=2, node_bool_dim=0, edge_dim=0, n_outputs=1, layers=1,
                hidden=1, embed=1, mlp_hidden=1)
    base.update(kw)
    return NetConfig(**base)


def test_zero_params_give_half(world):
    vocab = Vocabulary.from_predicates(world.predicates)
    cfg = NetConfig(len(vocab.types), vocab.node_bool_dim, vocab.edge_dim, 5)
    g = encode(tg.sample_problem(tg.task_spec("stacking"), 3, 0), vocab)
    assert np.all(forward(zero_params(cfg), g, cfg) == 0.5)


def test_single_node_graph():
    cfg = tiny_cfg()
    params = {"embed": np.array([[0.0], [0.7]]), "W0": np.array([[2.0]]),
              "a_src0": np.array([5.0]), "a_dst0": np.array([-3.0]), "a_edge0": np.zeros(0),
              "mlp_W1": np.array([[1.0]]), "mlp_b1": np.zeros(1),
              "mlp_W2": np.array([[1.0]]), "mlp_b2": np.zeros(1)}
    g = SceneGraph(np.array([[1.0]]), np.zeros(0, int), np.zeros(0, int), np.zeros((0, 0)))
    # attention over the lone self-loop is 1 whatever its score
    want = 1 / (1 + math.exp(-math.tanh(math.tanh(1.4))))
    assert forward(params, g, cfg)[0] == pytest.approx(want, abs=1e-12)


def test_two_node_hand_computed():
    cfg = tiny_cfg()
    params = {"embed": np.array([[1.0], [-0.5]]), "W0": np.array([[2.0]]),
              "a_src0": np.array([0.3]), "a_dst0": np.array([-0.7]), "a_edge0": np.zeros(0),
              "mlp_W1": np.array([[1.5]]), "mlp_b1": np.array([0.1]),
              "mlp_W2": np.array([[-2.0]]), "mlp_b2": np.array([0.25])}
    g = SceneGraph(np.array([[0.0], [1.0]]), np.array([0]), np.array([1]), np.zeros((1, 0)))
    # z = (2, -1); node 1 attends to 0 with score 1.3 and to itself with 0.4
    assert round(float(forward(params, g, cfg)[0]), 6) == 0.177386


def test_shape_mismatch():
    cfg = tiny_cfg()
    params = zero_params(cfg)
    params["W0"] = np.zeros((2, 1))
    g = SceneGraph(np.array([[0.0]]), np.zeros(0, int), np.zeros(0, int), np.zeros((0, 0)))
    with pytest.raises(ShapeMismatch):
        forward(params, g, cfg)
    with pytest.raises(ShapeMismatch):
        forward(zero_params(tiny_cfg(node_bool_dim=2)), g, tiny_cfg(node_bool_dim=2))


def test_permutation_invariance(world):
    vocab = Vocabulary.from_predicates(world.predicates)
    cfg = NetConfig(len(vocab.types), vocab.node_bool_dim, vocab.edge_dim, 4)
    params = init_params(cfg, 3)
    p = tg.sample_problem(tg.task_spec("unstacking"), 4, 1)
    rename = {o.name: f"z{9 - i}" for i, o in enumerate(p.objects)}
    q = Problem("q", p.domain_name, tuple(ObjectRef(rename[o.name], o.type_tag) for o in p.objects),
                frozenset(Atom(a.predicate, tuple(rename[x] for x in a.args)) for a in p.init),
                frozenset(Literal(l.predicate, tuple(rename[x] for x in l.args), l.positive)
                          for l in p.goal))
    a, b = forward(params, encode(p, vocab), cfg), forward(params, encode(q, vocab), cfg)
    assert np.max(np.abs(a - b)) <= 1e-12


# ---------------------------------------------------------------------------
# loss and gradient
# ---------------------------------------------------------------------------

def test_loss_at_half_is_ln2():
    p = np.full((3, 4), 0.5)
    y = np.random.default_rng(0).integers(0, 2, (3, 4))
    assert bce(p, y) == pytest.approx(math.log(2), abs=1e-15)


def test_clipped_perfect_predictions():
    y = np.array([[1.0, 0.0]])
    assert bce(y, y, eps=1e-7) == pytest.approx(-math.log(1 - 1e-7), rel=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    assert gradient_error(seed) < 1e-4


def test_label_shape_mismatch():
    cfg = tiny_cfg()
    g = SceneGraph(np.array([[0.0]]), np.zeros(0, int), np.zeros(0, int), np.zeros((0, 0)))
    with pytest.raises(ShapeMismatch):
        loss_and_grad(zero_params(cfg), [g], np.zeros((1, 2)), cfg)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def test_memorizes_single_example(world):
    vocab = Vocabulary.from_predicates(world.predicates)
    cfg = NetConfig(len(vocab.types), vocab.node_bool_dim, vocab.edge_dim, 3, hidden=8)
    g = [encode(tg.sample_problem(tg.task_spec("washing"), 2, 0), vocab)]
    y = np.array([[1.0, 0.0, 1.0]])
    res = train(g, y, cfg, TrainConfig(epochs=400, holdout=0.0, lr=0.02), seed=0)
    loss, _ = loss_and_grad(res.params, g, y, cfg)
    assert loss < 1e-3


def test_nonfinite_loss(world):
    vocab = Vocabulary.from_predicates(world.predicates)
    cfg = NetConfig(len(vocab.types), vocab.node_bool_dim, vocab.edge_dim, 1, hidden=4)
    g = [encode(tg.sample_problem(tg.task_spec("washing"), 2, 0), vocab)]
    with pytest.raises(NonFiniteLoss) as info:
        train(g, np.array([[np.nan]]), cfg, TrainConfig(epochs=2, holdout=0.0))
    assert info.value.diagnostics["epoch"] == 0


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(holdout=1.0)


@pytest.fixture(scope="module")
def stacking_examples():
    return tg.make_dataset(tg.all_specs(["stacking"]), per_task=30, seed=4)


@pytest.mark.parametrize("seed", [0, 1])
def test_stacking_heldout_accuracy(world, stacking_examples, seed):
    est = train_estimator(stacking_examples, world.predicates, tg.PREDICATE_NAMES,
                          tg.ACTION_NAMES, TrainConfig(epochs=60), seed=seed)
    assert est.metrics["predicate"]["heldout_accuracy"] >= 0.95
    assert est.metrics["action"]["heldout_accuracy"] >= 0.95


def test_seeds_give_different_params(world, stacking_examples):
    a, b = (train_estimator(stacking_examples, world.predicates, tg.PREDICATE_NAMES,
                            tg.ACTION_NAMES, TrainConfig(epochs=5), seed=s) for s in (0, 1))
    assert not np.array_equal(a.pred_params["W0"], b.pred_params["W0"])


def test_checkpoint_bytes_are_deterministic(world, stacking_examples, tmp_path):
    paths = []
    for i in range(2):
        est = train_estimator(stacking_examples, world.predicates, tg.PREDICATE_NAMES,
                              tg.ACTION_NAMES, TrainConfig(epochs=5), seed=7)
        paths.append(tmp_path / f"c{i}.json")
        est.save(paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    loaded = GATEstimator.load(paths[0])
    p = stacking_examples[0].problem
    assert loaded.scores(p) == est.scores(p)


def test_checkpoint_shape_validation(estimator, tmp_path):
    data = estimator.to_json()
    data["predicate_net"]["tensors"]["W0"]["shape"] = [1, 1]
    with pytest.raises(ShapeMismatch):
        GATEstimator.from_json(data)
    data = json.loads(json.dumps(estimator.to_json()))
    data["version"] = 99
    with pytest.raises(ValueError):
        GATEstimator.from_json(data)


def test_trained_estimator_scores_cover_universe(estimator, validation_sets):
    s = estimator.scores(validation_sets["washing"][0])
    assert set(s.predicate_scores) == set(tg.PREDICATE_NAMES)
    assert set(s.action_scores) == set(tg.ACTION_NAMES)
    assert all(0 < v < 1 for v in s.flat().values())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_outputs_strictly_inside_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    cfg = NetConfig(3, 2, 2, 3, layers=2, hidden=4, embed=2, mlp_hidden=4)
    params = {k: v * scale for k, v in init_params(cfg, seed).items()}
    p = forward(params, random_graph(rng, cfg, 3), cfg)
    # tanh bounds the pre-sigmoid logits, so moderate weights cannot saturate
    assert np.all((p > 0) & (p < 1))


# ---------------------------------------------------------------------------
# frequency baseline
# ---------------------------------------------------------------------------

def test_frequency_always_labeled(stacking_examples):
    est = frequency_estimate(stacking_examples, tg.PREDICATE_NAMES, tg.ACTION_NAMES)
    n = len(stacking_examples)
    s = est.scores()
    assert s.predicate_scores["on"] == pytest.approx((n + 1) / (n + 2))
    assert s.predicate_scores["on"] > s.predicate_scores["cooked"]
    assert s.predicate_scores["cooked"] == pytest.approx(1 / (n + 2))


def test_frequency_empty_dataset():
    s = frequency_estimate([], tg.PREDICATE_NAMES, tg.ACTION_NAMES).scores()
    assert set(s.flat().values()) == {0.5}


def test_accuracy_helper():
    cfg = tiny_cfg()
    g = SceneGraph(np.array([[0.0]]), np.zeros(0, int), np.zeros(0, int), np.zeros((0, 0)))
    assert accuracy(zero_params(cfg), [g], np.array([[1.0]]), cfg) == 1.0
