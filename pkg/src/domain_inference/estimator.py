"""Relevance estimators over scene graphs.

A problem's initial state and goal are fused into one graph: one node per
object, unary predicates as boolean node features (init and goal halves),
binary atoms as edges carrying init/goal membership flags per predicate.
A small graph-attention network maps the graph to one relevance score per
universe element. Everything is float64 numpy with hand-written backprop.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .logic import ANY_TYPE, PredicateSchema, Problem

CHECKPOINT_VERSION = 1
# index 0 is the generic type so that unknown tags still embed somewhere
DEFAULT_TYPES = (ANY_TYPE, "block", "robot", "food", "item", "paper", "region", "disc", "peg")
LEAK = 0.2


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    def __init__(self, message: str, diagnostics: Mapping):
        super().__init__(message)
        self.diagnostics = dict(diagnostics)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    types: tuple[str, ...]
    unary: tuple[str, ...]
    binary: tuple[str, ...]

    @classmethod
    def from_predicates(cls, predicates: Iterable[PredicateSchema],
                        types: Sequence[str] = DEFAULT_TYPES) -> "Vocabulary":
        preds = sorted(predicates, key=lambda p: p.name)
        return cls(tuple(types),
                   tuple(p.name for p in preds if p.arity == 1),
                   tuple(p.name for p in preds if p.arity >= 2))

    @property
    def node_bool_dim(self) -> int:
        return 2 * len(self.unary)

    @property
    def edge_dim(self) -> int:
        return 2 * len(self.binary)

    def type_index(self, tag: str) -> int:
        return self.types.index(tag) if tag in self.types else 0

    def to_json(self) -> dict:
        return {"types": list(self.types), "unary": list(self.unary), "binary": list(self.binary)}

    @classmethod
    def from_json(cls, data: Mapping) -> "Vocabulary":
        return cls(tuple(data["types"]), tuple(data["unary"]), tuple(data["binary"]))


@dataclass(frozen=True)
class SceneGraph:
    """``nodes`` rows are ``[type index, unary init flags..., unary goal flags...]``."""

    nodes: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edges: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.nodes)
        if self.nodes.ndim != 2 or self.edges.ndim != 2:
            raise ShapeMismatch("node and edge features must be 2-D")
        if not (len(self.src) == len(self.dst) == len(self.edges)):
            raise ShapeMismatch("edge arrays differ in length")
        if len(self.src) and (self.src.max() >= n or self.dst.max() >= n
                              or min(self.src.min(), self.dst.min()) < 0):
            raise ShapeMismatch("edge endpoint out of range")

    @property
    def type_index(self) -> np.ndarray:
        return self.nodes[:, 0].astype(np.int64)

    @property
    def flags(self) -> np.ndarray:
        return self.nodes[:, 1:]


def encode(problem: Problem, vocab: Vocabulary) -> SceneGraph:
    names = tuple(sorted(o.name for o in problem.objects))
    index = {n: i for i, n in enumerate(names)}
    types = problem.object_types
    u = len(vocab.unary)
    nodes = np.zeros((len(names), 1 + 2 * u))
    for n, i in index.items():
        nodes[i, 0] = vocab.type_index(types[n])
    upos = {p: k for k, p in enumerate(vocab.unary)}
    bpos = {p: k for k, p in enumerate(vocab.binary)}
    edge_flags: dict[tuple[int, int, int], np.ndarray] = {}

    def mark(pred: str, args: tuple[str, ...], half: int) -> None:
        if pred in upos and len(args) == 1:
            nodes[index[args[0]], 1 + half * u + upos[pred]] = 1.0
        elif pred in bpos:
            if len(args) == 2:
                pairs = [(args[0], args[1])]
            else:
                pairs = list(itertools.combinations(args, 2))
            for a, b in pairs:
                key = (index[a], index[b], bpos[pred])
                vec = edge_flags.setdefault(key, np.zeros(vocab.edge_dim))
                vec[2 * bpos[pred] + half] = 1.0

    for atom in problem.init:
        mark(atom.predicate, atom.args, 0)
    for lit in problem.goal:
        if lit.positive:
            mark(lit.predicate, lit.args, 1)
    keys = sorted(edge_flags)
    src = np.array([k[0] for k in keys], dtype=np.int64)
    dst = np.array([k[1] for k in keys], dtype=np.int64)
    edges = (np.stack([edge_flags[k] for k in keys]) if keys
             else np.zeros((0, vocab.edge_dim)))
    return SceneGraph(nodes, src, dst, edges, names)


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetConfig:
    n_types: int
    node_bool_dim: int
    edge_dim: int
    n_outputs: int
    layers: int = 3
    hidden: int = 32
    embed: int = 4
    mlp_hidden: int = 32

    def shapes(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, tuple[int, ...]] = {"embed": (self.n_types, self.embed)}
        d_in = self.embed + self.node_bool_dim
        for l in range(self.layers):
            out[f"W{l}"] = (d_in, self.hidden)
            out[f"a_src{l}"] = (self.hidden,)
            out[f"a_dst{l}"] = (self.hidden,)
            out[f"a_edge{l}"] = (self.edge_dim,)
            d_in = self.hidden
        out["mlp_W1"] = (d_in, self.mlp_hidden)
        out["mlp_b1"] = (self.mlp_hidden,)
        out["mlp_W2"] = (self.mlp_hidden, self.n_outputs)
        out["mlp_b2"] = (self.n_outputs,)
        return out


Params = dict  # name -> np.ndarray, ordered as NetConfig.shapes()


def init_params(cfg: NetConfig, seed: int) -> Params:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in cfg.shapes().items():
        if name.startswith("mlp_b"):
            params[name] = np.zeros(shape)
        elif len(shape) == 2:
            scale = math.sqrt(2.0 / (shape[0] + shape[1]))
            params[name] = rng.normal(0.0, scale, size=shape)
        else:
            params[name] = rng.normal(0.0, 0.1, size=shape)
    return params


def zero_params(cfg: NetConfig) -> Params:
    return {k: np.zeros(s) for k, s in cfg.shapes().items()}


def check_shapes(params: Params, cfg: NetConfig) -> None:
    expected = cfg.shapes()
    if set(params) != set(expected):
        raise ShapeMismatch(f"parameter names differ: {sorted(set(params) ^ set(expected))}")
    for k, s in expected.items():
        if params[k].shape != s:
            raise ShapeMismatch(f"{k}: expected {s}, got {params[k].shape}")


@dataclass
class _Batch:
    type_index: np.ndarray
    flags: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edges: np.ndarray
    graph_of: np.ndarray
    n_graphs: int
    counts: np.ndarray


def _collate(graphs: Sequence[SceneGraph], cfg: NetConfig) -> _Batch:
    """Concatenate graphs block-diagonally and append one self-loop per node."""
    offs = 0
    t, f, s, d, e, g = [], [], [], [], [], []
    for gi, graph in enumerate(graphs):
        n = len(graph.nodes)
        if graph.flags.shape[1] != cfg.node_bool_dim or graph.edges.shape[1] != cfg.edge_dim:
            raise ShapeMismatch("graph features do not match the network configuration")
        if n == 0:
            raise ShapeMismatch("graph has no nodes")
        loops = np.arange(n)
        t.append(graph.type_index)
        f.append(graph.flags)
        s += [graph.src + offs, loops + offs]
        d += [graph.dst + offs, loops + offs]
        e += [graph.edges, np.zeros((n, cfg.edge_dim))]
        g.append(np.full(n, gi))
        offs += n
    type_index = np.concatenate(t)
    if type_index.max() >= cfg.n_types:
        raise ShapeMismatch("type index outside the embedding table")
    graph_of = np.concatenate(g)
    return _Batch(type_index, np.concatenate(f), np.concatenate(s), np.concatenate(d),
                  np.concatenate(e), graph_of, len(graphs),
                  np.bincount(graph_of, minlength=len(graphs)).astype(float))


def _forward(params: Params, batch: _Batch, cfg: NetConfig):
    h = np.concatenate([params["embed"][batch.type_index], batch.flags], axis=1)
    cache = []
    n = len(h)
    for l in range(cfg.layers):
        z = h @ params[f"W{l}"]
        s = (z[batch.src] @ params[f"a_src{l}"] + z[batch.dst] @ params[f"a_dst{l}"]
             + batch.edges @ params[f"a_edge{l}"])
        r = np.where(s > 0, s, LEAK * s)
        rmax = np.full(n, -np.inf)
        np.maximum.at(rmax, batch.dst, r)
        w = np.exp(r - rmax[batch.dst])
        denom = np.bincount(batch.dst, weights=w, minlength=n)
        alpha = w / denom[batch.dst]
        m = np.zeros_like(z)
        np.add.at(m, batch.dst, alpha[:, None] * z[batch.src])
        h_next = np.tanh(m)
        cache.append((h, z, s, alpha, h_next))
        h = h_next
    pooled = np.zeros((batch.n_graphs, h.shape[1]))
    np.add.at(pooled, batch.graph_of, h)
    pooled /= batch.counts[:, None]
    u = np.tanh(pooled @ params["mlp_W1"] + params["mlp_b1"])
    logits = u @ params["mlp_W2"] + params["mlp_b2"]
    return logits, (cache, pooled, u)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(params: Params, graphs: SceneGraph | Sequence[SceneGraph], cfg: NetConfig) -> np.ndarray:
    """Scores in (0, 1); one row per graph (a single graph gives a 1-D array)."""
    check_shapes(params, cfg)
    single = isinstance(graphs, SceneGraph)
    batch = _collate([graphs] if single else list(graphs), cfg)
    logits, _ = _forward(params, batch, cfg)
    p = sigmoid(logits)
    return p[0] if single else p


def bce(p: np.ndarray, y: np.ndarray, eps: float = 1e-7) -> float:
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def loss_and_grad(params: Params, graphs: Sequence[SceneGraph], labels: np.ndarray,
                  cfg: NetConfig, eps: float = 1e-7) -> tuple[float, Params]:
    """Mean binary cross-entropy and its exact gradient."""
    check_shapes(params, cfg)
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (len(graphs), cfg.n_outputs):
        raise ShapeMismatch(f"labels shape {labels.shape} != {(len(graphs), cfg.n_outputs)}")
    batch = _collate(graphs, cfg)
    logits, (cache, pooled, u) = _forward(params, batch, cfg)
    p = sigmoid(logits)
    loss = bce(p, labels, eps)
    inside = (p > eps) & (p < 1.0 - eps)
    dlogits = np.where(inside, p - labels, 0.0) / labels.size

    grads: Params = {}
    grads["mlp_W2"] = u.T @ dlogits
    grads["mlp_b2"] = dlogits.sum(axis=0)
    du = dlogits @ params["mlp_W2"].T
    dpre = du * (1.0 - u * u)
    grads["mlp_W1"] = pooled.T @ dpre
    grads["mlp_b1"] = dpre.sum(axis=0)
    dpooled = dpre @ params["mlp_W1"].T
    dh = dpooled[batch.graph_of] / batch.counts[batch.graph_of][:, None]

    for l in reversed(range(cfg.layers)):
        h_in, z, s, alpha, h_out = cache[l]
        dm = dh * (1.0 - h_out * h_out)
        zs = z[batch.src]
        dm_e = dm[batch.dst]
        dalpha = np.einsum("ij,ij->i", dm_e, zs)
        dz = np.zeros_like(z)
        np.add.at(dz, batch.src, alpha[:, None] * dm_e)
        weighted = np.bincount(batch.dst, weights=alpha * dalpha, minlength=len(z))
        dr = alpha * (dalpha - weighted[batch.dst])
        ds = dr * np.where(s > 0, 1.0, LEAK)
        a_src, a_dst = params[f"a_src{l}"], params[f"a_dst{l}"]
        grads[f"a_src{l}"] = ds @ zs
        grads[f"a_dst{l}"] = ds @ z[batch.dst]
        grads[f"a_edge{l}"] = batch.edges.T @ ds
        np.add.at(dz, batch.src, ds[:, None] * a_src[None, :])
        np.add.at(dz, batch.dst, ds[:, None] * a_dst[None, :])
        grads[f"W{l}"] = h_in.T @ dz
        dh = dz @ params[f"W{l}"].T

    dembed = np.zeros_like(params["embed"])
    np.add.at(dembed, batch.type_index, dh[:, :cfg.embed])
    grads["embed"] = dembed
    return loss, {k: grads[k] for k in cfg.shapes()}


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    holdout: float = 0.2

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch size must be positive")
        if not 0.0 <= self.holdout < 1.0:
            raise ValueError("holdout must be in [0, 1)")


@dataclass
class TrainResult:
    params: Params
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    val_indices: tuple[int, ...] = ()


def train(graphs: Sequence[SceneGraph], labels: np.ndarray, cfg: NetConfig,
          tcfg: TrainConfig = TrainConfig(), seed: int = 0) -> TrainResult:
    """Adam on mini-batches; returns the parameters with the lowest held-out loss."""
    if not graphs:
        raise ValueError("training needs at least one example")
    labels = np.asarray(labels, dtype=float)
    rng = np.random.default_rng(seed)
    params = init_params(cfg, int(rng.integers(2**31)))
    order = rng.permutation(len(graphs))
    n_val = int(round(tcfg.holdout * len(graphs)))
    if n_val >= len(graphs):
        n_val = 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    step = 0
    result = TrainResult(params, val_indices=tuple(int(i) for i in sorted(val_idx)))
    best = math.inf
    for epoch in range(tcfg.epochs):
        perm = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for start in range(0, len(perm), tcfg.batch_size):
            idx = perm[start:start + tcfg.batch_size]
            loss, grads = loss_and_grad(params, [graphs[i] for i in idx], labels[idx], cfg)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}",
                                    {"epoch": epoch, "step": step, "loss": loss})
            step += 1
            for k in params:
                g = grads[k]
                m[k] = tcfg.beta1 * m[k] + (1 - tcfg.beta1) * g
                v[k] = tcfg.beta2 * v[k] + (1 - tcfg.beta2) * g * g
                mhat = m[k] / (1 - tcfg.beta1 ** step)
                vhat = v[k] / (1 - tcfg.beta2 ** step)
                params[k] = params[k] - tcfg.lr * mhat / (np.sqrt(vhat) + tcfg.adam_eps)
            total += loss * len(idx)
        result.train_losses.append(total / len(perm))
        if n_val:
            val = bce(forward(params, [graphs[i] for i in val_idx], cfg), labels[val_idx])
        else:
            val = result.train_losses[-1]
        result.val_losses.append(val)
        if val < best:
            best = val
            result.best_epoch = epoch
            result.params = {k: p.copy() for k, p in params.items()}
    return result


def accuracy(params: Params, graphs: Sequence[SceneGraph], labels: np.ndarray,
             cfg: NetConfig, threshold: float = 0.5) -> float:
    pred = forward(params, list(graphs), cfg) >= threshold
    return float(np.mean(pred == (np.asarray(labels) >= 0.5)))


# ---------------------------------------------------------------------------
# Scores and estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelevanceScores:
    predicate_scores: Mapping[str, float]
    action_scores: Mapping[str, float]

    def __post_init__(self) -> None:
        overlap = set(self.predicate_scores) & set(self.action_scores)
        if overlap:
            raise ValueError(f"names used for both a predicate and an action: {sorted(overlap)}")
        for name, s in {**self.predicate_scores, **self.action_scores}.items():
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"score for {name} outside [0, 1]: {s}")

    def flat(self) -> dict[str, float]:
        return {**self.predicate_scores, **self.action_scores}

    def kind(self, name: str) -> str:
        if name in self.predicate_scores:
            return "predicate"
        if name in self.action_scores:
            return "action"
        raise KeyError(name)

    def restricted(self, names: Iterable[str]) -> "RelevanceScores":
        keep = set(names)
        return RelevanceScores({k: v for k, v in self.predicate_scores.items() if k in keep},
                               {k: v for k, v in self.action_scores.items() if k in keep})

    def to_json(self) -> dict:
        return {"predicates": dict(sorted(self.predicate_scores.items())),
                "actions": dict(sorted(self.action_scores.items()))}


class FrequencyEstimator:
    """Add-one smoothed label frequencies; ignores the query problem."""

    def __init__(self, predicate_names: Sequence[str], action_names: Sequence[str],
                 examples: Sequence = ()):
        n = len(examples)
        self._scores = RelevanceScores(
            {p: (sum(ex.predicate_labels.get(p, 0) for ex in examples) + 1) / (n + 2)
             for p in predicate_names},
            {a: (sum(ex.action_labels.get(a, 0) for ex in examples) + 1) / (n + 2)
             for a in action_names})

    def scores(self, problem: Problem | None = None) -> RelevanceScores:
        return self._scores


def frequency_estimate(examples: Sequence, predicate_names: Sequence[str],
                       action_names: Sequence[str]) -> FrequencyEstimator:
    return FrequencyEstimator(predicate_names, action_names, examples)


class GATEstimator:
    """Two networks sharing the encoder definition: one for predicates, one for actions."""

    def __init__(self, vocab: Vocabulary, predicate_names: Sequence[str],
                 action_names: Sequence[str], pred_cfg: NetConfig, act_cfg: NetConfig,
                 pred_params: Params, act_params: Params, metrics: Mapping | None = None):
        check_shapes(pred_params, pred_cfg)
        check_shapes(act_params, act_cfg)
        if pred_cfg.n_outputs != len(predicate_names) or act_cfg.n_outputs != len(action_names):
            raise ShapeMismatch("output width does not match the universe")
        self.vocab = vocab
        self.predicate_names = tuple(predicate_names)
        self.action_names = tuple(action_names)
        self.pred_cfg, self.act_cfg = pred_cfg, act_cfg
        self.pred_params, self.act_params = pred_params, act_params
        self.metrics = dict(metrics or {})

    def scores(self, problem: Problem) -> RelevanceScores:
        g = encode(problem, self.vocab)
        up = forward(self.pred_params, g, self.pred_cfg)
        ua = forward(self.act_params, g, self.act_cfg)
        return RelevanceScores(dict(zip(self.predicate_names, map(float, up))),
                               dict(zip(self.action_names, map(float, ua))))

    # checkpoints -----------------------------------------------------------

    def to_json(self) -> dict:
        def dump(params, cfg):
            return {"config": cfg.__dict__,
                    "tensors": {k: {"shape": list(params[k].shape),
                                    "data": params[k].ravel().tolist()} for k in cfg.shapes()}}
        return {"version": CHECKPOINT_VERSION, "vocab": self.vocab.to_json(),
                "predicates": list(self.predicate_names), "actions": list(self.action_names),
                "predicate_net": dump(self.pred_params, self.pred_cfg),
                "action_net": dump(self.act_params, self.act_cfg),
                "metrics": self.metrics}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, data: Mapping) -> "GATEstimator":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")

        def load(blob):
            cfg = NetConfig(**blob["config"])
            params = {}
            for k, t in blob["tensors"].items():
                arr = np.asarray(t["data"], dtype=np.float64)
                if arr.size != math.prod(t["shape"]):
                    raise ShapeMismatch(f"{k}: data length does not match its shape")
                params[k] = arr.reshape(t["shape"])
            check_shapes(params, cfg)
            return cfg, params

        pcfg, pp = load(data["predicate_net"])
        acfg, ap = load(data["action_net"])
        return cls(Vocabulary.from_json(data["vocab"]), data["predicates"], data["actions"],
                   pcfg, acfg, pp, ap, data.get("metrics"))

    @classmethod
    def load(cls, path) -> "GATEstimator":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def train_estimator(examples: Sequence, predicates: Sequence[PredicateSchema],
                    predicate_names: Sequence[str], action_names: Sequence[str],
                    tcfg: TrainConfig = TrainConfig(), seed: int = 0, layers: int = 3,
                    hidden: int = 32, types: Sequence[str] = DEFAULT_TYPES) -> GATEstimator:
    """Fit the predicate and action networks on labeled examples."""
    vocab = Vocabulary.from_predicates(predicates, types)
    graphs = [encode(ex.problem, vocab) for ex in examples]
    yp = np.array([[ex.predicate_labels[p] for p in predicate_names] for ex in examples], float)
    ya = np.array([[ex.action_labels[a] for a in action_names] for ex in examples], float)
    common = dict(n_types=len(vocab.types), node_bool_dim=vocab.node_bool_dim,
                  edge_dim=vocab.edge_dim, layers=layers, hidden=hidden)
    pcfg = NetConfig(n_outputs=len(predicate_names), **common)
    acfg = NetConfig(n_outputs=len(action_names), **common)
    rp = train(graphs, yp, pcfg, tcfg, seed)
    ra = train(graphs, ya, acfg, tcfg, seed + 1)
    metrics = {"seed": seed,
               "predicate": _metrics(rp, graphs, yp, pcfg),
               "action": _metrics(ra, graphs, ya, acfg)}
    return GATEstimator(vocab, predicate_names, action_names, pcfg, acfg,
                        rp.params, ra.params, metrics)


def _metrics(res: TrainResult, graphs, labels, cfg) -> dict:
    idx = list(res.val_indices)
    held = accuracy(res.params, [graphs[i] for i in idx], labels[idx], cfg) if idx else None
    return {"train_loss": res.train_losses, "val_loss": res.val_losses,
            "best_epoch": res.best_epoch, "heldout_accuracy": held}
