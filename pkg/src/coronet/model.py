"""Localizer network: encoders, concept encoder, enhancement, fusion, regression.

Every function here builds on :mod:`coronet.engine` ops, so the same code
path serves training (under a tape) and inference (no tape).
"""
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .engine import (Tensor, add, concat, gru, matmul, mul, relu, scale, sigmoid,
                     softmax_rows, take_rows, tanh, transpose)
from .engine.serialize import atomic_write_text, load_tensors, save_tensors
from .errors import ConfigError, ContractError, ShapeError
from .kgraph import ConceptGraph
from .proposal import FrameFeatures, MomentSpan
from .pseudoquery import PAD, UNK

ENHANCEMENT_MODES = ("V+Q", "V", "Q", "VQ-shared", "concat", "none")
FUSION_STAGES = ("pre", "post")
GRAPH_MODES = ("weighted", "relational")
MASK_VALUE = -1e9


@dataclass
class ModelConfig:
    d: int = 64
    d_emb: int = 32
    L: int = 2
    enhancement_mode: str = "V+Q"
    fusion_stage: str = "pre"
    graph_mode: str = "weighted"
    k: int = 5
    T: int = 32

    def __post_init__(self):
        if self.d <= 0 or self.d % 2:
            raise ConfigError(f"d must be a positive even integer, got {self.d}")
        if self.d_emb <= 0 or self.k < 1:
            raise ConfigError("d_emb and k must be positive")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.enhancement_mode not in ENHANCEMENT_MODES:
            raise ConfigError(f"enhancement_mode must be one of {ENHANCEMENT_MODES}")
        if self.fusion_stage not in FUSION_STAGES:
            raise ConfigError(f"fusion_stage must be one of {FUSION_STAGES}")
        if self.graph_mode not in GRAPH_MODES:
            raise ConfigError(f"graph_mode must be one of {GRAPH_MODES}")
        if self.fusion_stage == "post" and self.enhancement_mode in ("Q", "concat"):
            raise ConfigError(f"enhancement_mode {self.enhancement_mode!r} cannot be "
                              "combined with post-fusion enhancement")

    def to_dict(self):
        return asdict(self)


class ModelParams(dict):
    """Ordered name -> Tensor mapping of every trainable matrix."""

    def arrays(self):
        return {name: t.data for name, t in self.items()}

    @classmethod
    def from_arrays(cls, arrays):
        return cls((name, Tensor(arr, requires_grad=True, name=name))
                   for name, arr in arrays.items())

    def copy(self):
        return ModelParams.from_arrays({n: a.copy() for n, a in self.arrays().items()})

    def zero_grad(self):
        for t in self.values():
            t.grad = None

    def triple(self, prefix):
        return self[f"{prefix}.W_Q"], self[f"{prefix}.W_K"], self[f"{prefix}.W_V"]

    @property
    def n_scalars(self):
        return sum(t.data.size for t in self.values())


def init_params(cfg, vocab_size, d_in, n_concepts, relations=(), seed=0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation, seeded."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d, h = cfg.d, cfg.d // 2
    spec = [("query.embedding", (vocab_size, cfg.d_emb), cfg.d_emb),
            ("video.Wx", (d_in, 3 * d), d_in),
            ("video.Uh", (d, 3 * d), d),
            ("video.b", (3 * d,), d)]
    for direction in ("fwd", "bwd"):
        spec += [(f"query.{direction}.Wx", (cfg.d_emb, 3 * h), cfg.d_emb),
                 (f"query.{direction}.Uh", (h, 3 * h), h),
                 (f"query.{direction}.b", (3 * h,), h)]
    spec.append(("concept.C0", (n_concepts, d), d))
    if cfg.graph_mode == "weighted":
        spec += [(f"gcn.W{l}", (d, d), d) for l in range(cfg.L)]
    else:
        if not relations:
            raise ConfigError("relational graph mode needs at least one relation")
        spec += [(f"rgcn.W{l}.{r}", (d, d), d) for l in range(cfg.L) for r in relations]
    for side in ("video", "query"):
        spec += [(f"cem.{side}.{m}", (d, d), d) for m in ("W_Q", "W_K", "W_V")]
    spec += [("fuse.q_pool", (d, 1), d), ("fuse.W_f", (d, d), d),
             ("fuse.v_pool", (d, 1), d), ("fuse.W_g", (d, d), d),
             ("fuse.W_q", (d, d), d), ("fuse.W_k", (d, d), d), ("fuse.W_v", (d, d), d),
             ("reg.W_1", (d, 1), d), ("reg.b_1", (1,), d),
             ("reg.W_2", (2, d), d), ("reg.b_2", (2,), d)]
    params = ModelParams()
    for name, shape, fan_in in spec:
        bound = 1.0 / math.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True,
                              name=name)
    return params


@dataclass
class ConceptBank:
    C0: Tensor
    graph: ConceptGraph

    def __post_init__(self):
        if self.C0.shape[0] != self.graph.n_concepts:
            raise ShapeError(f"concept bank has {self.C0.shape[0]} rows but the graph "
                             f"has {self.graph.n_concepts} concepts")


def concept_bank(params, graph):
    return ConceptBank(params["concept.C0"], graph)


# --------------------------------------------------------------------------
# encoders
# --------------------------------------------------------------------------

def encode_video(features, params):
    x = features.matrix if isinstance(features, FrameFeatures) else features
    x = x if isinstance(x, Tensor) else Tensor(x)
    wx = params["video.Wx"]
    if x.shape[1] != wx.shape[0]:
        raise ShapeError(f"video features have dim {x.shape[1]}, encoder expects {wx.shape[0]}")
    return gru(x, wx, params["video.Uh"], params["video.b"])


def query_mask(n_tokens, k):
    mask = np.zeros(k)
    mask[n_tokens:] = MASK_VALUE
    return mask


def encode_query(token_ids, params, k):
    """Bi-directional GRU over the real tokens, zero rows for PAD up to ``k``.

    Returns the k x d query features and the additive PAD mask.
    """
    ids = [int(i) for i in token_ids if int(i) != PAD] or [UNK]
    table = params["query.embedding"]
    if len(ids) > k:
        raise ContractError(f"query has {len(ids)} tokens, more than k={k}")
    bad = [i for i in ids if not 0 <= i < table.shape[0]]
    if bad:
        raise ContractError(f"token ids {bad} outside vocabulary of size {table.shape[0]}")
    emb = take_rows(table, ids)
    fwd = gru(emb, params["query.fwd.Wx"], params["query.fwd.Uh"], params["query.fwd.b"])
    bwd = gru(emb, params["query.bwd.Wx"], params["query.bwd.Uh"], params["query.bwd.b"],
              reverse=True)
    q = concat([fwd, bwd], axis=1)
    if len(ids) < k:
        q = concat([q, Tensor(np.zeros((k - len(ids), q.shape[1])))], axis=0)
    return q, query_mask(len(ids), k)


def gcn_layers(adjacency, feats, weights):
    h = feats
    a = Tensor(adjacency)
    for l, w in enumerate(weights):
        h = matmul(matmul(a, h), w)
        if l < len(weights) - 1:
            h = relu(h)
    return h


def gcn_encode(bank, params, L):
    if bank.graph.adjacency is None:
        raise ConfigError("concept graph has no normalised adjacency")
    return gcn_layers(bank.graph.adjacency, bank.C0, [params[f"gcn.W{l}"] for l in range(L)])


def rgcn_layers(adjacencies, feats, weights):
    """``weights[l][r]`` pairs with ``adjacencies[r]``."""
    h = feats
    adj = [Tensor(a) for a in adjacencies]
    for l, per_rel in enumerate(weights):
        total = None
        for a, w in zip(adj, per_rel):
            term = matmul(matmul(a, h), w)
            total = term if total is None else add(total, term)
        h = total
        if l < len(weights) - 1:
            h = relu(h)
    return h


def rgcn_encode(bank, params, L):
    g = bank.graph
    if g.relational_adjacency is None or not len(g.relations):
        raise ConfigError("relational encoding requested but the graph has no relation stack")
    weights = [[params[f"rgcn.W{l}.{r}"] for r in g.relations] for l in range(L)]
    return rgcn_layers(g.relational_adjacency, bank.C0, weights)


def encode_concepts(bank, params, cfg):
    if cfg.graph_mode == "relational":
        return rgcn_encode(bank, params, cfg.L)
    return gcn_encode(bank, params, cfg.L)


# --------------------------------------------------------------------------
# attention blocks
# --------------------------------------------------------------------------

def attend(queries, keys, values, w_q, w_k, w_v, mask=None):
    """``softmax(queries W_q (keys W_k)^T / sqrt(d)) values W_v`` and the weights."""
    d = w_q.shape[1]
    logits = scale(matmul(matmul(queries, w_q), transpose(matmul(keys, w_k))), 1.0 / math.sqrt(d))
    weights = softmax_rows(logits, None if mask is None else mask[None, :])
    return matmul(weights, matmul(values, w_v)), weights


def enhance(source, concepts, triple, return_attention=False):
    """Residual commonsense enhancement of ``source`` rows by concept vectors."""
    w_q, w_k, w_v = triple
    if source.shape[1] != w_q.shape[0] or concepts.shape[1] != w_k.shape[0]:
        raise ShapeError(f"enhance: source {source.shape} / concepts {concepts.shape} "
                         f"do not match projections {w_q.shape}")
    ctx, weights = attend(source, concepts, concepts, w_q, w_k, w_v)
    out = add(source, ctx)
    return (out, weights) if return_attention else out


def _pool(feats, score_vec, mask=None):
    scores = transpose(matmul(feats, score_vec))
    weights = softmax_rows(scores, None if mask is None else mask[None, :])
    return matmul(weights, feats)


def cross_modal_fuse(v_c, q_c, params, mask=None):
    """Query-guided video filter, video-guided query filter, then cross-attention."""
    q_bar = _pool(q_c, params["fuse.q_pool"], mask)
    v1 = add(v_c, mul(v_c, tanh(matmul(q_bar, params["fuse.W_f"]))))
    v_bar = _pool(v_c, params["fuse.v_pool"])
    q1 = add(q_c, mul(q_c, tanh(matmul(v_bar, params["fuse.W_g"]))))
    ctx, _ = attend(v1, q1, q1, params["fuse.W_q"], params["fuse.W_k"], params["fuse.W_v"], mask)
    return add(v1, ctx)


def clamp_span(raw):
    ts, te = (float(np.clip(v, 0.0, 1.0)) for v in np.asarray(raw).reshape(-1)[:2])
    return MomentSpan(ts, max(ts, te))


def regress_span(v_loc, params):
    """Per-frame sigmoid attention, attended pooling, linear start/end head.

    Returns (attention T x 1, raw 1 x 2 prediction, clamped MomentSpan).
    """
    att = sigmoid(add(matmul(v_loc, params["reg.W_1"]), params["reg.b_1"]))
    v_ta = matmul(transpose(att), v_loc)
    raw = add(matmul(v_ta, transpose(params["reg.W_2"])), params["reg.b_2"])
    return att, raw, clamp_span(raw.data)


class ForwardResult(NamedTuple):
    attention: Tensor
    raw_span: Tensor
    span: MomentSpan


def forward(features, query_ids, bank, params, cfg, concepts=None):
    """One localisation pass. ``concepts`` may carry pre-encoded concept rows."""
    mode, stage = cfg.enhancement_mode, cfg.fusion_stage
    if stage == "post" and mode in ("Q", "concat"):
        raise ConfigError(f"enhancement_mode {mode!r} cannot be combined with post-fusion")
    v = encode_video(features, params)
    q, mask = encode_query(query_ids, params, cfg.k)
    if mode != "none" and concepts is None:
        concepts = encode_concepts(bank, params, cfg)
    video_triple = params.triple("cem.video")
    query_triple = params.triple("cem.query")
    if stage == "pre":
        if mode in ("V+Q", "V", "VQ-shared"):
            v = enhance(v, concepts, video_triple)
        if mode in ("V+Q", "Q"):
            q = enhance(q, concepts, query_triple)
        elif mode == "VQ-shared":
            q = enhance(q, concepts, video_triple)
        elif mode == "concat":
            q = concat([q, concepts], axis=0)
            mask = np.concatenate([mask, np.zeros(concepts.shape[0])])
    v_loc = cross_modal_fuse(v, q, params, mask)
    if stage == "post" and mode != "none":
        v_loc = enhance(v_loc, concepts, video_triple)
    return ForwardResult(*regress_span(v_loc, params))


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def sidecar_path(path):
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".json"


def save_checkpoint(path, params, meta):
    """Tensors in CRNT format at ``path``, JSON metadata next to it."""
    save_tensors(path, params.arrays())
    atomic_write_text(sidecar_path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    params = ModelParams.from_arrays(load_tensors(path))
    with open(sidecar_path(path), encoding="utf-8") as fh:
        meta = json.load(fh)
    return params, meta
