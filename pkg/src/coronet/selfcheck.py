"""Finite-difference check of the whole localizer on a tiny instance."""
import numpy as np

from .engine import grad_check
from .kgraph import Assertion, build_seed_graph, normalize_adjacency
from .model import ModelConfig, concept_bank, forward, init_params
from .proposal import FrameFeatures, MomentSpan
from .pseudoquery import PseudoQuery
from .training import TrainingPair, pair_loss

TOY = {"T": 4, "k": 2, "n_concepts": 3, "d": 6, "d_emb": 4, "d_in": 5, "vocab": 4}

_TOY_EDGES = [("AtLocation", "cup", "table"), ("AtLocation", "cup", "shelf"),
              ("UsedFor", "table", "shelf"), ("HasA", "shelf", "cup"),
              ("AtLocation", "table", "shelf")]


def toy_graph(relational=False):
    asserts = [Assertion(r, s, e, "en") for r, s, e in _TOY_EDGES]
    return normalize_adjacency(build_seed_graph(asserts, ["cup", "table", "shelf"],
                                                relational=relational))


def toy_problem(seed=0, **model_overrides):
    """Params, objective closure and config for the toy instance."""
    rng = np.random.default_rng(seed)
    over = {"d": TOY["d"], "d_emb": TOY["d_emb"], "k": TOY["k"], "T": TOY["T"], "L": 2}
    over.update(model_overrides)
    cfg = ModelConfig(**over)
    graph = toy_graph(cfg.graph_mode == "relational")
    params = init_params(cfg, TOY["vocab"], TOY["d_in"], graph.n_concepts, graph.relations, rng)
    # U(-1, 1) instead of the fan-in init: keeps the attention logits away from
    # the uniform regime where gradients sink below the finite-difference noise
    for t in params.values():
        t.data = rng.uniform(-1.0, 1.0, size=t.shape)
    feats = FrameFeatures(rng.uniform(-1, 1, size=(TOY["T"], TOY["d_in"])), "toy")
    span = MomentSpan(0.25, 0.75)
    pair = TrainingPair("toy", feats, PseudoQuery(("cup", "table"), span), span,
                        span.frame_mask(TOY["T"]))
    ids = [2, 3]
    bank = concept_bank(params, graph)

    def objective():
        res = forward(feats, ids, bank, params, cfg)
        return pair_loss(res, pair, 0.7)

    return params, objective, cfg


def full_model_gradcheck(seed=0, h=1e-5, floor=1e-12, **model_overrides):
    params, objective, _ = toy_problem(seed, **model_overrides)
    return grad_check(objective, params, h, floor)

