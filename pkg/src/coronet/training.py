"""Pseudo-supervised training: pair generation, losses, optimisation loop."""
import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .engine import (OptimizerState, Tensor, adam_step, add, backward, clip_grad_norm, log, mul,
                     recording, scale, sgd_step, smooth_l1, sum_all, take_rows)
from .engine.serialize import atomic_write_text
from .errors import ConfigError, ContractError, EmptyQueryError, TrainingError
from .evaluation import aggregate, temporal_iou
from .model import (ModelConfig, concept_bank, encode_concepts, forward, init_params,
                    save_checkpoint)
from .proposal import ProposalConfig, propose, read_features
from .pseudoquery import Vocabulary, read_detections, top_k_objects

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class TrainConfig:
    lam: float = 0.7
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    clip_norm: float = 0.0
    lr_schedule: str = "constant"
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be non-negative (0 disables clipping)")

    def lr_at(self, epoch):
        """Learning rate used during 1-based ``epoch``."""
        if self.lr_schedule == "cosine" and self.epochs > 1:
            return 0.5 * self.lr * (1.0 + math.cos(math.pi * (epoch - 1) / self.epochs))
        return self.lr

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"lambda", "epochs", "batch_size", "lr", "seed", "optimizer", "clip_norm",
                 "lr_schedule", "proposal", "model"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        try:
            proposal = ProposalConfig(**d.pop("proposal", {}))
            model = ModelConfig(**d.pop("model", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(proposal=proposal, model=model, **d)

    def to_dict(self):
        return {"lambda": self.lam, "epochs": self.epochs, "batch_size": self.batch_size,
                "lr": self.lr, "seed": self.seed, "optimizer": self.optimizer,
                "clip_norm": self.clip_norm, "lr_schedule": self.lr_schedule,
                "proposal": self.proposal.to_dict(), "model": self.model.to_dict()}


def load_config(path, seed=None):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if seed is not None and "seed" not in raw:
        raw["seed"] = seed
    return TrainConfig.from_dict(raw)


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------

class VideoEntry(NamedTuple):
    video_id: str
    features_path: str
    detections_path: str
    eval_annotations: list


def load_dataset(path):
    """Read a dataset manifest; relative file paths resolve against its folder.

    A directory is taken to mean its ``dataset.json``.
    """
    if os.path.isdir(path):
        path = os.path.join(path, "dataset.json")
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    rows = raw["videos"] if isinstance(raw, dict) else raw
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for row in rows:
        try:
            out.append(VideoEntry(str(row["video_id"]),
                                  os.path.join(base, row["features_path"]),
                                  os.path.join(base, row["detections_path"]),
                                  list(row.get("eval_annotations", []))))
        except KeyError as exc:
            raise ConfigError(f"{path}: manifest entry missing {exc}") from None
    return out


def load_eval_videos(entries):
    for e in entries:
        yield e.video_id, read_features(e.features_path, e.video_id), e.eval_annotations


@dataclass
class TrainingPair:
    video_id: str
    features: object
    query: object
    target: object
    mask: np.ndarray

    def __post_init__(self):
        if self.mask.sum() == 0:
            raise ContractError(f"{self.video_id}: target span covers no frame centre")


def generate_pairs(entries, proposal_cfg, k, seed=None):
    """Proposal spans and their pseudo-queries for every video.

    Spans without any detection are dropped; one warning per affected video.
    """
    pairs = []
    for e in entries:
        feats = read_features(e.features_path, e.video_id)
        dets = read_detections(e.detections_path)
        dets = dets.get(e.video_id, []) if e.video_id in dets else sum(dets.values(), [])
        n = feats.n_frames
        dropped = 0
        for span in propose(feats, proposal_cfg, seed):
            try:
                q = top_k_objects(dets, span, k, n)
            except EmptyQueryError:
                dropped += 1
                continue
            mask = span.frame_mask(n)
            if mask.sum() == 0:
                dropped += 1
                continue
            pairs.append(TrainingPair(e.video_id, feats, q, span, mask))
        if dropped:
            logger.warning("%s: dropped %d proposal(s) without detections", e.video_id, dropped)
    return pairs


def pairs_as_annotations(pairs):
    """Training pairs re-expressed as eval videos (query text = pseudo-query)."""
    grouped = {}
    for p in pairs:
        _, _, anns = grouped.setdefault(p.video_id, (p.video_id, p.features, []))
        anns.append({"query_text": " ".join(p.query.tokens), "t_s": p.target.t_s,
                     "t_e": p.target.t_e})
    return list(grouped.values())


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def loss_ta(attention, mask):
    """Negative mean log-attention over in-span frames."""
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    total = mask.sum()
    if total <= 0:
        raise ContractError("temporal attention loss needs a non-empty mask")
    idx = np.flatnonzero(mask)
    flat = attention if attention.ndim == 2 else Tensor(attention.data[:, None])
    picked = take_rows(flat, idx)
    weights = Tensor(mask[idx].reshape(-1, 1))
    return scale(sum_all(mul(log(picked), weights)), -1.0 / total)


def loss_treg(target, raw):
    return smooth_l1(raw, np.array([[target.t_s, target.t_e]]))


def pair_loss(result, pair, lam):
    treg = loss_treg(pair.target, result.raw_span)
    if lam == 0:
        return treg
    return add(treg, scale(loss_ta(result.attention, pair.mask), lam))


# --------------------------------------------------------------------------
# loop
# --------------------------------------------------------------------------

class TrainResult(NamedTuple):
    params: object
    vocab: Vocabulary
    history: list
    pairs: list
    meta: dict


def predict_pairs(params, cfg, vocab, graph, pairs):
    bank = concept_bank(params, graph)
    concepts = encode_concepts(bank, params, cfg) if cfg.enhancement_mode != "none" else None
    spans = []
    for p in pairs:
        spans.append(forward(p.features, vocab.encode(p.query.tokens), bank, params, cfg,
                             concepts=concepts).span)
    return spans


def train(cfg, entries=None, graph=None, out_dir=None, pairs=None, progress=None):
    """Fit the localizer on pseudo-pairs.

    Writes ``checkpoint.crnt`` (+ ``.json``) and ``metrics.jsonl`` under
    ``out_dir`` after every epoch when given.
    """
    if graph is None:
        raise ConfigError("training needs a concept graph")
    if pairs is None:
        pairs = generate_pairs(entries, cfg.proposal, cfg.model.k, cfg.seed)
    if not pairs:
        raise TrainingError("no training pairs could be generated")
    mc = cfg.model
    vocab = Vocabulary.from_corpus(p.query for p in pairs)
    d_in = pairs[0].features.matrix.shape[1]
    rng = np.random.default_rng(cfg.seed)
    params = init_params(mc, len(vocab), d_in, graph.n_concepts, graph.relations, rng)
    bank = concept_bank(params, graph)
    ids = [vocab.encode(p.query.tokens) for p in pairs]
    state = OptimizerState(lr=cfg.lr)
    plist = list(params.values())
    meta = {"model": mc.to_dict(), "train": cfg.to_dict(), "vocab": vocab.tokens,
            "concepts": list(graph.concepts), "relations": list(graph.relations),
            "relation_set": graph.relation_set, "d_in": d_in, "n_pairs": len(pairs)}
    history = []
    header = json.dumps({"header": {"config": cfg.to_dict(), "n_pairs": len(pairs)}},
                        sort_keys=True)
    n = len(pairs)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        state.lr = cfg.lr_at(epoch)
        loss_sum = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size), start=1):
            batch = order[start:start + cfg.batch_size]
            with recording() as tape:
                concepts = encode_concepts(bank, params, mc) \
                    if mc.enhancement_mode != "none" else None
                total = None
                for i in batch:
                    res = forward(pairs[i].features, ids[i], bank, params, mc, concepts)
                    li = pair_loss(res, pairs[i], cfg.lam)
                    total = li if total is None else add(total, li)
                loss = scale(total, 1.0 / len(batch))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            backward(tape, loss, plist)
            if cfg.clip_norm:
                clip_grad_norm(params, cfg.clip_norm)
            if cfg.optimizer == "adam":
                adam_step(params, state)
            else:
                sgd_step(params, state.lr)
            loss_sum += value * len(batch)
        spans = predict_pairs(params, mc, vocab, graph, pairs)
        ious = [temporal_iou(s, p.target) for s, p in zip(spans, pairs)]
        report = aggregate(ious)
        row = {"epoch": epoch, "mean_loss": loss_sum / n, "train_mIoU": report.miou / 100.0,
               "train_R@0.7": report.r_at[0.7] / 100.0}
        history.append(row)
        if progress is not None:
            progress(row)
        if out_dir is not None:
            write_outputs(out_dir, params, dict(meta, epoch=epoch), header, history)
    if out_dir is not None and cfg.epochs == 0:
        write_outputs(out_dir, params, dict(meta, epoch=0), header, history)
    return TrainResult(params, vocab, history, pairs, meta)


def write_outputs(out_dir, params, meta, header, history):
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(os.path.join(out_dir, "checkpoint.crnt"), params, meta)
    lines = [header] + [json.dumps(r, sort_keys=True) for r in history]
    atomic_write_text(os.path.join(out_dir, "metrics.jsonl"), "\n".join(lines) + "\n")
