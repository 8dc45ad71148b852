"""Temporal IoU metrics and the inference path over annotated videos."""
import csv
import io
import json
from dataclasses import dataclass, field

from .errors import ConfigError, ContractError
from .model import ModelConfig, concept_bank, encode_concepts, forward, load_checkpoint
from .proposal import MomentSpan
from .pseudoquery import UNK, Vocabulary, simplify_query

THRESHOLDS = (0.3, 0.5, 0.7)


def temporal_iou(p, g):
    """|p ∩ g| / |p ∪ g| for normalised spans.

    A zero-length span only scores (1.0) against an identical zero-length
    span; it is 0 against everything else.
    """
    if p.t_s == p.t_e or g.t_s == g.t_e:
        return 1.0 if (p.t_s, p.t_e) == (g.t_s, g.t_e) else 0.0
    inter = max(0.0, min(p.t_e, g.t_e) - max(p.t_s, g.t_s))
    union = max(p.t_e, g.t_e) - min(p.t_s, g.t_s)
    return inter / union


@dataclass
class EvalReport:
    r_at: dict
    miou: float
    n: int
    per_video: list = field(default_factory=list)

    def to_dict(self):
        return {"r_at": {f"{k:g}": v for k, v in self.r_at.items()},
                "miou": self.miou, "n": self.n, "per_video": self.per_video}

    def per_video_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["video_id", "query", "pred_t_s", "pred_t_e", "gt_t_s", "gt_t_e", "iou"])
        for row in self.per_video:
            writer.writerow([row["video_id"], row["query"], *row["pred"], *row["target"],
                             row["iou"]])
        return buf.getvalue()


def aggregate(ious, thresholds=THRESHOLDS):
    ious = [float(x) for x in ious]
    if not ious:
        raise ContractError("cannot aggregate an empty IoU list")
    n = len(ious)
    r_at = {float(k): 100.0 * sum(1 for x in ious if x >= k) / n for k in thresholds}
    return EvalReport(r_at=r_at, miou=100.0 * sum(ious) / n, n=n)


class Localizer:
    """Frozen parameters plus everything needed to run inference."""

    def __init__(self, params, cfg, vocab, graph):
        self.params = params
        self.cfg = cfg
        self.vocab = vocab
        self.graph = graph
        self.bank = concept_bank(params, graph)
        self._concepts = None

    @classmethod
    def from_checkpoint(cls, path, graph):
        params, meta = load_checkpoint(path)
        cfg = ModelConfig(**meta["model"])
        if list(graph.concepts) != list(meta["concepts"]):
            raise ConfigError("concept graph does not match the checkpoint's concept list")
        if list(graph.relations) != list(meta.get("relations", [])) and cfg.graph_mode == "relational":
            raise ConfigError("graph relation stack does not match the checkpoint")
        vocab = Vocabulary(meta["vocab"])
        if params["query.embedding"].shape[0] != len(vocab):
            raise ConfigError(f"checkpoint embedding has {params['query.embedding'].shape[0]} "
                              f"rows but its vocabulary has {len(vocab)} entries")
        return cls(params, cfg, vocab, graph)

    @property
    def concepts(self):
        if self._concepts is None and self.cfg.enhancement_mode != "none":
            self._concepts = encode_concepts(self.bank, self.params, self.cfg)
        return self._concepts

    def query_ids(self, text):
        tokens = simplify_query(text, self.vocab.tokens, self.cfg.k)
        return self.vocab.encode(tokens) or [UNK]

    def predict(self, features, ids):
        return forward(features, ids, self.bank, self.params, self.cfg,
                       concepts=self.concepts).span


def evaluate(localizer, videos, thresholds=THRESHOLDS, keep_rows=True):
    """Localise every eval annotation and aggregate.

    ``videos`` is an iterable of (video_id, FrameFeatures, annotations) with
    annotations being dicts holding ``query_text``, ``t_s``, ``t_e``.
    """
    videos = list(videos)
    queries = [a["query_text"] for _, _, anns in videos for a in anns]
    if not queries:
        raise ContractError("no evaluation annotations")
    lexicon = set(localizer.vocab.tokens)
    if not any(simplify_query(q, lexicon, localizer.cfg.k) for q in queries):
        raise ConfigError("vocabulary mismatch: no evaluation query contains a checkpoint token")
    d_in = localizer.params["video.Wx"].shape[0]
    ious, rows = [], []
    for video_id, feats, anns in videos:
        if feats.matrix.shape[1] != d_in:
            raise ConfigError(f"{video_id}: feature dim {feats.matrix.shape[1]} differs from "
                              f"checkpoint input dim {d_in}")
        for ann in anns:
            target = MomentSpan(float(ann["t_s"]), float(ann["t_e"]))
            pred = localizer.predict(feats, localizer.query_ids(ann["query_text"]))
            iou = temporal_iou(pred, target)
            ious.append(iou)
            if keep_rows:
                rows.append({"video_id": video_id, "query": ann["query_text"],
                             "pred": [pred.t_s, pred.t_e], "target": [target.t_s, target.t_e],
                             "iou": iou})
    report = aggregate(ious, thresholds)
    report.per_video = rows
    return report


def report_json(report, header=None):
    body = report.to_dict()
    if header is not None:
        body = {"header": header, **body}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"
