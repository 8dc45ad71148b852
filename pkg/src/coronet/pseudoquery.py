"""Pseudo-query generation from object detections, vocabulary, seed concepts."""
import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ContractError, EmptyQueryError, ParseError, ValidationError
from .kgraph import normalize_token
from .proposal import MomentSpan

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"


class Detection(NamedTuple):
    frame_index: int
    label: str
    confidence: float


@dataclass(frozen=True)
class PseudoQuery:
    tokens: tuple
    span: MomentSpan

    def __post_init__(self):
        if not self.tokens:
            raise ValidationError("pseudo-query needs at least one token")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValidationError(f"pseudo-query tokens must be distinct: {self.tokens}")


class Vocabulary:
    """Token <-> id map with 0 = PAD and 1 = UNK reserved."""

    def __init__(self, tokens=()):
        self.itos = [PAD_TOKEN, UNK_TOKEN]
        self.stoi = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for t in tokens:
            self.add(t)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def from_corpus(cls, queries):
        return cls(sorted({t for q in queries for t in q.tokens}))

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi and self.stoi[token] > UNK

    @property
    def tokens(self):
        return self.itos[2:]

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids):
        for i in ids:
            if not 0 <= i < len(self.itos):
                raise ContractError(f"token id {i} outside vocabulary of size {len(self.itos)}")
        return [self.itos[i] for i in ids]


def top_k_objects(detections, span, k, n_frames):
    """Top-k labels by max confidence among frames whose centre lies in ``span``.

    Ties break alphabetically; the returned order is score-descending.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    best = {}
    for det in detections:
        if span.contains_frame(det.frame_index, n_frames):
            prev = best.get(det.label)
            if prev is None or det.confidence > prev:
                best[det.label] = det.confidence
    if not best:
        raise EmptyQueryError(f"no detections inside span ({span.t_s:.3f}, {span.t_e:.3f})")
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return PseudoQuery(tuple(label for label, _ in ranked[:k]), span)


def select_seed_concepts(queries, n_concepts):
    """The ``n_concepts`` most frequent tokens, ties alphabetical."""
    counts = Counter(t for q in queries for t in (q.tokens if hasattr(q, "tokens") else q))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [t for t, _ in ranked[:n_concepts]]


_PUNCT = re.compile(r"[^\w\s]")


def simplify_query(text, noun_lexicon, k=5):
    """Keep lexicon nouns from a free-text query, in text order, deduplicated.

    Stands in for a part-of-speech tagger; ``noun_lexicon`` is normally the
    training vocabulary's token set.
    """
    words = _PUNCT.sub(" ", text.lower()).split()
    lexicon = set(noun_lexicon)
    out = []
    i = 0
    while i < len(words) and len(out) < k:
        # prefer a two-word lexicon entry (e.g. "coffee table" -> coffee_table)
        if i + 1 < len(words) and f"{words[i]}_{words[i + 1]}" in lexicon:
            tok, i = f"{words[i]}_{words[i + 1]}", i + 2
        else:
            tok, i = words[i], i + 1
        if tok in lexicon and tok not in out:
            out.append(tok)
    return out


def read_detections(path):
    """Detection manifest: JSON lines of {video_id, frame_index, label, confidence}.

    Returns a dict video_id -> list of Detection.
    """
    per_video = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: {exc}", line_no) from None
            if "header" in row:
                continue
            try:
                det = Detection(int(row["frame_index"]), normalize_token(row["label"]),
                                float(row["confidence"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: bad detection row ({exc})", line_no) from None
            per_video.setdefault(row.get("video_id", ""), []).append(det)
    return per_video


def queries_to_jsonl(rows, header=None):
    lines = []
    if header is not None:
        lines.append(json.dumps({"header": header}, sort_keys=True))
    for video_id, q in rows:
        lines.append(json.dumps({"video_id": video_id, "tokens": list(q.tokens),
                                 "t_s": q.span.t_s, "t_e": q.span.t_e}, sort_keys=True))
    return "\n".join(lines) + "\n"


def read_query_corpus(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "header" in row:
                continue
            try:
                out.append(PseudoQuery(tuple(row["tokens"]), MomentSpan(row["t_s"], row["t_e"])))
            except KeyError as exc:
                raise ParseError(f"{path}: missing field {exc}", line_no) from None
    return out
