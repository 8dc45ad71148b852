"""ConceptNet dump ingestion and commonsense concept graphs.

A dump is the tab-separated ConceptNet assertion CSV::

    /a/[...]<TAB>/r/AtLocation<TAB>/c/en/book<TAB>/c/en/shelf/n<TAB>{json}

Only English-to-English assertions survive parsing. Graphs store raw
directed edge counts between concepts (``counts``) and the row-normalised
adjacency used by the concept encoder (``adjacency``).
"""
import dataclasses
import gzip
import json
import logging
import os
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .engine.serialize import atomic_write_text, load_tensors, save_tensors
from .errors import ConfigError, ParseError

log = logging.getLogger(__name__)

RELATION_CATEGORIES = {
    "Spatial": ("AtLocation", "LocatedNear"),
    "Temporal": ("HasSubevent", "HasFirstSubevent", "HasLastSubevent", "HasPrerequisite"),
    "Functional": ("UsedFor",),
    "Causal": ("Causes",),
    "Motivation": ("MotivatedByGoal", "ObstructedBy"),
    "Other": ("CreatedBy", "MadeOf"),
    "Physical": ("HasA", "HasProperty", "Antonym", "SimilarTo"),
}

SPATIAL = frozenset(RELATION_CATEGORIES["Spatial"])
TEMPORAL = frozenset(RELATION_CATEGORIES["Temporal"])
FILTERED = frozenset(r for rels in RELATION_CATEGORIES.values() for r in rels)

RELATION_SETS = {
    "S": SPATIAL,
    "T": TEMPORAL,
    "ST": SPATIAL | TEMPORAL,
    "F": FILTERED,
    "F-ST": FILTERED - SPATIAL - TEMPORAL,
    "All": None,
}

VERB_RELATIONS = frozenset({"UsedFor", "CapableOf", "Causes", "MotivatedByGoal"})


class Assertion(NamedTuple):
    relation: str
    start: str
    end: str
    language: str = "en"


def normalize_token(text):
    return "_".join(text.strip().lower().split())


def resolve_relation_set(spec):
    """Map a set name or explicit iterable of relations to a frozenset.

    Returns ``None`` for "All" (no filtering).
    """
    if isinstance(spec, str):
        if spec in RELATION_SETS:
            return RELATION_SETS[spec]
        if "," in spec:
            return frozenset(s.strip() for s in spec.split(",") if s.strip())
        raise ConfigError(f"unknown relation set {spec!r}; expected one of {sorted(RELATION_SETS)}")
    return frozenset(spec)


def relation_set_name(spec):
    if isinstance(spec, str):
        return spec
    return ",".join(sorted(spec))


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _concept(uri):
    """Split ``/c/<lang>/<term>[/...]`` into (lang, term); None if not a concept."""
    segs = uri.split("/")
    if len(segs) < 4 or segs[0] != "" or segs[1] != "c" or not segs[2] or not segs[3]:
        return None
    return segs[2], normalize_token(segs[3])


def parse_assertions(stream, stats=None):
    """Parse an assertion dump from a binary (or text) line iterable.

    ``stats``, when given, is a dict updated with ``lines``, ``kept``,
    ``non_english`` and ``non_concept`` counters.
    """
    counts = {"lines": 0, "kept": 0, "non_english": 0, "non_concept": 0}
    out = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        counts["lines"] += 1
        fields = line.split("\t")
        if len(fields) < 5:
            raise ParseError(f"expected at least 5 tab-separated fields, got {len(fields)}", line_no)
        rel_uri, start_uri, end_uri = fields[1], fields[2], fields[3]
        if not rel_uri.startswith("/r/") or len(rel_uri) <= 3:
            raise ParseError(f"malformed relation URI {rel_uri!r}", line_no)
        start, end = _concept(start_uri), _concept(end_uri)
        if start is None or end is None:
            counts["non_concept"] += 1
            continue
        if start[0] != "en" or end[0] != "en":
            counts["non_english"] += 1
            continue
        out.append(Assertion(rel_uri[3:], start[1], end[1], "en"))
        counts["kept"] += 1
    if counts["non_concept"]:
        log.warning("skipped %d assertions with non-concept endpoints", counts["non_concept"])
    if stats is not None:
        stats.update(counts)
    return out


def open_dump(path):
    """Open a dump for binary line iteration, transparently gunzipping."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_dump(path, stats=None):
    with open_dump(path) as fh:
        return parse_assertions(fh, stats)


def filter_relations(assertions, relation_set):
    allowed = resolve_relation_set(relation_set)
    if allowed is None:
        return list(assertions)
    return [a for a in assertions if a.relation in allowed]


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConceptGraph:
    concepts: tuple
    counts: np.ndarray
    adjacency: Optional[np.ndarray] = None
    relations: tuple = ()
    relational_counts: Optional[np.ndarray] = None
    relational_adjacency: Optional[np.ndarray] = None
    relation_set: str = "All"

    @property
    def n_concepts(self):
        return len(self.concepts)

    def index(self, token):
        return self.concepts.index(token)


def build_seed_graph(assertions, seeds, relational=False, relation_set="All"):
    """Count directed edges between seed concepts.

    ``counts[i, j]`` is the number of assertions from ``seeds[i]`` to
    ``seeds[j]``; self-edges and edges touching non-seeds are dropped. With
    ``relational`` a per-relation stack is kept for relations that occur.
    """
    seeds = tuple(normalize_token(s) for s in seeds)
    if len(set(seeds)) != len(seeds):
        dup = sorted({s for s in seeds if seeds.count(s) > 1})
        raise ConfigError(f"duplicate seed concepts: {dup}")
    index = {s: i for i, s in enumerate(seeds)}
    n = len(seeds)
    counts = np.zeros((n, n), dtype=np.int64)
    per_rel = {}
    for a in assertions:
        i, j = index.get(a.start), index.get(a.end)
        if i is None or j is None or i == j:
            continue
        counts[i, j] += 1
        if relational:
            per_rel.setdefault(a.relation, []).append((i, j))
    rels = tuple(sorted(per_rel))
    stack = None
    if relational:
        stack = np.zeros((len(rels), n, n), dtype=np.int64)
        for r, rel in enumerate(rels):
            for i, j in per_rel[rel]:
                stack[r, i, j] += 1
    return ConceptGraph(concepts=seeds, counts=counts, relations=rels,
                        relational_counts=stack, relation_set=relation_set_name(relation_set))


def row_normalize(counts):
    """``D^-1 G`` with a self-loop on every zero-degree row."""
    counts = np.asarray(counts, dtype=np.float64)
    deg = counts.sum(axis=1)
    isolated = deg == 0
    a = counts / np.where(isolated, 1.0, deg)[:, None]
    idx = np.flatnonzero(isolated)
    a[idx, idx] = 1.0
    return a


def normalize_adjacency(graph):
    rel_adj = None
    if graph.relational_counts is not None:
        rel_adj = np.stack([row_normalize(c) for c in graph.relational_counts]) \
            if len(graph.relations) else np.zeros((0,) + graph.counts.shape)
    return dataclasses.replace(graph, adjacency=row_normalize(graph.counts),
                               relational_adjacency=rel_adj)


def expand_one_hop(assertions, seeds, verb_relations=VERB_RELATIONS, relational=False,
                   relation_set="All"):
    """Seed graph grown by concepts one verb-relation edge from any seed.

    Neighbours are taken in both edge directions and appended after the
    seeds in alphabetical order.
    """
    verbs = frozenset(verb_relations)
    if not verbs:
        raise ConfigError("expand_one_hop needs at least one verb relation")
    seeds = tuple(normalize_token(s) for s in seeds)
    seed_set = set(seeds)
    extra = set()
    for a in assertions:
        if a.relation not in verbs:
            continue
        if a.start in seed_set:
            extra.add(a.end)
        if a.end in seed_set:
            extra.add(a.start)
    nodes = seeds + tuple(sorted(extra - seed_set))
    return build_seed_graph(assertions, nodes, relational=relational, relation_set=relation_set)


# --------------------------------------------------------------------------
# graph files
# --------------------------------------------------------------------------

def _sidecar(path):
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".bin"


def save_graph(graph, path, config=None):
    """Write the JSON manifest at ``path`` and matrices to ``<stem>.bin``."""
    if graph.adjacency is None:
        graph = normalize_adjacency(graph)
    tensors = {"G_C": graph.counts, "A": graph.adjacency}
    if graph.relational_counts is not None:
        for r, rel in enumerate(graph.relations):
            tensors[f"G_r/{rel}"] = graph.relational_counts[r]
            tensors[f"A_r/{rel}"] = graph.relational_adjacency[r]
    sidecar = _sidecar(path)
    save_tensors(sidecar, tensors)
    manifest = {
        "concepts": list(graph.concepts),
        "relation_set": graph.relation_set,
        "relations": list(graph.relations),
        "relational": graph.relational_counts is not None,
        "matrices": os.path.basename(sidecar),
        "config": config or {},
    }
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_graph(path):
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    sidecar = os.path.join(os.path.dirname(os.path.abspath(path)), manifest["matrices"])
    mats = load_tensors(sidecar)
    concepts = tuple(manifest["concepts"])
    n = len(concepts)
    counts = np.rint(mats["G_C"]).astype(np.int64).reshape(n, n)
    rels = tuple(manifest.get("relations", ()))
    rel_counts = rel_adj = None
    if manifest.get("relational"):
        rel_counts = np.zeros((len(rels), n, n), dtype=np.int64)
        rel_adj = np.zeros((len(rels), n, n))
        for r, rel in enumerate(rels):
            rel_counts[r] = np.rint(mats[f"G_r/{rel}"]).astype(np.int64)
            rel_adj[r] = mats[f"A_r/{rel}"]
    return ConceptGraph(concepts=concepts, counts=counts, adjacency=mats["A"].reshape(n, n),
                        relations=rels, relational_counts=rel_counts,
                        relational_adjacency=rel_adj,
                        relation_set=manifest.get("relation_set", "All"))
