"""Grid runner: train + evaluate one cell per partial config, then tabulate."""
import json
import logging

from . import kgraph
from .evaluation import Localizer, evaluate
from .pseudoquery import select_seed_concepts
from .training import TrainConfig, deep_merge, generate_pairs, load_eval_videos, train

logger = logging.getLogger(__name__)

CELL_KEYS = ("relation_set", "n_concepts", "one_hop", "label")


def build_graph_for(assertions, pairs, relation_set, n_concepts, relational=False,
                    one_hop=False):
    """Seed graph over the most frequent pseudo-query objects of ``pairs``."""
    seeds = select_seed_concepts([p.query for p in pairs], n_concepts)
    if one_hop:
        allowed = kgraph.resolve_relation_set(relation_set)
        if allowed is not None:
            allowed = allowed | kgraph.VERB_RELATIONS
        pool = assertions if allowed is None else [a for a in assertions
                                                     if a.relation in allowed]
        g = kgraph.expand_one_hop(pool, seeds, relational=relational,
                                  relation_set=relation_set)
    else:
        g = kgraph.build_seed_graph(kgraph.filter_relations(assertions, relation_set), seeds,
                                    relational=relational, relation_set=relation_set)
    return kgraph.normalize_adjacency(g)


def cell_label(cell):
    if "label" in cell:
        return str(cell["label"])
    model = cell.get("model", {})
    parts = []
    if "enhancement_mode" in model or "fusion_stage" in model:
        parts.append(f"{model.get('enhancement_mode', 'V+Q')}/{model.get('fusion_stage', 'pre')}")
    if "graph_mode" in model:
        parts.append(model["graph_mode"])
    if "relation_set" in cell:
        parts.append(f"R={cell['relation_set']}")
    rest = {k: v for k, v in cell.items() if k not in ("model", "relation_set")}
    if rest:
        parts.append(json.dumps(rest, sort_keys=True))
    return " ".join(parts) or "base"


def run_cell(base, cell, entries, assertions, default_relation_set="F", n_concepts=300):
    """Train and evaluate one grid cell; returns a result row."""
    train_part = {k: v for k, v in cell.items() if k not in CELL_KEYS}
    cfg = TrainConfig.from_dict(deep_merge(base, train_part))
    rel_set = cell.get("relation_set", default_relation_set)
    pairs = generate_pairs(entries, cfg.proposal, cfg.model.k, cfg.seed)
    graph = build_graph_for(assertions, pairs, rel_set, cell.get("n_concepts", n_concepts),
                            relational=cfg.model.graph_mode == "relational",
                            one_hop=cell.get("one_hop", False))
    result = train(cfg, graph=graph, pairs=pairs)
    loc = Localizer(result.params, cfg.model, result.vocab, graph)
    report = evaluate(loc, load_eval_videos(entries), keep_rows=False)
    return {"label": cell_label(cell), "relation_set": kgraph.relation_set_name(rel_set),
            "n_concepts": graph.n_concepts, "n_pairs": len(pairs),
            "final_loss": result.history[-1]["mean_loss"] if result.history else None,
            "R@0.3": report.r_at[0.3], "R@0.5": report.r_at[0.5], "R@0.7": report.r_at[0.7],
            "mIoU": report.miou, "config": cfg.to_dict()}


def run_grid(base, grid, entries, assertions, default_relation_set="F", n_concepts=300,
             progress=None):
    rows = []
    for i, cell in enumerate(grid):
        if not isinstance(cell, dict):
            raise TypeError(f"grid cell {i} is not a JSON object")
        row = run_cell(base, cell, entries, assertions, default_relation_set, n_concepts)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def format_table(rows):
    """Plain-text comparison table, one line per configuration."""
    headers = ["config", "R", "n_C", "R@0.3", "R@0.5", "R@0.7", "mIoU"]
    body = [[r["label"], r["relation_set"], str(r["n_concepts"]),
             *(f"{r[k]:.2f}" for k in ("R@0.3", "R@0.5", "R@0.7", "mIoU"))] for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(headers)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i < 2 else c.rjust(w)
                                  for i, (c, w) in enumerate(zip(cells, widths)))
    lines = [fmt(headers), "  ".join("-" * w for w in widths)]
    lines += [fmt(b) for b in body]
    return "\n".join(lines) + "\n"


def default_grid():
    """The seven model variants and six relation sets."""
    models = [{"label": "V+Q", "model": {"enhancement_mode": "V+Q"}},
              {"label": "V", "model": {"enhancement_mode": "V"}},
              {"label": "Q", "model": {"enhancement_mode": "Q"}},
              {"label": "VQ-shared", "model": {"enhancement_mode": "VQ-shared"}},
              {"label": "concat", "model": {"enhancement_mode": "concat"}},
              {"label": "pre", "model": {"fusion_stage": "pre"}},
              {"label": "post(V+Q)", "model": {"enhancement_mode": "V+Q",
                                               "fusion_stage": "post"}}]
    rels = [{"label": f"R={r}", "relation_set": r} for r in ("S", "T", "ST", "F", "F-ST", "All")]
    return models + rels
