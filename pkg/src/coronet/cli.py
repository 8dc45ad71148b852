"""``coronet`` command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
"""
import argparse
import json
import logging
import os
import sys
import time

from . import __version__, kgraph
from .ablation import format_table, run_grid
from .engine.serialize import atomic_write_text
from .errors import ConfigError, CoronetError, EmptyQueryError, ValidationError
from .evaluation import Localizer, evaluate, report_json
from .proposal import MomentSpan, ProposalConfig, propose, proposals_to_jsonl, read_features
from .pseudoquery import (queries_to_jsonl, read_detections, read_query_corpus,
                          select_seed_concepts, top_k_objects)
from .selfcheck import TOY, full_model_gradcheck
from .synth import synth_dataset
from .training import TrainConfig, generate_pairs, load_config, load_dataset, \
    load_eval_videos, train

logger = logging.getLogger("coronet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("CORONET_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"CORONET_SEED must be an integer, got {env!r}") from None


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _train_config(args):
    seed = _seed(args)
    if args.config:
        cfg = load_config(args.config, seed)
        if seed is not None:
            cfg.seed = seed
    else:
        cfg = TrainConfig(seed=seed or 0)
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    return cfg


def _header(command, **extra):
    return {"command": command, "version": __version__, **extra}


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_extract_graph(args):
    allowed = kgraph.resolve_relation_set(args.relations)
    stats = {}
    assertions = kgraph.load_dump(args.dump, stats)
    if args.seeds:
        with open(args.seeds, encoding="utf-8") as fh:
            seeds = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        seeds = seeds[:args.n_concepts]
    elif args.seeds_from:
        seeds = select_seed_concepts(read_query_corpus(args.seeds_from), args.n_concepts)
    else:
        raise ConfigError("extract-graph needs --seeds or --seeds-from")
    if not seeds:
        raise ConfigError("no seed concepts")
    if args.one_hop:
        pool_rel = None if allowed is None else allowed | kgraph.VERB_RELATIONS
        pool = assertions if pool_rel is None else [a for a in assertions
                                                      if a.relation in pool_rel]
        graph = kgraph.expand_one_hop(pool, seeds, relational=args.relational,
                                      relation_set=args.relations)
    else:
        graph = kgraph.build_seed_graph(kgraph.filter_relations(assertions, args.relations),
                                        seeds, relational=args.relational,
                                        relation_set=args.relations)
    graph = kgraph.normalize_adjacency(graph)
    config = {"dump": os.path.basename(args.dump), "relations": args.relations,
              "n_concepts": args.n_concepts, "one_hop": args.one_hop,
              "relational": args.relational, "parse_stats": stats}
    kgraph.save_graph(graph, args.out, config=_header("extract-graph", **config))
    print(f"{graph.n_concepts} concepts, {int(graph.counts.sum())} edges, "
          f"{len(graph.relations) if args.relational else 0} relation slices -> {args.out}")


def cmd_synth(args):
    seed = _seed(args) or 0
    path = synth_dataset(args.out_dir, args.videos, args.frames, args.dim, seed)
    print(f"wrote {args.videos} videos -> {path}")


def _proposal_cfg(args):
    if args.config:
        cfg = load_config(args.config, _seed(args)).proposal
    else:
        cfg = ProposalConfig()
    return cfg


def cmd_propose(args):
    cfg = _proposal_cfg(args)
    seed = _seed(args)
    seed = cfg.rng_seed if seed is None else seed
    rows = []
    for e in load_dataset(args.data):
        feats = read_features(e.features_path, e.video_id)
        rows += [(e.video_id, s) for s in propose(feats, cfg, seed)]
    header = _header("propose", proposal=cfg.to_dict(), seed=seed)
    atomic_write_text(args.out, proposals_to_jsonl(rows, header))
    print(f"{len(rows)} proposals -> {args.out}")


def cmd_pqgen(args):
    entries = load_dataset(args.data)
    if args.proposals:
        spans = {}
        with open(args.proposals, encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line) if line.strip() else None
                if row and "header" not in row:
                    spans.setdefault(row["video_id"], []).append(
                        MomentSpan(row["t_s"], row["t_e"]))
        rows, dropped = [], 0
        for e in entries:
            feats = read_features(e.features_path, e.video_id)
            dets = read_detections(e.detections_path).get(e.video_id, [])
            for s in spans.get(e.video_id, []):
                try:
                    rows.append((e.video_id, top_k_objects(dets, s, args.k, feats.n_frames)))
                except EmptyQueryError:
                    dropped += 1
        if dropped:
            logger.warning("dropped %d proposal(s) without detections", dropped)
        header = _header("pqgen", k=args.k, proposals=os.path.basename(args.proposals))
    else:
        cfg = _proposal_cfg(args)
        seed = _seed(args)
        pairs = generate_pairs(entries, cfg, args.k, seed)
        rows = [(p.video_id, p.query) for p in pairs]
        header = _header("pqgen", k=args.k, proposal=cfg.to_dict(), seed=seed)
    atomic_write_text(args.out, queries_to_jsonl(rows, header))
    print(f"{len(rows)} pseudo-queries -> {args.out}")


def cmd_train(args):
    cfg = _train_config(args)
    graph = kgraph.load_graph(args.graph)
    entries = load_dataset(args.data)
    t0 = time.perf_counter()

    def progress(row):
        if not args.quiet:
            print(f"epoch {row['epoch']:4d}  loss {row['mean_loss']:.4f}  "
                  f"mIoU {row['train_mIoU']:.3f}  R@0.7 {row['train_R@0.7']:.3f}", flush=True)

    result = train(cfg, entries, graph, out_dir=args.out, progress=progress)
    last = result.history[-1] if result.history else {}
    print(f"trained {cfg.epochs} epochs on {len(result.pairs)} pairs in "
          f"{time.perf_counter() - t0:.1f}s; final train mIoU {last.get('train_mIoU', 0):.3f}"
          f" -> {args.out}")


def cmd_eval(args):
    graph = kgraph.load_graph(args.graph)
    loc = Localizer.from_checkpoint(args.checkpoint, graph)
    report = evaluate(loc, load_eval_videos(load_dataset(args.data)))
    header = _header("eval", checkpoint=os.path.basename(args.checkpoint),
                     graph=os.path.basename(args.graph), data=os.path.basename(args.data))
    atomic_write_text(args.report, report_json(report, header))
    if args.per_video:
        atomic_write_text(args.per_video, report.per_video_csv())
    r = report.r_at
    print(f"R@0.3 {r[0.3]:.2f}  R@0.5 {r[0.5]:.2f}  R@0.7 {r[0.7]:.2f}  mIoU {report.miou:.2f}"
          f"  (n={report.n}) -> {args.report}")


def cmd_ablate(args):
    grid = _read_json(args.grid)
    if isinstance(grid, dict):
        grid = grid.get("grid", [])
    if not isinstance(grid, list) or not grid:
        raise ConfigError(f"{args.grid}: expected a non-empty JSON list of partial configs")
    base = _read_json(args.config) if args.config else {}
    seed = _seed(args)
    if seed is not None:
        base["seed"] = seed
    if args.epochs is not None:
        base["epochs"] = args.epochs
    TrainConfig.from_dict(base)
    kgraph.resolve_relation_set(args.relations)
    assertions = kgraph.load_dump(args.dump)
    entries = load_dataset(args.data)

    def progress(row):
        print(f"  done: {row['label']}  mIoU {row['mIoU']:.2f}", flush=True)

    rows = run_grid(base, grid, entries, assertions, args.relations, args.n_concepts, progress)
    table = format_table(rows)
    print(table, end="")
    if args.out:
        body = {"header": _header("ablate", base=base, grid=grid, relations=args.relations,
                                  n_concepts=args.n_concepts), "rows": rows}
        atomic_write_text(args.out, json.dumps(body, indent=2, sort_keys=True) + "\n")
    if args.table:
        atomic_write_text(args.table, table)


def cmd_gradcheck(args):
    seed = _seed(args) or 0
    overrides = {}
    if args.mode:
        overrides["enhancement_mode"] = args.mode
    if args.stage:
        overrides["fusion_stage"] = args.stage
    if args.graph_mode:
        overrides["graph_mode"] = args.graph_mode
    t0 = time.perf_counter()
    err = full_model_gradcheck(seed, h=args.h, **overrides)
    status = "ok" if err < 1e-4 else "FAIL"
    print(f"toy T={TOY['T']} k={TOY['k']} n_C={TOY['n_concepts']} d={TOY['d']} h={args.h:g}: "
          f"max relative error {err:.3e} ({status}, {time.perf_counter() - t0:.1f}s)")
    return 0 if err < 1e-4 else 1


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="coronet", description="Zero-shot video moment localization toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("extract-graph", help="build a seed concept graph from a ConceptNet dump")
    s.add_argument("--dump", required=True)
    s.add_argument("--relations", default="F",
                   help="S, T, ST, F, F-ST, All, or a comma-separated relation list")
    seeds = s.add_mutually_exclusive_group(required=True)
    seeds.add_argument("--seeds-from", help="pseudo-query corpus (JSON lines)")
    seeds.add_argument("--seeds", help="text file with one concept per line")
    s.add_argument("--n-concepts", type=int, default=300)
    s.add_argument("--one-hop", action="store_true")
    s.add_argument("--relational", action="store_true")
    s.add_argument("--out", required=True, help="graph manifest path (.json)")
    s.set_defaults(func=cmd_extract_graph)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--videos", type=int, default=32)
    s.add_argument("--frames", type=int, default=32)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("propose", help="dynamic moment proposals for a dataset")
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--config", help="training config (its proposal section is used)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_propose)

    s = sub.add_parser("pqgen", help="pseudo-queries for proposals")
    s.add_argument("--data", required=True, help="dataset manifest")
    s.add_argument("--proposals", help="proposal JSON lines (default: run proposals)")
    s.add_argument("--config")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pqgen)

    s = sub.add_parser("train", help="train a localizer on pseudo-pairs")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on annotated videos")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--per-video", help="optional per-query CSV")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="train+eval a grid of configurations")
    s.add_argument("--grid", required=True, help="JSON list of partial configs")
    s.add_argument("--config", help="base training config")
    s.add_argument("--data", required=True)
    s.add_argument("--dump", required=True)
    s.add_argument("--relations", default="F", help="relation set for cells without one")
    s.add_argument("--n-concepts", type=int, default=300)
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="JSON results")
    s.add_argument("--table", help="text table output")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    s.add_argument("--seed", type=int)
    s.add_argument("--h", type=float, default=1e-5)
    s.add_argument("--mode", choices=["V+Q", "V", "Q", "VQ-shared", "concat", "none"])
    s.add_argument("--stage", choices=["pre", "post"])
    s.add_argument("--graph-mode", choices=["weighted", "relational"])
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except (ValidationError, CoronetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"error: malformed input ({exc})", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
