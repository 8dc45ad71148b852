"""Acceptance criteria 1-10; one PASS/FAIL line each.

Run with pytest (lines appear in the terminal summary) or directly:
``python tests/test_acceptance.py``.
"""
import json
import logging
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from coronet import kgraph
from coronet.ablation import build_graph_for, default_grid, format_table, run_grid
from coronet.cli import main as cli_main
from coronet.engine import Tensor
from coronet.evaluation import aggregate, temporal_iou
from coronet.model import ModelConfig, concept_bank, enhance, gcn_encode, init_params, rgcn_encode
from coronet.proposal import MomentSpan, kmeans, kmeans_fit, similarity_features
from coronet.selfcheck import full_model_gradcheck, toy_problem
from coronet.synth import synth_dataset
from coronet.training import generate_pairs, load_config, load_dataset, train

REPO = Path(__file__).resolve().parents[1]
FIXTURE_DUMP = str(REPO / "src" / "coronet" / "data" / "conceptnet_fixture.csv")
LEARN_CONFIG = str(REPO / "configs" / "learnability.json")
ABLATION_BASE = str(REPO / "configs" / "ablation_base.json")
TEN_SEEDS = ["cup", "table", "book", "shelf", "door", "laptop", "chair", "desk", "bed", "pillow"]

RESULTS = []


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


_cache = {}


def seed7_dataset(tmp_root):
    if "ds7" not in _cache:
        _cache["ds7"] = synth_dataset(os.path.join(tmp_root, "synth7"), n_videos=32, n_frames=32,
                                      d_in=16, seed=7)
    return _cache["ds7"]


def quiet_assertions():
    logging.disable(logging.WARNING)
    try:
        return kgraph.load_dump(FIXTURE_DUMP)
    finally:
        logging.disable(logging.NOTSET)


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def check_1():
    t0 = time.perf_counter()
    err = full_model_gradcheck(seed=0, h=1e-5)
    dt = time.perf_counter() - t0
    ok = err < 1e-4 and dt < 30
    return record(1, "full-model gradient check (T=4, k=2, n_C=3, d=6, h=1e-5)", ok,
                  f"max rel err {err:.2e} (< 1e-4), {dt:.1f}s (< 30s)")


def check_2():
    worst = 0
    for seed in range(20):
        params, _, cfg = toy_problem(seed)
        rng = np.random.default_rng(seed)
        for side in ("video", "query"):
            params[f"cem.{side}.W_V"].data = np.zeros_like(params[f"cem.{side}.W_V"].data)
            src = Tensor(rng.normal(size=(int(rng.integers(1, 9)), cfg.d)))
            concepts = Tensor(rng.normal(size=(3, cfg.d)))
            out = enhance(src, concepts, params.triple(f"cem.{side}"))
            worst += int(not np.array_equal(out.data, src.data))
    return record(2, "residual identity with W_V = 0 (video and query triples)", worst == 0,
                  f"{40 - worst}/40 bit-exact")


def check_3(tmp_root):
    rel_ok = len(kgraph.FILTERED) == 16 and len(kgraph.RELATION_CATEGORIES) == 7
    seeds_file = os.path.join(tmp_root, "ten_seeds.txt")
    with open(seeds_file, "w") as fh:
        fh.write("\n".join(TEN_SEEDS) + "\n")
    out = os.path.join(tmp_root, "graph_F.json")
    logging.disable(logging.WARNING)
    try:
        rc = cli_main(["extract-graph", "--dump", FIXTURE_DUMP, "--relations", "F",
                       "--seeds", seeds_file, "--out", out])
    finally:
        logging.disable(logging.NOTSET)
    graph = kgraph.load_graph(out)
    proc = subprocess.run([sys.executable, str(REPO / "scripts" / "line_scan_oracle.py"),
                           "--dump", FIXTURE_DUMP, "--seeds", ",".join(TEN_SEEDS),
                           "--relations", "F"], capture_output=True, text=True, check=True)
    oracle = json.loads(proc.stdout)
    same = rc == 0 and list(graph.concepts) == oracle["concepts"] and \
        np.array_equal(graph.counts, np.array(oracle["G_C"]))
    edges = int(graph.counts.sum())
    return record(3, "graph pipeline vs line-scan oracle (10 seeds, relation set F)",
                  same and rel_ok and edges > 0,
                  f"G_C equal={same} ({edges} edges); F has {len(kgraph.FILTERED)} relations "
                  f"in {len(kgraph.RELATION_CATEGORIES)} categories")


def check_4():
    rng = np.random.default_rng(4)
    worst, isolated = 0.0, 0
    for _ in range(100):
        n = int(rng.integers(1, 40))
        counts = rng.integers(0, 4, size=(n, n)) * (rng.random((n, n)) < rng.random())
        dead = rng.random(n) < 0.2
        counts[dead] = 0
        isolated += int((counts.sum(axis=1) == 0).sum())
        g = kgraph.ConceptGraph(tuple(f"c{i}" for i in range(n)), counts)
        a = kgraph.normalize_adjacency(g).adjacency
        worst = max(worst, float(np.abs(a.sum(axis=1) - 1).max()))
        if (a < 0).any():
            worst = np.inf
    return record(4, "normalized adjacency row-stochastic on 100 random graphs", worst <= 1e-9,
                  f"max |row sum - 1| = {worst:.1e} ({isolated} isolated rows)")


def check_5():
    exact = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 10))
        ids = [f"c{i}" for i in range(n)]
        asserts = [kgraph.Assertion("AtLocation", ids[i], ids[j])
                   for i, j in rng.integers(0, n, size=(3 * n, 2)) if i != j]
        rel = kgraph.normalize_adjacency(kgraph.build_seed_graph(asserts, ids, relational=True))
        cfg_w = ModelConfig(d=8, graph_mode="weighted")
        cfg_r = ModelConfig(d=8, graph_mode="relational")
        pw = init_params(cfg_w, 3, 4, n, (), seed)
        pr = init_params(cfg_r, 3, 4, n, rel.relations, seed + 100)
        pr["concept.C0"] = pw["concept.C0"]
        for l in range(cfg_w.L):
            pr[f"rgcn.W{l}.AtLocation"] = pw[f"gcn.W{l}"]
        g = gcn_encode(concept_bank(pw, rel), pw, cfg_w.L).data
        r = rgcn_encode(concept_bank(pr, rel), pr, cfg_r.L).data
        exact += int(np.array_equal(g, r))
    return record(5, "single-relation rgcn_encode == gcn_encode", exact == 20,
                  f"{exact}/20 exactly equal")


def check_6():
    rng = np.random.default_rng(6)
    ious = []
    for _ in range(100):
        p = MomentSpan(*sorted(rng.random(2)))
        g = MomentSpan(*sorted(rng.random(2)))
        ious.append(temporal_iou(p, g))
    rep = aggregate(ious)
    brute = {k: 100.0 * sum(1 for x in ious if x >= k) / 100 for k in (0.3, 0.5, 0.7)}
    miou = 100.0 * sum(ious) / 100
    match = rep.r_at == brute and rep.miou == miou
    boundary = []
    for k in (0.3, 0.5, 0.7):
        iou = temporal_iou(MomentSpan(0.0, k), MomentSpan(0.0, 1.0))
        boundary.append(iou == k and aggregate([iou]).r_at[k] == 100.0)
    return record(6, "metric oracle on 100 random pairs + inclusive boundary",
                  match and all(boundary),
                  f"brute-force match={match}, iou==k counted for k=0.3/0.5/0.7: {boundary}")


def check_7(tmp_root):
    t0 = time.perf_counter()
    cfg = load_config(LEARN_CONFIG)
    entries = load_dataset(seed7_dataset(tmp_root))
    assertions = quiet_assertions()
    pairs = generate_pairs(entries, cfg.proposal, cfg.model.k, cfg.seed)
    graph = build_graph_for(assertions, pairs, "F", 300)
    res = train(cfg, graph=graph, pairs=pairs)
    dt = time.perf_counter() - t0
    last = res.history[-1]
    ok = (cfg.lam == 0.7 and cfg.epochs <= 500 and last["train_mIoU"] >= 0.85
          and last["train_R@0.7"] >= 0.70 and dt < 300)
    return record(7, "learnability (32 videos, T=32, d_in=16, seed 7, lambda=0.7)", ok,
                  f"{len(pairs)} pairs, {cfg.epochs} epochs: train mIoU {last['train_mIoU']:.3f} "
                  f"(>= 0.85), R@0.7 {last['train_R@0.7']:.3f} (>= 0.70), {dt:.0f}s (< 300s)")


def check_8(tmp_root):
    with open(ABLATION_BASE) as fh:
        base = json.load(fh)
    base["epochs"] = 20
    entries = load_dataset(seed7_dataset(tmp_root))
    grid = default_grid()
    t0 = time.perf_counter()
    rows = run_grid(base, grid, entries, quiet_assertions(), "F", 300)
    table = format_table(rows)
    print(table)
    labels = [r["label"] for r in rows]
    want = ["V+Q", "V", "Q", "VQ-shared", "concat", "pre", "post(V+Q)"] + \
        [f"R={r}" for r in ("S", "T", "ST", "F", "F-ST", "All")]
    finite = all(np.isfinite(r[k]) for r in rows for k in ("R@0.3", "R@0.5", "R@0.7", "mIoU"))
    ok = labels == want and finite and len(table.splitlines()) == 2 + len(want)
    return record(8, "ablation harness (7 configs + 6 relation sets, 20 epochs)", ok,
                  f"{len(rows)} cells trained+evaluated, table emitted, "
                  f"{time.perf_counter() - t0:.0f}s")


def _contiguous(labels):
    seen, prev = set(), None
    for lab in labels:
        if lab != prev:
            if lab in seen:
                return False
            seen.add(lab)
            prev = lab
    return True


def _coherent_features(rng, i, T=32, d=16):
    if i % 2 == 0:
        return np.cumsum(rng.normal(size=(T, d)), axis=0) + 3.0 * rng.normal(size=d)
    n_blocks = int(rng.integers(2, 6))
    cuts = np.sort(rng.choice(np.arange(1, T), n_blocks - 1, replace=False))
    lab = np.searchsorted(cuts, np.arange(T), side="right")
    return rng.normal(size=(n_blocks, d))[lab] + 0.1 * rng.normal(size=(T, d))


def check_9():
    mono = 0
    for i in range(50):
        rng = np.random.default_rng(900 + i)
        n = int(rng.integers(8, 60))
        pts = rng.normal(size=(n, int(rng.integers(2, 10))))
        hist = kmeans_fit(pts, int(rng.integers(2, min(8, n) + 1)), seed=i).inertia_history
        mono += int(all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:])))
    contig = 0
    for i in range(20):
        rng = np.random.default_rng(950 + i)
        pts = similarity_features(_coherent_features(rng, i), gamma=10.0)
        contig += int(_contiguous(kmeans(pts, int(rng.integers(4, 9)), seed=i)))
    # informational: i.i.d. frames sit below the gamma >= 10x similarity-scale regime
    iid = sum(_contiguous(kmeans(similarity_features(
        np.random.default_rng(990 + i).normal(size=(32, 16)), 10.0), 5, seed=i))
        for i in range(20))
    return record(9, "k-means inertia monotone (50) + gamma=10 contiguity (20)",
                  mono == 50 and contig == 20,
                  f"monotone {mono}/50, contiguous {contig}/20 on random-walk/block features "
                  f"(i.i.d.-noise frames, outside the large-gamma regime: {iid}/20)")


def check_10(tmp_root):
    ds = seed7_dataset(tmp_root)
    cfg = json.load(open(LEARN_CONFIG))
    cfg["epochs"] = 5
    cfg_path = os.path.join(tmp_root, "det_cfg.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg, fh)
    names = ["checkpoint.crnt", "checkpoint.json", "metrics.jsonl", "report.json"]
    blobs = []
    logging.disable(logging.WARNING)
    try:
        for run in ("a", "b"):
            out = os.path.join(tmp_root, f"det_{run}")
            graph = os.path.join(out, "graph.json")
            os.makedirs(out, exist_ok=True)
            pq = os.path.join(out, "pq.jsonl")
            rcs = [cli_main(["pqgen", "--data", ds, "--config", cfg_path, "--out", pq]),
                   cli_main(["extract-graph", "--dump", FIXTURE_DUMP, "--seeds-from", pq,
                             "--out", graph]),
                   cli_main(["train", "--config", cfg_path, "--data", ds, "--graph", graph,
                             "--out", out, "-q"]),
                   cli_main(["eval", "--checkpoint", os.path.join(out, "checkpoint.crnt"),
                             "--data", ds, "--graph", graph,
                             "--report", os.path.join(out, "report.json")])]
            blobs.append((rcs, [open(os.path.join(out, n), "rb").read() for n in names]))
    finally:
        logging.disable(logging.NOTSET)
    same = [x == y for x, y in zip(blobs[0][1], blobs[1][1])]
    ok = all(same) and blobs[0][0] == [0] * 4 and blobs[1][0] == [0] * 4
    return record(10, "determinism across two consecutive runs", ok,
                  ", ".join(f"{n} {'identical' if s else 'DIFFERS'}" for n, s in zip(names, same)))


# --------------------------------------------------------------------------
# pytest entry points
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tmp_root(tmp_path_factory):
    return str(tmp_path_factory.mktemp("acceptance"))


def test_criterion_01_gradient_integrity():
    assert check_1()


def test_criterion_02_residual_identity():
    assert check_2()


def test_criterion_03_graph_pipeline(tmp_root):
    assert check_3(tmp_root)


def test_criterion_04_row_stochastic():
    assert check_4()


def test_criterion_05_rgcn_gcn():
    assert check_5()


def test_criterion_06_metric_oracle():
    assert check_6()


@pytest.mark.slow
def test_criterion_07_learnability(tmp_root):
    assert check_7(tmp_root)


@pytest.mark.slow
def test_criterion_08_ablation(tmp_root):
    assert check_8(tmp_root)


def test_criterion_09_kmeans():
    assert check_9()


def test_criterion_10_determinism(tmp_root):
    assert check_10(tmp_root)


if __name__ == "__main__":
    import tempfile
    with tempfile.TemporaryDirectory() as d:
        checks = [check_1, check_2, lambda: check_3(d), check_4, check_5, check_6,
                  lambda: check_7(d), lambda: check_8(d), check_9, lambda: check_10(d)]
        results = [c() for c in checks]
    sys.exit(0 if all(results) else 1)
