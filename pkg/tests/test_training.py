import json
import logging
import math
import os
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coronet import kgraph, training
from coronet.engine import Tensor
from coronet.errors import ConfigError, ContractError, TrainingError
from coronet.model import ModelConfig
from coronet.proposal import MomentSpan, ProposalConfig, propose, read_features
from coronet.pseudoquery import read_detections, select_seed_concepts
from coronet.training import (TrainConfig, generate_pairs, load_dataset, loss_ta, loss_treg,
                              pair_loss, train)

TINY_MODEL = {"d": 8, "d_emb": 4, "L": 1, "k": 5}


def tiny_cfg(**over):
    base = {"epochs": 2, "batch_size": 4, "seed": 0, "model": TINY_MODEL,
            "proposal": {"n_proposals": 2, "gamma": 10.0}}
    return TrainConfig.from_dict(training.deep_merge(base, over))


def graph_for(pairs, assertions):
    seeds = select_seed_concepts([p.query for p in pairs], 300)
    return kgraph.normalize_adjacency(kgraph.build_seed_graph(
        kgraph.filter_relations(assertions, "F"), seeds, relation_set="F"))


class FakeResult:
    def __init__(self, att, raw):
        self.attention = Tensor(np.asarray(att, float).reshape(-1, 1))
        self.raw_span = Tensor(np.asarray(raw, float).reshape(1, 2))


def test_loss_ta_closed_forms():
    mask = np.array([0, 1, 1, 0.0])
    assert loss_ta(Tensor(np.array([[0.2], [1.0], [1.0], [0.3]])), mask).item() == 0.0
    a = np.full((4, 1), math.exp(-1))
    assert loss_ta(Tensor(a), mask).item() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ContractError):
        loss_ta(Tensor(a), np.zeros(4))


def test_loss_ta_matches_recomputation(rng):
    for _ in range(20):
        a = rng.uniform(0.01, 1.0, size=9)
        g = (rng.random(9) < 0.5).astype(float)
        g[rng.integers(9)] = 1.0
        expected = -(g * np.log(a)).sum() / g.sum()
        assert loss_ta(Tensor(a[:, None]), g).item() == pytest.approx(expected, rel=1e-13)


def test_loss_treg_branches():
    s = MomentSpan(0.25, 0.5)
    assert loss_treg(s, Tensor([[0.25, 0.5]])).item() == 0.0
    assert loss_treg(MomentSpan(0.0, 0.5), Tensor([[0.5, 0.5]])).item() == pytest.approx(0.125)
    assert loss_treg(MomentSpan(0.0, 0.0), Tensor([[2.0, 0.0]])).item() == pytest.approx(1.5)


def make_pair(mask):
    span = MomentSpan(0.25, 0.75)
    return training.TrainingPair("v", None, None, span, np.asarray(mask, float))


def test_lambda_zero_is_pure_regression():
    res = FakeResult([0.3, 0.4, 0.5, 0.6], [0.1, 0.9])
    pair = make_pair([0, 1, 1, 0])
    assert pair_loss(res, pair, 0.0).item() == loss_treg(pair.target, res.raw_span).item()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=4, max_size=4),
       st.tuples(st.floats(-2, 2), st.floats(-2, 2)),
       st.floats(0, 5), st.floats(0, 5))
def test_loss_nonnegative_and_monotone_in_lambda(att, raw, lam1, lam2):
    res = FakeResult(att, raw)
    pair = make_pair([0, 1, 1, 0])
    lo, hi = sorted((lam1, lam2))
    l_lo, l_hi = pair_loss(res, pair, lo).item(), pair_loss(res, pair, hi).item()
    assert l_lo >= 0
    assert l_hi >= l_lo - 1e-12


def test_config_parsing(tmp_path):
    cfg = TrainConfig.from_dict({"lambda": 0.5, "model": {"d": 16}, "proposal": {"gamma": 3}})
    assert cfg.lam == 0.5 and cfg.model.d == 16 and cfg.proposal.gamma == 3
    assert TrainConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"learning_rate": 1})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"model": {"depth": 3}})
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"epochs": 3}))
    assert training.load_config(path, seed=9).seed == 9


def test_cosine_schedule():
    cfg = TrainConfig(lr=1.0, epochs=4, lr_schedule="cosine")
    assert [round(cfg.lr_at(e), 12) for e in (1, 3)] == [1.0, 0.5]
    assert cfg.lr_at(4) > 0
    assert TrainConfig(lr=0.1).lr_at(7) == 0.1


def test_load_dataset_accepts_directory(small_dataset):
    assert load_dataset(os.path.dirname(small_dataset)) == load_dataset(small_dataset)


def test_generate_pairs_count_matches_recount(small_entries):
    cfg = ProposalConfig(n_proposals=4, gamma=10.0)
    pairs = generate_pairs(small_entries, cfg, 5, seed=2)
    expected = 0
    for e in small_entries:
        feats = read_features(e.features_path, e.video_id)
        dets = read_detections(e.detections_path)[e.video_id]
        n = feats.n_frames
        for span in propose(feats, cfg, 2):
            frames = [i for i in range(n) if span.t_s <= (i + 0.5) / n <= span.t_e]
            if frames and any(d.frame_index in frames for d in dets):
                expected += 1
    assert len(pairs) == expected
    again = generate_pairs(small_entries, cfg, 5, seed=2)
    assert [(p.video_id, p.target, p.query.tokens) for p in pairs] == \
        [(p.video_id, p.target, p.query.tokens) for p in again]


def test_video_without_detections_warns_once(tmp_path, small_dataset, caplog):
    root = os.path.dirname(small_dataset)
    copy = tmp_path / "ds"
    shutil.copytree(root, copy)
    entries = load_dataset(copy / "dataset.json")[:2]
    open(entries[0].detections_path, "w").close()
    with caplog.at_level(logging.WARNING, logger="coronet.training"):
        pairs = generate_pairs(entries, ProposalConfig(n_proposals=3), 5, seed=0)
    assert all(p.video_id == entries[1].video_id for p in pairs)
    warned = [r for r in caplog.records if entries[0].video_id in r.getMessage()]
    assert len(warned) == 1


def test_missing_feature_file_names_path(tmp_path, small_entries):
    bad = small_entries[0]._replace(features_path=str(tmp_path / "gone.crnf"))
    with pytest.raises(OSError, match="gone.crnf"):
        generate_pairs([bad], ProposalConfig(), 5)


@pytest.fixture(scope="module")
def tiny_setup(small_entries, fixture_assertions):
    cfg = tiny_cfg()
    pairs = generate_pairs(small_entries[:4], cfg.proposal, cfg.model.k, cfg.seed)
    return pairs, graph_for(pairs, fixture_assertions)


def test_zero_lr_leaves_parameters(tiny_setup):
    pairs, graph = tiny_setup
    cfg = tiny_cfg(lr=0.0)
    trained = train(cfg, graph=graph, pairs=pairs)
    fresh = train(tiny_cfg(epochs=0), graph=graph, pairs=pairs)
    for k in fresh.params:
        assert np.array_equal(trained.params[k].data, fresh.params[k].data)


def test_training_outputs_and_reproducibility(tmp_path, tiny_setup):
    pairs, graph = tiny_setup
    a = train(tiny_cfg(), graph=graph, pairs=pairs, out_dir=tmp_path / "a")
    train(tiny_cfg(), graph=graph, pairs=pairs, out_dir=tmp_path / "b")
    for name in ("checkpoint.crnt", "checkpoint.json", "metrics.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "metrics.jsonl").read_text().splitlines()
    assert "header" in json.loads(lines[0])
    rows = [json.loads(x) for x in lines[1:]]
    assert [r["epoch"] for r in rows] == [1, 2]
    assert set(rows[0]) == {"epoch", "mean_loss", "train_mIoU", "train_R@0.7"}
    assert rows == a.history


def test_loss_decreases_on_tiny_set(tiny_setup):
    pairs, graph = tiny_setup
    hist = train(tiny_cfg(epochs=30, lr=3e-3), graph=graph, pairs=pairs).history
    assert hist[-1]["mean_loss"] < hist[0]["mean_loss"]


def test_sgd_and_clipping_run(tiny_setup):
    pairs, graph = tiny_setup
    train(tiny_cfg(optimizer="sgd", lr=1e-2, clip_norm=1.0), graph=graph, pairs=pairs)


def test_nan_loss_aborts_with_location(tiny_setup, monkeypatch):
    pairs, graph = tiny_setup
    monkeypatch.setattr(training, "pair_loss", lambda res, pair, lam: Tensor(np.array(np.nan)))
    with pytest.raises(TrainingError, match="epoch 1, batch 1"):
        train(tiny_cfg(), graph=graph, pairs=pairs)


def test_train_requires_graph_and_pairs(tiny_setup):
    pairs, graph = tiny_setup
    with pytest.raises(ConfigError):
        train(tiny_cfg(), pairs=pairs)
    with pytest.raises(TrainingError):
        train(tiny_cfg(), graph=graph, pairs=[])


def test_relational_training(tiny_setup, small_entries, fixture_assertions):
    pairs, _ = tiny_setup
    seeds = select_seed_concepts([p.query for p in pairs], 300)
    g = kgraph.normalize_adjacency(kgraph.build_seed_graph(
        kgraph.filter_relations(fixture_assertions, "All"), seeds, relational=True))
    cfg = tiny_cfg(model={"graph_mode": "relational"})
    assert isinstance(cfg.model, ModelConfig)
    res = train(cfg, graph=g, pairs=pairs)
    assert any(k.startswith("rgcn.") for k in res.params)
