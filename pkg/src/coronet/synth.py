"""Desk-scale synthetic videos with one planted event each.

Event frames share a class prototype supported on the first half of the
feature dimensions; background frames share a per-video prototype on the
second half. Event frames carry high-confidence detections of the class
labels, background frames a single low-confidence distractor.
"""
import json
import os

import numpy as np

from .engine.serialize import atomic_write_text
from .errors import ValidationError
from .proposal import write_features
from .vocab_pools import DISTRACTORS, EVENT_CLASSES, QUERY_VERBS

NOISE_SIGMA = 0.1


def _unit(v):
    return v / np.linalg.norm(v)


def _prototype(rng, d_in, lower):
    half = d_in // 2
    v = np.zeros(d_in)
    if lower:
        v[:half] = np.abs(rng.normal(size=half)) + 0.1
    else:
        v[half:] = np.abs(rng.normal(size=d_in - half)) + 0.1
    return _unit(v)


def query_sentence(labels, verb):
    objects = " and the ".join(o.replace("_", " ") for o in labels)
    return f"a person {verb} the {objects}."


def synth_dataset(out_dir, n_videos=32, n_frames=32, d_in=16, seed=0):
    """Write features, detections and ``dataset.json`` under ``out_dir``.

    Returns the path of the dataset manifest.
    """
    if n_frames < 8:
        raise ValidationError("synthetic videos need at least 8 frames")
    if d_in < 2:
        raise ValidationError("synthetic features need d_in >= 2")
    root = np.random.SeedSequence(int(seed))
    proto_rng = np.random.default_rng(root.spawn(1)[0])
    class_protos = [_prototype(proto_rng, d_in, lower=True) for _ in EVENT_CLASSES]
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "detections"), exist_ok=True)
    videos = []
    for v, child in enumerate(root.spawn(n_videos + 1)[1:]):
        rng = np.random.default_rng(child)
        video_id = f"vid{v:04d}"
        cls = int(rng.integers(len(EVENT_CLASSES)))
        labels = EVENT_CLASSES[cls]
        length = int(rng.integers(n_frames // 4, n_frames // 2 + 1))
        start = int(rng.integers(0, n_frames - length + 1))
        inside = np.zeros(n_frames, dtype=bool)
        inside[start:start + length] = True
        background = _prototype(rng, d_in, lower=False)
        base = np.where(inside[:, None], class_protos[cls][None, :], background[None, :])
        feats = base + rng.normal(scale=NOISE_SIGMA, size=(n_frames, d_in))
        dets = []
        for i in range(n_frames):
            if inside[i]:
                for label in labels:
                    dets.append((i, label, round(float(rng.uniform(0.8, 1.0)), 4)))
            else:
                label = DISTRACTORS[int(rng.integers(len(DISTRACTORS)))]
                dets.append((i, label, round(float(rng.uniform(0.05, 0.4)), 4)))
        feat_rel = os.path.join("features", f"{video_id}.crnf")
        det_rel = os.path.join("detections", f"{video_id}.jsonl")
        write_features(os.path.join(out_dir, feat_rel), feats)
        det_lines = [json.dumps({"video_id": video_id, "frame_index": i, "label": lab,
                                 "confidence": conf}, sort_keys=True) for i, lab, conf in dets]
        atomic_write_text(os.path.join(out_dir, det_rel), "\n".join(det_lines) + "\n")
        verb = QUERY_VERBS[int(rng.integers(len(QUERY_VERBS)))]
        videos.append({
            "video_id": video_id,
            "features_path": feat_rel,
            "detections_path": det_rel,
            "eval_annotations": [{"query_text": query_sentence(labels, verb),
                                  "t_s": start / n_frames,
                                  "t_e": (start + length) / n_frames}],
        })
    header = {"generator": "coronet.synth", "n_videos": n_videos, "T": n_frames,
              "d_in": d_in, "seed": int(seed), "noise_sigma": NOISE_SIGMA}
    path = os.path.join(out_dir, "dataset.json")
    atomic_write_text(path, json.dumps({"header": header, "videos": videos},
                                       indent=2, sort_keys=True) + "\n")
    return path
