"""Dynamic moment proposal: cluster frames, read off atomic runs, merge neighbours.

Frames are described by their column of the frame-wise cosine-similarity
matrix plus a weighted normalised frame index, clustered with seeded
k-means; maximal runs of equal labels are the atomic moments and unions of
consecutive atomics are the composite candidates.
"""
import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .engine.serialize import atomic_write_bytes
from .errors import ConfigError, DegenerateInputError, ParseError, ValidationError

FEATURE_MAGIC = b"CRNF"


@dataclass(frozen=True)
class MomentSpan:
    t_s: float
    t_e: float

    def __post_init__(self):
        if not (0.0 <= self.t_s <= self.t_e <= 1.0):
            raise ValidationError(f"invalid span ({self.t_s}, {self.t_e})")

    @property
    def length(self):
        return self.t_e - self.t_s

    def contains_frame(self, i, n_frames):
        c = (i + 0.5) / n_frames
        return self.t_s <= c <= self.t_e

    def frame_mask(self, n_frames):
        centers = (np.arange(n_frames) + 0.5) / n_frames
        return ((centers >= self.t_s) & (centers <= self.t_e)).astype(np.float64)


@dataclass
class FrameFeatures:
    matrix: np.ndarray
    video_id: str = ""

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 2:
            raise ValidationError(f"{self.video_id}: need a T x d matrix with T >= 2, "
                                  f"got shape {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise ValidationError(f"{self.video_id}: non-finite frame features")

    @property
    def n_frames(self):
        return self.matrix.shape[0]


@dataclass
class ProposalConfig:
    k_range: tuple = (4, 8)
    gamma: float = 1.0
    max_merge: int = 3
    n_proposals: int = 5
    kmeans_iters: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        self.k_range = tuple(int(k) for k in self.k_range)
        lo, hi = self.k_range
        if lo < 2 or hi < lo:
            raise ConfigError(f"k_range must satisfy 2 <= lo <= hi, got {self.k_range}")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if self.max_merge < 1 or self.n_proposals < 1:
            raise ConfigError("max_merge and n_proposals must be positive")

    def to_dict(self):
        d = asdict(self)
        d["k_range"] = list(self.k_range)
        return d


def video_rng(seed, video_id):
    """Independent generator per (seed, video) pair."""
    digest = hashlib.sha256(str(video_id).encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


# --------------------------------------------------------------------------
# features
# --------------------------------------------------------------------------

def similarity_features(features, gamma=1.0):
    """Return a T x (T + 1) matrix: cosine-similarity columns then index."""
    x = features.matrix if isinstance(features, FrameFeatures) else np.asarray(features, float)
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise DegenerateInputError(f"frame {int(bad[0])} has a zero-norm feature vector")
    sim = kernels.cosine_similarity(np.ascontiguousarray(x))
    n = x.shape[0]
    index = gamma * np.arange(n) / (n - 1)
    # column i of sim is row i of sim.T
    return np.hstack([sim.T, index[:, None]])


# --------------------------------------------------------------------------
# k-means
# --------------------------------------------------------------------------

class KMeansResult(NamedTuple):
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: list
    n_iter: int

    @property
    def inertia(self):
        return self.inertia_history[-1]


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(points, k, iters=100, seed=0):
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 2 <= k <= n:
        raise ValidationError(f"need 2 <= K <= T, got K={k}, T={n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = _kmeanspp(points, k, rng)
    labels, d2 = kernels.assign_nearest(points, centers)
    history = [float(d2.sum())]
    n_iter = 0
    for n_iter in range(1, iters + 1):
        sizes = np.bincount(labels, minlength=k)
        for c in range(k):
            if sizes[c]:
                centers[c] = points[labels == c].mean(axis=0)
        empty = np.flatnonzero(sizes == 0)
        if empty.size:
            # farthest points from their own (updated) centers seed the empties
            far = ((points - centers[labels]) ** 2).sum(axis=1)
            order = np.argsort(-far, kind="stable")
            for c, idx in zip(empty, order):
                centers[c] = points[idx]
        new_labels, d2 = kernels.assign_nearest(points, centers)
        history.append(float(d2.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels, centers, history, n_iter)


def kmeans(points, k, iters=100, seed=0):
    return kmeans_fit(points, k, iters, seed).labels


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------

def label_runs(labels):
    """Inclusive (start, end) frame index pairs of maximal equal-label runs."""
    labels = np.asarray(labels)
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((start, i - 1))
            start = i
    return runs


def atomic_moments(labels):
    n = len(labels)
    return [MomentSpan(i / n, (j + 1) / n) for i, j in label_runs(labels)]


def composite_candidates(atomics, max_merge):
    out = []
    for m in range(1, max_merge + 1):
        for i in range(len(atomics) - m + 1):
            out.append(MomentSpan(atomics[i].t_s, atomics[i + m - 1].t_e))
    return out


def composite_moments(atomics, cfg, rng=None):
    """Uniformly sample merged-neighbour spans without replacement.

    The sample is returned in candidate order (by merge size, then start).
    """
    cands = composite_candidates(atomics, cfg.max_merge)
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    n_take = min(cfg.n_proposals, len(cands))
    if n_take == len(cands):
        return cands
    picked = np.sort(rng.choice(len(cands), size=n_take, replace=False))
    return [cands[i] for i in picked]


def propose(features, cfg, seed=None):
    """Full proposal pass for one video, seeded by (seed, video_id)."""
    seed = cfg.rng_seed if seed is None else seed
    rng = video_rng(seed, features.video_id)
    lo, hi = cfg.k_range
    n = features.n_frames
    k = int(rng.integers(lo, hi + 1))
    k = max(2, min(k, n))
    pts = similarity_features(features, cfg.gamma)
    labels = kmeans(pts, k, cfg.kmeans_iters, rng)
    return composite_moments(atomic_moments(labels), cfg, rng)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def write_features(path, matrix):
    matrix = np.asarray(matrix)
    t, d = matrix.shape
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    atomic_write_bytes(path, FEATURE_MAGIC + struct.pack("<II", t, d) + payload)


def read_features(path, video_id=""):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != FEATURE_MAGIC:
        raise ParseError(f"{path}: not a CRNF feature file")
    t, d = struct.unpack_from("<II", buf, 4)
    if len(buf) != 12 + 4 * t * d:
        raise ParseError(f"{path}: expected {t}x{d} float32 payload, file size {len(buf)}")
    arr = np.frombuffer(buf, dtype="<f4", offset=12).reshape(t, d).astype(np.float64)
    return FrameFeatures(arr, video_id)


def proposals_to_jsonl(rows, header=None):
    lines = []
    if header is not None:
        lines.append(json.dumps({"header": header}, sort_keys=True))
    for video_id, span in rows:
        lines.append(json.dumps({"video_id": video_id, "t_s": span.t_s, "t_e": span.t_e},
                                sort_keys=True))
    return "\n".join(lines) + "\n"
