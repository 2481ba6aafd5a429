"""Point cloud sequences: binary files, toy generators and batching.

Sequence file layout (all little-endian)::

    magic          12 bytes  b"ASTA3D-SEQ-1"
    frame_count    uint32
    points/frame   uint32
    feature_dim    uint32
    has_labels     uint8     0 | 1
    task           uint8     0 none, 1 classification, 2 segmentation
    body           float64 x frame_count*points_per_frame*(4 + c + has_labels)
                   per point: x, y, z, t, f[0..c), [label]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"ASTA3D-SEQ-1"
_HEADER = struct.Struct("<IIIBB")
TASKS = {"none": 0, "classification": 1, "segmentation": 2}
_TASK_NAMES = {v: k for k, v in TASKS.items()}
MOTIONS = ("translate-up", "translate-down", "uniform-expand", "rotate-about-z")


class SequenceFormatError(ValueError):
    pass


class TruncatedSequenceError(SequenceFormatError):
    pass


@dataclass
class PointCloudSequence:
    positions: np.ndarray    # [M, 3]
    timestamps: np.ndarray   # [M], integer-valued frame indices
    features: np.ndarray     # [M, c]
    labels: np.ndarray | None = None
    frame_count: int = 1
    points_per_frame: int = 0
    task: str = "none"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.features = np.asarray(self.features, dtype=np.float64).reshape(len(self.positions), -1)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        if not self.points_per_frame:
            self.points_per_frame = len(self.positions) // self.frame_count
        self.validate()

    def validate(self):
        m = len(self.positions)
        if m != self.frame_count * self.points_per_frame:
            raise SequenceFormatError(
                f"{m} points != {self.frame_count} frames x {self.points_per_frame}")
        t = self.timestamps
        if len(t) != m or np.any(t != np.round(t)) or np.any(t < 0) or np.any(t >= self.frame_count):
            raise SequenceFormatError("timestamps must be integers in [0, frame_count)")
        counts = np.bincount(t.astype(np.int64), minlength=self.frame_count)
        if np.any(counts != self.points_per_frame):
            raise SequenceFormatError("every frame must hold points_per_frame points")
        if self.labels is not None and len(self.labels) != m:
            raise SequenceFormatError("one label per point required")

    def __len__(self):
        return len(self.positions)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def label(self):
        """Sequence-level class (classification files repeat it on every point)."""
        return int(self.labels[0])


def write_sequence(seq, path):
    cols = [seq.positions, seq.timestamps[:, None], seq.features]
    if seq.labels is not None:
        cols.append(seq.labels[:, None].astype(np.float64))
    body = np.ascontiguousarray(np.concatenate(cols, axis=1), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(seq.frame_count, seq.points_per_frame, seq.feature_dim,
                              int(seq.labels is not None), TASKS[seq.task]))
        fh.write(body.tobytes())


def read_sequence(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise SequenceFormatError(f"{path}: bad magic")
    pos = len(MAGIC)
    if len(raw) < pos + _HEADER.size:
        raise TruncatedSequenceError(f"{path}: truncated header")
    frames, ppf, c, has_labels, task = _HEADER.unpack_from(raw, pos)
    pos += _HEADER.size
    if task not in _TASK_NAMES or has_labels not in (0, 1):
        raise SequenceFormatError(f"{path}: invalid header fields")
    width = 4 + c + has_labels
    n = frames * ppf * width
    if len(raw) - pos != 8 * n:
        raise TruncatedSequenceError(f"{path}: body holds {len(raw) - pos} bytes, header implies {8 * n}")
    body = np.frombuffer(raw, dtype="<f8", offset=pos).reshape(frames * ppf, width)
    labels = None
    if has_labels:
        lab = body[:, -1]
        if np.any(lab != np.round(lab)):
            raise SequenceFormatError(f"{path}: non-integer label")
        labels = lab.astype(np.int64)
    try:
        return PointCloudSequence(body[:, :3].copy(), body[:, 3].copy(), body[:, 4:4 + c].copy(),
                                  labels, frames, ppf, _TASK_NAMES[task])
    except SequenceFormatError as exc:
        raise SequenceFormatError(f"{path}: {exc}") from exc


# ---- toy datasets ---------------------------------------------------------

@dataclass
class SyntheticTaskSpec:
    task: str = "motion-classification"
    classes: int = 4
    frames: int = 8
    points_per_frame: int = 64
    count: int = 200
    noise: float = 0.01
    seed: int = 0
    step: float = 0.05         # per-frame translation / expansion rate
    angle: float = 0.15        # per-frame rotation in radians
    blob_points: int = 56      # segmentation only
    blob_sigma: float = 0.12
    color_noise: float = 0.1


def motion_frames(base, motion, frames, step, angle):
    """Noise-free frames of one motion applied to a zero-centred base shape."""
    out = []
    for t in range(frames):
        if motion == "translate-up":
            p = base + [0.0, 0.0, t * step]
        elif motion == "translate-down":
            p = base - [0.0, 0.0, t * step]
        elif motion == "uniform-expand":
            p = base * (1.0 + t * step)
        elif motion == "rotate-about-z":
            c, s = np.cos(t * angle), np.sin(t * angle)
            rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
            p = base @ rot.T
        else:
            raise ValueError(f"unknown motion {motion!r}")
        out.append(p)
    return out


def generate_motion_classification(spec):
    if not 1 <= spec.classes <= len(MOTIONS):
        raise ValueError(f"motion classification supports 1..{len(MOTIONS)} classes, got {spec.classes}")
    rng = np.random.default_rng(spec.seed)
    seqs = []
    for i in range(spec.count):
        label = i % spec.classes
        base = rng.uniform(-0.5, 0.5, (spec.points_per_frame, 3))
        base -= base.mean(axis=0)
        frames = motion_frames(base, MOTIONS[label], spec.frames, spec.step, spec.angle)
        pos = np.concatenate(frames)
        if spec.noise > 0:
            pos = pos + rng.normal(0.0, spec.noise, pos.shape)
        t = np.repeat(np.arange(spec.frames, dtype=np.float64), spec.points_per_frame)
        seqs.append(PointCloudSequence(pos, t, t[:, None], np.full(len(t), label),
                                       spec.frames, spec.points_per_frame, "classification"))
    order = rng.permutation(len(seqs))
    return [seqs[i] for i in order]


BACKGROUND_BOX = np.array([[0.0, 0.0, 0.0], [2.0, 2.0, 0.3]])


def generate_blob_segmentation(spec):
    """Static background slab (label 0) under a moving Gaussian blob (label 1)."""
    rng = np.random.default_rng(spec.seed)
    nb = spec.blob_points
    ng = spec.points_per_frame - nb
    if ng < 0:
        raise ValueError("blob_points exceeds points_per_frame")
    lo, hi = BACKGROUND_BOX
    seqs = []
    for _ in range(spec.count):
        ground = rng.uniform(lo, hi, (ng, 3))
        start = np.array([rng.uniform(0.3, 0.8), rng.uniform(0.3, 1.7), 0.8])
        heading = rng.uniform(0, 2 * np.pi)
        velocity = 0.15 * np.array([np.cos(heading), np.sin(heading), 0.0])
        shape = rng.normal(0.0, spec.blob_sigma, (nb, 3))
        pos, lab, rgb = [], [], []
        for t in range(spec.frames):
            g = ground + rng.normal(0.0, spec.noise, ground.shape)
            b = start + t * velocity + shape + rng.normal(0.0, spec.noise, shape.shape)
            pos += [g, b]
            lab += [np.zeros(ng, dtype=np.int64), np.ones(nb, dtype=np.int64)]
            rgb += [np.clip([0.45, 0.45, 0.45] + rng.normal(0, spec.color_noise, (ng, 3)), 0, 1),
                    np.clip([0.85, 0.2, 0.15] + rng.normal(0, spec.color_noise, (nb, 3)), 0, 1)]
        t = np.repeat(np.arange(spec.frames, dtype=np.float64), spec.points_per_frame)
        feats = np.concatenate([np.concatenate(rgb), t[:, None]], axis=1)
        seqs.append(PointCloudSequence(np.concatenate(pos), t, feats, np.concatenate(lab),
                                       spec.frames, spec.points_per_frame, "segmentation"))
    return seqs


def generate(spec):
    if spec.task == "motion-classification":
        return generate_motion_classification(spec)
    if spec.task == "blob-segmentation":
        return generate_blob_segmentation(spec)
    raise ValueError(f"unknown synthetic task {spec.task!r}")


def make_batches(dataset, batch_size, seed=None):
    """Yield lists of items; ``seed=None`` keeps the dataset order."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot batch an empty dataset")
    order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)
    for start in range(0, n, batch_size):
        yield [dataset[i] for i in order[start:start + batch_size]]
