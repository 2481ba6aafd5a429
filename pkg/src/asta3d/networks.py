"""Classification and segmentation networks built from ASTA convolutions."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .anchors import RadiusSchedule
from .conv import AstaConvLayer, build_geometry, merge_geometries
from .nn import BatchNorm, Linear, Module, SharedMLP
from .sampling import farthest_point_sample, farthest_point_sample_per_frame
from .tensor import Tensor, concat, no_grad, relu, sparse_matmul

CLASSIFICATION, SEGMENTATION = "classification", "segmentation"


@dataclass
class StageSpec:
    cores: int
    channels: int
    embed_dim: int
    encode_widths: list | None = None
    attend_widths: list | None = None
    delta_x: float | None = None


@dataclass
class DecoderSpec:
    channels: int
    embed_dim: int | None = None
    conv_channels: int | None = None
    mlp_widths: list = field(default_factory=list)


@dataclass
class NetworkSpec:
    task: str = CLASSIFICATION
    in_channels: int = 1
    class_count: int = 20
    stages: list = field(default_factory=list)
    head_widths: list = field(default_factory=lambda: [128])
    decoder: list = field(default_factory=list)
    attention: bool = True
    decoder_conv: bool = True
    radius_scale: float = 0.25
    radius_band: tuple = (0.5, 0.6)
    frames: int = 8
    time_scale: float = 1.0
    fps_mode: str = "pooled"

    def __post_init__(self):
        self.stages = [s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages]
        self.decoder = [d if isinstance(d, DecoderSpec) else DecoderSpec(**d) for d in self.decoder]
        self.radius_band = tuple(self.radius_band)
        self.validate()

    def validate(self):
        if self.task not in (CLASSIFICATION, SEGMENTATION):
            raise ValueError(f"unknown task {self.task!r}")
        want = 3 if self.task == CLASSIFICATION else 4
        if len(self.stages) != want:
            raise ValueError(f"{self.task} needs {want} encoder stages, got {len(self.stages)}")
        if self.task == SEGMENTATION and len(self.decoder) != 4:
            raise ValueError(f"segmentation needs 4 decoder stages, got {len(self.decoder)}")
        if self.task == CLASSIFICATION and len(self.head_widths) != 1:
            raise ValueError("classification head is 2 FC layers: give exactly one hidden width")
        cores = [s.cores for s in self.stages]
        if any(b >= a for a, b in zip(cores, cores[1:])):
            raise ValueError(f"core counts must strictly decrease, got {cores}")
        if self.fps_mode not in ("pooled", "per-frame"):
            raise ValueError(f"fps_mode must be pooled or per-frame, got {self.fps_mode!r}")

    def schedule(self, level):
        return RadiusSchedule(self.radius_scale, self.frames, level,
                              self.stages[level].delta_x, self.radius_band)

    def to_dict(self):
        d = asdict(self)
        d["radius_band"] = list(self.radius_band)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def default_spec(task=CLASSIFICATION):
    if task == CLASSIFICATION:
        return NetworkSpec(task, 1, 20, [StageSpec(256, 64, 64), StageSpec(64, 128, 128),
                                          StageSpec(16, 256, 256)], [128])
    return NetworkSpec(SEGMENTATION, 4, 12,
                       [StageSpec(2048, 64, 64), StageSpec(512, 128, 128),
                        StageSpec(128, 256, 256), StageSpec(32, 256, 256)],
                       head_widths=[],
                       decoder=[DecoderSpec(256), DecoderSpec(256), DecoderSpec(128), DecoderSpec(128)],
                       radius_scale=1.1, radius_band=(0.98, 1.0), frames=3)


# ---- upsampling -----------------------------------------------------------

def interpolation_matrix(target_positions, source_positions, k=3):
    """Sparse [targets, sources] inverse-distance weights over the k nearest sources.

    A target that coincides with a source takes that source's value exactly.
    """
    tgt = np.asarray(target_positions, dtype=np.float64)
    src = np.asarray(source_positions, dtype=np.float64)
    k = min(k, len(src))
    diff = tgt[:, None, :] - src[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
    d = np.take_along_axis(dist, nn, axis=1)
    exact = d[:, 0] == 0
    w = np.empty_like(d)
    w[~exact] = 1.0 / d[~exact]
    w[exact] = 0.0
    w[exact, 0] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    rows = np.repeat(np.arange(len(tgt)), k)
    return sp.csr_matrix((w.ravel(), (rows, nn.ravel())), shape=(len(tgt), len(src)))


def interpolate(features, target_positions, source_positions):
    return sparse_matmul(interpolation_matrix(target_positions, source_positions), features)


# ---- geometry plans -------------------------------------------------------

@dataclass
class Plan:
    """Coordinate-only structure of one forward pass (cacheable per sequence)."""

    level_sizes: list            # point count at levels 0..L
    level_positions: list
    encoder: list                # ConvGeometry per stage
    decoder: list = field(default_factory=list)   # ConvGeometry per decoder stage (or None)
    upsample: list = field(default_factory=list)  # sparse matrices, coarse -> fine


def _sample(spec, positions, timestamps, n, seed_index):
    if spec.fps_mode == "per-frame":
        frames = len(np.unique(timestamps))
        if n % frames:
            raise ValueError(f"per-frame FPS needs core count {n} divisible by {frames} frames")
        return farthest_point_sample_per_frame(positions, n // frames, timestamps, seed_index)
    return farthest_point_sample(positions, n, seed_index, timestamps)


def build_plan(spec, seq, seed_index=0):
    pos, ts = seq.positions, seq.timestamps
    if len(pos) < spec.stages[0].cores:
        raise ValueError(f"sequence has {len(pos)} points, first stage needs {spec.stages[0].cores}")
    sizes, positions, stamps, enc = [len(pos)], [pos], [ts], []
    for level, stage in enumerate(spec.stages):
        cores = _sample(spec, pos, ts, stage.cores, seed_index if level == 0 else 0)
        enc.append(build_geometry(pos, ts, cores.positions, cores.timestamps,
                                  spec.schedule(level), time_scale=spec.time_scale))
        pos, ts = cores.positions, cores.timestamps
        sizes.append(len(pos))
        positions.append(pos)
        stamps.append(ts)
    plan = Plan(sizes, positions, enc)
    if spec.task == SEGMENTATION:
        for m in reversed(range(len(spec.stages))):
            plan.upsample.append(interpolation_matrix(positions[m], positions[m + 1]))
            geo = None
            if spec.decoder_conv:
                geo = build_geometry(positions[m], stamps[m], positions[m], stamps[m],
                                     spec.schedule(m), time_scale=spec.time_scale)
            plan.decoder.append(geo)
    return plan


def merge_plans(plans):
    sizes = np.array([p.level_sizes for p in plans])
    enc = [merge_geometries([p.encoder[l] for p in plans], sizes[:, l])
           for l in range(len(plans[0].encoder))]
    merged = Plan(list(sizes.sum(axis=0)), [np.concatenate([p.level_positions[l] for p in plans])
                                            for l in range(sizes.shape[1])], enc)
    n_levels = len(plans[0].encoder)
    for i in range(len(plans[0].upsample)):
        m = n_levels - 1 - i
        merged.upsample.append(sp.block_diag([p.upsample[i] for p in plans], format="csr"))
        if plans[0].decoder[i] is None:
            merged.decoder.append(None)
        else:
            merged.decoder.append(merge_geometries([p.decoder[i] for p in plans], sizes[:, m]))
    return merged


# ---- models ---------------------------------------------------------------

class AstaNet(Module):
    def __init__(self, spec, seed=0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        c = spec.in_channels
        self.convs, self.norms = [], []
        widths = [c]
        for st in spec.stages:
            self.convs.append(AstaConvLayer(c, st.embed_dim, st.channels, rng, st.encode_widths,
                                            st.attend_widths, attention=spec.attention))
            self.norms.append(BatchNorm(st.channels))
            c = st.channels
            widths.append(c)
        if spec.task == CLASSIFICATION:
            dims = [c, *spec.head_widths, spec.class_count]
            self.head = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
            return
        self.dec_convs, self.dec_norms, self.dec_mlps = [], [], []
        for i, ds in enumerate(spec.decoder):
            m = len(spec.stages) - 1 - i
            if spec.decoder_conv:
                cc = ds.conv_channels or ds.channels
                self.dec_convs.append(AstaConvLayer(c, ds.embed_dim or ds.channels, cc, rng,
                                                    attention=spec.attention))
                self.dec_norms.append(BatchNorm(cc))
                c = cc
            self.dec_mlps.append(SharedMLP([c + widths[m], *ds.mlp_widths, ds.channels], rng))
            c = ds.channels
        dims = [c, *spec.head_widths, spec.class_count]
        self.head = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    def plan(self, seq, seed_index=0):
        if seq.feature_dim != self.spec.in_channels:
            raise ValueError(f"sequence has {seq.feature_dim} feature channels, "
                             f"network expects {self.spec.in_channels}")
        return build_plan(self.spec, seq, seed_index)

    def __call__(self, seqs, plans=None):
        """Logits: [batch, classes] for classification, [total points, classes] for segmentation."""
        if plans is None:
            plans = [self.plan(s) for s in seqs]
        plan = merge_plans(plans)
        x = Tensor(np.concatenate([s.features for s in seqs]))
        skips = [x]
        for conv, bn, geo in zip(self.convs, self.norms, plan.encoder):
            x = bn(conv(geo, x))
            skips.append(x)
        if self.spec.task == CLASSIFICATION:
            x = x.reshape(len(seqs), plan.level_sizes[-1] // len(seqs), x.shape[1]).max(axis=1)
            for lin in self.head[:-1]:
                x = relu(lin(x))
            return self.head[-1](x)
        n_levels = len(self.convs)
        for i, mlp in enumerate(self.dec_mlps):
            m = n_levels - 1 - i
            x = sparse_matmul(plan.upsample[i], x)
            if self.spec.decoder_conv:
                x = self.dec_norms[i](self.dec_convs[i](plan.decoder[i], x))
            x = mlp(concat([x, skips[m]], axis=1))
        for lin in self.head[:-1]:
            x = relu(lin(x))
        return self.head[-1](x)


def classify(model, seqs, plans=None):
    with no_grad():
        return model.eval()(seqs, plans).data


def segment(model, seqs, plans=None):
    with no_grad():
        return model.eval()(seqs, plans).data
