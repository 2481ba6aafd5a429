"""Anchor-based spatio-temporal attention convolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import AnchorSet, make_anchors
from .nn import Module, Parameter, SharedMLP
from .sampling import K_NEIGHBORS, Neighborhood, query_anchors
from .tensor import ShapeError, Tensor, as_tensor, concat, relu, scatter_rows, softmax, take_rows


@dataclass
class ConvGeometry:
    """Everything about one convolution that depends only on coordinates."""

    core_positions: np.ndarray  # [N, 3]
    core_timestamps: np.ndarray  # [N]
    anchors: AnchorSet
    neighbors: Neighborhood      # indices into the source point set
    relative: np.ndarray         # [N, 4, K, 4]: neighbor - anchor offset and |dt|

    @property
    def n_cores(self):
        return len(self.core_positions)


def relative_encoding(anchors, neighbors, src_positions, src_timestamps, time_scale=1.0):
    idx = neighbors.indices
    offset = src_positions[idx] - anchors.positions[:, :, None, :]
    dt = np.abs(src_timestamps[idx] - anchors.timestamps[:, :, None]) / time_scale
    return np.concatenate([offset, dt[..., None]], axis=-1)


def build_geometry(src_positions, src_timestamps, core_positions, core_timestamps,
                   schedule, k=K_NEIGHBORS, time_scale=1.0):
    src_positions = np.asarray(src_positions, dtype=np.float64)
    src_timestamps = np.asarray(src_timestamps, dtype=np.float64)
    anchors = make_anchors(core_positions, core_timestamps, schedule.anchor_scale)
    nbrs = query_anchors(anchors, src_positions, src_timestamps, schedule.radii(), k)
    rel = relative_encoding(anchors, nbrs, src_positions, src_timestamps, time_scale)
    return ConvGeometry(np.asarray(core_positions, dtype=np.float64),
                        np.asarray(core_timestamps, dtype=np.float64), anchors, nbrs, rel)


def merge_geometries(geoms, source_sizes):
    """Stack per-sequence geometries into one, offsetting neighbor indices."""
    offsets = np.concatenate([[0], np.cumsum(source_sizes)[:-1]])
    idx = np.concatenate([g.neighbors.indices + off for g, off in zip(geoms, offsets)])
    counts = np.concatenate([g.neighbors.valid_count for g in geoms])
    anchors = AnchorSet(np.concatenate([g.anchors.positions for g in geoms]),
                        np.concatenate([g.anchors.timestamps for g in geoms]),
                        geoms[0].anchors.delta_x)
    return ConvGeometry(np.concatenate([g.core_positions for g in geoms]),
                        np.concatenate([g.core_timestamps for g in geoms]),
                        anchors, Neighborhood(idx, counts),
                        np.concatenate([g.relative for g in geoms]))


class AstaConvLayer(Module):
    """Attentive embedding of neighbors into 4 anchors, then a 1x4 anchor convolution.

    ``attention=False`` swaps the softmax-weighted sum for a per-channel max
    over the neighbor slots.
    """

    def __init__(self, in_channels, embed_dim, out_channels, rng, encode_widths=None,
                 attend_widths=None, attention=True, batch_norm=True):
        self.in_channels = in_channels
        self.embed_dim = embed_dim
        self.out_channels = out_channels
        self.attention = attention
        enc_hidden = [embed_dim] if encode_widths is None else list(encode_widths)
        att_hidden = [embed_dim] if attend_widths is None else list(attend_widths)
        phi = 4 + in_channels
        self.encode = SharedMLP([phi, *enc_hidden, embed_dim], rng, batch_norm=batch_norm)
        if attention:
            self.attend = SharedMLP([phi + embed_dim, *att_hidden, embed_dim], rng,
                                    batch_norm=batch_norm, final_activation=False)
        scale = np.sqrt(2.0 / (4 * embed_dim))
        self.weight = Parameter(rng.normal(0.0, scale, (4, embed_dim, out_channels)))
        self.bias = Parameter(np.zeros(out_channels))
        self.last_attention = None

    def __call__(self, geometry, features):
        return anchor_conv(self, attentive_embed(self, geometry, features))


def attentive_embed(layer, geometry, features):
    """Anchor features [N, 4, d]; anchors with no neighbors stay exactly zero."""
    features = as_tensor(features)
    if features.ndim != 2 or features.shape[1] != layer.in_channels:
        raise ShapeError(f"features {features.shape} do not match layer input width {layer.in_channels}")
    n, k = geometry.n_cores, geometry.relative.shape[2]
    d = layer.embed_dim
    flat_valid = np.flatnonzero(geometry.neighbors.valid_count.reshape(-1) > 0)
    v = len(flat_valid)
    if v == 0:
        layer.last_attention = np.zeros((0, k, d))
        return Tensor(np.zeros((n, 4, d)))

    rel = geometry.relative.reshape(n * 4, k, 4)[flat_valid].reshape(v * k, 4)
    idx = geometry.neighbors.indices.reshape(n * 4, k)[flat_valid].reshape(-1)
    phi = concat([Tensor(rel), take_rows(features, idx)], axis=1)
    h = layer.encode(phi)
    h3 = h.reshape(v, k, d)
    if layer.attention:
        w = softmax(layer.attend(concat([phi, h], axis=1)).reshape(v, k, d), axis=1)
        layer.last_attention = w.data
        e = (h3 * w).sum(axis=1)
    else:
        layer.last_attention = None
        e = h3.max(axis=1)
    return scatter_rows(e, flat_valid, n * 4).reshape(n, 4, d)


def anchor_conv(layer, e):
    """ReLU(sum_j e_j W_j + b) over the 4 anchors of every core."""
    e = as_tensor(e)
    if e.ndim != 3 or e.shape[1:] != (4, layer.embed_dim):
        raise ShapeError(f"anchor features {e.shape} do not match (N, 4, {layer.embed_dim})")
    n = e.shape[0]
    w = layer.weight.reshape(4 * layer.embed_dim, layer.out_channels)
    return relu(e.reshape(n, 4 * layer.embed_dim) @ w + layer.bias)


def asta_conv_forward(layer, positions, timestamps, features, cores, schedule, time_scale=1.0):
    """Run one convolution from raw points to the given core set.

    Returns the core positions, timestamps and output features.
    """
    geo = build_geometry(positions, timestamps, cores.positions, cores.timestamps,
                         schedule, time_scale=time_scale)
    return cores.positions, cores.timestamps, layer(geo, features)
