"""Instance builders shared by the conv, network and acceptance tests."""

import numpy as np

from asta3d.anchors import RadiusSchedule, make_anchors
from asta3d.conv import AstaConvLayer, ConvGeometry, build_geometry, relative_encoding
from asta3d.sampling import Neighborhood, farthest_point_sample


def random_instance(rng, n_points=40, frames=2, cores=5, channels=3, scale=0.8):
    pos = rng.uniform(0, 1, (n_points, 3))
    ts = np.sort(rng.integers(0, frames, n_points)).astype(float)
    feats = rng.normal(size=(n_points, channels))
    cs = farthest_point_sample(pos, cores, timestamps=ts)
    sched = RadiusSchedule(scale=scale, frames=frames, level=0)
    return pos, ts, feats, cs, sched


def geometry_for(pos, ts, cs, sched):
    return build_geometry(pos, ts, cs.positions, cs.timestamps, sched)


def handmade_geometry(core_pos, core_t, src_pos, src_t, indices, valid, delta_x=0.1):
    anchors = make_anchors(core_pos, core_t, delta_x)
    nb = Neighborhood(np.asarray(indices), np.asarray(valid))
    rel = relative_encoding(anchors, nb, np.asarray(src_pos, float), np.asarray(src_t, float))
    return ConvGeometry(np.asarray(core_pos, float), np.asarray(core_t, float), anchors, nb, rel)


def random_layer(rng, channels=3, embed=8, out=8, **kw):
    return AstaConvLayer(channels, embed, out, rng, **kw)


def mlp_eval_oracle(mlp, x):
    """Row-wise numpy evaluation of a SharedMLP in inference mode."""
    for i, lin in enumerate(mlp.linears):
        x = x @ lin.weight.data
        if lin.bias is not None:
            x = x + lin.bias.data
        if i < mlp.n_act:
            if mlp.norms:
                bn = mlp.norms[i]
                x = (x - bn.running_mean) / np.sqrt(bn.running_var + bn.eps) * bn.gamma.data + bn.beta.data
            x = np.maximum(x, 0)
    return x
