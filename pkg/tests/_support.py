"""Shared builders for the gnn and acceptance tests."""

import itertools

import numpy as np

from edgegnn import channel as ch
from edgegnn import graphs as gr
from edgegnn.gnn import NEEDS_READOUT, PROCESSORS, COMBINERS, POOLINGS, GnnConfig, GnnModel, init_model

KIND_SIZES = {"ls_het": 3, "ls_undir": 3, "p_het": (3, 2)}


def small_config(family, kind, processor="linear", combiner="affine_act", pooling="mean", width=3, **kw):
    if (family, kind) in NEEDS_READOUT:
        dims = [width, width, width]
        kw.setdefault("readout", "fnn")
        kw.setdefault("readout_hidden", [width])
    else:
        dims = [width, width, 2 if kind == "p_het" else 1]
    extra = {}
    if processor == "fnn":
        extra["processor_hidden"] = [width]
    if combiner == "fnn" or kw.get("combiner_sig") == "fnn" or kw.get("combiner_int") == "fnn":
        extra["combiner_hidden"] = [width]
    return GnnConfig(family=family, graph_kind=kind, dims=dims, processor=processor, combiner=combiner,
                     pooling=pooling, **extra, **kw)


def config_grid(width=3):
    """Every family x graph kind x processor x combiner x pooling, plus read-out and split-combiner variants."""
    out = {}
    for family, kind in itertools.product(("vertex", "edge"), ("ls_het", "ls_undir", "p_het")):
        for proc, comb, pool in itertools.product(PROCESSORS, COMBINERS, POOLINGS):
            out[f"{family}/{kind}/{proc}/{comb}/{pool}"] = small_config(family, kind, proc, comb, pool, width)
    for pool in POOLINGS:
        out[f"vertex/p_het/readout-H/{pool}"] = small_config("vertex", "p_het", pooling=pool, width=width,
                                                             readout="fnn_with_H")
        out[f"edge/ls_het/split/{pool}"] = small_config("edge", "ls_het", pooling=pool, width=width,
                                                        combiner_sig="fnn", combiner_int="linear")
    return out


def generic_model(config, rng, scale=0.2):
    """Random init plus a jitter on every tensor, so biases are nonzero and no ReLU sits exactly at 0."""
    m = init_model(config, rng)
    return GnnModel(config, {k: v + scale * rng.standard_normal(v.shape) for k, v in m.params.items()})


def random_input(kind, rng, batch=2, size=None):
    size = size or KIND_SIZES[kind]
    if kind == "p_het":
        return ch.gen_rayleigh_H(*size, rng, batch=batch)
    return rng.exponential(size=(batch, size, size)) + 0.05


def random_graph(config, rng, batch=2, size=None):
    return gr.build_graph(config.graph_kind, random_input(config.graph_kind, rng, batch, size), config.family)


def random_perm(kind, rng, size=None):
    size = size or KIND_SIZES[kind]
    if kind == "p_het":
        return (rng.permutation(size[0]), rng.permutation(size[1]))
    return rng.permutation(size)


def permute_input(kind, x, perm):
    return gr.permute(x, perm, what=None if kind == "p_het" else "matrix")


def permute_output(kind, y, perm):
    if kind == "p_het":
        return gr.permute(y, perm)
    return gr.permute(y, perm, what="vector")


def equivariance_gap(model, rng, n_perms, size=None):
    kind = model.config.graph_kind
    x = random_input(kind, rng, batch=2, size=size)
    y = model.predict(gr.build_graph(kind, x, model.config.family))
    worst = 0.0
    for _ in range(n_perms):
        perm = random_perm(kind, rng, size)
        yp = model.predict(gr.build_graph(kind, permute_input(kind, x, perm), model.config.family))
        worst = max(worst, float(np.abs(yp - permute_output(kind, y, perm)).max()))
    return worst
