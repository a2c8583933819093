"""Vertex-GNNs and Edge-GNNs over the typed graphs in :mod:`edgegnn.graphs`.

One layer updates every vertex type (Vertex-GNN) or every edge type (Edge-GNN):

* process: each neighbor message goes through a processor whose weights are
  selected by the typed incidence (a *channel*);
* pool: a single sum/mean/max over all neighbor messages of the target;
* combine: merge the pooled message with the target's previous representation.

Channels for a Vertex-GNN are keyed by (target vertex type, its role on the
edge, edge type); the message input is the neighbor vertex representation
and the edge feature.  Channels for an Edge-GNN are keyed by (target edge
type, neighbor edge type, role of the shared vertex on the target, role on the
neighbor); the input is the neighbor edge representation and the shared
vertex feature.  A neighbor edge is any edge incident to the shared vertex
whose other endpoint differs from the target's other endpoint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from edgegnn import graphs as gr
from edgegnn import numerics as nx
from edgegnn.errors import ConfigError, DimensionError

FAMILIES = ("vertex", "edge")
PROCESSORS = ("linear", "fnn")
COMBINERS = ("linear", "affine_act", "fnn")
POOLINGS = ("sum", "mean", "max")
READOUTS = ("none", "fnn", "fnn_with_H")

# feature dims carried by each graph kind: (vertex type -> dim, edge type -> dim)
FEATURE_DIMS = {
    "ls_het": ({"tx": 0, "rx": 0}, {"sig": 1, "int": 1}),
    "ls_undir": ({"D": 1}, {"link": 1}),
    "p_het": ({"ant": 0, "user": 0}, {"e": 2}),
}
ACTION = {
    ("vertex", "ls_het"): "tx",
    ("vertex", "ls_undir"): "D",
    ("vertex", "p_het"): None,  # needs a read-out
    ("edge", "ls_het"): "sig",
    ("edge", "ls_undir"): None,  # needs a read-out
    ("edge", "p_het"): "e",
}
NEEDS_READOUT = {("vertex", "p_het"), ("edge", "ls_undir")}


@dataclass
class GnnConfig:
    family: str = "vertex"
    graph_kind: str = "ls_het"
    dims: list = field(default_factory=lambda: [16, 16, 1])
    q_dims: list | None = None
    type_dims: dict | None = None
    type_q_dims: dict | None = None
    processor: str = "linear"
    processor_hidden: list = field(default_factory=list)
    combiner: str = "affine_act"
    combiner_hidden: list = field(default_factory=list)
    combiner_sig: str | None = None
    combiner_int: str | None = None
    pooling: str = "mean"
    activation: str = "relu"
    readout: str = "none"
    readout_hidden: list = field(default_factory=lambda: [16])
    p_max: float = 1.0

    def __post_init__(self):
        self.validate()

    @property
    def L(self):
        return len(self.dims)

    @property
    def problem_kind(self):
        return "pr" if self.graph_kind == "p_het" else "ls"

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.family not in FAMILIES:
            bad(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.graph_kind not in gr.KINDS:
            bad(f"graph_kind must be one of {gr.KINDS}, got {self.graph_kind!r}")
        self.dims = [int(d) for d in self.dims]
        if not self.dims or min(self.dims) < 1:
            bad("dims must be a non-empty list of positive ints")
        if self.q_dims is not None:
            self.q_dims = [int(d) for d in self.q_dims]
            if len(self.q_dims) != self.L or min(self.q_dims) < 1:
                bad("q_dims must match dims in length and be positive")
        types = set(FEATURE_DIMS[self.graph_kind][0 if self.family == "vertex" else 1])
        for name in ("type_dims", "type_q_dims"):
            td = getattr(self, name)
            if td is None:
                continue
            for t, v in td.items():
                if t not in types:
                    bad(f"{name} names unknown type {t!r}; expected one of {sorted(types)}")
                if len(v) != self.L or min(v) < 1:
                    bad(f"{name}[{t!r}] must have {self.L} positive entries")
            setattr(self, name, {t: [int(x) for x in v] for t, v in td.items()})
        if self.processor not in PROCESSORS:
            bad(f"processor must be one of {PROCESSORS}, got {self.processor!r}")
        for name in ("combiner", "combiner_sig", "combiner_int"):
            v = getattr(self, name)
            if v is not None and v not in COMBINERS:
                bad(f"{name} must be one of {COMBINERS}, got {v!r}")
        if (self.combiner_sig or self.combiner_int) and (self.family, self.graph_kind) != ("edge", "ls_het"):
            bad("combiner_sig / combiner_int apply to the heterogeneous scheduling Edge-GNN only")
        if self.pooling not in POOLINGS:
            bad(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.activation not in nx.ACTIVATIONS:
            bad(f"activation must be one of {nx.ACTIVATIONS}, got {self.activation!r}")
        if self.readout not in READOUTS:
            bad(f"readout must be one of {READOUTS}, got {self.readout!r}")
        key = (self.family, self.graph_kind)
        if key in NEEDS_READOUT and self.readout == "none":
            bad(f"{self.family} GNN on {self.graph_kind} needs a read-out layer")
        if key not in NEEDS_READOUT and self.readout != "none":
            bad(f"{self.family} GNN on {self.graph_kind} takes its action directly; set readout='none'")
        if self.readout == "fnn_with_H" and key != ("vertex", "p_het"):
            bad("fnn_with_H read-out is only defined for the precoding Vertex-GNN")
        if key not in NEEDS_READOUT:
            want = 2 if self.graph_kind == "p_het" else 1
            got = self.dim(ACTION[key], self.L - 1)
            if got != want:
                bad(f"last layer dim of {ACTION[key]!r} must be {want}, got {got}")
        if self.p_max <= 0:
            bad("p_max must be positive")

    def dim(self, t: str, layer: int) -> int:
        if self.type_dims and t in self.type_dims:
            return self.type_dims[t][layer]
        return self.dims[layer]

    def q_dim(self, t: str, layer: int) -> int:
        if self.type_q_dims and t in self.type_q_dims:
            return self.type_q_dims[t][layer]
        if self.q_dims is not None:
            return self.q_dims[layer]
        return self.dim(t, layer)

    def combiner_for(self, t: str) -> str:
        if t == "sig" and self.combiner_sig:
            return self.combiner_sig
        if t == "int" and self.combiner_int:
            return self.combiner_int
        return self.combiner

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown GnnConfig fields: {sorted(extra)}")
        return cls(**d)

    def hash(self) -> str:
        return hashlib.sha1(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# channels


@dataclass(frozen=True)
class Channel:
    key: str
    target: str
    source: str  # vertex type (vertex family) or edge type (edge family)
    via: str  # edge type (vertex family) or shared vertex type (edge family)
    nbr_idx: np.ndarray  # (n_target, deg) indices into source
    via_idx: np.ndarray  # (n_target, deg) edge indices, or (n_target,) shared vertex indices

    @property
    def degree(self):
        return self.nbr_idx.shape[1]


def _other(role):
    return "dst" if role == "src" else "src"


@lru_cache(maxsize=None)
def _channels_cached(key, family):
    topo = _TOPOS[key]
    return vertex_channels(topo) if family == "vertex" else edge_channels(topo)


_TOPOS: dict = {}


def channels(topo: gr.Topology, family: str) -> list[Channel]:
    _TOPOS.setdefault(topo.key, topo)
    return _channels_cached(topo.key, family)


def vertex_channels(topo: gr.Topology) -> list[Channel]:
    out = []
    for vt, n in topo.vertex_counts.items():
        for et, e in topo.edges.items():
            ends = topo.edge_endpoints[et]
            for r, role in enumerate(gr.ROLES):
                if ends[r] != vt:
                    continue
                nbr_type = ends[1 - r]
                rows_e, rows_v = [], []
                for v in range(n):
                    sel = np.flatnonzero(e[:, r] == v)
                    rows_e.append(sel)
                    rows_v.append(e[sel, 1 - r])
                degs = {len(x) for x in rows_e}
                if len(degs) != 1:
                    raise DimensionError(f"irregular incidence for {vt}/{et}/{role}")
                if degs.pop() == 0:
                    continue
                out.append(Channel(f"{vt}|{role}|{et}", vt, nbr_type, et, np.array(rows_v), np.array(rows_e)))
    return out


def edge_channels(topo: gr.Topology) -> list[Channel]:
    out = []
    for tt, te in topo.edges.items():
        t_ends = topo.edge_endpoints[tt]
        for rt, role_t in enumerate(gr.ROLES):
            shared_t = t_ends[rt]
            other_t = t_ends[1 - rt]
            for nt, ne in topo.edges.items():
                n_ends = topo.edge_endpoints[nt]
                for rn, role_n in enumerate(gr.ROLES):
                    if n_ends[rn] != shared_t:
                        continue
                    n_other_t = n_ends[1 - rn]
                    rows = []
                    for a in range(len(te)):
                        v, o = te[a, rt], te[a, 1 - rt]
                        sel = ne[:, rn] == v
                        if n_other_t == other_t:
                            sel &= ne[:, 1 - rn] != o
                        rows.append(np.flatnonzero(sel))
                    degs = {len(x) for x in rows}
                    if len(degs) != 1:
                        raise DimensionError(f"irregular edge neighborhood {tt}/{nt}/{role_t}/{role_n}")
                    if degs.pop() == 0:
                        continue
                    out.append(Channel(f"{tt}|{nt}|{role_t}|{role_n}", tt, nt, shared_t,
                                       np.array(rows), te[:, rt].copy()))
    return out


def _reference_topology(kind):
    if kind == "p_het":
        return gr.p_het_topology(3, 3)
    if kind == "ls_het":
        return gr.ls_het_topology(4)
    return gr.ls_undir_topology(4)


# ---------------------------------------------------------------------------
# parameter layout


def _fnn_shapes(prefix, in_dims: dict, hidden: list, out_dim: int, bias: bool, first_bias: bool = True):
    """Shapes for an FNN whose first layer takes several named input pieces."""
    shapes = {}
    widths = list(hidden) + [out_dim]
    for piece, d in in_dims.items():
        if d > 0:
            shapes[f"{prefix}.W0.{piece}"] = (d, widths[0])
    if first_bias:
        shapes[f"{prefix}.b0"] = (widths[0],)
    for k in range(1, len(widths)):
        shapes[f"{prefix}.W{k}"] = (widths[k - 1], widths[k])
        if bias:
            shapes[f"{prefix}.b{k}"] = (widths[k],)
    return shapes


@dataclass(frozen=True)
class TargetPlan:
    layer: int
    target: str
    in_dim: int
    q_dim: int
    out_dim: int
    combiner: str
    final: bool
    channels: tuple  # (key, source, via, source_dim, via_dim)


def layer_plan(config: GnnConfig) -> list[list[TargetPlan]]:
    vdims, edims = FEATURE_DIMS[config.graph_kind]
    topo = _reference_topology(config.graph_kind)
    chans = channels(topo, config.family)
    if config.family == "vertex":
        init, via_dims = dict(vdims), edims
    else:
        init, via_dims = dict(edims), vdims
    action = ACTION[(config.family, config.graph_kind)]
    prev = init
    plan = []
    for l in range(config.L):
        last = l == config.L - 1
        targets = [action] if (last and action is not None) else list(init)
        layer = []
        for t in targets:
            cs = tuple((c.key, c.source, c.via, prev[c.source], via_dims[c.via]) for c in chans if c.target == t)
            layer.append(TargetPlan(l, t, prev[t], config.q_dim(t, l), config.dim(t, l),
                                    config.combiner_for(t), last and action is not None, cs))
        plan.append(layer)
        prev = {t: config.dim(t, l) for t in init}
    return plan


def param_shapes(config: GnnConfig) -> dict[str, tuple]:
    shapes = {}
    proc_fnn = config.processor == "fnn"
    for layer in layer_plan(config):
        for tp in layer:
            pre = f"l{tp.layer}.{tp.target}"
            for key, _, _, sd, vd in tp.channels:
                hidden = config.processor_hidden if proc_fnn else []
                shapes.update(_fnn_shapes(f"{pre}.q[{key}]", {"d": sd, "x": vd}, hidden, tp.q_dim,
                                          bias=proc_fnn, first_bias=proc_fnn))
            hidden = config.combiner_hidden if tp.combiner == "fnn" else []
            shapes.update(_fnn_shapes(f"{pre}.cb", {"d": tp.in_dim, "a": tp.q_dim}, hidden, tp.out_dim, bias=True))
    if config.readout != "none":
        out_dim = 2 if config.graph_kind == "p_het" else 1
        last = config.L - 1
        if config.graph_kind == "p_het":
            pieces = {"ant": config.dim("ant", last), "user": config.dim("user", last)}
            if config.readout == "fnn_with_H":
                pieces["h"] = 2
        else:
            m = config.dim("link", last)
            pieces = {"out": m, "in": m}
        shapes.update(_fnn_shapes("readout", pieces, config.readout_hidden, out_dim, bias=True))
    return shapes


def param_count(config: GnnConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


def _glorot(rng, shapes: dict) -> dict:
    # pieces of one split first layer share the fan-in of the full layer
    fan_in = {}
    for name, s in shapes.items():
        if len(s) == 2:
            stem = name.rsplit(".", 1)[0] if ".W0." in name else name
            fan_in[stem] = fan_in.get(stem, 0) + s[0]
    out = {}
    for name, s in shapes.items():
        if len(s) == 1:
            out[name] = np.zeros(s)
            continue
        stem = name.rsplit(".", 1)[0] if ".W0." in name else name
        a = np.sqrt(6.0 / (fan_in[stem] + s[1]))
        out[name] = rng.uniform(-a, a, size=s)
    return out


# ---------------------------------------------------------------------------
# model


class GnnModel:
    def __init__(self, config: GnnConfig, params: dict[str, np.ndarray]):
        self.config = config
        shapes = param_shapes(config)
        if set(shapes) != set(params):
            missing, extra = set(shapes) - set(params), set(params) - set(shapes)
            raise ConfigError(f"parameter names mismatch; missing={sorted(missing)[:3]} extra={sorted(extra)[:3]}")
        for k, s in shapes.items():
            if tuple(params[k].shape) != tuple(s):
                raise DimensionError(f"param {k} has shape {params[k].shape}, expected {s}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in shapes}
        self._plan = layer_plan(config)

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "GnnModel":
        return GnnModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def __call__(self, graph: gr.Graph) -> np.ndarray:
        return self.predict(graph)

    def predict(self, graph: gr.Graph) -> np.ndarray:
        tape = nx.Tape()
        P = {k: tape.constant(v) for k, v in self.params.items()}
        out = self._forward(tape, P, graph).data
        return out if graph.batched else out[0]

    def forward_tape(self, tape: nx.Tape, graph: gr.Graph):
        """Forward pass with every weight registered as a named parameter on ``tape``."""
        P = {k: tape.param(v, name=k) for k, v in self.params.items()}
        return self._forward(tape, P, graph), P

    # -- internals -------------------------------------------------------

    def _check_graph(self, graph):
        if graph.kind != self.config.graph_kind:
            raise ConfigError(f"model expects a {self.config.graph_kind} graph, got {graph.kind}")

    def _affine_first(self, P, prefix, pieces: dict, bias: bool):
        """Sum of per-piece matmuls for a split first layer (no concat)."""
        h = None
        for piece, x in pieces.items():
            w = P.get(f"{prefix}.W0.{piece}")
            if x is None or w is None:
                continue
            term = x @ w
            h = term if h is None else h + term
        if bias:
            h = h + P[f"{prefix}.b0"]
        return h

    def _fnn_tail(self, P, prefix, h, n_hidden, act, final_act: bool, bias: bool = True):
        for k in range(1, n_hidden + 1):
            h = nx.activation(act, h)
            h = h @ P[f"{prefix}.W{k}"]
            if bias:
                h = h + P[f"{prefix}.b{k}"]
        if final_act:
            h = nx.activation(act, h)
        return h

    def _forward(self, tape, P, graph: gr.Graph):
        cfg = self.config
        self._check_graph(graph)
        fam = cfg.family
        act = cfg.activation
        chans = {c.key: c for c in channels(graph.topology, fam)}
        vfeat = {t: tape.constant(x) for t, x in graph.vertex_features.items()}
        efeat = {t: tape.constant(x) for t, x in graph.edge_features.items()}
        if fam == "vertex":
            reps, via = dict(vfeat), efeat
            counts = graph.vertex_counts
        else:
            reps, via = dict(efeat), vfeat
            counts = {t: len(e) for t, e in graph.edges.items()}
        B = graph.batch_size
        proc_fnn = cfg.processor == "fnn"
        n_proc_hidden = len(cfg.processor_hidden) if proc_fnn else 0

        for layer in self._plan:
            new = {}
            for tp in layer:
                pre = f"l{tp.layer}.{tp.target}"
                msgs, total_deg = [], 0
                for key, src, vt, sd, vd in tp.channels:
                    c = chans.get(key)
                    if c is None:
                        continue
                    qp = f"{pre}.q[{key}]"
                    pieces = {}
                    if sd > 0:
                        pieces["d"] = (reps[src] @ P[f"{qp}.W0.d"]).take(c.nbr_idx, axis=1)
                    if vd > 0:
                        xv = (via[vt] @ P[f"{qp}.W0.x"]).take(c.via_idx, axis=1)
                        if fam == "edge":  # one shared vertex per target: broadcast over neighbors
                            xv = xv.reshape(B, c.nbr_idx.shape[0], 1, xv.shape[-1])
                        pieces["x"] = xv
                    h = None
                    for x in pieces.values():
                        h = x if h is None else h + x
                    if proc_fnn:
                        h = h + P[f"{qp}.b0"]
                        h = self._fnn_tail(P, qp, h, n_proc_hidden, act, final_act=False)
                    msgs.append(h)
                    total_deg += c.degree
                n_t = counts[tp.target]
                if not msgs:
                    agg = tape.constant(np.zeros((B, n_t, tp.q_dim)))
                elif cfg.pooling == "max":
                    agg = nx.concat(msgs, axis=2).max(axis=2)
                else:
                    agg = msgs[0].sum(axis=2)
                    for m in msgs[1:]:
                        agg = agg + m.sum(axis=2)
                    if cfg.pooling == "mean":
                        agg = agg * (1.0 / total_deg)
                cp = f"{pre}.cb"
                prev = reps.get(tp.target) if tp.in_dim > 0 else None
                h = self._affine_first(P, cp, {"d": prev, "a": agg}, bias=True)
                if tp.combiner == "linear":
                    out = h
                else:
                    n_hidden = len(cfg.combiner_hidden) if tp.combiner == "fnn" else 0
                    out = self._fnn_tail(P, cp, h, n_hidden, act, final_act=not tp.final)
                new[tp.target] = out
            reps = new

        if cfg.readout != "none":
            return self._readout(tape, P, graph, reps, efeat)
        action = ACTION[(fam, cfg.graph_kind)]
        y = reps[action]
        if cfg.graph_kind == "p_het":
            return self._precoding_head(tape, graph, y)
        return nx.activation("sigmoid", y.reshape(B, y.shape[1]))

    def _readout(self, tape, P, graph, reps, efeat):
        cfg = self.config
        B = graph.batch_size
        hidden = cfg.readout_hidden
        if cfg.graph_kind == "p_het":
            e = graph.edges["e"]
            pieces = {
                "ant": (reps["ant"] @ P["readout.W0.ant"]).take(e[:, 0], axis=1),
                "user": (reps["user"] @ P["readout.W0.user"]).take(e[:, 1], axis=1),
            }
            if cfg.readout == "fnn_with_H":
                pieces["h"] = efeat["e"] @ P["readout.W0.h"]
            h = pieces["ant"] + pieces["user"] + P["readout.b0"]
            if "h" in pieces:
                h = h + pieces["h"]
            h = self._fnn_tail(P, "readout", h, len(hidden), cfg.activation, final_act=False)
            return self._precoding_head(tape, graph, h)
        # undirected scheduling: pool each vertex's outgoing and incoming link representations
        chans = {(c.target, c.key.split("|")[1]): c for c in channels(graph.topology, "vertex")}
        d = reps["link"]
        pooled = {}
        for role, piece in (("src", "out"), ("dst", "in")):
            g = d.take(chans[("D", role)].via_idx, axis=1)
            if cfg.pooling == "max":
                pooled[piece] = g.max(axis=2)
            elif cfg.pooling == "mean":
                pooled[piece] = g.mean(axis=2)
            else:
                pooled[piece] = g.sum(axis=2)
        h = self._affine_first(P, "readout", pooled, bias=True)
        h = self._fnn_tail(P, "readout", h, len(hidden), cfg.activation, final_act=False)
        return nx.activation("sigmoid", h.reshape(B, h.shape[1]))

    def _precoding_head(self, tape, graph, y):
        N, K = graph.vertex_counts["ant"], graph.vertex_counts["user"]
        B = graph.batch_size
        V = y.reshape(B, N, K, 2)
        power = nx.square(V).sum(axis=(1, 2, 3), keepdims=True) + 1e-12
        scale = nx.sqrt(tape.constant(self.config.p_max) / power)
        return V * scale


def init_model(config: GnnConfig, seed=0, zero: bool = False) -> GnnModel:
    shapes = param_shapes(config)
    if zero:
        return GnnModel(config, {k: np.zeros(s) for k, s in shapes.items()})
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return GnnModel(config, _glorot(rng, shapes))


def _forward_checked(model, graph, family, kinds):
    cfg = model.config
    if cfg.family != family or cfg.graph_kind not in kinds:
        raise ConfigError(f"{cfg.family}/{cfg.graph_kind} model used where {family}/{kinds} is expected")
    return model.predict(graph)


def forward_vertex_ls_het(model: GnnModel, graph: gr.Graph) -> np.ndarray:
    return _forward_checked(model, graph, "vertex", ("ls_het",))


def forward_vertex_ls_undir(model: GnnModel, graph: gr.Graph) -> np.ndarray:
    return _forward_checked(model, graph, "vertex", ("ls_undir",))


def forward_edge_ls(model: GnnModel, graph: gr.Graph) -> np.ndarray:
    return _forward_checked(model, graph, "edge", ("ls_het", "ls_undir"))


def forward_vertex_p_het(model: GnnModel, graph: gr.Graph) -> np.ndarray:
    return _forward_checked(model, graph, "vertex", ("p_het",))


def forward_edge_p_het(model: GnnModel, graph: gr.Graph) -> np.ndarray:
    return _forward_checked(model, graph, "edge", ("p_het",))


# ---------------------------------------------------------------------------
# dimension conditions for the precoding GNNs


def validate_dims(config: GnnConfig, N: int, K: int) -> dict:
    """Per-layer check that representations are wide enough to carry H (2NK reals)."""
    if config.graph_kind != "p_het":
        raise ConfigError("dimension conditions are defined for precoding configs only")
    layers = []
    need = 2 * N * K
    for l in range(config.L):
        if config.family == "vertex":
            m_d = N * config.dim("ant", l) + K * config.dim("user", l) - need
            m_q = N * config.q_dim("ant", l) + K * config.q_dim("user", l) - need
            checked_d = True
        else:
            m_d = config.dim("e", l) - 2
            m_q = config.q_dim("e", l) - 2
            checked_d = l < config.L - 1  # the last edge layer is the action itself
        ok = (m_d >= 0 or not checked_d) and m_q >= 0
        layers.append({"layer": l + 1, "margin_d": int(m_d), "margin_q": int(m_q), "ok": bool(ok)})
    return {"pass": all(x["ok"] for x in layers), "layers": layers}


# ---------------------------------------------------------------------------
# gradient checking


def _weighted_output(model, tape, graph, w):
    out, P = model.forward_tape(tape, graph)
    return (out * tape.constant(w)).sum(), P


def directional_grad_check(model: GnnModel, graph: gr.Graph, seed=0, h: float = 1e-5) -> float:
    """Relative error between the tape gradient and a central difference along a random direction.

    The scalar checked is a random weighting of every output entry.  ReLU and
    max pooling are piecewise linear, so a step that straddles a kink gives a
    wrong difference quotient; the smaller error of steps h and h/10 is
    returned.  A kink spoils only steps longer than its distance, while a
    wrong gradient fails at both.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tape = nx.Tape()
    shape = model.predict(graph).shape if graph.batched else (1,) + model.predict(graph).shape
    w = rng.standard_normal(shape)
    loss, P = _weighted_output(model, tape, graph, w)
    grads = tape.backward(loss)
    u = {k: rng.standard_normal(v.shape) for k, v in model.params.items()}
    analytic = float(sum(np.sum(grads[P[k]] * u[k]) for k in u))

    def at(t):
        m = GnnModel(model.config, {k: model.params[k] + t * u[k] for k in u})
        return float(np.sum(m.predict(graph).reshape(shape) * w))

    errs = []
    for step in (h, h / 10.0):
        numeric = (at(step) - at(-step)) / (2.0 * step)
        errs.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
    return min(errs)
