"""Typed graphs for the three problems and the permutations acting on them.

Topology (vertex counts, typed edge lists) depends only on the problem size;
features carry a leading batch dim.  Edges are stored as local (src, dst)
indices into the vertex list of their endpoint types:

* ``ls_het``: vertex types ``tx``/``rx``; ``sig`` edges (i, i) and ``int`` edges
  (i, j), i != j, both tx -> rx, carrying alpha_ij.
* ``ls_undir``: one vertex type ``D`` with feature alpha_ii; ``link`` edges
  (i, j), i != j, carrying alpha_ij.  Which end of a link a vertex sits on is
  part of its incidence type, so (i, j) and (j, i) look different from D_i.
* ``p_het``: vertex types ``ant``/``user``; edges (n, k) carrying (Re, Im) h_nk.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from edgegnn.errors import ConfigError, DimensionError

KINDS = ("ls_het", "ls_undir", "p_het")
ROLES = ("src", "dst")


@dataclass(frozen=True)
class Topology:
    kind: str
    vertex_counts: dict
    edges: dict  # etype -> (n_e, 2) int array of (src, dst) local indices
    edge_endpoints: dict  # etype -> (src vtype, dst vtype)

    @property
    def key(self):
        return (self.kind, tuple(sorted(self.vertex_counts.items())))

    def n_vertices(self):
        return sum(self.vertex_counts.values())

    def n_edges(self):
        return sum(len(e) for e in self.edges.values())


@dataclass(frozen=True, eq=False)
class Graph:
    topology: Topology
    vertex_features: dict = field(default_factory=dict)  # vtype -> (B, n, f)
    edge_features: dict = field(default_factory=dict)  # etype -> (B, n_e, f)
    action_site: tuple = ("vertex", "tx")
    batched: bool = True

    @property
    def kind(self):
        return self.topology.kind

    @property
    def vertex_counts(self):
        return self.topology.vertex_counts

    @property
    def edges(self):
        return self.topology.edges

    @property
    def edge_endpoints(self):
        return self.topology.edge_endpoints

    @property
    def batch_size(self):
        return next(iter(self.edge_features.values())).shape[0]

    def edge_feature(self, etype: str, i: int, j: int, b: int = 0) -> np.ndarray:
        idx = _edge_index(self.topology)[etype][(i, j)]
        return self.edge_features[etype][b, idx]

    def incidence_type(self, vtype: str, v: int, etype: str, e: int) -> tuple[str, str]:
        """(edge type, role of the vertex on the edge) as seen from vertex ``v``."""
        src, dst = self.edges[etype][e]
        s_t, d_t = self.edge_endpoints[etype]
        if s_t == vtype and src == v:
            return etype, "src"
        if d_t == vtype and dst == v:
            return etype, "dst"
        raise ConfigError(f"edge {etype}[{e}] is not incident to {vtype}[{v}]")


def graph_equal(a: Graph, b: Graph, atol: float = 0.0) -> bool:
    if a.topology.key != b.topology.key or a.action_site != b.action_site:
        return False
    for et in a.edges:
        if not np.array_equal(a.edges[et], b.edges[et]):
            return False
    for fa, fb in ((a.vertex_features, b.vertex_features), (a.edge_features, b.edge_features)):
        if fa.keys() != fb.keys():
            return False
        for k in fa:
            if fa[k].shape != fb[k].shape or not np.allclose(fa[k], fb[k], rtol=0, atol=atol):
                return False
    return True


@lru_cache(maxsize=None)
def ls_het_topology(K: int) -> Topology:
    sig = np.stack([np.arange(K), np.arange(K)], axis=1)
    ii, jj = np.nonzero(~np.eye(K, dtype=bool))
    return Topology(
        "ls_het",
        {"tx": K, "rx": K},
        {"sig": sig, "int": np.stack([ii, jj], axis=1)},
        {"sig": ("tx", "rx"), "int": ("tx", "rx")},
    )


@lru_cache(maxsize=None)
def ls_undir_topology(K: int) -> Topology:
    ii, jj = np.nonzero(~np.eye(K, dtype=bool))
    return Topology("ls_undir", {"D": K}, {"link": np.stack([ii, jj], axis=1)}, {"link": ("D", "D")})


@lru_cache(maxsize=None)
def p_het_topology(N: int, K: int) -> Topology:
    nn, kk = np.meshgrid(np.arange(N), np.arange(K), indexing="ij")
    return Topology(
        "p_het",
        {"ant": N, "user": K},
        {"e": np.stack([nn.ravel(), kk.ravel()], axis=1)},
        {"e": ("ant", "user")},
    )


_EDGE_INDEX: dict = {}


def _edge_index(topo: Topology) -> dict:
    idx = _EDGE_INDEX.get(topo.key)
    if idx is None:
        idx = {et: {(int(s), int(d)): n for n, (s, d) in enumerate(e)} for et, e in topo.edges.items()}
        _EDGE_INDEX[topo.key] = idx
    return idx


def _as_batch(x, ndim):
    x = np.asarray(x)
    if x.ndim == ndim:
        return x[None], False
    if x.ndim == ndim + 1:
        return x, True
    raise DimensionError(f"expected {ndim}-d input or a batch of them, got shape {x.shape}")


def _square(alpha):
    alpha, batched = _as_batch(np.asarray(alpha, dtype=np.float64), 2)
    if alpha.shape[-1] != alpha.shape[-2]:
        raise DimensionError(f"channel gains must be square, got {alpha.shape[-2:]}")
    return alpha, batched


def build_g_ls_het(alpha, family: str = "vertex") -> Graph:
    alpha, batched = _square(alpha)
    K = alpha.shape[-1]
    topo = ls_het_topology(K)
    sig = np.diagonal(alpha, axis1=-2, axis2=-1)[..., None]
    ii, jj = topo.edges["int"].T
    interf = alpha[:, ii, jj][..., None]
    site = ("vertex", "tx") if family == "vertex" else ("edge", "sig")
    return Graph(topo, {}, {"sig": sig, "int": interf}, site, batched)


def build_g_ls_undir(alpha, update_site: str = "vertex") -> Graph:
    if update_site not in ("vertex", "edge"):
        raise ConfigError(f"update_site must be 'vertex' or 'edge', got {update_site!r}")
    alpha, batched = _square(alpha)
    K = alpha.shape[-1]
    topo = ls_undir_topology(K)
    ii, jj = topo.edges["link"].T
    vf = {"D": np.diagonal(alpha, axis1=-2, axis2=-1)[..., None]}
    return Graph(topo, vf, {"link": alpha[:, ii, jj][..., None]}, ("vertex", "D"), batched)


def h_to_real(H) -> np.ndarray:
    """Complex (..., N, K) -> real (..., N, K, 2)."""
    H = np.asarray(H)
    if np.iscomplexobj(H):
        return np.stack([H.real, H.imag], axis=-1)
    if H.shape[-1] != 2:
        raise DimensionError("real channel input needs a trailing (re, im) axis")
    return H.astype(np.float64)


def real_to_h(X) -> np.ndarray:
    X = np.asarray(X)
    return X[..., 0] + 1j * X[..., 1]


def build_g_p_het(H) -> Graph:
    Hr = h_to_real(H)
    Hr, batched = _as_batch(Hr, 3)
    B, N, K, _ = Hr.shape
    topo = p_het_topology(N, K)
    return Graph(topo, {}, {"e": Hr.reshape(B, N * K, 2)}, ("edge", "e"), batched)


def build_graph(kind: str, data, family: str = "vertex") -> Graph:
    if kind == "ls_het":
        return build_g_ls_het(data, family)
    if kind == "ls_undir":
        return build_g_ls_undir(data, family)
    if kind == "p_het":
        return build_g_p_het(data)
    raise ConfigError(f"unknown graph kind {kind!r}; expected one of {KINDS}")


# ---------------------------------------------------------------------------
# permutations


def check_perm(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,):
        raise DimensionError(f"permutation of length {perm.shape} for size {n}")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise DimensionError("not a permutation")
    return perm


def inverse_perm(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def _vertex_perms(graph: Graph, perm):
    kind = graph.kind
    if kind == "p_het":
        if not (isinstance(perm, tuple) and len(perm) == 2):
            raise DimensionError("precoding graphs need a (antenna, user) permutation pair")
        return {"ant": check_perm(perm[0], graph.vertex_counts["ant"]),
                "user": check_perm(perm[1], graph.vertex_counts["user"])}
    K = next(iter(graph.vertex_counts.values()))
    p = check_perm(perm, K)
    return {vt: p for vt in graph.vertex_counts}


def _permute_graph(graph: Graph, perm) -> Graph:
    vp = _vertex_perms(graph, perm)
    index = _edge_index(graph.topology)
    vf = {vt: f[:, vp[vt]] for vt, f in graph.vertex_features.items()}
    ef = {}
    for et, feats in graph.edge_features.items():
        s_t, d_t = graph.edge_endpoints[et]
        src, dst = graph.edges[et].T
        take = [index[et][(int(a), int(b))] for a, b in zip(vp[s_t][src], vp[d_t][dst])]
        ef[et] = feats[:, take]
    return Graph(graph.topology, vf, ef, graph.action_site, graph.batched)


def permute_matrix(x, perm) -> np.ndarray:
    """out[..., a, b] = x[..., p[a], p[b]] (joint relabeling of a square matrix)."""
    x = np.asarray(x)
    p = check_perm(perm, x.shape[-1])
    return x[..., p, :][..., :, p]


def permute_vector(x, perm) -> np.ndarray:
    x = np.asarray(x)
    return x[..., check_perm(perm, x.shape[-1])]


def permute(obj, perm, what: str | None = None):
    """Relabel links (joint permutation) or antennas and users (pair of permutations).

    Matrices follow ``out[a, b] = obj[p[a], p[b]]`` (or ``obj[p1[a], p2[b]]``);
    vectors follow ``out[a] = obj[p[a]]``.  A trailing (re, im) axis on real
    precoding arrays is carried along.  Pass ``what`` to disambiguate a batch
    of K vectors of length K from a single K x K matrix.
    """
    if isinstance(obj, Graph):
        return _permute_graph(obj, perm)
    x = np.asarray(obj)
    if isinstance(perm, tuple) and len(perm) == 2:
        p1, p2 = perm
        real = not np.iscomplexobj(x) and x.ndim >= 3 and x.shape[-1] == 2
        ax = -3 if real else -2
        x = np.take(x, check_perm(p1, x.shape[ax]), axis=ax)
        return np.take(x, check_perm(p2, x.shape[ax + 1]), axis=ax + 1)
    if what is None:
        n = len(perm)
        what = "matrix" if x.ndim >= 2 and x.shape[-1] == x.shape[-2] == n else "vector"
    if what == "matrix":
        return permute_matrix(x, perm)
    if what == "vector":
        return permute_vector(x, perm)
    raise ConfigError(f"what must be 'matrix' or 'vector', got {what!r}")
