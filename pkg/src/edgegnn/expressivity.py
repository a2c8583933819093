"""Channel pairs that weak GNNs cannot tell apart, and how often that matters.

A scheduling pair (alpha1, alpha2) shares the direct gains and, for every
link, the sum of interference it causes and the sum it receives.  A precoding
pair (H1, H2) shares every row sum and every column sum.  GNNs whose
aggregation only ever sees those sums (linear processors followed by sum or
mean pooling) give identical outputs on both members of a pair, whatever
their weights.  :func:`prob_equal_solutions` estimates how often the optimal
actions for the two members coincide anyway.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy import stats

from edgegnn import baselines as bl
from edgegnn import channel as ch
from edgegnn import graphs as gr
from edgegnn.errors import ConfigError, ContractError, GenerationError, SizeError
from edgegnn.gnn import NEEDS_READOUT, GnnConfig, GnnModel

VERIFY_ATOL = 1e-10
EPS_GRID = (0.01, 0.05, 0.1, 0.2)
PROBE_MAX_K = 12


@dataclass(frozen=True)
class PairConstraintLS:
    alpha1: np.ndarray
    alpha2: np.ndarray

    problem = "ls"

    @property
    def first(self):
        return self.alpha1

    @property
    def second(self):
        return self.alpha2


@dataclass(frozen=True)
class PairConstraintP:
    H1: np.ndarray
    H2: np.ndarray

    problem = "pr"

    @property
    def first(self):
        return self.H1

    @property
    def second(self):
        return self.H2


@dataclass(frozen=True)
class PairCheck:
    ok: bool
    residual: float
    degenerate: bool

    def __bool__(self):
        return self.ok


# ---------------------------------------------------------------------------
# constraint systems


@lru_cache(maxsize=None)
def ls_constraints(K: int) -> np.ndarray:
    """(3K, K*K) system on row-major vec(Delta): zero diagonal, zero off-diagonal row and column sums."""
    off = 1.0 - np.eye(K)
    rows = []
    for i in range(K):
        e = np.zeros((K, K))
        e[i, i] = 1.0
        rows.append(e.ravel())
    for i in range(K):
        r = np.zeros((K, K))
        r[i] = off[i]
        c = np.zeros((K, K))
        c[:, i] = off[:, i]
        rows += [r.ravel(), c.ravel()]
    out = np.array(rows)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def p_constraints(N: int, K: int) -> np.ndarray:
    """(N+K, N*K) system: zero row sums and zero column sums."""
    rows = [np.kron(np.eye(N)[n], np.ones(K)) for n in range(N)]
    rows += [np.kron(np.ones(N), np.eye(K)[k]) for k in range(K)]
    out = np.array(rows)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def _null_basis_ls(K: int) -> np.ndarray:
    return sla.null_space(ls_constraints(K))


@lru_cache(maxsize=None)
def _null_basis_p(N: int, K: int) -> np.ndarray:
    return sla.null_space(p_constraints(N, K))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _project(delta_vec, A):
    # remove round-off drift from the constraint set
    return delta_vec - np.linalg.lstsq(A, A @ delta_vec, rcond=None)[0]


def default_delta_ls(alpha) -> float:
    alpha = np.asarray(alpha, dtype=np.float64)
    return 0.3 * float(np.median(np.abs(alpha[~np.eye(alpha.shape[0], dtype=bool)])))


def default_delta_p(H) -> float:
    return 0.3 * float(np.median(np.abs(np.asarray(H))))


def gen_pair_ls(alpha, delta: float | None = None, seed=None, *, method: str = "nullspace",
                steps: int = 30, retries: int = 50) -> PairConstraintLS:
    """Second channel matrix matching ``alpha`` on every quantity a weak GNN sees.

    ``method="nullspace"`` draws Delta from an orthonormal basis of the
    constraint null space with max |Delta| = ``delta`` (default 0.3 x the median
    off-diagonal gain).  Draws that make an entry non-positive are redrawn,
    and after ``retries`` failures the last draw is shrunk just enough to keep
    every entry positive.

    ``method="walk"`` runs ``steps`` multiplicative moves inside the set of
    positive solutions.  Each move is a null-space direction of the
    constraints reweighted by the current entries, with a step drawn
    uniformly from its feasible range.  This explores the whole solution set
    instead of a small ball around ``alpha``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise ContractError(f"expected a square channel matrix, got {alpha.shape}")
    K = alpha.shape[0]
    if K < 3:
        raise SizeError(f"pairs need K >= 3 (the system is not underdetermined below), got {K}")
    if np.any(alpha <= 0):
        raise ContractError("channel gains must be positive")
    rng = _rng(seed)
    A = ls_constraints(K)
    if method == "nullspace":
        a2 = _nullspace_ls(alpha, delta, rng, retries)
    elif method == "walk":
        if steps < 1:
            raise ContractError("steps must be >= 1")
        a2 = _walk_ls(alpha, rng, steps)
    else:
        raise ConfigError(f"method must be 'nullspace' or 'walk', got {method!r}")
    d = _project((a2 - alpha).ravel(), A).reshape(K, K)
    a2 = alpha + d
    if np.any(a2 <= 0):
        raise GenerationError("projected pair lost positivity")
    pair = PairConstraintLS(alpha, a2)
    chk = verify_pair(pair)
    if not chk.ok:
        raise GenerationError(f"generated pair fails its constraints (residual {chk.residual:.2e})")
    return pair


def _nullspace_ls(alpha, delta, rng, retries):
    K = alpha.shape[0]
    basis = _null_basis_ls(K)
    if delta is None:
        delta = default_delta_ls(alpha)
    if delta <= 0:
        raise ContractError("delta must be positive")
    for _ in range(retries):
        d = basis @ rng.standard_normal(basis.shape[1])
        d *= delta / np.abs(d).max()
        d = d.reshape(K, K)
        if np.all(alpha + d > 0):
            return alpha + d
    neg = d < 0
    t = 0.5 * np.min(alpha[neg] / -d[neg])
    if t < 1e-12:
        raise GenerationError("could not keep the perturbed gains positive")
    return alpha + t * d


def _walk_ls(alpha, rng, steps):
    K = alpha.shape[0]
    A = ls_constraints(K)
    x = alpha.ravel().copy()
    for _ in range(steps):
        basis = sla.null_space(A * x[None])
        z = basis @ rng.standard_normal(basis.shape[1])
        neg, pos = z < 0, z > 0
        hi = np.min(1.0 / -z[neg]) if neg.any() else 1.0
        lo = -np.min(1.0 / z[pos]) if pos.any() else -1.0
        # keep a margin so no entry is driven all the way to zero
        x = x * (1.0 + 0.95 * rng.uniform(lo, hi) * z)
    return x.reshape(K, K)


def gen_pair_p(H, delta: float | None = None, seed=None) -> PairConstraintP:
    """Precoding pair; real and imaginary parts of Delta are drawn independently."""
    H = np.asarray(H)
    if H.ndim != 2:
        raise ContractError(f"expected an N x K channel, got {H.shape}")
    N, K = H.shape
    if N < 2 or K < 2:
        raise SizeError(f"pairs need N, K >= 2, got ({N}, {K})")
    H = H.astype(np.complex128)
    if delta is None:
        delta = default_delta_p(H)
    if delta <= 0:
        raise ContractError("delta must be positive")
    rng = _rng(seed)
    basis = _null_basis_p(N, K)
    d = basis @ rng.standard_normal((basis.shape[1], 2))
    d *= delta / np.abs(d).max()
    A = p_constraints(N, K)
    d = np.stack([_project(d[:, 0], A), _project(d[:, 1], A)], axis=1)
    pair = PairConstraintP(H, H + (d[:, 0] + 1j * d[:, 1]).reshape(N, K))
    chk = verify_pair(pair)
    if not chk.ok:
        raise GenerationError(f"generated pair fails its constraints (residual {chk.residual:.2e})")
    return pair


def verify_pair(pair, atol: float = VERIFY_ATOL) -> PairCheck:
    """Check every matched quantity to ``atol``; identical members are flagged degenerate."""
    if isinstance(pair, PairConstraintLS):
        a1, a2 = np.asarray(pair.alpha1, float), np.asarray(pair.alpha2, float)
        if a1.shape != a2.shape:
            return PairCheck(False, np.inf, False)
        res = float(np.abs(ls_constraints(a1.shape[0]) @ (a1 - a2).ravel()).max())
        positive = bool(np.all(a1 > 0) and np.all(a2 > 0))
        degenerate = bool(np.array_equal(a1, a2))
        return PairCheck(res <= atol and positive and not degenerate, res, degenerate)
    if isinstance(pair, PairConstraintP):
        H1, H2 = np.asarray(pair.H1), np.asarray(pair.H2)
        if H1.shape != H2.shape:
            return PairCheck(False, np.inf, False)
        d = (H1 - H2).ravel()
        A = p_constraints(*H1.shape)
        res = float(max(np.abs(A @ d.real).max(), np.abs(A @ d.imag).max()))
        degenerate = bool(np.array_equal(H1, H2))
        return PairCheck(res <= atol and not degenerate, res, degenerate)
    raise ContractError(f"not a channel pair: {type(pair).__name__}")


# ---------------------------------------------------------------------------
# GNN collisions


def pair_graphs(pair, config: GnnConfig):
    """Both members as one batched graph of size 2 for ``config``."""
    problem = "pr" if config.graph_kind == "p_het" else "ls"
    if pair.problem != problem:
        raise ConfigError(f"{config.graph_kind} model cannot be checked on a {pair.problem} pair")
    data = np.stack([pair.first, pair.second])
    return gr.build_graph(config.graph_kind, data, config.family)


def collision_check(model: GnnModel, pair, tol: float = 1e-6) -> dict:
    out = model.predict(pair_graphs(pair, model.config))
    gap = float(np.abs(out[0] - out[1]).max())
    return {"collide": bool(gap <= tol), "max_gap": gap}


def collision_gaps(model: GnnModel, pairs) -> np.ndarray:
    """Max-norm output gap for each pair, with all pairs in one batched forward."""
    if not pairs:
        return np.zeros(0)
    cfg = model.config
    problem = "pr" if cfg.graph_kind == "p_het" else "ls"
    if any(p.problem != problem for p in pairs):
        raise ConfigError(f"{cfg.graph_kind} model cannot be checked on {pairs[0].problem} pairs")
    gaps = np.empty(len(pairs))
    groups: dict = {}
    for i, p in enumerate(pairs):
        groups.setdefault(np.shape(p.first), []).append(i)
    for idx in groups.values():
        data = np.stack([pairs[i].first for i in idx] + [pairs[i].second for i in idx])
        out = model.predict(gr.build_graph(cfg.graph_kind, data, cfg.family))
        n = len(idx)
        gaps[idx] = np.abs(out[:n] - out[n:]).reshape(n, -1).max(axis=1)
    return gaps


def _vanilla(family, kind, **kw):
    if (family, kind) in NEEDS_READOUT:
        base = [8, 8, 8]
    else:
        base = [8, 8, 2 if kind == "p_het" else 1]
    # mean pooling keeps the sigmoid heads out of saturation at K=8; the
    # collision argument holds for sum and mean alike
    cfg = dict(family=family, graph_kind=kind, dims=base, pooling="mean")
    if (family, kind) in NEEDS_READOUT:
        cfg["readout"] = "fnn"
        cfg["readout_hidden"] = [8]
    cfg.update(kw)
    return GnnConfig(**cfg)


def weak_configs() -> dict[str, GnnConfig]:
    """Configurations whose outputs provably coincide on every generated pair."""
    out = {}
    for kind, comb in itertools.product(("ls_het", "ls_undir", "p_het"), ("linear", "affine_act", "fnn")):
        extra = {"combiner_hidden": [8]} if comb == "fnn" else {}
        out[f"vertex/{kind}/linear-proc/{comb}"] = _vanilla("vertex", kind, combiner=comb, **extra)
    out["edge/ls_het/cbi-linear/cbs-affine_act"] = _vanilla(
        "edge", "ls_het", combiner_int="linear", combiner_sig="affine_act")
    out["edge/ls_het/cbi-linear/cbs-fnn"] = _vanilla(
        "edge", "ls_het", combiner_int="linear", combiner_sig="fnn", combiner_hidden=[8])
    out["edge/ls_undir/all-linear"] = _vanilla("edge", "ls_undir", combiner="linear")
    return out


def strong_configs() -> dict[str, GnnConfig]:
    """Configurations expected to separate the members of generated pairs."""
    out = {}
    for kind in ("ls_het", "ls_undir", "p_het"):
        out[f"vertex/{kind}/fnn-proc"] = _vanilla("vertex", kind, processor="fnn", processor_hidden=[8])
    out["vertex/p_het/readout-with-H"] = _vanilla("vertex", "p_het", readout="fnn_with_H")
    out["edge/ls_het/vanilla"] = _vanilla("edge", "ls_het")
    out["edge/ls_het/cbi-affine_act/cbs-linear"] = _vanilla(
        "edge", "ls_het", combiner_int="affine_act", combiner_sig="linear")
    out["edge/ls_undir/vanilla"] = _vanilla("edge", "ls_undir")
    out["edge/p_het/vanilla"] = _vanilla("edge", "p_het")
    return out


# ---------------------------------------------------------------------------
# solution-collision probability


@dataclass(frozen=True)
class ProbeConfig:
    n_trials: int = 500
    pc_threshold: float = 1e-3
    eps_grid: tuple = EPS_GRID
    delta: float | None = None
    pair_method: str = "walk"
    walk_steps: int = 30

    def __post_init__(self):
        if self.n_trials < 1:
            raise ContractError("n_trials must be >= 1")
        if self.pc_threshold <= 0 or min(self.eps_grid) <= 0:
            raise ContractError("thresholds must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ContractError("delta must be positive")


@dataclass
class ProbeReport:
    problem: str
    rows: list = field(default_factory=list)  # dicts: size, level, eps, k, n, prob, ci_lo, ci_hi
    records: list = field(default_factory=list)

    def table(self, eps=None) -> dict:
        """{(size, level): prob}; pick one threshold for precoding."""
        return {(r["size"], r["level"]): r["prob"] for r in self.rows if eps is None or r["eps"] == eps}

    def row(self, size, level, eps=None) -> dict:
        for r in self.rows:
            if r["size"] == size and r["level"] == level and (eps is None or r["eps"] == eps):
                return r
        raise KeyError((size, level, eps))

    def to_csv(self, path) -> None:
        cols = ["problem", "size", "level", "eps", "k", "n", "prob", "ci_lo", "ci_hi"]
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=cols)
            w.writeheader()
            for r in self.rows:
                w.writerow({"problem": self.problem, **{c: _csv_cell(r[c]) for c in cols[1:]}})


def _csv_cell(v):
    if isinstance(v, tuple):
        return "x".join(str(x) for x in v)
    return "" if v is None else v


def wilson_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _row(size, level, eps, hits):
    k, n = int(np.sum(hits)), int(np.size(hits))
    lo, hi = wilson_ci(k, n)
    return {"size": size, "level": level, "eps": eps, "k": k, "n": n, "prob": k / n, "ci_lo": lo, "ci_hi": hi}


def _ls_pairs(K, n, cfg: ProbeConfig, rng):
    params = ch.ScenarioParams(K=K)
    A1 = ch.gen_channel_batch(params, n, rng)
    A2 = np.array([gen_pair_ls(a, cfg.delta, rng, method=cfg.pair_method, steps=cfg.walk_steps).alpha2
                   for a in A1])
    return params, A1, A2


def prob_equal_solutions(problem: str, sizes, levels, probe_config: ProbeConfig | None = None,
                         seed=0) -> ProbeReport:
    """Frequency with which both members of a generated pair get the same optimal action.

    ``problem`` is ``"ls"`` (exhaustive schedules, exact match), ``"pc"``
    (WMMSE powers over p_max, max gap below ``pc_threshold``) or ``"pr"``
    (WMMSE precoders, max gap below each eps).  ``sizes`` are K values (or
    (N, K) pairs for precoding) and ``levels`` are transmit powers in dBm
    (or SNRs in dB for precoding).  The same pairs are reused across levels.
    """
    cfg = probe_config or ProbeConfig()
    rng = _rng(seed)
    report = ProbeReport(problem)
    levels = [float(v) for v in np.atleast_1d(levels)]
    for size in sizes:
        if problem in ("ls", "pc"):
            K = int(size)
            if problem == "ls" and K > PROBE_MAX_K:
                raise SizeError(f"scheduling probe uses exhaustive search; K <= {PROBE_MAX_K}, got {K}")
            params, A1, A2 = _ls_pairs(K, cfg.n_trials, cfg, rng)
            s2 = ch.noise_power(params)
            for level in levels:
                P = ch.dbm_to_watt(level)
                if problem == "ls":
                    x1, _ = bl.exhaustive_ls(A1, P, s2)
                    x2, _ = bl.exhaustive_ls(A2, P, s2)
                    hits = np.all(x1 == x2, axis=1)
                    gaps = np.abs(x1 - x2).max(axis=1)
                else:
                    p1 = bl.wmmse_pc(A1, P, s2) / P
                    p2 = bl.wmmse_pc(A2, P, s2) / P
                    gaps = np.abs(p1 - p2).max(axis=1)
                    hits = gaps < cfg.pc_threshold
                report.rows.append(_row(K, level, None, hits))
                report.records += [{"size": K, "level": level, "trial": t, "gap": float(g)}
                                   for t, g in enumerate(gaps)]
        elif problem == "pr":
            N, K = size
            H1 = ch.gen_rayleigh_H(N, K, rng, batch=cfg.n_trials)
            H2 = np.array([gen_pair_p(h, cfg.delta, rng).H2 for h in H1])
            for level in levels:
                s2 = 10.0 ** (-level / 10.0)  # unit total power
                V1 = bl.wmmse_precoding(H1, 1.0, s2)
                V2 = bl.wmmse_precoding(H2, 1.0, s2)
                gaps = np.abs(np.concatenate([(V1 - V2).real, (V1 - V2).imag], axis=1)).max(axis=(1, 2))
                for eps in cfg.eps_grid:
                    report.rows.append(_row((N, K), level, eps, gaps < eps))
                report.records += [{"size": (N, K), "level": level, "trial": t, "gap": float(g)}
                                   for t, g in enumerate(gaps)]
        else:
            raise ConfigError(f"problem must be 'ls', 'pc' or 'pr', got {problem!r}")
    return report


def trend_violations(probs, ci_lo, ci_hi) -> tuple[int, bool]:
    """Count increases along a sequence expected to be non-increasing.

    Returns (number of increases, whether every increase stays within the
    overlap of the two 95% intervals).
    """
    n_up, tolerated = 0, True
    for i in range(len(probs) - 1):
        if probs[i + 1] > probs[i]:
            n_up += 1
            tolerated &= ci_lo[i + 1] <= ci_hi[i]
    return n_up, bool(tolerated)


def trend_ok(probs, ci_lo, ci_hi) -> bool:
    n_up, tolerated = trend_violations(probs, ci_lo, ci_hi)
    return n_up == 0 or (n_up == 1 and tolerated)


__all__ = [
    "PairConstraintLS", "PairConstraintP", "PairCheck", "ProbeConfig", "ProbeReport",
    "gen_pair_ls", "gen_pair_p", "verify_pair", "collision_check", "pair_graphs",
    "weak_configs", "strong_configs", "prob_equal_solutions", "wilson_ci", "trend_ok",
    "trend_violations", "ls_constraints", "p_constraints",
]
