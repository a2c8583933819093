"""Datasets, the unsupervised loss, the training loop and sum-rate-ratio evaluation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from edgegnn import baselines as bl
from edgegnn import channel as ch
from edgegnn import graphs as gr
from edgegnn import numerics as nx
from edgegnn.errors import ConfigError, ContractError, NumericError
from edgegnn.gnn import GnnConfig, GnnModel, init_model

log = logging.getLogger(__name__)

PROBLEMS = ("ls", "pc", "pr")
BASELINES = {"ls": ("exhaustive", "fp_ls"), "pc": ("wmmse_pc",), "pr": ("wmmse_precoding",)}
DEFAULT_BASELINE = {"ls": "exhaustive", "pc": "wmmse_pc", "pr": "wmmse_precoding"}
CLAMP = 1e-12
LN2 = np.log(2.0)


def _check_problem(problem):
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")


# ---------------------------------------------------------------------------
# data


@dataclass(eq=False)
class Dataset:
    problem: str
    channels: np.ndarray  # (n, K, K) gains, or (n, N, K) complex for precoding
    p_max: float  # per-link transmit power (ls/pc) or total power (pr), W
    noise: float
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        _check_problem(self.problem)
        self.channels = np.asarray(self.channels)
        if self.p_max <= 0 or self.noise <= 0:
            raise ContractError("p_max and noise must be positive")

    def __len__(self):
        return len(self.channels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.problem, self.channels[idx], self.p_max, self.noise, dict(self.meta))

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        return self.subset(slice(0, n_first)), self.subset(slice(n_first, None))


def make_dataset(problem: str, n: int, seed=0, *, K: int = 10, N: int = 4, tx_power_dbm: float = 40.0,
                 snr_db: float = 10.0, scenario: dict | None = None) -> Dataset:
    """Channels for scheduling/power control (D2D gains) or precoding (Rayleigh, unit total power)."""
    _check_problem(problem)
    if n < 1:
        raise ContractError("dataset needs at least one sample")
    if problem == "pr":
        H = ch.gen_rayleigh_H(N, K, seed, batch=n)
        meta = {"N": N, "K": K, "snr_db": snr_db, "seed": _seed_repr(seed)}
        return Dataset("pr", H, 1.0, 10.0 ** (-snr_db / 10.0), meta)
    params = ch.ScenarioParams(K=K, tx_power=tx_power_dbm, **(scenario or {}))
    alpha = ch.gen_channel_batch(params, n, seed)
    meta = {"K": K, "tx_power_dbm": tx_power_dbm, "seed": _seed_repr(seed), "scenario": dict(scenario or {})}
    return Dataset(problem, alpha, float(ch.tx_power_watt(params)), float(ch.noise_power(params)), meta)


def _seed_repr(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else None


@dataclass(frozen=True)
class InputNorm:
    """How raw channels become GNN features.

    ``db_standard``: gains in dB, shifted and scaled by statistics of the
    training set.  ``none``: raw values (precoding channels are already unit
    variance).
    """

    mode: str = "db_standard"
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.mode not in ("db_standard", "none"):
            raise ConfigError(f"norm mode must be 'db_standard' or 'none', got {self.mode!r}")
        if self.std <= 0:
            raise ContractError("norm std must be positive")

    def apply(self, channels):
        if self.mode == "none":
            return channels
        if np.iscomplexobj(channels):
            raise ConfigError("dB normalization applies to real channel gains")
        return (10.0 * np.log10(channels) - self.mean) / self.std

    def to_dict(self):
        return asdict(self)


def fit_norm(dataset: Dataset, mode: str | None = None) -> InputNorm:
    mode = mode or ("none" if dataset.problem == "pr" else "db_standard")
    if mode == "none":
        return InputNorm("none")
    db = 10.0 * np.log10(dataset.channels)
    return InputNorm(mode, float(db.mean()), float(db.std()))


def model_input(config: GnnConfig, channels, norm: InputNorm) -> gr.Graph:
    return gr.build_graph(config.graph_kind, norm.apply(channels), config.family)


# ---------------------------------------------------------------------------
# loss


@dataclass(frozen=True)
class LossConfig:
    problem: str = "ls"
    w1: float | None = None
    w2: float | None = None

    def __post_init__(self):
        _check_problem(self.problem)
        default = (1e-1, 1e-4) if self.problem == "ls" else (0.0, 0.0)
        if self.w1 is None:
            object.__setattr__(self, "w1", default[0])
        if self.w2 is None:
            object.__setattr__(self, "w2", default[1])
        if self.w1 < 0 or self.w2 < 0:
            raise ConfigError("loss weights must be non-negative")


def _link_rates_tape(y: nx.Tensor, G: np.ndarray) -> nx.Tensor:
    """log2(1 + y_k G_kk / (sum_{j!=k} y_j G_jk + 1)) with G already divided by the noise."""
    tape = y.tape
    B, K = G.shape[0], G.shape[-1]
    received = (y.reshape(B, K, 1) * tape.constant(G)).sum(axis=1)
    signal = y * tape.constant(np.diagonal(G, axis1=1, axis2=2))
    return nx.log(signal / (received - signal + 1.0) + 1.0) * (1.0 / LN2)


def _precoding_rates_tape(V: nx.Tensor, H: np.ndarray, sigma2: float) -> nx.Tensor:
    tape = V.tape
    B, N, K = H.shape
    vr = V.take([0], axis=3).reshape(B, N, 1, K)
    vi = V.take([1], axis=3).reshape(B, N, 1, K)
    hr = tape.constant(H.real.reshape(B, N, K, 1))
    hi = tape.constant(H.imag.reshape(B, N, K, 1))
    # g[b, k, j] = h_k^H v_j
    g_re = (hr * vr + hi * vi).sum(axis=1)
    g_im = (hr * vi - hi * vr).sum(axis=1)
    power = g_re * g_re + g_im * g_im
    signal = (power * tape.constant(np.eye(K))).sum(axis=2)
    return nx.log(signal / (power.sum(axis=2) - signal + sigma2) + 1.0) * (1.0 / LN2)


def loss(outputs: nx.Tensor, channels, loss_config: LossConfig, sigma2: float, p_max: float):
    """Negative mean sum rate plus the activation penalties, on the outputs' tape.

    Returns (loss tensor, info) where ``info["clamped"]`` reports whether any
    probability came within 1e-12 of 0 or 1 before the logs.
    """
    channels = np.asarray(channels)
    info = {"clamped": False}
    if loss_config.problem == "pr":
        rates = _precoding_rates_tape(outputs, channels, sigma2)
        total = rates.sum(axis=1)
    else:
        y = outputs
        G = channels * (p_max / sigma2)
        rates = _link_rates_tape(y, G)
        total = rates.sum(axis=1)
        info["clamped"] = bool(np.any(y.data < CLAMP) or np.any(y.data > 1.0 - CLAMP))
        if loss_config.w1 > 0 or loss_config.w2 > 0:
            # affine squeeze keeps both logs finite and differentiable
            y_c = y * (1.0 - 2.0 * CLAMP) + CLAMP
            if loss_config.w1 > 0:
                total = total + nx.log(y_c).sum(axis=1) * loss_config.w1
            if loss_config.w2 > 0:
                total = total + nx.log(1.0 - y_c).sum(axis=1) * loss_config.w2
    return total.mean() * -1.0, info


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    sum_rate_ratio: float
    rates: np.ndarray
    baseline_rates: np.ndarray
    baseline: str
    n_runs: int = 1


def baseline_rates(dataset: Dataset, baseline: str | None = None) -> np.ndarray:
    baseline = baseline or DEFAULT_BASELINE[dataset.problem]
    if baseline not in BASELINES[dataset.problem]:
        raise ConfigError(f"baseline {baseline!r} does not apply to problem {dataset.problem!r}")
    hit = dataset._cache.get(baseline)
    if hit is not None:
        return hit
    A, P, s2 = dataset.channels, dataset.p_max, dataset.noise
    if baseline == "exhaustive":
        _, r = bl.exhaustive_ls(A, P, s2)
    elif baseline == "fp_ls":
        r = bl.sumrate_ls(bl.fp_ls(A, P, s2), A, P, s2)
    elif baseline == "wmmse_pc":
        r = bl.sumrate_pc(bl.wmmse_pc(A, P, s2), A, s2)
    else:
        r = bl.sumrate_pr(bl.wmmse_precoding(A, P, s2), A, s2)
    dataset._cache[baseline] = r
    return r


def policy_rates(model: GnnModel, dataset: Dataset, norm: InputNorm, batch: int = 512) -> np.ndarray:
    """Per-sample sum rates of the model's hard decisions."""
    out = []
    for s in range(0, len(dataset), batch):
        A = dataset.channels[s:s + batch]
        y = model.predict(model_input(model.config, A, norm))
        if dataset.problem == "ls":
            out.append(bl.sumrate_ls((y >= 0.5).astype(np.float64), A, dataset.p_max, dataset.noise))
        elif dataset.problem == "pc":
            out.append(bl.sumrate_pc(dataset.p_max * y, A, dataset.noise))
        else:
            V = gr.real_to_h(y) * np.sqrt(dataset.p_max / model.config.p_max)
            out.append(bl.sumrate_pr(V, A, dataset.noise))
    return np.concatenate(out)


def evaluate(model: GnnModel, test_set: Dataset, baseline: str | None = None,
             norm: InputNorm | None = None) -> EvalResult:
    if len(test_set) == 0:
        raise ContractError("cannot evaluate on an empty set")
    norm = norm or fit_norm(test_set)
    rates = policy_rates(model, test_set, norm)
    base = baseline_rates(test_set, baseline)
    return EvalResult(float(rates.mean() / base.mean()), rates, base,
                      baseline or DEFAULT_BASELINE[test_set.problem])


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    gnn: GnnConfig
    n_samples: int | None = None  # None: use the whole training set
    batch_size: int = 64
    epochs: int = 500
    lr: float = 1e-3
    seed: int = 0
    norm: str | None = None  # None: dB standardization for gains, raw for precoding
    patience: int = 20

    def __post_init__(self):
        if isinstance(self.gnn, dict):
            object.__setattr__(self, "gnn", GnnConfig.from_dict(self.gnn))
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ConfigError("batch_size and patience must be positive, epochs non-negative")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["gnn"] = self.gnn.to_dict()
        return d


def train(train_config: TrainConfig, loss_config: LossConfig, dataset: Dataset, val: Dataset | None = None,
          baseline: str | None = None):
    """Adam on the unsupervised loss; returns (model with the best validation ratio, history).

    Without a validation set every epoch runs and the final weights are kept.
    """
    cfg = train_config
    if loss_config.problem != dataset.problem:
        raise ConfigError(f"loss is for {loss_config.problem!r} but the dataset is {dataset.problem!r}")
    if (cfg.gnn.graph_kind == "p_het") != (dataset.problem == "pr"):
        raise ConfigError(f"{cfg.gnn.graph_kind} GNN cannot learn problem {dataset.problem!r}")
    data = dataset if cfg.n_samples is None else dataset.subset(slice(0, cfg.n_samples))
    norm = fit_norm(data, cfg.norm)
    feats = norm.apply(data.channels)
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    model = init_model(cfg.gnn, np.random.default_rng(init_seq))
    order_rng = np.random.default_rng(shuffle_seq)
    state = nx.AdamState(lr=cfg.lr)
    params = dict(model.params)
    history = {"epoch": [], "train_loss": [], "val_ratio": [], "clamped": []}
    best = (-np.inf, params, 0)
    n = len(data)
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(n)
        losses, clamped = [], False
        for b, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s:s + cfg.batch_size]
            graph = gr.build_graph(cfg.gnn.graph_kind, feats[idx], cfg.gnn.family)
            tape = nx.Tape()
            try:
                out, P = GnnModel(cfg.gnn, params).forward_tape(tape, graph)
                L, info = loss(out, data.channels[idx], loss_config, data.noise, data.p_max)
                grads = tape.backward(L).named()
            except NumericError as exc:
                raise NumericError(f"non-finite value at epoch {epoch} batch {b} (lr={cfg.lr}): {exc}") from exc
            if not np.isfinite(L.data):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b} (lr={cfg.lr})")
            params = nx.adam_step(params, grads, state)
            losses.append(float(L.data) * len(idx))
            clamped |= info["clamped"]
        history["epoch"].append(epoch)
        history["train_loss"].append(sum(losses) / n)
        history["clamped"].append(clamped)
        if val is not None:
            ratio = evaluate(GnnModel(cfg.gnn, params), val, baseline, norm).sum_rate_ratio
            history["val_ratio"].append(ratio)
            if ratio > best[0]:
                best = (ratio, params, epoch)
            elif epoch - best[2] >= cfg.patience:
                log.info("early stop at epoch %d (best %.4f at %d)", epoch, best[0], best[2])
                break
    final = best[1] if val is not None and np.isfinite(best[0]) else params
    model = GnnModel(cfg.gnn, final)
    history["best_epoch"] = best[2] if val is not None else len(history["epoch"]) - 1
    history["norm"] = norm
    return model, history
