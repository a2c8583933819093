"""D2D scenario geometry, composite channel gains and Rayleigh MISO channels."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from edgegnn.errors import ConfigError, SizeError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ScenarioParams:
    K: int = 10
    area_side: float = 500.0
    d2d_min: float = 2.0
    d2d_max: float = 65.0
    bandwidth: float = 5e6
    carrier: float = 2.4e9
    noise_psd: float = -169.0  # dBm/Hz
    antenna_height: float = 1.5
    antenna_gain: float = 2.5  # dBi, applied at both ends
    tx_power: float = 40.0  # dBm
    pathloss_exponent: float = 3.0
    ref_distance: float = 1.0
    shadowing_std: float = 8.0  # dB
    fading: bool = True

    def __post_init__(self):
        if self.K < 1:
            raise SizeError(f"K must be >= 1, got {self.K}")
        if not 0 < self.d2d_min < self.d2d_max:
            raise ConfigError("need 0 < d2d_min < d2d_max")
        for name in ("area_side", "bandwidth", "carrier", "ref_distance", "pathloss_exponent"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.shadowing_std < 0:
            raise ConfigError("shadowing_std must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Scenario:
    tx: np.ndarray  # (K, 2)
    rx: np.ndarray  # (K, 2)

    @property
    def K(self):
        return self.tx.shape[0]

    def distances(self) -> np.ndarray:
        """d[i, j] = distance from transmitter i to receiver j."""
        return np.linalg.norm(self.tx[:, None, :] - self.rx[None, :, :], axis=-1)

    def pair_distances(self) -> np.ndarray:
        return np.linalg.norm(self.tx - self.rx, axis=-1)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=np.float64) - 30.0) / 10.0)


def noise_power(params: ScenarioParams) -> float:
    """Thermal noise power in watts over the configured bandwidth."""
    return float(dbm_to_watt(params.noise_psd + 10.0 * np.log10(params.bandwidth)))


def tx_power_watt(params: ScenarioParams) -> float:
    return float(dbm_to_watt(params.tx_power))


def gen_d2d_scenario(params: ScenarioParams, seed) -> Scenario:
    rng = _rng(seed)
    K = params.K
    tx = rng.uniform(0.0, params.area_side, size=(K, 2))
    dist = rng.uniform(params.d2d_min, params.d2d_max, size=K)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=K)
    rx = tx + dist[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return Scenario(tx=tx, rx=rx)


def pathloss_db(d, params: ScenarioParams) -> np.ndarray:
    """Log-distance path loss anchored to free space at the reference distance."""
    d0 = params.ref_distance
    d = np.maximum(np.asarray(d, dtype=np.float64), d0)
    pl0 = 20.0 * np.log10(4.0 * np.pi * d0 * params.carrier / SPEED_OF_LIGHT)
    return pl0 + 10.0 * params.pathloss_exponent * np.log10(d / d0)


def gen_channel_matrix(scenario: Scenario, params: ScenarioParams, seed) -> np.ndarray:
    """alpha[i, j]: linear gain from transmitter i to receiver j (no tx power)."""
    rng = _rng(seed)
    d = scenario.distances()
    gain_db = 2.0 * params.antenna_gain - pathloss_db(d, params)
    if params.shadowing_std > 0:
        gain_db = gain_db + rng.normal(0.0, params.shadowing_std, size=d.shape)
    alpha = 10.0 ** (gain_db / 10.0)
    if params.fading:
        alpha = alpha * rng.exponential(1.0, size=d.shape)  # |h|^2 with h ~ CN(0,1)
    return alpha


def gen_channel_batch(params: ScenarioParams, n: int, seed) -> np.ndarray:
    """n independent scenarios, returned as an (n, K, K) gain array."""
    rng = _rng(seed)
    out = np.empty((n, params.K, params.K))
    for s in range(n):
        out[s] = gen_channel_matrix(gen_d2d_scenario(params, rng), params, rng)
    return out


def gen_rayleigh_H(N: int, K: int, seed, batch: int | None = None) -> np.ndarray:
    """N x K matrix of CN(0, 1) entries (complex128); optional leading batch dim."""
    if N < 1 or K < 1:
        raise SizeError(f"need N, K >= 1, got N={N}, K={K}")
    rng = _rng(seed)
    shape = (N, K) if batch is None else (batch, N, K)
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2.0)
