import numpy as np
import pytest
from dataclasses import replace
from scipy import stats

from edgegnn import channel as ch
from edgegnn.errors import ConfigError, SizeError


def test_single_pair_distance_in_range():
    p = ch.ScenarioParams(K=1)
    sc = ch.gen_d2d_scenario(p, 11)
    d = np.linalg.norm(sc.tx[0] - sc.rx[0])
    assert 2.0 <= d <= 65.0
    sc2 = ch.gen_d2d_scenario(p, 11)
    assert np.array_equal(sc.tx, sc2.tx) and np.array_equal(sc.rx, sc2.rx)


def test_pair_distance_is_uniform():
    p = ch.ScenarioParams(K=10_000)
    sc = ch.gen_d2d_scenario(p, 0)
    d = sc.pair_distances()
    res = stats.kstest(d, stats.uniform(loc=2.0, scale=63.0).cdf)
    assert res.pvalue > 0.01


def test_deterministic_pathloss_only():
    p = ch.ScenarioParams(K=4, shadowing_std=0.0, fading=False)
    sc = ch.gen_d2d_scenario(p, 1)
    a = ch.gen_channel_matrix(sc, p, 2)
    expected = 10 ** ((5.0 - ch.pathloss_db(sc.distances(), p)) / 10)
    assert np.allclose(a, expected, rtol=1e-12)


def test_reference_pathloss_is_free_space():
    p = ch.ScenarioParams()
    assert ch.pathloss_db(1.0, p) == pytest.approx(40.05, abs=0.01)
    assert ch.pathloss_db(10.0, p) - ch.pathloss_db(1.0, p) == pytest.approx(30.0)


def test_direct_links_stronger():
    p = ch.ScenarioParams(K=8)
    alphas = ch.gen_channel_batch(p, 125, 5)
    off = ~np.eye(8, dtype=bool)
    direct = np.concatenate([np.diag(a) for a in alphas])
    cross = np.concatenate([a[off] for a in alphas])
    assert np.median(direct) > 100 * np.median(cross)


def test_shadowing_std():
    p = ch.ScenarioParams(K=100, fading=False)
    sc = ch.gen_d2d_scenario(p, 3)
    base = replace(p, shadowing_std=0.0)
    shadow_db = 10 * np.log10(ch.gen_channel_matrix(sc, p, 4) / ch.gen_channel_matrix(sc, base, 4))
    assert np.std(shadow_db) == pytest.approx(8.0, rel=0.05)


def test_gains_in_unit_interval():
    alphas = ch.gen_channel_batch(ch.ScenarioParams(K=10), 50, 9)
    assert np.all(alphas > 0) and np.all(alphas < 1) and np.all(np.isfinite(alphas))


def test_rayleigh_moments():
    H = ch.gen_rayleigh_H(100, 1000, 0)
    assert np.mean(np.abs(H) ** 2) == pytest.approx(1.0, rel=0.02)
    assert np.var(H.real) == pytest.approx(0.5, rel=0.03)
    assert np.var(H.imag) == pytest.approx(0.5, rel=0.03)
    assert np.array_equal(ch.gen_rayleigh_H(4, 2, 7), ch.gen_rayleigh_H(4, 2, 7))


def test_noise_power():
    p = ch.ScenarioParams()
    n = ch.noise_power(p)
    assert 10 * np.log10(n) + 30 == pytest.approx(-102.01, abs=0.005)
    assert n == pytest.approx(6.29e-14, rel=1e-3)
    assert ch.noise_power(replace(p, noise_psd=0.0, bandwidth=1.0)) == pytest.approx(1e-3)
    doubled = ch.noise_power(replace(p, bandwidth=1e7))
    assert 10 * np.log10(doubled / n) == pytest.approx(3.0103, abs=1e-4)


def test_seed_determinism():
    p = ch.ScenarioParams(K=5)
    a = ch.gen_channel_batch(p, 3, 42)
    b = ch.gen_channel_batch(p, 3, 42)
    assert a.tobytes() == b.tobytes()


def test_bad_params():
    with pytest.raises(SizeError):
        ch.ScenarioParams(K=0)
    with pytest.raises(ConfigError):
        ch.ScenarioParams(d2d_min=70.0)
    with pytest.raises(SizeError):
        ch.gen_rayleigh_H(0, 2, 0)
