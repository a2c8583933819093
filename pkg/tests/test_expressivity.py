import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _support import generic_model
from edgegnn import channel as ch
from edgegnn import expressivity as ex
from edgegnn.errors import ConfigError, ContractError, SizeError
from edgegnn.gnn import GnnConfig, init_model


def _alpha(rng, K):
    return rng.exponential(size=(K, K)) + 0.05


def test_k3_circulant_is_in_null_space():
    C = np.array([[0, 1, -1], [-1, 0, 1], [1, -1, 0]], dtype=float)
    assert np.abs(ex.ls_constraints(3) @ C.ravel()).max() == 0.0
    a = np.full((3, 3), 2.0)
    assert ex.verify_pair(ex.PairConstraintLS(a, a + 0.3 * C)).ok


def test_null_space_dimensions():
    for K in (3, 4, 6):
        assert np.linalg.matrix_rank(ex.ls_constraints(K)) == 3 * K - 1
    assert np.linalg.matrix_rank(ex.p_constraints(4, 3)) == 4 + 3 - 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(3, 8), method=st.sampled_from(["nullspace", "walk"]))
def test_gen_pair_ls_invariants(seed, K, method):
    rng = np.random.default_rng(seed)
    a = _alpha(rng, K)
    pair = ex.gen_pair_ls(a, seed=rng, method=method, steps=5)
    chk = ex.verify_pair(pair)
    assert chk.ok and chk.residual < 1e-10 and not chk.degenerate
    d = pair.alpha2 - pair.alpha1
    assert np.all(np.diag(d) == 0) or np.abs(np.diag(d)).max() < 1e-12
    assert np.abs(d.sum(axis=0)).max() < 1e-10 and np.abs(d.sum(axis=1)).max() < 1e-10
    assert np.all(pair.alpha2 > 0)


def test_gen_pair_ls_default_delta():
    rng = np.random.default_rng(0)
    a = _alpha(rng, 5)
    pair = ex.gen_pair_ls(a, seed=1)
    assert np.abs(pair.alpha2 - a).max() <= ex.default_delta_ls(a) * (1 + 1e-9)
    same = ex.gen_pair_ls(a, seed=1)
    assert np.array_equal(pair.alpha2, same.alpha2)


def test_gen_pair_ls_positivity_on_d2d_gains():
    # gains span many orders of magnitude, so the shrink path is exercised
    alphas = ch.gen_channel_batch(ch.ScenarioParams(K=6), 20, 0)
    for a in alphas:
        pair = ex.gen_pair_ls(a, seed=0)
        assert np.all(pair.alpha2 > 0) and ex.verify_pair(pair, atol=1e-18).ok


def test_gen_pair_ls_errors():
    with pytest.raises(SizeError):
        ex.gen_pair_ls(np.ones((2, 2)))
    with pytest.raises(ContractError):
        ex.gen_pair_ls(-np.ones((3, 3)))
    with pytest.raises(ConfigError):
        ex.gen_pair_ls(np.ones((3, 3)), method="magic")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), N=st.integers(2, 6), K=st.integers(2, 5))
def test_gen_pair_p_invariants(seed, N, K):
    rng = np.random.default_rng(seed)
    pair = ex.gen_pair_p(ch.gen_rayleigh_H(N, K, rng), seed=rng)
    chk = ex.verify_pair(pair)
    assert chk.ok and chk.residual < 1e-10
    d = pair.H2 - pair.H1
    assert np.abs(d.sum(axis=0)).max() < 1e-10 and np.abs(d.sum(axis=1)).max() < 1e-10
    assert np.abs(d.real).max() > 0 and np.abs(d.imag).max() > 0


def test_gen_pair_p_2x2_shape():
    pair = ex.gen_pair_p(np.ones((2, 2)), delta=0.5, seed=0)
    d = (pair.H2 - pair.H1).real
    assert np.allclose(d / d[0, 0], [[1, -1], [-1, 1]])
    with pytest.raises(SizeError):
        ex.gen_pair_p(np.ones((1, 3)))


def test_verify_pair_flags():
    rng = np.random.default_rng(0)
    pair = ex.gen_pair_ls(_alpha(rng, 4), seed=0)
    bumped = pair.alpha2.copy()
    bumped[0, 1] += 1e-3
    bad = ex.verify_pair(ex.PairConstraintLS(pair.alpha1, bumped))
    assert not bad.ok and bad.residual == pytest.approx(1e-3)
    same = ex.verify_pair(ex.PairConstraintLS(pair.alpha1, pair.alpha1))
    assert not same.ok and same.degenerate and same.residual == 0.0
    with pytest.raises(ContractError):
        ex.verify_pair((1, 2))


def _weak_pairs(kind, rng, n=4):
    if kind == "p_het":
        return [ex.gen_pair_p(ch.gen_rayleigh_H(N, K, rng), seed=rng) for N, K in ((2, 2), (4, 2)) for _ in range(n)]
    return [ex.gen_pair_ls(_alpha(rng, K), seed=rng, method=m) for K in (3, 5) for m in ("nullspace", "walk")
            for _ in range(n // 2)]


@pytest.mark.parametrize("name", sorted(ex.weak_configs()))
@pytest.mark.parametrize("pooling", ["sum", "mean"])
def test_weak_configs_collide(name, pooling):
    cfg = GnnConfig.from_dict({**ex.weak_configs()[name].to_dict(), "pooling": pooling})
    rng = np.random.default_rng(0)
    pairs = _weak_pairs(cfg.graph_kind, rng)
    for _ in range(10):
        gaps = ex.collision_gaps(generic_model(cfg, rng), pairs)
        assert gaps.max() <= 1e-6


@pytest.mark.parametrize("name", sorted(ex.strong_configs()))
def test_strong_configs_separate(name):
    cfg = ex.strong_configs()[name]
    rng = np.random.default_rng(1)
    pairs = _weak_pairs(cfg.graph_kind, rng)
    hits = [ex.collision_gaps(init_model(cfg, rng), pairs).max() > 1e-3 for _ in range(20)]
    assert np.mean(hits) >= 0.9


def test_all_linear_edge_precoder_is_linear_not_colliding():
    # with every combiner linear the edge network is a linear map of H up to the
    # power normalization, so it sees individual entries and separates pairs
    cfg = GnnConfig(family="edge", graph_kind="p_het", dims=[4, 4, 2], combiner="linear")
    rng = np.random.default_rng(2)
    m = init_model(cfg, rng)
    pair = ex.gen_pair_p(ch.gen_rayleigh_H(4, 2, rng), seed=rng)
    assert ex.collision_check(m, pair, 1e-6)["collide"] is False


def test_collision_check_contract():
    rng = np.random.default_rng(3)
    pair = ex.gen_pair_ls(_alpha(rng, 3), seed=0)
    m = init_model(ex.strong_configs()["edge/ls_het/vanilla"], 0)
    res = ex.collision_check(m, pair, tol=np.inf)
    assert res["collide"] and res["max_gap"] >= 0
    g = ex.collision_gaps(m, [pair])
    assert g[0] == res["max_gap"]
    mp = init_model(ex.strong_configs()["edge/p_het/vanilla"], 0)
    with pytest.raises(ConfigError):
        ex.collision_check(mp, pair)


def test_wilson_interval():
    lo, hi = ex.wilson_ci(0, 50)
    assert lo == 0.0 and 0 < hi < 0.1
    lo, hi = ex.wilson_ci(25, 50)
    assert lo < 0.5 < hi and lo == pytest.approx(1 - hi)


def test_trend_rules():
    assert ex.trend_ok([0.9, 0.8, 0.7], [0.85, 0.75, 0.65], [0.95, 0.85, 0.75])
    assert ex.trend_ok([0.9, 0.91, 0.7], [0.85, 0.86, 0.65], [0.95, 0.96, 0.75])
    assert not ex.trend_ok([0.5, 0.9], [0.45, 0.85], [0.55, 0.95])
    assert not ex.trend_ok([0.9, 0.91, 0.7, 0.72], [0.85, 0.86, 0.65, 0.67], [0.95, 0.96, 0.75, 0.77])


def test_probe_low_power_all_on(tmp_path):
    rep = ex.prob_equal_solutions("ls", [3], [-30.0, 40.0], ex.ProbeConfig(n_trials=60), seed=0)
    low, high = rep.row(3, -30.0), rep.row(3, 40.0)
    assert low["prob"] == 1.0 and 0 <= low["ci_lo"] <= low["prob"] <= low["ci_hi"] <= 1
    assert high["prob"] <= low["prob"]
    assert len(rep.records) == 120
    path = tmp_path / "probe.csv"
    rep.to_csv(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 2 and rows[0]["problem"] == "ls" and int(rows[0]["n"]) == 60


def test_probe_power_control_and_precoding():
    rep = ex.prob_equal_solutions("pc", [3], [-30.0], ex.ProbeConfig(n_trials=30), seed=1)
    assert rep.rows[0]["prob"] == 1.0
    rep = ex.prob_equal_solutions("pr", [(4, 2)], [10.0], ex.ProbeConfig(n_trials=40), seed=1)
    t = rep.table(eps=0.01)
    assert t[((4, 2), 10.0)] < 0.1
    assert rep.row((4, 2), 10.0, 0.2)["prob"] >= rep.row((4, 2), 10.0, 0.01)["prob"]


def test_probe_guards():
    with pytest.raises(SizeError):
        ex.prob_equal_solutions("ls", [13], [0.0], ex.ProbeConfig(n_trials=1))
    with pytest.raises(ConfigError):
        ex.prob_equal_solutions("xx", [3], [0.0], ex.ProbeConfig(n_trials=1))
    with pytest.raises(ContractError):
        ex.ProbeConfig(n_trials=0)
