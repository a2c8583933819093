import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgegnn import channel as ch
from edgegnn import graphs as gr
from edgegnn.errors import ConfigError, DimensionError


def test_ls_het_counts():
    g = gr.build_g_ls_het(np.arange(1.0, 10.0).reshape(3, 3))
    assert g.vertex_counts == {"tx": 3, "rx": 3}
    assert g.topology.n_vertices() == 6 and g.topology.n_edges() == 9
    assert len(g.edges["sig"]) == 3 and len(g.edges["int"]) == 6
    assert not g.batched and g.batch_size == 1


def test_ls_het_single_link():
    g = gr.build_g_ls_het([[2.0]])
    assert len(g.edges["sig"]) == 1 and len(g.edges["int"]) == 0
    assert g.edge_features["int"].shape == (1, 0, 1)


def test_ls_undir_counts_and_features():
    a = np.arange(1.0, 10.0).reshape(3, 3)
    g = gr.build_g_ls_undir(a)
    assert g.vertex_counts == {"D": 3} and len(g.edges["link"]) == 6
    assert np.array_equal(g.vertex_features["D"][0, :, 0], [1.0, 5.0, 9.0])
    assert g.edge_feature("link", 0, 2)[0] == 3.0
    assert g.edge_feature("link", 2, 0)[0] == 7.0


def test_p_het_counts_and_features():
    H = np.array([[1 + 2j, 3 - 1j], [0.5j, -2.0], [1.0, 1j]])
    g = gr.build_g_p_het(H)
    assert g.vertex_counts == {"ant": 3, "user": 2} and len(g.edges["e"]) == 6
    assert np.array_equal(g.edge_feature("e", 0, 1), [3.0, -1.0])
    assert np.array_equal(g.edge_feature("e", 1, 0), [0.0, 0.5])
    assert np.array_equal(gr.real_to_h(gr.h_to_real(H)), H)


def test_edge_features_match_alpha():
    a = ch.gen_channel_batch(ch.ScenarioParams(K=4), 3, 0)
    g = gr.build_g_ls_het(a, family="edge")
    for b in range(3):
        for i in range(4):
            assert g.edge_feature("sig", i, i, b)[0] == a[b, i, i]
            for j in range(4):
                if i != j:
                    assert g.edge_feature("int", i, j, b)[0] == a[b, i, j]
    assert g.action_site == ("edge", "sig")


def test_incidence_types_distinguish_direction():
    g = gr.build_g_ls_undir(np.ones((3, 3)))
    e01 = int(np.flatnonzero((g.edges["link"] == [0, 1]).all(axis=1))[0])
    e10 = int(np.flatnonzero((g.edges["link"] == [1, 0]).all(axis=1))[0])
    assert g.incidence_type("D", 0, "link", e01) == ("link", "src")
    assert g.incidence_type("D", 0, "link", e10) == ("link", "dst")
    with pytest.raises(ConfigError):
        g.incidence_type("D", 2, "link", e01)


def test_bad_inputs():
    with pytest.raises(DimensionError):
        gr.build_g_ls_het(np.ones((2, 3)))
    with pytest.raises(ConfigError):
        gr.build_graph("nope", np.ones((2, 2)))
    with pytest.raises(ConfigError):
        gr.build_g_ls_undir(np.ones((2, 2)), update_site="both")
    with pytest.raises(DimensionError):
        gr.check_perm([0, 0, 1], 3)


def test_permute_conventions():
    x = np.arange(9.0).reshape(3, 3)
    p = np.array([2, 0, 1])
    out = gr.permute(x, p)
    assert out[0, 1] == x[2, 0]
    assert np.array_equal(gr.permute(np.arange(3.0), p), [2.0, 0.0, 1.0])
    assert np.array_equal(gr.permute(gr.permute(x, p), gr.inverse_perm(p)), x)
    H = np.arange(6.0).reshape(3, 2) + 1j
    Hp = gr.permute(H, (p, np.array([1, 0])))
    assert Hp[0, 0] == H[2, 1]
    Hr = gr.permute(gr.h_to_real(H), (p, np.array([1, 0])))
    assert np.array_equal(gr.real_to_h(Hr), Hp)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(2, 6))
def test_build_commutes_with_permutation_ls(seed, K):
    rng = np.random.default_rng(seed)
    a = rng.exponential(size=(2, K, K))
    p = rng.permutation(K)
    for build in (gr.build_g_ls_het, gr.build_g_ls_undir):
        lhs = gr.permute(build(a), p)
        rhs = build(gr.permute(a, p, what="matrix"))
        assert gr.graph_equal(lhs, rhs)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), N=st.integers(1, 5), K=st.integers(1, 4))
def test_build_commutes_with_permutation_p(seed, N, K):
    rng = np.random.default_rng(seed)
    H = ch.gen_rayleigh_H(N, K, rng, batch=2)
    perm = (rng.permutation(N), rng.permutation(K))
    assert gr.graph_equal(gr.permute(gr.build_g_p_het(H), perm), gr.build_g_p_het(gr.permute(H, perm)))


def test_graph_equal_detects_change():
    a = np.ones((3, 3))
    b = a.copy()
    b[0, 1] = 2.0
    assert gr.graph_equal(gr.build_g_ls_het(a), gr.build_g_ls_het(a))
    assert not gr.graph_equal(gr.build_g_ls_het(a), gr.build_g_ls_het(b))
    assert not gr.graph_equal(gr.build_g_ls_het(a), gr.build_g_ls_undir(a))
