import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from edgegnn import numerics as nx
from edgegnn.errors import ConfigError, ContractError, DimensionError, NumericError


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def grad_check(build, shapes, seed=0, positive=False):
    """Compare tape gradients to central differences for a scalar-valued graph."""
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=s) for s in shapes]
    if positive:
        xs = [np.abs(x) + 0.5 for x in xs]

    tape = nx.Tape()
    ts = [tape.param(x) for x in xs]
    loss = build(*ts)
    grads = tape.backward(loss)
    worst = 0.0
    for k, x in enumerate(xs):
        def f(v, k=k):
            t2 = nx.Tape()
            args = [t2.constant(v if i == k else xs[i]) for i in range(len(xs))]
            return build(*args).data
        fd = nx.finite_diff_gradient(f, x)
        worst = max(worst, rel_err(grads[ts[k]], fd))
    return worst


def test_matmul_example():
    t = nx.Tape()
    out = t.constant([[1, 2], [3, 4]]) @ t.constant([[1], [1]])
    assert np.array_equal(out.data, [[3], [7]])


def test_mean_and_concat_examples():
    t = nx.Tape()
    assert np.array_equal(t.constant([[2, 4], [6, 8]]).mean(axis=1).data, [3, 7])
    c = nx.concat([t.constant(np.ones((2, 3))), t.constant(np.zeros((1, 3)))], axis=0)
    assert c.shape == (3, 3)


def test_activation_examples():
    assert nx.activation_value("relu", np.array(-1.5)) == 0
    assert nx.activation_value("leaky_relu", np.array(-1.0)) == pytest.approx(-0.2)
    assert nx.activation_value("softplus", np.array(0.0)) == pytest.approx(np.log(2.0))
    with pytest.raises(ConfigError):
        nx.activation_value("gelu", np.zeros(2))


def test_sigmoid_and_softplus_stable_at_extremes():
    x = np.array([-800.0, 0.0, 800.0])
    s = nx.activation_value("sigmoid", x)
    assert np.all(np.isfinite(s)) and s[0] == 0.0 and s[2] == 1.0
    assert np.all(np.isfinite(nx.activation_value("softplus", x)))


def test_square_grad():
    t = nx.Tape()
    x = t.param(3.0)
    g = t.backward(nx.square(x))
    assert g[x] == pytest.approx(6.0)


def test_non_scalar_loss_rejected():
    t = nx.Tape()
    x = t.param(np.ones(3))
    with pytest.raises(ContractError):
        t.backward(x * 2.0)


def test_shape_mismatch_and_nonfinite():
    t = nx.Tape()
    with pytest.raises(DimensionError):
        t.constant(np.ones((2, 3))) @ t.constant(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        t.constant(np.ones(3)) + t.constant(np.ones(4))
    with pytest.raises(NumericError):
        t.constant([1.0, np.nan])
    with pytest.raises(NumericError):
        nx.log(t.constant([0.0]))


def test_max_routes_gradient_to_first_argmax():
    t = nx.Tape()
    x = t.param([[1.0, 3.0, 3.0], [5.0, 0.0, 2.0]])
    g = t.backward(x.max(axis=1).sum())
    assert np.array_equal(g[x], [[0, 1, 0], [1, 0, 0]])


def test_unreachable_param_gets_zero_grad():
    t = nx.Tape()
    a = t.param(np.ones(2), name="a")
    b = t.param(np.ones(3), name="b")
    g = t.backward((a * 2.0).sum()).named()
    assert np.array_equal(g["b"], np.zeros(3))
    assert np.array_equal(g["a"], [2.0, 2.0])


@pytest.mark.parametrize("name", nx.ACTIVATIONS)
def test_activation_grad(name):
    err = grad_check(lambda x: nx.activation(name, x).sum(), [(4, 3)], seed=1)
    assert err < 1e-4


OP_CASES = {
    "matmul_batched": (lambda a, b: (a @ b).sum(), [(3, 2, 4), (4, 5)], False),
    "matmul_left_const": (lambda a, b: nx.square(a @ b).sum(), [(2, 3), (4, 3, 2)], False),
    "add_bcast": (lambda a, b: nx.square(a + b).sum(), [(3, 4), (1, 4)], False),
    "sub_bcast": (lambda a, b: nx.square(a - b).sum(), [(2, 3, 4), (4,)], False),
    "mul_bcast": (lambda a, b: (a * b).sum(), [(3, 4), (3, 1)], False),
    "div": (lambda a, b: (a / b).sum(), [(3, 4), (3, 4)], True),
    "concat": (lambda a, b: nx.square(nx.concat([a, b], axis=1)).mean(), [(2, 3), (2, 2)], False),
    "mean_axis": (lambda a: nx.square(a.mean(axis=0)).sum(), [(3, 4)], False),
    "max_axis": (lambda a: nx.square(a.max(axis=-1)).sum(), [(3, 4)], False),
    "log": (lambda a: nx.log(a).sum(), [(5,)], True),
    "exp": (lambda a: nx.exp(a).sum(), [(5,)], False),
    "sqrt": (lambda a: nx.sqrt(a).sum(), [(5,)], True),
    "abs": (lambda a: (nx.absolute(a) * a).sum(), [(5,)], False),
    "reshape_transpose": (
        lambda a: nx.square(a.reshape(2, 6).transpose(1, 0) @ a.reshape(2, 6)).sum(),
        [(3, 4)],
        False,
    ),
    "take": (lambda a: nx.square(a.take(np.array([[0, 2], [2, 1]]), axis=1)).sum(), [(2, 3, 2)], False),
}


@pytest.mark.parametrize("case", sorted(OP_CASES))
def test_op_gradients(case):
    build, shapes, pos = OP_CASES[case]
    for seed in range(20):
        assert grad_check(build, shapes, seed=seed, positive=pos) < 1e-4


def test_two_layer_fnn_matches_finite_diff():
    def net(x, w1, w2):
        h = nx.activation("relu", x @ w1)
        return nx.activation("sigmoid", h @ w2).mean()

    assert grad_check(net, [(5, 3), (3, 4), (4, 1)], seed=7) < 1e-4


def test_finite_diff_examples():
    assert np.allclose(nx.finite_diff_gradient(lambda x: x.sum(), np.arange(4.0)), 1.0)
    g = nx.finite_diff_gradient(lambda x: x[0] * x[1], np.array([2.0, 3.0]))
    assert np.allclose(g, [3.0, 2.0])


def test_adam_first_step():
    st_ = nx.AdamState(lr=0.1)
    out = nx.adam_step({"p": np.zeros(1)}, {"p": np.ones(1)}, st_)
    assert out["p"][0] == pytest.approx(-0.1, rel=1e-6)
    assert st_.step == 1


def test_adam_zero_grad_and_shape_check():
    p = {"w": np.array([1.0, -2.0])}
    out = nx.adam_step(p, {"w": np.zeros(2)}, nx.AdamState(lr=0.1))
    assert np.array_equal(out["w"], p["w"])
    with pytest.raises(DimensionError):
        nx.adam_step(p, {"w": np.zeros(3)}, nx.AdamState())


def test_adam_decreases_quadratic():
    f = lambda w: float(np.sum((w - 3.0) ** 2))
    st_ = nx.AdamState(lr=0.05)
    p = {"w": np.array([0.0, 1.0])}
    before = f(p["w"])
    for _ in range(2):
        p = nx.adam_step(p, {"w": 2.0 * (p["w"] - 3.0)}, st_)
    assert f(p["w"]) < before


def test_determinism():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(4, 4)), rng.normal(size=(4, 2))

    def run():
        t = nx.Tape()
        x = t.param(a)
        loss = nx.activation("mish", x @ t.constant(b)).mean()
        return loss.data, t.backward(loss)[x]

    l1, g1 = run()
    l2, g2 = run()
    assert l1.tobytes() == l2.tobytes() and g1.tobytes() == g2.tobytes()


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(
    x=arrays(np.float64, (3, 4), elements=finite),
    y=arrays(np.float64, (3, 4), elements=finite),
    a=finite,
    b=finite,
)
def test_linear_ops_are_linear(x, y, a, b):
    w = np.linspace(-1, 1, 8).reshape(4, 2)
    fs = {
        "matmul": lambda t, v: (t.constant(v) @ t.constant(w)).data,
        "add": lambda t, v: (t.constant(v) + t.constant(v[::-1])).data,
        "sum": lambda t, v: t.constant(v).sum(axis=0).data,
        "mean": lambda t, v: t.constant(v).mean(axis=1).data,
        "concat": lambda t, v: nx.concat([t.constant(v), t.constant(2 * v)], axis=0).data,
    }
    for f in fs.values():
        t = nx.Tape()
        lhs = f(t, a * x + b * y)
        rhs = a * f(t, x) + b * f(t, y)
        assert np.allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(rhs).max()))
