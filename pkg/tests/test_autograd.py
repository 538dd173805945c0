import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sopool import autograd as ag
from sopool.autograd import BatchNormState, Parameter, Tape, Tensor, check_gradients
from sopool.errors import ConfigError, ContractError, LabelError, ShapeError


def _grad(fn, *values):
    ts = [Parameter(np.array(v, dtype=float)) for v in values]
    with Tape() as tape:
        loss = fn(*ts)
    tape.backward(loss)
    return [t.grad for t in ts]


# ------------------------------------------------------------------ matmul


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ag.matmul(np.eye(2), m).value, m)


def test_matmul_outer_product():
    row = Tensor(np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(ag.matmul(ag.transpose(row), row).value, [[1, 2], [2, 4]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ag.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_gradient_matches_finite_differences(rng):
    a, b = Tensor(rng.uniform(-2, 2, (3, 4))), Tensor(rng.uniform(-2, 2, (4, 5)))
    chk = check_gradients("matmul", lambda: ag.sum_all(ag.matmul(a, b)), [a], h=1e-5)
    assert chk.rel_err < 1e-6


def test_sum_of_product_gradient_is_row_sums_of_b(rng):
    # d sum(AB) / dA = 1 B^T
    b = rng.normal(size=(4, 2))
    (ga,) = _grad(lambda a: ag.sum_all(ag.matmul(a, Tensor(b))), rng.normal(size=(3, 4)))
    np.testing.assert_allclose(ga, np.ones((3, 2)) @ b.T)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_gram_of_permuted_rows_is_unchanged(n, f, seed):
    rng = np.random.default_rng(seed)
    H = rng.uniform(-2, 2, (n, f))
    P = np.eye(n)[rng.permutation(n)]
    PH = Tensor(P @ H)
    g1 = ag.matmul(ag.transpose(PH), PH).value
    g2 = H.T @ P.T @ P @ H
    assert np.abs(g1 - H.T @ H).max() < 1e-9
    assert np.abs(g2 - H.T @ H).max() < 1e-9


# ------------------------------------------------------------- elementwise


def test_relu_forward_and_subgradient():
    x = np.array([[-1.0, 2.0]])
    np.testing.assert_array_equal(ag.relu(x).value, [[0, 2]])
    (g,) = _grad(lambda t: ag.sum_all(ag.relu(t)), x)
    np.testing.assert_array_equal(g, [[0, 1]])


def test_relu_subgradient_at_zero_is_zero():
    (g,) = _grad(lambda t: ag.sum_all(ag.relu(t)), [[0.0, 0.0]])
    np.testing.assert_array_equal(g, [[0, 0]])


def test_add_zero_is_identity(rng):
    X = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(ag.add(X, np.zeros_like(X)).value, X)


def test_elementwise_dispatch():
    a, b = np.array([[1.0, -2.0]]), np.array([[3.0, 4.0]])
    np.testing.assert_array_equal(ag.elementwise("add", a, b).value, [[4, 2]])
    np.testing.assert_array_equal(ag.elementwise("sub", a, b).value, [[-2, -6]])
    np.testing.assert_array_equal(ag.elementwise("mul", a, b).value, [[3, -8]])
    np.testing.assert_array_equal(ag.elementwise("relu", a).value, [[1, 0]])
    np.testing.assert_array_equal(ag.elementwise("scale", a, 2.0).value, [[2, -4]])


@pytest.mark.parametrize("kind", ["add", "sub", "mul"])
def test_elementwise_shape_mismatch(kind):
    with pytest.raises(ShapeError):
        ag.elementwise(kind, np.ones((2, 2)), np.ones((2, 3)))


def test_scale_by_scalar_tensor_gradient():
    gx, gs = _grad(lambda x, s: ag.sum_all(ag.scale(x, s)), [[1.0, 2.0]], [[3.0]])
    np.testing.assert_array_equal(gx, [[3, 3]])
    np.testing.assert_array_equal(gs, [[3]])


# ----------------------------------------------------------------- softmax


def test_softmax_uniform():
    np.testing.assert_allclose(ag.softmax_columns([[0.0], [0.0]]).value, [[0.5], [0.5]])


def test_softmax_large_values_do_not_overflow():
    out = ag.softmax_columns([[1000.0], [1000.0]]).value
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[0.5], [0.5]])


def test_softmax_rejects_empty_and_wide_input():
    with pytest.raises(ShapeError):
        ag.softmax_columns(np.zeros((0, 1)))
    with pytest.raises(ShapeError):
        ag.softmax_columns(np.zeros((3, 2)))


def test_softmax_jacobian_vector_product(rng):
    v = Tensor(rng.uniform(-2, 2, (6, 1)))
    w = Tensor(rng.uniform(-1, 1, (6, 1)))
    chk = check_gradients("softmax", lambda: ag.sum_all(ag.mul(ag.softmax_columns(v), w)), [v])
    assert chk.rel_err < 1e-6


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-50, 50)))
def test_softmax_sums_to_one(v):
    out = ag.softmax_columns(v.reshape(-1, 1)).value
    assert abs(out.sum() - 1.0) < 1e-12
    assert np.all(out > 0)


# -------------------------------------------------------------- batch norm


def test_batch_norm_train_two_values():
    x = np.array([[1.0], [3.0]])
    out = ag.batch_norm(x, np.ones((1, 1)), np.zeros((1, 1)), "train", BatchNormState.fresh(1)).value
    # biased variance 1, so the result is +-1/sqrt(1 + eps)
    np.testing.assert_allclose(out, [[-1.0], [1.0]], atol=1e-5)
    np.testing.assert_allclose(out, [[-1 / np.sqrt(1 + 1e-5)], [1 / np.sqrt(1 + 1e-5)]], rtol=1e-12)


def test_batch_norm_eval_identity_with_unit_stats(rng):
    x = rng.normal(size=(4, 3))
    state = BatchNormState.fresh(3)
    out = ag.batch_norm(x, np.ones((1, 3)), np.zeros((1, 3)), "eval", state).value
    np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5), rtol=1e-12)
    np.testing.assert_allclose(out, x, rtol=1e-5)


def test_batch_norm_running_stats_momentum():
    x = np.array([[1.0], [3.0]])
    state = BatchNormState.fresh(1)
    ag.batch_norm(x, np.ones((1, 1)), np.zeros((1, 1)), "train", state)
    np.testing.assert_allclose(state.running_mean, [[0.2]])
    # unbiased variance 2 -> 0.9 * 1 + 0.1 * 2
    np.testing.assert_allclose(state.running_var, [[1.1]])


def test_batch_norm_single_row_train_is_degenerate():
    with pytest.raises(ShapeError):
        ag.batch_norm(np.ones((1, 3)), np.ones((1, 3)), np.zeros((1, 3)), "train", BatchNormState.fresh(3))


def test_batch_norm_gradient(rng):
    x, g, b = (Tensor(rng.uniform(-2, 2, s)) for s in ((7, 3), (1, 3), (1, 3)))
    w = rng.uniform(-1, 1, (7, 3))
    state = BatchNormState.fresh(3)
    chk = check_gradients(
        "bn", lambda: ag.sum_all(ag.mul(ag.batch_norm(x, g, b, "train", state), Tensor(w))), [x, g, b]
    )
    assert chk.rel_err < 1e-5


# ----------------------------------------------------------------- dropout


def test_dropout_rate_zero_and_eval_are_identity(rng):
    x = rng.normal(size=(4, 4))
    np.testing.assert_array_equal(ag.dropout(x, 0.0, "train", rng).value, x)
    np.testing.assert_array_equal(ag.dropout(x, 0.9, "eval").value, x)


def test_dropout_invalid_rate():
    with pytest.raises(ConfigError):
        ag.dropout(np.ones((2, 2)), 1.0, "train", np.random.default_rng(0))
    with pytest.raises(ConfigError):
        ag.dropout(np.ones((2, 2)), -0.1, "train", np.random.default_rng(0))


def test_dropout_survivor_fraction_monte_carlo():
    out = ag.dropout(np.ones((1000, 100)), 0.5, "train", np.random.default_rng(7)).value
    frac = np.mean(out != 0)
    assert 0.49 <= frac <= 0.51
    # inverted scaling keeps the expectation
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_dropout_is_replayable_from_seed():
    x = np.ones((5, 5))
    a = ag.dropout(x, 0.3, "train", np.random.default_rng(3)).value
    b = ag.dropout(x, 0.3, "train", np.random.default_rng(3)).value
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------- cross entropy


def test_cross_entropy_uniform_logits():
    loss = ag.cross_entropy_loss(np.zeros((4, 2)), [0, 1, 1, 0]).item()
    assert loss == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_confident_limit():
    losses = [ag.cross_entropy_loss(np.array([[s, 0.0]]), [0]).item() for s in (1, 10, 50, 100)]
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-10


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    z = np.array([[1.0, 2.0, 0.5]])
    (g,) = _grad(lambda t: ag.cross_entropy_loss(t, [1]), z)
    p = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(g, p - np.array([[0, 1, 0]]), atol=1e-15)


def test_cross_entropy_finite_differences(rng):
    z = Tensor(rng.uniform(-2, 2, (6, 3)))
    labels = rng.integers(0, 3, 6)
    assert check_gradients("ce", lambda: ag.cross_entropy_loss(z, labels), [z]).rel_err < 1e-6


def test_cross_entropy_label_out_of_range():
    with pytest.raises(LabelError):
        ag.cross_entropy_loss(np.zeros((2, 2)), [0, 2])
    with pytest.raises(LabelError):
        ag.cross_entropy_loss(np.zeros((2, 2)), [-1, 0])


# ---------------------------------------------------------------- backward


def test_backward_sum_gives_ones():
    (g,) = _grad(lambda w: ag.sum_all(w), np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(g, np.ones((2, 3)))


def test_backward_square():
    (g,) = _grad(lambda w: ag.sum_all(ag.matmul(w, w)), [[1.5]])
    np.testing.assert_allclose(g, [[3.0]])


def test_backward_non_scalar_loss():
    w = Parameter(np.ones((2, 2)))
    with Tape() as tape:
        out = ag.matmul(w, w)
    with pytest.raises(ContractError):
        tape.backward(out)


def test_unreachable_parameter_has_zero_grad():
    used, unused = Parameter(np.ones((1, 2))), Parameter(np.ones((1, 2)))
    with Tape() as tape:
        loss = ag.sum_all(used)
    tape.backward(loss)
    np.testing.assert_array_equal(unused.grad, 0.0)


def test_tape_is_topologically_ordered(rng):
    a, b = Parameter(rng.normal(size=(2, 2))), Parameter(rng.normal(size=(2, 2)))
    with Tape() as tape:
        ag.sum_all(ag.relu(ag.add(ag.matmul(a, b), a)))
    for node in tape.nodes:
        for p in node.parents:
            if p.backward_fn is not None:
                assert p.index < node.index
            assert p.shape == p.value.shape
    assert tape.nodes[-1].op == "sum_all"


def test_no_tape_records_nothing():
    w = Parameter(np.ones((2, 2)))
    out = ag.matmul(w, w)
    assert out.backward_fn is None


def test_gradient_accumulates_over_two_paths():
    (g,) = _grad(lambda w: ag.sum_all(ag.add(w, w)), [[1.0, 2.0]])
    np.testing.assert_array_equal(g, [[2, 2]])


@pytest.mark.parametrize("seed", range(50))
def test_random_three_op_compositions(seed):
    from sopool.gradcheck import OP_CHECKS

    assert OP_CHECKS["composition"](seed).rel_err < 1e-5


def test_tape_replay_is_bit_identical():
    def run():
        rng = np.random.default_rng(11)
        w = Parameter(rng.normal(size=(4, 3)))
        x = Tensor(rng.normal(size=(5, 4)))
        with Tape() as tape:
            h = ag.dropout(ag.relu(ag.matmul(x, w)), 0.5, "train", rng)
            loss = ag.cross_entropy_loss(h, [0, 1, 2, 0, 1])
        tape.backward(loss)
        return loss.item(), w.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)


# -------------------------------------------------------------------- adam


def test_adam_zero_gradient_leaves_parameter():
    p = Parameter(np.array([[1.0, -2.0]]))
    ag.adam_step([p], 0.1)
    np.testing.assert_array_equal(p.value, [[1.0, -2.0]])


def test_adam_first_step_magnitude_is_lr():
    p = Parameter(np.array([[0.0, 0.0]]))
    p.grad[...] = [[3.0, -0.5]]
    ag.adam_step([p], 0.01)
    np.testing.assert_allclose(np.abs(p.value), 0.01, rtol=1e-6)
    np.testing.assert_array_equal(p.grad, 0.0)


def test_adam_converges_on_quadratic():
    w = Parameter(np.zeros((1, 1)))
    for _ in range(200):
        with Tape() as tape:
            d = ag.add_bias(w, np.array([[-3.0]]))
            loss = ag.sum_all(ag.mul(d, d))
        tape.backward(loss)
        ag.adam_step([w], 0.1)
    assert abs(w.value[0, 0] - 3.0) < 0.05


def test_adam_state_shapes_match():
    p = Parameter(np.ones((3, 2)))
    p.grad[...] = 1.0
    ag.adam_step([p], 0.1)
    assert p.m.shape == p.v.shape == p.grad.shape == p.value.shape
    assert p.step == 1


def test_glorot_bounds():
    w = ag.glorot_uniform(np.random.default_rng(0), 40, 10)
    limit = np.sqrt(6 / 50)
    assert np.abs(w).max() <= limit


# -------------------------------------------------------------- gradcheck


def test_relative_error_zero_gradients():
    assert ag.relative_error(np.zeros(3), np.zeros(3)) == 0.0


def test_injected_fault_is_detected(rng):
    a, b = Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))
    with ag.inject_fault("matmul"):
        chk = check_gradients("matmul", lambda: ag.sum_all(ag.matmul(a, b)), [a, b])
    assert chk.rel_err > 0.1


def test_kink_straddling_probe_is_skipped():
    x = Tensor(np.array([[3e-6, 1.0]]))
    chk = check_gradients("relu", lambda: ag.sum_all(ag.relu(x)), [x], h=1e-5)
    assert chk.skipped == 1 and chk.probed == 2
    assert chk.rel_err < 1e-9
    raw = check_gradients("relu", lambda: ag.sum_all(ag.relu(x)), [x], h=1e-5, skip_kinks=False)
    assert raw.rel_err > 0.1
