"""Every differentiable op is checked against central finite differences."""

import numpy as np
import pytest

from tagcl import autodiff as ad
from tagcl.errors import NumericsError
from tagcl.sparse import csr_from_entries


def rel_err(a, b, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)


def check_gradients(build, arrays, eps=1e-5, tol=1e-4):
    """Compare tape gradients of build(params)->scalar Node with finite diffs."""
    params = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
    loss = build(ad.lift_parameters(params))
    grads = ad.backward(loss)

    def f(arrs):
        return float(build(ad.lift_parameters(arrs)).value)

    fd = ad.finite_diff_gradient(f, dict(params), eps=eps)
    for name in params:
        assert rel_err(grads[name], fd[name]) <= tol, name


def test_sum_of_matrix_gradient_is_ones():
    w = ad.Parameter(np.ones((2, 2)), "w")
    grads = ad.backward(ad.reduce_sum(w))
    assert np.array_equal(grads["w"], np.ones((2, 2)))


def test_frobenius_norm_gradient_is_2w():
    value = np.array([[1.0, 2.0], [3.0, 4.0]])
    w = ad.Parameter(value, "w")
    grads = ad.backward(ad.reduce_sum(ad.multiply(w, w)))
    assert np.allclose(grads["w"], 2 * value)


def test_relu_values():
    out = ad.relu(ad.lift(np.array([-1.0, 2.0])))
    assert np.array_equal(out.value, [0.0, 2.0])


def test_sparse_identity_matmul_is_identity():
    eye = csr_from_entries(3, 3, [(i, i, 1.0) for i in range(3)])
    x = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(ad.sparse_dense_matmul(eye, ad.lift(x)).value, x)


def test_backward_requires_scalar():
    w = ad.Parameter(np.ones(3), "w")
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(ad.relu(w))


def test_backward_detects_cycle():
    w = ad.Parameter(np.ones(2), "w")
    out = ad.scale(w, 2.0)
    out.parents = (out,)  # corrupt the graph on purpose
    with pytest.raises(NumericsError, match="cycle"):
        ad.backward(ad.reduce_sum(out))


def test_duplicate_parameter_names_rejected():
    a = ad.Parameter(np.ones(2), "w")
    b = ad.Parameter(np.ones(2), "w")
    with pytest.raises(NumericsError, match="duplicate"):
        ad.backward(ad.reduce_sum(ad.add(a, b)))


def test_repeated_backward_is_identical():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4))

    def build():
        w = ad.Parameter(x, "w")
        return w, ad.reduce_sum(ad.multiply(ad.relu(w), w))

    w1, loss1 = build()
    w2, loss2 = build()
    g1 = ad.backward(loss1)
    g2 = ad.backward(loss2)
    assert np.array_equal(g1["w"], g2["w"])


def test_gradient_matmul_chain():
    rng = np.random.default_rng(1)
    check_gradients(
        lambda p: ad.reduce_sum(ad.multiply(ad.matmul(p["a"], p["b"]),
                                            ad.matmul(p["a"], p["b"]))),
        {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2))},
    )


def test_gradient_sparse_matmul():
    rng = np.random.default_rng(2)
    sparse = csr_from_entries(
        4, 3, [(0, 1, 2.0), (1, 0, -1.0), (2, 2, 0.5), (3, 0, 1.5), (3, 2, -2.5)]
    )
    check_gradients(
        lambda p: ad.reduce_sum(
            ad.multiply(ad.sparse_dense_matmul(sparse, p["x"]),
                        ad.sparse_dense_matmul(sparse, p["x"]))
        ),
        {"x": rng.normal(size=(3, 5))},
    )


def test_gradient_add_bias_and_relu():
    rng = np.random.default_rng(3)
    check_gradients(
        lambda p: ad.reduce_sum(ad.relu(ad.add_bias(p["x"], p["b"]))),
        {"x": rng.normal(size=(4, 3)) + 0.2, "b": rng.normal(size=3)},
    )


def test_gradient_l2_normalize_rows():
    rng = np.random.default_rng(4)
    check_gradients(
        lambda p: ad.reduce_sum(
            ad.multiply(ad.l2_normalize_rows(p["x"]), p["y"])
        ),
        {"x": rng.normal(size=(3, 4)), "y": rng.normal(size=(3, 4))},
    )


def test_l2_normalize_zero_row_stays_zero_with_zero_grad():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    p = ad.Parameter(x, "x")
    out = ad.l2_normalize_rows(p)
    assert np.array_equal(out.value[0], [0.0, 0.0])
    assert np.allclose(out.value[1], [0.6, 0.8])
    grads = ad.backward(ad.reduce_sum(out))
    assert np.array_equal(grads["x"][0], [0.0, 0.0])


def test_gradient_logsumexp_full_and_rows():
    rng = np.random.default_rng(5)
    check_gradients(lambda p: ad.logsumexp(p["x"]), {"x": rng.normal(size=6)})
    check_gradients(
        lambda p: ad.reduce_sum(ad.logsumexp(p["x"], axis=1)),
        {"x": rng.normal(size=(3, 5))},
    )


def test_logsumexp_is_stable_for_large_inputs():
    x = ad.lift(np.array([1000.0, 1000.0]))
    out = ad.logsumexp(x)
    assert np.isclose(out.value, 1000.0 + np.log(2.0))


def test_gradient_concat_gather_reshape():
    rng = np.random.default_rng(6)

    def build(p):
        picked = ad.gather_rows(p["x"], [2, 0, 2])
        flat = ad.reshape(picked, (-1,))
        joined = ad.concat([flat, ad.reshape(p["y"], (-1,))])
        return ad.logsumexp(joined)

    check_gradients(build, {"x": rng.normal(size=(3, 2)), "y": rng.normal(size=(2, 2))})


def test_gradient_mean_subtract_scale_transpose():
    rng = np.random.default_rng(7)
    check_gradients(
        lambda p: ad.reduce_mean(
            ad.subtract(ad.scale(ad.transpose(p["x"]), 1.7), p["y"])
        ),
        {"x": rng.normal(size=(3, 2)), "y": rng.normal(size=(2, 3))},
    )


def test_gradient_broadcast_multiply():
    rng = np.random.default_rng(8)
    check_gradients(
        lambda p: ad.reduce_sum(ad.multiply(p["x"], p["row"])),
        {"x": rng.normal(size=(4, 3)), "row": rng.normal(size=(1, 3))},
    )


def test_finite_diff_oracle_on_closed_forms():
    # f(x) = x^2 at 3 -> 6; constant -> 0; sin at 0.7 -> cos(0.7)
    g = ad.finite_diff_gradient(
        lambda p: float(p["x"] ** 2), {"x": np.array(3.0)}, eps=1e-5
    )
    assert abs(g["x"] - 6.0) <= 1e-6
    g = ad.finite_diff_gradient(lambda p: 5.0, {"x": np.array(1.0)}, eps=1e-5)
    assert abs(g["x"]) <= 1e-9
    g = ad.finite_diff_gradient(
        lambda p: float(np.sin(p["x"])), {"x": np.array(0.7)}, eps=1e-5
    )
    assert abs(g["x"] - np.cos(0.7)) <= 1e-8


def test_constant_subtrees_get_no_gradient():
    const = ad.lift(np.ones((2, 2)))
    w = ad.Parameter(np.ones((2, 2)), "w")
    grads = ad.backward(ad.reduce_sum(ad.matmul(const, w)))
    assert set(grads) == {"w"}
