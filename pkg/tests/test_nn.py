import numpy as np
import pytest

from lldg.nn import (
    AdamW,
    Conv1d,
    Linear,
    MultiHeadSelfAttention,
    Parameter,
    Tensor,
    TrainingError,
    TransformerBlock,
    activation,
    clip_grad_norm,
    conv1d,
    linear,
    load_checkpoint,
    multi_head_attention,
    no_grad,
    prelu,
    relu,
    save_checkpoint,
    softmax,
    straight_through,
    tanh,
)
from gradcases import OP_CASES, grad_error, toy_config, toy_model_error
from lldg.model import LldgModel, loss_d, loss_g, total_loss
from oracles import central_difference, rel_error


# -- finite-difference gradient checks ---------------------------------------

ATTENTION_OPS = {"attention"}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients(name):
    tol = 1e-3 if name in ATTENTION_OPS else 1e-4
    for seed in range(20):
        err = grad_error(*OP_CASES[name](np.random.default_rng(seed)))
        assert err < tol, f"{name} seed {seed}: relative error {err:.2e}"


def test_toy_model_gradient():
    for seed in range(5):
        assert toy_model_error(np.random.default_rng(100 + seed)) < 1e-3


def test_linear_weight_gradient_is_column_sums():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4))
    w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    linear(x, w, np.zeros(2)).sum().backward()
    expect = np.repeat(x.sum(axis=0)[:, None], 2, axis=1)
    np.testing.assert_allclose(w.grad, expect, atol=1e-12)
    num = central_difference(lambda: linear(x, w, np.zeros(2)).sum().item(), w.data)
    assert rel_error(w.grad, num) < 1e-4


# -- forward contracts -------------------------------------------------------


def test_linear_identity_and_bias():
    x = np.random.default_rng(1).standard_normal((3, 4))
    np.testing.assert_array_equal(linear(x, np.eye(4), np.zeros(4)).data, x)
    b = np.array([1.0, -2.0])
    np.testing.assert_array_equal(linear(np.zeros((3, 4)), np.ones((4, 2)), b).data, np.tile(b, (3, 1)))
    with pytest.raises(ValueError):
        linear(x, np.eye(3))


def test_conv_identity_kernel():
    x = np.random.default_rng(2).standard_normal((2, 1, 6))
    y = conv1d(x, np.array([[[0.0, 1.0, 0.0]]]))
    np.testing.assert_array_equal(y.data, x)


def test_conv_zero_padding():
    y = conv1d(np.ones((1, 1, 5)), np.ones((1, 1, 3)))
    np.testing.assert_array_equal(y.data[0, 0], [2, 3, 3, 3, 2])


def test_conv_cross_correlation_orientation():
    x = np.arange(5.0).reshape(1, 1, 5)
    y = conv1d(x, np.array([[[1.0, 0.0, 0.0]]]))
    # cross-correlation: output[t] = x[t - 1]
    np.testing.assert_array_equal(y.data[0, 0], [0, 0, 1, 2, 3])


def test_conv_errors():
    with pytest.raises(ValueError):
        conv1d(np.ones((1, 1, 2)), np.ones((1, 1, 3)))
    with pytest.raises(ValueError):
        conv1d(np.ones((1, 1, 5)), np.ones((1, 1, 4)))
    with pytest.raises(ValueError):
        conv1d(np.ones((1, 2, 5)), np.ones((1, 1, 3)))


def test_attention_single_token():
    rng = np.random.default_rng(3)
    dim = 8
    x = rng.standard_normal((2, 1, dim))
    w_qkv, b_qkv = rng.standard_normal((dim, 3 * dim)), rng.standard_normal(3 * dim)
    w_out, b_out = rng.standard_normal((dim, dim)), rng.standard_normal(dim)
    out, weights = multi_head_attention(x, w_qkv, b_qkv, w_out, b_out, heads=2)
    np.testing.assert_array_equal(weights.data, np.ones((2, 2, 1, 1)))
    value = x @ w_qkv[:, 2 * dim:] + b_qkv[2 * dim:]
    np.testing.assert_allclose(out.data, value @ w_out + b_out, atol=1e-12)


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(4)
    attn = MultiHeadSelfAttention(8, 4, rng)
    attn(rng.standard_normal((3, 5, 8)))
    np.testing.assert_allclose(attn.last_weights.sum(axis=-1), 1.0, atol=1e-9)
    assert attn.last_weights.shape == (3, 4, 5, 5)


def test_attention_heads_must_divide():
    with pytest.raises(ValueError):
        MultiHeadSelfAttention(10, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        multi_head_attention(np.ones((1, 2, 6)), np.ones((6, 18)), None, np.ones((6, 6)), None, 4)


def test_transformer_single_token_residual():
    rng = np.random.default_rng(5)
    block = TransformerBlock(8, 2, 2.0, rng)
    x = rng.standard_normal((1, 1, 8))
    # with one token, attention reduces to the value path on the normalized input
    h = block.norm1(x).data
    v = h @ block.attn.w_qkv.data[:, 16:] + block.attn.b_qkv.data[16:]
    mid = x + v @ block.attn.w_out.data + block.attn.b_out.data
    u = block.norm2(mid).data @ block.fc1.weight.data + block.fc1.bias.data
    gelu_u = 0.5 * u * (1 + np.tanh(np.sqrt(2 / np.pi) * (u + 0.044715 * u**3)))
    expect = mid + gelu_u @ block.fc2.weight.data + block.fc2.bias.data
    np.testing.assert_allclose(block(x).data, expect, atol=1e-12)


def test_activations():
    assert tanh(np.array([0.0])).data[0] == 0.0
    assert relu(np.array([-1.0])).data[0] == 0.0
    assert prelu(np.array([-1.0]), np.array([0.25])).data[0] == -0.25
    np.testing.assert_allclose(softmax(np.zeros(5)).data, [0.2] * 5)
    assert np.all(np.abs(tanh(np.linspace(-30, 30, 11)).data) <= 1)
    assert activation("prelu", np.array([-2.0])).data[0] == -0.5
    with pytest.raises(ValueError):
        activation("swish", np.zeros(2))


def test_softmax_is_distribution():
    y = softmax(np.random.default_rng(6).standard_normal((10, 7)) * 30).data
    assert np.all(y >= 0)
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-9)


# -- backward contracts ------------------------------------------------------


def test_sum_gradient_ones():
    w = Tensor(np.random.default_rng(7).standard_normal((3, 2)), requires_grad=True)
    w.sum().backward()
    np.testing.assert_array_equal(w.grad, np.ones((3, 2)))


def test_numpy_left_operands():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = np.array([3.0, 4.0]) * w + np.array([1.0, 1.0]) - np.ones(2) / w
    assert isinstance(y, Tensor)
    y.sum().backward()
    np.testing.assert_allclose(w.grad, [3.0 + 1.0, 4.0 + 0.25])


def test_composite_tanh():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((4, 3))
    w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
    f = lambda: tanh(x @ w).sum()
    f().backward()
    assert rel_error(w.grad, central_difference(lambda: f().item(), w.data)) < 1e-4


def test_backward_accumulates_until_reset():
    w = Tensor(np.ones(3), requires_grad=True)
    (w * 2.0).sum().backward()
    (w * 2.0).sum().backward()
    np.testing.assert_array_equal(w.grad, [4.0, 4.0, 4.0])
    w.zero_grad()
    np.testing.assert_array_equal(w.grad, np.zeros(3))


def test_backward_rejects_nonscalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (w * 2.0).backward()


def test_unreachable_gradient_zero():
    layer_a = Linear(3, 2, np.random.default_rng(0))
    layer_b = Linear(3, 2, np.random.default_rng(1))
    layer_a.zero_grad()
    layer_b.zero_grad()
    layer_a(np.ones((1, 3))).sum().backward()
    assert np.all(layer_b.weight.grad == 0)
    assert np.any(layer_a.weight.grad != 0)


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (w * 3.0).sum()
    assert not y.requires_grad


def test_straight_through():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    y = straight_through(x, lambda a: a * 0.0)
    np.testing.assert_array_equal(y.data, np.zeros(3))
    (y * np.array([1.0, 2.0, 3.0])).sum().backward()
    np.testing.assert_array_equal(x.grad, [1.0, 2.0, 3.0])


def test_shared_leaf_accumulates_within_graph():
    w = Tensor(np.array([2.0]), requires_grad=True)
    (w * w + w).sum().backward()
    np.testing.assert_allclose(w.grad, [5.0])


# -- AdamW -------------------------------------------------------------------


def _param(value, grad):
    p = Parameter(np.array(value, dtype=float))
    p.grad = np.array(grad, dtype=float)
    return p


def test_adamw_zero_gradient_no_decay():
    p = _param([1.0, -2.0], [0.0, 0.0])
    opt = AdamW({"p": p}, weight_decay=0.0)
    for _ in range(5):
        opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adamw_decay_only():
    p = _param([1.0, -2.0], [0.0, 0.0])
    opt = AdamW({"p": p}, lr=1e-3, weight_decay=0.01)
    for _ in range(10):
        opt.step()
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) * (1 - 1e-5) ** 10, rtol=1e-14)


def _minimize_square(steps, **kw):
    w = Parameter(np.array([1.0]))
    opt = AdamW({"w": w}, **kw)
    for _ in range(steps):
        opt.zero_grad()
        (w * w).sum().backward()
        opt.step()
    return w.data[0]


def test_adamw_quadratic_converges():
    assert abs(_minimize_square(2000, lr=1e-2)) < 1e-2


def test_adamw_quadratic_trajectory():
    # value produced by an independent AdamW implementation (float64, same hyperparameters)
    assert _minimize_square(2000) == pytest.approx(0.019893413846173543, abs=1e-12)
    assert _minimize_square(2000, weight_decay=0.0) == pytest.approx(0.020662311203242627, abs=1e-12)


def test_adamw_first_step_closed_form():
    # bias correction makes the first update lr * sign(g) (up to eps)
    p = _param([0.5], [0.3])
    opt = AdamW({"p": p}, lr=0.1, weight_decay=0.0)
    opt.step()
    np.testing.assert_allclose(p.data, [0.5 - 0.1 * 0.3 / (0.3 + 1e-8)], rtol=1e-12)


def test_adamw_nan_names_parameter():
    p = _param([1.0], [np.nan])
    opt = AdamW({"mixer.0.weight": p})
    with pytest.raises(TrainingError, match="mixer.0.weight"):
        opt.step()


def test_adamw_state_roundtrip():
    p = _param([1.0, 2.0], [0.1, -0.2])
    opt = AdamW({"p": p})
    opt.step()
    state = opt.state_dict()
    q = _param([1.0, 2.0], [0.1, -0.2])
    opt2 = AdamW({"p": q})
    opt2.load_state_dict(state)
    p.grad = q.grad = np.array([0.3, 0.3])
    q.data[...] = p.data
    opt.step()
    opt2.step()
    np.testing.assert_array_equal(p.data, q.data)


def test_clip_grad_norm():
    a, b = _param([0.0], [3.0]), _param([0.0], [4.0])
    norm = clip_grad_norm([a, b], 1.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose([a.grad[0], b.grad[0]], [0.6, 0.8])
    assert clip_grad_norm([a, b], 10.0) == pytest.approx(1.0)
    np.testing.assert_allclose([a.grad[0], b.grad[0]], [0.6, 0.8])


def test_small_step_decreases_loss():
    passes = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        model = LldgModel(toy_config(seed=seed, use_tucker=True))
        x = rng.standard_normal((4, 4))
        l = rng.dirichlet(np.ones(3), size=4)
        bhat = rng.standard_normal((4, 3, 3, 3))

        def loss():
            b, _, lhat = model(x)
            return total_loss(loss_d(lhat, l), loss_g(b, bhat), 0.5)

        opt = AdamW(model.named_parameters(), lr=1e-5)
        before = loss()
        opt.zero_grad()
        before.backward()
        opt.step()
        passes += loss().item() < before.item()
    assert passes >= 9


# -- layers and checkpoints --------------------------------------------------


def test_module_parameter_names():
    model = LldgModel(toy_config())
    names = [n for n, _ in model.named_parameters()]
    assert len(names) == len(set(names))
    assert "convs.0.weight" in names and "mixer.2.bias" in names and "acts.0.alpha" in names


def test_conv_layer_shapes():
    conv = Conv1d(2, 5, 7, np.random.default_rng(0))
    assert conv(np.ones((3, 2, 9))).shape == (3, 5, 9)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    params = {"a.weight": rng.standard_normal((3, 4)), "b": np.array([np.pi, -0.0, 1e-300])}
    optim = {"step": np.array(3), "m.a.weight": rng.standard_normal((3, 4))}
    path = tmp_path / "ck.npz"
    save_checkpoint(path, params, {"note": "x"}, optim)
    p2, meta, o2 = load_checkpoint(path)
    assert meta["note"] == "x"
    for k, v in params.items():
        assert p2[k].tobytes() == v.astype("<f8").tobytes()
    for k, v in optim.items():
        assert np.array_equal(o2[k], v)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, x=np.zeros(2))
    with pytest.raises(ValueError):
        load_checkpoint(path)
