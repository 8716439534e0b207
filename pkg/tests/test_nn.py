import numpy as np
import pytest

from searchonto import nn
from searchonto.nn import checkpoint


def conv_loops(x, W, b):
    """Direct same-padded cross-correlation, one output at a time."""
    L, _ = x.shape
    out_c, in_c, width = W.shape
    pad = (width - 1) // 2
    y = np.zeros((L, out_c))
    for t in range(L):
        for o in range(out_c):
            acc = b[o]
            for k in range(width):
                src = t + k - pad
                if 0 <= src < L:
                    acc += sum(W[o, c, k] * x[src, c] for c in range(in_c))
            y[t, o] = acc
    return y


def test_conv_averaging_kernel():
    conv = nn.Conv1d(1, 1, 3)
    conv.params["W"][...] = 1.0 / 3.0
    y = conv(np.array([[1.0], [2.0], [3.0]]))
    assert np.allclose(y[:, 0], [1.0, 2.0, 5.0 / 3.0], atol=1e-12)


def test_conv_matches_loops():
    rng = np.random.default_rng(0)
    for width in (1, 3, 5, 7):
        conv = nn.Conv1d(4, 3, width, rng)
        conv.params["b"][...] = rng.normal(size=3)
        x = rng.normal(size=(2, 6, 4))
        y = conv(x)
        for b in range(2):
            assert np.allclose(y[b], conv_loops(x[b], conv.params["W"], conv.params["b"]), atol=1e-12)


def test_conv_rejects_bad_shapes():
    with pytest.raises(ValueError):
        nn.Conv1d(1, 1, 2)
    with pytest.raises(nn.ShapeError):
        nn.Conv1d(2, 1, 3)(np.zeros((4, 3)))
    with pytest.raises(nn.BackwardBeforeForward):
        nn.Conv1d(1, 1, 3).backward(np.zeros((4, 1)))


def test_dense_known_values():
    d = nn.Dense(2, 1)
    d.params["W"][...] = [[2.0, -1.0]]
    d.params["b"][...] = [0.5]
    assert np.allclose(d(np.array([[1.0, 3.0]])), [[-0.5]])


class _Probe:
    """Loss = sum(layer(x) * r) so every output position carries gradient."""

    def __init__(self, layer, x, seed=0):
        self.layer, self.x = layer, x
        self.r = np.random.default_rng(seed).normal(size=layer.forward(x).shape)

    @property
    def params(self):
        return self.layer.params

    def loss_and_grads(self, _):
        self.layer.zero_grad()
        y = self.layer.forward(self.x)
        self.dx = self.layer.backward(self.r)
        return float((y * self.r).sum()), self.layer.grads


@pytest.mark.parametrize("make", [
    lambda rng: nn.Conv1d(3, 2, 5, rng),
    lambda rng: nn.Conv1d(2, 4, 3, rng),
    lambda rng: nn.Dense(4, 3, rng),
])
def test_layer_gradients(make):
    rng = np.random.default_rng(1)
    layer = make(rng)
    for p in layer.params.values():
        p += rng.normal(scale=0.1, size=p.shape)
    x_shape = (2, 5, layer.in_channels) if isinstance(layer, nn.Conv1d) else (2, 3, layer.in_features)
    probe = _Probe(layer, rng.normal(size=x_shape))
    assert nn.gradient_check(probe, None) < 1e-6
    probe.loss_and_grads(None)
    num = nn.numeric_gradient(lambda: float((layer.forward(probe.x) * probe.r).sum()), probe.x)
    assert nn.relative_error(probe.dx, num) < 1e-6


@pytest.mark.parametrize("act", [nn.ReLU, nn.Sigmoid, nn.Tanh, nn.Softmax])
def test_activation_gradients(act):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 4))
    x[np.abs(x) < 0.05] = 0.3  # keep away from the ReLU kink
    layer = act()
    r = rng.normal(size=x.shape)
    layer.forward(x)
    dx = layer.backward(r)
    num = nn.numeric_gradient(lambda: float((layer.forward(x) * r).sum()), x)
    assert nn.relative_error(dx, num) < 1e-6


def test_activation_values():
    assert np.allclose(nn.relu(np.array([-1.0, 2.0])), [0.0, 2.0])
    assert nn.sigmoid(np.array([0.0]))[0] == 0.5
    assert np.isfinite(nn.sigmoid(np.array([-1000.0, 1000.0]))).all()
    assert np.allclose(nn.softmax(np.array([1000.0, 1000.0])), [0.5, 0.5])
    assert nn.logsumexp(np.array([-np.inf, -np.inf])) == -np.inf
    assert nn.logsumexp(np.array([0.0, 0.0])) == pytest.approx(np.log(2))


def test_bce_with_logits():
    loss, grad = nn.bce_with_logits(np.array([0.0, 2.0]), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert loss == pytest.approx(np.log(2))
    assert np.allclose(grad, [-0.5, 0.0])
    z = np.array([0.3, -1.2, 4.0])
    t = np.array([1.0, 0.0, 1.0])
    num = nn.numeric_gradient(lambda: nn.bce_with_logits(z, t)[0], z)
    assert nn.relative_error(nn.bce_with_logits(z, t)[1], num) < 1e-7


def test_adam_first_step():
    p = {"w": np.array([1.0, -2.0, 0.0])}
    g = {"w": np.array([0.5, -4.0, 0.0])}
    nn.Adam(lr=0.1).step(p, g)
    # bias correction makes the first step lr * g / (|g| + eps)
    assert np.allclose(p["w"], [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 0.0])


def test_adam_defaults_and_checks():
    a = nn.Adam()
    assert (a.lr, a.beta1, a.beta2, a.eps) == (1e-3, 0.9, 0.999, 1e-8)
    with pytest.raises(ValueError):
        nn.Adam(beta1=1.0)
    with pytest.raises(ValueError):
        a.step({"w": np.zeros(2)}, {"w": np.zeros(3)})


def test_adam_minimizes_quadratic():
    p = {"w": np.array([3.0, -5.0])}
    opt = nn.Adam(lr=0.1)
    for _ in range(500):
        opt.step(p, {"w": 2 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2


def test_checkpoint_exact(tmp_path):
    rng = np.random.default_rng(3)
    params = {"a": rng.normal(size=(3, 4)), "b": np.array([1e-300, -0.0, 1 / 3])}
    checkpoint.save(tmp_path / "c.json", params, {"k": 1})
    back, cfg = checkpoint.load(tmp_path / "c.json")
    assert cfg == {"k": 1}
    for k in params:
        assert back[k].tobytes() == params[k].tobytes()


def test_checkpoint_errors(tmp_path):
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.decode({"config": {}, "params": {"a": {"shape": [2], "data": [1.0]}}})
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.decode({"params": {}})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.load(tmp_path / "bad.json")
