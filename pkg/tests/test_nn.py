import math

import numpy as np
import pytest
import scipy.sparse as sp

from graphmlp.graph import Graph, build_adjacency, dense, normalize_adjacency
from graphmlp.nn import (GELU, CheckpointError, Dropout, GcnModel, GraphMlpModel, LayerNorm, Linear,
                         decode_checkpoint, encode_checkpoint, gelu, init_params, load_checkpoint,
                         save_checkpoint)
from graphmlp.tensor import Rng, grad_check

from .conftest import random_graph


def std_normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def gelu_oracle(x):
    return np.vectorize(lambda v: v * std_normal_cdf(v))(x)


class TestGelu:
    def test_zero(self):
        assert gelu(np.zeros((1, 1)))[0, 0] == 0.0

    def test_saturation(self):
        assert gelu(np.array([[10.0]]))[0, 0] == pytest.approx(10.0, abs=1e-12)

    def test_one(self):
        # Phi(1) from the erf definition
        assert gelu(np.array([[1.0]]))[0, 0] == pytest.approx(0.8413447460685429, abs=1e-15)

    def test_matches_scalar_oracle(self, nprng):
        x = nprng.normal(scale=3, size=(6, 7))
        np.testing.assert_allclose(gelu(x), gelu_oracle(x), rtol=1e-14, atol=1e-15)


def check_layer(layer, x, param_names, nprng, tol=1e-5):
    """Grad-check a layer's input and parameter gradients against f = sum(out * w)."""
    fwd = layer.forward
    w = nprng.normal(size=fwd(x).shape)
    layer.forward(x)
    gx = layer.backward(w)
    assert grad_check(lambda v: float(np.sum(fwd(v) * w)), x, gx) <= tol
    for name in param_names:
        layer.forward(x)
        layer.backward(w)
        analytic = layer.grads[name].copy()
        p = layer.params()[name]
        assert grad_check(lambda _: float(np.sum(fwd(x) * w)), p, analytic) <= tol


class TestLayerGradients:
    @pytest.mark.parametrize("trial", range(10))
    def test_linear(self, nprng, trial):
        rows, fi, fo = nprng.integers(1, 6, 3)
        layer = Linear(fi, fo)
        layer.init(Rng(trial))
        layer.b[...] = nprng.normal(size=fo)
        check_layer(layer, nprng.normal(size=(rows, fi)), ["W", "b"], nprng)

    @pytest.mark.parametrize("trial", range(10))
    def test_gelu(self, nprng, trial):
        rows, cols = nprng.integers(1, 6, 2)
        check_layer(GELU(), nprng.normal(scale=2, size=(rows, cols)), [], nprng)

    @pytest.mark.parametrize("trial", range(10))
    def test_layernorm(self, nprng, trial):
        rows, cols = nprng.integers(1, 6), nprng.integers(2, 9)
        layer = LayerNorm(cols)
        layer.gamma[...] = nprng.normal(size=cols)
        layer.beta[...] = nprng.normal(size=cols)
        check_layer(layer, nprng.normal(size=(rows, cols)), ["gamma", "beta"], nprng)

    @pytest.mark.parametrize("trial", range(10))
    def test_dropout_eval_mode(self, nprng, trial):
        layer = Dropout(0.6)
        x = nprng.normal(size=(3, 4))
        out = layer.forward(x, training=False, rng=None)
        np.testing.assert_array_equal(out, x)
        w = nprng.normal(size=x.shape)
        g = layer.backward(w)
        assert grad_check(lambda v: float(np.sum(layer.forward(v, False, None) * w)), x, g) <= 1e-5

    def test_layernorm_3x8_tight(self, nprng):
        layer = LayerNorm(8)
        check_layer(layer, nprng.normal(size=(3, 8)), ["gamma", "beta"], nprng, tol=1e-6)


class TestLayerNormForward:
    def test_constant_row(self):
        out = LayerNorm(4).forward(np.full((1, 4), 3.0))
        np.testing.assert_array_equal(out, np.zeros((1, 4)))

    def test_already_standard(self):
        out = LayerNorm(2).forward(np.array([[1.0, -1.0]]))
        np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-5)


class TestDropout:
    def test_rate_and_scale(self):
        layer = Dropout(0.6)
        x = np.ones((100, 100))
        out = layer.forward(x, training=True, rng=Rng(0))
        survived = out != 0
        assert abs(survived.mean() - 0.4) <= 0.02
        np.testing.assert_allclose(out[survived], 1 / 0.4)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            Dropout(1.0)

    def test_expectation_matches_eval(self, nprng):
        # per-pass relative variance at rate 0.6 is 0.6/0.4 = 1.5, so 1e4 passes
        # leave ~1.2% Monte Carlo error against the 2% tolerance
        model = GraphMlpModel(5, 64, 3)
        init_params(model, Rng(1))
        x = nprng.normal(size=(4, 5))
        z_eval, _ = model.eval().forward(x)
        model.train()
        rng = Rng(2)
        total = np.zeros_like(z_eval)
        passes = 10_000
        for _ in range(passes):
            total += model.forward(x, rng)[0]
        rel = np.linalg.norm(total / passes - z_eval) / np.linalg.norm(z_eval)
        assert rel <= 0.02


class TestGraphMlpModel:
    def test_zero_weights_give_zero_outputs(self, nprng):
        model = GraphMlpModel(5, 6, 3).eval()
        z, y = model.forward(nprng.normal(size=(4, 5)))
        np.testing.assert_array_equal(z, 0)
        np.testing.assert_array_equal(y, 0)

    def test_eval_is_deterministic(self, nprng):
        model = GraphMlpModel(5, 6, 3)
        init_params(model, Rng(0))
        model.eval()
        x = nprng.normal(size=(4, 5))
        z1, y1 = model.forward(x)
        z2, y2 = model.forward(x)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(y1, y2)

    def test_forward_has_no_adjacency_parameter(self):
        import inspect
        params = list(inspect.signature(GraphMlpModel.forward).parameters)
        assert params == ["self", "x", "rng"]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            GraphMlpModel(5, 6, 3).forward(np.zeros((2, 4)))


def mlp_forward(model: GcnModel, x):
    h = gelu(x @ model.layer1.W + model.layer1.b)
    return h @ model.layer2.W + model.layer2.b


class TestGcn:
    def _model(self, d=4, h=5, c=3, seed=0):
        m = GcnModel(d, h, c)
        init_params(m, Rng(seed))
        m.layer1.b[...] = Rng(seed + 1).normal(h)
        m.layer2.b[...] = Rng(seed + 2).normal(c)
        return m.eval()

    def test_identity_adjacency_is_mlp_bit_for_bit(self, nprng):
        m = self._model()
        x = nprng.normal(size=(6, 4))
        out_i = m.forward(sp.identity(6, format="csr"), x)
        out_none = m.forward(None, x)
        np.testing.assert_array_equal(out_i, out_none)
        np.testing.assert_allclose(out_none, mlp_forward(m, x), rtol=0, atol=1e-12)

    def test_single_self_loop_node(self, nprng):
        m = self._model()
        g = Graph(nprng.normal(size=(1, 4)), [-1], [], 1)
        a_hat = normalize_adjacency(build_adjacency(g))
        np.testing.assert_allclose(m.forward(a_hat, g.features), mlp_forward(m, g.features), atol=1e-12)

    def test_matches_dense_oracle(self, nprng):
        m = self._model()
        g = random_graph(6, 0.5, nprng)
        x = nprng.normal(size=(6, 4))
        a_hat = normalize_adjacency(build_adjacency(g))
        ad = dense(a_hat)
        expected = (ad @ gelu(ad @ x @ m.layer1.W + m.layer1.b)) @ m.layer2.W + m.layer2.b
        np.testing.assert_allclose(m.forward(a_hat, x), expected, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("trial", range(5))
    def test_backward(self, nprng, trial):
        m = self._model(seed=trial)
        g = random_graph(7, 0.4, nprng)
        a_hat = normalize_adjacency(build_adjacency(g))
        x = nprng.normal(size=(7, 4))
        w = nprng.normal(size=(7, 3))
        m.forward(a_hat, x)
        gx = m.backward(w)
        grads = {k: v.copy() for k, v in m.named_grads().items()}

        def f(_):
            return float(np.sum(m.forward(a_hat, x) * w))

        assert grad_check(lambda v: float(np.sum(m.forward(a_hat, v) * w)), x, gx) <= 1e-5
        for name, p in m.named_params().items():
            assert grad_check(f, p, grads[name]) <= 1e-5, name

    def test_adjacency_size_mismatch(self):
        with pytest.raises(ValueError):
            self._model().forward(sp.identity(3, format="csr"), np.zeros((4, 4)))


class TestInit:
    def test_reproducible(self):
        a, b = GraphMlpModel(7, 6, 3), GraphMlpModel(7, 6, 3)
        init_params(a, Rng(4))
        init_params(b, Rng(4))
        for k, v in a.named_params().items():
            np.testing.assert_array_equal(v, b.named_params()[k])

    def test_bounds_and_defaults(self):
        m = GraphMlpModel(1433, 256, 7)
        init_params(m, Rng(0))
        limit = math.sqrt(6 / (1433 + 256))
        assert np.abs(m.lin0.W).max() <= limit
        np.testing.assert_array_equal(m.lin0.b, 0)
        np.testing.assert_array_equal(m.norm.gamma, 1)
        np.testing.assert_array_equal(m.norm.beta, 0)

    def test_mean_is_near_zero(self):
        w = Linear(1000, 100)
        w.init(Rng(3))
        limit = math.sqrt(6 / 1100)
        sigma = limit / math.sqrt(3)  # std of U(-l, l)
        assert abs(w.W.mean()) <= 3 * sigma / math.sqrt(w.W.size)


def random_model(kind, rng_seed, nprng):
    model = GraphMlpModel(6, 5, 3) if kind == "graphmlp" else GcnModel(6, 5, 3)
    init_params(model, Rng(rng_seed))
    for p in model.named_params().values():
        p[...] += nprng.normal(scale=0.1, size=p.shape)
    return model


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["graphmlp", "gcn"])
    def test_round_trip(self, tmp_path, nprng, kind):
        m = random_model(kind, 0, nprng)
        save_checkpoint(tmp_path / "a.ckpt", m, extra={"note": "x"})
        m2, meta, _ = load_checkpoint(tmp_path / "a.ckpt")
        assert meta["extra"] == {"note": "x"}
        for k, v in m.named_params().items():
            np.testing.assert_array_equal(v, m2.named_params()[k])
        save_checkpoint(tmp_path / "b.ckpt", m2, extra={"note": "x"})
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_corruption_detected(self, tmp_path, nprng):
        m = random_model("graphmlp", 0, nprng)
        save_checkpoint(tmp_path / "a.ckpt", m)
        blob = bytearray((tmp_path / "a.ckpt").read_bytes())
        blob[100] ^= 0xFF
        with pytest.raises(CheckpointError):
            decode_checkpoint(bytes(blob))

    def test_not_a_checkpoint(self):
        with pytest.raises(CheckpointError):
            decode_checkpoint(b"hello")

    def test_special_values_preserved(self):
        arr = np.array([[0.0, -0.0, 1e-308, 5e-324, -1.5e300]])
        _, out = decode_checkpoint(encode_checkpoint({}, {"a": arr}))
        assert out["a"].tobytes() == arr.tobytes()
