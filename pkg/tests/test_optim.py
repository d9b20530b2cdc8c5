import numpy as np
import pytest

from graphmlp.optim import Adam, exempt_norm_and_bias
from graphmlp.tensor import NonFiniteError


def adam_reference(theta, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar textbook Adam with coupled L2."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        g = g + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
        out.append(theta)
    return out


class TestAdam:
    def test_zero_grad_no_decay_is_noop(self):
        p = {"w": np.array([[1.0, -2.0]])}
        opt = Adam(p, lr=0.1)
        opt.step({"w": np.zeros((1, 2))})
        np.testing.assert_array_equal(p["w"], [[1.0, -2.0]])
        assert opt.t == 1

    def test_first_step_closed_form(self):
        p = {"w": np.zeros((1, 1))}
        Adam(p, lr=0.01).step({"w": np.ones((1, 1))})
        # m_hat = 1, v_hat = 1 at t = 1
        assert p["w"][0, 0] == pytest.approx(-0.01 / (1 + 1e-8), rel=1e-12)

    @pytest.mark.parametrize("lr", [0.001, 0.01, 0.05, 0.1])
    def test_matches_scalar_reference(self, lr):
        rng = np.random.default_rng(0)
        gs = rng.normal(size=25)
        p = {"w": np.full((1, 1), 0.7)}
        opt = Adam(p, lr=lr, weight_decay=5e-3)
        traj = []
        for g in gs:
            opt.step({"w": np.full((1, 1), g)})
            traj.append(p["w"][0, 0])
        # weight decay in the reference uses the evolving theta, exactly as the optimizer does
        np.testing.assert_allclose(traj, adam_reference(0.7, gs, lr, 5e-3), rtol=1e-12)

    def test_bounded_step_at_constant_gradient(self):
        p = {"w": np.zeros((3, 2))}
        opt = Adam(p, lr=0.05)
        g = np.array([[1.0, -3.0], [0.2, 5.0], [1e-3, -1e-4]])
        prev = p["w"].copy()
        for _ in range(200):
            opt.step({"w": g})
            assert np.max(np.abs(p["w"] - prev)) <= 0.05 * (1 + 1e-6)
            prev = p["w"].copy()

    def test_non_finite_gradient_names_parameter(self):
        opt = Adam({"layer.W": np.zeros((1, 1))})
        with pytest.raises(NonFiniteError, match="layer.W"):
            opt.step({"layer.W": np.array([[np.nan]])})

    def test_identical_runs_are_bit_identical(self):
        rng = np.random.default_rng(1)
        gs = [rng.normal(size=(4, 3)) for _ in range(30)]
        outs = []
        for _ in range(2):
            p = {"w": np.ones((4, 3))}
            opt = Adam(p, lr=0.01, weight_decay=5e-4)
            for g in gs:
                opt.step({"w": g})
            outs.append(p["w"].copy())
        assert outs[0].tobytes() == outs[1].tobytes()

    def test_no_decay_exemption(self):
        p = {"lin0.W": np.ones((1, 1)), "lin0.b": np.ones(1), "norm.gamma": np.ones(1)}
        assert exempt_norm_and_bias(p) == {"lin0.b", "norm.gamma"}
        opt = Adam(p, lr=0.1, weight_decay=1.0, no_decay=exempt_norm_and_bias(p))
        opt.step({k: np.zeros_like(v) for k, v in p.items()})
        assert p["lin0.W"][0, 0] < 1.0
        assert p["lin0.b"][0] == 1.0 and p["norm.gamma"][0] == 1.0
