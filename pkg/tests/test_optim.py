"""Adam update rule and checkpoint round trips."""

import numpy as np
import pytest

from clipdet.autodiff import ShapeError, Tensor, backward, parameter
from clipdet.checkpoint import CheckpointError, assign_params, load_params, save_params
from clipdet.optim import Adam, AdamState, adam_step, clip_grad_norm


def adam_first_step_oracle(p, g, lr, b1, b2, eps, wd):
    """Closed-form single Adam step from zero-initialized moments."""
    g = g + wd * p
    m_hat = g  # (1-b1)g / (1-b1)
    v_hat = g * g
    return p - lr * m_hat / (np.sqrt(v_hat) + eps)


class TestAdamStep:
    def test_zero_gradient_only_weight_decay_shrinks(self):
        p = parameter(np.array([2.0, -3.0]))
        state = AdamState(learning_rate=0.1, weight_decay=1e-2)
        adam_step({"p": p}, {"p": np.zeros(2)}, state)
        # effective gradient is wd*p, so the update moves every weight toward 0
        assert np.all(np.abs(p.data) < np.abs(np.array([2.0, -3.0])))
        assert np.sign(p.data[0]) == 1 and np.sign(p.data[1]) == -1
        assert state.step_count == 1

    def test_zero_gradient_zero_decay_leaves_params(self):
        p = parameter(np.array([2.0, -3.0]))
        state = AdamState(weight_decay=0.0)
        adam_step({"p": p}, {"p": np.zeros(2)}, state)
        assert np.array_equal(p.data, [2.0, -3.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_first_step_matches_closed_form(self, seed):
        rng = np.random.default_rng(seed)
        p0 = rng.normal(size=(3, 2))
        g = rng.normal(size=(3, 2))
        p = parameter(p0.copy())
        state = AdamState(learning_rate=2e-4, weight_decay=1e-4)
        adam_step({"p": p}, {"p": g}, state)
        expected = adam_first_step_oracle(p0, g, 2e-4, 0.9, 0.999, 1e-8, 1e-4)
        assert np.max(np.abs(p.data - expected)) < 1e-15
        # first-step direction is approximately -sign(g) * lr
        moved = p.data - adam_first_step_oracle(p0, np.zeros_like(g), 2e-4, 0.9, 0.999, 1e-8, 0.0)
        big = np.abs(g) > 1e-3
        assert np.all(np.sign(moved[big]) == -np.sign(g[big]))

    def test_quadratic_convergence(self):
        # minimize (x - 3)^2 from 0 at lr = 2e-4 * 50
        x = parameter(np.array([0.0]))
        opt = Adam({"x": x}, learning_rate=2e-4 * 50, weight_decay=0.0)
        for _ in range(2000):
            opt.zero_grad()
            diff = x - Tensor([3.0])
            backward((diff * diff).sum())
            opt.step()
        assert abs(float(x.data[0]) - 3.0) < 0.01

    def test_shape_mismatch_rejected(self):
        p = parameter(np.zeros((2, 2)))
        with pytest.raises(ShapeError):
            adam_step({"p": p}, {"p": np.zeros(3)}, AdamState())

    def test_step_counter_increments(self):
        p = parameter(np.zeros(2))
        state = AdamState()
        for expected in (1, 2, 3):
            adam_step({"p": p}, {"p": np.ones(2)}, state)
            assert state.step_count == expected


class TestGradClip:
    def test_norm_above_threshold_scales(self):
        p = parameter(np.zeros(4))
        p.grad = np.full(4, 10.0)
        norm = clip_grad_norm({"p": p}, 1.0)
        assert norm == pytest.approx(20.0)
        assert np.linalg.norm(p.grad) == pytest.approx(1.0)

    def test_norm_below_threshold_untouched(self):
        p = parameter(np.zeros(4))
        p.grad = np.full(4, 0.1)
        clip_grad_norm({"p": p}, 1.0)
        assert np.array_equal(p.grad, np.full(4, 0.1))


class TestCheckpoint:
    def test_round_trip_structurally_identical(self, tmp_path, rng):
        params = {
            "a.w": parameter(rng.normal(size=(3, 4))),
            "a.b": parameter(rng.normal(size=4)),
            "scalarish": parameter(rng.normal(size=(1,))),
        }
        path = tmp_path / "ckpt.bin"
        save_params(path, params)
        loaded = load_params(path)
        assert set(loaded) == set(params)
        for name, p in params.items():
            assert np.array_equal(loaded[name], p.data)

    def test_byte_exact_round_trip(self, tmp_path, rng):
        params = {"w": parameter(rng.normal(size=(7, 5))), "b": parameter(rng.normal(size=7))}
        p1 = tmp_path / "one.bin"
        p2 = tmp_path / "two.bin"
        save_params(p1, params)
        save_params(p2, load_params(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_assign_checks_names_and_shapes(self, tmp_path, rng):
        params = {"w": parameter(rng.normal(size=(2, 2)))}
        path = tmp_path / "ckpt.bin"
        save_params(path, params)
        with pytest.raises(CheckpointError):
            assign_params({"other": parameter(np.zeros(2))}, load_params(path))
        with pytest.raises(CheckpointError):
            assign_params({"w": parameter(np.zeros((3, 3)))}, load_params(path))

    def test_truncated_file_rejected(self, tmp_path, rng):
        params = {"w": parameter(rng.normal(size=(4, 4)))}
        path = tmp_path / "ckpt.bin"
        save_params(path, params)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 16])
        with pytest.raises(CheckpointError):
            load_params(path)
