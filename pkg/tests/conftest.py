"""Shared test helpers: central finite-difference gradient checking."""

import numpy as np
import pytest

from clipdet.autodiff import Tensor, backward


def numeric_grad(forward, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued ``forward`` w.r.t. x.

    ``forward`` must re-run the computation from the current contents of x;
    x is perturbed in place and restored.
    """
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        f_plus = forward()
        flat_x[i] = orig - h
        f_minus = forward()
        flat_x[i] = orig
        flat_g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build_loss, params: dict[str, Tensor], h: float = 1e-5,
                    rtol: float = 1e-4) -> None:
    """Assert analytic gradients match central differences for every param.

    ``build_loss`` runs the forward pass and returns the scalar loss tensor.
    """
    for p in params.values():
        p.grad = None
    loss = build_loss()
    backward(loss)
    for name, p in params.items():
        assert p.grad is not None, f"parameter {name!r} received no gradient"
        numeric = numeric_grad(lambda: float(build_loss().data), p.data, h=h)
        err = max_rel_error(p.grad, numeric)
        assert err < rtol, f"gradient mismatch for {name!r}: max rel error {err:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
