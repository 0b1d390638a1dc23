"""Shared test utilities: finite-difference gradient oracle and helpers."""
from __future__ import annotations

import numpy as np

from ecgclf import autodiff as ad


def numerical_grad(scalar_fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. one array.

    ``scalar_fn`` must recompute the forward pass from the (mutated) array.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    it = np.nditer(array, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + h
        f_plus = scalar_fn()
        array[idx] = orig - h
        f_minus = scalar_fn()
        array[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
        it.iternext()
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """L2-relative disagreement between two gradient arrays."""
    na = np.linalg.norm(a.ravel())
    nb = np.linalg.norm(b.ravel())
    return float(np.linalg.norm((a - b).ravel()) / max(na, nb, 1e-12))


def check_gradients(build_output, tensors: dict[str, ad.Tensor], rng: np.random.Generator,
                    h: float = 1e-5) -> dict[str, float]:
    """Compare engine gradients with finite differences for each named tensor.

    ``build_output`` maps the current tensor values to an output Tensor; a
    fixed random projection turns it into a scalar so a single backward
    pass covers every output coordinate.
    """
    out = build_output()
    proj = rng.standard_normal(out.data.shape)

    loss = ad.sum_all(ad.mul(out, ad.Tensor(proj.astype(out.data.dtype))))
    ad.backward(loss)
    analytic = {}
    for name, t in tensors.items():
        assert t.grad is not None, f"no gradient reached {name}"
        analytic[name] = np.array(t.grad, dtype=np.float64)
        t.grad = None

    def scalar():
        return float((build_output().data * proj).sum())

    errors = {}
    for name, t in tensors.items():
        num = numerical_grad(scalar, t.data, h=h)
        errors[name] = rel_error(analytic[name], num)
    return errors
