"""
Finite-difference gradient checking.

Central differences are taken by perturbing x.data in place and restoring
it, so f must read x.data on every call (closures over the Tensor work).
"""

import numpy as np

from src.diffcore.tensor import Tensor
from src.errors import InvalidInputError


def check_gradients(f, x: Tensor, eps: float = 1e-5, indices=None, floor: float = 1e-8) -> float:
    """
    Max relative error between the analytic gradient of scalar f at x and
    its central-difference estimate.

    relative error = |a - n| / max(|a|, |n|, floor)

    indices optionally restricts the comparison to flat positions of x
    (useful for large tensors).
    """
    if x.dtype != np.float64:
        raise InvalidInputError(f"check_gradients: x must be float64, got {x.dtype}")
    if eps <= 0:
        raise InvalidInputError(f"check_gradients: eps must be positive, got {eps}")

    x.data = np.ascontiguousarray(x.data)
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if out.shape != ():
        raise InvalidInputError(f"check_gradients: f must return a scalar, got shape {out.shape}")
    out.backward()
    analytic = (x.grad if x.grad is not None else np.zeros_like(x.data)).reshape(-1).copy()
    x.grad = None

    flat = x.data.reshape(-1)
    positions = range(flat.size) if indices is None else np.asarray(indices).reshape(-1)

    worst = 0.0
    for i in positions:
        original = flat[i]
        flat[i] = original + eps
        f_plus = float(f(x).data)
        flat[i] = original - eps
        f_minus = float(f(x).data)
        flat[i] = original

        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, rel)
    return worst
