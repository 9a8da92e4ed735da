"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numerical_gradient(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5,
                       indices: Sequence[tuple] | None = None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. entries of ``arr`` (mutated in place).

    When ``indices`` is given only those entries are probed and the rest of the
    returned array is NaN.
    """
    grad = np.full(arr.shape, np.nan) if indices is not None else np.zeros(arr.shape)
    probe = indices if indices is not None else list(np.ndindex(arr.shape))
    for idx in probe:
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5,
                    max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Compare backprop against central differences for every tensor in ``tensors``.

    ``loss_fn`` rebuilds the graph from the current tensor values on each call.
    With ``max_entries`` only that many randomly chosen entries per tensor are
    probed. Returns the largest relative error found.
    """
    for t in tensors:
        t.grad = None
    backward(loss_fn())
    worst = 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        if max_entries is not None and t.size > max_entries:
            flat = rng.choice(t.size, size=max_entries, replace=False)
            idx = [np.unravel_index(i, t.shape) for i in flat]
        else:
            idx = list(np.ndindex(t.shape))
        numeric = numerical_gradient(lambda: float(loss_fn().values), t.values, h, idx)
        sel = tuple(np.array(i) for i in zip(*idx))
        worst = max(worst, relative_error(analytic[sel], numeric[sel]))
    return worst
