"""Shared test utilities: finite differences and seeded random instances."""

import numpy as np

from hetda.numerics import Rng

FD_H = 1e-5


def fd_grad(loss_fn, param: np.ndarray, h: float = FD_H) -> np.ndarray:
    """Central finite differences of a scalar function wrt one array.

    ``loss_fn`` takes no arguments and must read ``param`` afresh on every
    call; the array is perturbed in place and restored.
    """
    g = np.zeros_like(param, dtype=np.float64)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + h
        fp = loss_fn()
        param[idx] = orig - h
        fm = loss_fn()
        param[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max absolute deviation, scaled by the largest magnitude in play.

    The floor keeps near-zero gradients from turning rounding noise into
    huge relative errors.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), floor)
    return float(np.max(np.abs(analytic - numeric))) / scale


def rng_of(seed: int) -> Rng:
    return Rng(seed)
