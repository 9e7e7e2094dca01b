"""Kernel two-sample machinery and the adversarial matching loss.

The distance between the two domains' code distributions is an MMD^2
under a mixture-of-Gaussians kernel evaluated on learned embeddings:
codes pass through a shared feature net, then through a kernel net that
is trained *adversarially* (ascent) to sharpen the discrepancy while
everything upstream descends on it.

Kernel: k(a, b) = sum_q exp(-||a - b||^2 / (2 sigma_q^2)). When
``median_rescale`` is set the bandwidths are multiplied by the median
pairwise distance of the pooled batch (treated as a constant when
differentiating, i.e. a stop-gradient).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ContractError, ShapeError
from .numerics import (
    Layer,
    MlpParams,
    mlp_add_grads,
    mlp_backward,
    mlp_forward,
)


class Estimator(Enum):
    BIASED = "biased"  # V-statistic; >= 0, used for reporting
    UNBIASED = "unbiased"  # U-statistic; may be negative, used in training


@dataclass(frozen=True)
class KernelSpec:
    bandwidths: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    median_rescale: bool = False

    def validate(self) -> None:
        if not self.bandwidths:
            raise ContractError("at least one bandwidth required")
        if any(b <= 0 for b in self.bandwidths):
            raise ContractError("bandwidths must be positive")


def median_heuristic(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise Euclidean distance over the pooled columns.

    Falls back to 1.0 (with a warning) when every point coincides.
    """
    pooled = np.concatenate([x, y], axis=1)
    if pooled.shape[1] < 2:
        raise ContractError("median heuristic needs at least two points")
    med = float(np.median(pdist(pooled.T)))
    if med <= 0.0:
        warnings.warn("all points identical; median heuristic falling back to 1.0")
        return 1.0
    return med


def _effective_sigmas(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> list[float]:
    spec.validate()
    if spec.median_rescale:
        med = median_heuristic(x, y)
        return [b * med for b in spec.bandwidths]
    return [float(b) for b in spec.bandwidths]


def _kernel_sum(d2: np.ndarray, sigmas) -> np.ndarray:
    """Mixture kernel matrix from squared distances."""
    k = np.zeros_like(d2)
    for s in sigmas:
        k += np.exp(d2 / (-2.0 * s * s))
    return k


def _sym_total(k: np.ndarray) -> float:
    # Averaging the two summation orders makes the cross-block total
    # invariant under swapping the sample roles, bit for bit.
    return 0.5 * (float(np.sum(k)) + float(np.sum(np.ascontiguousarray(k.T))))


def mmd2(x: np.ndarray, y: np.ndarray, spec: KernelSpec, estimator: Estimator = Estimator.BIASED) -> float:
    """Squared maximum mean discrepancy between column-sample sets.

    BIASED is the V-statistic (clamped at zero, it estimates a squared
    norm); UNBIASED removes the within-block diagonals and can go
    negative.  With equally sized sides the cross-block diagonal drops
    out as well (the paired U-statistic), so coincident samples give
    exactly zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"mmd2 needs matching feature dims, got {x.shape} vs {y.shape}")
    n, m = x.shape[1], y.shape[1]
    if n < 1 or m < 1:
        raise ContractError("mmd2 needs non-empty samples")
    sigmas = _effective_sigmas(spec, x, y)
    k_xx = _kernel_sum(cdist(x.T, x.T, "sqeuclidean"), sigmas)
    k_yy = _kernel_sum(cdist(y.T, y.T, "sqeuclidean"), sigmas)
    k_xy = _kernel_sum(cdist(x.T, y.T, "sqeuclidean"), sigmas)
    cross = 2.0 * _sym_total(k_xy) / (n * m)

    if estimator is Estimator.BIASED:
        val = float(np.sum(k_xx)) / (n * n) + float(np.sum(k_yy)) / (m * m) - cross
        return max(0.0, val)
    if n < 2 or m < 2:
        raise ContractError("unbiased estimator needs >= 2 samples per side")
    # diagonal of each within-block is exactly len(sigmas) per point
    within_x = (float(np.sum(k_xx)) - n * float(len(sigmas))) / (n * (n - 1))
    within_y = (float(np.sum(k_yy)) - m * float(len(sigmas))) / (m * (m - 1))
    if n == m:
        cross = 2.0 * (_sym_total(k_xy) - float(np.trace(k_xy))) / (n * (n - 1))
    return within_x + within_y - cross


def _mmd2_point_grads(
    x: np.ndarray, y: np.ndarray, sigmas, estimator: Estimator
) -> tuple[np.ndarray, np.ndarray]:
    """d(mmd2)/dx and d(mmd2)/dy for column points (bandwidths fixed)."""
    n, m = x.shape[1], y.shape[1]
    if estimator is Estimator.UNBIASED and (n < 2 or m < 2):
        raise ContractError("unbiased estimator needs >= 2 samples per side")
    # scaled kernel matrices: sum_q k_q / sigma_q^2
    s_xx = np.zeros((n, n))
    s_yy = np.zeros((m, m))
    s_xy = np.zeros((n, m))
    d2_xx = cdist(x.T, x.T, "sqeuclidean")
    d2_yy = cdist(y.T, y.T, "sqeuclidean")
    d2_xy = cdist(x.T, y.T, "sqeuclidean")
    for s in sigmas:
        inv = 1.0 / (s * s)
        s_xx += np.exp(-0.5 * inv * d2_xx) * inv
        s_yy += np.exp(-0.5 * inv * d2_yy) * inv
        s_xy += np.exp(-0.5 * inv * d2_xy) * inv

    if estimator is Estimator.BIASED:
        c_xx, c_yy = 2.0 / (n * n), 2.0 / (m * m)
    else:
        # diagonal entries contribute zero gradient (a - a), so the same
        # matrix expressions serve the U-statistic with its normalizer
        c_xx, c_yy = 2.0 / (n * (n - 1)), 2.0 / (m * (m - 1))
    c_cross = 2.0 / (n * m)
    if estimator is Estimator.UNBIASED and n == m:
        # paired form: cross-block diagonal is excluded from the statistic
        np.fill_diagonal(s_xy, 0.0)
        c_cross = 2.0 / (n * (n - 1))

    gx = c_xx * (x @ s_xx.T - x * s_xx.sum(axis=1))
    gx -= c_cross * (y @ s_xy.T - x * s_xy.sum(axis=1))
    gy = c_yy * (y @ s_yy.T - y * s_yy.sum(axis=1))
    gy -= c_cross * (x @ s_xy - y * s_xy.sum(axis=0))
    return gx, gy


@dataclass
class AdvNets:
    feature_net: MlpParams  # codes (k) -> shared embedding (d_N)
    kernel_net: MlpParams  # embedding (d_N) -> kernel space (d_M)

    def validate(self) -> None:
        self.feature_net.validate()
        self.kernel_net.validate()
        if self.kernel_net.in_dim != self.feature_net.out_dim:
            raise ShapeError(
                f"kernel net input {self.kernel_net.in_dim} != feature net output "
                f"{self.feature_net.out_dim}"
            )


@dataclass
class AdvGrads:
    feature_net: list[Layer]
    kernel_net: list[Layer]
    shared_map: np.ndarray
    enc_src: np.ndarray
    enc_tgt: np.ndarray


def adv_loss(
    nets: AdvNets,
    r_src: np.ndarray,
    r_tgt: np.ndarray,
    spec: KernelSpec,
    estimator: Estimator = Estimator.UNBIASED,
) -> float:
    """MMD^2 between the two code batches after both embedding nets."""
    h_src, _ = mlp_forward(nets.feature_net, r_src)
    h_tgt, _ = mlp_forward(nets.feature_net, r_tgt)
    z_src, _ = mlp_forward(nets.kernel_net, h_src)
    z_tgt, _ = mlp_forward(nets.kernel_net, h_tgt)
    return mmd2(z_src, z_tgt, spec, estimator)


def adv_grads(
    nets: AdvNets,
    sdl,
    x_src: np.ndarray,
    x_tgt: np.ndarray,
    spec: KernelSpec,
    estimator: Estimator = Estimator.UNBIASED,
) -> AdvGrads:
    """Gradients of :func:`adv_loss` wrt both nets and the code-space
    matrices (shared map and the two encoders).

    ``sdl`` supplies the code path ``shared_map @ enc_* @ x``; gradients
    for the dictionary and reference projections are identically zero
    because the loss never touches them.
    """
    enc_x_s = sdl.enc_src @ x_src
    enc_x_t = sdl.enc_tgt @ x_tgt
    r_src = sdl.shared_map @ enc_x_s
    r_tgt = sdl.shared_map @ enc_x_t

    h_src, cache_fs = mlp_forward(nets.feature_net, r_src)
    h_tgt, cache_ft = mlp_forward(nets.feature_net, r_tgt)
    z_src, cache_ks = mlp_forward(nets.kernel_net, h_src)
    z_tgt, cache_kt = mlp_forward(nets.kernel_net, h_tgt)

    sigmas = _effective_sigmas(spec, z_src, z_tgt)
    gz_src, gz_tgt = _mmd2_point_grads(z_src, z_tgt, sigmas, estimator)

    gk_src, gh_src = mlp_backward(nets.kernel_net, cache_ks, gz_src)
    gk_tgt, gh_tgt = mlp_backward(nets.kernel_net, cache_kt, gz_tgt)
    gf_src, gr_src = mlp_backward(nets.feature_net, cache_fs, gh_src)
    gf_tgt, gr_tgt = mlp_backward(nets.feature_net, cache_ft, gh_tgt)

    return AdvGrads(
        feature_net=mlp_add_grads(gf_src, gf_tgt),
        kernel_net=mlp_add_grads(gk_src, gk_tgt),
        shared_map=gr_src @ enc_x_s.T + gr_tgt @ enc_x_t.T,
        enc_src=(sdl.shared_map.T @ gr_src) @ x_src.T,
        enc_tgt=(sdl.shared_map.T @ gr_tgt) @ x_tgt.T,
    )
