"""Shared multi-class hinge classifier.

One classifier head serves both domains: codes go through the shared
feature net, the head emits raw class scores, and the loss is an even
split between the source batch and the labeled target batch of the
multi-class hinge

    max(0, 1 + max_{j != y} s_j - s_y)

averaged per branch. At kinks (margin exactly zero) the zero branch of
the subgradient is used. Prediction is argmax with ties resolved toward
the smallest class index; softmax is applied only when probabilities
are needed (e.g. for AUC), never inside the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import Layer, MlpParams, mlp_add_grads, mlp_backward, mlp_forward


@dataclass
class ClassifierHead:
    net: MlpParams  # shared embedding (d_N) -> raw scores (C)
    num_classes: int

    def validate(self) -> None:
        self.net.validate()
        if self.num_classes < 2:
            raise ContractError("need at least two classes")
        if self.net.out_dim != self.num_classes:
            raise ShapeError(
                f"head emits {self.net.out_dim} scores for {self.num_classes} classes"
            )


def _check_labels(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    if scores.ndim != 2:
        raise ShapeError("scores must be (num_classes, n)")
    if scores.shape[0] < 2:
        raise ContractError("hinge needs at least two classes")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != scores.shape[1]:
        raise ShapeError(f"labels shape {labels.shape} does not match scores {scores.shape}")
    if labels.size == 0:
        raise ContractError("empty batch")
    if labels.min() < 0 or labels.max() >= scores.shape[0]:
        raise ContractError("label outside [0, num_classes)")
    return labels.astype(np.int64)


def _margins(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample hinge margins and the offending class index."""
    n = scores.shape[1]
    cols = np.arange(n)
    masked = scores.copy()
    masked[labels, cols] = -np.inf
    worst = np.argmax(masked, axis=0)  # ties -> smallest index
    margins = 1.0 + masked[worst, cols] - scores[labels, cols]
    return margins, worst


def hinge_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean multi-class hinge over the batch."""
    labels = _check_labels(scores, labels)
    margins, _ = _margins(scores, labels)
    return float(np.mean(np.maximum(0.0, margins)))


def hinge_grad(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Subgradient of :func:`hinge_loss` wrt the scores (zero at kinks)."""
    labels = _check_labels(scores, labels)
    margins, worst = _margins(scores, labels)
    n = scores.shape[1]
    g = np.zeros_like(scores)
    active = margins > 0.0
    cols = np.arange(n)[active]
    g[worst[active], cols] = 1.0 / n
    g[labels[active], cols] -= 1.0 / n
    return g


def predict(head: ClassifierHead, feature_net: MlpParams, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels and raw scores for code-space samples (columns)."""
    h, _ = mlp_forward(feature_net, r)
    scores, _ = mlp_forward(head.net, h)
    return np.argmax(scores, axis=0), scores


def class_probabilities(scores: np.ndarray) -> np.ndarray:
    """Column-wise softmax of raw scores (only for probability consumers)."""
    z = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def classifier_loss(
    head: ClassifierHead,
    feature_net: MlpParams,
    r_src: np.ndarray,
    y_src: np.ndarray,
    r_tgt: np.ndarray,
    y_tgt: np.ndarray,
) -> float:
    """Half source hinge plus half labeled-target hinge."""
    _, s_src = predict(head, feature_net, r_src)
    _, s_tgt = predict(head, feature_net, r_tgt)
    return 0.5 * hinge_loss(s_src, y_src) + 0.5 * hinge_loss(s_tgt, y_tgt)


@dataclass
class ClsGrads:
    head: list[Layer]
    feature_net: list[Layer]
    shared_map: np.ndarray
    enc_src: np.ndarray
    enc_tgt: np.ndarray


def classifier_grads(
    head: ClassifierHead,
    feature_net: MlpParams,
    sdl,
    x_src: np.ndarray,
    y_src: np.ndarray,
    x_tgt: np.ndarray,
    y_tgt: np.ndarray,
) -> ClsGrads:
    """Gradients of :func:`classifier_loss` wrt the head, the feature net,
    and the code-space matrices.

    The dictionary and reference projections do not appear anywhere in
    this loss, so their gradients are identically zero and are omitted.
    """
    enc_x_s = sdl.enc_src @ x_src
    enc_x_t = sdl.enc_tgt @ x_tgt
    r_src = sdl.shared_map @ enc_x_s
    r_tgt = sdl.shared_map @ enc_x_t

    h_src, cache_fs = mlp_forward(feature_net, r_src)
    h_tgt, cache_ft = mlp_forward(feature_net, r_tgt)
    s_src, cache_hs = mlp_forward(head.net, h_src)
    s_tgt, cache_ht = mlp_forward(head.net, h_tgt)

    ds_src = 0.5 * hinge_grad(s_src, y_src)
    ds_tgt = 0.5 * hinge_grad(s_tgt, y_tgt)

    gh_src, dh_src = mlp_backward(head.net, cache_hs, ds_src)
    gh_tgt, dh_tgt = mlp_backward(head.net, cache_ht, ds_tgt)
    gf_src, dr_src = mlp_backward(feature_net, cache_fs, dh_src)
    gf_tgt, dr_tgt = mlp_backward(feature_net, cache_ft, dh_tgt)

    return ClsGrads(
        head=mlp_add_grads(gh_src, gh_tgt),
        feature_net=mlp_add_grads(gf_src, gf_tgt),
        shared_map=dr_src @ enc_x_s.T + dr_tgt @ enc_x_t.T,
        enc_src=(sdl.shared_map.T @ dr_src) @ x_src.T,
        enc_tgt=(sdl.shared_map.T @ dr_tgt) @ x_tgt.T,
    )
