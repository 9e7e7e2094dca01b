"""Shared dictionary learning across two feature spaces.

Two domains with different feature dimensions are mapped into a common
k-dimensional code space. Per domain there is a reference projection
(``proj_*``) and an encoder (``enc_*``); a shared square dictionary and a
shared square code map tie the domains together. The alignment loss asks
the dictionary-decoded codes to reproduce the reference projections:

    || proj_src @ x_s - dictionary @ shared_map @ enc_src @ x_s ||_F^2 / n_s
  + || proj_tgt @ x_t - dictionary @ shared_map @ enc_tgt @ x_t ||_F^2 / n_t

subject to: projections and encoders row-orthonormal, dictionary and
shared-map columns inside the unit l2 ball. The normalization by batch
size keeps the weighting of this loss independent of batch choices.

Codes handed to the rest of the model are ``shared_map @ enc_* @ x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import Rng, as_matrix, orthogonalize, unit_clip_columns

ORTH_TOL = 1e-6
NORM_TOL = 1e-9


@dataclass
class SdlParams:
    proj_src: np.ndarray  # (k, m_s)
    proj_tgt: np.ndarray  # (k, m_t)
    dictionary: np.ndarray  # (k, k)
    shared_map: np.ndarray  # (k, k)
    enc_src: np.ndarray  # (k, m_s)
    enc_tgt: np.ndarray  # (k, m_t)

    @property
    def k(self) -> int:
        return self.dictionary.shape[0]

    @property
    def m_src(self) -> int:
        return self.proj_src.shape[1]

    @property
    def m_tgt(self) -> int:
        return self.proj_tgt.shape[1]

    def validate(self) -> None:
        k = self.dictionary.shape[0]
        expected = {
            "proj_src": (k, self.proj_src.shape[1]),
            "proj_tgt": (k, self.proj_tgt.shape[1]),
            "dictionary": (k, k),
            "shared_map": (k, k),
            "enc_src": (k, self.proj_src.shape[1]),
            "enc_tgt": (k, self.proj_tgt.shape[1]),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"{name} has shape {got}, expected {shape}")
        if k > min(self.m_src, self.m_tgt):
            raise ShapeError(
                f"code dim k={k} exceeds min feature dim {min(self.m_src, self.m_tgt)}"
            )


@dataclass
class SdlGrads:
    proj_src: np.ndarray
    proj_tgt: np.ndarray
    dictionary: np.ndarray
    shared_map: np.ndarray
    enc_src: np.ndarray
    enc_tgt: np.ndarray


def init_params(rng: Rng, k: int, m_src: int, m_tgt: int) -> SdlParams:
    """Random feasible starting point (draw, then project onto constraints)."""
    if k < 1 or k > min(m_src, m_tgt):
        raise ContractError(f"need 1 <= k <= min(m_src, m_tgt), got k={k}")
    params = SdlParams(
        proj_src=rng.normal((k, m_src)),
        proj_tgt=rng.normal((k, m_tgt)),
        dictionary=rng.normal((k, k)) / math.sqrt(k),
        shared_map=rng.normal((k, k)) / math.sqrt(k),
        enc_src=rng.normal((k, m_src)),
        enc_tgt=rng.normal((k, m_tgt)),
    )
    params.validate()
    return project(params)


def represent(params: SdlParams, x_src: np.ndarray, x_tgt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Code-space representations (k, n) of both batches."""
    x_src = as_matrix(x_src)
    x_tgt = as_matrix(x_tgt)
    if x_src.shape[0] != params.m_src or x_tgt.shape[0] != params.m_tgt:
        raise ShapeError(
            f"feature dims ({x_src.shape[0]}, {x_tgt.shape[0]}) do not match "
            f"params ({params.m_src}, {params.m_tgt})"
        )
    r_src = params.shared_map @ (params.enc_src @ x_src)
    r_tgt = params.shared_map @ (params.enc_tgt @ x_tgt)
    return r_src, r_tgt


def _residuals(params, x_src, x_tgt):
    r_src, r_tgt = represent(params, x_src, x_tgt)
    e_src = params.proj_src @ x_src - params.dictionary @ r_src
    e_tgt = params.proj_tgt @ x_tgt - params.dictionary @ r_tgt
    return e_src, e_tgt


def _mean_sq(e: np.ndarray) -> float:
    # fsum over per-column energies: correctly rounded, so reordering the
    # sample columns cannot change the result even in the last bit.
    cols = np.einsum("ij,ij->j", e, e)
    return math.fsum(cols.tolist()) / e.shape[1]


def recon_loss(params: SdlParams, x_src: np.ndarray, x_tgt: np.ndarray) -> float:
    """Batch-normalized alignment loss; exactly invariant to sample order."""
    if x_src.shape[1] == 0 or x_tgt.shape[1] == 0:
        raise ContractError("empty batch in recon_loss")
    e_src, e_tgt = _residuals(params, x_src, x_tgt)
    return _mean_sq(e_src) + _mean_sq(e_tgt)


def recon_grads(params: SdlParams, x_src: np.ndarray, x_tgt: np.ndarray) -> SdlGrads:
    """Analytic gradients of :func:`recon_loss` wrt all six matrices."""
    if x_src.shape[1] == 0 or x_tgt.shape[1] == 0:
        raise ContractError("empty batch in recon_grads")
    n_s, n_t = x_src.shape[1], x_tgt.shape[1]
    cs, ct = 2.0 / n_s, 2.0 / n_t
    enc_x_s = params.enc_src @ x_src
    enc_x_t = params.enc_tgt @ x_tgt
    r_src = params.shared_map @ enc_x_s
    r_tgt = params.shared_map @ enc_x_t
    e_src = params.proj_src @ x_src - params.dictionary @ r_src
    e_tgt = params.proj_tgt @ x_tgt - params.dictionary @ r_tgt

    dte_s = params.dictionary.T @ e_src
    dte_t = params.dictionary.T @ e_tgt
    return SdlGrads(
        proj_src=cs * (e_src @ x_src.T),
        proj_tgt=ct * (e_tgt @ x_tgt.T),
        dictionary=-(cs * (e_src @ r_src.T) + ct * (e_tgt @ r_tgt.T)),
        shared_map=-(cs * (dte_s @ enc_x_s.T) + ct * (dte_t @ enc_x_t.T)),
        enc_src=-cs * (params.shared_map.T @ dte_s) @ x_src.T,
        enc_tgt=-ct * (params.shared_map.T @ dte_t) @ x_tgt.T,
    )


def project(params: SdlParams) -> SdlParams:
    """Project onto the constraint set: clip dictionary/shared-map columns
    to the unit ball, replace projections/encoders by their nearest
    row-orthonormal matrices."""
    return SdlParams(
        proj_src=orthogonalize(params.proj_src),
        proj_tgt=orthogonalize(params.proj_tgt),
        dictionary=unit_clip_columns(params.dictionary),
        shared_map=unit_clip_columns(params.shared_map),
        enc_src=orthogonalize(params.enc_src),
        enc_tgt=orthogonalize(params.enc_tgt),
    )


def check_feasible(params: SdlParams, orth_tol: float = ORTH_TOL, norm_tol: float = NORM_TOL) -> None:
    """Raise ContractError unless all constraints hold within tolerance."""
    for name in ("proj_src", "proj_tgt", "enc_src", "enc_tgt"):
        w = getattr(params, name)
        gram = w @ w.T
        resid = np.max(np.abs(gram - np.eye(w.shape[0])))
        if resid > orth_tol:
            raise ContractError(f"{name} not row-orthonormal (residual {resid:.3e})")
    for name in ("dictionary", "shared_map"):
        norms = np.linalg.norm(getattr(params, name), axis=0)
        if norms.max() > 1.0 + norm_tol:
            raise ContractError(f"{name} column norm {norms.max():.12f} exceeds 1")
