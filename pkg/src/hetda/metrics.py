"""Evaluation utilities: accuracy aggregation, AUC, a paired t-test,
and a deterministic 2-D PCA used for embedding dumps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import betainc

from .errors import ContractError, DegeneracyError, ShapeError


@dataclass
class RunResult:
    run_id: str
    predictions: np.ndarray  # (n,) int
    scores: np.ndarray | None  # (C, n) raw scores, optional
    truth: np.ndarray  # (n,) int

    def accuracy(self) -> float:
        return float(np.mean(self.predictions == self.truth))


def average_accuracy(runs: Sequence[RunResult]) -> tuple[float, float]:
    """Mean accuracy over repeated runs and its sample stddev (ddof=1).

    A single run reports stddev 0. All runs must score test sets of the
    same size, otherwise the average would silently mix populations.
    """
    if not runs:
        raise ContractError("need at least one run")
    sizes = {len(r.truth) for r in runs}
    if len(sizes) != 1:
        raise ContractError(f"runs have mixed test-set sizes: {sorted(sizes)}")
    accs = np.array([r.accuracy() for r in runs])
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return float(np.mean(accs)), std


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores: np.ndarray, truth: np.ndarray) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via tie-averaged ranks.

    Exactly invariant under strictly increasing transforms of the
    scores, since only the ordering (and tie pattern) enters.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth)
    if scores.ndim != 1 or truth.shape != scores.shape:
        raise ShapeError("auc expects two aligned 1-D arrays")
    pos = truth == 1
    neg = truth == 0
    if not np.all(pos | neg):
        raise ContractError("truth must be binary 0/1")
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("both classes must be present for AUC")
    ranks = _average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


class TTestResult(NamedTuple):
    t: float
    p: float
    degenerate: bool


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on aligned score sequences.

    p comes from the regularized incomplete beta function. Degenerate
    inputs (zero-variance differences) are flagged: identical sequences
    give (t=0, p=1), a constant nonzero difference gives (t=+/-inf, p=0).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError("paired t-test expects two aligned 1-D sequences")
    n = len(a)
    if n < 2:
        raise ContractError("need at least two pairs")
    d = a - b
    mean = float(np.mean(d))
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, True)
    t = mean / (sd / math.sqrt(n))
    nu = n - 1
    p = float(betainc(0.5 * nu, 0.5, nu / (nu + t * t)))
    return TTestResult(t, p, False)


_PCA_TOL = 1e-9
_PCA_MAX_ITERS = 100_000


def _orthogonal_completion(prior: list[np.ndarray], d: int) -> np.ndarray:
    for i in range(d):
        v = np.zeros(d)
        v[i] = 1.0
        for u in prior:
            v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm > 0.5:
            return v / norm
    raise DegeneracyError("no orthogonal direction left")


def _top_component(cov: np.ndarray, prior: list[np.ndarray]) -> np.ndarray:
    d = cov.shape[0]
    v = np.arange(1.0, d + 1.0)
    for u in prior:
        v -= (u @ v) * u
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        v = _orthogonal_completion(prior, d)
    else:
        v = v / norm
    for _ in range(_PCA_MAX_ITERS):
        w = cov @ v
        for u in prior:
            w -= (u @ w) * u
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            # deflated matrix is (numerically) zero in the remaining
            # subspace: any orthogonal direction carries ~zero variance
            v = _orthogonal_completion(prior, d)
            break
        w = w / norm
        if np.linalg.norm(w - v) <= _PCA_TOL:
            v = w
            break
        v = w
    idx = int(np.argmax(np.abs(v)))
    if v[idx] < 0:
        v = -v
    return v


def pca_2d(embeddings: np.ndarray) -> np.ndarray:
    """Project column samples onto their top-2 principal axes.

    Power iteration with deflation from a fixed start, so results are
    fully deterministic; each component's largest-magnitude coordinate
    is made positive to pin the sign.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("embeddings must be 2-D (dims x samples)")
    d, n = x.shape
    if d < 2:
        raise ShapeError("need at least two feature dims to project to 2-D")
    if n < 2:
        raise ContractError("need at least two samples")
    centered = x - x.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / (n - 1)
    if float(np.trace(cov)) <= 0.0:
        raise DegeneracyError("zero total variance")
    v1 = _top_component(cov, [])
    lam1 = float(v1 @ cov @ v1)
    deflated = cov - lam1 * np.outer(v1, v1)
    v2 = _top_component(deflated, [v1])
    return np.vstack([v1 @ centered, v2 @ centered])


def pca_explained(embeddings: np.ndarray) -> tuple[float, float]:
    """Variances along the two projected axes (ddof=1)."""
    proj = pca_2d(embeddings)
    n = proj.shape[1]
    c = proj - proj.mean(axis=1, keepdims=True)
    return float(c[0] @ c[0] / (n - 1)), float(c[1] @ c[1] / (n - 1))
