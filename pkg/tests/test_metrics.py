import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.distance import cdist

from hetda.errors import ContractError, DegeneracyError, ShapeError
from hetda.metrics import (
    RunResult,
    TTestResult,
    auc,
    average_accuracy,
    paired_t_test,
    pca_2d,
    pca_explained,
)
from hetda.numerics import Rng


def run_of(preds, truth, rid="r") -> RunResult:
    return RunResult(rid, np.asarray(preds), None, np.asarray(truth))


# ---------------------------------------------------- average_accuracy


def test_average_accuracy_all_correct():
    runs = [run_of([0, 1, 2], [0, 1, 2], f"r{i}") for i in range(3)]
    assert average_accuracy(runs) == (1.0, 0.0)


def test_average_accuracy_two_runs():
    runs = [
        run_of([0, 0, 0, 0], [0, 0, 1, 1]),  # 0.5
        run_of([0, 1, 2, 2], [0, 1, 2, 2]),  # 1.0
    ]
    mean, std = average_accuracy(runs)
    assert mean == pytest.approx(0.75, abs=1e-12)
    assert std == pytest.approx(math.sqrt(0.125), abs=1e-12)


def test_average_accuracy_single_run_zero_std():
    assert average_accuracy([run_of([1, 0], [1, 1])]) == (0.5, 0.0)


def test_average_accuracy_matches_loop_oracle():
    rng = Rng(1)
    runs = []
    for i in range(6):
        r = rng.split(i)
        runs.append(run_of(r.integers(3, size=30), r.integers(3, size=30), f"r{i}"))
    accs = []
    for run in runs:
        hits = sum(1 for p, t in zip(run.predictions, run.truth) if p == t)
        accs.append(hits / 30)
    mean, std = average_accuracy(runs)
    assert abs(mean - np.mean(accs)) <= 1e-12
    assert abs(std - np.std(accs, ddof=1)) <= 1e-12


def test_average_accuracy_errors():
    with pytest.raises(ContractError):
        average_accuracy([])
    with pytest.raises(ContractError):
        average_accuracy([run_of([0], [0]), run_of([0, 1], [0, 1])])


# ----------------------------------------------------------------- auc


def test_auc_perfectly_separated():
    assert auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0])) == 1.0
    assert auc(np.array([0.1, 0.2, 0.8, 0.9]), np.array([1, 1, 0, 0])) == 0.0


def test_auc_all_ties():
    assert auc(np.ones(6), np.array([1, 1, 1, 0, 0, 0])) == 0.5


def test_auc_matches_pairwise_oracle():
    rng = Rng(2)
    for i in range(15):
        r = rng.split(i)
        n = 4 + int(r.integers(20))
        truth = r.integers(2, size=n)
        if truth.min() == truth.max():
            truth[0] = 1 - truth[0]
        scores = np.round(r.normal((n,)) * 2.0, 1)  # rounding forces ties
        total = 0.0
        pairs = 0
        for s_p in scores[truth == 1]:
            for s_n in scores[truth == 0]:
                pairs += 1
                total += 1.0 if s_p > s_n else (0.5 if s_p == s_n else 0.0)
        assert abs(auc(scores, truth) - total / pairs) <= 1e-12


def test_auc_monotone_invariance_exact():
    rng = Rng(3)
    scores = rng.normal((12,))
    truth = np.array([1, 0] * 6)
    base = auc(scores, truth)
    assert auc(3.0 * scores + 5.0, truth) == base
    assert auc(np.tanh(scores), truth) == base


def test_auc_negation_complements():
    rng = Rng(4)
    scores = rng.normal((10,))  # continuous draws: no ties
    truth = np.array([1, 1, 1, 0, 0, 0, 0, 1, 0, 1])
    assert auc(scores, truth) + auc(-scores, truth) == pytest.approx(1.0, abs=1e-12)


def test_auc_errors():
    with pytest.raises(ContractError):
        auc(np.array([0.1, 0.2]), np.array([1, 2]))
    with pytest.raises(ContractError):
        auc(np.array([0.1, 0.2]), np.array([1, 1]))
    with pytest.raises(ShapeError):
        auc(np.array([0.1, 0.2]), np.array([1]))


# ------------------------------------------------------- paired t-test


def test_t_test_identical_sequences():
    res = paired_t_test([0.8, 0.9, 0.7], [0.8, 0.9, 0.7])
    assert res == TTestResult(0.0, 1.0, True)


def test_t_test_constant_nonzero_difference():
    res = paired_t_test([2.0, 2.0, 2.0, 2.0], [1.0, 1.0, 1.0, 1.0])
    assert res.t == math.inf
    assert res.p == 0.0
    assert res.degenerate
    res = paired_t_test([1.0, 1.0], [2.0, 2.0])
    assert res.t == -math.inf


def test_t_test_matches_high_precision_oracle():
    b = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
    a = np.array([1.0, -1.0, 2.0, 0.0, 1.0])  # differences 1,-1,2,0,1
    res = paired_t_test(a, b)
    with mpmath.workdps(50):
        d = [mpmath.mpf(v) for v in a]
        n = len(d)
        mean = mpmath.fsum(d) / n
        var = mpmath.fsum((x - mean) ** 2 for x in d) / (n - 1)
        t = mean / mpmath.sqrt(var / n)
        nu = n - 1
        x = nu / (nu + t * t)
        p = mpmath.betainc(nu / 2, mpmath.mpf(1) / 2, 0, x, regularized=True)
    assert abs(res.t - float(t)) <= 1e-9
    assert abs(res.p - float(p)) <= 1e-9
    assert not res.degenerate


def test_t_test_errors():
    with pytest.raises(ContractError):
        paired_t_test([1.0], [2.0])
    with pytest.raises(ShapeError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


# --------------------------------------------------------------- pca


def test_pca_2d_rotation_preserves_distances():
    rng = Rng(5)
    x = rng.normal((2, 40))
    x[0, :] *= 3.0
    proj = pca_2d(x)
    d_before = cdist(x.T, x.T)
    d_after = cdist(proj.T, proj.T)
    assert np.max(np.abs(d_before - d_after)) <= 1e-9


def test_pca_2d_rank_one_second_variance_zero():
    t = np.linspace(-2.0, 2.0, 25)
    direction = np.array([[1.0], [2.0], [-1.0]])
    x = direction @ t[None, :]
    v1, v2 = pca_explained(x)
    assert v1 > 1.0
    assert abs(v2) <= 1e-9


def test_pca_explained_matches_eigh_oracle():
    rng = Rng(6)
    x = rng.normal((5, 60))
    x[0, :] *= 4.0
    x[1, :] *= 2.0
    c = x - x.mean(axis=1, keepdims=True)
    cov = c @ c.T / (x.shape[1] - 1)
    eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    v1, v2 = pca_explained(x)
    assert abs(v1 - eigvals[0]) <= 1e-6 * max(1.0, eigvals[0])
    assert abs(v2 - eigvals[1]) <= 1e-6 * max(1.0, eigvals[1])


def test_pca_2d_reprojection_idempotent():
    rng = Rng(7)
    x = rng.normal((4, 30))
    x[0, :] *= 3.0
    proj = pca_2d(x)
    again = pca_2d(proj)
    assert np.max(np.abs(again - proj)) <= 1e-9


def test_pca_2d_deterministic_and_sign_fixed():
    rng = Rng(8)
    x = rng.normal((6, 50))
    a = pca_2d(x)
    b = pca_2d(x.copy())
    np.testing.assert_array_equal(a, b)


def test_pca_2d_errors():
    with pytest.raises(ShapeError):
        pca_2d(np.zeros(5))
    with pytest.raises(DegeneracyError):
        pca_2d(np.ones((3, 10)))  # zero variance in every direction
