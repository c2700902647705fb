
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldbounds.errors import DimensionError, EmptyGeometryError, RangeError
from fieldbounds.loss_metrics import (
    MultitaskPrediction, cohens_kappa, confusion, fdr, for_rate, hausdorff, iou_binary,
    mcc, miou_fuzzy, msd, multitask_loss, multitask_loss_grad, raster_report,
    tanimoto_loss, tanimoto_loss_grad,
)

from oracles import (
    binary_counts_loop, central_difference, confusion_loop, directed_hausdorff_loop,
    kappa_loop, mcc_loop, miou_loop, msd_loop, tanimoto_loop,
)


# --- loss -------------------------------------------------------------------

def test_loss_identical_is_zero(rng):
    p = rng.random(50)
    assert tanimoto_loss(p, p) == pytest.approx(0.0, abs=1e-15)


def test_loss_binary_complement_is_one(rng):
    l = (rng.random(40) > 0.5).astype(float)
    l[0], l[1] = 0, 1
    assert tanimoto_loss(1 - l, l) == 1.0


def test_loss_hand_case():
    p, l = np.array([0.5, 0.5]), np.array([1.0, 0.0])
    expect = 1 - 0.5 * (tanimoto_loop(p, l) + tanimoto_loop(1 - p, 1 - l))
    assert tanimoto_loss(p, l) == pytest.approx(expect, abs=1e-15)
    # 0.5 / (0.5 + 1 - 0.5) for both terms
    assert expect == pytest.approx(0.5)


def test_loss_range_errors():
    with pytest.raises(RangeError):
        tanimoto_loss([1.2], [1.0])
    with pytest.raises(DimensionError):
        tanimoto_loss([0.2, 0.1], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_loss_bounds_and_complement_symmetry(n, seed):
    r = np.random.default_rng(seed)
    p, l = r.random(n), r.random(n)
    val = tanimoto_loss(p, l)
    assert -1e-15 <= val <= 1 + 1e-15
    assert tanimoto_loss(1 - p, 1 - l) == pytest.approx(val, abs=1e-12)
    assert tanimoto_loss(l, p) == pytest.approx(val, abs=1e-12)


def _pred(rng, shape=(6, 5)):
    return MultitaskPrediction(*rng.random((3,) + shape))


def test_multitask_loss_cases(rng):
    gt = _pred(rng)
    assert multitask_loss(gt, gt) == pytest.approx(0.0, abs=1e-15)
    a = (rng.random((3, 6, 5)) > 0.5).astype(float)
    a[:, 0, 0], a[:, 0, 1] = 0, 1
    truth = MultitaskPrediction(*a)
    pred = MultitaskPrediction(a[0], 1 - a[1], 1 - a[2])
    assert multitask_loss(pred, truth) == pytest.approx(2 / 3, abs=1e-15)
    other = _pred(rng)
    assert multitask_loss(other, gt) == pytest.approx(multitask_loss(gt, other), abs=1e-14)
    with pytest.raises(DimensionError):
        multitask_loss(gt, _pred(rng, (5, 5)))


def test_multitask_prediction_validates_shape():
    with pytest.raises(DimensionError):
        MultitaskPrediction(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        MultitaskPrediction.from_stack(np.zeros((2, 2, 2)))


def test_loss_gradient_finite_differences(rng):
    for _ in range(10):
        p = rng.uniform(0.05, 0.95, size=(4, 5))
        l = (rng.random((4, 5)) > 0.5).astype(float)
        g = tanimoto_loss_grad(p, l)
        fd = central_difference(lambda x: tanimoto_loss(x, l), p, eps=1e-5)
        for i, val in fd.items():
            assert abs(g.ravel()[i] - val) <= 1e-4 * max(abs(val), 1e-6)


def test_multitask_gradient_finite_differences(rng):
    gt = MultitaskPrediction(*(rng.random((3, 4, 4)) > 0.5).astype(float))
    arr = rng.uniform(0.05, 0.95, size=(3, 4, 4))
    g = multitask_loss_grad(MultitaskPrediction(*arr), gt).stack()
    fd = central_difference(lambda x: multitask_loss(MultitaskPrediction(*x), gt), arr, eps=1e-5)
    for i, val in fd.items():
        assert abs(g.ravel()[i] - val) <= 1e-4 * max(abs(val), 1e-6)


# --- confusion metrics --------------------------------------------------------

def test_confusion_cases(rng):
    y = rng.integers(0, 3, size=(10, 10))
    cm = confusion(y, y, 3)
    assert np.array_equal(cm, np.diag(np.bincount(y.ravel(), minlength=3)))
    assert confusion([1], [0], 2).tolist() == [[0, 0], [1, 0]]
    pred = rng.integers(0, 4, size=100)
    truth = rng.integers(0, 4, size=100)
    assert confusion(pred, truth, 4).tolist() == confusion_loop(pred, truth, 4)
    with pytest.raises(RangeError):
        confusion([2], [0], 2)


def test_mcc_and_kappa_hand_cases():
    assert mcc([[2, 1], [1, 2]]).value == 1 / 3
    assert cohens_kappa([[2, 1], [1, 2]]).value == pytest.approx(1 / 3, abs=1e-15)
    assert mcc(np.diag([3, 4, 5])).value == 1.0
    assert cohens_kappa(np.diag([3, 4, 5])).value == 1.0


def test_degenerate_flags():
    s = mcc([[5, 0], [0, 0]])
    assert s == (0.0, True)
    assert cohens_kappa([[5, 0], [0, 0]]).degenerate
    assert fdr(np.zeros(4, bool), np.ones(4, bool)).degenerate
    assert for_rate(np.ones(4, bool), np.ones(4, bool)).degenerate


def test_kappa_independent_case_is_zero():
    p = np.array([2, 3, 5])
    t = np.array([4, 1, 5])
    s = 10
    C = np.outer(p, t) // 1  # C_ij = p_i t_j / s, scaled to integers by s
    assert cohens_kappa(C).value == pytest.approx(0.0, abs=1e-15)
    assert C.sum() == s * s


def test_mcc_permutation_invariance(rng):
    for _ in range(20):
        C = rng.integers(0, 20, size=(4, 4))
        perm = rng.permutation(4)
        assert mcc(C[np.ix_(perm, perm)]).value == pytest.approx(mcc(C).value, abs=1e-12)


def test_confusion_metrics_match_loop_oracles(rng):
    for _ in range(100):
        K = int(rng.integers(2, 5))
        C = rng.integers(0, 15, size=(K, K)).tolist()
        assert abs(mcc(C).value - mcc_loop(C)) <= 1e-12
        assert abs(cohens_kappa(C).value - kappa_loop(C)) <= 1e-12
        m = mcc(C).value
        assert -1 <= m <= 1


def test_iou_cases():
    a = np.zeros((20, 20), bool)
    b = np.zeros((20, 20), bool)
    a[0:10, 0:10] = True
    b[5:15, 0:10] = True
    assert iou_binary(a, a) == 1.0
    assert iou_binary(a, b) == 50 / 150
    c = np.zeros((20, 20), bool)
    c[5:15, 5:15] = True
    assert iou_binary(a, c) == 25 / 175
    assert iou_binary(a, ~a) == 0.0
    assert iou_binary(np.zeros(3, bool), np.zeros(3, bool)) == 1.0


def test_fdr_for_cases():
    truth = np.zeros(100, bool)
    truth[:50] = True
    pred = np.zeros(100, bool)
    pred[41:51] = True
    assert fdr(pred, truth).value == 0.1
    assert fdr(truth, truth).value == 0.0
    assert fdr(~truth, truth).value == 1.0
    pred = np.zeros(100, bool)
    pred[:10] = True
    t = np.zeros(100, bool)
    t[10:19] = True
    assert for_rate(pred, t).value == 0.1
    assert for_rate(t | pred, t).value == 0.0
    assert for_rate(np.zeros(5, bool), np.ones(5, bool)).value == 1.0


def test_binary_metrics_match_loop_oracles(rng):
    for _ in range(100):
        a = rng.random(30) > 0.5
        b = rng.random(30) > 0.4
        tp, fp, fn, tn = binary_counts_loop(a, b)
        assert abs(iou_binary(a, b) - (tp / (tp + fp + fn) if tp + fp + fn else 1.0)) <= 1e-12
        assert abs(fdr(a, b).value - (fp / (tp + fp) if tp + fp else 0.0)) <= 1e-12
        assert abs(for_rate(a, b).value - (fn / (fn + tn) if fn + tn else 0.0)) <= 1e-12
        # precision + FDR == 1
        if tp + fp:
            assert fdr(a, b).value + tp / (tp + fp) == pytest.approx(1.0, abs=1e-15)
        P = rng.random((3, 4, 4))
        L = rng.random((3, 4, 4))
        assert abs(miou_fuzzy(P, L) - miou_loop(P, L)) <= 1e-12


def test_miou_cases():
    P = np.zeros((2, 3, 3))
    P[0, 0] = 1
    assert miou_fuzzy(P, P) == 1.0
    L = np.zeros((2, 3, 3))
    L[0, 2] = 1
    assert miou_fuzzy(P, L) == 0.5  # class 0 disjoint, class 1 empty in both
    with pytest.raises(DimensionError):
        miou_fuzzy(P, L[:1])


def test_raster_report_fields(rng):
    e = rng.random((16, 16))
    t = rng.random((16, 16)) > 0.5
    rec = raster_report(e, t)
    assert list(rec) == ["iou", "miou", "mcc", "kappa", "fdr", "for", "degenerate"]


# --- geometry -------------------------------------------------------------------

def test_distance_hand_cases():
    assert hausdorff([(0, 0)], [(3, 4)]) == 5.0
    assert msd([(0, 0)], [(0, 2)]) == 2.0
    X = [(0, 0), (1, 1), (2, 0)]
    assert msd(X, X) == 0.0 and hausdorff(X, X) == 0.0
    with pytest.raises(EmptyGeometryError):
        msd([], [(0, 0)])
    with pytest.raises(EmptyGeometryError):
        hausdorff([(0, 0)], np.zeros((0, 2)))


def test_distances_match_loop_oracles(rng):
    for _ in range(100):
        X = rng.normal(size=(int(rng.integers(1, 8)), 2)).tolist()
        Y = rng.normal(size=(int(rng.integers(1, 8)), 2)).tolist()
        expect = max(directed_hausdorff_loop(X, Y), directed_hausdorff_loop(Y, X))
        assert abs(hausdorff(X, Y) - expect) <= 1e-12
        assert abs(msd(X, Y) - msd_loop(X, Y)) <= 1e-12
        assert msd(X, Y) == msd(Y, X)
        assert hausdorff(X, Y) >= msd(X, Y)


def test_densify_option():
    X = [(0, 0), (10, 0)]
    Y = [(5, 1)]
    assert msd(X, Y) > msd(X, Y, densify=1.0)
