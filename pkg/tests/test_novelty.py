import math
from dataclasses import replace

import numpy as np
import pytest

from whisker_rc.config import default_config
from whisker_rc.errors import ArgumentError, DegenerateTargetError, RankError, SampleSizeError, ShapeError
from whisker_rc.novelty import (
    EigenSpaceDetector,
    RoughnessRegressor,
    chi2_threshold,
    detect_novel,
    fit_detector,
    fit_roughness,
    mahalanobis_distance,
    predict_roughness,
    r_squared,
)
from whisker_rc.readout import FeatureVector, feature_matrix, featurize_dataset
from whisker_rc.terrain import LabeledDataset, Record, Traversal, make_dataset


def chi2_3_cdf(x):
    """Closed-form chi-square CDF with three degrees of freedom."""
    return math.erf(math.sqrt(x / 2)) - math.sqrt(2 * x / math.pi) * math.exp(-x / 2)


def chi2_3_quantile(q):
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if chi2_3_cdf(mid) < q else (lo, mid)
    return 0.5 * (lo + hi)


def test_threshold_matches_closed_form_quantile():
    assert abs(chi2_threshold(0.99, 3) - chi2_3_quantile(0.99)) < 1e-8
    assert abs(chi2_threshold(0.99, 3) - 11.3449) < 1e-4


def test_isotropic_eigenvalues_near_one(rng):
    det = fit_detector(rng.standard_normal((10_000, 4)), d=4)
    assert np.all(np.abs(det.eigenvalues - 1) < 0.2)
    assert np.allclose(det.components.T @ det.components, np.eye(4), atol=1e-12)
    assert np.all(np.diff(det.eigenvalues) <= 0)


def test_planar_data_reconstructed_exactly(rng):
    basis = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    X = 7.0 + (rng.standard_normal((200, 2)) * [3.0, 1.0]) @ basis.T
    det = fit_detector(X, d=2)
    Z = det.project(X)
    assert np.max(np.abs(Z @ det.components.T + det.mean - X)) < 1e-10
    with pytest.raises(RankError) as info:
        fit_detector(X, d=3)
    assert info.value.usable_d == 2


def test_too_few_samples(rng):
    with pytest.raises(SampleSizeError):
        fit_detector(rng.standard_normal((3, 4)), d=3)


def test_distance_examples(rng):
    det = fit_detector(rng.standard_normal((500, 3)) * [3.0, 2.0, 1.0], d=3)
    assert mahalanobis_distance(det, det.mean) == 0.0
    along = det.mean + np.sqrt(det.eigenvalues[0]) * det.components[:, 0]
    assert abs(mahalanobis_distance(det, along) - 1.0) < 1e-12
    with pytest.raises(ShapeError):
        mahalanobis_distance(det, np.zeros(5))


def test_unit_eigenvalues_give_euclidean_norm(rng):
    comps = np.linalg.qr(rng.standard_normal((4, 4)))[0][:, :2]
    det = EigenSpaceDetector(np.zeros(4), comps, np.ones(2), 1.0, 0.9)
    f = rng.standard_normal(4)
    assert abs(mahalanobis_distance(det, f) - np.linalg.norm(comps.T @ f)) < 1e-12


def test_false_positive_rate_calibrated(rng):
    det = fit_detector(rng.standard_normal((10_000, 4)), d=4, q=0.99)
    flagged = np.mean(det.distances(rng.standard_normal((10_000, 4))) ** 2 > det.threshold)
    assert 0.002 <= flagged <= 0.025
    sigma = np.sqrt(0.01 * 0.99 / 10_000)
    assert flagged <= 2 * 0.01 + 3 * sigma


def test_far_point_is_novel(rng):
    det = fit_detector(rng.standard_normal((2000, 3)), d=3)
    far = det.mean + 10 * np.sqrt(det.eigenvalues[0]) * det.components[:, 0]
    assert detect_novel(det, far)[0]


def test_rotation_invariance(rng):
    X = rng.standard_normal((1000, 4)) * [4.0, 2.0, 1.0, 0.5]
    R = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    a = fit_detector(X, d=3)
    b = fit_detector(X @ R.T, d=3)
    probe = rng.standard_normal((20, 4)) * 3
    assert np.allclose(a.distances(probe), b.distances(probe @ R.T), rtol=1e-8)


def test_higher_confidence_flags_no_more(rng):
    X = rng.standard_normal((2000, 3))
    probe = rng.standard_normal((2000, 3)) * 2
    counts = [np.sum(fit_detector(X, 3, q).distances(probe) ** 2 > chi2_threshold(q, 3))
              for q in (0.9, 0.95, 0.99, 0.999)]
    assert counts == sorted(counts, reverse=True)


def test_shifted_class_recall(rng):
    det = fit_detector(rng.standard_normal((5000, 3)), d=3)
    shift = 6 * np.sqrt(det.eigenvalues[0]) * det.components[:, 0]
    novel = det.mean + shift + rng.standard_normal((200, 3))
    assert np.mean(det.distances(novel) ** 2 > det.threshold) >= 0.95


def test_invalid_arguments(rng):
    X = rng.standard_normal((50, 3))
    with pytest.raises(ArgumentError):
        fit_detector(X, d=0)
    with pytest.raises(ArgumentError):
        fit_detector(X, d=2, q=1.0)


def test_detector_round_trip(rng):
    det = fit_detector(rng.standard_normal((100, 4)), d=3)
    again = EigenSpaceDetector.from_dict(det.to_dict())
    probe = rng.standard_normal((5, 4))
    assert np.array_equal(again.distances(probe), det.distances(probe))


# -------------------------------------------------------------- roughness

def roughness_dataset(X, sigmas):
    recs = tuple(Record(FeatureVector(x, tuple(range(len(x))), 1.0), "g", 0.2, s, i)
                 for i, (x, s) in enumerate(zip(X, sigmas)))
    return LabeledDataset(recs, ("g",))


def test_linear_targets_fit_exactly(rng):
    X = np.abs(rng.standard_normal((50, 4)))
    sigma = 1e-5 * (X @ [1.0, 2.0, 0.5, 0.1]) + 2e-5
    reg = fit_roughness(roughness_dataset(X, sigma))
    assert abs(r_squared(sigma, reg.predict(X)) - 1) < 1e-8
    again = RoughnessRegressor.from_dict(reg.to_dict())
    assert np.array_equal(again.predict(X), reg.predict(X))


def test_prediction_clamped_non_negative(rng):
    X = np.abs(rng.standard_normal((50, 2))) + 1
    reg = fit_roughness(roughness_dataset(X, 1e-5 * X[:, 0]))
    assert predict_roughness(reg, np.zeros(2)) >= 0


def test_degenerate_targets(rng):
    X = np.abs(rng.standard_normal((20, 2)))
    with pytest.raises(DegenerateTargetError):
        fit_roughness(roughness_dataset(X, np.full(20, 1e-5)))
    with pytest.raises(ArgumentError):
        fit_roughness(roughness_dataset(X, [1e-5, 2e-5] * 10))


def test_roughness_sweep_held_out(default_whisker):
    cfg = default_config()
    s, r = cfg.sampling, cfg.roughness
    base = cfg.preset(r.base_class)
    classes = [replace(base, name=f"{base.name}_{i}", roughness_sigma_m=sig)
               for i, sig in enumerate(r.sigmas_m)]
    trav = Traversal(r.speed_m_s, s.sample_rate_hz, s.duration_s)
    ds = make_dataset(classes, [trav], 20, master_seed=21, dx_m=s.profile_dx_m)
    feats = featurize_dataset(ds, default_whisker, cfg.whisker.tap_positions, s.settle_s, s.window_s)
    reg = fit_roughness(feats.split("train"), r.ridge_lambda)
    test = feats.split("test")
    y = [rec.roughness_sigma_m for rec in test.records]
    assert r_squared(y, reg.predict(feature_matrix(test))) >= 0.85
