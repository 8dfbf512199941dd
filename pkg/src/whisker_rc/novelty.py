"""Eigenspace novelty detector and roughness regressor.

Features of all known terrain classes are pooled, centred and projected on
the leading ``d`` principal directions.  A sample's Mahalanobis distance in
that eigenspace is compared against the chi-square quantile of order ``q``
with ``d`` degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np
from scipy import stats

from .errors import ArgumentError, DegenerateTargetError, RankError, SampleSizeError, ShapeError
from .readout import Standardizer, as_array, feature_matrix, ridge_solve
from .terrain import LabeledDataset

DETECTOR_FORMAT_VERSION = 1
EIGEN_FLOOR = 1e-12  # relative to the leading eigenvalue


@dataclass(frozen=True, eq=False)
class EigenSpaceDetector:
    mean: np.ndarray
    components: np.ndarray  # M x d, orthonormal columns
    eigenvalues: np.ndarray  # d, descending
    threshold: float  # on the squared distance
    confidence: float

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"detector expects {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) @ self.components

    def distances(self, X) -> np.ndarray:
        """Vectorised Mahalanobis distance for the rows of ``X``."""
        z = self.project(np.atleast_2d(X))
        return np.sqrt(np.sum(z**2 / self.eigenvalues, axis=1))

    def difference_distance(self, a, b) -> float:
        """Distance between two feature vectors in pooled standardized units."""
        z = (as_array(a) - as_array(b)) @ self.components
        return float(np.sqrt(np.sum(z**2 / self.eigenvalues)))

    def to_dict(self) -> dict:
        return {
            "format_version": DETECTOR_FORMAT_VERSION,
            "kind": "eigenspace_mahalanobis",
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "threshold": self.threshold,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EigenSpaceDetector":
        if d.get("format_version") != DETECTOR_FORMAT_VERSION:
            raise ArgumentError(f"unsupported detector format {d.get('format_version')!r}")
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["components"], dtype=float),
                   np.asarray(d["eigenvalues"], dtype=float), float(d["threshold"]),
                   float(d["confidence"]))


def chi2_threshold(q: float, d: int) -> float:
    return float(stats.chi2.ppf(q, d))


def fit_detector(train_features, d: int, q: float = 0.99) -> EigenSpaceDetector:
    """Fit the pooled eigenspace detector.

    ``train_features`` may be a sequence of FeatureVectors, an array, or a
    LabeledDataset of features.
    """
    if isinstance(train_features, LabeledDataset):
        X = feature_matrix(train_features)
    elif isinstance(train_features, np.ndarray):
        X = np.atleast_2d(train_features)
    else:
        X = np.stack([as_array(f) for f in train_features])
    n, M = X.shape
    if not 0 < q < 1:
        raise ArgumentError(f"confidence q must lie in (0, 1), got {q}")
    if not 1 <= d <= M:
        raise ArgumentError(f"eigenspace dimension must lie in 1..{M}, got {d}")
    if n < d + 1:
        raise SampleSizeError(f"{n} samples cannot support a {d}-dimensional eigenspace (need {d + 1})")

    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False, ddof=1).reshape(M, M)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if not evals[0] > 0:
        raise RankError("training features have zero variance", usable_d=0)
    usable = int(np.sum(evals >= EIGEN_FLOOR * evals[0]))
    if usable < d:
        raise RankError(
            f"only {usable} eigenspace directions carry variance; use d <= {usable}", usable_d=usable
        )
    # deterministic sign: largest-magnitude loading positive
    comps = evecs[:, :d]
    pivot = np.argmax(np.abs(comps), axis=0)
    comps = comps * np.sign(comps[pivot, np.arange(d)])
    return EigenSpaceDetector(mean, comps, evals[:d].copy(), chi2_threshold(q, d), float(q))


def mahalanobis_distance(detector: EigenSpaceDetector, feature) -> float:
    return float(detector.distances(as_array(feature))[0])


def detect_novel(detector: EigenSpaceDetector, feature) -> tuple[bool, float]:
    """(novel?, distance); novel when the squared distance exceeds the threshold."""
    dist = mahalanobis_distance(detector, feature)
    return bool(dist**2 > detector.threshold), dist


@dataclass(frozen=True, eq=False)
class RoughnessRegressor:
    weights: np.ndarray  # M + 1, bias last
    standardizer: Standardizer
    ridge_lambda: float = 1e-6

    def predict(self, X) -> np.ndarray:
        Z = self.standardizer.transform(np.atleast_2d(np.asarray(X, dtype=float)))
        return np.maximum(Z @ self.weights[:-1] + self.weights[-1], 0.0)

    def to_dict(self) -> dict:
        return {
            "format_version": DETECTOR_FORMAT_VERSION,
            "kind": "roughness_ridge",
            "weights": self.weights.tolist(),
            "standardization": self.standardizer.to_dict(),
            "ridge_lambda": self.ridge_lambda,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoughnessRegressor":
        return cls(np.asarray(d["weights"], dtype=float), Standardizer.from_dict(d["standardization"]),
                   float(d["ridge_lambda"]))


def fit_roughness(train: LabeledDataset, ridge_lambda: float = 1e-6) -> RoughnessRegressor:
    """Ridge regression of roughness sigma on standardized features."""
    X = feature_matrix(train)
    y = np.array([r.roughness_sigma_m for r in train.records])
    if len(np.unique(y)) < 3:
        if len(np.unique(y)) == 1:
            raise DegenerateTargetError("roughness targets are constant")
        raise ArgumentError("need at least 3 distinct roughness values")
    std = Standardizer.fit(X)
    # regress in millimetres so the ridge penalty is scale-sensible
    w = ridge_solve(std.transform(X), y[:, None] * 1e3, ridge_lambda)[:, 0] * 1e-3
    return RoughnessRegressor(w, std, float(ridge_lambda))


def predict_roughness(regressor: RoughnessRegressor, feature) -> float:
    return float(regressor.predict(as_array(feature))[0])


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    ss_res = np.sum((y_true - y_pred) ** 2)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    return float(1.0 - ss_res / ss_tot)
