"""Reservoir features and the trainable linear readout.

The whisker itself does the frequency decomposition, so the features are
just the steady-state RMS deflection at each tap.  The readout is one-hot
ridge regression on standardized features with an unpenalized bias.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import LabelError, ShapeError, SingularityError, WindowError, ArgumentError
from .terrain import LabeledDataset, Record
from .whisker import DiscretizedWhisker, ReservoirSignal, simulate_taps

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    tap_positions: tuple[float, ...]
    window_s: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise ShapeError("feature values must be one-dimensional")
        if len(values) != len(self.tap_positions):
            raise ShapeError(f"{len(values)} values for {len(self.tap_positions)} taps")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ArgumentError("feature values must be finite and >= 0")

    def __len__(self):
        return len(self.values)


def as_array(feature) -> np.ndarray:
    """Accept a FeatureVector or a plain vector."""
    if isinstance(feature, FeatureVector):
        return feature.values
    return np.asarray(feature, dtype=float)


def _window_bounds(n_samples: int, dt: float, settle_s: float, window_s: float) -> tuple[int, int]:
    n_window = int(round(window_s / dt))
    n_settle = int(round(settle_s / dt))
    if n_window < 10:
        raise WindowError(f"window of {n_window} samples is shorter than 10")
    if n_settle + n_window > n_samples:
        raise WindowError(
            f"signal has {n_samples} samples, settle + window need {n_settle + n_window}"
        )
    return n_samples - n_window, n_samples


def extract_features(signal: ReservoirSignal, settle_s: float, window_s: float) -> FeatureVector:
    """Per-tap RMS over the trailing window, after the settle prefix."""
    lo, hi = _window_bounds(signal.samples.shape[0], signal.dt_s, settle_s, window_s)
    seg = signal.samples[lo:hi]
    rms = np.sqrt(np.mean(seg**2, axis=0))
    return FeatureVector(rms, tuple(signal.tap_positions), float(window_s))


def featurize_batch(whisker: DiscretizedWhisker, displacements: np.ndarray, dt: float,
                    tap_positions: Sequence[float], settle_s: float, window_s: float,
                    chunk: int = 512) -> tuple[tuple[float, ...], np.ndarray]:
    """Simulate many base excitations and return an R x n_taps feature matrix.

    Equivalent to simulate_response -> tap_signals -> extract_features per
    row; batched and chunked for throughput.
    """
    y = np.atleast_2d(np.asarray(displacements, dtype=float))
    lo, hi = _window_bounds(y.shape[1], dt, settle_s, window_s)
    out = []
    taps = None
    for start in range(0, y.shape[0], chunk):
        taps, sig = simulate_taps(whisker, y[start:start + chunk], dt, tap_positions)
        out.append(np.sqrt(np.mean(sig[:, lo:hi, :] ** 2, axis=1)))
    return taps, np.concatenate(out, axis=0)


def featurize_dataset(dataset: LabeledDataset, whisker: DiscretizedWhisker,
                      tap_positions: Sequence[float], settle_s: float, window_s: float) -> LabeledDataset:
    """Replace every excitation record with its FeatureVector."""
    groups: dict[tuple[float, int], list[int]] = {}
    for i, r in enumerate(dataset.records):
        exc = r.data
        key = (float(exc.dt_s), len(exc.base_displacement_m))
        groups.setdefault(key, []).append(i)
    feats: list[FeatureVector | None] = [None] * len(dataset.records)
    for (dt, _), idx in groups.items():
        Y = np.stack([dataset.records[i].data.base_displacement_m for i in idx])
        taps, F = featurize_batch(whisker, Y, dt, tap_positions, settle_s, window_s)
        for row, i in zip(F, idx):
            feats[i] = FeatureVector(row, taps, float(window_s))
    records = tuple(replace(r, data=f) for r, f in zip(dataset.records, feats))
    return replace(dataset, records=records)


def featurize_stream(records: Iterable[Record], class_names: Sequence[str],
                     whisker: DiscretizedWhisker, tap_positions: Sequence[float], settle_s: float,
                     window_s: float, *, train_fraction: float = 0.8, chunk: int = 256) -> LabeledDataset:
    """Featurize a lazy record stream without holding every excitation in memory."""
    out: list[Record] = []
    pending: list[Record] = []

    def flush():
        dataset = LabeledDataset(tuple(pending), tuple(class_names), train_fraction)
        out.extend(featurize_dataset(dataset, whisker, tap_positions, settle_s, window_s).records)
        pending.clear()

    for record in records:
        pending.append(record)
        if len(pending) >= chunk:
            flush()
    if pending:
        flush()
    return LabeledDataset(tuple(out), tuple(class_names), train_fraction)


def feature_matrix(dataset: LabeledDataset) -> np.ndarray:
    return np.stack([as_array(r.data) for r in dataset.records])


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        # constant columns stay centred but unscaled
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"expected {self.mean.shape[0]} features, got {X.shape[-1]}")
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def ridge_solve(Z: np.ndarray, Y: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Weights of ``[Z, 1] W ~ Y`` with the bias row (last) unpenalized.

    Direct solve of the normal equations ``(A^T A + lambda D) W = A^T Y``,
    where ``D`` is the identity with its bias entry zeroed.
    """
    A = np.hstack([Z, np.ones((Z.shape[0], 1))])
    if ridge_lambda == 0 and np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularityError("design matrix is rank deficient; use ridge_lambda > 0")
    penalty = np.eye(A.shape[1]) * ridge_lambda
    penalty[-1, -1] = 0.0
    try:
        return np.linalg.solve(A.T @ A + penalty, A.T @ Y)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"normal equations are singular: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ReadoutModel:
    weights: np.ndarray  # (M + 1) x K, bias row last
    class_names: tuple[str, ...]
    ridge_lambda: float
    standardizer: Standardizer

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ArgumentError("a readout needs at least two classes")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0] - 1

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[-1]}")
        Z = self.standardizer.transform(X)
        return Z @ self.weights[:-1] + self.weights[-1]

    def predict(self, X: np.ndarray) -> list[str]:
        idx = np.argmax(self.scores(np.atleast_2d(X)), axis=1)
        return [self.class_names[i] for i in idx]

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "ridge_readout",
            "class_names": list(self.class_names),
            "ridge_lambda": self.ridge_lambda,
            "weights": self.weights.tolist(),
            "standardization": self.standardizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReadoutModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ArgumentError(f"unsupported model format {d.get('format_version')!r}")
        return cls(np.asarray(d["weights"], dtype=float), tuple(d["class_names"]),
                   float(d["ridge_lambda"]), Standardizer.from_dict(d["standardization"]))


def train_readout(train: LabeledDataset, ridge_lambda: float) -> ReadoutModel:
    if ridge_lambda < 0 or not np.isfinite(ridge_lambda):
        raise ArgumentError(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    counts = train.counts()
    empty = [name for name, c in counts.items() if c == 0]
    if empty:
        raise ArgumentError(f"no training samples for classes {empty}")
    X = feature_matrix(train)
    std = Standardizer.fit(X)
    index = {name: k for k, name in enumerate(train.class_names)}
    Y = np.zeros((len(X), len(train.class_names)))
    Y[np.arange(len(X)), [index[r.label] for r in train.records]] = 1.0
    W = ridge_solve(std.transform(X), Y, ridge_lambda)
    return ReadoutModel(W, tuple(train.class_names), float(ridge_lambda), std)


def classify(model: ReadoutModel, feature) -> tuple[str, np.ndarray]:
    """Label and raw scores; ties go to the lowest class index."""
    scores = model.scores(as_array(feature))
    return model.class_names[int(np.argmax(scores))], scores


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # rows true, columns predicted
    class_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    @property
    def per_class_recall(self) -> dict[str, float | None]:
        rows = self.counts.sum(axis=1)
        return {name: (float(self.counts[k, k] / rows[k]) if rows[k] else None)
                for k, name in enumerate(self.class_names)}

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "counts": self.counts.tolist(),
            "accuracy": self.accuracy,
            "per_class_recall": self.per_class_recall,
        }


def evaluate(model: ReadoutModel, test: LabeledDataset) -> ConfusionMatrix:
    if len(test) == 0:
        raise ArgumentError("test set is empty")
    index = {name: k for k, name in enumerate(model.class_names)}
    missing = sorted({r.label for r in test.records} - set(index))
    if missing:
        raise LabelError(f"labels not known to the model: {missing}")
    X = feature_matrix(test)
    pred = np.argmax(model.scores(X), axis=1)
    truth = np.array([index[r.label] for r in test.records])
    K = len(model.class_names)
    counts = np.zeros((K, K), dtype=int)
    np.add.at(counts, (truth, pred), 1)
    return ConfusionMatrix(counts, model.class_names)
