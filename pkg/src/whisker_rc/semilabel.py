"""Semi-supervised labeling of unknown terrain.

A novel feature is described as a convex combination of the known class
centroids (weights on the probability simplex), gets a fresh ``newK`` label,
and seeds a new centroid in the bank.  Later novel samples that fall within
the merge radius of a minted centroid join it instead of minting again.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, LabelError, ShapeError
from .novelty import EigenSpaceDetector, detect_novel
from .readout import ReadoutModel, as_array, classify, feature_matrix
from .terrain import LabeledDataset

SUPERVISED = "supervised"
AUTO = "auto-labeled"
DEFAULT_MERGE_RADIUS = 3.0
KKT_TOL = 1e-9


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True, eq=False)
class MixtureEstimate:
    weights: np.ndarray
    class_names: tuple[str, ...]
    residual_norm: float
    kkt_residual: float = 0.0
    non_unique: bool = False

    def as_dict(self) -> dict:
        return {name: float(w) for name, w in zip(self.class_names, self.weights)}

    def describe(self, min_weight: float = 0.005) -> str:
        """Human-readable mixture, e.g. ``0.75*gravel + 0.25*flat``."""
        terms = sorted(((w, n) for n, w in zip(self.class_names, self.weights) if w >= min_weight),
                       key=lambda t: (-t[0], t[1]))
        return " + ".join(f"{w:.2f}*{n}" for w, n in terms)

    def to_dict(self) -> dict:
        return {"weights": self.as_dict(), "residual_norm": self.residual_norm,
                "kkt_residual": self.kkt_residual, "non_unique": self.non_unique,
                "description": self.describe()}


def _equality_ls(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """min z^T H z / 2 - g^T z subject to sum z = 1, via the KKT system."""
    k = len(g)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = H
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([g, [1.0]])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:k]


def simplex_least_squares(C: np.ndarray, f: np.ndarray, max_iter: int | None = None):
    """Primal active-set solver for min ||C w - f|| over the probability simplex.

    Columns of ``C`` are the centroids.  Starts at the nearest vertex (lowest
    index on ties) and adds the coordinate with the most negative reduced
    gradient until the KKT conditions hold; infeasible subproblem steps are
    cut back to the boundary and the blocking coordinate is dropped.
    Returns ``(w, kkt_residual, non_unique)``.
    """
    C = np.asarray(C, dtype=float)
    f = np.asarray(f, dtype=float)
    M, K = C.shape
    scale = max(np.abs(C).max(), np.abs(f).max(), np.finfo(float).tiny)
    Cs, fs = C / scale, f / scale
    H = Cs.T @ Cs
    g = Cs.T @ fs
    tol = 1e-13 * max(1.0, np.abs(H).max())

    start = int(np.argmin(np.sum((Cs - fs[:, None]) ** 2, axis=0)))
    w = np.zeros(K)
    w[start] = 1.0
    free = [start]
    max_iter = max_iter or 50 * K + 50
    for _ in range(max_iter):
        grad = H @ w - g
        level = grad[free].mean()
        reduced = grad - level
        reduced[free] = 0.0
        j = int(np.argmin(reduced))
        if reduced[j] >= -tol:
            break
        free.append(j)
        while True:
            idx = np.array(sorted(free))
            z = _equality_ls(H[np.ix_(idx, idx)], g[idx])
            if np.all(z > 0):
                w = np.zeros(K)
                w[idx] = z
                free = list(idx)
                break
            w_f = w[idx]
            blocking = z <= 0
            alpha = np.min(w_f[blocking] / (w_f[blocking] - z[blocking]))
            w_new = np.zeros(K)
            w_new[idx] = w_f + alpha * (z - w_f)
            w = np.where(w_new > 1e-15, w_new, 0.0)
            free = [i for i in idx if w[i] > 0]
            if not free:  # numerical corner: fall back to the best vertex
                free = [start]
                w = np.zeros(K)
                w[start] = 1.0
                break

    w = np.maximum(w, 0.0)
    w = w / w.sum()
    grad = H @ w - g
    kkt = float(np.max(np.abs(w - project_simplex(w - grad))))

    level = grad[w > 0].mean()
    zero_mult = [i for i in range(K) if w[i] > 0 or abs(grad[i] - level) <= 1e-10]
    A = np.vstack([Cs[:, zero_mult], np.ones(len(zero_mult))])
    non_unique = bool(np.linalg.matrix_rank(A, tol=1e-10) < len(zero_mult))
    return w, kkt, non_unique


@dataclass(frozen=True, eq=False)
class CentroidEntry:
    name: str
    centroid: np.ndarray
    count: int
    provenance: str = SUPERVISED


@dataclass(frozen=True, eq=False)
class CentroidBank:
    entries: tuple[CentroidEntry, ...]
    next_new_index: int = 1

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ArgumentError("centroid names must be unique")
        dims = {len(e.centroid) for e in self.entries}
        if len(dims) > 1:
            raise ShapeError("centroid dimensions differ")
        if any(e.count < 1 for e in self.entries):
            raise ArgumentError("centroid counts must be >= 1")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    @property
    def next_label(self) -> str:
        return f"new{self.next_new_index}"

    def get(self, name: str) -> CentroidEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise LabelError(f"unknown label {name!r}")

    def with_provenance(self, provenance: str) -> list[CentroidEntry]:
        return [e for e in self.entries if e.provenance == provenance]

    @classmethod
    def from_dataset(cls, dataset: LabeledDataset) -> "CentroidBank":
        X = feature_matrix(dataset)
        labels = np.array(dataset.labels)
        entries = []
        for name in dataset.class_names:
            rows = X[labels == name]
            if len(rows):
                entries.append(CentroidEntry(name, rows.mean(axis=0), len(rows)))
        return cls(tuple(entries))

    def to_dict(self) -> dict:
        return {"next_new_index": self.next_new_index,
                "entries": [{"name": e.name, "centroid": e.centroid.tolist(), "count": e.count,
                             "provenance": e.provenance} for e in self.entries]}


def estimate_mixture(bank: CentroidBank, feature, provenance: str | None = SUPERVISED) -> MixtureEstimate:
    """Simplex-constrained least-squares weights of ``feature`` over the bank."""
    entries = list(bank.entries) if provenance is None else bank.with_provenance(provenance)
    if len(entries) < 2:
        raise ArgumentError("mixture estimation needs at least two centroids")
    f = as_array(feature)
    C = np.stack([e.centroid for e in entries], axis=1)
    if C.shape[0] != len(f):
        raise ShapeError(f"feature has {len(f)} entries, centroids have {C.shape[0]}")
    w, kkt, non_unique = simplex_least_squares(C, f)
    residual = float(np.linalg.norm(C @ w - f))
    return MixtureEstimate(w, tuple(e.name for e in entries), residual, kkt, non_unique)


def update_bank(bank: CentroidBank, label: str, feature) -> CentroidBank:
    """Running-mean update; the pending ``newK`` label is added on first use."""
    f = as_array(feature)
    entries = list(bank.entries)
    for k, e in enumerate(entries):
        if e.name == label:
            if len(e.centroid) != len(f):
                raise ShapeError("feature dimension does not match the bank")
            n = e.count + 1
            entries[k] = replace(e, centroid=e.centroid + (f - e.centroid) / n, count=n)
            return replace(bank, entries=tuple(entries))
    if label == bank.next_label:
        if entries and len(entries[0].centroid) != len(f):
            raise ShapeError("feature dimension does not match the bank")
        entries.append(CentroidEntry(label, f.copy(), 1, AUTO))
        return CentroidBank(tuple(entries), bank.next_new_index + 1)
    raise LabelError(f"unknown label {label!r}")


@dataclass(frozen=True, eq=False)
class AutoLabelRecord:
    index: int
    decision: str  # "known" or "novel"
    label: str
    distance: float
    novel: bool
    mixture: MixtureEstimate | None = None
    minted: bool = False

    def to_dict(self) -> dict:
        return {"index": self.index, "decision": self.decision, "label": self.label,
                "novel": self.novel, "minted": self.minted, "distance": self.distance,
                "mixture": None if self.mixture is None else self.mixture.to_dict()}


def auto_label(detector: EigenSpaceDetector, bank: CentroidBank, model: ReadoutModel, feature,
               index: int = 0, merge_radius: float = DEFAULT_MERGE_RADIUS) -> AutoLabelRecord:
    """Known label from the readout, or a (possibly freshly minted) novel label."""
    f = as_array(feature)
    novel, dist = detect_novel(detector, f)
    if not novel:
        label, _ = classify(model, f)
        return AutoLabelRecord(index, "known", label, dist, False)

    mixture = estimate_mixture(bank, f)
    minted = bank.with_provenance(AUTO)
    if minted:
        gaps = [detector.difference_distance(f, e.centroid) for e in minted]
        k = int(np.argmin(gaps))
        if gaps[k] <= merge_radius:
            return AutoLabelRecord(index, "novel", minted[k].name, dist, True, mixture, False)
    return AutoLabelRecord(index, "novel", bank.next_label, dist, True, mixture, True)


def process_stream(detector: EigenSpaceDetector, bank: CentroidBank, model: ReadoutModel,
                   features: Iterable, merge_radius: float = DEFAULT_MERGE_RADIUS):
    """Auto-label a feature stream in order, growing the bank with novel samples."""
    records = []
    for i, feature in enumerate(features):
        rec = auto_label(detector, bank, model, feature, i, merge_radius)
        if rec.novel:
            bank = update_bank(bank, rec.label, feature)
        records.append(rec)
    return records, bank


def write_event_log(records: Sequence[AutoLabelRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_event_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def retrain_readout(train: LabeledDataset, records: Sequence[AutoLabelRecord], features: Sequence,
                    ridge_lambda: float) -> ReadoutModel:
    """Explicit retrain on supervised data plus auto-labeled novel samples."""
    from .readout import FeatureVector, train_readout
    from .terrain import Record

    extra = []
    for rec, feature in zip(records, features):
        if rec.novel:
            fv = feature if isinstance(feature, FeatureVector) else FeatureVector(
                as_array(feature), tuple(range(len(as_array(feature)))), 0.0)
            extra.append(Record(fv, rec.label, 0.0, float("nan"), -1, "train"))
    names = tuple(train.class_names) + tuple(sorted({r.label for r in extra} - set(train.class_names)))
    merged = LabeledDataset(tuple(train.records) + tuple(extra), names, train.train_fraction)
    return train_readout(merged, ridge_lambda)
