"""Stochastic terrain profiles and traversal-induced base excitation.

A terrain class is a stationary Gaussian height field plus an optional
periodic macro texture.  The field is seeded white noise smoothed by a
moving average with kernel ``exp(-u**2 / l**2)`` (truncated at 4 l and
normalised to unit energy), which gives the height autocorrelation
``sigma**2 * exp(-u**2 / (2 l**2))``.

Seeds for dataset records are derived with SplitMix64::

    z = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    seed = z ^ (z >> 31)

and each record's noise stream is ``numpy.random.default_rng(seed)``
(PCG64), so any record can be regenerated from ``(master_seed, index)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import ArgumentError, ExtentError, ResolutionError

#: curvature of the hardness-shaped contact map, 1/m
CONTACT_KAPPA = 50.0
KERNEL_HALF_WIDTH = 4.0  # in correlation lengths

_MASK64 = (1 << 64) - 1


def splitmix64(master_seed: int, index: int) -> int:
    z = (int(master_seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class TerrainClass:
    name: str
    roughness_sigma_m: float
    correlation_length_m: float
    hardness: float = 1.0
    macro_amplitude_m: float = 0.0
    macro_wavelength_m: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise ArgumentError("terrain class needs a name")
        if not self.roughness_sigma_m >= 0:
            raise ArgumentError(f"{self.name}: roughness_sigma_m must be >= 0")
        if not self.correlation_length_m > 0:
            raise ArgumentError(f"{self.name}: correlation_length_m must be > 0")
        if not 0 < self.hardness <= 1:
            raise ArgumentError(f"{self.name}: hardness must lie in (0, 1]")
        if self.macro_amplitude_m < 0:
            raise ArgumentError(f"{self.name}: macro_amplitude_m must be >= 0")
        if self.macro_amplitude_m > 0 and not self.macro_wavelength_m > 0:
            raise ArgumentError(f"{self.name}: macro_wavelength_m must be > 0")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "roughness_sigma_m": self.roughness_sigma_m,
            "correlation_length_m": self.correlation_length_m,
            "hardness": self.hardness,
            "macro_amplitude_m": self.macro_amplitude_m,
            "macro_wavelength_m": self.macro_wavelength_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TerrainClass":
        return cls(**{k: d[k] for k in (
            "name", "roughness_sigma_m", "correlation_length_m", "hardness",
            "macro_amplitude_m", "macro_wavelength_m") if k in d})


@dataclass(frozen=True, eq=False)
class TerrainProfile:
    dx_m: float
    heights_m: np.ndarray
    class_name: str
    seed: int

    @property
    def extent_m(self) -> float:
        return (len(self.heights_m) - 1) * self.dx_m


@dataclass(frozen=True)
class Traversal:
    speed_m_s: float
    sample_rate_hz: float = 5000.0
    duration_s: float = 1.25

    def __post_init__(self):
        for name in ("speed_m_s", "sample_rate_hz", "duration_s"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ArgumentError(f"{name} must be > 0, got {value!r}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def distance_m(self) -> float:
        return self.speed_m_s * (self.n_samples - 1) / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class ExcitationSignal:
    dt_s: float
    base_displacement_m: np.ndarray


@dataclass(frozen=True, eq=False)
class Record:
    data: object  # ExcitationSignal, FeatureVector or raw array
    label: str
    speed_m_s: float
    roughness_sigma_m: float
    seed: int
    split: str = "train"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    records: tuple[Record, ...]
    class_names: tuple[str, ...]
    train_fraction: float = 0.8

    def __post_init__(self):
        if not self.records:
            raise ArgumentError("dataset is empty")
        unknown = {r.label for r in self.records} - set(self.class_names)
        if unknown:
            raise ArgumentError(f"labels outside declared class set: {sorted(unknown)}")

    def __len__(self):
        return len(self.records)

    def split(self, tag: str) -> "LabeledDataset":
        return replace(self, records=tuple(r for r in self.records if r.split == tag))

    def where(self, predicate) -> "LabeledDataset":
        return replace(self, records=tuple(r for r in self.records if predicate(r)))

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in self.class_names}
        for r in self.records:
            out[r.label] += 1
        return out


def _kernel(correlation_length_m: float, dx_m: float) -> np.ndarray:
    half = int(np.ceil(KERNEL_HALF_WIDTH * correlation_length_m / dx_m))
    u = np.arange(-half, half + 1) * dx_m
    k = np.exp(-(u / correlation_length_m) ** 2)
    return k / np.sqrt(np.sum(k**2))


def sample_profile(terrain: TerrainClass, length_m: float, dx_m: float, seed: int) -> TerrainProfile:
    """Seeded height profile of ``terrain`` on a grid of spacing ``dx_m``."""
    ell = terrain.correlation_length_m
    if not dx_m > 0 or dx_m >= ell / 2:
        raise ResolutionError(f"dx {dx_m} must be in (0, correlation_length/2 = {ell / 2})")
    if length_m < 10 * ell:
        raise ArgumentError(f"profile length {length_m} shorter than 10 correlation lengths")
    n = int(round(length_m / dx_m)) + 1
    x = np.arange(n) * dx_m

    kern = _kernel(ell, dx_m)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(n + len(kern) - 1)
    heights = terrain.roughness_sigma_m * np.convolve(noise, kern, mode="valid")
    if terrain.macro_amplitude_m > 0:
        heights = heights + terrain.macro_amplitude_m * np.sin(2 * np.pi * x / terrain.macro_wavelength_m)
    return TerrainProfile(dx_m, heights, terrain.name, int(seed))


def contact_map(u: np.ndarray, hardness: float, kappa: float = CONTACT_KAPPA) -> np.ndarray:
    """Hardness-shaped contact: identity when hard, mild quadratic when soft."""
    if hardness == 1.0:
        return u
    return u + (1.0 - hardness) * kappa * u * np.abs(u)


def traverse_to_excitation(profile: TerrainProfile, traversal: Traversal, hardness: float) -> ExcitationSignal:
    """Base displacement seen when driving over ``profile`` at constant speed."""
    n = traversal.n_samples
    t = np.arange(n) / traversal.sample_rate_hz
    s = traversal.speed_m_s * t
    if s[-1] > profile.extent_m * (1 + 1e-12):
        raise ExtentError(
            f"traversal covers {s[-1]:.4g} m but the profile extends only {profile.extent_m:.4g} m"
        )
    x = np.arange(len(profile.heights_m)) * profile.dx_m
    h = np.interp(s, x, profile.heights_m)
    return ExcitationSignal(1.0 / traversal.sample_rate_hz, contact_map(h, hardness))


def profile_length_for(traversal: Traversal, terrain: TerrainClass, dx_m: float) -> float:
    return max(traversal.distance_m + 2 * dx_m, 10 * terrain.correlation_length_m)


def record_excitation(terrain: TerrainClass, traversal: Traversal, dx_m: float, seed: int) -> ExcitationSignal:
    """One record's excitation, regenerable from its seed alone."""
    profile = sample_profile(terrain, profile_length_for(traversal, terrain, dx_m), dx_m, seed)
    return traverse_to_excitation(profile, traversal, terrain.hardness)


def iter_records(classes: Sequence[TerrainClass], traversals: Sequence[Traversal],
                 trials_per_cell: int, master_seed: int, *, train_fraction: float = 0.8,
                 dx_m: float = 2e-5) -> Iterator[Record]:
    """Lazily generate the records of :func:`make_dataset`, in the same order."""
    if not classes:
        raise ArgumentError("class list is empty")
    if not traversals:
        raise ArgumentError("traversal list is empty")
    if trials_per_cell < 1:
        raise ArgumentError("trials_per_cell must be >= 1")
    if not 0 <= train_fraction <= 1:
        raise ArgumentError("train_fraction must lie in [0, 1]")
    n_train = int(round(train_fraction * trials_per_cell))
    index = 0
    for terrain in classes:
        for traversal in traversals:
            for trial in range(trials_per_cell):
                seed = splitmix64(master_seed, index)
                exc = record_excitation(terrain, traversal, dx_m, seed)
                yield Record(exc, terrain.name, traversal.speed_m_s, terrain.roughness_sigma_m,
                             seed, "train" if trial < n_train else "test")
                index += 1


def make_dataset(classes: Sequence[TerrainClass], traversals: Sequence[Traversal],
                 trials_per_cell: int, master_seed: int, *, train_fraction: float = 0.8,
                 dx_m: float = 2e-5) -> LabeledDataset:
    """Excitation records for every (class, traversal, trial) cell.

    Ordering is class-major, then traversal, then trial; the flat record
    index feeds :func:`splitmix64`.  The first ``round(train_fraction *
    trials_per_cell)`` trials of every cell are tagged ``train``.
    """
    records = tuple(iter_records(classes, traversals, trials_per_cell, master_seed,
                                 train_fraction=train_fraction, dx_m=dx_m))
    return LabeledDataset(records, tuple(c.name for c in classes), train_fraction)
