"""Declarative experiment configuration.

One YAML file drives every stage.  Loading validates each field against the
preconditions of the module that consumes it and reports the dotted field
path on failure.  The config hash is the first 8 bytes of BLAKE2b over the
canonical JSON form (sorted keys, compact separators, floats as ``repr``),
rendered as 16 hex digits.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

import yaml

from .errors import ArtifactIOError, ConfigError
from .nav import NavConfig, RobotPose, TerrainMap, two_band_map
from .terrain import TerrainClass
from .whisker import Material, WhiskerGeometry

#: stand-in presets for the named terrains; roughness and hardness are synthetic
DEFAULT_PRESETS = (
    TerrainClass("flat", 0.01e-3, 1.5e-3, 1.0),
    TerrainClass("grass", 0.08e-3, 1.0e-3, 0.3),
    TerrainClass("sand", 0.03e-3, 0.4e-3, 0.6),
    TerrainClass("gravel", 0.05e-3, 0.25e-3, 1.0),
    TerrainClass("brick", 0.02e-3, 0.13e-3, 1.0, 0.5e-3, 0.1),
    TerrainClass("carpet", 0.02e-3, 0.06e-3, 0.3),
)


@dataclass(frozen=True)
class WhiskerSection:
    length_m: float = 0.15
    base_radius_m: float = 1.5e-3
    taper_ratio: float = 0.3
    n_elements: int = 20
    youngs_modulus_pa: float = 200e9
    density_kg_m3: float = 7850.0
    rayleigh_alpha: float = 30.0
    rayleigh_beta: float = 1e-5
    tap_positions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)

    def geometry(self) -> WhiskerGeometry:
        return WhiskerGeometry.tapered(self.length_m, self.base_radius_m, self.taper_ratio,
                                       self.n_elements)

    def material(self) -> Material:
        return Material(self.youngs_modulus_pa, self.density_kg_m3, self.rayleigh_alpha,
                        self.rayleigh_beta)


@dataclass(frozen=True)
class SamplingSection:
    sample_rate_hz: float = 5000.0
    profile_dx_m: float = 2e-5
    settle_s: float = 0.25
    window_s: float = 1.5

    @property
    def duration_s(self) -> float:
        return self.settle_s + self.window_s


@dataclass(frozen=True)
class ClassificationSection:
    speeds_m_s: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    trials_per_class: int = 50
    train_fraction: float = 0.8
    ridge_lambda: float = 1e-3


@dataclass(frozen=True)
class DetectorSection:
    d: int = 3
    q: float = 0.99
    novel_class: str = "carpet"
    speed_m_s: float = 0.2
    train_per_class: int = 200
    holdout_samples: int = 10000
    novel_samples: int = 500


@dataclass(frozen=True)
class RoughnessSection:
    base_class: str = "gravel"
    sigmas_m: tuple[float, ...] = (0.02e-3, 0.035e-3, 0.05e-3, 0.065e-3, 0.08e-3)
    trials_per_level: int = 40
    train_fraction: float = 0.8
    speed_m_s: float = 0.2
    ridge_lambda: float = 1e-6


@dataclass(frozen=True)
class MixtureSection:
    planted: tuple[tuple[str, float], ...] = (("gravel", 0.75), ("flat", 0.25))
    snr_db: float = 20.0
    trials: int = 200
    stream_samples: int = 40
    merge_radius: float = 3.0


@dataclass(frozen=True)
class NavigationSection:
    target: str = "sand"
    other: str = "gravel"
    cell_size_m: float = 0.1
    cols: int = 60
    rows: int = 320
    boundary_col: int = 40
    start_x_m: float = 3.7
    start_y_m: float = 0.5
    start_heading_deg: float = 80.0
    speed_m_s: float = 0.2
    adapt_speed: bool = True
    window_s: float = 0.5
    settle_s: float = 0.25
    turn_rate_rad_s: float = 1.0
    reverse_arc_rad: float = 0.8
    k: int = 3
    duration_s: float = 60.0
    episode_seed: int = 42
    train_trials: int = 100


@dataclass(frozen=True)
class ReportSection:
    formats: tuple[str, ...] = ("text", "json", "csv")
    figures: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 7
    whisker: WhiskerSection = field(default_factory=WhiskerSection)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    presets: tuple[TerrainClass, ...] = DEFAULT_PRESETS
    classification: ClassificationSection = field(default_factory=ClassificationSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    roughness: RoughnessSection = field(default_factory=RoughnessSection)
    mixture: MixtureSection = field(default_factory=MixtureSection)
    navigation: NavigationSection = field(default_factory=NavigationSection)
    report: ReportSection = field(default_factory=ReportSection)

    def preset(self, name: str) -> TerrainClass:
        for p in self.presets:
            if p.name == name:
                return p
        raise ConfigError(f"no preset named {name!r}")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "presets":
                out[f.name] = [p.to_dict() for p in value]
            elif f.name == "mixture":
                d = _section_dict(value)
                d["planted"] = {name: w for name, w in value.planted}
                out[f.name] = d
            elif is_dataclass(value):
                out[f.name] = _section_dict(value)
            else:
                out[f.name] = value
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, master_seed=int(seed))

    # -- derived objects -------------------------------------------------
    def nav_map(self) -> TerrainMap:
        n = self.navigation
        return two_band_map(self.preset(n.target), self.preset(n.other), n.cols, n.rows,
                            n.boundary_col, n.cell_size_m)

    def nav_start(self, speed: float | None = None) -> RobotPose:
        n = self.navigation
        return RobotPose(n.start_x_m, n.start_y_m, math.radians(n.start_heading_deg),
                         speed if speed is not None else n.speed_m_s)

    def nav_config(self, speed_table=None) -> NavConfig:
        n = self.navigation
        return NavConfig(n.target, n.window_s, n.settle_s, n.turn_rate_rad_s, n.reverse_arc_rad,
                         n.k, speed_table, self.sampling.sample_rate_hz, self.sampling.profile_dx_m,
                         n.duration_s)


def _section_dict(section) -> dict:
    out = {}
    for k, v in asdict(section).items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


# -- parsing and validation ---------------------------------------------------

def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _coerce(value: Any, target: type, path: str):
    if target is bool:
        _expect(isinstance(value, bool), path, f"expected true/false, got {value!r}")
        return value
    if target is int:
        _expect(isinstance(value, int) and not isinstance(value, bool), path,
                f"expected an integer, got {value!r}")
        return int(value)
    if target is float:
        if isinstance(value, str):  # YAML 1.1 reads exponents without a dot as strings
            try:
                value = float(value)
            except ValueError:
                pass
        _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path,
                f"expected a number, got {value!r}")
        _expect(math.isfinite(value), path, "must be finite")
        return float(value)
    if target is str:
        _expect(isinstance(value, str), path, f"expected a string, got {value!r}")
        return value
    raise TypeError(target)


_SCALARS = {"int": int, "float": float, "str": str, "bool": bool}


def _build_section(cls, data: Any, path: str):
    if data is None:
        return cls()
    _expect(isinstance(data, dict), path, "expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    _expect(not unknown, path, f"unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        ftype = known[name].type
        sub = f"{path}.{name}"
        if ftype.startswith("tuple[") and name != "planted":
            inner = _SCALARS[ftype[6:].split(",")[0].strip()]
            _expect(isinstance(value, list), sub, "expected a list")
            kwargs[name] = tuple(_coerce(v, inner, f"{sub}[{i}]") for i, v in enumerate(value))
        elif name == "planted":
            _expect(isinstance(value, dict), sub, "expected a mapping of class -> weight")
            kwargs[name] = tuple((str(k), _coerce(v, float, f"{sub}.{k}")) for k, v in value.items())
        else:
            kwargs[name] = _coerce(value, _SCALARS[ftype], sub)
    return cls(**kwargs)


def _build_presets(data: Any) -> tuple[TerrainClass, ...]:
    if data is None:
        return DEFAULT_PRESETS
    _expect(isinstance(data, list) and data, "presets", "expected a non-empty list")
    out = []
    for i, item in enumerate(data):
        path = f"presets[{i}]"
        _expect(isinstance(item, dict), path, "expected a mapping")
        item = {k: (v if k == "name" else _coerce(v, float, f"{path}.{k}")) for k, v in item.items()}
        try:
            out.append(TerrainClass.from_dict(item))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: missing or unexpected field ({exc})") from exc
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return tuple(out)


_SECTIONS = {
    "whisker": WhiskerSection,
    "sampling": SamplingSection,
    "classification": ClassificationSection,
    "detector": DetectorSection,
    "roughness": RoughnessSection,
    "mixture": MixtureSection,
    "navigation": NavigationSection,
    "report": ReportSection,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    _expect(isinstance(data, dict), "<root>", "config must be a mapping")
    allowed = set(_SECTIONS) | {"master_seed", "presets"}
    unknown = sorted(set(data) - allowed)
    _expect(not unknown, "<root>", f"unknown keys {unknown}")
    kwargs = {name: _build_section(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    if "master_seed" in data:
        kwargs["master_seed"] = _coerce(data["master_seed"], int, "master_seed")
    kwargs["presets"] = _build_presets(data.get("presets"))
    try:
        cfg = ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def validate(cfg: ExperimentConfig) -> None:
    """Check every module precondition before any work starts."""
    _expect(cfg.master_seed >= 0, "master_seed", "must be >= 0")
    w = cfg.whisker
    for name in ("length_m", "base_radius_m", "youngs_modulus_pa", "density_kg_m3"):
        _expect(getattr(w, name) > 0, f"whisker.{name}", "must be > 0")
    _expect(0 < w.taper_ratio <= 1, "whisker.taper_ratio", "must lie in (0, 1]")
    _expect(w.n_elements >= 4, "whisker.n_elements", "must be >= 4")
    _expect(w.rayleigh_alpha >= 0, "whisker.rayleigh_alpha", "must be >= 0")
    _expect(w.rayleigh_beta >= 0, "whisker.rayleigh_beta", "must be >= 0")
    _expect(len(w.tap_positions) >= 1, "whisker.tap_positions", "needs at least one tap")
    for i, s in enumerate(w.tap_positions):
        _expect(0 < s <= 1, f"whisker.tap_positions[{i}]", "must lie in (0, 1]")
    _expect(len(set(w.tap_positions)) == len(w.tap_positions), "whisker.tap_positions",
            "must not repeat")

    s = cfg.sampling
    _expect(s.sample_rate_hz > 0, "sampling.sample_rate_hz", "must be > 0")
    _expect(s.profile_dx_m > 0, "sampling.profile_dx_m", "must be > 0")
    _expect(s.settle_s >= 0, "sampling.settle_s", "must be >= 0")
    _expect(s.window_s * s.sample_rate_hz >= 10, "sampling.window_s",
            "window must hold at least 10 samples")

    names = [p.name for p in cfg.presets]
    _expect(len(set(names)) == len(names), "presets", "names must be unique")
    _expect(len(names) >= 2, "presets", "need at least two classes")
    for i, p in enumerate(cfg.presets):
        _expect(s.profile_dx_m < p.correlation_length_m / 2, f"presets[{i}].correlation_length_m",
                f"must exceed twice sampling.profile_dx_m ({2 * s.profile_dx_m:g} m)")

    c = cfg.classification
    _expect(len(c.speeds_m_s) >= 1, "classification.speeds_m_s", "needs at least one speed")
    _expect(len(set(c.speeds_m_s)) == len(c.speeds_m_s), "classification.speeds_m_s",
            "must not repeat")
    for i, v in enumerate(c.speeds_m_s):
        _expect(v > 0, f"classification.speeds_m_s[{i}]", "must be > 0")
    _expect(c.trials_per_class >= 2, "classification.trials_per_class", "must be >= 2")
    _expect(0 < c.train_fraction < 1, "classification.train_fraction", "must lie in (0, 1)")
    n_train = round(c.train_fraction * c.trials_per_class)
    _expect(1 <= n_train < c.trials_per_class, "classification.train_fraction",
            "must leave at least one train and one test trial per class")
    _expect(c.ridge_lambda >= 0, "classification.ridge_lambda", "must be >= 0")

    d = cfg.detector
    _expect(d.novel_class in names, "detector.novel_class", f"{d.novel_class!r} is not a preset")
    _expect(1 <= d.d <= len(w.tap_positions), "detector.d",
            f"must lie in 1..{len(w.tap_positions)} (the feature dimension)")
    _expect(0 < d.q < 1, "detector.q", "must lie in (0, 1)")
    _expect(d.speed_m_s > 0, "detector.speed_m_s", "must be > 0")
    known = len(names) - 1
    _expect(d.train_per_class * known >= d.d + 1, "detector.train_per_class",
            f"pooled training set must hold at least d + 1 = {d.d + 1} samples")
    _expect(d.holdout_samples >= known, "detector.holdout_samples",
            f"must be >= the number of known classes ({known})")
    _expect(d.novel_samples >= 1, "detector.novel_samples", "must be >= 1")

    r = cfg.roughness
    _expect(r.base_class in names, "roughness.base_class", f"{r.base_class!r} is not a preset")
    _expect(len(set(r.sigmas_m)) >= 3, "roughness.sigmas_m", "needs at least 3 distinct levels")
    for i, sig in enumerate(r.sigmas_m):
        _expect(sig >= 0, f"roughness.sigmas_m[{i}]", "must be >= 0")
    _expect(r.trials_per_level >= 2, "roughness.trials_per_level", "must be >= 2")
    _expect(0 < r.train_fraction < 1, "roughness.train_fraction", "must lie in (0, 1)")
    _expect(r.speed_m_s > 0, "roughness.speed_m_s", "must be > 0")
    _expect(r.ridge_lambda >= 0, "roughness.ridge_lambda", "must be >= 0")

    m = cfg.mixture
    _expect(len(m.planted) >= 2, "mixture.planted", "needs at least two components")
    for name, weight in m.planted:
        _expect(name in names and name != d.novel_class, f"mixture.planted.{name}",
                "must name a known (non-novel) preset")
        _expect(weight >= 0, f"mixture.planted.{name}", "weight must be >= 0")
    _expect(abs(sum(wt for _, wt in m.planted) - 1) <= 1e-9, "mixture.planted",
            "weights must sum to 1")
    _expect(m.trials >= 1, "mixture.trials", "must be >= 1")
    _expect(m.stream_samples >= 1, "mixture.stream_samples", "must be >= 1")
    _expect(m.stream_samples <= d.novel_samples, "mixture.stream_samples",
            "cannot exceed detector.novel_samples")
    _expect(m.merge_radius >= 0, "mixture.merge_radius", "must be >= 0")

    n = cfg.navigation
    for key in ("target", "other"):
        _expect(getattr(n, key) in names, f"navigation.{key}", f"{getattr(n, key)!r} is not a preset")
    _expect(n.target != n.other, "navigation.other", "must differ from navigation.target")
    _expect(n.cell_size_m > 0, "navigation.cell_size_m", "must be > 0")
    _expect(n.cols >= 2 and n.rows >= 1, "navigation.cols", "map needs at least 2 x 1 cells")
    _expect(0 < n.boundary_col < n.cols, "navigation.boundary_col", "must lie inside the map")
    _expect(0 <= n.start_x_m < n.boundary_col * n.cell_size_m, "navigation.start_x_m",
            "start must lie on the target band")
    _expect(0 <= n.start_y_m < n.rows * n.cell_size_m, "navigation.start_y_m",
            "start must lie inside the map")
    _expect(n.speed_m_s > 0, "navigation.speed_m_s", "must be > 0")
    _expect(n.window_s > 0, "navigation.window_s", "must be > 0")
    _expect(n.window_s * s.sample_rate_hz >= 10, "navigation.window_s",
            "window must hold at least 10 samples")
    _expect(n.settle_s >= 0, "navigation.settle_s", "must be >= 0")
    _expect(n.turn_rate_rad_s > 0, "navigation.turn_rate_rad_s", "must be > 0")
    _expect(n.k >= 1, "navigation.k", "must be >= 1")
    _expect(n.duration_s >= n.window_s, "navigation.duration_s", "must cover at least one window")
    _expect(n.train_trials >= 2, "navigation.train_trials", "must be >= 2")
    _expect(n.episode_seed >= 0, "navigation.episode_seed", "must be >= 0")

    for i, fmt in enumerate(cfg.report.formats):
        _expect(fmt in ("text", "json", "csv"), f"report.formats[{i}]",
                f"unknown format {fmt!r} (text, json, csv)")


# -- hashing ----------------------------------------------------------------

def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: ExperimentConfig) -> str:
    digest = hashlib.blake2b(canonical_json(cfg.to_dict()).encode(), digest_size=8)
    return digest.hexdigest()
