"""Closed-loop terrain following on a 2D class map.

A kinematic unicycle drives over a grid of terrain classes.  Each control
step it senses one window with the simulated whisker, labels it, and a
majority-of-k rule decides whether to keep heading, back off with a reverse
arc, or steer back toward the heading it held while on target.

Map coordinates: ``x`` runs along grid columns and ``y`` along rows, both
from 0 at the first cell; text map files list row 0 first.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ArgumentError, BoundaryError, ConfigError
from .novelty import EigenSpaceDetector, detect_novel
from .readout import FeatureVector, ReadoutModel, classify, extract_features
from .terrain import (
    ExcitationSignal,
    TerrainClass,
    Traversal,
    sample_profile,
    splitmix64,
    traverse_to_excitation,
)
from .whisker import DiscretizedWhisker, simulate_response, tap_signals

KEEP = "keep_heading"
TURN = "turn"
REVERSE = "reverse_arc"


@dataclass(frozen=True)
class Command:
    kind: str
    turn_rate: float = 0.0

    def __str__(self):
        if self.kind == TURN:
            return f"turn({self.turn_rate:+.4f})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Command":
        if text.startswith("turn("):
            return cls(TURN, float(text[5:-1]))
        if text not in (KEEP, REVERSE):
            raise ArgumentError(f"unknown command {text!r}")
        return cls(text)


@dataclass(frozen=True, eq=False)
class TerrainMap:
    cell_size_m: float
    grid: tuple[tuple[str, ...], ...]
    presets: Mapping[str, TerrainClass]

    def __post_init__(self):
        if not self.grid or not self.grid[0]:
            raise ArgumentError("terrain map grid is empty")
        if len({len(row) for row in self.grid}) != 1:
            raise ArgumentError("terrain map rows differ in length")
        missing = {c for row in self.grid for c in row} - set(self.presets)
        if missing:
            raise ArgumentError(f"grid names without presets: {sorted(missing)}")
        if not self.cell_size_m > 0:
            raise ArgumentError("cell_size_m must be > 0")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid), len(self.grid[0])

    @property
    def extent(self) -> tuple[float, float]:
        rows, cols = self.shape
        return cols * self.cell_size_m, rows * self.cell_size_m

    def contains(self, x: float, y: float) -> bool:
        w, h = self.extent
        return 0.0 <= x < w and 0.0 <= y < h

    def class_at(self, x: float, y: float, clamp: bool = False) -> str:
        rows, cols = self.shape
        col = int(math.floor(x / self.cell_size_m))
        row = int(math.floor(y / self.cell_size_m))
        if clamp:
            col = min(max(col, 0), cols - 1)
            row = min(max(row, 0), rows - 1)
        elif not (0 <= col < cols and 0 <= row < rows):
            raise BoundaryError(f"point ({x:.3f}, {y:.3f}) is outside the map")
        return self.grid[row][col]

    def class_names(self) -> list[str]:
        """Preset names in a stable order."""
        return sorted(self.presets)


def two_band_map(target: TerrainClass, other: TerrainClass, cols: int, rows: int,
                 boundary_col: int, cell_size_m: float) -> TerrainMap:
    """Target terrain left of ``boundary_col``, the other terrain right of it."""
    row = tuple(target.name if c < boundary_col else other.name for c in range(cols))
    return TerrainMap(cell_size_m, tuple(row for _ in range(rows)),
                      {target.name: target, other.name: other})


def write_map(terrain_map: TerrainMap, path) -> None:
    """Plain-text grid of class initials, then a ``---`` line and a JSON block."""
    legend: dict[str, str] = {}
    for name in terrain_map.class_names():
        key = name[0].upper()
        while key in legend:
            key = chr(ord(key) + 1) if key != "Z" else "a"
        legend[key] = name
    initial = {name: key for key, name in legend.items()}
    with open(path, "w") as fh:
        for row in terrain_map.grid:
            fh.write("".join(initial[c] for c in row) + "\n")
        fh.write("---\n")
        block = {
            "cell_size_m": terrain_map.cell_size_m,
            "legend": legend,
            "presets": {n: terrain_map.presets[n].to_dict() for n in terrain_map.class_names()},
        }
        fh.write(json.dumps(block, indent=2, sort_keys=True) + "\n")


def read_map(path) -> TerrainMap:
    with open(path) as fh:
        text = fh.read()
    if "\n---\n" not in text:
        raise ConfigError(f"{path}: missing '---' separator before the preset block")
    grid_text, block_text = text.split("\n---\n", 1)
    block = json.loads(block_text)
    legend = block["legend"]
    grid = tuple(tuple(legend[ch] for ch in line.strip()) for line in grid_text.splitlines() if line.strip())
    presets = {n: TerrainClass.from_dict(d) for n, d in block["presets"].items()}
    return TerrainMap(float(block["cell_size_m"]), grid, presets)


@dataclass(frozen=True)
class RobotPose:
    x_m: float
    y_m: float
    heading_rad: float
    speed_m_s: float = 0.2

    def __post_init__(self):
        if not self.speed_m_s > 0:
            raise ArgumentError("robot speed must be > 0")


@dataclass(frozen=True)
class NavConfig:
    target_terrain: str
    window_s: float = 0.5
    settle_s: float = 0.25
    turn_rate_rad_s: float = 0.6
    reverse_arc_rad: float = 1.0
    k: int = 3
    speed_table: Mapping[float, float] | None = None
    sample_rate_hz: float = 5000.0
    profile_dx_m: float = 2e-5
    duration_s: float = 60.0

    def __post_init__(self):
        if not self.window_s > 0:
            raise ArgumentError("window_s must be > 0")
        if not self.turn_rate_rad_s > 0:
            raise ArgumentError("turn_rate_rad_s must be > 0")
        if self.settle_s < 0:
            raise ArgumentError("settle_s must be >= 0")
        if self.k < 1:
            raise ArgumentError("k must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.window_s))


def select_speed(speed_table: Mapping[float, float]) -> float:
    """Speed with the highest expected accuracy; ties go to the lower speed."""
    if not speed_table:
        raise ArgumentError("speed table is empty")
    return min(speed_table, key=lambda v: (-speed_table[v], v))


def control_step(config: NavConfig, history: Sequence[str | None]) -> Command:
    """Majority-of-k terrain-following rule.

    * most of the last k labels on target: keep heading;
    * mostly off target and the latest window off target: reverse arc (back
      up one step along the heading, then pivot by ``reverse_arc_rad``);
    * mostly off target but the latest window back on target: turn against
      the reverse arc, toward the heading held while on target.
    """
    labels = [h for h in history if h is not None]
    if not labels:
        raise ArgumentError("control history is empty")
    recent = labels[-config.k:]
    off = sum(1 for lab in recent if lab != config.target_terrain)
    if 2 * off <= len(recent):
        return Command(KEEP)
    if recent[-1] != config.target_terrain:
        return Command(REVERSE)
    direction = -1.0 if config.reverse_arc_rad >= 0 else 1.0
    return Command(TURN, direction * config.turn_rate_rad_s)


def arc_points(x: float, y: float, heading: float, speed: float, omega: float,
               duration: float, n: int) -> np.ndarray:
    """Unicycle positions and headings at ``n`` evenly spaced times; speed may be negative."""
    t = np.linspace(0.0, duration, n)
    th = heading + omega * t
    if abs(omega) < 1e-12:
        px = x + speed * t * math.cos(heading)
        py = y + speed * t * math.sin(heading)
    else:
        px = x + speed / omega * (np.sin(th) - math.sin(heading))
        py = y - speed / omega * (np.cos(th) - math.cos(heading))
    return np.column_stack([px, py, th])


def _sensing_path(pose: RobotPose, command: Command, config: NavConfig, n: int) -> np.ndarray:
    """Positions along settle prefix (straight, behind the robot) plus the step's forward motion."""
    v = pose.speed_m_s
    total = config.settle_s + config.window_s
    t = np.linspace(0.0, total, n)
    pts = np.empty((n, 2))
    pre = t < config.settle_s
    back = (config.settle_s - t[pre]) * v
    pts[pre, 0] = pose.x_m - back * math.cos(pose.heading_rad)
    pts[pre, 1] = pose.y_m - back * math.sin(pose.heading_rad)
    fwd = arc_points(pose.x_m, pose.y_m, pose.heading_rad, v, command.turn_rate,
                     config.window_s, int((~pre).sum()))
    pts[~pre] = fwd[:, :2]
    return pts


def sense_window(terrain_map: TerrainMap, path_xy: np.ndarray, whisker: DiscretizedWhisker,
                 tap_positions: Sequence[float], speed_m_s: float, config: NavConfig,
                 window_seed: int) -> tuple[FeatureVector, str]:
    """Feature vector and ground-truth majority class for one sensing window.

    ``path_xy`` holds the path position at every excitation sample (settle
    prefix first).  Each class on the map gets a fresh profile seeded from
    ``window_seed``; the base excitation at each sample is taken from the
    class under the whisker at that instant.  Points of the settle prefix
    that fall outside the map use the nearest cell; the forward part must
    stay inside.
    """
    n_settle = int(round(config.settle_s * config.sample_rate_hz))
    traversal = Traversal(speed_m_s, config.sample_rate_hz, config.settle_s + config.window_s)
    n = traversal.n_samples
    if len(path_xy) != n:
        raise ArgumentError(f"path has {len(path_xy)} points, traversal needs {n}")
    names = []
    for i, (px, py) in enumerate(path_xy):
        names.append(terrain_map.class_at(px, py, clamp=i < n_settle))
    names = np.array(names)

    dt = 1.0 / config.sample_rate_hz
    y = np.zeros(n)
    for ci, cname in enumerate(terrain_map.class_names()):
        mask = names == cname
        if not mask.any():
            continue
        terrain = terrain_map.presets[cname]
        dx = min(config.profile_dx_m, terrain.correlation_length_m / 4)
        length = max(traversal.distance_m + 2 * dx, 10 * terrain.correlation_length_m)
        profile = sample_profile(terrain, length, dx, splitmix64(window_seed, ci))
        exc = traverse_to_excitation(profile, traversal, terrain.hardness)
        y[mask] = exc.base_displacement_m[mask]

    traj = simulate_response(whisker, ExcitationSignal(dt, y))
    signal = tap_signals(traj, tap_positions)
    feature = extract_features(signal, config.settle_s, config.window_s)

    window_names = names[n - int(round(config.window_s / dt)):]
    counts = Counter(window_names.tolist())
    truth = min(counts, key=lambda c: (-counts[c], c))
    return feature, truth


@dataclass(frozen=True, eq=False)
class NavPipeline:
    """Whisker, taps and the fitted models used in the loop.

    With ``oracle=True`` the ground-truth window class replaces the readout.
    """

    whisker: DiscretizedWhisker
    tap_positions: tuple[float, ...]
    model: ReadoutModel | None = None
    detector: EigenSpaceDetector | None = None
    oracle: bool = False

    def label(self, feature: FeatureVector, truth: str) -> str:
        if self.oracle:
            return truth
        if self.model is None:
            raise ArgumentError("pipeline has neither a readout model nor oracle mode")
        return classify(self.model, feature)[0]


@dataclass(frozen=True)
class NavStep:
    step: int
    executed: str
    x_m: float
    y_m: float
    heading_rad: float
    speed_m_s: float
    sensed: bool
    true_label: str
    label: str
    novel: bool
    distance: float
    on_target: bool
    next_command: str


@dataclass(frozen=True, eq=False)
class NavTrace:
    target: str
    records: tuple[NavStep, ...]
    termination: str = "duration"

    @property
    def metrics(self) -> dict:
        return trace_metrics(self.records, self.target)

    def write_csv(self, path) -> None:
        names = list(NavStep.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for r in self.records:
                row = []
                for name in names:
                    value = getattr(r, name)
                    if isinstance(value, float):
                        value = repr(value)
                    elif isinstance(value, bool):
                        value = int(value)
                    row.append(value)
                writer.writerow(row)

    def summary(self) -> dict:
        return {"target": self.target, "termination": self.termination,
                "steps": len(self.records), **self.metrics}


def trace_metrics(records: Sequence[NavStep], target: str) -> dict:
    """On-target fraction and detection latency, from the step records alone."""
    if not records:
        return {"on_target_fraction": None, "detection_latency_steps": None, "turn_commands": 0,
                "reverse_arcs": 0}
    on_target = sum(1 for r in records if r.on_target) / len(records)
    latency = None
    first_off = next((i for i, r in enumerate(records) if r.sensed and r.true_label != target), None)
    if first_off is not None:
        react = next((i for i in range(first_off, len(records))
                      if records[i].next_command != KEEP), None)
        if react is not None:
            latency = sum(1 for r in records[first_off:react + 1] if r.sensed)
    turns = sum(1 for r in records if r.executed.startswith(TURN))
    reverses = sum(1 for r in records if r.executed == REVERSE)
    return {"on_target_fraction": on_target, "detection_latency_steps": latency,
            "turn_commands": turns, "reverse_arcs": reverses}


def read_trace_csv(path, target: str) -> NavTrace:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(NavStep(
                int(row["step"]), row["executed"], float(row["x_m"]), float(row["y_m"]),
                float(row["heading_rad"]), float(row["speed_m_s"]), bool(int(row["sensed"])),
                row["true_label"], row["label"], bool(int(row["novel"])), float(row["distance"]),
                bool(int(row["on_target"])), row["next_command"]))
    return NavTrace(target, tuple(out))


def run_episode(terrain_map: TerrainMap, start: RobotPose, config: NavConfig,
                pipeline: NavPipeline, episode_seed: int) -> NavTrace:
    """Sense, classify, control and move until the duration ends or the robot leaves the map."""
    if config.target_terrain not in terrain_map.presets:
        raise ConfigError(f"target terrain {config.target_terrain!r} is not on the map")
    if terrain_map.class_at(start.x_m, start.y_m) != config.target_terrain:
        raise ConfigError("episode must start on the target terrain")
    speed = select_speed(config.speed_table) if config.speed_table else start.speed_m_s
    pose = replace(start, speed_m_s=speed)
    n_samples = Traversal(speed, config.sample_rate_hz, config.settle_s + config.window_s).n_samples

    history: list[str] = []
    command = Command(KEEP)
    records: list[NavStep] = []
    termination = "duration"
    for step in range(config.n_steps):
        try:
            if command.kind == REVERSE:
                pts = arc_points(pose.x_m, pose.y_m, pose.heading_rad, -speed, 0.0,
                                 config.window_s, 16)
                for px, py, _ in pts:
                    terrain_map.class_at(px, py)
                pts[-1, 2] += config.reverse_arc_rad
                sensed, truth, label, novel, dist = False, "", "", False, 0.0
                next_command = Command(KEEP)
            else:
                path = _sensing_path(pose, command, config, n_samples)
                window_seed = splitmix64(episode_seed, step)
                feature, truth = sense_window(terrain_map, path, pipeline.whisker,
                                              pipeline.tap_positions, speed, config, window_seed)
                label = pipeline.label(feature, truth)
                novel, dist = (detect_novel(pipeline.detector, feature)
                               if pipeline.detector is not None else (False, 0.0))
                history.append(label)
                sensed = True
                next_command = control_step(config, history)
                pts = arc_points(pose.x_m, pose.y_m, pose.heading_rad, speed,
                                 command.turn_rate, config.window_s, 2)
        except BoundaryError:
            termination = "boundary"
            break
        x_end, y_end, th_end = pts[-1]
        pose = replace(pose, x_m=float(x_end), y_m=float(y_end),
                       heading_rad=float(math.remainder(th_end, 2 * math.pi)))
        if not terrain_map.contains(pose.x_m, pose.y_m):
            termination = "boundary"
            break
        on_target = terrain_map.class_at(pose.x_m, pose.y_m) == config.target_terrain
        records.append(NavStep(step, str(command), pose.x_m, pose.y_m, pose.heading_rad, speed,
                               sensed, truth, label, bool(novel), float(dist), on_target,
                               str(next_command)))
        command = next_command
    return NavTrace(config.target_terrain, tuple(records), termination)
