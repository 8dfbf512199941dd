"""Reproducible experiment driver.

Every artifact of a run lives under ``<out>/<config hash>/``.  Stages run in
the fixed order gen, train, eval, detect, mixture, navigate; each reads its
inputs from that directory, so stages may be split across invocations.  A
stage whose outputs already exist is skipped.  Files are written to a
temporary name and renamed into place.

Random streams are derived from the master seed with SplitMix64, one
stream id per stage input, so every artifact is reproducible on its own.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig, canonical_json, config_hash
from .errors import (
    ArtifactIOError,
    NumericalError,
    StageDependencyError,
    UsageError,
)
from .nav import NavPipeline, run_episode, select_speed, write_map
from .novelty import EigenSpaceDetector, fit_detector, fit_roughness, r_squared
from .readout import (
    FeatureVector,
    ReadoutModel,
    evaluate,
    feature_matrix,
    featurize_stream,
    train_readout,
)
from .semilabel import (
    CentroidBank,
    estimate_mixture,
    process_stream,
    simplex_least_squares,
)
from .terrain import LabeledDataset, Record, TerrainClass, Traversal, iter_records, splitmix64
from .whisker import DiscretizedWhisker, build_whisker

STAGES = ("gen", "train", "eval", "detect", "mixture", "navigate")

# stream ids fed to splitmix64(master_seed, id)
STREAM_GEN = 1000
STREAM_DET_TRAIN = 2000
STREAM_DET_HOLDOUT = 2001
STREAM_DET_NOVEL = 2002
STREAM_ROUGHNESS = 3000
STREAM_MIXTURE_NOISE = 4000
STREAM_NAV_TRAIN = 5000

NOT_RUN = "not run"


# -- file helpers -------------------------------------------------------------

def atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> None:
    atomic_write(path, dumps_json(obj))


def read_json(path: Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def feature_csv(dataset: LabeledDataset) -> str:
    """Header: one ``tap_<s>`` column per tap, then label, speed, sigma, seed, split."""
    taps = dataset.records[0].data.tap_positions
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"tap_{s!r}" for s in taps]
                    + ["label", "speed_m_s", "roughness_sigma_m", "seed", "split"])
    for r in dataset.records:
        writer.writerow([_fmt(v) for v in r.data.values]
                        + [r.label, _fmt(r.speed_m_s), _fmt(r.roughness_sigma_m), r.seed, r.split])
    return buf.getvalue()


def read_feature_csv(path: Path, class_names: Sequence[str] | None = None,
                     window_s: float = 0.0) -> LabeledDataset:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    header, body = rows[0], rows[1:]
    n_taps = sum(1 for h in header if h.startswith("tap_"))
    taps = tuple(float(h[4:]) for h in header[:n_taps])
    records = []
    for row in body:
        fv = FeatureVector(np.array([float(v) for v in row[:n_taps]]), taps, window_s)
        label, speed, sigma, seed, split = row[n_taps:]
        records.append(Record(fv, label, float(speed), float(sigma), int(seed), split))
    names = tuple(class_names) if class_names else tuple(dict.fromkeys(r.label for r in records))
    return LabeledDataset(tuple(records), names)


def speed_tag(speed: float) -> str:
    return f"v{speed:.3f}"


# -- run context --------------------------------------------------------------

class Run:
    """Output directory, derived objects and seeds for one config."""

    def __init__(self, config: ExperimentConfig, out_root):
        self.config = config
        self.hash = config_hash(config)
        self.dir = Path(out_root) / self.hash
        self._whisker: DiscretizedWhisker | None = None

    @property
    def whisker(self) -> DiscretizedWhisker:
        if self._whisker is None:
            w = self.config.whisker
            self._whisker = build_whisker(w.geometry(), w.material())
        return self._whisker

    def path(self, name: str) -> Path:
        return self.dir / name

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise StageDependencyError(f"missing upstream artifact {p}")
        return p

    def seed(self, stream: int) -> int:
        return splitmix64(self.config.master_seed, stream)

    def features(self, classes: Sequence[TerrainClass], speed: float, trials: int, stream: int,
                 train_fraction: float, settle_s: float, window_s: float) -> LabeledDataset:
        s = self.config.sampling
        traversal = Traversal(speed, s.sample_rate_hz, settle_s + window_s)
        records = iter_records(classes, [traversal], trials, self.seed(stream),
                               train_fraction=train_fraction, dx_m=s.profile_dx_m)
        return featurize_stream(records, [c.name for c in classes], self.whisker,
                                self.config.whisker.tap_positions, settle_s, window_s,
                                train_fraction=train_fraction)

    def class_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.config.presets)

    def known_presets(self) -> tuple[TerrainClass, ...]:
        return tuple(p for p in self.config.presets if p.name != self.config.detector.novel_class)


# -- stages -------------------------------------------------------------------

def _stage_outputs(run: Run, stage: str) -> list[str]:
    cfg = run.config
    speeds = cfg.classification.speeds_m_s
    if stage == "gen":
        return [f"features_{speed_tag(v)}.csv" for v in speeds] + ["presets.json"]
    if stage == "train":
        return [f"model_{speed_tag(v)}.json" for v in speeds]
    if stage == "eval":
        return ["eval.json", "speed_accuracy.csv"]
    if stage == "detect":
        return ["detector_train.csv", "detector_holdout.csv", "detector_novel.csv",
                "detector.json", "roughness_features.csv", "roughness_model.json", "detect.json"]
    if stage == "mixture":
        return ["mixture_model.json", "events.jsonl", "centroids.json", "mixture.json"]
    if stage == "navigate":
        return ["map.txt", "nav_features.csv", "nav_model.json", "nav_detector.json",
                "nav_trace.csv", "nav_trace_oracle.csv", "nav_summary.json"]
    raise UsageError(f"unknown stage {stage!r}")


def stage_gen(run: Run) -> None:
    cfg = run.config
    s, c = cfg.sampling, cfg.classification
    for i, v in enumerate(c.speeds_m_s):
        ds = run.features(cfg.presets, v, c.trials_per_class, STREAM_GEN + i, c.train_fraction,
                          s.settle_s, s.window_s)
        atomic_write(run.path(f"features_{speed_tag(v)}.csv"), feature_csv(ds))
    write_json(run.path("presets.json"), [p.to_dict() for p in cfg.presets])


def stage_train(run: Run) -> None:
    cfg = run.config
    for v in cfg.classification.speeds_m_s:
        ds = read_feature_csv(run.require(f"features_{speed_tag(v)}.csv"), run.class_names(),
                              cfg.sampling.window_s)
        model = train_readout(ds.split("train"), cfg.classification.ridge_lambda)
        write_json(run.path(f"model_{speed_tag(v)}.json"), model.to_dict())


def stage_eval(run: Run) -> None:
    cfg = run.config
    rows, confusion = [], {}
    for v in cfg.classification.speeds_m_s:
        tag = speed_tag(v)
        ds = read_feature_csv(run.require(f"features_{tag}.csv"), run.class_names(),
                              cfg.sampling.window_s)
        model = ReadoutModel.from_dict(read_json(run.require(f"model_{tag}.json")))
        cm = evaluate(model, ds.split("test"))
        confusion[tag] = cm.to_dict()
        rows.append({"speed_m_s": v, "accuracy": cm.accuracy, "n_test": cm.total})
    table = {r["speed_m_s"]: r["accuracy"] for r in rows}
    best = select_speed(table)
    write_json(run.path("eval.json"), {"speed_accuracy": rows, "confusion": confusion,
                                       "best_speed_m_s": best})
    atomic_write(run.path("speed_accuracy.csv"), speed_accuracy_csv(rows))


def speed_accuracy_csv(rows: Sequence[dict]) -> str:
    for r in rows:
        if not 0.0 <= r["accuracy"] <= 1.0:
            raise NumericalError(f"accuracy {r['accuracy']} at {r['speed_m_s']} m/s is outside [0, 1]")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["speed_m_s", "accuracy", "n_test"])
    for r in rows:
        writer.writerow([_fmt(r["speed_m_s"]), _fmt(r["accuracy"]), r["n_test"]])
    return buf.getvalue()


def _roughness_levels(cfg: ExperimentConfig) -> tuple[TerrainClass, ...]:
    base = cfg.preset(cfg.roughness.base_class)
    return tuple(replace(base, name=f"{base.name}_s{k}", roughness_sigma_m=sig)
                 for k, sig in enumerate(cfg.roughness.sigmas_m))


def stage_detect(run: Run) -> None:
    cfg = run.config
    s, d = cfg.sampling, cfg.detector
    known = run.known_presets()
    novel = (cfg.preset(d.novel_class),)

    train = run.features(known, d.speed_m_s, d.train_per_class, STREAM_DET_TRAIN, 1.0,
                         s.settle_s, s.window_s)
    per_class = -(-d.holdout_samples // len(known))
    holdout = run.features(known, d.speed_m_s, per_class, STREAM_DET_HOLDOUT, 0.0,
                           s.settle_s, s.window_s)
    novel_ds = run.features(novel, d.speed_m_s, d.novel_samples, STREAM_DET_NOVEL, 0.0,
                            s.settle_s, s.window_s)
    detector = fit_detector(train, d.d, d.q)
    d_hold = detector.distances(feature_matrix(holdout))
    d_novel = detector.distances(feature_matrix(novel_ds))

    r = cfg.roughness
    levels = _roughness_levels(cfg)
    rough = run.features(levels, r.speed_m_s, r.trials_per_level, STREAM_ROUGHNESS,
                         r.train_fraction, s.settle_s, s.window_s)
    regressor = fit_roughness(rough.split("train"), r.ridge_lambda)
    summary_r = {}
    for split in ("train", "test"):
        part = rough.split(split)
        y = np.array([rec.roughness_sigma_m for rec in part.records])
        pred = regressor.predict(feature_matrix(part))
        summary_r[split] = {"r_squared": r_squared(y, pred),
                            "rmse_m": float(np.sqrt(np.mean((y - pred) ** 2))),
                            "mae_m": float(np.mean(np.abs(y - pred))), "n": len(part)}

    atomic_write(run.path("detector_train.csv"), feature_csv(train))
    atomic_write(run.path("detector_holdout.csv"), feature_csv(holdout))
    atomic_write(run.path("detector_novel.csv"), feature_csv(novel_ds))
    write_json(run.path("detector.json"), detector.to_dict())
    atomic_write(run.path("roughness_features.csv"), feature_csv(rough))
    write_json(run.path("roughness_model.json"), regressor.to_dict())
    write_json(run.path("detect.json"), {
        "detector": {
            "d": d.d, "q": d.q, "threshold_squared": detector.threshold,
            "eigenvalues": detector.eigenvalues.tolist(),
            "n_train": len(train),
            "n_holdout": len(holdout),
            "false_positive_rate": float(np.mean(d_hold**2 > detector.threshold)),
            "novel_class": d.novel_class,
            "n_novel": len(novel_ds),
            "novel_recall": float(np.mean(d_novel**2 > detector.threshold)),
        },
        "roughness": {"base_class": r.base_class, "sigmas_m": list(r.sigmas_m),
                      "metric": "r_squared", **summary_r},
    })


def _load_detector_sets(run: Run):
    cfg = run.config
    names = tuple(p.name for p in run.known_presets())
    w = cfg.sampling.window_s
    train = read_feature_csv(run.require("detector_train.csv"), names, w)
    holdout = read_feature_csv(run.require("detector_holdout.csv"), names, w)
    novel = read_feature_csv(run.require("detector_novel.csv"), (cfg.detector.novel_class,), w)
    detector = EigenSpaceDetector.from_dict(read_json(run.require("detector.json")))
    return train, holdout, novel, detector


def planted_recovery(bank: CentroidBank, planted: Sequence[tuple[str, float]], snr_db: float,
                     trials: int, seed: int) -> dict:
    """Noiseless and noisy recovery of a planted convex combination of bank centroids.

    Noise is white Gaussian on every feature entry with power
    ``mean(f**2) / 10**(snr_db / 10)``.
    """
    names = bank.names
    truth = np.zeros(len(names))
    for name, weight in planted:
        truth[names.index(name)] = weight
    C = np.stack([e.centroid for e in bank.entries], axis=1)
    f = C @ truth
    clean = estimate_mixture(bank, f)
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(float(np.mean(f**2)) / 10 ** (snr_db / 10))
    errors = []
    for _ in range(trials):
        w, _, _ = simplex_least_squares(C, f + rng.normal(0.0, sigma, len(f)))
        errors.append(float(np.abs(w - truth).sum()))
    errors = np.array(errors)
    return {
        "planted": {n: w for n, w in planted},
        "noiseless": {"weights": clean.as_dict(), "l1_error": float(np.abs(clean.weights - truth).sum()),
                      "residual_norm": clean.residual_norm, "kkt_residual": clean.kkt_residual,
                      "description": clean.describe()},
        "noisy": {"snr_db": snr_db, "trials": trials, "mean_l1_error": float(errors.mean()),
                  "median_l1_error": float(np.median(errors)), "max_l1_error": float(errors.max())},
        "bank_singular_values": np.linalg.svd(np.vstack([C, np.ones(len(names))]),
                                              compute_uv=False).tolist(),
    }


def stage_mixture(run: Run) -> None:
    cfg = run.config
    m = cfg.mixture
    train, holdout, novel, detector = _load_detector_sets(run)
    bank = CentroidBank.from_dataset(train)
    recovery = planted_recovery(bank, m.planted, m.snr_db, m.trials, run.seed(STREAM_MIXTURE_NOISE))

    model = train_readout(train, cfg.classification.ridge_lambda)
    # interleave known and novel samples, known first
    stride = max(1, len(holdout) // m.stream_samples)
    stream = []
    for i in range(m.stream_samples):
        stream.append(holdout.records[(i * stride) % len(holdout)].data)
        stream.append(novel.records[i].data)
    records, grown = process_stream(detector, bank, model, stream, m.merge_radius)

    minted = [e for e in grown.entries if e.provenance != "supervised"]
    truth = [i % 2 == 1 for i in range(len(stream))]
    flagged = [r.novel for r in records]
    write_json(run.path("mixture_model.json"), model.to_dict())
    atomic_write(run.path("events.jsonl"), "".join(
        json.dumps(r.to_dict(), sort_keys=True, allow_nan=False) + "\n" for r in records))
    write_json(run.path("centroids.json"), grown.to_dict())
    write_json(run.path("mixture.json"), {
        "recovery": recovery,
        "stream": {
            "n_samples": len(stream),
            "novel_class": cfg.detector.novel_class,
            "novel_flagged": int(sum(f and t for f, t in zip(flagged, truth))),
            "n_novel": int(sum(truth)),
            "known_flagged": int(sum(f and not t for f, t in zip(flagged, truth))),
            "minted": [{"name": e.name, "count": e.count,
                        "description": estimate_mixture(bank, e.centroid).describe()}
                       for e in minted],
        },
    })


def stage_navigate(run: Run) -> None:
    cfg = run.config
    n = cfg.navigation
    speed_table = None
    if n.adapt_speed:
        rows = read_json(run.require("eval.json"))["speed_accuracy"]
        speed_table = {r["speed_m_s"]: r["accuracy"] for r in rows}
    speed = select_speed(speed_table) if speed_table else n.speed_m_s

    classes = (cfg.preset(n.target), cfg.preset(n.other))
    ds = run.features(classes, speed, n.train_trials, STREAM_NAV_TRAIN, 0.8, n.settle_s, n.window_s)
    model = train_readout(ds.split("train"), cfg.classification.ridge_lambda)
    test_acc = evaluate(model, ds.split("test")).accuracy
    detector = fit_detector(ds.split("train"), min(cfg.detector.d, len(cfg.whisker.tap_positions)),
                            cfg.detector.q)

    terrain_map = cfg.nav_map()
    start = cfg.nav_start(speed)
    nav_cfg = cfg.nav_config()
    taps = tuple(sorted(set(cfg.whisker.tap_positions)))
    trained = run_episode(terrain_map, start, nav_cfg, NavPipeline(run.whisker, taps, model, detector),
                          n.episode_seed)
    oracle = run_episode(terrain_map, start, nav_cfg, NavPipeline(run.whisker, taps, oracle=True),
                         n.episode_seed)

    with tempfile.TemporaryDirectory(dir=run.dir) as tmp:
        write_map(terrain_map, Path(tmp) / "map.txt")
        trained.write_csv(Path(tmp) / "nav_trace.csv")
        oracle.write_csv(Path(tmp) / "nav_trace_oracle.csv")
        for name in ("map.txt", "nav_trace.csv", "nav_trace_oracle.csv"):
            atomic_write(run.path(name), (Path(tmp) / name).read_bytes())
    atomic_write(run.path("nav_features.csv"), feature_csv(ds))
    write_json(run.path("nav_model.json"), model.to_dict())
    write_json(run.path("nav_detector.json"), detector.to_dict())
    write_json(run.path("nav_summary.json"), {
        "speed_m_s": speed,
        "speed_table": None if speed_table is None else
        [{"speed_m_s": v, "accuracy": a} for v, a in speed_table.items()],
        "classifier_test_accuracy": test_acc,
        "k": n.k,
        "trained": trained.summary(),
        "oracle": oracle.summary(),
    })


_STAGE_FUNCS = {"gen": stage_gen, "train": stage_train, "eval": stage_eval,
                "detect": stage_detect, "mixture": stage_mixture, "navigate": stage_navigate}


# -- report -------------------------------------------------------------------

@dataclass(frozen=True)
class RunReport:
    config_hash: str
    master_seed: int
    sections: dict
    stage_status: dict = field(default_factory=dict)
    timings_s: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Deterministic content; wall-clock timings are kept out."""
        return {"config_hash": self.config_hash, "master_seed": self.master_seed,
                "sections": self.sections}


def build_report(run: Run, stage_status: dict | None = None,
                 timings: dict | None = None) -> RunReport:
    """Collect every reported number from the artifacts on disk."""
    sections: dict = {}
    if run.path("eval.json").exists():
        ev = read_json(run.path("eval.json"))
        sections["classification"] = {
            "speed_accuracy": ev["speed_accuracy"], "best_speed_m_s": ev["best_speed_m_s"],
            "confusion": ev["confusion"], "source": "eval.json"}
    else:
        sections["classification"] = NOT_RUN
    if run.path("detect.json").exists():
        det = read_json(run.path("detect.json"))
        sections["detector"] = {**det["detector"], "source": "detect.json"}
        sections["roughness"] = {
            **det["roughness"], "source": "detect.json",
            "note": ("held-out R^2 of the regressed roughness sigma; a coefficient of "
                     "determination, not a classification success rate")}
    else:
        sections["detector"] = sections["roughness"] = NOT_RUN
    if run.path("mixture.json").exists():
        sections["mixture"] = {**read_json(run.path("mixture.json")), "source": "mixture.json"}
    else:
        sections["mixture"] = NOT_RUN
    if run.path("nav_summary.json").exists():
        sections["navigation"] = {**read_json(run.path("nav_summary.json")),
                                  "source": "nav_summary.json"}
    else:
        sections["navigation"] = NOT_RUN
    return RunReport(run.hash, run.config.master_seed, sections, dict(stage_status or {}),
                     dict(timings or {}))


def _validate_report(report: RunReport) -> None:
    cls = report.sections.get("classification")
    if isinstance(cls, dict):
        speed_accuracy_csv(cls["speed_accuracy"])  # range check
        for tag, cm in cls["confusion"].items():
            if not 0.0 <= cm["accuracy"] <= 1.0:
                raise NumericalError(f"confusion accuracy for {tag} is outside [0, 1]")


def _num(x, digits=4) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return f"{x:.{digits}g}"
    return str(x)


def report_text(report: RunReport) -> str:
    s = report.sections
    lines = ["whisker-rc run report", f"config hash: {report.config_hash}",
             f"master seed: {report.master_seed}", ""]

    lines.append("[classification]")
    cls = s["classification"]
    if cls == NOT_RUN:
        lines.append(f"  {NOT_RUN}")
    else:
        lines.append("  speed_m_s  accuracy  n_test")
        for r in cls["speed_accuracy"]:
            lines.append(f"  {r['speed_m_s']:<9}  {r['accuracy']:.4f}    {r['n_test']}")
        lines.append(f"  best speed: {cls['best_speed_m_s']} m/s")
        tag = speed_tag(cls["best_speed_m_s"])
        cm = cls["confusion"][tag]
        names = cm["class_names"]
        lines.append(f"  confusion at {cls['best_speed_m_s']} m/s (rows true, cols predicted):")
        width = max(len(n) for n in names) + 1
        lines.append("  " + " " * width + " ".join(f"{n[:6]:>6}" for n in names))
        for n, row in zip(names, cm["counts"]):
            lines.append(f"  {n:<{width}}" + " ".join(f"{c:>6}" for c in row))
    lines.append("")

    lines.append("[detector]")
    det = s["detector"]
    if det == NOT_RUN:
        lines.append(f"  {NOT_RUN}")
    else:
        lines.append(f"  d = {det['d']}, q = {det['q']}, threshold (squared) = {_num(det['threshold_squared'])}")
        lines.append(f"  known samples flagged as novel: {_num(det['false_positive_rate'])} "
                     f"of {det['n_holdout']} held out")
        lines.append(f"  {det['novel_class']} samples flagged as novel: "
                     f"{_num(det['novel_recall'])} of {det['n_novel']}")
    lines.append("")

    lines.append("[roughness]")
    rough = s["roughness"]
    if rough == NOT_RUN:
        lines.append(f"  {NOT_RUN}")
    else:
        lines.append(f"  base class {rough['base_class']}, {len(rough['sigmas_m'])} sigma levels")
        lines.append(f"  held-out R^2 = {_num(rough['test']['r_squared'])}, "
                     f"MAE = {_num(rough['test']['mae_m'])} m, RMSE = {_num(rough['test']['rmse_m'])} m")
        lines.append(f"  note: {rough['note']}")
    lines.append("")

    lines.append("[mixture]")
    mix = s["mixture"]
    if mix == NOT_RUN:
        lines.append(f"  {NOT_RUN}")
    else:
        rec = mix["recovery"]
        lines.append(f"  planted {rec['planted']}")
        lines.append(f"  noiseless: {rec['noiseless']['description']} "
                     f"(L1 error {_num(rec['noiseless']['l1_error'])})")
        noisy = rec["noisy"]
        lines.append(f"  {noisy['snr_db']} dB SNR, {noisy['trials']} trials: mean L1 error "
                     f"{_num(noisy['mean_l1_error'])}")
        st = mix["stream"]
        lines.append(f"  stream: {st['novel_flagged']}/{st['n_novel']} {st['novel_class']} samples "
                     f"flagged, {st['known_flagged']} known samples flagged")
        for e in st["minted"]:
            lines.append(f"  minted {e['name']} ({e['count']} samples) ~ {e['description']}")
    lines.append("")

    lines.append("[navigation]")
    nav = s["navigation"]
    if nav == NOT_RUN:
        lines.append(f"  {NOT_RUN}")
    else:
        lines.append(f"  speed {nav['speed_m_s']} m/s, window classifier test accuracy "
                     f"{_num(nav['classifier_test_accuracy'])}")
        for key in ("trained", "oracle"):
            t = nav[key]
            lines.append(f"  {key}: on-target {_num(t['on_target_fraction'])}, detection latency "
                         f"{_num(t['detection_latency_steps'])} windows, {t['steps']} steps, "
                         f"ended by {t['termination']}")
    lines.append("")
    return "\n".join(lines)


def _metrics_rows(report: RunReport) -> list[tuple[str, str, str]]:
    rows = [("run", "config_hash", report.config_hash), ("run", "master_seed", str(report.master_seed))]

    def walk(prefix, section, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, section, obj[k])
        elif isinstance(obj, (int, float, str)) or obj is None:
            rows.append((section, prefix, _fmt(obj) if isinstance(obj, float) else str(obj)))

    for name, sec in report.sections.items():
        if sec == NOT_RUN:
            rows.append((name, "status", NOT_RUN))
        else:
            walk("", name, {k: v for k, v in sec.items() if k not in ("confusion", "speed_accuracy")})
    return rows


def emit_report(report: RunReport, fmt: str, out_dir) -> list[Path]:
    """Write the report in one format; returns the files written."""
    _validate_report(report)
    out = Path(out_dir)
    if fmt == "json":
        path = out / "report.json"
        write_json(path, report.to_dict())
        return [path]
    if fmt == "text":
        path = out / "report.txt"
        atomic_write(path, report_text(report))
        return [path]
    if fmt == "csv":
        written = []
        cls = report.sections["classification"]
        if cls != NOT_RUN:
            path = out / "report_speed_accuracy.csv"
            atomic_write(path, speed_accuracy_csv(cls["speed_accuracy"]))
            written.append(path)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["section", "metric", "value"])
        writer.writerows(_metrics_rows(report))
        path = out / "report_metrics.csv"
        atomic_write(path, buf.getvalue())
        return written + [path]
    raise UsageError(f"unknown report format {fmt!r}")


# -- driver -------------------------------------------------------------------

def parse_stages(stages: Iterable[str]) -> list[str]:
    requested = list(stages)
    unknown = [s for s in requested if s not in STAGES]
    if unknown:
        raise UsageError(f"unknown stage(s) {unknown}; choose from {list(STAGES)}")
    return [s for s in STAGES if s in requested]


def run_config(config: ExperimentConfig, stages: Iterable[str], out_root) -> RunReport:
    """Run the requested stages in dependency order and report from the artifacts."""
    ordered = parse_stages(stages)
    run = Run(config, out_root)
    try:
        run.dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(f"cannot create {run.dir}: {exc}") from exc
    config_text = canonical_json(config.to_dict()) + "\n"
    if not run.path("config.json").exists():
        atomic_write(run.path("config.json"), config_text)

    status, timings = {}, {}
    for stage in ordered:
        outputs = _stage_outputs(run, stage)
        if all(run.path(o).exists() for o in outputs):
            status[stage] = "cached"
            continue
        t0 = time.perf_counter()
        _STAGE_FUNCS[stage](run)
        timings[stage] = time.perf_counter() - t0
        status[stage] = "ran"
    if timings:
        previous = read_json(run.path("timings.json")) if run.path("timings.json").exists() else {}
        write_json(run.path("timings.json"), {**previous, **timings})
    return build_report(run, status, timings)
