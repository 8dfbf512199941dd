"""Report figures rendered from persisted artifacts (Agg backend, PNG)."""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import (  # noqa: E402
    NOT_RUN,
    Run,
    RunReport,
    atomic_write,
    read_feature_csv,
    read_json,
    speed_tag,
)
from .nav import read_map, read_trace_csv  # noqa: E402
from .novelty import EigenSpaceDetector  # noqa: E402
from .readout import feature_matrix  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.bbox": "tight",
}


def _save(fig, path: Path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return path


def speed_accuracy_figure(section: dict, path: Path) -> Path:
    rows = section["speed_accuracy"]
    v = [r["speed_m_s"] for r in rows]
    a = [r["accuracy"] for r in rows]
    fig, ax = plt.subplots()
    ax.plot(v, a, "o-", color="C0")
    ax.axvline(section["best_speed_m_s"], color="0.5", ls="--", lw=0.8)
    ax.set_xlabel("traversal speed (m/s)")
    ax.set_ylabel("held-out accuracy")
    ax.set_ylim(min(0.5, min(a) - 0.05), 1.01)
    return _save(fig, path)


def confusion_figure(section: dict, path: Path) -> Path:
    cm = section["confusion"][speed_tag(section["best_speed_m_s"])]
    counts = np.array(cm["counts"])
    names = cm["class_names"]
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    ax.imshow(counts, cmap="Blues")
    ax.grid(False)
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=7,
                    color="white" if counts[i, j] > counts.max() / 2 else "black")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"{section['best_speed_m_s']} m/s", fontsize=9)
    return _save(fig, path)


def detector_figure(run: Run, path: Path) -> Path:
    detector = EigenSpaceDetector.from_dict(read_json(run.path("detector.json")))
    held = detector.distances(feature_matrix(read_feature_csv(run.path("detector_holdout.csv"))))
    novel = detector.distances(feature_matrix(read_feature_csv(run.path("detector_novel.csv"))))
    fig, ax = plt.subplots()
    bins = np.logspace(np.log10(max(min(held.min(), novel.min()), 1e-3)),
                       np.log10(max(held.max(), novel.max())), 60)
    ax.hist(held, bins=bins, alpha=0.6, label="known (held out)", color="C0")
    ax.hist(novel, bins=bins, alpha=0.6, label=run.config.detector.novel_class, color="C3")
    ax.axvline(np.sqrt(detector.threshold), color="k", lw=0.8, ls="--", label="threshold")
    ax.set_xscale("log")
    ax.set_xlabel("eigenspace Mahalanobis distance")
    ax.set_ylabel("count")
    ax.legend(frameon=False)
    return _save(fig, path)


def navigation_figure(run: Run, path: Path) -> Path:
    terrain_map = read_map(run.path("map.txt"))
    target = run.config.navigation.target
    grid = np.array([[c == target for c in row] for row in terrain_map.grid], dtype=float)
    w, h = terrain_map.extent
    fig, ax = plt.subplots(figsize=(3.6, 5.0))
    ax.imshow(grid, origin="lower", extent=(0, w, 0, h), cmap="Greens", vmin=-0.5, vmax=1.5,
              interpolation="nearest")
    ax.grid(False)
    for name, style in (("nav_trace_oracle.csv", dict(color="0.4", ls="--", label="oracle")),
                        ("nav_trace.csv", dict(color="C1", label="trained"))):
        trace = read_trace_csv(run.path(name), target)
        xs = [run.config.navigation.start_x_m] + [r.x_m for r in trace.records]
        ys = [run.config.navigation.start_y_m] + [r.y_m for r in trace.records]
        ax.plot(xs, ys, lw=1.2, **style)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.legend(frameon=False, loc="upper left")
    return _save(fig, path)


def render_figures(run: Run, report: RunReport) -> list[Path]:
    """All figures whose source artifacts exist."""
    out = []
    with plt.rc_context(STYLE):
        s = report.sections
        if s["classification"] != NOT_RUN:
            out.append(speed_accuracy_figure(s["classification"], run.path("fig_speed_accuracy.png")))
            out.append(confusion_figure(s["classification"], run.path("fig_confusion.png")))
        if s["detector"] != NOT_RUN:
            out.append(detector_figure(run, run.path("fig_detector_distances.png")))
        if s["navigation"] != NOT_RUN:
            out.append(navigation_figure(run, run.path("fig_navigation.png")))
    return out
