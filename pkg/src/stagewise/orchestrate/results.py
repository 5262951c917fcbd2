"""Result files: learning-curve CSVs, plot series, ablation tables and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
import time
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from stagewise.orchestrate.config import ExperimentConfig
from stagewise.orchestrate.training import AblationRow, CurvePoint

CURVE_COLUMNS = ("method", "task", "seed", "episode", "success", "sigma", "mode")
SERIES_COLUMNS = ("method", "task", "sigma", "mode", "episode", "mean", "std", "n")
ABLATION_COLUMNS = ("method", "task", "sigma", "mode", "mean", "std", "n_seeds")
DECIMALS = 6  # every float column is written with exactly this many decimals


def _f(x: float) -> str:
    return f"{x:.{DECIMALS}f}"


def emit_results(points: Iterable[CurvePoint], path) -> Path:
    """Write curve points as CSV; an empty input yields a header-only file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in points:
            w.writerow([p.method, p.task, p.seed, p.episode, _f(p.success), _f(p.sigma), p.mode])
    return path


def load_results(path) -> list[CurvePoint]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != CURVE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {r.fieldnames}")
        return [CurvePoint(row["method"], row["task"], int(row["seed"]), int(row["episode"]),
                           float(row["success"]), float(row["sigma"]), row["mode"]) for row in r]


def aggregate(points: Sequence[CurvePoint]) -> list[dict]:
    """Mean and population std across seeds at each (method, task, sigma, mode, episode)."""
    groups: dict[tuple, list[float]] = defaultdict(list)
    for p in points:
        groups[(p.method, p.task, p.sigma, p.mode, p.episode)].append(p.success)
    out = []
    for key in sorted(groups):
        v = np.array(groups[key])
        out.append(dict(zip(SERIES_COLUMNS, (*key, float(v.mean()), float(v.std()), len(v)))))
    return out


def emit_series(points: Sequence[CurvePoint], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for row in aggregate(points):
            w.writerow([row["method"], row["task"], _f(row["sigma"]), row["mode"], row["episode"],
                        _f(row["mean"]), _f(row["std"]), row["n"]])
    return path


def emit_svg(points: Sequence[CurvePoint], path, width: int = 480, height: int = 300) -> Path:
    """Mean learning curves as SVG polylines, one per (method, sigma, mode)."""
    rows = aggregate(points)
    lines: dict[tuple, list[tuple[int, float]]] = defaultdict(list)
    for r in rows:
        lines[(r["method"], r["task"], r["sigma"], r["mode"])].append((r["episode"], r["mean"]))
    max_ep = max((r["episode"] for r in rows), default=1) or 1
    pad = 40
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

    def xy(ep, s):
        return pad + (width - 2 * pad) * ep / max_ep, height - pad - (height - 2 * pad) * s

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for i, (key, pts) in enumerate(sorted(lines.items())):
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in (xy(e, s) for e, s in pts))
        color = palette[i % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        label = f"{key[0]} {key[1]} sigma={key[2]:g} {key[3]}"
        parts.append(f'<text x="{pad + 5}" y="{pad + 14 * (i + 1)}" font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


def emit_ablation(rows: Sequence[AblationRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.task, _f(r.sigma), r.mode, _f(r.mean), _f(r.std), r.n_seeds])
    return path


def source_revision() -> str:
    """Git commit when available, plus a digest of the package sources."""
    root = Path(__file__).resolve().parents[1]
    h = hashlib.sha256()
    for f in sorted(root.rglob("*")):
        if f.is_file() and f.suffix in (".py", ".txt", ".tsv"):
            h.update(str(f.relative_to(root)).encode())
            h.update(f.read_bytes())
    digest = "sha256:" + h.hexdigest()[:16]
    try:
        rev = subprocess.run(["git", "rev-parse", "HEAD"], cwd=root, capture_output=True, text=True,
                             timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{rev} {digest}".strip()


def write_manifest(cfg: ExperimentConfig, path, artifacts: Sequence[str] = ()) -> Path:
    """Write the run manifest; refuses to overwrite an existing one."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "created_unix": time.time(),
        "artifacts": list(artifacts),
        "source_revision": source_revision(),
    }
    with path.open("x", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
