"""
Export Service.

Writers for episode artefacts: ASCII PLY meshes with per-vertex variance, utility
tables and metrics as CSV, and the JSON-lines event log.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

from backend.models.gpis import TriangleMesh
from backend.models.planning import UtilityRow
from backend.models.simulation import CycleMetrics, EpisodeEvent, EpisodeResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

UTILITY_COLUMNS = ["segment_id", "is_real", "m", "h", "d", "sigma2", "frontier", "penalty",
                   "utility", "selected"]
METRIC_COLUMNS = list(CycleMetrics.model_fields)


def write_ply(mesh: TriangleMesh, path: PathLike) -> Path:
    """
    Write an ASCII PLY mesh; the vertex ``quality`` property holds the GPIS variance.

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        "property float quality",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for vertex, variance in zip(mesh.vertices, mesh.variances):
        lines.append(f"{vertex[0]:.6f} {vertex[1]:.6f} {vertex[2]:.6f} {variance:.6e}")
    for face in mesh.faces:
        lines.append(f"3 {face[0]} {face[1]} {face[2]}")
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"✅ Wrote mesh ({len(mesh.vertices)} vertices) to {path}")
    return path


def write_utilities(rows: Sequence[UtilityRow], path: PathLike) -> Path:
    """One row per candidate segment; a header-only file for an empty table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=UTILITY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump())
    return path


def write_metrics(metrics: Iterable[CycleMetrics], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in metrics:
            writer.writerow(row.model_dump())
    return path


def write_events(events: Iterable[EpisodeEvent], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for event in events:
            f.write(json.dumps(event.model_dump(mode="json"), sort_keys=True) + "\n")
    return path


def write_episode(result: EpisodeResult, output_dir: PathLike) -> List[Path]:
    """
    Write metrics.csv, events.jsonl and utilities_<cycle>.csv under ``output_dir``.

    Returns:
        List[Path]: Every file written
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_metrics(result.metrics, out / "metrics.csv"),
        write_events(result.events, out / "events.jsonl"),
    ]
    for cycle, rows in enumerate(result.utility_tables):
        written.append(write_utilities(rows, out / f"utilities_{cycle:03d}.csv"))
    logger.info(f"✅ Wrote {len(written)} episode files to {out}")
    return written
