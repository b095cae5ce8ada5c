"""
Tests for episode artefact writers.
"""

import csv
import json

import numpy as np

from backend.models.gpis import TriangleMesh
from backend.models.planning import UtilityRow
from backend.models.simulation import CycleMetrics, EpisodeEvent, EpisodeResult
from backend.services.export_service import (
    METRIC_COLUMNS,
    UTILITY_COLUMNS,
    write_episode,
    write_ply,
    write_utilities,
)


def read_rows(path):
    with path.open(newline="") as f:
        return list(csv.DictReader(f))


class TestPly:
    """ASCII PLY output."""

    def test_header_counts(self, tmp_path):
        mesh = TriangleMesh(
            vertices=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            faces=np.array([[0, 1, 2]]),
            variances=np.array([0.1, 0.2, 0.3]),
        )
        path = write_ply(mesh, tmp_path / "mesh.ply")
        lines = path.read_text().splitlines()
        assert lines[0] == "ply"
        assert "element vertex 3" in lines
        assert "element face 1" in lines
        assert "property float quality" in lines
        assert lines[-1] == "3 0 1 2"
        assert len(lines) == lines.index("end_header") + 1 + 3 + 1

    def test_empty_mesh(self, tmp_path):
        lines = write_ply(TriangleMesh(), tmp_path / "empty.ply").read_text().splitlines()
        assert "element vertex 0" in lines
        assert lines[-1] == "end_header"


class TestTables:
    """CSV and JSON-lines writers."""

    def test_empty_utility_table_is_header_only(self, tmp_path):
        path = write_utilities([], tmp_path / "u.csv")
        assert path.read_text().strip() == ",".join(UTILITY_COLUMNS)

    def test_episode_file_set(self, tmp_path):
        row = UtilityRow(
            segment_id=0, is_real=True, m=0.5, h=0.1, d=float("inf"), sigma2=0.01,
            frontier=0.2, penalty=0.0, utility=0.0,
        )
        result = EpisodeResult(
            metrics=[
                CycleMetrics(cycle=0, picks=1, remaining=2, coverage=40.0, travel=1.5,
                             collisions=0, nbv=0, points=100)
            ],
            events=[
                EpisodeEvent(cycle=0, action="scan", pose=(0.0, -1.3, 1.57), counts={"added": 5}),
                EpisodeEvent(cycle=0, action="pick", pose=(0.0, -0.5, 1.57)),
            ],
            utility_tables=[[row], []],
            initial_objects=3,
        )
        written = write_episode(result, tmp_path / "run")
        names = sorted(p.name for p in written)
        assert names == ["events.jsonl", "metrics.csv", "utilities_000.csv", "utilities_001.csv"]

        metrics = read_rows(tmp_path / "run" / "metrics.csv")
        assert list(metrics[0]) == METRIC_COLUMNS
        assert metrics[0]["picks"] == "1"

        events = [json.loads(line) for line in (tmp_path / "run" / "events.jsonl").open()]
        assert [e["action"] for e in events] == ["scan", "pick"]
        assert events[0]["counts"] == {"added": 5}

        utilities = read_rows(tmp_path / "run" / "utilities_000.csv")
        assert utilities[0]["d"] == "inf"
        assert read_rows(tmp_path / "run" / "utilities_001.csv") == []
