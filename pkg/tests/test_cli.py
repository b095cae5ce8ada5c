"""
Tests for the pilemap command-line interface and its exit codes.
"""

import csv
import json

import numpy as np
import pytest

from backend.cli.main import EXIT_CONFIG, EXIT_OK, build_parser, main
from backend.models.gpis import GpisConfig
from backend.services.export_service import METRIC_COLUMNS
from backend.services.gpis_service import GpisMap, save_snapshot
from config.settings import settings


def ball_map() -> GpisMap:
    """GPIS of a 0.3 m ball floating 0.5 m above the floor."""
    k = np.arange(400) + 0.5
    polar = np.arccos(1.0 - 2.0 * k / 400)
    azimuth = np.pi * (1.0 + np.sqrt(5.0)) * k
    unit = np.column_stack(
        [np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)]
    )
    center = np.array([0.0, 0.0, 0.5])
    gpis_map = GpisMap(GpisConfig(length_scale=0.1))
    gpis_map.insert_samples(
        np.vstack([center + 0.3 * unit, center + 0.35 * unit, center + 0.25 * unit]),
        np.concatenate([np.zeros(400), np.full(400, 0.05), np.full(400, -0.05)]),
        1e-4,
    )
    return gpis_map


def vertex_count(ply) -> int:
    header = ply.read_text().splitlines()
    return int(next(ln for ln in header if ln.startswith("element vertex")).split()[-1])


class TestParser:
    """Argument parsing."""

    def setup_method(self):
        self.parser = build_parser()

    def test_simulate_defaults(self):
        args = self.parser.parse_args(["simulate"])
        assert args.config is None
        assert args.seed is None
        assert args.strategy is None

    def test_benchmark_strategy_list(self):
        args = self.parser.parse_args(["benchmark", "--strategies", "full, frontier"])
        assert [s.value for s in args.strategies] == ["full", "frontier"]

    def test_version_exits_cleanly(self):
        assert main(["--version"]) == EXIT_OK

    def test_missing_command(self):
        assert main([]) == EXIT_CONFIG

    def test_unknown_drop(self):
        assert main(["ablate", "--drop", "colour"]) == EXIT_CONFIG

    def test_unknown_strategy(self):
        assert main(["benchmark", "--strategies", "full,greedy"]) == EXIT_CONFIG


class TestSimulate:
    """The simulate command."""

    def test_zero_cycles_writes_empty_artefacts(self, tmp_path):
        out = tmp_path / "run"
        code = main(["simulate", settings.default_config_path, "--cycles", "0", "--out", str(out)])
        assert code == EXIT_OK

        with (out / "metrics.csv").open(newline="") as f:
            reader = csv.DictReader(f)
            assert reader.fieldnames == METRIC_COLUMNS
            assert list(reader) == []
        assert (out / "events.jsonl").read_text() == ""
        assert "element vertex 0" in (out / "mesh.ply").read_text().splitlines()

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"episode": {"seed": 0}, "bogus": True}))
        assert main(["simulate", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_negative_cycles_rejected(self, tmp_path):
        code = main(["simulate", "--cycles", "-1", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["simulate", str(path)]) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["simulate", str(tmp_path / "absent.json")]) == EXIT_CONFIG


class TestExportMesh:
    """The export-mesh command."""

    def test_empty_snapshot(self, tmp_path):
        snapshot = tmp_path / "map.txt"
        save_snapshot(GpisMap(), snapshot)
        out = tmp_path / "mesh.ply"
        assert main(["export-mesh", str(snapshot), "--out", str(out)]) == EXIT_OK
        assert "element face 0" in out.read_text().splitlines()

    def test_corrupt_snapshot(self, tmp_path):
        snapshot = tmp_path / "map.txt"
        snapshot.write_text("not a snapshot\n")
        assert main(["export-mesh", str(snapshot)]) == EXIT_CONFIG

    def test_zero_voxel_rejected(self, tmp_path):
        snapshot = tmp_path / "map.txt"
        save_snapshot(ball_map(), snapshot)
        assert main(["export-mesh", str(snapshot), "--voxel", "0"]) == EXIT_CONFIG

    @pytest.mark.slow
    def test_halving_voxel_quadruples_vertices(self, tmp_path):
        snapshot = tmp_path / "map.txt"
        save_snapshot(ball_map(), snapshot)
        counts = []
        for voxel in ("0.04", "0.02"):
            out = tmp_path / f"mesh_{voxel}.ply"
            code = main(["export-mesh", str(snapshot), "--voxel", voxel, "--out", str(out)])
            assert code == EXIT_OK
            counts.append(vertex_count(out))
        assert counts[0] > 100
        assert 3.0 < counts[1] / counts[0] < 5.0


@pytest.mark.slow
class TestBenchmark:
    """A single-run benchmark."""

    def test_single_run_has_zero_spread(self, tmp_path):
        code = main(
            ["benchmark", "--strategies", "random", "--runs", "1", "--cycles", "1",
             "--out", str(tmp_path)]
        )
        assert code == EXIT_OK
        with (tmp_path / "benchmark.csv").open(newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert rows[0]["strategy"] == "random"
        assert float(rows[0]["picks_pct_std"]) == 0.0
        assert float(rows[0]["map_pct_std"]) == 0.0
