import json
import math
import os

import pytest

from wgstokes.cli import main
from wgstokes.report import parse_csv


def run_cli(args):
    return main(args)


@pytest.fixture(scope="module")
def solve_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    code = run_cli(["solve", "--problem", "s1", "--mesh", "tri",
                    "--order", "1", "--levels", "2..3",
                    "--out", str(out)])
    assert code == 0
    return out


class TestSolveCommand:
    def test_artifacts_exist(self, solve_dir):
        for name in ("rates.csv", "rates.md", "summary.json", "convergence.png"):
            assert (solve_dir / name).exists()

    def test_csv_structure(self, solve_dir):
        text = (solve_dir / "rates.csv").read_text()
        lines = text.strip().splitlines()
        assert lines[0] == ("level,h,ndofs,err_l2,rate_l2,err_energy,"
                            "rate_energy,err_pressure,rate_pressure")
        assert len(lines) == 1 + 2  # header + one row per level
        rows = parse_csv(text)
        assert rows[0]["rate_l2"] == "-"  # no predecessor on the first level

    def test_csv_markdown_same_numbers(self, solve_dir):
        rows = parse_csv((solve_dir / "rates.csv").read_text())
        md = (solve_dir / "rates.md").read_text()
        for row in rows:
            for key in ("err_l2", "err_energy", "err_pressure"):
                assert row[key] in md

    def test_emitted_rates_self_consistent(self, solve_dir):
        rows = parse_csv((solve_dir / "rates.csv").read_text())
        for prev, cur in zip(rows, rows[1:]):
            hr = math.log(float(prev["h"]) / float(cur["h"]))
            for err, rate in (("err_l2", "rate_l2"),
                              ("err_energy", "rate_energy"),
                              ("err_pressure", "rate_pressure")):
                recomputed = math.log(float(prev[err]) / float(cur[err])) / hr
                assert abs(recomputed - float(cur[rate])) <= 0.05

    def test_json_summary(self, solve_dir):
        payload = json.loads((solve_dir / "summary.json").read_text())
        assert payload["config"]["problem"] == "s1"
        assert payload["config"]["levels"] == [2, 3]
        levels = payload["tables"][0]["levels"]
        assert len(levels) == 2
        assert levels[0]["rate_l2"] is None
        assert levels[1]["rate_l2"] > 1.0

    def test_determinism_byte_identical(self, solve_dir, tmp_path):
        out2 = tmp_path / "again"
        assert run_cli(["solve", "--problem", "s1", "--mesh", "tri",
                        "--order", "1", "--levels", "2..3",
                        "--out", str(out2)]) == 0
        assert (out2 / "rates.csv").read_bytes() == \
            (solve_dir / "rates.csv").read_bytes()


class TestPatchViaCli:
    def test_nonconvex_patch_exit_zero(self, tmp_path):
        out = tmp_path / "patch"
        code = run_cli(["solve", "--problem", "patch-k1", "--mesh", "nonconvex-l",
                        "--order", "1", "--levels", "2..2", "--out", str(out),
                        "--no-plot"])
        assert code == 0
        payload = json.loads((out / "summary.json").read_text())
        level = payload["tables"][0]["levels"][0]
        assert level["err_l2"] <= 1e-8
        assert level["err_energy"] <= 1e-8
        assert level["err_pressure"] <= 1e-8

    def test_vtk_export(self, tmp_path):
        out = tmp_path / "vtk"
        code = run_cli(["solve", "--problem", "patch-k1", "--mesh", "tri",
                        "--order", "1", "--levels", "1..1", "--out", str(out),
                        "--export-vtk", "--no-plot"])
        assert code == 0
        vtk = (out / "solution_level1.vtk").read_text()
        assert vtk.startswith("# vtk DataFile")
        assert "VECTORS velocity" in vtk
        assert "SCALARS pressure" in vtk


class TestProbeCommand:
    def test_norm_equivalence_json(self, tmp_path):
        out = tmp_path / "probe"
        code = run_cli(["probe", "--norm-equivalence", "--mesh", "tri",
                        "--order", "1", "--levels", "2..4", "--samples", "5",
                        "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "probe.json").read_text())
        per_level = payload["norm_equivalence"]
        assert set(per_level) == {"2", "3", "4"}
        for stats in per_level.values():
            assert 0 < stats["min"] <= stats["max"]

    def test_infsup_json(self, tmp_path):
        out = tmp_path / "probe2"
        code = run_cli(["probe", "--infsup", "--mesh", "tri", "--order", "1",
                        "--levels", "1..2", "--out", str(out)])
        assert code == 0
        payload = json.loads((out / "probe.json").read_text())
        assert all(beta > 0 for beta in payload["infsup"].values())

    def test_probe_without_flags_fails(self, capsys):
        assert run_cli(["probe", "--mesh", "tri"]) == 1
        assert "nothing to probe" in capsys.readouterr().err


class TestMeshCheckCommand:
    def test_families_ok(self, capsys):
        assert run_cli(["mesh-check", "--mesh", "nonconvex-l",
                        "--levels", "1..2"]) == 0
        out = capsys.readouterr().out
        assert "OK" in out

    def test_file_round_trip(self, tmp_path, capsys):
        from wgstokes.mesh import save_mesh_text, uniform_triangle_mesh
        path = tmp_path / "m.txt"
        save_mesh_text(uniform_triangle_mesh(2), path)
        assert run_cli(["mesh-check", "--file", str(path)]) == 0

    def test_without_target_fails(self):
        assert run_cli(["mesh-check"]) == 1


class TestUsageErrors:
    def test_bad_levels(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["solve", "--levels", "nope"])
        assert exc.value.code == 2

    def test_reversed_levels(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["solve", "--levels", "4..2"])
        assert exc.value.code == 2

    def test_bad_order(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["solve", "--order", "9"])
        assert exc.value.code == 2

    def test_bad_problem(self):
        with pytest.raises(SystemExit) as exc:
            run_cli(["solve", "--problem", "mystery"])
        assert exc.value.code == 2
