"""End-to-end tests of the command-line interface."""

from pathlib import Path

import pytest

from vem import __version__
from vem.cli import COMMANDS, ExitCode, build_parser, main

GOLDEN = Path(__file__).parent / "golden_files"


def parse_summary(text: str) -> dict:
    """Fields of the last key=value summary line."""
    line = [row for row in text.strip().splitlines() if "=" in row][-1]
    return dict(part.split("=", 1) for part in line.split())


class TestGenMesh:

    def test_writes_mesh_and_summary(self, tmp_path, capsys):
        code = main(["gen-mesh", "cube", "--n", "2", "--output-dir", str(tmp_path)])
        assert code == ExitCode.OK
        summary = parse_summary(capsys.readouterr().out)
        assert summary["vertices"] == "27"
        assert summary["cells"] == "8"
        assert summary["boundary_faces"] == "24"
        assert (tmp_path / "cube_n2.pm").is_file()
        assert len(summary["hash"]) == 64

    def test_slit_with_explicit_output(self, tmp_path, capsys):
        output = tmp_path / "slit.pm"
        code = main(["gen-mesh", "slit", "--n", "1", "--eps", "0.1", "--output", str(output)])
        assert code == ExitCode.OK
        assert parse_summary(capsys.readouterr().out)["max_faces_per_cell"] == "10"
        assert output.is_file()

    def test_missing_n(self, capsys):
        assert main(["gen-mesh", "cube"]) == ExitCode.USAGE

    def test_unknown_family(self, capsys):
        assert main(["gen-mesh", "sphere", "--n", "2"]) == ExitCode.USAGE

    def test_unexpected_error_is_internal_failure(self, monkeypatch, capsys):
        def crashing(config):
            raise RuntimeError("boom")

        monkeypatch.setitem(COMMANDS, "gen-mesh", crashing)
        assert main(["gen-mesh", "cube", "--n", "2"]) == ExitCode.FAILURE
        assert ExitCode.FAILURE == 1


class TestSolve:

    def test_patch_problem(self, tmp_path, capsys):
        code = main(["solve", "--family", "cube", "--n", "2", "--k", "2", "--problem", "quad",
                     "--output-dir", str(tmp_path)])
        assert code == ExitCode.OK
        summary = parse_summary(capsys.readouterr().out)
        assert float(summary["energy_err"]) <= 1e-8
        assert summary["variant"] == "new"
        assert summary["ndof"] == "125"
        assert Path(summary["solution"]).name == "cube_n2_k2_quad_solution.txt"
        assert len(Path(summary["solution"]).read_text().split()) == 125

    def test_mesh_file_and_matrix_dump(self, tmp_path, capsys):
        dump = tmp_path / "a.mtx"
        code = main(["solve", "--mesh", str(GOLDEN / "unit_cube.pm"), "--k", "1", "--problem", "poly1",
                     "--stab", "original", "--dump-matrix", str(dump), "--output-dir", str(tmp_path)])
        assert code == ExitCode.OK
        summary = parse_summary(capsys.readouterr().out)
        assert summary["variant"] == "original"
        assert Path(summary["solution"]).name == "unit_cube_k1_poly1_solution.txt"
        assert dump.read_text().startswith("%%MatrixMarket matrix coordinate real symmetric")

    def test_solver_failure(self, tmp_path, capsys):
        code = main(["solve", "--family", "cube", "--n", "3", "--k", "2", "--max-iter", "1",
                     "--output-dir", str(tmp_path)])
        assert code == ExitCode.SOLVER
        assert parse_summary(capsys.readouterr().out)["error"] == "solver"

    def test_missing_mesh_file(self, tmp_path, capsys):
        assert main(["solve", "--mesh", str(tmp_path / "absent.pm")]) == ExitCode.USAGE

    def test_binary_mesh_file(self, tmp_path, capsys):
        path = tmp_path / "binary.pm"
        path.write_bytes(b"\xff\xfe\x00\x01")
        assert main(["solve", "--mesh", str(path), "--k", "1"]) == ExitCode.USAGE
        assert "not UTF-8" in capsys.readouterr().err

    def test_order_out_of_range(self, capsys):
        assert main(["solve", "--family", "cube", "--n", "1", "--k", "4"]) == ExitCode.USAGE

    def test_no_mesh_source(self, capsys):
        assert main(["solve", "--k", "1"]) == ExitCode.USAGE


class TestVerifyIdentity:

    def test_passes(self, capsys):
        code = main(["verify-identity", "--family", "cube", "--n", "2", "--k", "1", "--trials", "3"])
        assert code == ExitCode.OK
        summary = parse_summary(capsys.readouterr().out)
        assert summary["decision"] == "pass"
        assert summary["quad_order"] == "10"
        assert summary["trials"] == "3"

    def test_threshold_failure(self, capsys):
        code = main(["verify-identity", "--family", "cube", "--n", "2", "--k", "1", "--trials", "3",
                     "--threshold", "1e-300"])
        assert code == ExitCode.IDENTITY
        assert parse_summary(capsys.readouterr().out)["decision"] == "fail"


class TestStudy:

    def test_runs_and_writes_reports(self, tmp_path, capsys):
        code = main(["study", "--family", "cube", "--levels", "2,3,4", "--k", "1",
                     "--output-dir", str(tmp_path)])
        assert code == ExitCode.OK
        summary = parse_summary(capsys.readouterr().out)
        assert float(summary["energy_err_rate"]) >= 0.9
        assert summary["decision"] in ("pass", "non_asymptotic")
        assert (tmp_path / "study_cube_k1_new.md").is_file()

    def test_unfittable_rate_fails(self, tmp_path, capsys):
        # the single-cell level has no free DOFs and zero error
        code = main(["study", "--family", "cube", "--levels", "1,2,3", "--output-dir", str(tmp_path)])
        assert code == ExitCode.RATE

    def test_two_levels_rejected(self, tmp_path, capsys):
        code = main(["study", "--family", "cube", "--levels", "2,4", "--output-dir", str(tmp_path)])
        assert code == ExitCode.USAGE

    def test_bad_levels(self, capsys):
        assert main(["study", "--family", "cube", "--levels", "2,x"]) == ExitCode.USAGE


class TestConfigFile:
    """key=value files supply defaults for long flags."""

    def test_config_values_used(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("k=2\nproblem=poly2\nstab=original\nfamily=cube\nn=2\n")
        code = main(["solve", "--config", str(config), "--output-dir", str(tmp_path)])
        assert code == ExitCode.OK
        summary = parse_summary(capsys.readouterr().out)
        assert summary["k"] == "2"
        assert summary["variant"] == "original"
        assert summary["problem"] == "poly2"

    def test_flags_override_config(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("k=2\nproblem=poly2\nfamily=cube\nn=2\n")
        code = main(["solve", "--config", str(config), "--k", "3", "--output-dir", str(tmp_path)])
        assert code == ExitCode.OK
        assert parse_summary(capsys.readouterr().out)["k"] == "3"

    def test_unknown_key(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("colour=blue\n")
        code = main(["solve", "--config", str(config), "--family", "cube", "--n", "1"])
        assert code == ExitCode.USAGE
        assert "colour" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["solve", "--config", str(tmp_path / "absent.cfg"), "--family", "cube", "--n", "1"])
        assert code == ExitCode.USAGE


class TestParser:

    def test_version(self, capsys):
        assert main(["--version"]) == ExitCode.OK
        assert __version__ in capsys.readouterr().out

    def test_subcommand_required(self, capsys):
        assert main([]) == ExitCode.USAGE

    def test_stab_maps_to_variant(self):
        args = build_parser().parse_args(["solve", "--stab", "original", "--mesh", "m.pm"])
        assert args.variant == "original"
        assert args.mesh_path == Path("m.pm")

    def test_settings_supply_defaults(self, monkeypatch, tmp_path, capsys):
        monkeypatch.setenv("VEM_OUTPUT_DIR", str(tmp_path / "from_env"))
        code = main(["gen-mesh", "cube", "--n", "1"])
        assert code == ExitCode.OK
        assert (tmp_path / "from_env" / "cube_n1.pm").is_file()
