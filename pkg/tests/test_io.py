"""Snapshot format, config parsing, dispatch, verification, reporting, CLI."""

import json

import numpy as np
import pytest

from slipchannel.grid import Grid, Parity
from slipchannel.config import ConfigError, parse_config_text
from slipchannel.cli import main
from slipchannel.experiments import dispatch
from slipchannel.manifest import load_manifest
from slipchannel.reporting import generate_report
from slipchannel.snapshots import (
    SnapshotFormatError,
    load_state,
    read_snapshot,
    save_state,
    write_snapshot,
)
from slipchannel.verify import verify_run

from conftest import random_scalar, random_velocity


MINIMAL_SWEEP = """\
version: 1
kind: sweep
seed: 3
grid: {nx: 8, ny: 8, nz: 8}
solver: {dt: 1.0e-2, t_end: 0.5, snapshot_interval: 1}
data: {class: shear, amplitude: 1.0}
"""


class TestSnapshotFormat:
    def test_round_trip(self, grid, rng, tmp_path):
        f = random_scalar(grid, Parity.EVEN, rng)
        g = random_scalar(grid, Parity.ODD, rng)
        path = tmp_path / "fields.scfs"
        write_snapshot(path, {"a": f, "b": g})
        back = read_snapshot(path)
        assert list(back) == ["a", "b"]
        np.testing.assert_array_equal(back["a"].coeffs, f.coeffs)
        np.testing.assert_array_equal(back["b"].coeffs, g.coeffs)
        assert back["b"].parity is Parity.ODD

    def test_state_round_trip(self, grid, rng, tmp_path):
        v = random_velocity(grid, rng)
        path = tmp_path / "state.scfs"
        save_state(path, v)
        back = load_state(path)
        np.testing.assert_array_equal(back.u3.coeffs, v.u3.coeffs)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.scfs"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(SnapshotFormatError, match="magic"):
            read_snapshot(path)

    def test_truncated(self, grid, rng, tmp_path):
        f = random_scalar(grid, Parity.EVEN, rng)
        path = tmp_path / "t.scfs"
        write_snapshot(path, {"a": f})
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(SnapshotFormatError, match="truncated"):
            read_snapshot(path)


class TestParseConfig:
    def test_minimal_defaults(self):
        cfg = parse_config_text("version: 1\nkind: sweep\n")
        assert cfg.dt == 1e-3
        assert cfg.grid == Grid(32, 32, 32)
        assert cfg.t_end == 1.0
        assert cfg.data.kind == "shear"
        assert cfg.nus == (1e-2, 5e-3, 2.5e-3, 1.25e-3)

    def test_nus_not_descending_names_field(self):
        text = "version: 1\nkind: sweep\nsweep: {nus: [1.0e-3, 1.0e-2, 2.0e-2, 3.0e-2]}\n"
        with pytest.raises(ConfigError, match="sweep.nus"):
            parse_config_text(text)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown key 'solver.dtt'"):
            parse_config_text("version: 1\nkind: sweep\nsolver: {dtt: 0.1}\n")
        with pytest.raises(ConfigError, match="unknown key 'turbulence'"):
            parse_config_text("version: 1\nkind: sweep\nturbulence: yes\n")

    def test_version_required_and_matched(self):
        with pytest.raises(ConfigError, match="missing required key 'version'"):
            parse_config_text("kind: sweep\n")
        with pytest.raises(ConfigError, match="unsupported config version"):
            parse_config_text("version: 99\nkind: sweep\n")

    def test_all_errors_collected(self):
        text = (
            "version: 1\nkind: bogus\n"
            "solver: {dt: -1.0, t_end: 0.0}\n"
            "grid: {nx: 5}\n"
        )
        with pytest.raises(ConfigError) as exc:
            parse_config_text(text)
        assert len(exc.value.errors) >= 3

    def test_run_id_deterministic_and_key_order_independent(self):
        a = parse_config_text(MINIMAL_SWEEP)
        b = parse_config_text(MINIMAL_SWEEP)
        reordered = """\
kind: sweep
version: 1
data: {amplitude: 1.0, class: shear}
solver: {t_end: 0.5, dt: 1.0e-2, snapshot_interval: 1}
grid: {nz: 8, ny: 8, nx: 8}
seed: 3
"""
        c = parse_config_text(reordered)
        assert a.run_id == b.run_id == c.run_id
        assert a.with_seed(4).run_id != a.run_id

    def test_kind_class_consistency(self):
        with pytest.raises(ConfigError, match="boussinesq-blob"):
            parse_config_text("version: 1\nkind: epsilon-sweep\ndata: {class: shear}\n")


class TestDispatch:
    def test_shear_sweep_artifacts_and_rate(self, tmp_path):
        cfg = parse_config_text(MINIMAL_SWEEP)
        result = dispatch(cfg, tmp_path)
        assert result.exit_code == 0
        d = result.run_dir
        assert (d / "sweep.csv").is_file()
        assert (d / "manifest.json").is_file()
        rate = json.loads((d / "rate_sup.json").read_text())
        assert rate["status"] == "ok"
        assert 1.9 <= rate["fit"]["slope"] <= 2.3
        lines = (d / "sweep.csv").read_text().strip().split("\n")
        assert lines[0] == "nu,sup_err2,grad_err2_int,rho_err2,manifest_path"
        assert len(lines) == 5

    def test_reexecution_reproduces_csv_bytes(self, tmp_path):
        cfg = parse_config_text(MINIMAL_SWEEP)
        r1 = dispatch(cfg, tmp_path / "a")
        r2 = dispatch(cfg, tmp_path / "b")
        assert (r1.run_dir / "sweep.csv").read_bytes() == (
            r2.run_dir / "sweep.csv"
        ).read_bytes()

    def test_existing_dir_requires_force(self, tmp_path):
        cfg = parse_config_text(MINIMAL_SWEEP)
        dispatch(cfg, tmp_path)
        with pytest.raises(FileExistsError):
            dispatch(cfg, tmp_path)
        result = dispatch(cfg, tmp_path, force=True)
        assert result.exit_code == 0

    def test_threshold_failure_exits_3(self, tmp_path):
        cfg = parse_config_text(MINIMAL_SWEEP + "checks: {min_sup_slope: 5.0}\n")
        result = dispatch(cfg, tmp_path)
        assert result.exit_code == 3

    def test_blowup_exits_2_with_abort_time(self, tmp_path):
        text = """\
version: 1
kind: single-run
grid: {nx: 8, ny: 8, nz: 8}
solver: {nu: 0.0, dt: 1.0, t_end: 20.0, snapshot_interval: 1}
data: {class: interior-blob, amplitude: 2.0}
"""
        cfg = parse_config_text(text)
        with pytest.warns(RuntimeWarning, match="CFL"):
            result = dispatch(cfg, tmp_path)
        assert result.exit_code == 2
        manifest = load_manifest(result.run_dir)
        assert manifest["error"]["kind"] == "blow-up"
        assert manifest["error"]["abort_time"] > 0

    def test_budget_dispatch(self, tmp_path):
        text = """\
version: 1
kind: budget
seed: 2
grid: {nx: 8, ny: 8, nz: 8}
solver: {nu: 1.0e-2, dt: 5.0e-3, t_end: 0.25, snapshot_interval: 1}
data: {class: shear, amplitude: 1.0}
checks: {max_budget_residual: 1.0e-9, max_boundary_terms: 1.0e-12}
"""
        cfg = parse_config_text(text)
        result = dispatch(cfg, tmp_path)
        assert result.exit_code == 0
        csv_path = result.run_dir / f"{cfg.run_id}_gronwall_budget.csv"
        assert csv_path.is_file()
        header = csv_path.read_text().split("\n", 1)[0]
        assert header == ("time,energy_sq,dissipation,nonlinear,interior,"
                          "boundary_vorticity,boundary_curvature,residual")
        assert verify_run(result.run_dir).ok

    def test_lagrangian_dispatch(self, tmp_path):
        text = """\
version: 1
kind: lagrangian-check
seed: 2
grid: {nx: 16, ny: 16, nz: 16}
solver: {nu: 0.0, dt: 5.0e-3, t_end: 0.1, snapshot_interval: 1}
data: {class: interior-blob, amplitude: 0.3}
particles: {interior: 2, wall: 2}
checks: {max_det_error: 1.0e-6, max_wall_drift: 1.0e-10, max_backward_forward: 1.0e-7}
"""
        cfg = parse_config_text(text)
        result = dispatch(cfg, tmp_path)
        assert result.exit_code == 0
        lines = (result.run_dir / "particles.csv").read_text().strip().split("\n")
        assert lines[0].startswith("particle_id,alpha_x")
        assert len(lines) == 1 + 2**3 + 2 * 2**2
        assert "backward_forward_error" in result.manifest.summary
        assert verify_run(result.run_dir).ok

    def test_single_run_balance(self, tmp_path):
        text = """\
version: 1
kind: single-run
seed: 1
grid: {nx: 8, ny: 8, nz: 8}
solver: {nu: 1.0e-2, dt: 5.0e-3, t_end: 0.3, snapshot_interval: 1}
data: {class: interior-blob, amplitude: 0.4}
"""
        cfg = parse_config_text(text)
        result = dispatch(cfg, tmp_path)
        assert result.exit_code == 0
        assert (result.run_dir / f"{cfg.run_id}_energy_balance.csv").is_file()
        assert (result.run_dir / "final_state.scfs").is_file()
        manifest = load_manifest(result.run_dir)
        assert manifest["summary"]["balance_residual"] <= 1e-8


class TestVerify:
    def _fresh_run(self, tmp_path):
        cfg = parse_config_text(MINIMAL_SWEEP)
        return dispatch(cfg, tmp_path).run_dir

    def test_fresh_run_passes(self, tmp_path):
        report = verify_run(self._fresh_run(tmp_path))
        assert report.ok
        assert any(i.kind == "artifact" for i in report.items)

    def test_corrupted_csv_detected(self, tmp_path):
        d = self._fresh_run(tmp_path)
        path = d / "sweep.csv"
        lines = path.read_text().strip().split("\n")
        parts = lines[1].split(",")
        parts[1] = repr(float(parts[1]) * 1.1)
        lines[1] = ",".join(parts)
        path.write_text("\n".join(lines) + "\n")
        report = verify_run(d)
        assert not report.ok
        assert any(i.name == "sweep.csv" and not i.ok for i in report.items)

    def test_value_drift_detected_even_with_fixed_checksum(self, tmp_path):
        d = self._fresh_run(tmp_path)
        path = d / "sweep.csv"
        lines = path.read_text().strip().split("\n")
        parts = lines[1].split(",")
        parts[1] = repr(float(parts[1]) * 1.1)
        lines[1] = ",".join(parts)
        path.write_text("\n".join(lines) + "\n")
        # forge the checksum so only the threshold re-derivation can catch it
        from slipchannel.manifest import sha256_file

        manifest_path = d / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["artifacts"]["sweep.csv"]["sha256"] = sha256_file(path)
        manifest["checks"].append(
            {
                "name": "min_sup_slope", "value": manifest["summary"]["sup_slope"],
                "threshold": 1.5, "op": ">=", "artifact": "sweep.csv",
                "derive": "fit_slope:sup_err2",
            }
        )
        manifest_path.write_text(json.dumps(manifest))
        report = verify_run(d)
        assert any(
            i.name == "min_sup_slope" and not i.ok and "differs" in i.detail
            for i in report.items
        )

    def test_missing_artifact(self, tmp_path):
        d = self._fresh_run(tmp_path)
        (d / "rate_sup.json").unlink()
        report = verify_run(d)
        assert not report.artifacts_ok


class TestReport:
    def test_rate_table_and_figures(self, tmp_path):
        cfg = parse_config_text(MINIMAL_SWEEP)
        run = dispatch(cfg, tmp_path / "runs")
        written = generate_report([run.run_dir], tmp_path / "report")
        names = {p.name for p in written}
        assert "rate_table.csv" in names
        assert f"rates_{cfg.run_id}.png" in names
        table = (tmp_path / "report" / "rate_table.csv").read_text().strip().split("\n")
        assert table[0].startswith("run_id,kind,data_class,quantity,slope")
        assert len(table) >= 3


class TestCli:
    def test_sweep_roundtrip(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(MINIMAL_SWEEP)
        code = main(["sweep", "--config", str(cfg_path), "--output", str(tmp_path / "o")])
        assert code == 0
        out = capsys.readouterr().out
        assert "run " in out

    def test_wrong_subcommand_for_kind(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(MINIMAL_SWEEP)
        code = main(["run", "--config", str(cfg_path), "--output", str(tmp_path / "o")])
        assert code == 1
        assert "sweep" in capsys.readouterr().err

    def test_invalid_config_exit_1(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text("version: 1\nkind: sweep\nsolver: {dt: -1}\n")
        code = main(["sweep", "--config", str(cfg_path), "--output", str(tmp_path / "o")])
        assert code == 1

    def test_verify_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(MINIMAL_SWEEP)
        out_root = tmp_path / "o"
        assert main(["sweep", "--config", str(cfg_path), "--output", str(out_root)]) == 0
        cfg = parse_config_text(MINIMAL_SWEEP)
        run_dir = out_root / cfg.run_id
        assert main(["verify", str(run_dir)]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_strict_mode_turns_warnings_into_errors(self, tmp_path, capsys):
        # 51 snapshots (< 100) triggers a sup-sampling advisory
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(MINIMAL_SWEEP)
        code = main([
            "sweep", "--config", str(cfg_path), "--output", str(tmp_path / "o"),
            "--strict",
        ])
        assert code == 2
        assert "strict mode" in capsys.readouterr().err

    def test_verify_detects_corruption_via_cli(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(MINIMAL_SWEEP)
        out_root = tmp_path / "o"
        assert main(["sweep", "--config", str(cfg_path), "--output", str(out_root)]) == 0
        cfg = parse_config_text(MINIMAL_SWEEP)
        run_dir = out_root / cfg.run_id
        (run_dir / "rate_sup.json").unlink()
        assert main(["verify", str(run_dir)]) == 2

    def test_report_subcommand(self, tmp_path):
        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(MINIMAL_SWEEP)
        out_root = tmp_path / "o"
        assert main(["sweep", "--config", str(cfg_path), "--output", str(out_root)]) == 0
        cfg = parse_config_text(MINIMAL_SWEEP)
        code = main([
            "report", str(out_root / cfg.run_id), "--output", str(tmp_path / "rep"),
        ])
        assert code == 0
        assert (tmp_path / "rep" / "rate_table.csv").is_file()
