"""Configuration parsing, overrides, initial-state assembly, and the CLI.

Command line tests call cli.main(argv) in process and assert on exit
codes and emitted files; nothing here shells out or reaches the network.
"""

import hashlib
import json
import math
import textwrap
from pathlib import Path

import numpy as np
import pytest

from qmaser import cli
from qmaser.config import (ConfigError, InitialSpec, apply_override,
                           load_config, parse_override, structure_config)
from qmaser.models import MaserParams
from qmaser.runners import build_initial_state, suggested_n_fock
from qmaser.semiclassical import SemiclassicalParams, sc_steady_state

SC_TABLE = """\
[semiclassical]
gamma01 = 1e-3
gamma02 = 1e-3
n01 = 10.0
n02 = 0.1
lambda_sc = 1.0
omega = 0.075
"""


def write_config(tmp_path: Path, text: str, name: str = "run.toml") -> str:
    path = tmp_path / name
    path.write_text(textwrap.dedent(text), encoding="ascii")
    return str(path)


def read_csv_row(path: Path) -> dict:
    header, row = path.read_text().splitlines()[:2]
    return dict(zip(header.split(","), row.split(",")))


class TestConfigParsing:
    def test_full_quantum_document(self, tmp_path):
        path = write_config(tmp_path, """\
            mode = "quantum"
            out_dir = "runs/demo"

            [model]
            gamma01 = 0.02
            gamma02 = 0.02
            n01 = 2.0
            n02 = 0.1
            n_fock = 8

            [integration]
            windows = [{duration = 2.0, sample_stride = 5},
                       {duration = 8.0}]
            step_h = 0.01
            occupancy_threshold = 2.0

            [initial]
            matter = 1
            field = {type = "coherent", alpha_abs = 2.0}

            [observers]
            thermo_every = 2
            qfunction_times = [1.0, 2.0]
            """)
        cfg = load_config(path)
        assert cfg.mode == "quantum"
        assert cfg.out_dir == "runs/demo"
        assert cfg.model.n01 == 2.0 and cfg.model.n_fock == 8
        assert len(cfg.plan.windows) == 2
        assert cfg.plan.windows[0].sample_stride == 5
        # a bare step_h is inherited by every window without its own
        assert cfg.plan.windows[0].step_h == 0.01
        assert cfg.plan.windows[1].step_h == 0.01
        assert cfg.plan.windows[1].sample_stride == 10
        assert cfg.plan.total_duration == 10.0
        assert cfg.plan.occupancy_threshold == 2.0
        assert cfg.initial.matter_weights == (0.0, 1.0)
        assert cfg.initial.field_type == "coherent"
        assert cfg.initial.alpha == 2.0 + 0.0j
        assert cfg.observers.thermo_every == 2
        assert cfg.observers.qfunction_times == (1.0, 2.0)
        assert cfg.sweep is None

    def test_minimal_quantum_defaults(self, tmp_path):
        path = write_config(tmp_path, 'mode = "quantum"\n[model]\nn01 = 3.0\n')
        cfg = load_config(path)
        assert cfg.model.n01 == 3.0
        assert len(cfg.plan.windows) == 1 and cfg.plan.windows[0].duration == 1.0
        assert cfg.initial.matter_weights == (0.0, 1.0)
        assert cfg.initial.field_type == "fock" and cfg.initial.field_n == 0
        assert cfg.observers.entangle_every == 0

    def test_mode_is_mandatory_and_checked(self):
        with pytest.raises(ConfigError, match="mode must be one of"):
            structure_config({})
        with pytest.raises(ConfigError, match="'laser'"):
            structure_config({"mode": "laser"})

    @pytest.mark.parametrize("doc, fragment", [
        ({"mode": "quantum", "model": {}, "typo": 1}, "unknown top-level"),
        ({"mode": "quantum", "model": {"gamma": 1.0}}, r"\[model\]"),
        ({"mode": "quantum", "model": {},
          "integration": {"t_final": 1.0, "husimi": 2}}, "integration"),
        ({"mode": "quantum", "model": {},
          "initial": {"field": {"type": "fock", "m": 1}}}, "initial.field"),
        ({"mode": "quantum", "model": {},
          "observers": {"thermo_stride": 2}}, "observers"),
    ], ids=["top", "model", "integration", "field", "observers"])
    def test_unknown_keys_are_rejected(self, doc, fragment):
        with pytest.raises(ConfigError, match=fragment):
            structure_config(doc)

    def test_windows_exclude_flat_duration_keys(self):
        doc = {"mode": "quantum", "model": {},
               "integration": {"windows": [{"duration": 1.0}],
                               "t_final": 2.0}}
        with pytest.raises(ConfigError, match="not both"):
            structure_config(doc)

    def test_integration_needs_a_duration(self):
        doc = {"mode": "quantum", "model": {}, "integration": {"step_h": 0.1}}
        with pytest.raises(ConfigError, match="t_final"):
            structure_config(doc)

    def test_matter_accepts_level_or_weights(self):
        base = {"mode": "quantum", "model": {}}
        cfg = structure_config({**base, "initial": {"matter": 2}})
        assert cfg.initial.matter_weights == (0.0, 0.0, 1.0)
        cfg = structure_config({**base, "initial": {"matter": [0.25, 0.75]}})
        assert cfg.initial.matter_weights == (0.25, 0.75)
        with pytest.raises(ConfigError, match="0, 1 or 2"):
            structure_config({**base, "initial": {"matter": 3}})
        with pytest.raises(ConfigError, match="level index or a list"):
            structure_config({**base, "initial": {"matter": "excited"}})
        with pytest.raises(ConfigError, match="sum to 1"):
            structure_config({**base, "initial": {"matter": [0.5, 0.2]}})

    def test_field_spec_variants(self):
        base = {"mode": "quantum", "model": {}}

        def parse(field):
            return structure_config({**base, "initial": {"field": field}})

        cfg = parse({"type": "fock", "n": 4})
        assert cfg.initial.field_n == 4
        cfg = parse({"type": "coherent", "alpha_re": 1.0, "alpha_im": -2.0})
        assert cfg.initial.alpha == 1.0 - 2.0j
        cfg = parse({"type": "thermal", "nbar": 3.5})
        assert cfg.initial.nbar == 3.5
        with pytest.raises(ConfigError, match="nbar"):
            parse({"type": "thermal"})
        with pytest.raises(ConfigError, match="unknown field type"):
            parse({"type": "squeezed"})

    def test_mode_section_requirements(self):
        with pytest.raises(ConfigError, match="requires a .model."):
            structure_config({"mode": "quantum"})
        with pytest.raises(ConfigError, match="semiclassical"):
            structure_config({"mode": "semiclassical"})
        with pytest.raises(ConfigError, match="sweep"):
            structure_config({"mode": "compare", "model": {}})
        # the validation model has usable defaults
        cfg = structure_config({"mode": "validate-jcm"})
        assert cfg.jcm is not None and cfg.jcm.n_fock == 10

    def test_sweep_needs_values(self):
        doc = {"mode": "quantum", "model": {},
               "sweep": {"parameter": "model.n01", "values": []}}
        with pytest.raises(ConfigError, match="non-empty"):
            structure_config(doc)

    def test_semiclassical_from_model_and_alpha(self):
        doc = {"mode": "quantum", "model": {"lam": 0.5},
               "semiclassical": {"alpha_abs": 4.0}}
        cfg = structure_config(doc)
        assert cfg.semiclassical.lambda_sc == 2.0
        assert cfg.semiclassical.omega == cfg.model.omega_f

    def test_semiclassical_alpha_without_model(self):
        doc = {"mode": "semiclassical", "semiclassical": {"alpha_abs": 4.0}}
        with pytest.raises(ConfigError, match="requires .model."):
            structure_config(doc)

    def test_standalone_semiclassical_requires_omega(self):
        sec = {"gamma01": 1e-3, "gamma02": 1e-3, "n01": 10.0, "n02": 0.1,
               "lambda_sc": 1.0}
        with pytest.raises(ConfigError, match="omega"):
            structure_config({"mode": "semiclassical", "semiclassical": sec})

    def test_missing_file_reports_path(self, tmp_path):
        with pytest.raises(ConfigError, match="nowhere.toml"):
            load_config(str(tmp_path / "nowhere.toml"))

    def test_toml_syntax_error_becomes_config_error(self, tmp_path):
        path = write_config(tmp_path, 'mode = "quantum\n')
        with pytest.raises(ConfigError):
            load_config(path)


class TestOverrides:
    @pytest.mark.parametrize("text, expected", [
        ("model.n01=12", ("model.n01", 12)),
        ("model.gamma01=1.5e-3", ("model.gamma01", 1.5e-3)),
        ("integration.auto_extend=false", ("integration.auto_extend", False)),
        ('out_dir="runs/x"', ("out_dir", "runs/x")),
        ("mode=quantum", ("mode", "quantum")),  # bare word falls back to str
    ])
    def test_parse_override_literals(self, text, expected):
        assert parse_override(text) == expected

    def test_parse_override_rejects_malformed(self):
        with pytest.raises(ConfigError, match="key=value"):
            parse_override("model.n01")
        with pytest.raises(ConfigError, match="empty key"):
            parse_override("=5")

    def test_apply_override_creates_tables(self):
        data = {}
        apply_override(data, "integration.windows", [{"duration": 1.0}])
        assert data == {"integration": {"windows": [{"duration": 1.0}]}}

    def test_apply_override_refuses_non_table_path(self):
        data = {"model": 3}
        with pytest.raises(ConfigError, match="crosses"):
            apply_override(data, "model.n01", 1.0)

    def test_load_config_applies_overrides(self, tmp_path):
        path = write_config(tmp_path, 'mode = "quantum"\n[model]\nn01 = 2.0\n')
        cfg = load_config(path, overrides=["model.n01=12", "out_dir='o'"])
        assert cfg.model.n01 == 12
        assert cfg.out_dir == "o"
        # the raw echo carries the override so manifests stay honest
        assert cfg.raw["model"]["n01"] == 12


class TestInitialStateBuilder:
    def test_fock_field_is_placed_at_the_requested_level(self):
        model = MaserParams(n_fock=8).build()
        spec = InitialSpec(matter_weights=(0.0, 1.0), field_type="fock",
                           field_n=3)
        rho = build_initial_state(spec, model)
        assert rho.shape == (24, 24)
        assert rho[1 * 8 + 3, 1 * 8 + 3] == 1.0
        assert np.trace(rho) == pytest.approx(1.0, abs=1e-15)
        assert np.count_nonzero(rho) == 1

    def test_vacuum_field_with_large_truncation(self):
        # regression: the Fock branch once swapped (n_fock, level) and
        # rejected a plain vacuum start in a 30-level space
        model = MaserParams(n_fock=30).build()
        spec = InitialSpec(matter_weights=(0.0, 1.0))
        rho = build_initial_state(spec, model)
        assert rho[30, 30] == 1.0

    def test_fock_level_must_fit(self):
        model = MaserParams(n_fock=8).build()
        spec = InitialSpec(matter_weights=(1.0,), field_type="fock",
                           field_n=8)
        with pytest.raises(ValueError, match="needs n_fock"):
            build_initial_state(spec, model)

    def test_weights_beyond_matter_space(self):
        model = MaserParams(n_fock=4).build()
        bad = InitialSpec(matter_weights=(0.0, 0.0, 0.0, 1.0))
        with pytest.raises(ValueError, match="beyond"):
            build_initial_state(bad, model)
        padded = InitialSpec(matter_weights=(0.0, 1.0, 0.0, 0.0))
        rho = build_initial_state(padded, model)
        assert np.trace(rho) == pytest.approx(1.0, abs=1e-15)

    def test_mixed_matter_times_thermal_field(self):
        model = MaserParams(n_fock=40).build()
        spec = InitialSpec(matter_weights=(0.5, 0.5), field_type="thermal",
                           nbar=2.0)
        rho = build_initial_state(spec, model)
        assert np.allclose(np.trace(rho), 1.0)
        pops = np.real(np.diag(rho))
        # geometric field statistics inside each matter block
        ratio = pops[1] / pops[0]
        assert np.isclose(ratio, 2.0 / 3.0, rtol=1e-12)
        assert np.isclose(pops[:40].sum(), 0.5, rtol=1e-10)

    def test_suggested_n_fock(self):
        coherent = InitialSpec(matter_weights=(1.0,), field_type="coherent",
                               alpha=5.0 + 0.0j)
        assert suggested_n_fock(coherent) == 85
        fock = InitialSpec(matter_weights=(1.0,), field_type="fock",
                           field_n=30)
        assert suggested_n_fock(fock) == 45
        vacuum = InitialSpec(matter_weights=(1.0,))
        assert suggested_n_fock(vacuum) == 30  # floor


QUANTUM_RUN = """\
mode = "quantum"

[model]
gamma01 = 0.02
gamma02 = 0.02
n01 = 2.0
n02 = 0.1
n_fock = 8

[integration]
t_final = 30.0
step_h = 0.01
sample_stride = 10
occupancy_threshold = 2.0

[initial]
matter = 1

[observers]
qfunction_times = [10.0]
"""


class TestCLI:
    def sc_config(self, tmp_path, extra=""):
        return write_config(tmp_path, 'mode = "semiclassical"\n'
                            + SC_TABLE + extra)

    def test_version_flag(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0

    def test_threads_must_be_positive(self, tmp_path, capsys):
        rc = cli.main(["run", "--config", self.sc_config(tmp_path),
                       "--threads", "0"])
        assert rc == 1
        assert "--threads" in capsys.readouterr().err

    def test_missing_config_is_a_usage_error(self, tmp_path, capsys):
        rc = cli.main(["run", "--config", str(tmp_path / "gone.toml")])
        assert rc == 1
        assert "config error" in capsys.readouterr().err

    def test_seed_is_reserved(self, tmp_path, capsys):
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", self.sc_config(tmp_path),
                       "--out", str(out), "--seed", "7"])
        assert rc == 0
        assert "reserved" in capsys.readouterr().err

    def test_semiclassical_run_writes_verified_manifest(self, tmp_path):
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", self.sc_config(tmp_path),
                       "--out", str(out)])
        assert rc == 0
        row = read_csv_row(out / "steady_state.csv")
        assert row["case"] == "C"
        # closed-form gain ratio at lambda_sc = 1 (12 digits frozen)
        assert np.isclose(float(row["r"]), 1.000011860380, rtol=1e-9)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["mode"] == "semiclassical"
        for name, entry in manifest["files"].items():
            blob = (out / name).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
            assert len(blob) == entry["bytes"]

    def test_override_reaches_run_and_manifest(self, tmp_path):
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", self.sc_config(tmp_path),
                       "--out", str(out),
                       "--override", "semiclassical.lambda_sc=10.0"])
        assert rc == 0
        row = read_csv_row(out / "steady_state.csv")
        assert np.isclose(float(row["r"]), 1.000000118604, rtol=1e-9)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["semiclassical"]["lambda_sc"] == 10.0

    def test_trajectory_runs_are_bit_reproducible(self, tmp_path):
        extra = "[integration]\nt_final = 50.0\nsample_stride = 100\n"
        path = self.sc_config(tmp_path, extra)
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert cli.main(["run", "--config", path, "--out",
                             str(out)]) == 0
        for name in ("steady_state.csv", "trajectory.csv"):
            blobs = [(out / name).read_bytes() for out in outs]
            assert blobs[0] == blobs[1]
        header = (outs[0] / "trajectory.csv").read_text().splitlines()[0]
        assert header.startswith("time,pop0,pop1,pop2")
        assert header.endswith("dist_ss")

    def test_diverging_trajectory_exits_2_with_diagnostic(self, tmp_path,
                                                          capsys):
        extra = ("[integration]\nt_final = 500.0\nstep_h = 50.0\n"
                 "sample_stride = 5\n")
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", self.sc_config(tmp_path, extra),
                       "--out", str(out)])
        assert rc == 2
        assert "numerical failure" in capsys.readouterr().err
        text = (out / "failure.txt").read_text()
        assert text.startswith("IntegrationAbort")

    def test_quantum_run_emits_tables_and_qfunction(self, tmp_path, capsys):
        out = tmp_path / "out"
        rc = cli.main(["run", "--config",
                       write_config(tmp_path, QUANTUM_RUN),
                       "--out", str(out)])
        assert rc == 0
        assert "quantum run:" in capsys.readouterr().out
        for name in ("thermo.csv", "matter.csv", "field.csv",
                     "qfunction_t10.txt", "manifest.json"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        inv = manifest["summary"]["invariants"]
        assert max(inv["max_first_law_res1"], inv["max_first_law_res2"]) < 1e-9
        assert inv["min_sigma"] > -1e-9
        for name, entry in manifest["files"].items():
            blob = (out / name).read_bytes()
            assert hashlib.sha256(blob).hexdigest() == entry["sha256"]
        header = (out / "thermo.csv").read_text().splitlines()[0]
        assert header.split(",")[0] == "time"

    def test_quantum_blowup_exits_2(self, tmp_path, capsys):
        doc = QUANTUM_RUN.replace("step_h = 0.01", "step_h = 5.0") \
                         .replace("t_final = 30.0", "t_final = 100.0")
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", write_config(tmp_path, doc),
                       "--out", str(out)])
        assert rc == 2
        assert "trace drift" in capsys.readouterr().err
        text = (out / "failure.txt").read_text()
        assert text.startswith("IntegrationAbort")

    def test_sweep_writes_index_and_points(self, tmp_path):
        extra = ('[sweep]\nparameter = "semiclassical.lambda_sc"\n'
                 "values = [0.5, 1.0]\n")
        out = tmp_path / "sweep"
        rc = cli.main(["sweep", "--config", self.sc_config(tmp_path, extra),
                       "--out", str(out)])
        assert rc == 0
        index = json.loads((out / "sweep.json").read_text())
        assert index["parameter"] == "semiclassical.lambda_sc"
        assert index["values"] == [0.5, 1.0]
        rows = [read_csv_row(Path(index["points"][key]) / "steady_state.csv")
                for key in ("0.5", "1.0")]
        assert float(rows[0]["lambda_sc"]) == 0.5
        assert float(rows[0]["r"]) > float(rows[1]["r"]) > 1.0

    def test_sweep_of_compare_mode_is_refused(self, tmp_path, capsys):
        path = write_config(tmp_path, """\
            mode = "compare"
            [model]
            [sweep]
            parameter = "alpha_abs"
            values = [1.0]
            """)
        rc = cli.main(["sweep", "--config", path])
        assert rc == 1
        assert "own subcommand" in capsys.readouterr().err

    def test_compare_subcommand_checks_mode(self, tmp_path, capsys):
        rc = cli.main(["compare", "--config", self.sc_config(tmp_path)])
        assert rc == 1
        assert "compare" in capsys.readouterr().err

    def test_compare_requires_alpha_parameter(self, tmp_path, capsys):
        path = write_config(tmp_path, """\
            mode = "compare"
            [model]
            [integration]
            t_final = 5.0
            [sweep]
            parameter = "model.n01"
            values = [1.0]
            """)
        rc = cli.main(["compare", "--config", path])
        assert rc == 1
        assert "alpha_abs" in capsys.readouterr().err

    def test_reproduce_subcommand_checks_mode(self, tmp_path, capsys):
        rc = cli.main(["reproduce", "--config", self.sc_config(tmp_path)])
        assert rc == 1
        assert "reproduce-paper" in capsys.readouterr().err

    def test_validate_jcm_battery(self, tmp_path, capsys):
        path = write_config(tmp_path, """\
            mode = "validate-jcm"
            [jcm]
            lam = 1.0
            n_fock = 3
            """)
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", path, "--out", str(out)])
        assert rc == 0
        lines = (out / "validation.csv").read_text().splitlines()
        assert lines[0].startswith("criterion,")
        assert len(lines) >= 3  # period, entropy, exponential oracle
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["summary"]["failed"] == 0
        assert manifest["summary"]["checks"] == len(lines) - 1


class TestComparePlumbing:
    """Point construction and row assembly, without any propagation."""

    def compare_cfg(self):
        return structure_config({
            "mode": "compare", "out_dir": "runs/cmp",
            "model": {"n_fock": 8},
            "integration": {"t_final": 5.0},
            "sweep": {"parameter": "alpha_abs", "values": [0.0, 2.0]}})

    def test_zero_alpha_point_builds_a_vacuum_start(self, tmp_path):
        cfg = self.compare_cfg()
        raw = cli._compare_point_raw(cfg, tmp_path, 0.0)
        point = structure_config(raw)
        assert point.mode == "quantum"
        assert point.sweep is None
        assert point.initial.field_type == "fock"
        assert point.initial.field_n == 0
        assert point.model.n_fock == 30  # floor wins over the base model
        rho0 = build_initial_state(point.initial, point.model.build())
        assert rho0[30, 30] == 1.0

    def test_coherent_point_sizes_the_Fock_space(self, tmp_path):
        cfg = self.compare_cfg()
        raw = cli._compare_point_raw(cfg, tmp_path, 2.0)
        point = structure_config(raw)
        assert point.initial.alpha == 2.0 + 0.0j
        assert point.model.n_fock == 40
        assert raw["out_dir"].endswith("alpha_2")

    def test_row_against_the_closed_form(self):
        params = MaserParams()
        ref = sc_steady_state(SemiclassicalParams.from_quantum(params, 2.0))
        flux = {"P_m": ref.P_ss, "Qdot_mH": ref.Qdot_H_ss,
                "Qdot_H": ref.Qdot_H_ss, "Qdot_C": ref.Qdot_C_ss,
                "detected": True}
        row = cli._compare_row(params, 2.0,
                               {"flux_summary": flux, "final_n_fock": 40})
        assert row["lambda_sc"] == 2.0
        assert row["P_dev"] < 1e-12
        assert row["Qdot_H_dev"] < 1e-12
        assert row["Qdot_C_dev"] < 1e-12
        assert np.isclose(row["eta_quantum"], 0.75, rtol=1e-12)
        assert np.isclose(row["eta_classical"], 0.75, rtol=1e-12)

    def test_zero_alpha_row_has_no_relative_deviation(self):
        flux = {"P_m": 1e-9, "Qdot_mH": -2e-9, "Qdot_H": -2e-9,
                "Qdot_C": 1e-9, "detected": False}
        row = cli._compare_row(MaserParams(), 0.0,
                               {"flux_summary": flux, "final_n_fock": 30})
        assert row["P_classical"] == 0.0
        assert math.isnan(row["P_dev"])
        assert math.isnan(row["eta_quantum"])  # not an engine, no ratio
        assert math.isnan(row["eta_classical"])

    def test_row_needs_flux_averages(self):
        with pytest.raises(ValueError, match="too few samples"):
            cli._compare_row(MaserParams(), 1.0, {"final_n_fock": 30})
