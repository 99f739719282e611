"""End-to-end command line checks via subprocess."""

import json
import math
import os
import subprocess
import sys

import pytest

TINY = """\
schema: 1
name: tiny
dim: 12
guard: 4
kappa: 0.1
perturbation_order: 2
grid: {t0: 0.0, t1: 6.283185307179586, steps: 1500}
omega: {form: constant, c: [1.0, 0.0]}
alpha: {form: constant, c: [0.0, 1.0]}
beta: {form: constant, c: [0.0, 1.0]}
"""

CONTROL = """\
schema: 1
name: control
dim: 12
guard: 4
kappa: 0.1
perturbation_order: 2
grid: {t0: 0.0, t1: 6.283185307179586, steps: 1500}
omega: {form: constant, c: [1.0, 0.0]}
alpha: {form: constant, c: [1.0, 0.0]}
beta: {form: constant, c: [0.0, 1.0]}
"""

SERIES_HEADER = (
    "t,u_re,u_im,f_re,f_im,theta_re,theta_im,chi,Phi_0,Phi_1,Phi_2,Phi_3,"
    "metric_constancy,r2,r7,equivalence_sanity,equivalence_fixed_metric,"
    "equivalence_observable"
)


def run_cli(*args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "dysonmap.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.yaml").write_text(TINY)
    (root / "control.yaml").write_text(CONTROL)
    return root


@pytest.fixture(scope="module")
def tiny_run_out(work):
    out = work / "run1"
    proc = run_cli("run", str(work / "tiny.yaml"), "--out", str(out))
    return proc, out


class TestRun:
    def test_passes_and_writes_artifacts(self, tiny_run_out):
        proc, out = tiny_run_out
        assert proc.returncode == 0, proc.stderr
        assert "PASS pt_label=UNBROKEN" in proc.stdout
        summary = json.loads((out / "summary.json").read_text())
        assert summary["passed"] is True
        assert summary["scenario"] == "tiny"
        assert summary["failing"] == []

    def test_rerun_is_byte_identical(self, work, tiny_run_out):
        _, out = tiny_run_out
        out2 = work / "run2"
        proc = run_cli("run", str(work / "tiny.yaml"), "--out", str(out2))
        assert proc.returncode == 0
        for name in ("series.csv", "summary.json"):
            assert (out / name).read_bytes() == (out2 / name).read_bytes()

    def test_series_table_layout(self, tiny_run_out):
        _, out = tiny_run_out
        lines = (out / "series.csv").read_text().rstrip("\n").split("\n")
        assert lines[0] == SERIES_HEADER
        assert len(lines) == 1502  # header + one row per grid point
        cols = lines[0].split(",")
        i_r2, i_r7 = cols.index("r2"), cols.index("r7")
        first = lines[1].split(",")
        second = lines[2].split(",")
        last = lines[-1].split(",")
        # the flow-identity stencil needs a neighbor on each side
        assert first[i_r2] == "" and first[i_r7] == ""
        assert second[i_r2] != "" and second[i_r7] != ""
        assert last[i_r2] == "" and last[i_r7] == ""
        assert float(first[0]) == 0.0
        assert float(last[0]) == pytest.approx(6.283185307179586)

    def test_control_fails_with_named_checks(self, work):
        out = work / "ctrl"
        proc = run_cli("run", str(work / "control.yaml"), "--out", str(out))
        assert proc.returncode == 1
        assert "FAIL failing=" in proc.stdout
        for token in ("(ii)", "metric_constancy", "r7", "pt_label=BROKEN"):
            assert token in proc.stdout

    def test_no_drive_hits_integrator_floor(self, work):
        out = work / "k0"
        proc = run_cli(
            "run", str(work / "tiny.yaml"), "--set", "kappa=0.0", "--out", str(out)
        )
        assert proc.returncode == 0, proc.stderr
        checks = json.loads((out / "summary.json").read_text())["checks"]
        assert checks["metric_constancy"]["value"] < 1e-7
        assert checks["r2"]["value"] < 1e-6
        assert checks["r7"]["value"] < 1e-10

    def test_set_override_changes_physics(self, work):
        out = work / "khalf"
        proc = run_cli(
            "run", str(work / "tiny.yaml"), "--set", "kappa=0.05", "--out", str(out)
        )
        assert proc.returncode == 0, proc.stderr
        checks = json.loads((out / "summary.json").read_text())["checks"]
        # terminal deviation scales as pi kappa^2
        assert checks["analytic_vs_numeric"]["value"] == pytest.approx(
            math.pi * 0.05**2, rel=2e-3
        )


class TestConfigErrors:
    def test_negative_kappa(self, work):
        proc = run_cli("run", str(work / "tiny.yaml"), "--set", "kappa=-0.2")
        assert proc.returncode == 2
        assert "configuration error" in proc.stderr

    def test_unknown_key_suggests_nearest(self, work):
        proc = run_cli("run", str(work / "tiny.yaml"), "--set", "omga=2.0")
        assert proc.returncode == 2
        assert "omega" in proc.stderr

    def test_unknown_schema(self, work):
        bad = work / "bad_schema.yaml"
        bad.write_text(TINY.replace("schema: 1", "schema: 2"))
        proc = run_cli("run", str(bad))
        assert proc.returncode == 2

    def test_missing_file(self, work):
        proc = run_cli("run", str(work / "nope.yaml"))
        assert proc.returncode == 2

    def test_step_guard_maps_to_exit_3(self, work):
        proc = run_cli("run", str(work / "tiny.yaml"), "--set", "grid.steps=50")
        assert proc.returncode == 3
        assert "1416" in proc.stderr


class TestSweep:
    def test_scan_writes_table(self, work):
        out = work / "sweep1"
        proc = run_cli(
            "sweep", str(work / "tiny.yaml"), "--axis", "kappa:0.05:0.1:3",
            "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        lines = (out / "sweep.csv").read_text().rstrip("\n").split("\n")
        assert lines[0] == "kappa,pt_label,im_energy_max,metric_constancy_max,isospectrality_max"
        assert len(lines) == 4
        for row in lines[1:]:
            assert row.split(",")[1] == "UNBROKEN"

    def test_parallel_scan_identical(self, work):
        out = work / "sweep2"
        proc = run_cli(
            "sweep", str(work / "tiny.yaml"), "--axis", "kappa:0.05:0.1:3",
            "--out", str(out), env_extra={"DYSONMAP_WORKERS": "2"},
        )
        assert proc.returncode == 0, proc.stderr
        assert (out / "sweep.csv").read_bytes() == (work / "sweep1" / "sweep.csv").read_bytes()


class TestPtPhase:
    def test_drive_phase_scan(self, work):
        out = work / "pt"
        proc = run_cli(
            "pt-phase", "s1", "--axis", "alpha.c.arg:0:3.141592653589793:9",
            "--out", str(out),
        )
        assert proc.returncode == 0, proc.stderr
        assert "label changes" in proc.stdout
        lines = (out / "pt_phase.csv").read_text().rstrip("\n").split("\n")
        assert lines[0] == "alpha.c.arg,pt_label,im_energy_max,boundary_quantity"
        assert len(lines) == 10
        labels = []
        for row in lines[1:]:
            phi_s, label, im_s, boundary_s = row.split(",")
            phi = float(phi_s)
            labels.append(label)
            assert abs(float(boundary_s) - abs(math.cos(phi))) < 1e-9
            assert abs(float(im_s) - 2 * 0.1**2 * abs(math.cos(phi))) < 1e-8
        assert [i for i, lab in enumerate(labels) if lab == "UNBROKEN"] == [4]

    def test_single_point_summary(self, work):
        out = work / "pt_one"
        proc = run_cli("pt-phase", "s1", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert "label: UNBROKEN" in proc.stdout
        lines = (out / "pt_phase.csv").read_text().rstrip("\n").split("\n")
        assert len(lines) == 2


def test_diagnose_prints_check_table(work):
    out = work / "diag"
    proc = run_cli("diagnose", str(work / "tiny.yaml"), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    assert "PASS pt_label=UNBROKEN" in proc.stdout
    assert "metric_constancy" in proc.stdout
    assert (out / "summary.json").exists()
