import io
import subprocess
import sys

import numpy as np
import pytest

from ksym.catalog import NAMES, catalog_text, vibrating_string
from ksym.cli import EXIT_FAIL, EXIT_INPUT, EXIT_PASS, EXIT_RUNTIME, main
from ksym.problemfile import format_problem
from ksym.report import parse_report


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, parse_report(out.getvalue()) if code in (EXIT_PASS, EXIT_FAIL) else out.getvalue(), err.getvalue()


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_catalog_prints_problem_text():
    out = io.StringIO()
    assert main(["catalog", "vibrating-string"], stdout=out) == EXIT_PASS
    assert out.getvalue() == catalog_text("vibrating-string")


def test_catalog_unknown_name():
    code, _, err = run("catalog", "pendulum")
    assert code == EXIT_INPUT
    assert all(name in err for name in NAMES)


def test_check_hj_string_passes():
    code, rep, _ = run("check-hj", "builtin:vibrating-string")
    assert code == EXIT_PASS
    assert float(rep["hj.defect"]) < 1e-12
    assert rep["hj.verdict"] == "PASS" and rep["overall"] == "PASS"


def test_check_hj_detuned_string_fails(tmp_path):
    path = write(tmp_path, "b.ksym", format_problem(vibrating_string(b=1.1)))
    code, rep, _ = run("check-hj", path)
    assert code == EXIT_FAIL
    assert float(rep["hj.defect"]) == pytest.approx(0.21, rel=1e-12)
    assert rep["hj.verdict"] == "FAIL"


def test_check_hj_constant_hamiltonian(tmp_path):
    text = "[problem]\nkind = hamiltonian\nn = 2\nk = 1\n[hamiltonian]\nH = 2\n[section]\ngamma1_1 = q2\ngamma1_2 = q1\n"
    code, rep, _ = run("check-hj", write(tmp_path, "c.ksym", text), "--tol", "1e-14")
    assert code == EXIT_PASS and rep["hj.tol"] == "1e-14"


def test_check_hj_reports_failed_precondition(tmp_path):
    text = "[problem]\nkind = hamiltonian\nn = 2\nk = 1\n[hamiltonian]\nH = p1_1\n[section]\ngamma1_1 = q2\ngamma1_2 = -q1\n"
    code, rep, _ = run("check-hj", write(tmp_path, "r.ksym", text))
    assert code == EXIT_FAIL
    assert rep["closedness.verdict"] == "FAIL" and float(rep["closedness.defect"]) == 2.0
    assert "not closed" in rep["hj.reason"]


def test_check_hj_lagrangian_names_failing_form(tmp_path):
    text = "[problem]\nkind = lagrangian\nn = 2\nk = 1\n[lagrangian]\nL = 0.5*(v1_1^2 + v2_1^2)\n[section]\nX1_1 = q2\nX2_1 = -q1\n"
    code, rep, _ = run("check-hj", write(tmp_path, "l.ksym", text))
    assert code == EXIT_FAIL and rep["closedness.form"] == "1"


def test_check_hj_singular_lagrangian(tmp_path):
    text = "[problem]\nkind = lagrangian\nn = 1\nk = 2\n[lagrangian]\nL = (v1_1 + v1_2)^2\n[section]\nX1_1 = q1\nX1_2 = q1\n"
    code, rep, _ = run("check-hj", write(tmp_path, "s.ksym", text))
    assert code == EXIT_FAIL and rep["regularity.verdict"] == "FAIL"


def test_parse_error_exit_code_and_location(tmp_path):
    text = catalog_text("vibrating-string").replace("gamma1_1 = 2*q1", "gamma1_1 = 2*q1 )")
    code, _, err = run("check-hj", write(tmp_path, "e.ksym", text))
    assert code == EXIT_INPUT
    assert "e.ksym:10:" in err and "offset 5" in err


def test_missing_file():
    code, _, err = run("check-hj", "/nonexistent/problem.ksym")
    assert code == EXIT_INPUT and "no such file" in err


def test_solve_string(tmp_path):
    out = tmp_path / "out"
    report_path = tmp_path / "r.txt"
    code, rep, _ = run("solve", "builtin:vibrating-string", "--out", str(out), "--report", str(report_path))
    assert code == EXIT_PASS
    assert float(rep["hamilton.defect"]) < 1e-4
    assert float(rep["commutator.defect"]) == 0.0
    assert parse_report(report_path.read_text())["hamilton.defect"] == rep["hamilton.defect"]
    data = np.loadtxt(out / "psi.csv", delimiter=",", skiprows=1)
    exact = np.exp(0.5 * data[:, 0] - data[:, 1])
    assert np.abs(data[:, 2] / exact - 1).max() < 1e-8
    phase = np.loadtxt(out / "phase.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(phase[:, 3], 2 * phase[:, 2])


def test_solve_harmonic_is_affine(tmp_path):
    code, rep, _ = run("solve", "builtin:harmonic-sections", "--out", str(tmp_path))
    assert code == EXIT_PASS and float(rep["hamilton.defect"]) < 1e-10
    data = np.loadtxt(tmp_path / "psi.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 2], 1 + data[:, 0] - 0.5 * data[:, 1], atol=1e-14)


def test_solve_zero_hamiltonian_gives_constant_grid(tmp_path):
    text = ("[problem]\nkind = hamiltonian\nn = 1\nk = 2\n[hamiltonian]\nH = 0\n[section]\ngamma1_1 = q1\ngamma2_1 = 1\n"
            "[grid]\nt_min = 0, 0\nt_max = 1, 1\nsteps = 4, 4\nq0 = 0.5\n")
    code, rep, _ = run("solve", write(tmp_path, "z.ksym", text), "--out", str(tmp_path))
    assert code == EXIT_PASS
    data = np.loadtxt(tmp_path / "psi.csv", delimiter=",", skiprows=1)
    assert np.all(data[:, 2] == 0.5)


def test_solve_refuses_failed_hj_without_force(tmp_path):
    path = write(tmp_path, "b.ksym", format_problem(vibrating_string(b=1.1, steps=20)))
    code, rep, _ = run("solve", path, "--out", str(tmp_path / "o"))
    assert code == EXIT_FAIL and "skipped" in rep["solve"]
    assert not (tmp_path / "o").exists()
    code, rep, _ = run("solve", path, "--out", str(tmp_path / "o"), "--force")
    assert code == EXIT_FAIL
    assert rep["hamilton.verdict"] == "FAIL" and rep["integral_section.verdict"] == "PASS"


def test_solve_non_integrable_field(tmp_path):
    text = ("[problem]\nkind = lagrangian\nn = 2\nk = 2\n[lagrangian]\nL = 0.5*(v1_1^2 + v2_1^2 + v1_2^2 + v2_2^2)\n"
            "[section]\nX1_1 = 1\nX1_2 = 0\nX2_1 = 0\nX2_2 = q1\n"
            "[grid]\nt_min = 0, 0\nt_max = 1, 1\nsteps = 4, 4\nq0 = 0, 0\n[tolerances]\nclosedness = 10\nhj = 10\n")
    path = write(tmp_path, "nc.ksym", text)
    code, _, err = run("solve", path, "--out", str(tmp_path))
    assert code == EXIT_RUNTIME and "IntegrabilityError" in err
    code, rep, _ = run("solve", path, "--out", str(tmp_path), "--override-integrability")
    assert rep["commutator.verdict"] == "FAIL" and float(rep["path_independence.defect"]) == pytest.approx(1.0)


def test_solve_blow_up_is_a_runtime_error(tmp_path):
    text = ("[problem]\nkind = lagrangian\nn = 1\nk = 1\n[lagrangian]\nL = 0.5*v1_1^2 - q1^3/3\n[section]\nX1_1 = q1^2\n"
            "[grid]\nt_min = 0\nt_max = 2\nsteps = 100\nq0 = 1\n[tolerances]\nhj = 1e300\n")
    with np.errstate(over="ignore", invalid="ignore"):
        code, _, err = run("solve", write(tmp_path, "bu.ksym", text), "--out", str(tmp_path), "--force")
    assert code == EXIT_RUNTIME and "BlowUpError" in err and "node" in err


@pytest.mark.parametrize("name", NAMES)
def test_verify_accepts_solve_output(tmp_path, name):
    code, rep, _ = run("solve", f"builtin:{name}", "--out", str(tmp_path))
    assert code == EXIT_PASS
    for csv in ("psi.csv", "phase.csv", "velocity.csv"):
        if (tmp_path / csv).exists():
            code, rep, _ = run("verify", f"builtin:{name}", "--grid", str(tmp_path / csv))
            assert code == EXIT_PASS, (csv, rep)


def test_verify_locates_corrupted_column(tmp_path):
    run("solve", "builtin:vibrating-string", "--out", str(tmp_path))
    lines = (tmp_path / "phase.csv").read_text().splitlines()
    header, rows = lines[0], [list(map(float, ln.split(","))) for ln in lines[1:]]
    for r in rows:
        r[3] *= 2
    bad = header + "\n" + "\n".join(",".join(repr(x) for x in r) for r in rows) + "\n"
    code, rep, _ = run("verify", "builtin:vibrating-string", "--grid", write(tmp_path, "bad.csv", bad))
    assert code == EXIT_FAIL and rep["hamilton.verdict"] == "FAIL"
    # the defect scales with psi = exp(t1/2 - t2), largest at the interior corner t = (1, 0)
    assert rep["hamilton.max_node"] == "99,1"
    assert rep["hamilton.max_t"] == "0.99,0.01"


def test_verify_lagrangian_catches_perturbed_psi(tmp_path):
    run("solve", "builtin:string-lagrangian", "--out", str(tmp_path))
    data = np.loadtxt(tmp_path / "psi.csv", delimiter=",", skiprows=1)
    data[:, 2] += 0.1 * data[:, 0] ** 2
    np.savetxt(tmp_path / "bad.csv", data, delimiter=",", fmt="%.17g", header="t1,t2,q1", comments="")
    code, rep, _ = run("verify", "builtin:string-lagrangian", "--grid", str(tmp_path / "bad.csv"))
    assert code == EXIT_FAIL
    assert rep["integral_section.verdict"] == "FAIL" and rep["euler_lagrange.verdict"] == "FAIL"
    # sigma * d^2/dt1^2 (0.1 t1^2) = 0.8
    assert float(rep["euler_lagrange.defect"]) == pytest.approx(0.8, rel=1e-4)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("t1,t2,q1,q2\n0,0,1,1\n", "q1..q1"),
        ("t1,t2,q1,p1_1\n0,0,1,1\n0,1,1,1\n0,2,1,1\n1,0,1,1\n1,1,1,1\n1,2,1,1\n2,0,1,1\n2,1,1,1\n2,2,1,1\n", "missing"),
        ("t1,t2,q1,w\n0,0,1,1\n0,1,1,1\n0,2,1,1\n1,0,1,1\n1,1,1,1\n1,2,1,1\n2,0,1,1\n2,1,1,1\n2,2,1,1\n", "unexpected columns"),
    ],
)
def test_verify_schema_errors(tmp_path, text, fragment):
    code, _, err = run("verify", "builtin:vibrating-string", "--grid", write(tmp_path, "g.csv", text))
    assert code == EXIT_INPUT and fragment in err


def test_rerun_is_bit_identical(tmp_path):
    reports = []
    for d in ("a", "b"):
        code, rep, _ = run("solve", "builtin:vibrating-string", "--out", str(tmp_path / d))
        reports.append({k: v for k, v in rep.items() if not k.startswith(("time.", "output."))})
    assert reports[0] == reports[1]
    for csv in ("psi.csv", "phase.csv"):
        assert (tmp_path / "a" / csv).read_bytes() == (tmp_path / "b" / csv).read_bytes()


def test_hamiltonian_and_lagrangian_pipelines_agree(tmp_path):
    run("solve", "builtin:vibrating-string", "--out", str(tmp_path / "h"))
    run("solve", "builtin:string-lagrangian", "--out", str(tmp_path / "l"))
    h = np.loadtxt(tmp_path / "h" / "psi.csv", delimiter=",", skiprows=1)
    lg = np.loadtxt(tmp_path / "l" / "psi.csv", delimiter=",", skiprows=1)
    assert np.abs(h - lg).max() < 1e-6


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "ksym.cli", "check-hj", "builtin:vibrating-string"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and "overall=PASS" in proc.stdout
