import subprocess
import sys

import pytest

from prhf.cli import EXIT_CONTRACT, EXIT_IO, EXIT_OK, EXIT_PRECONDITION, main

SMALL = """
grid.n = 16
grid.box_length = 8.0
regularity.x0 = 2.5, 0, 0
regularity.max_order = 3
regularity.j_max = 2
scf.tol_residual = 1e-6
verify.trials = 2
verify.b1_order = 2
verify.c2_cases = 2
verify.c3_cases = 20
"""


def write_cfg(tmp_path, body, out="out"):
    path = tmp_path / f"{out}.cfg"
    path.write_text(body + f"\noutput.directory = {tmp_path / out}\n")
    return path


def manifest(tmp_path, out="out"):
    lines = (tmp_path / out / "manifest.txt").read_text().splitlines()
    return dict(line.split(" = ", 1) for line in lines)


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(tmp, SMALL)
    code = main(["solve", "--config", str(cfg)])
    return tmp, cfg, code


def test_solve_writes_artifacts(solved):
    tmp, _, code = solved
    assert code == EXIT_OK
    m = manifest(tmp)
    assert m["exit_code"] == "0"
    for name in ("scf_history.csv", "orbital_0.prhf", "orbital_1.prhf", "orbitals.txt"):
        assert len(m[f"output.{name}"]) == 64
    assert m["check.solve.converged"] == "pass"
    assert (tmp / "out" / "scf_history.csv").read_text().startswith("iteration,energy,max_residual\n")


def test_regularity_reuses_stored_orbitals(solved):
    tmp, cfg, _ = solved
    code = main(["regularity", "--config", str(cfg)])
    m = manifest(tmp)
    assert "input.orbital_0.prhf" in m
    assert (tmp / "out" / "ledger.txt").exists()
    assert (tmp / "out" / "proposition_audit.csv").exists()
    assert m["check.regularity.audit"] == "pass"
    assert code in (EXIT_OK, EXIT_CONTRACT)
    assert code == (EXIT_OK if all(v == "pass" for k, v in m.items() if k.startswith("check.")) else EXIT_CONTRACT)


def test_verify_only(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["verify", "--config", str(cfg)]) == EXIT_OK
    text = (tmp_path / "out" / "verify.csv").read_text()
    assert text.splitlines()[0] == "lemma,case,measured,bound,margin,status"
    assert ",fail\n" not in text


def test_verify_csv_byte_identical(tmp_path):
    a = write_cfg(tmp_path, SMALL, "a")
    b = write_cfg(tmp_path, SMALL, "b")
    main(["verify", "--config", str(a)])
    main(["verify", "--config", str(b)])
    assert (tmp_path / "a" / "verify.csv").read_bytes() == (tmp_path / "b" / "verify.csv").read_bytes()


def test_manifest_config_echo_reproduces(tmp_path):
    main(["verify", "--config", str(write_cfg(tmp_path, SMALL, "a"))])
    echoed = [line[len("config."):] for line in (tmp_path / "a" / "manifest.txt").read_text().splitlines()
              if line.startswith("config.")]
    body = "\n".join(line for line in echoed if not line.startswith("output.directory"))
    main(["verify", "--config", str(write_cfg(tmp_path, body, "b"))])
    assert (tmp_path / "a" / "verify.csv").read_bytes() == (tmp_path / "b" / "verify.csv").read_bytes()


def test_contract_failure_exit_1(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "scf.max_iter = 1\n")
    assert main(["solve", "--config", str(cfg)]) == EXIT_CONTRACT
    assert manifest(tmp_path)["check.solve.converged"] == "fail"


@pytest.mark.parametrize("extra", ["physics.Z = 100", "regularity.p = 3", "physics.N = 0"])
def test_precondition_exit_2(tmp_path, extra):
    cfg = write_cfg(tmp_path, SMALL + extra + "\n")
    assert main(["solve", "--config", str(cfg)]) == EXIT_PRECONDITION
    assert "error" in manifest(tmp_path)


def test_malformed_config_exit_2(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("grid.n = 16\ngrid.bogus = 1\n")
    assert main(["all", "--config", str(path)]) == EXIT_PRECONDITION


def test_missing_config_exit_3(tmp_path):
    assert main(["all", "--config", str(tmp_path / "missing.cfg")]) == EXIT_IO


def test_missing_orbitals_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["ledger", "--config", str(cfg)]) == EXIT_IO


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = tmp_path / "c.cfg"
    path.write_text(SMALL + f"output.directory = {blocker / 'sub'}\n")
    assert main(["verify", "--config", str(path)]) == EXIT_IO


def test_print_defaults(capsys):
    assert main(["--print-defaults"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "grid.box_length = 18.0" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "prhf", "--print-defaults"], capture_output=True, text=True)
    assert res.returncode == 0 and "physics.Z" in res.stdout
