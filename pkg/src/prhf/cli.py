"""Batch front-end: ``prhf {solve,ledger,regularity,verify,all} --config PATH``.

Phases run in the order solve, ledger, regularity (scan, Kato, decay and the
L^p audit), verify.  Every artifact is listed in ``manifest.txt`` with its
SHA-256.  Exit codes: 0 every enabled contract passed, 1 a numerical
contract failed, 2 a precondition refused the run, 3 an I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np
import scipy

from . import __version__
from .config import RunConfig, default_text, parse_config
from .errors import ConvergenceError, PreconditionError, ResolutionError
from .grid import Field, read_snapshot, write_snapshot
from .operators import HFOperator
from .regularity import (audit_csv, build_ledger, decay_fit, derivative_growth_scan, format_float,
                         kato_check, proposition_audit, scan_csv)
from .scf import eigen_residuals, picard_residual, solve
from .state import OrbitalSet

__all__ = ["EXIT_OK", "EXIT_CONTRACT", "EXIT_PRECONDITION", "EXIT_IO", "RunManifest", "run", "main"]

log = logging.getLogger("prhf")

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_PRECONDITION = 2
EXIT_IO = 3

PHASES = {
    "solve": ("solve",),
    "ledger": ("ledger",),
    "regularity": ("ledger", "regularity"),
    "verify": ("verify",),
    "all": ("solve", "ledger", "regularity", "verify"),
}

GRAM_TOL = 1e-10
PICARD_TOL = 1e-5
KATO_SLACK = 1e-8
STATE_FILE = "orbitals.txt"


@dataclass
class RunManifest:
    command: str
    config_text: str
    versions: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    results: dict[str, str] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    error: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_text(self) -> str:
        lines = [f"command = {self.command}", f"exit_code = {self.exit_code}"]
        if self.error:
            lines.append(f"error = {self.error}")
        lines += [f"version.{k} = {v}" for k, v in self.versions.items()]
        lines += [f"time.{k} = {v:.3f}" for k, v in self.timings.items()]
        lines += [f"input.{k} = {v}" for k, v in self.inputs.items()]
        lines += [f"output.{k} = {v}" for k, v in self.outputs.items()]
        lines += [f"check.{k} = {'pass' if v else 'fail'}" for k, v in self.checks.items()]
        lines += [f"result.{k} = {v}" for k, v in self.results.items()]
        lines += [f"config.{line}" for line in self.config_text.splitlines()]
        return "\n".join(lines) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions() -> dict[str, str]:
    return {"prhf": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


class _Writer:
    """Writes artifacts into the output directory and records their hashes."""

    def __init__(self, directory: Path, manifest: RunManifest):
        self.dir = directory
        self.manifest = manifest

    def text(self, name: str, content: str) -> None:
        data = content.encode()
        (self.dir / name).write_bytes(data)
        self.manifest.outputs[name] = _sha256(data)

    def snapshot(self, name: str, f: Field) -> None:
        path = self.dir / name
        write_snapshot(path, f)
        self.manifest.outputs[name] = _sha256(path.read_bytes())


# ---------------------------------------------------------------------------
# state persistence


def _state_text(state: OrbitalSet) -> str:
    lines = [f"count = {len(state)}"]
    lines += [f"epsilon.{i} = {format_float(e)}" for i, e in enumerate(state.epsilons)]
    return "\n".join(lines) + "\n"


def _load_state(cfg: RunConfig, directory: Path, manifest: RunManifest) -> OrbitalSet:
    path = directory / STATE_FILE
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"no stored orbitals in {directory} (run 'solve' with output.snapshots = true): {exc}")
    values = dict(line.split(" = ", 1) for line in text.splitlines() if " = " in line)
    count = int(values["count"])
    eps = [float(values[f"epsilon.{i}"]) for i in range(count)]
    manifest.inputs[STATE_FILE] = _sha256(text.encode())
    fields_ = []
    for i in range(count):
        snap = directory / f"orbital_{i}.prhf"
        fields_.append(read_snapshot(snap).to_real())
        manifest.inputs[snap.name] = _sha256(snap.read_bytes())
    grid = cfg.make_grid()
    if fields_ and fields_[0].grid != grid:
        raise PreconditionError(f"stored orbitals live on {fields_[0].grid}, configuration asks for {grid}")
    return OrbitalSet(tuple(fields_), eps, cfg.make_physics(), grid)


# ---------------------------------------------------------------------------
# phases


def _phase_solve(cfg: RunConfig, force: bool, out: _Writer, man: RunManifest) -> OrbitalSet:
    physics = cfg.make_physics()
    grid = cfg.make_grid()
    state, report = solve(grid, physics, cfg.make_scf(force))
    op = HFOperator.from_state(state)
    resid = eigen_residuals(state, op)
    picard = picard_residual(state, op)
    norms = np.sqrt(np.sum(np.abs(state.stack()) ** 2, axis=(1, 2, 3)) * grid.cell_volume)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "energy", "max_residual"])
    for it, (e, r) in enumerate(zip(report.energy_history, report.residual_history), start=1):
        w.writerow([it, format_float(e), format_float(r)])
    out.text("scf_history.csv", buf.getvalue())
    if cfg.output.snapshots:
        for i, f in enumerate(state.orbitals):
            out.snapshot(f"orbital_{i}.prhf", f)
        out.text(STATE_FILE, _state_text(state))

    man.checks["solve.converged"] = report.converged
    man.checks["solve.eigen_residual"] = bool(np.all(resid <= cfg.scf.tol_residual * norms))
    man.checks["solve.gram"] = state.gram_deviation() <= GRAM_TOL
    man.checks["solve.energy_floor"] = report.energy >= -physics.N / physics.alpha
    man.checks["solve.picard_residual"] = bool(np.all(picard <= PICARD_TOL))
    man.results["solve.iterations"] = str(report.iterations)
    man.results["solve.energy"] = format_float(report.energy)
    man.results["solve.gauge_shift"] = format_float(report.gauge_shift)
    man.results["solve.epsilons_hartree"] = ",".join(format_float(e) for e in state.epsilons_hartree)
    man.results["solve.max_residual"] = format_float(float(resid.max()))
    man.results["solve.max_picard_residual"] = format_float(float(picard.max()))
    man.results["solve.flags"] = ",".join(report.flags) or "none"
    return state


def _phase_ledger(cfg: RunConfig, state: OrbitalSet, out: _Writer, man: RunManifest):
    r = cfg.regularity
    ledger = build_ledger(state, r.x0, r.p, cfg.k_inputs())
    out.text("ledger.txt", ledger.as_text())
    for name, ok in ledger.assertions():
        man.checks[f"ledger.{name}"] = bool(ok)
    return ledger


def _phase_regularity(cfg: RunConfig, state: OrbitalSet, ledger, out: _Writer, man: RunManifest) -> None:
    r = cfg.regularity
    reports = []
    for i, f in enumerate(state.orbitals):
        rep = derivative_growth_scan(f, r.x0, max_order=r.max_order)
        reports.append((i, rep))
        lhs, rhs = kato_check(f)
        fit = decay_fit(f)
        man.checks[f"regularity.kato.{i}"] = lhs <= rhs * (1.0 + KATO_SLACK)
        man.checks[f"regularity.scan_bounded.{i}"] = rep.R_fit > 0 and math.isfinite(rep.R_fit) and rep.bounded()
        man.results[f"regularity.R_fit.{i}"] = format_float(rep.R_fit)
        man.results[f"regularity.C_fit.{i}"] = format_float(rep.C_fit)
        man.results[f"regularity.kato.{i}"] = f"{format_float(lhs)},{format_float(rhs)}"
        man.results[f"regularity.decay_rate.{i}"] = format_float(fit.rate)
        man.results[f"regularity.flags.{i}"] = ",".join(rep.flags + fit.flags) or "none"
    audit = proposition_audit(state, ledger, r.p, r.j_max)
    out.text("regularity_scan.csv", scan_csv(reports, audit))
    out.text("proposition_audit.csv", audit_csv(audit))
    man.checks["regularity.audit"] = all(row.passed for row in audit)
    man.results["regularity.audit_rows"] = str(len(audit))
    man.results["regularity.audit_min_margin"] = format_float(min(row.margin for row in audit))


def _phase_verify(cfg: RunConfig, out: _Writer, man: RunManifest) -> None:
    from .verify.suite import run_suite, verify_csv

    v = cfg.verify
    rows = run_suite(trials=v.trials, seed=v.seed, K1=v.K1, b1_order=v.b1_order, c3_cases=v.c3_cases,
                     c2_cases=v.c2_cases)
    out.text("verify.csv", verify_csv(rows))
    lemmas = sorted({row.lemma for row in rows})
    for lemma in lemmas:
        man.checks[f"verify.{lemma}"] = all(row.passed for row in rows if row.lemma == lemma)
    advisories = [row.case for row in rows if row.case.endswith(",advisory")]
    man.results["verify.rows"] = str(len(rows))
    if advisories:
        man.results["verify.advisory"] = "raise K1"


# ---------------------------------------------------------------------------


def run(cfg: RunConfig, command: str = "all", force: bool = False) -> RunManifest:
    """Execute the phases of ``command`` and write all artifacts including the manifest."""
    man = RunManifest(command, cfg.as_text(), _versions())
    man.inputs["config"] = _sha256(man.config_text.encode())
    directory = Path(cfg.output.directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        man.exit_code, man.error = EXIT_IO, str(exc)
        return man
    out = _Writer(directory, man)
    try:
        cfg.validate(force)
        state = None
        ledger = None
        for phase in PHASES[command]:
            t0 = time.perf_counter()
            log.info("phase %s", phase)
            if phase == "solve":
                state = _phase_solve(cfg, force, out, man)
            elif phase == "ledger":
                state = state if state is not None else _load_state(cfg, directory, man)
                ledger = _phase_ledger(cfg, state, out, man)
            elif phase == "regularity":
                _phase_regularity(cfg, state, ledger, out, man)
            elif phase == "verify":
                _phase_verify(cfg, out, man)
            man.timings[phase] = time.perf_counter() - t0
        man.exit_code = EXIT_OK if man.passed else EXIT_CONTRACT
    except (PreconditionError, ResolutionError) as exc:
        man.exit_code, man.error = EXIT_PRECONDITION, str(exc)
    except ConvergenceError as exc:
        man.exit_code, man.error = EXIT_CONTRACT, str(exc)
    except OSError as exc:
        man.exit_code, man.error = EXIT_IO, str(exc)
    try:
        (directory / "manifest.txt").write_text(man.as_text())
    except OSError as exc:
        log.error("cannot write manifest: %s", exc)
        man.exit_code = EXIT_IO
    return man


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prhf", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=sorted(PHASES), help="phases to run")
    ap.add_argument("--config", metavar="PATH", help="configuration file (section.key = value lines)")
    ap.add_argument("--force", action="store_true", help="solve even when Z*alpha >= 2/pi")
    ap.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(default_text())
        return EXIT_OK
    if args.command is None:
        _parser().print_usage(sys.stderr)
        return EXIT_PRECONDITION
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("PRHF_THREADS")
    if threads is not None and not (threads.isdigit() and int(threads) > 0):
        log.warning("PRHF_THREADS=%r is not a positive integer; using 1", threads)
    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
    except PreconditionError as exc:
        print(f"prhf: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as exc:
        print(f"prhf: {exc}", file=sys.stderr)
        return EXIT_IO
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        man = run(cfg, args.command, force=args.force)
    if man.error:
        print(f"prhf: {man.error}", file=sys.stderr)
    for name, ok in man.checks.items():
        if not ok:
            print(f"prhf: contract failed: {name}", file=sys.stderr)
    print(f"prhf {args.command}: exit {man.exit_code}, {len(man.outputs)} files in {cfg.output.directory}")
    return man.exit_code
