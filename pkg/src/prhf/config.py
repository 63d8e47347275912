"""Run configuration: a line-based ``section.key = value`` file.

Blank lines and ``#`` comments are ignored.  Every key has a typed default,
so an empty file is a valid configuration.  Unknown keys and values that do
not convert to the default's type are errors that carry the line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import PreconditionError
from .grid import Grid3
from .regularity import DEFAULT_K, MAX_DERIVATIVE_ORDER
from .scf import ScfConfig
from .state import Physics

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "default_text"]


class ConfigError(PreconditionError):
    """A malformed configuration line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class PhysicsSection:
    Z: float = 2.0
    N: int = 2
    alpha: float = 1.0 / 137.035999


@dataclass
class GridSection:
    n: int = 48
    box_length: float = 18.0


@dataclass
class ScfSection:
    mode: str = "eigen"
    mixing: float = 0.3
    max_iter: int = 200
    tol_residual: float = 1e-6
    tol_energy: float = 1e-8
    seed: int = 0
    anderson: bool = False
    anderson_depth: int = 8
    preconditioner: str = "kinetic"


@dataclass
class RegularitySection:
    x0: tuple[float, float, float] = (1.5, 0.0, 0.0)
    p: float = 5.0
    max_order: int = 8
    j_max: int = 6


@dataclass
class VerifySection:
    trials: int = 10
    seed: int = 0
    K1: float = DEFAULT_K["K1"]
    K2: float = DEFAULT_K["K2"]
    K3: float = DEFAULT_K["K3"]
    K4: float = DEFAULT_K["K4"]
    C_star: float = DEFAULT_K["C_star"]
    b1_order: int = 6
    c2_cases: int = 20
    c3_cases: int = 1000


@dataclass
class OutputSection:
    directory: str = "prhf_out"
    snapshots: bool = True


_SECTIONS = {
    "physics": PhysicsSection,
    "grid": GridSection,
    "scf": ScfSection,
    "regularity": RegularitySection,
    "verify": VerifySection,
    "output": OutputSection,
}

_DOC = {
    "physics.Z": "nuclear charge",
    "physics.N": "number of electrons (orbitals)",
    "physics.alpha": "fine-structure constant",
    "grid.n": "samples per axis (even, >= 8)",
    "grid.box_length": "side of the periodic box in bohr",
    "scf.mode": "eigen or fixed_point",
    "scf.mixing": "damping in (0, 1]",
    "scf.anderson": "Anderson acceleration in fixed_point mode",
    "scf.preconditioner": "kinetic, inverse_energy or none",
    "regularity.x0": "scan centre, three comma-separated numbers",
    "regularity.p": "Lebesgue exponent of the inductive estimate (>= 5)",
    "regularity.max_order": f"highest derivative order scanned (<= {MAX_DERIVATIVE_ORDER})",
    "regularity.j_max": "highest induction order audited",
    "verify.trials": "random inputs per operator probe",
    "verify.K1": "multiplier-norm constant (nonconstructive, existence only)",
    "verify.C_star": "localization gradient constant",
    "output.directory": "where artifacts are written",
    "output.snapshots": "write PRHF1 orbital snapshots",
}


@dataclass
class RunConfig:
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    grid: GridSection = field(default_factory=GridSection)
    scf: ScfSection = field(default_factory=ScfSection)
    regularity: RegularitySection = field(default_factory=RegularitySection)
    verify: VerifySection = field(default_factory=VerifySection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- derived objects ------------------------------------------------

    def make_physics(self) -> Physics:
        try:
            return Physics(self.physics.alpha, self.physics.Z, self.physics.N)
        except ValueError as exc:
            raise PreconditionError(str(exc)) from None

    def make_grid(self) -> Grid3:
        try:
            return Grid3(self.grid.n, self.grid.box_length)
        except ValueError as exc:
            raise PreconditionError(str(exc)) from None

    def make_scf(self, force: bool = False) -> ScfConfig:
        s = self.scf
        return ScfConfig(mode=s.mode, mixing=s.mixing, max_iter=s.max_iter, tol_residual=s.tol_residual,
                         tol_energy=s.tol_energy, seed=s.seed, anderson=s.anderson,
                         anderson_depth=s.anderson_depth, preconditioner=s.preconditioner, force=force)

    def k_inputs(self) -> dict[str, float]:
        return {k: float(getattr(self.verify, k)) for k in DEFAULT_K}

    def validate(self, force: bool = False) -> None:
        """Run every cheap precondition before any compute starts."""
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ph = self.make_physics()
        self.make_grid()
        self.make_scf(force).validate(ph.N)
        if not ph.stable and not force:
            raise PreconditionError(
                f"Z*alpha = {ph.coupling:.6g} >= 2/pi; pass --force to run anyway")
        r = self.regularity
        if math.hypot(*r.x0) == 0.0:
            raise PreconditionError("regularity.x0 must differ from the nucleus")
        if not r.p >= 5:
            raise PreconditionError(f"regularity.p must be >= 5, got {r.p}")
        if not 0 <= r.max_order <= MAX_DERIVATIVE_ORDER:
            raise PreconditionError(f"regularity.max_order must lie in [0, {MAX_DERIVATIVE_ORDER}]")
        if r.j_max < 0:
            raise PreconditionError("regularity.j_max must be >= 0")
        v = self.verify
        if v.trials < 1:
            raise PreconditionError("verify.trials must be >= 1")
        for k in DEFAULT_K:
            if not getattr(v, k) > 0:
                raise PreconditionError(f"verify.{k} must be positive")
        if not 0 <= v.b1_order <= 6:
            raise PreconditionError("verify.b1_order must lie in [0, 6]")

    # -- text form -------------------------------------------------------

    def as_text(self) -> str:
        lines = []
        for name in _SECTIONS:
            sec = getattr(self, name)
            for f in fields(sec):
                lines.append(f"{name}.{f.name} = {_render(getattr(sec, f.name))}")
        return "\n".join(lines) + "\n"


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_render(float(v)) for v in value)
    return str(value)


def _convert(raw: str, default, key: str, line: int):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [float(p) for p in raw.strip("()").split(",") if p.strip()]
            if len(parts) != len(default):
                raise ValueError(raw)
            return tuple(parts)
        return raw
    except ValueError:
        kind = type(default).__name__ if not isinstance(default, tuple) else f"{len(default)} numbers"
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind}", line) from None


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'section.key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(f"key {key!r} must have the form section.key", lineno)
        section, name = key.split(".")
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}", lineno)
        sec = getattr(cfg, section)
        names = {f.name for f in fields(sec)}
        if name not in names:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"{key} already set on line {seen[key]}", lineno)
        seen[key] = lineno
        setattr(sec, name, _convert(raw, getattr(sec, name), key, lineno))
    return cfg


def parse_config(path) -> RunConfig:
    """Read a configuration file; ``OSError`` propagates for a missing file."""
    return parse_config_text(Path(path).read_text())


def default_text() -> str:
    """The defaults as a commented, parseable configuration."""
    out = ["# prhf run configuration (defaults)"]
    cfg = RunConfig()
    for line in cfg.as_text().splitlines():
        key = line.split(" = ", 1)[0]
        doc = _DOC.get(key)
        out.append(line if doc is None else f"{line}  # {doc}")
    return "\n".join(out) + "\n"
