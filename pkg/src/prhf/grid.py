"""Periodic cubic grid, discrete Fourier transform and sampled fields.

Real-space index ``j`` on each axis maps to the coordinate ``(j - n/2) * h``,
so the box centre (where the nucleus sits) is a grid point.  Fourier-space
values are stored in FFT order with angular frequencies ``2*pi*m/L``.

The transform follows the unitary continuum convention

    f_hat(p) = (2 pi)^{-3/2} * integral exp(-i p.x) f(x) dx

approximated by the rectangle rule, so that ``h^3 sum |f|^2`` equals
``dp^3 sum |f_hat|^2`` with ``dp = 2 pi / L``.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid3",
    "Space",
    "Field",
    "forward_dft",
    "inverse_dft",
    "sample",
    "fftn",
    "ifftn",
    "lp_norm",
    "inner",
    "resample",
    "write_snapshot",
    "read_snapshot",
    "SNAPSHOT_MAGIC",
]

SNAPSHOT_MAGIC = b"PRHF1"
_FT_CONST = (2.0 * np.pi) ** -1.5


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PRHF_THREADS", "1")))
    except ValueError:
        return 1


def fftn(a: np.ndarray) -> np.ndarray:
    """Unnormalised forward FFT over the last three axes."""
    return sfft.fftn(a, axes=(-3, -2, -1), workers=_workers())


def ifftn(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fftn` over the last three axes."""
    return sfft.ifftn(a, axes=(-3, -2, -1), workers=_workers())


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic lattice with ``n`` samples per axis on a box of side ``box_length``."""

    n: int
    box_length: float

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n_per_axis must be an even integer >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def n_per_axis(self) -> int:
        return self.n

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def volume(self) -> float:
        return self.box_length**3

    @property
    def freq_spacing(self) -> float:
        return 2.0 * np.pi / self.box_length

    @cached_property
    def axis(self) -> np.ndarray:
        """1D coordinates, centred so that index n/2 is the origin."""
        return (np.arange(self.n) - self.n // 2) * self.spacing

    @cached_property
    def freqs(self) -> np.ndarray:
        """1D angular frequencies in FFT order, ``2 pi m / L`` with m in [-n/2, n/2)."""
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.spacing)

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (x, y, z)."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    def momenta(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable frequency arrays (px, py, pz) in FFT order."""
        p = self.freqs
        return p[:, None, None], p[None, :, None], p[None, None, :]

    @cached_property
    def p2(self) -> np.ndarray:
        px, py, pz = self.momenta()
        return px**2 + py**2 + pz**2

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| on the grid, measured from the box centre."""
        x, y, z = self.coords()
        return np.sqrt(x**2 + y**2 + z**2)

    def displacement(self, center) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Minimum-image components of ``x - center`` as broadcastable arrays."""
        c = np.asarray(center, dtype=float).reshape(3)
        L = self.box_length
        out = []
        for k, comp in enumerate(self.coords()):
            d = comp - c[k]
            out.append((d + 0.5 * L) % L - 0.5 * L)
        return tuple(out)

    def distance(self, center) -> np.ndarray:
        dx, dy, dz = self.displacement(center)
        return np.sqrt(dx**2 + dy**2 + dz**2)

    def index_of(self, point) -> tuple[int, int, int]:
        """Index of the grid point nearest to ``point``."""
        q = np.rint(np.asarray(point, dtype=float) / self.spacing).astype(int) + self.n // 2
        return tuple(int(v) % self.n for v in q)


class Space(enum.Enum):
    REAL = 0
    FOURIER = 1


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a :class:`Grid3`, tagged as real- or Fourier-space.

    ``values`` has shape ``(n, n, n)`` indexed ``[ix, iy, iz]`` and is made
    read-only on construction.
    """

    grid: Grid3
    values: np.ndarray
    space: Space = Space.REAL

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid3, space: Space = Space.REAL) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), space)

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if other.space is not self.space:
            raise ValueError("fields are in different spaces")

    def _wrap(self, values) -> "Field":
        return Field(self.grid, values, self.space)

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return self._wrap(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return self._wrap(self.values - other.values)

    def __neg__(self) -> "Field":
        return self._wrap(-self.values)

    def __mul__(self, other) -> "Field":
        if isinstance(other, Field):
            self._check(other)
            return self._wrap(self.values * other.values)
        return self._wrap(self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "Field":
        return self._wrap(self.values / scalar)

    def conj(self) -> "Field":
        if self.space is Space.FOURIER:
            raise ValueError("conjugation is only defined for real-space fields")
        return self._wrap(np.conj(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def weight(self) -> float:
        """Quadrature weight of one sample in this field's space."""
        if self.space is Space.REAL:
            return self.grid.cell_volume
        return self.grid.freq_spacing**3

    def norm(self, p: float = 2.0) -> float:
        return lp_norm(self, p)

    def vdot(self, other: "Field") -> complex:
        return inner(self, other)

    def to_real(self) -> "Field":
        return self if self.space is Space.REAL else inverse_dft(self)

    def to_fourier(self) -> "Field":
        return self if self.space is Space.FOURIER else forward_dft(self)


def forward_dft(f: Field) -> Field:
    """Real-space field to Fourier-space field (continuum-normalised)."""
    if f.space is not Space.REAL:
        raise ValueError("forward_dft expects a real-space field")
    g = f.grid
    vals = fftn(sfft.ifftshift(f.values)) * (_FT_CONST * g.cell_volume)
    return Field(g, vals, Space.FOURIER)


def inverse_dft(f: Field) -> Field:
    """Exact inverse of :func:`forward_dft`."""
    if f.space is not Space.FOURIER:
        raise ValueError("inverse_dft expects a Fourier-space field")
    g = f.grid
    vals = sfft.fftshift(ifftn(f.values)) / (_FT_CONST * g.cell_volume)
    return Field(g, vals, Space.REAL)


def resample(f: Field, grid: Grid3) -> Field:
    """Trigonometric interpolation of ``f`` onto another grid with the same box.

    Frequencies present on both lattices are copied and the rest are zero;
    the Nyquist planes of the source are dropped so the result stays
    real for real input.
    """
    src = f.grid
    if grid.box_length != src.box_length:
        raise ValueError("resample needs grids with the same box length")
    F = forward_dft(f.to_real()).values
    keep = min(src.n, grid.n) // 2  # |k| < keep on every axis
    ks = np.r_[0:keep, -keep + 1:0]
    out = np.zeros(grid.shape, dtype=np.complex128)
    out[np.ix_(ks % grid.n, ks % grid.n, ks % grid.n)] = F[np.ix_(ks % src.n, ks % src.n, ks % src.n)]
    return inverse_dft(Field(grid, out, Space.FOURIER))


def sample(grid: Grid3, fn, center=(0.0, 0.0, 0.0), singular_value: complex | None = None) -> Field:
    """Sample ``fn(d)`` on the grid, where ``d`` is the wrapped displacement ``x - center``.

    ``fn`` receives a tuple ``(dx, dy, dz)`` of broadcastable arrays.  A
    non-finite value is tolerated only in the cell containing ``center`` and
    only when ``singular_value`` is given; it is then replaced by that value.
    """
    d = grid.displacement(center)
    vals = np.broadcast_to(np.asarray(fn(d), dtype=np.complex128), grid.shape).copy()
    bad = ~np.isfinite(vals)
    if bad.any():
        r = np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
        in_cell = r < 0.5 * grid.spacing
        if (bad & ~in_cell).any():
            raise ValueError("non-finite sample outside the singular cell")
        if singular_value is None:
            raise ValueError("non-finite sample in the singular cell and no singular_value given")
        vals[bad] = singular_value
    return Field(grid, vals, Space.REAL)


def lp_norm(f: Field | np.ndarray, p: float = 2.0, mask: np.ndarray | None = None,
            grid: Grid3 | None = None) -> float:
    """Discrete L^p norm ``(sum |f|^p * w)^(1/p)``; ``p = inf`` gives the max.

    Arrays need ``grid`` for the weight and are taken to be real-space.
    """
    if isinstance(f, Field):
        vals, w = f.values, f.weight()
    else:
        if grid is None:
            raise ValueError("grid is required for raw arrays")
        vals, w = f, grid.cell_volume
    a = np.abs(vals)
    if mask is not None:
        a = a[mask]
    if a.size == 0:
        return 0.0
    if np.isinf(p):
        return float(a.max())
    m = a.max()
    if m == 0.0:
        return 0.0
    # scaled to avoid overflow for large p
    return float(m * (np.sum((a / m) ** p) * w) ** (1.0 / p))


def inner(f: Field, g: Field) -> complex:
    """Continuum-weighted inner product, antilinear in the first argument."""
    f._check(g)
    return complex(np.vdot(f.values, g.values) * f.weight())


def _space_code(space: Space) -> int:
    return space.value


def write_snapshot(path, field: Field) -> None:
    """Write ``field`` in the PRHF1 binary layout (x index fastest)."""
    g = field.grid
    body = np.ascontiguousarray(field.values.transpose(2, 1, 0)).view(np.float64)
    with open(Path(path), "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IdB", g.n, g.box_length, _space_code(field.space)))
        fh.write(body.astype("<f8", copy=False).tobytes())


def read_snapshot(path) -> Field:
    data = Path(path).read_bytes()
    if data[:5] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a PRHF1 snapshot")
    n, box, code = struct.unpack_from("<IdB", data, 5)
    offset = 5 + struct.calcsize("<IdB")
    count = 2 * n**3
    if len(data) != offset + 8 * count:
        raise ValueError(f"{path}: truncated snapshot ({len(data)} bytes)")
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
    vals = flat.view(np.complex128).reshape(n, n, n).transpose(2, 1, 0)
    return Field(Grid3(n, box), vals, Space(code))
