"""Uniform tensor grids and fields living on them."""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .errors import ConfigError

EDGE = "edge"


@dataclass(frozen=True)
class Grid:
    """Uniform grid: per-axis extent (lo, hi), spacing and boundary fill.

    boundary_fill holds one (left, right) pair per axis.  Each entry is a
    float (constant extension), the string "edge" (replicate the edge value)
    or ("exp", rate, base): ghost values base + (u_edge - base) e^{rate (z - z_edge)},
    used to continue an exponential approach to `base` past the end of the
    grid.  ("exp", rate) means base 0.  ("tail", rate, amp, j, z_ref) prescribes
    the ghost values amp |z - z_ref|^j e^{rate (z - z_ref)} independently of u.
    """

    extent: tuple
    spacing: tuple
    boundary_fill: tuple = None

    def __post_init__(self):
        ext = tuple((float(a), float(b)) for a, b in self.extent)
        sp = tuple(float(s) for s in self.spacing)
        if len(ext) != len(sp) or len(ext) not in (1, 2):
            raise ConfigError("grid: extent and spacing must both have 1 or 2 axes")
        errs = []
        for k, ((a, b), s) in enumerate(zip(ext, sp)):
            if not s > 0:
                errs.append(f"grid.spacing[{k}]: must be positive")
                continue
            if not b > a:
                errs.append(f"grid.extent[{k}]: hi must exceed lo")
                continue
            n = (b - a) / s
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                errs.append(f"grid.extent[{k}]: spacing {s} does not divide length {b - a}")
        fill = self.boundary_fill
        if fill is None:
            fill = tuple((0.0, 0.0) for _ in ext)
        fill = tuple(tuple(_norm_fill(v) for v in pair) for pair in fill)
        if len(fill) != len(ext):
            errs.append("grid.boundary_fill: one (left, right) pair per axis required")
        for pair in fill:
            for v in pair:
                x = v[1] + v[2] if isinstance(v, tuple) else (0.0 if v == EDGE else v)
                if not np.isfinite(x):
                    errs.append("grid.boundary_fill: values must be finite")
        if errs:
            raise ConfigError(errs)
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "boundary_fill", fill)

    @classmethod
    def line(cls, lo, hi, dz, fill=(0.0, 0.0)):
        return cls(((lo, hi),), (dz,), (tuple(fill),))

    @property
    def d(self):
        return len(self.extent)

    @property
    def shape(self):
        return tuple(int(round((b - a) / s)) + 1 for (a, b), s in zip(self.extent, self.spacing))

    def axis(self, k=0):
        (a, _), s = self.extent[k], self.spacing[k]
        return a + s * np.arange(self.shape[k])

    @property
    def z(self):
        return self.axis(0)

    def mesh(self):
        return np.meshgrid(*[self.axis(k) for k in range(self.d)], indexing="ij")

    def cell_volume(self):
        return float(np.prod(self.spacing))

    def with_fill(self, fill):
        return Grid(self.extent, self.spacing, fill)

    def shifted(self, dz0):
        """Same grid with the coordinate origin moved by dz0 along axis 0."""
        ext = list(self.extent)
        ext[0] = (ext[0][0] + dz0, ext[0][1] + dz0)
        fill = list(self.boundary_fill)
        fill[0] = tuple(v[:4] + (v[4] + dz0,) if isinstance(v, tuple) and v[0] == "tail" else v
                        for v in fill[0])
        return Grid(tuple(ext), self.spacing, tuple(fill))


def _norm_fill(v):
    if isinstance(v, str):
        if v != EDGE:
            raise ConfigError(f"grid.boundary_fill: unknown fill {v!r}")
        return EDGE
    if isinstance(v, (tuple, list)):
        if len(v) >= 3 and v[0] == "tail":
            rest = list(v[1:]) + [0, 0.0][len(v) - 3:]
            return ("tail", float(rest[0]), float(rest[1]), int(rest[2]), float(rest[3]))
        if len(v) not in (2, 3) or v[0] != "exp":
            raise ConfigError(f"grid.boundary_fill: unknown fill {v!r}")
        return ("exp", float(v[1]), float(v[2]) if len(v) == 3 else 0.0)
    return float(v)


def is_const(v):
    return not isinstance(v, (str, tuple))


def tail_values(v, z):
    """Ghost values of a ("tail", ...) fill at coordinates z."""
    _, rate, amp, j, zr = v
    s = np.asarray(z, dtype=float) - zr
    return amp * np.abs(s) ** j * np.exp(rate * s)


def is_tail(v):
    return isinstance(v, tuple) and v[0] == "tail"


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self):
        return Field(self.grid, self.values.copy(), dict(self.meta))

