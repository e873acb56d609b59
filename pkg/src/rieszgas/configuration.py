"""Ordered particle configurations and their piecewise-constant densities."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Configuration",
    "GapData",
    "PiecewiseConstantDensity",
    "gaps",
    "density_from_configuration",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Configuration:
    """Strictly increasing positions ``x_0 < ... < x_n`` with ``n >= 1``.

    Positions are validated once here and never re-sorted downstream.
    """

    positions: np.ndarray

    def __post_init__(self):
        x = np.array(self.positions, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("a configuration needs at least two particles (n >= 1)")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        ell = np.diff(x)
        scale = np.maximum(np.abs(x[1:]), np.abs(x[:-1]))
        bad = ell <= _EPS * scale
        if np.any(ell <= 0.0) or np.any(bad):
            i = int(np.argmax(bad | (ell <= 0.0)))
            raise ValueError(
                f"positions must be strictly increasing (gap {i + 1} = {ell[i]!r})"
            )
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def n(self) -> int:
        return self.positions.size - 1

    def __len__(self):
        return self.positions.size

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.positions, other.positions)

    def __hash__(self):
        return hash(self.positions.tobytes())

    def affine(self, slope: float, shift: float) -> "Configuration":
        y = slope * self.positions + shift
        return Configuration(y if slope > 0 else y[::-1])

    # serialisation -------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.positions])

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls(np.array(json.loads(text), dtype=float))

    def to_csv(self, header: str = "x") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow([header])
        for v in self.positions:
            w.writerow([format(float(v), ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Configuration":
        rows = list(csv.reader(io.StringIO(text)))
        vals = []
        for row in rows:
            if not row:
                continue
            try:
                vals.append(float(row[0]))
            except ValueError:
                continue  # header
        return cls(np.array(vals))


@dataclass(frozen=True)
class GapData:
    midpoints: np.ndarray
    gaps: np.ndarray


def gaps(c: Configuration) -> GapData:
    """Midpoints ``(x_i + x_{i-1})/2`` and gaps ``x_i - x_{i-1}``."""
    x = c.positions
    return GapData(midpoints=0.5 * (x[1:] + x[:-1]), gaps=np.diff(x))


@dataclass(frozen=True, eq=False)
class PiecewiseConstantDensity:
    """Density equal to ``heights[i]`` on ``(breakpoints[i], breakpoints[i+1])``."""

    breakpoints: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float).ravel()
        h = np.array(self.heights, dtype=float).ravel()
        if b.size != h.size + 1:
            raise ValueError("need exactly one more breakpoint than heights")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "heights", h)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def cell_masses(self) -> np.ndarray:
        return self.heights * self.widths

    def mass(self) -> float:
        return float(np.sum(self.cell_masses))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.breakpoints, y, side="right") - 1
        inside = (idx >= 0) & (idx < self.heights.size) & (y > self.breakpoints[0])
        inside &= y < self.breakpoints[-1]
        out = np.where(inside, self.heights[np.clip(idx, 0, self.heights.size - 1)], 0.0)
        return float(out) if out.ndim == 0 else out

    def pushforward(self, slope: float, shift: float) -> "PiecewiseConstantDensity":
        """Density of ``slope * X + shift`` when ``X`` has this density."""
        b = slope * self.breakpoints + shift
        h = self.heights / abs(slope)
        if slope < 0:
            b, h = b[::-1], h[::-1]
        return PiecewiseConstantDensity(b, h)


def density_from_configuration(c: Configuration) -> PiecewiseConstantDensity:
    """Mass ``1/n`` spread uniformly between each pair of neighbours."""
    ell = np.diff(c.positions)
    return PiecewiseConstantDensity(c.positions.copy(), (1.0 / c.n) / ell)
