"""Uniform grids on half-space boxes {s >= 0} and functions sampled on them.

Array axes are ordered ``(x_1, ..., x_{n-1}, x_n, s)``.  The s axis starts at
s = 0 and the full-space field is the even reflection across it.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

MAGIC = b"THINFBG1"


@dataclass(frozen=True)
class Grid:
    """Uniform grid with spacing ``h``; ``lower`` holds the x-axis origins."""

    h: float
    lower: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if len(self.shape) != len(self.lower) + 1:
            raise ValueError("shape needs one more axis (s) than lower")
        if self.n not in (1, 2):
            raise ValueError("only n in {1, 2} is supported")

    @classmethod
    def cube(cls, n: int, h: float, half_width: float = 1.0, height: float | None = None) -> "Grid":
        """Box [-w, w]^n x [0, height] (height defaults to w)."""
        height = half_width if height is None else height
        m = int(round(2 * half_width / h))
        ms = int(round(height / h))
        if not np.isclose(m * h, 2 * half_width) or not np.isclose(ms * h, height):
            raise ValueError("box extents must be multiples of h")
        return cls(h, (-half_width,) * n, (m + 1,) * n + (ms + 1,))

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def upper(self) -> tuple:
        lo = self.lower + (0.0,)
        return tuple(lo[k] + (self.shape[k] - 1) * self.h for k in range(self.n + 1))

    def axes(self) -> list[np.ndarray]:
        lo = self.lower + (0.0,)
        return [lo[k] + self.h * np.arange(self.shape[k]) for k in range(self.n + 1)]

    def coords(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def plane_coords(self) -> np.ndarray:
        """Coordinates of the {s = 0} nodes, shape (*shape[:-1], n+1)."""
        return self.coords()[..., 0, :]

    def outer_boundary(self) -> np.ndarray:
        """Nodes on the faces of the box, excluding the face s = 0."""
        b = np.zeros(self.shape, dtype=bool)
        for k in range(self.n + 1):
            sl = [slice(None)] * (self.n + 1)
            sl[k] = -1
            b[tuple(sl)] = True
            if k < self.n:
                sl[k] = 0
                b[tuple(sl)] = True
        return b

    def index_of(self, point) -> tuple:
        """Nearest node index to ``point``."""
        lo = np.array(self.lower + (0.0,))
        i = np.rint((np.asarray(point, dtype=float) - lo) / self.h).astype(int)
        return tuple(int(v) for v in np.clip(i, 0, np.array(self.shape) - 1))

    def to_json(self) -> dict:
        return {"h": self.h, "lower": list(self.lower), "shape": list(self.shape)}


@dataclass
class GridFunction:
    """Node values on a Grid plus the positivity mask on {s = 0}."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("values do not match grid shape")
        if self.mask is None:
            self.mask = self.values[..., 0] > 0
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.grid.shape[:-1]:
            raise ValueError("mask must live on the s = 0 plane")
        plane = self.values[..., 0]
        if np.any(plane[~self.mask] != 0):
            raise ValueError("nonzero value on an s = 0 node outside the mask")

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, threshold: float = 0.0) -> "GridFunction":
        """Sample ``f(X)`` (X with last axis of length n+1) at the nodes."""
        vals = np.asarray(f(grid.coords()), dtype=float)
        mask = vals[..., 0] > threshold
        vals[..., 0][~mask] = 0.0
        return cls(grid, vals, mask)

    @classmethod
    def from_values(cls, grid: Grid, values, threshold: float = 0.0) -> "GridFunction":
        vals = np.array(values, dtype=float)
        mask = vals[..., 0] > threshold
        vals[..., 0][~mask] = 0.0
        return cls(grid, vals, mask)

    @property
    def plane(self) -> np.ndarray:
        return self.values[..., 0]

    def full(self) -> np.ndarray:
        """Values on the reflected box s in [-height, height]."""
        return np.concatenate([self.values[..., :0:-1], self.values], axis=-1)

    def interpolator(self, fill_value=np.nan) -> Callable:
        """Multilinear interpolant; the s coordinate is reflected to |s|."""
        rgi = RegularGridInterpolator(self.grid.axes(), self.values, bounds_error=False,
                                      fill_value=fill_value)

        def f(X):
            X = np.array(X, dtype=float)
            X[..., -1] = np.abs(X[..., -1])
            return rgi(X)

        return f

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy(), self.mask.copy())

    # -- serialization ---------------------------------------------------

    def to_bytes(self) -> bytes:
        g = self.grid
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<I", g.n + 1))
        buf.write(struct.pack(f"<{g.n + 1}I", *g.shape))
        buf.write(struct.pack("<d", g.h))
        buf.write(struct.pack(f"<{g.n}d", *g.lower))
        buf.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.mask, dtype=np.uint8).tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        if data[:8] != MAGIC:
            raise ValueError("not a thinfb grid file")
        off = 8
        (nd,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{nd}I", data, off)
        off += 4 * nd
        (h,) = struct.unpack_from("<d", data, off)
        off += 8
        lower = struct.unpack_from(f"<{nd - 1}d", data, off)
        off += 8 * (nd - 1)
        count = int(np.prod(shape))
        vals = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        mask = np.frombuffer(data, dtype=np.uint8, count=count // shape[-1], offset=off)
        return cls(Grid(h, lower, shape), vals.astype(float), mask.reshape(shape[:-1]).astype(bool))

    def write_binary(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read_binary(cls, path) -> "GridFunction":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path=None) -> str:
        X = self.grid.coords().reshape(-1, self.grid.n + 1)
        table = np.column_stack([X, self.values.reshape(-1)])
        names = [f"x{k + 1}" for k in range(self.grid.n - 1)] + ["xn", "s", "value"]
        buf = io.StringIO()
        np.savetxt(buf, table, fmt="%.12e", delimiter=",", header=",".join(names), comments="")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text
