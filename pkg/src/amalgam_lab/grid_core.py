"""Sampled functions on uniform grids, ball quadrature and scaled convolution.

Every sample sits at a cell center ``origin + (i + 1/2) * h``.  Integrals are
midpoint sums; a cell belongs to a ball iff its center does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

__all__ = [
    "Grid",
    "GridFunction",
    "Ball",
    "ball_volume",
    "integrate",
    "translate",
    "dilate",
    "resampled_kernel",
    "convolve_scaled",
    "convolve_scaled_direct",
    "ball_offsets",
    "ball_sums",
    "ball_windows",
    "save_gridfunction",
    "load_gridfunction",
]


def ball_volume(radius: float, dim: int) -> float:
    """Exact Lebesgue measure of a ball of the given radius in R^dim."""
    if dim == 1:
        return 2.0 * radius
    if dim == 2:
        return math.pi * radius * radius
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class Grid:
    """Geometry of a uniform cell-centered grid (no samples)."""

    dim: int
    h: float
    origin: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dim}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError("spacing must be positive")
        if len(self.origin) != self.dim or len(self.shape) != self.dim:
            raise ValueError("origin/shape do not match dimension")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @classmethod
    def centered(cls, dim: int, cells: int, half_width: float) -> "Grid":
        """Box ``[-half_width, half_width]^dim`` split into ``cells`` per axis."""
        h = 2.0 * half_width / cells
        return cls(dim, h, (-half_width,) * dim, (cells,) * dim)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def half_width(self) -> float:
        return 0.5 * self.h * min(self.shape)

    @property
    def diameter(self) -> float:
        return self.h * math.sqrt(sum(s * s for s in self.shape))

    def axes(self) -> list[np.ndarray]:
        return [o + (np.arange(s) + 0.5) * self.h for o, s in zip(self.origin, self.shape)]

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def bounds(self) -> list[tuple[float, float]]:
        return [(o, o + s * self.h) for o, s in zip(self.origin, self.shape)]

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.h / factor, self.origin, tuple(s * factor for s in self.shape))

    def same_as(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and self.shape == other.shape
            and math.isclose(self.h, other.h, rel_tol=1e-12)
            and all(math.isclose(a, b, rel_tol=0, abs_tol=1e-9 * self.h)
                    for a, b in zip(self.origin, other.origin))
        )


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples on a :class:`Grid`.

    With ``compact=True`` the nonzero samples must leave a one-cell zero
    margin on every side of the box.  Weights and BMO symbols are sampled with
    ``compact=False``.
    """

    grid: Grid
    values: np.ndarray
    compact: bool = True
    name: str = field(default="", compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite samples")
        if self.compact:
            for ax in range(vals.ndim):
                edge_lo = np.take(vals, 0, axis=ax)
                edge_hi = np.take(vals, -1, axis=ax)
                if np.any(edge_lo != 0) or np.any(edge_hi != 0):
                    raise ValueError("support touches the box boundary (one-cell margin required)")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, func, compact: bool = True, name: str = "") -> "GridFunction":
        """Sample ``func(*coords)`` at cell centers."""
        mesh = np.meshgrid(*grid.axes(), indexing="ij")
        return cls(grid, np.asarray(func(*mesh), dtype=np.float64) * np.ones(grid.shape), compact, name)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def h(self) -> float:
        return self.grid.h

    def with_values(self, values: np.ndarray, compact: bool | None = None, name: str | None = None) -> "GridFunction":
        return GridFunction(
            self.grid,
            values,
            self.compact if compact is None else compact,
            self.name if name is None else name,
        )

    def __mul__(self, c: float) -> "GridFunction":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if not self.grid.same_as(other.grid):
            raise ValueError("grids differ")
        return self.with_values(self.values + other.values, compact=self.compact and other.compact)

    def support_slices(self) -> tuple[slice, ...] | None:
        """Bounding index box of the nonzero samples, or None if f == 0."""
        nz = np.nonzero(self.values)
        if len(nz[0]) == 0:
            return None
        return tuple(slice(int(ix.min()), int(ix.max()) + 1) for ix in nz)

    def resample(self, grid: Grid, compact: bool | None = None) -> "GridFunction":
        """Nearest-sample evaluation of ``self`` at the centers of ``grid`` (0 outside)."""
        idx = []
        for o_new, s_new, o, s in zip(grid.origin, grid.shape, self.grid.origin, self.grid.shape):
            x = o_new + (np.arange(s_new) + 0.5) * grid.h
            i = np.floor((x - o) / self.h).astype(np.int64)
            idx.append(np.where((i >= 0) & (i < s), i, -1))
        mesh = np.meshgrid(*idx, indexing="ij")
        inside = np.all([m >= 0 for m in mesh], axis=0)
        out = np.zeros(grid.shape)
        out[inside] = self.values[tuple(m[inside] for m in mesh)]
        return GridFunction(grid, out, self.compact if compact is None else compact, self.name)


@dataclass(frozen=True)
class Ball:
    """Open ball ``{x : |x - center| < radius}``."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        return ball_volume(self.radius, self.dim)

    def scaled(self, lam: float) -> "Ball":
        return Ball(self.center, lam * self.radius)

    def mask(self, grid: Grid) -> np.ndarray:
        """Boolean cell mask: centers strictly inside the ball."""
        d2 = np.zeros(grid.shape)
        for ax, (x, c) in enumerate(zip(grid.axes(), self.center)):
            shp = [1] * grid.dim
            shp[ax] = -1
            d2 = d2 + ((x - c) ** 2).reshape(shp)
        return d2 < self.radius**2

    def inside(self, grid: Grid) -> bool:
        """True when the closed ball fits in the grid's box."""
        return all(lo <= c - self.radius and c + self.radius <= hi
                   for (lo, hi), c in zip(grid.bounds(), self.center))


def integrate(f: GridFunction, ball: Ball) -> float:
    """Midpoint integral of ``f`` over ``ball`` (0 if the ball misses the box)."""
    if ball.dim != f.dim:
        raise ValueError("ball and function dimensions differ")
    mask = ball.mask(f.grid)
    # lexicographic order over selected cells
    return float(np.sum(f.values[mask]) * f.grid.cell_volume)


def _lattice_shift(v: Sequence[float], h: float) -> tuple[int, ...]:
    out = []
    for vi in v:
        k = round(vi / h)
        if abs(vi - k * h) > 1e-9 * max(h, abs(vi)):
            raise ValueError("off-lattice translation")
        out.append(int(k))
    return tuple(out)


def translate(f: GridFunction, v: Sequence[float] | float) -> GridFunction:
    """``x -> f(x - v)`` for a lattice vector ``v`` (length units).

    Samples are relocated on the same box; the box is grown when the shifted
    support would lose its zero margin.
    """
    shift = _lattice_shift(np.atleast_1d(v), f.h)
    if all(s == 0 for s in shift):
        return f
    sup = f.support_slices()
    if sup is None:
        return f
    grow_lo, grow_hi = [], []
    for s, sl, n in zip(shift, sup, f.grid.shape):
        lo = sl.start + s
        hi = sl.stop - 1 + s
        grow_lo.append(max(0, 1 - lo))
        grow_hi.append(max(0, hi - (n - 2)))
    grid = Grid(
        f.dim,
        f.h,
        tuple(o - g * f.h for o, g in zip(f.grid.origin, grow_lo)),
        tuple(n + a + b for n, a, b in zip(f.grid.shape, grow_lo, grow_hi)),
    )
    out = np.zeros(grid.shape)
    dst = tuple(slice(sl.start + s + g, sl.stop + s + g) for sl, s, g in zip(sup, shift, grow_lo))
    out[dst] = f.values[sup]
    return GridFunction(grid, out, f.compact, f.name)


def dilate(f: GridFunction, r: float, alpha: float, margin: float = 0.0) -> GridFunction:
    """``x -> r^(n/alpha) f(r x)`` sampled on a grid of the same spacing.

    The output box is the input box scaled by ``1/r`` plus ``margin`` on every
    side; evaluation is nearest-sample.
    """
    if not r > 0:
        raise ValueError("dilation factor must be positive")
    if r == 1 and margin == 0:
        return f
    h = f.h
    origin, shape = [], []
    for (lo, hi) in f.grid.bounds():
        a, b = lo / r - margin, hi / r + margin
        cells = int(math.ceil((b - a) / h)) + 2
        origin.append(a - h)
        shape.append(cells)
    grid = Grid(f.dim, h, tuple(origin), tuple(shape))
    idx = []
    for o_new, s_new, o, s in zip(grid.origin, grid.shape, f.grid.origin, f.grid.shape):
        x = r * (o_new + (np.arange(s_new) + 0.5) * h)
        i = np.floor((x - o) / h).astype(np.int64)
        idx.append(np.where((i >= 0) & (i < s), i, -1))
    mesh = np.meshgrid(*idx, indexing="ij")
    inside = np.all([m >= 0 for m in mesh], axis=0)
    vals = np.zeros(grid.shape)
    vals[inside] = f.values[tuple(m[inside] for m in mesh)]
    vals *= r ** (f.dim / alpha)
    out = GridFunction(grid, vals, compact=False, name=f.name)
    sup = out.support_slices()
    if f.support_slices() is not None and (
        sup is None or min(sl.stop - sl.start for sl in sup) < 8
    ):
        raise ValueError("under-resolved dilation")
    return out


def resampled_kernel(phi: GridFunction, t: float, h: float) -> np.ndarray:
    """Samples of ``t^-n phi(./t)`` at lattice offsets ``|d| <= t``.

    ``phi`` lives on a reference grid whose cell centers are the nodes
    ``k / K``, ``-K <= k <= K``, padded by one zero cell.  Each offset takes the
    nearest node of ``d / t`` (round half to even).  The discrete mean over the
    kernel's support is then removed so the kernel annihilates constants
    exactly.
    """
    if t < h:
        raise ValueError("scale below resolution")
    n = phi.dim
    K = (phi.grid.shape[0] - 3) // 2
    kmax = int(math.floor(t / h))
    k = np.arange(-kmax, kmax + 1)
    if n == 1:
        d = np.abs(k) * h
        sel = d <= t
        node = np.rint(k * h / t * K).astype(np.int64)
        node = np.clip(node, -K - 1, K + 1)
        samples = phi.values[node + K + 1]
    else:
        ki, kj = np.meshgrid(k, k, indexing="ij")
        sel = np.sqrt(ki * ki + kj * kj) * h <= t
        ni = np.clip(np.rint(ki * h / t * K).astype(np.int64), -K - 1, K + 1)
        nj = np.clip(np.rint(kj * h / t * K).astype(np.int64), -K - 1, K + 1)
        samples = phi.values[ni + K + 1, nj + K + 1]
    samples = np.where(sel, samples, 0.0)
    mu = samples[sel].sum() / np.count_nonzero(sel)
    return np.where(sel, samples - mu, 0.0) * t ** (-n)


def _convolve_support(f: GridFunction, kernel: np.ndarray, method: str) -> np.ndarray:
    """Full convolution of the support block of ``f`` with ``kernel``, placed
    back on ``f``'s grid.

    Only the support block enters the transform, so the result is bit-exactly
    covariant under lattice translation of ``f``.
    """
    out = np.zeros(f.grid.shape)
    sup = f.support_slices()
    if sup is None:
        return out
    if method == "fft":
        full = signal.fftconvolve(f.values[sup], kernel, mode="full")
    else:
        full = signal.convolve(f.values[sup], kernel, mode="full", method="direct")
    half = [k // 2 for k in kernel.shape]
    dst, src = [], []
    for sl, hk, n, m in zip(sup, half, f.grid.shape, full.shape):
        lo = sl.start - hk
        a, b = max(lo, 0), min(lo + m, n)
        dst.append(slice(a, b))
        src.append(slice(a - lo, b - lo))
    out[tuple(dst)] = full[tuple(src)] * f.grid.cell_volume
    return out


def convolve_scaled(f: GridFunction, phi: GridFunction, t: float,
                    kernel: np.ndarray | None = None) -> GridFunction:
    """``y -> int f(z) phi_t(y - z) dz`` on ``f``'s grid, FFT path."""
    if kernel is None:
        kernel = resampled_kernel(phi, t, f.h)
    return GridFunction(f.grid, _convolve_support(f, kernel, "fft"), compact=False)


def convolve_scaled_direct(f: GridFunction, phi: GridFunction, t: float) -> GridFunction:
    """Direct-sum counterpart of :func:`convolve_scaled`."""
    kernel = resampled_kernel(phi, t, f.h)
    return GridFunction(f.grid, _convolve_support(f, kernel, "direct"), compact=False)


def ball_offsets(radius: float, h: float, dim: int) -> np.ndarray:
    """Integer offsets ``k`` with ``|k| h < radius`` (open ball, cell centers)."""
    kmax = int(math.ceil(radius / h))
    k = np.arange(-kmax, kmax + 1)
    if dim == 1:
        return k[np.abs(k) * h < radius][:, None]
    ki, kj = np.meshgrid(k, k, indexing="ij")
    sel = np.sqrt(ki * ki + kj * kj) * h < radius
    return np.stack([ki[sel], kj[sel]], axis=-1)


def _windows(values: np.ndarray, radius: float, h: float, stride: int, fill: float):
    dim = values.ndim
    kmax = int(math.ceil(radius / h))
    padded = np.pad(values, kmax, constant_values=fill)
    win = sliding_window_view(padded, (2 * kmax + 1,) * dim)
    win = win[(slice(None, None, stride),) * dim]
    k = np.arange(-kmax, kmax + 1)
    if dim == 1:
        mask = np.abs(k) * h < radius
    else:
        ki, kj = np.meshgrid(k, k, indexing="ij")
        mask = np.sqrt(ki * ki + kj * kj) * h < radius
    return win, mask


def ball_sums(values: np.ndarray, h: float, radius: float, stride: int = 1) -> np.ndarray:
    """Sum of ``values`` over every open ball of ``radius`` centered on the
    ``stride`` sub-lattice of cells.  Cells outside the box count as zero.

    Each window is summed in a fixed order, so the result is invariant under
    lattice translation of ``values`` away from the box edge.
    """
    win, mask = _windows(np.asarray(values, dtype=np.float64), radius, h, stride, 0.0)
    if values.ndim == 1:
        inner = mask.nonzero()[0]
        return win[:, inner[0]:inner[-1] + 1].sum(axis=-1)
    return np.tensordot(win, mask.astype(np.float64), axes=([2, 3], [0, 1]))


def ball_windows(values: np.ndarray, h: float, radius: float, stride: int = 1):
    """Per-ball sample windows for oscillation-type functionals.

    Returns ``(samples, valid)``: ``samples`` has one row per center and one
    column per in-ball offset; ``valid`` marks offsets that fall in the box.
    """
    win, mask = _windows(np.asarray(values, dtype=np.float64), radius, h, stride, np.nan)
    n_centers = int(np.prod(win.shape[: values.ndim]))
    flat = win.reshape(n_centers, -1)[:, mask.ravel()]
    return flat, ~np.isnan(flat)


_HEADER = "# amalgam_lab gridfunction v1"


def save_gridfunction(f: GridFunction, path: str | Path) -> None:
    """Text format: header lines, then one sample per line in row-major order.

    Floats are written with ``repr`` (shortest round-trip), so reloading is
    bit-exact.
    """
    lines = [
        _HEADER,
        f"dim {f.dim}",
        f"spacing {f.h!r}",
        "origin " + " ".join(repr(o) for o in f.grid.origin),
        "extent " + " ".join(str(s) for s in f.grid.shape),
        f"compact {int(f.compact)}",
        f"name {f.name}",
        "values",
    ]
    lines.extend(repr(float(v)) for v in f.values.ravel(order="C"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_gridfunction(path: str | Path) -> GridFunction:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"{path}: not a gridfunction file")
    meta = {}
    i = 1
    while lines[i] != "values":
        key, _, rest = lines[i].partition(" ")
        meta[key] = rest
        i += 1
    dim = int(meta["dim"])
    grid = Grid(
        dim,
        float(meta["spacing"]),
        tuple(float(x) for x in meta["origin"].split()),
        tuple(int(x) for x in meta["extent"].split()),
    )
    vals = np.array([float(x) for x in lines[i + 1: i + 1 + grid.size]]).reshape(grid.shape)
    return GridFunction(grid, vals, bool(int(meta["compact"])), meta.get("name", ""))
