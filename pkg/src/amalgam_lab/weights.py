"""Weights, ball masses and empirical Muckenhoupt machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import integrate as spi

from .grid_core import Ball, Grid, GridFunction, ball_sums, ball_volume

__all__ = [
    "Weight",
    "BallFamily",
    "ReverseHolderReport",
    "power_cell_integrals",
    "ball_mass",
    "family_sums",
    "aq_constant",
    "aq_profile",
    "doubling_ratio",
    "reverse_holder",
    "subset_mass_exponent",
    "RH_CANDIDATES",
    "RH_BUDGET",
]

RH_CANDIDATES = (1.0, 0.5, 0.25, 0.125, 0.0625)
RH_BUDGET = 8.0


def _corner_power_integral(a: float, b: float, e: float) -> float:
    """int_0^a int_0^b |x|^e dy dx for a, b >= 0 (requires e > -2)."""
    if a <= 0 or b <= 0:
        return 0.0
    theta0 = math.atan2(b, a)
    s = e + 2.0
    i1, _ = spi.quad(lambda th: math.cos(th) ** (-s), 0.0, theta0, epsabs=0, epsrel=1e-13)
    i2, _ = spi.quad(lambda th: math.sin(th) ** (-s), theta0, 0.5 * math.pi, epsabs=0, epsrel=1e-13)
    return (a**s * i1 + b**s * i2) / s


def power_cell_integrals(grid: Grid, e: float) -> np.ndarray:
    """Per-cell integrals of ``|x|^e``.

    Midpoint rule, except that cells whose closure contains the origin use the
    exact integral when ``|x|^e`` is integrable there (``e > -n``).
    """
    n = grid.dim
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    rad = np.sqrt(sum(m * m for m in mesh))
    with np.errstate(divide="ignore"):
        out = rad**e * grid.cell_volume
    if e <= -n:
        return out
    lows = [o + np.arange(s) * grid.h for o, s in zip(grid.origin, grid.shape)]
    hit = [np.nonzero((lo <= 0.0) & (lo + grid.h >= 0.0))[0] for lo in lows]
    if n == 1:
        for i in hit[0]:
            lo = lows[0][i]
            hi = lo + grid.h
            out[i] = ((-lo) ** (e + 1) + hi ** (e + 1)) / (e + 1)
    else:
        for i in hit[0]:
            for j in hit[1]:
                x0, y0 = lows[0][i], lows[1][j]
                x1, y1 = x0 + grid.h, y0 + grid.h
                out[i, j] = sum(
                    _corner_power_integral(a, b, e) for a in (-x0, x1) for b in (-y0, y1)
                )
    return out


@dataclass(frozen=True, eq=False)
class Weight:
    """Positive weight: ``constant`` (c), ``power`` (|x|^a) or ``sampled``."""

    kind: str
    c: float = 1.0
    a: float = 0.0
    samples: GridFunction | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if not self.c > 0:
                raise ValueError("constant weight must be positive")
        elif self.kind == "power":
            if not math.isfinite(self.a):
                raise ValueError("power exponent must be finite")
        elif self.kind == "sampled":
            if self.samples is None or not np.all(self.samples.values > 0):
                raise ValueError("sampled weight must be strictly positive on its grid")
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def constant(cls, c: float = 1.0) -> "Weight":
        return cls("constant", c=float(c))

    @classmethod
    def power(cls, a: float) -> "Weight":
        return cls("power", a=float(a))

    @classmethod
    def sampled(cls, samples: GridFunction) -> "Weight":
        return cls("sampled", samples=samples)

    @classmethod
    def from_config(cls, spec: dict) -> "Weight":
        kind = spec.get("kind")
        if kind == "constant":
            return cls.constant(spec.get("c", 1.0))
        if kind == "power":
            return cls.power(spec["a"])
        raise ValueError(f"weight spec {spec!r} not understood")

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return "constant" if self.c == 1 else f"constant(c={self.c!r})"
        if self.kind == "power":
            return f"power(a={self.a!r})"
        return f"sampled({self.samples.name})"

    def check_dim(self, dim: int) -> None:
        if self.kind == "power" and not self.a > -dim:
            raise ValueError("power weight not locally integrable (need a > -n)")

    def cell_integrals(self, grid: Grid, power: float = 1.0) -> np.ndarray:
        """Per-cell integrals of ``w**power`` on ``grid``."""
        if self.kind == "constant":
            return np.full(grid.shape, self.c**power * grid.cell_volume)
        if self.kind == "power":
            self.check_dim(grid.dim)
            return power_cell_integrals(grid, self.a * power)
        if not self.samples.grid.same_as(grid):
            raise ValueError("sampled weight grid differs from the working grid")
        with np.errstate(over="ignore"):
            return self.samples.values**power * grid.cell_volume

    def default_grid(self, ball: Ball) -> Grid:
        if self.kind == "sampled":
            return self.samples.grid
        cells = 2048 if ball.dim == 1 else 256
        h = 2.0 * ball.radius / (cells - 4)
        return Grid(ball.dim, h, tuple(c - ball.radius - 2 * h for c in ball.center), (cells,) * ball.dim)


@dataclass(frozen=True)
class BallFamily:
    """Balls centered on a sub-lattice of grid cells with a list of radii."""

    grid: Grid
    radii: tuple[float, ...]
    stride: int = 1

    def __post_init__(self):
        radii = tuple(sorted(float(r) for r in self.radii))
        object.__setattr__(self, "radii", radii)
        if not radii:
            raise ValueError("empty ball family")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if radii[0] <= 0:
            raise ValueError("radii must be positive")

    @classmethod
    def geometric(cls, grid: Grid, r_min: float, r_max: float, n_radii: int = 16, stride: int = 1,
                  snap: bool = False) -> "BallFamily":
        """Log-spaced radii; ``snap`` rounds each to a multiple of ``h`` (duplicates dropped)."""
        radii = np.geomspace(r_min, r_max, n_radii)
        if snap:
            radii = np.unique(np.maximum(np.rint(radii / grid.h), 1.0)) * grid.h
        return cls(grid, tuple(radii), stride)

    def on(self, grid: Grid) -> "BallFamily":
        """Same radii and stride on another grid."""
        return BallFamily(grid, self.radii, self.stride)

    @classmethod
    def dyadic(cls, grid: Grid, r_min: float, octaves: int, per_octave: int = 4, stride: int = 1) -> "BallFamily":
        """Nested-friendly family ``r_min * 2**(k / per_octave)``, ``k <= octaves * per_octave``."""
        k = np.arange(octaves * per_octave + 1)
        return cls(grid, tuple(r_min * 2.0 ** (k / per_octave)), stride)

    def validate(self) -> "BallFamily":
        """Enforce the desk-scale invariants (r_min >= 2h, r_max <= 4 diam, >= 8 radii)."""
        if self.radii[0] < 2 * self.grid.h * (1 - 1e-12):
            raise ValueError("r_min below 2h")
        if self.radii[-1] > 4 * self.grid.diameter:
            raise ValueError("r_max above 4 box diameters")
        if len(self.radii) < 8:
            raise ValueError("family needs at least 8 radii")
        return self

    @property
    def center_measure(self) -> float:
        return (self.stride * self.grid.h) ** self.grid.dim

    def center_axes(self) -> list[np.ndarray]:
        return [ax[:: self.stride] for ax in self.grid.axes()]

    def balls(self) -> Iterator[Ball]:
        mesh = np.meshgrid(*self.center_axes(), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        for r in self.radii:
            for p in pts:
                yield Ball(tuple(p), r)

    def extended(self, r_max: float) -> "BallFamily":
        """Same log step, radius range grown to ``r_max`` (a superset)."""
        radii = list(self.radii)
        step = radii[1] / radii[0] if len(radii) > 1 else 2.0
        while radii[-1] * step <= r_max * (1 + 1e-12):
            radii.append(radii[-1] * step)
        return BallFamily(self.grid, tuple(radii), self.stride)


@dataclass
class ReverseHolderReport:
    tau: float
    constant: float
    ratios: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")


def ball_mass(w: Weight, ball: Ball, grid: Grid | None = None) -> float:
    """``w(B)``: exact for constant weights, cell quadrature otherwise."""
    if w.kind == "constant":
        return w.c * ball.volume
    grid = grid or w.default_grid(ball)
    cells = w.cell_integrals(grid)
    return float(np.sum(cells[ball.mask(grid)]))


def family_sums(cell_values: np.ndarray, family: BallFamily) -> np.ndarray:
    """Ball sums of ``cell_values`` for every (radius, center); shape ``(n_radii, *centers)``."""
    return np.stack([ball_sums(cell_values, family.grid.h, r, family.stride) for r in family.radii])


def _averages(w: Weight, family: BallFamily, power: float) -> np.ndarray:
    cells = w.cell_integrals(family.grid, power)
    with np.errstate(over="ignore", invalid="ignore"):
        sums = family_sums(cells, family)
    counts = family_sums(np.ones(family.grid.shape), family) * family.grid.cell_volume
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.where(counts > 0, counts, 1.0), np.nan)


def aq_profile(w: Weight, q: float, family: BallFamily) -> np.ndarray:
    """Per-ball A_q products ``avg(w) * avg(w^(-1/(q-1)))^(q-1)``."""
    if not q > 1:
        raise ValueError("A_q requires q > 1")
    avg_w = _averages(w, family, 1.0)
    avg_dual = _averages(w, family, -1.0 / (q - 1.0))
    finite = np.isfinite(avg_dual) | np.isnan(avg_dual)
    if not np.all(finite) or np.nanmax(avg_dual) > 1e300:
        raise ArithmeticError("A_q dual average diverged")
    return avg_w * avg_dual ** (q - 1.0)


def aq_constant(w: Weight, q: float, family: BallFamily) -> float:
    """Largest A_q product over the family (a lower bound for the A_q constant)."""
    return float(np.nanmax(aq_profile(w, q, family)))


def doubling_ratio(w: Weight, ball: Ball, lam: float, grid: Grid | None = None) -> float:
    """``w(lam B) / w(B)``."""
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    big = ball.scaled(lam)
    if grid is None and w.kind == "sampled":
        grid = w.samples.grid
    if grid is not None and not big.inside(grid):
        raise ValueError("halo exceeded")
    if grid is None and w.kind != "constant":
        grid = w.default_grid(big)
    return ball_mass(w, big, grid) / ball_mass(w, ball, grid)


def reverse_holder(w: Weight, q: float, family: BallFamily) -> ReverseHolderReport:
    """Largest tau in :data:`RH_CANDIDATES` whose reverse Hoelder constant is within budget."""
    aq_constant(w, q, family)
    avg_w = _averages(w, family, 1.0)
    for tau in RH_CANDIDATES:
        avg_hi = _averages(w, family, 1.0 + tau)
        ratios = avg_hi ** (1.0 / (1.0 + tau)) / avg_w
        worst = float(np.nanmax(ratios))
        if worst <= RH_BUDGET:
            return ReverseHolderReport(tau, worst, ratios)
    raise ArithmeticError("reverse Hölder failed on family")


def subset_mass_exponent(w: Weight, ball: Ball, subset: np.ndarray, tau: float,
                         grid: Grid | None = None) -> tuple[float, float]:
    """``(w(E)/w(B), (|E|/|B|)^(tau/(1+tau)))`` for a cell subset ``E`` of ``B``.

    Both masses are cell sums on ``grid`` so that ``E = B`` gives ``(1, 1)``.
    """
    grid = grid or w.default_grid(ball)
    in_ball = ball.mask(grid)
    subset = np.asarray(subset, dtype=bool)
    if np.any(subset & ~in_ball):
        raise ValueError("subset is not contained in the ball")
    if not subset.any():
        return 0.0, 0.0
    cells = w.cell_integrals(grid)
    mass_ratio = float(np.sum(cells[subset]) / np.sum(cells[in_ball]))
    measure_ratio = np.count_nonzero(subset) / np.count_nonzero(in_ball)
    return mass_ratio, float(measure_ratio ** (tau / (1.0 + tau)))

