"""Norm functionals: weighted Lebesgue, Morrey, amalgam/Fofana and BMO.

All sups over balls are finite maxima over a :class:`BallFamily`, hence lower
bounds for the continuum quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi

from .grid_core import Grid, GridFunction, ball_sums, ball_volume, ball_windows, dilate
from .weights import BallFamily, Weight

__all__ = [
    "NormParams",
    "morrey_kappa",
    "lq_w_norm",
    "classical_morrey_norm",
    "weighted_morrey_norm",
    "amalgam_fixed_r",
    "fofana_norm",
    "fofana_profile",
    "dilation_identity_check",
    "bmo_norm",
    "bmo_lp_variant",
    "weighted_bmo_check",
    "log_abs_field",
]

INF = math.inf


@dataclass(frozen=True)
class NormParams:
    """Exponents ``(q, p, alpha)`` with a weight and a ball family.

    ``p = inf`` selects the sup-over-centers variant.
    """

    q: float
    p: float
    alpha: float
    weight: Weight
    family: BallFamily
    kappa: float | None = None

    def __post_init__(self):
        if not (1 <= self.q <= self.alpha <= self.p <= INF):
            raise ValueError(
                f"need 1 <= q <= alpha <= p <= inf, got q={self.q}, alpha={self.alpha}, p={self.p}"
            )
        if self.kappa is not None and not (0 <= self.kappa < 1):
            raise ValueError("kappa must lie in [0, 1)")

    @property
    def exponent(self) -> float:
        """Power of ``w(B)`` multiplying the local norm: 1/alpha - 1/q - 1/p."""
        return 1.0 / self.alpha - 1.0 / self.q - (0.0 if self.p == INF else 1.0 / self.p)


def morrey_kappa(q: float, alpha: float) -> float:
    """Weighted-Morrey index matching the ``p = inf`` Fofana norm.

    With the Morrey functional written as ``(w(B)^-kappa int_B |f|^q w)^(1/q)``
    the two coincide for ``kappa = 1 - q/alpha``; this equals ``1/q - 1/alpha``
    only when ``q == alpha``.
    """
    return 1.0 - q / alpha


def _stable_sum(values: np.ndarray) -> float:
    """Sum over the bounding box of the nonzero entries.

    Pairwise summation blocks depend on array position; trimming first makes
    the result invariant under lattice translation.
    """
    nz = np.nonzero(values)
    if len(nz[0]) == 0:
        return 0.0
    box = tuple(slice(int(i.min()), int(i.max()) + 1) for i in nz)
    return float(np.sum(values[box]))


def _weight_cells(w: Weight, grid: Grid) -> np.ndarray:
    return w.cell_integrals(grid)


def _ball_masses(w: Weight, cells: np.ndarray, family: BallFamily, r: float) -> np.ndarray:
    if w.kind == "constant":
        # exact |B| for the constant kind; broadcast over centers
        shape = tuple(len(a) for a in family.center_axes())
        return np.full(shape, w.c * ball_volume(r, family.grid.dim))
    return ball_sums(cells, family.grid.h, r, family.stride)


def _local_q(absfq_w: np.ndarray, family: BallFamily, r: float) -> np.ndarray:
    return np.maximum(ball_sums(absfq_w, family.grid.h, r, family.stride), 0.0)


def _check_grid(f: GridFunction, family: BallFamily) -> None:
    if not f.grid.same_as(family.grid):
        raise ValueError("function and ball family live on different grids")


def lq_w_norm(f: GridFunction, w: Weight, q: float) -> float:
    """``(int |f|^q w)^(1/q)`` by cell quadrature."""
    if q < 1:
        raise ValueError("q must be >= 1")
    cells = _weight_cells(w, f.grid)
    return _stable_sum(np.abs(f.values) ** q * cells) ** (1.0 / q)


def classical_morrey_norm(f: GridFunction, q: float, lambda_m: float, family: BallFamily) -> float:
    """``max (r^(lambda-n) int_B |f|^q)^(1/q)`` over the family."""
    if not (1 <= q < INF and 0 < lambda_m < f.dim):
        raise ValueError("need 1 <= q < inf and 0 < lambda < n")
    _check_grid(f, family)
    dens = np.abs(f.values) ** q * f.grid.cell_volume
    best = 0.0
    for r in family.radii:
        local = _local_q(dens, family, r)
        best = max(best, float(np.max(r ** (lambda_m - f.dim) * local)))
    return best ** (1.0 / q)


def _ball_functional_per_r(f: GridFunction, w: Weight, q: float, exponent: float,
                           family: BallFamily) -> np.ndarray:
    """Per radius: ``max_y w(B(y,r))^exponent * ||f chi_B(y,r)||_{q,w}``."""
    _check_grid(f, family)
    cells = _weight_cells(w, f.grid)
    dens = np.abs(f.values) ** q * cells
    out = []
    for r in family.radii:
        local = _local_q(dens, family, r) ** (1.0 / q)
        out.append(float(np.max(_ball_masses(w, cells, family, r) ** exponent * local)))
    return np.array(out)


def _ball_functional_max(f: GridFunction, w: Weight, q: float, exponent: float,
                         family: BallFamily) -> tuple[float, float]:
    per_r = _ball_functional_per_r(f, w, q, exponent, family)
    k = int(np.argmax(per_r))
    return float(per_r[k]), family.radii[k]


def weighted_morrey_norm(f: GridFunction, q: float, kappa: float, w: Weight,
                         family: BallFamily) -> float:
    """``max (w(B)^-kappa int_B |f|^q w)^(1/q)`` over the family."""
    if not 0 <= kappa < 1:
        raise ValueError("kappa must lie in [0, 1)")
    return _ball_functional_max(f, w, q, -kappa / q, family)[0]


def amalgam_fixed_r(f: GridFunction, params: NormParams, r: float) -> float:
    """Fixed-radius functional ``r||f||_{q_w,p,alpha}``.

    The ``y``-integral is a sum over family centers with measure
    ``(stride h)^n`` per center; ``p = inf`` takes the max over centers.
    """
    if r not in params.family.radii:
        raise ValueError("radius not in family")
    _check_grid(f, params.family)
    w, q, p = params.weight, params.q, params.p
    cells = _weight_cells(w, f.grid)
    dens = np.abs(f.values) ** q * cells
    masses = _ball_masses(w, cells, params.family, r)
    if np.any(masses <= 0):
        raise ArithmeticError("degenerate ball mass")
    terms = masses**params.exponent * _local_q(dens, params.family, r) ** (1.0 / q)
    if p == INF:
        return float(np.max(terms))
    return float((_stable_sum(terms**p) * params.family.center_measure) ** (1.0 / p))


def fofana_profile(f: GridFunction, params: NormParams) -> tuple[float, float, np.ndarray]:
    """``(norm, r_at_max, per-radius values)``."""
    if params.p == INF:
        per_r = _ball_functional_per_r(f, params.weight, params.q, params.exponent, params.family)
    else:
        per_r = np.array([amalgam_fixed_r(f, params, r) for r in params.family.radii])
    k = int(np.argmax(per_r))
    return float(per_r[k]), params.family.radii[k], per_r


def fofana_norm(f: GridFunction, params: NormParams) -> float:
    """``max_r r||f||_{q_w,p,alpha}``; for ``p = inf`` this is the same
    computation as :func:`weighted_morrey_norm`."""
    if params.p == INF:
        return _ball_functional_max(f, params.weight, params.q, params.exponent, params.family)[0]
    return fofana_profile(f, params)[0]


def _unweighted_amalgam(g: GridFunction, q: float, p: float, r: float) -> float:
    dens = np.abs(g.values) ** q * g.grid.cell_volume
    local = np.maximum(ball_sums(dens, g.h, r), 0.0) ** (1.0 / q)
    if p == INF:
        return float(np.max(local))
    return float((_stable_sum(local**p) * g.grid.cell_volume) ** (1.0 / p))


def dilation_identity_check(f: GridFunction, params: NormParams, r: float) -> tuple[float, float]:
    """Both sides of the dilation identity for the unweighted amalgam norm.

    Left: ``||delta_r^alpha f||_{q,p}`` with unit balls on the dilated grid.
    Right: ``r^(n(1/alpha-1/q-1/p)) (int ||f chi_B(y,r)||_q^p dy)^(1/p)`` on
    ``f``'s grid.
    """
    w = params.weight
    if not (w.kind == "constant" and w.c == 1):
        raise ValueError("dilation identity is unweighted (w == 1)")
    q, p, alpha = params.q, params.p, params.alpha
    g = dilate(f, r, alpha, margin=1.0 + f.h)
    lhs = _unweighted_amalgam(g, q, p, 1.0)
    rhs = r ** (f.dim * params.exponent) * _unweighted_amalgam(f, q, p, r)
    return lhs, rhs


def _oscillations(b: GridFunction, family: BallFamily, power: float,
                  weights: np.ndarray | None = None) -> float:
    if not b.grid.same_as(family.grid):
        raise ValueError("symbol and ball family live on different grids")
    best = 0.0
    for r in family.radii:
        samples, valid = ball_windows(b.values, b.h, r, family.stride)
        counts = valid.sum(axis=1)
        s0 = np.where(valid, samples, 0.0)
        mean = s0.sum(axis=1) / counts
        dev = np.where(valid, np.abs(s0 - mean[:, None]), 0.0) ** power
        if weights is None:
            val = dev.sum(axis=1) / counts
        else:
            wv, _ = ball_windows(weights, b.h, r, family.stride)
            wv = np.where(valid, wv, 0.0)
            val = (dev * wv).sum(axis=1) / wv.sum(axis=1)
        best = max(best, float(np.max(val)))
    return best ** (1.0 / power)


def bmo_norm(b: GridFunction, family: BallFamily) -> float:
    """``max |B|^-1 int_B |b - b_B|`` (in-box part of each ball)."""
    return _oscillations(b, family, 1.0)


def bmo_lp_variant(b: GridFunction, p: float, family: BallFamily) -> float:
    """``max (|B|^-1 int_B |b - b_B|^p)^(1/p)``."""
    if not 1 < p < INF:
        raise ValueError("need 1 < p < inf")
    return _oscillations(b, family, p)


def weighted_bmo_check(b: GridFunction, w: Weight, q: float, family: BallFamily) -> float:
    """``max (w(B)^-1 int_B |b - b_B|^q w)^(1/q)`` with the unweighted mean ``b_B``.

    A constant weight cancels, so it takes the unweighted path.
    """
    if w.kind == "constant":
        return _oscillations(b, family, q)
    return _oscillations(b, family, q, w.cell_integrals(b.grid))


def _mean_log_rect_corner(a: float, b: float) -> float:
    # int_0^a int_0^b log|x| dy dx via polar split; int_0^R r log r dr = R^2 (2 log R - 1) / 4
    if a <= 0 or b <= 0:
        return 0.0
    th0 = math.atan2(b, a)

    def inner(R):
        return R * R * (2 * math.log(R) - 1) / 4

    i1, _ = spi.quad(lambda th: inner(a / math.cos(th)), 0.0, th0, epsabs=0, epsrel=1e-13)
    i2, _ = spi.quad(lambda th: inner(b / math.sin(th)), th0, 0.5 * math.pi, epsabs=0, epsrel=1e-13)
    return i1 + i2


def log_abs_field(grid: Grid, center: float = 0.0, name: str = "log|x|") -> GridFunction:
    """``log|x - center|`` at cell centers; cells touching the singularity get
    the exact cell mean."""
    shifted = [ax - center for ax in grid.axes()]
    mesh = np.meshgrid(*shifted, indexing="ij")
    rad = np.sqrt(sum(m * m for m in mesh))
    with np.errstate(divide="ignore"):
        vals = np.log(rad)
    lows = [o - center + np.arange(s) * grid.h for o, s in zip(grid.origin, grid.shape)]
    hit = [np.nonzero((lo <= 0.0) & (lo + grid.h >= 0.0))[0] for lo in lows]
    h = grid.h

    def prim(a):
        return a * math.log(a) - a if a > 0 else 0.0

    if grid.dim == 1:
        for i in hit[0]:
            lo = lows[0][i]
            vals[i] = (prim(-lo) + prim(lo + h)) / h
    else:
        for i in hit[0]:
            for j in hit[1]:
                x0, y0 = lows[0][i], lows[1][j]
                tot = sum(_mean_log_rect_corner(a, b) for a in (-x0, x0 + h) for b in (-y0, y0 + h))
                vals[i, j] = tot / (h * h)
    return GridFunction(grid, vals, compact=False, name=name)
