"""BMO commutators of the intrinsic square functions.

The commutator integrand at ``(x; y, t)`` is ``b(x) F_phi(y,t) - G_phi(y,t)``
with ``F_phi = f * phi_t`` and ``G_phi = (b f) * phi_t``; the max over the
dictionary is taken after ``b(x)`` is substituted, so it has to be recomputed
for every ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._cone import cone_pass
from .grid_core import GridFunction
from .intrinsic_sq import (
    ConeQuadrature,
    TestDictionary,
    _cache_get,
    _cache_put,
    _series,
    field_key,
    member_fields,
)

__all__ = [
    "CommutatorField",
    "commutator_fields",
    "centered_symbol",
    "commutator_s",
    "commutator_g",
    "commutator_gstar",
    "commutator_gstar_series",
    "commutator_gstar_bounds",
    "commutator_aperture_profile",
    "memory_estimate",
]


@dataclass(frozen=True, eq=False)
class CommutatorField:
    """Per-member fields ``F`` and ``G``, each ``(M, n_t, *grid)``, plus the centered symbol."""

    F: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.F.shape != self.G.shape:
            raise ValueError("F and G shapes differ")
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.G))):
            raise ValueError("non-finite commutator fields")


def centered_symbol(b: GridFunction) -> GridFunction:
    """``b`` minus its grid mean (leaves every commutator unchanged)."""
    return GridFunction(b.grid, b.values - b.values.mean(), compact=False, name=b.name)


def memory_estimate(shape: tuple[int, ...], n_t: int, members: int) -> int:
    """Bytes held by ``F`` and ``G`` for one input."""
    return 2 * 8 * int(np.prod(shape)) * n_t * members


def commutator_fields(f: GridFunction, b: GridFunction, D: TestDictionary,
                      Q: ConeQuadrature) -> CommutatorField:
    if not f.grid.same_as(b.grid):
        raise ValueError("f and b live on different grids")
    bc = centered_symbol(b)
    F = member_fields(f, D, Q)
    bf = GridFunction(f.grid, bc.values * f.values, compact=f.compact)
    G = member_fields(bf, D, Q)
    return CommutatorField(F, G, bc.values)


def _comm_pass(f, b, D, Q, edges, lamn=0.0):
    key = ("comm", field_key(f), field_key(b), D.key, Q.t_min, Q.t_max, Q.n_t, tuple(edges), lamn)
    hit = _cache_get(key)
    if hit is not None:
        return hit[..., :-1], hit[..., -1]
    cf = commutator_fields(f, b, D, Q)
    bins, wsum = cone_pass(f.h, Q.t_grid, Q.weights(f.grid), edges, lamn, F=cf.F, G=cf.G, b=cf.b)
    _cache_put(key, np.concatenate([bins, wsum[..., None]], axis=-1))
    return bins, wsum


def _out(f: GridFunction, values: np.ndarray, name: str) -> GridFunction:
    return GridFunction(f.grid, values, compact=False, name=name)


def commutator_s(f: GridFunction, b: GridFunction, D: TestDictionary, Q: ConeQuadrature) -> GridFunction:
    """``[b, S_gamma] f`` over the aperture-one cone."""
    bins, _ = _comm_pass(f, b, D, Q, [1.0])
    return _out(f, np.sqrt(bins[..., 0]), f"[b,S]({f.name})")


def commutator_g(f: GridFunction, b: GridFunction, D: TestDictionary, Q: ConeQuadrature) -> GridFunction:
    """``[b, g_gamma] f``: vertical integral at ``y = x``."""
    cf = commutator_fields(f, b, D, Q)
    vals = np.max(np.abs(cf.b[None, None] * cf.F - cf.G), axis=0)
    return _out(f, np.sqrt(Q.dlog * np.sum(vals * vals, axis=0)), f"[b,g]({f.name})")


def commutator_aperture_profile(f, b, D, Q, J: int) -> np.ndarray:
    """Squared ``[b, S_{2^j}] f`` for ``j = 0..J``."""
    bins, _ = _comm_pass(f, b, D, Q, [2.0**j for j in range(J + 1)])
    return np.moveaxis(np.cumsum(bins, axis=-1), -1, 0)


def commutator_gstar(f: GridFunction, b: GridFunction, D: TestDictionary, Q: ConeQuadrature,
                     lam: float | None = None) -> GridFunction:
    """``[b, g*_lambda] f``, direct weighted sum truncated at ``2^J t``."""
    lam = Q.lam if lam is None else lam
    if Q.J < 1:
        raise ValueError("g* truncation needs J >= 1")
    _, wsum = _comm_pass(f, b, D, Q, [2.0**j for j in range(Q.J + 1)], lam * f.dim)
    return _out(f, np.sqrt(wsum), f"[b,gstar]({f.name})")


def commutator_gstar_series(f, b, D, Q, lam: float | None = None, J: int | None = None) -> GridFunction:
    """Dyadic-aperture surrogate built from ``[b, S_{2^j}]``."""
    lam = Q.lam if lam is None else lam
    J = Q.J if J is None else J
    S2 = commutator_aperture_profile(f, b, D, Q, J)
    w = np.array([1.0] + [2.0 ** (-j * lam * f.dim) for j in range(1, J + 1)])
    return _out(f, np.sqrt(np.maximum(_series(S2, w), 0.0)), f"[b,gstar]_series({f.name})")


def commutator_gstar_bounds(f, b, D, Q, lam: float | None = None, J: int | None = None):
    """Annulus-weight lower/upper surrogates, as for :func:`g_star_bounds`."""
    lam = Q.lam if lam is None else lam
    J = Q.J if J is None else J
    S2 = commutator_aperture_profile(f, b, D, Q, J)
    ln = lam * f.dim
    lower = np.array([2.0**-ln] + [(1 + 2.0**j) ** -ln for j in range(1, J + 1)])
    upper = np.array([1.0] + [(1 + 2.0 ** (j - 1)) ** -ln for j in range(1, J + 1)])
    return np.sqrt(np.maximum(_series(S2, lower), 0.0)), np.sqrt(np.maximum(_series(S2, upper), 0.0))
