"""Certified test dictionaries and the intrinsic square-type operators.

The sup over the Hoelder class is replaced by a max over a finite, certified
dictionary, so every field computed here is a lower bound for its continuum
counterpart.
"""

from __future__ import annotations

import hashlib
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ._cone import cone_pass
from .grid_core import Grid, GridFunction, convolve_scaled, resampled_kernel

__all__ = [
    "TestDictionary",
    "ConeQuadrature",
    "SquareField",
    "reference_grid",
    "holder_seminorm",
    "build_dictionary",
    "member_fields",
    "sup_field",
    "s_gamma",
    "s_gamma_beta",
    "aperture_profile",
    "g_gamma",
    "g_star",
    "g_star_series",
    "g_star_bounds",
    "gstar_truncation_bound",
    "field_key",
    "clear_cache",
]

REF_NODES = {1: 64, 2: 16}
MEAN_TOL = 1e-10
HOLDER_TOL = 1e-9


def reference_grid(dim: int) -> Grid:
    """Cell centers at ``k/K`` for ``|k| <= K`` plus one zero cell per side."""
    K = REF_NODES[dim]
    return Grid(dim, 1.0 / K, (-(K + 1.5) / K,) * dim, (2 * K + 3,) * dim)


def holder_seminorm(values: np.ndarray, grid: Grid, gamma: float) -> float:
    """``max |phi(x) - phi(x')| / |x - x'|^gamma`` over node pairs at distance <= 2."""
    pts = grid.centers().reshape(-1, grid.dim)
    v = values.ravel()
    live = np.nonzero(v != 0)[0]
    if live.size == 0:
        return 0.0
    best = 0.0
    for chunk in np.array_split(live, max(1, live.size // 256)):
        diff = pts[chunk, None, :] - pts[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        dv = np.abs(v[chunk, None] - v[None, :])
        ok = (dist > 0) & (dist <= 2.0 + 1e-12)
        ratio = np.where(ok, dv / np.where(ok, dist, 1.0) ** gamma, 0.0)
        best = max(best, float(ratio.max()))
    return best


@dataclass(frozen=True, eq=False)
class TestDictionary:
    """Finite certified subset of the Hoelder-gamma test class."""

    __test__ = False  # not a pytest class

    gamma: float
    members: tuple[GridFunction, ...]
    certificates: tuple[dict, ...]
    seed: int
    labels: tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def __len__(self) -> int:
        return len(self.members)

    @property
    def key(self) -> str:
        hsh = hashlib.sha1()
        hsh.update(repr((self.gamma, self.seed, len(self.members))).encode())
        for m in self.members:
            hsh.update(m.values.tobytes())
        return hsh.hexdigest()

    def take(self, count: int) -> "TestDictionary":
        """First ``count`` members (generation is prefix-stable)."""
        return TestDictionary(self.gamma, self.members[:count], self.certificates[:count],
                              self.seed, self.labels[:count])

    def certify(self) -> None:
        for i, c in enumerate(self.certificates):
            if not (c["support_ok"] and c["mean"] <= MEAN_TOL and c["holder"] <= 1 + HOLDER_TOL):
                raise ValueError(f"dictionary member {i} fails its certificate: {c}")


def _polynomials(dim: int):
    if dim == 1:
        return [
            ("odd:x", lambda x: x),
            ("odd:x^3", lambda x: x**3),
            ("odd:x^5-x", lambda x: x**5 - x / 2),
            ("even:1", lambda x: np.ones_like(x)),
            ("even:x^2", lambda x: x**2),
            ("even:x^4", lambda x: x**4),
        ]
    return [
        ("odd:x", lambda x, y: x),
        ("odd:y", lambda x, y: y),
        ("even:xy", lambda x, y: x * y),
        ("even:x^2-y^2", lambda x, y: x * x - y * y),
        ("odd:x^3", lambda x, y: x**3),
        ("odd:y^3", lambda x, y: y**3),
        ("even:1", lambda x, y: np.ones_like(x)),
        ("even:x^2+y^2", lambda x, y: x * x + y * y),
        ("odd:x^2y", lambda x, y: x * x * y),
        ("odd:xy^2", lambda x, y: x * y * y),
    ]


def _random_field(rng: np.random.Generator, mesh):
    """Low-frequency random trigonometric field."""
    out = np.zeros_like(mesh[0])
    if len(mesh) == 1:
        for k in range(1, 7):
            a, phase = rng.normal(), rng.uniform(0, 2 * np.pi)
            out += a / k * np.sin(0.5 * np.pi * k * mesh[0] + phase)
    else:
        for kx in range(4):
            for ky in range(4):
                a, phase = rng.normal(), rng.uniform(0, 2 * np.pi)
                out += a / (1 + math.hypot(kx, ky)) * np.cos(0.5 * np.pi * (kx * mesh[0] + ky * mesh[1]) + phase)
    return out


def build_dictionary(gamma: float, count: int, seed: int, dim: int = 1) -> TestDictionary:
    """Project polynomial bumps, then seeded random fields, onto the class.

    Projection: restrict to the unit ball with the envelope ``(1-|x|)^gamma``,
    remove the discrete mean along a fixed bump, divide by the discrete
    Hoelder seminorm.  The first ``k`` members do not depend on ``count``.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if count < 8:
        raise ValueError("dictionary needs at least 8 members")
    grid = reference_grid(dim)
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    rad = np.sqrt(sum(m * m for m in mesh))
    envelope = np.clip(1.0 - rad, 0.0, None) ** gamma
    envelope[rad >= 1.0] = 0.0
    psi0 = np.clip(1.0 - rad * rad, 0.0, None)
    psi0 /= psi0.sum() * grid.cell_volume

    rng = np.random.default_rng(seed)
    polys = _polynomials(dim)
    members, certs, labels = [], [], []
    attempts = 0
    while len(members) < count:
        if attempts < len(polys):
            label, poly = polys[attempts]
            cand = poly(*mesh) * envelope
        else:
            label = f"random:{attempts - len(polys)}"
            cand = _random_field(rng, mesh) * envelope
        attempts += 1
        if attempts > 4 * count + len(polys):
            raise ValueError("dictionary underfull")
        cand = cand - cand.sum() * grid.cell_volume * psi0
        cand[rad > 1.0] = 0.0
        if np.max(np.abs(cand)) < 1e-12:
            continue
        semi = holder_seminorm(cand, grid, gamma)
        if not semi > 1e-12:
            continue
        cand = cand / semi
        cert = {
            "mean": float(abs(cand.sum() * grid.cell_volume)),
            "holder": holder_seminorm(cand, grid, gamma),
            "support_ok": bool(np.all(cand[rad > 1.0] == 0)),
        }
        members.append(GridFunction(grid, cand, compact=True, name=label))
        certs.append(cert)
        labels.append(label)
    dic = TestDictionary(gamma, tuple(members), tuple(certs), seed, tuple(labels))
    dic.certify()
    return dic


@dataclass(frozen=True)
class ConeQuadrature:
    """Log-spaced scales (midpoints of ``n_t`` equal log-cells in
    ``[t_min, t_max]``), aperture, g* exponent and dyadic truncation ``J``."""

    t_min: float
    t_max: float
    n_t: int = 32
    beta: float = 1.0
    lam: float = 4.0
    J: int = 6

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        if self.n_t < 1:
            raise ValueError("n_t must be positive")

    @property
    def dlog(self) -> float:
        return math.log(self.t_max / self.t_min) / self.n_t

    @property
    def t_grid(self) -> np.ndarray:
        return self.t_min * np.exp((np.arange(self.n_t) + 0.5) * self.dlog)

    def validate(self, grid: Grid) -> "ConeQuadrature":
        """Desk-scale invariants: t_min >= 2h, t_max <= box half-width, n_t >= 16."""
        if self.t_min < 2 * grid.h * (1 - 1e-12):
            raise ValueError("t_min below 2h")
        if self.t_max > grid.half_width * (1 + 1e-12):
            raise ValueError("t_max exceeds box half-width")
        if self.n_t < 16:
            raise ValueError("need at least 16 scales")
        return self

    def weights(self, grid: Grid) -> np.ndarray:
        """Per-scale factor ``dlog * t^-n * h^n`` of the cone measure."""
        return self.dlog * self.t_grid ** (-grid.dim) * grid.cell_volume


@dataclass(frozen=True, eq=False)
class SquareField:
    """``A(y, t) = max_phi |f * phi_t(y)|`` with its per-member fields."""

    grid: Grid
    quad: ConeQuadrature
    A: np.ndarray
    members: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.any(self.A < 0):
            raise ValueError("square field must be nonnegative")


_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_CACHE_BYTES = 800 * 2**20


def field_key(f: GridFunction) -> tuple:
    return (f.grid, hashlib.sha1(f.values.tobytes()).hexdigest())


def clear_cache() -> None:
    _CACHE.clear()


def _cache_get(key):
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    return None


def _cache_put(key, value: np.ndarray) -> None:
    _CACHE[key] = value
    total = sum(v.nbytes for v in _CACHE.values())
    while total > _CACHE_BYTES and len(_CACHE) > 1:
        _, old = _CACHE.popitem(last=False)
        total -= old.nbytes


def member_fields(f: GridFunction, D: TestDictionary, Q: ConeQuadrature) -> np.ndarray:
    """``f * phi_t`` for every member and scale; shape ``(M, n_t, *grid)``.

    Memoized on (f samples, dictionary, scales).
    """
    key = ("fields", field_key(f), D.key, Q.t_min, Q.t_max, Q.n_t)
    hit = _cache_get(key)
    if hit is not None:
        return hit
    if D.dim != f.dim:
        raise ValueError("dictionary and function dimensions differ")
    out = np.zeros((len(D), Q.n_t) + f.grid.shape)
    for it, t in enumerate(Q.t_grid):
        for m, phi in enumerate(D.members):
            kernel = resampled_kernel(phi, t, f.h)
            out[m, it] = convolve_scaled(f, phi, t, kernel=kernel).values
    out.setflags(write=False)
    _cache_put(key, out)
    return out


def sup_field(f: GridFunction, D: TestDictionary, Q: ConeQuadrature) -> SquareField:
    F = member_fields(f, D, Q)
    return SquareField(f.grid, Q, np.max(np.abs(F), axis=0), F)


def _out(f: GridFunction, values: np.ndarray, name: str) -> GridFunction:
    return GridFunction(f.grid, values, compact=False, name=name)


def _plain_pass(f: GridFunction, D: TestDictionary, Q: ConeQuadrature, edges, lamn: float = 0.0):
    key = ("plain", field_key(f), D.key, Q.t_min, Q.t_max, Q.n_t, tuple(edges), lamn)
    hit = _cache_get(key)
    if hit is not None:
        return hit[..., :-1], hit[..., -1]
    A = sup_field(f, D, Q).A
    bins, wsum = cone_pass(f.h, Q.t_grid, Q.weights(f.grid), edges, lamn, asq=A * A)
    packed = np.concatenate([bins, wsum[..., None]], axis=-1)
    _cache_put(key, packed)
    return bins, wsum


def s_gamma_beta(f: GridFunction, D: TestDictionary, Q: ConeQuadrature, beta: float) -> GridFunction:
    """Square function over the cone ``|x - y| < beta t``.

    Cones are clipped to the box; if even the finest cone ``beta * t_min``
    spans more than the box diameter nothing is resolved and the call fails.
    """
    if beta < 1:
        raise ValueError("aperture must be >= 1")
    if beta * Q.t_min > f.grid.diameter:
        raise ValueError("halo exceeded")
    bins, _ = _plain_pass(f, D, Q, [float(beta)])
    return _out(f, np.sqrt(bins[..., 0]), f"S_beta{beta!r}({f.name})")


def s_gamma(f: GridFunction, D: TestDictionary, Q: ConeQuadrature) -> GridFunction:
    """Intrinsic square function (aperture 1)."""
    return s_gamma_beta(f, D, Q, 1.0)


def aperture_profile(f: GridFunction, D: TestDictionary, Q: ConeQuadrature, J: int) -> np.ndarray:
    """Squared ``S_{2^j} f`` for ``j = 0..J`` from one binned pass; shape ``(J+1, *grid)``."""
    edges = [2.0**j for j in range(J + 1)]
    bins, _ = _plain_pass(f, D, Q, edges)
    return np.moveaxis(np.cumsum(bins, axis=-1), -1, 0)


def g_gamma(f: GridFunction, D: TestDictionary, Q: ConeQuadrature) -> GridFunction:
    """Vertical square function ``(sum_t A(x,t)^2 dlog)^(1/2)``."""
    A = sup_field(f, D, Q).A
    return _out(f, np.sqrt(Q.dlog * np.sum(A * A, axis=0)), f"g({f.name})")


def g_star(f: GridFunction, D: TestDictionary, Q: ConeQuadrature, lam: float | None = None) -> GridFunction:
    """g*-function truncated to ``|x - y| < 2^J t``."""
    lam = Q.lam if lam is None else lam
    if Q.J < 1:
        raise ValueError("g* truncation needs J >= 1")
    edges = [2.0**j for j in range(Q.J + 1)]
    _, wsum = _plain_pass(f, D, Q, edges, lam * f.dim)
    return _out(f, np.sqrt(wsum), f"gstar({f.name})")


def _series(S2: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diffs = np.diff(S2, axis=0)
    scale = np.max(S2[-1]) if S2.size else 0.0
    if np.any(diffs < -1e-12 * max(scale, 1e-300)):
        raise ArithmeticError("monotonicity violated")
    return weights[0] * S2[0] + np.tensordot(weights[1:], diffs, axes=(0, 0))


def g_star_series(f: GridFunction, D: TestDictionary, Q: ConeQuadrature,
                  lam: float | None = None, J: int | None = None) -> GridFunction:
    """Dyadic-aperture surrogate ``S_1^2 + sum_j 2^(-j lam n)(S_{2^j}^2 - S_{2^(j-1)}^2)``."""
    lam = Q.lam if lam is None else lam
    J = Q.J if J is None else J
    if J < 0:
        raise ValueError("J must be >= 0")
    S2 = aperture_profile(f, D, Q, J)
    w = np.array([1.0] + [2.0 ** (-j * lam * f.dim) for j in range(1, J + 1)])
    return _out(f, np.sqrt(np.maximum(_series(S2, w), 0.0)), f"gstar_series({f.name})")


def g_star_bounds(f: GridFunction, D: TestDictionary, Q: ConeQuadrature,
                  lam: float | None = None, J: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise lower/upper surrogates for ``g*`` from annulus weight bounds.

    On the annulus ``2^(j-1) t <= |x-y| < 2^j t`` the g* weight lies in
    ``[(1+2^j)^(-lam n), (1+2^(j-1))^(-lam n)]``; on the unit cone in
    ``(2^(-lam n), 1]``.
    """
    lam = Q.lam if lam is None else lam
    J = Q.J if J is None else J
    S2 = aperture_profile(f, D, Q, J)
    ln = lam * f.dim
    lower = np.array([2.0**-ln] + [(1 + 2.0**j) ** -ln for j in range(1, J + 1)])
    upper = np.array([1.0] + [(1 + 2.0 ** (j - 1)) ** -ln for j in range(1, J + 1)])
    return np.sqrt(np.maximum(_series(S2, lower), 0.0)), np.sqrt(np.maximum(_series(S2, upper), 0.0))


def gstar_truncation_bound(dim: int, lam: float, J: int) -> float:
    """Relative bound ``(1 + 2^J)^(n - lam n)`` on the g* mass beyond ``2^J t``."""
    return (1.0 + 2.0**J) ** (dim - lam * dim)
