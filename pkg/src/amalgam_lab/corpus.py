"""Deterministic input corpora for the boundedness experiments.

Families:

``bump``
    smooth radial bumps ``(1 - |x-c|^2/s^2)_+^2`` at several scales and centers;
``comb``
    nested dyadic combs ``sum_k (-1)^k 2^(-k n/alpha) bump(2^k x / s0)``, one
    member per depth, probing the alpha-scaling;
``random``
    seeded random trigonometric fields under a compact envelope;
``singular``
    truncated power profiles ``min(M, |x|^(-n/alpha))`` times a smooth cutoff,
    which stay Morrey-bounded while their Lebesgue norm grows with ``M``.

All supports lie in ``[-2, 2]^n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_core import Grid, GridFunction

__all__ = ["CorpusSpec", "FAMILIES", "gen_corpus", "bump"]

FAMILIES = ("bump", "comb", "random", "singular")


@dataclass(frozen=True)
class CorpusSpec:
    families: tuple[str, ...] = FAMILIES
    alpha: float = 2.0
    bumps: tuple[tuple[float, float], ...] = ((0.0, 1.0), (0.5, 0.5), (-1.0, 0.25))
    comb_depths: tuple[int, ...] = (3, 4, 5, 6)
    comb_scale: float = 1.0
    random_count: int = 2
    singular_caps: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown corpus families {sorted(unknown)}")
        if len(set(self.families)) < 3:
            raise ValueError("corpus needs at least 3 families")
        object.__setattr__(self, "bumps", tuple(tuple(map(float, b)) for b in self.bumps))
        object.__setattr__(self, "comb_depths", tuple(int(d) for d in self.comb_depths))
        object.__setattr__(self, "singular_caps", tuple(float(m) for m in self.singular_caps))

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown corpus keys {sorted(extra)}")
        return cls(**d)


def _radius(mesh, center=0.0):
    return np.sqrt(sum((m - center) ** 2 for m in mesh))


def bump(rad: np.ndarray) -> np.ndarray:
    """``(1 - rad^2)_+^2``."""
    return np.clip(1.0 - rad * rad, 0.0, None) ** 2


def gen_corpus(spec: CorpusSpec, seed: int, grid: Grid) -> list[GridFunction]:
    """Corpus members in a fixed order; ``name`` is ``family:index`` plus parameters."""
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    n = grid.dim
    out: list[GridFunction] = []

    def add(name, vals):
        out.append(GridFunction(grid, vals, compact=True, name=name))

    for fam in spec.families:
        if fam == "bump":
            for i, (c, s) in enumerate(spec.bumps):
                add(f"bump:{i}:c={c!r}:s={s!r}", bump(_radius(mesh, c) / s))
        elif fam == "comb":
            rad = _radius(mesh) / spec.comb_scale
            for depth in spec.comb_depths:
                vals = np.zeros(grid.shape)
                for k in range(depth):
                    vals += (-1) ** k * 2.0 ** (-k * n / spec.alpha) * bump(2.0**k * rad)
                add(f"comb:depth={depth}", vals)
        elif fam == "random":
            rng = np.random.default_rng(seed)
            env = bump(_radius(mesh) / 2.0)
            for i in range(spec.random_count):
                vals = np.zeros(grid.shape)
                for k in range(1, 9):
                    amp = rng.normal() / k
                    phase = rng.uniform(0.0, 2.0 * np.pi)
                    direction = rng.normal(size=n)
                    direction /= np.linalg.norm(direction)
                    arg = sum(d * m for d, m in zip(direction, mesh))
                    vals += amp * np.cos(np.pi * k * arg / 2.0 + phase)
                add(f"random:{i}:seed={seed}", vals * env)
        elif fam == "singular":
            rad = _radius(mesh)
            with np.errstate(divide="ignore"):
                prof = rad ** (-n / spec.alpha)
            cut = bump(rad)
            for cap in spec.singular_caps:
                add(f"singular:M={cap!r}", np.minimum(cap, prof) * cut)
    for f in out:
        if not np.any(f.values):
            raise ValueError(f"corpus member {f.name} vanishes on this grid")
    return out
