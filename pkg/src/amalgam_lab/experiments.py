"""Boundedness-ratio experiments, refinement studies and report emission.

For every operator ``T``, corpus member ``f``, weight and exponent triple the
runner records ``fofana_norm(T f) / fofana_norm(f)``.  Operator outputs are
computed once per (f, gamma) and reused across weights and exponents.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import commutators as cm
from . import intrinsic_sq as isq
from .corpus import CorpusSpec, gen_corpus
from .grid_core import Grid, GridFunction
from .norms import INF, NormParams, fofana_norm, log_abs_field
from .weights import BallFamily, Weight

__all__ = [
    "OPERATORS",
    "ExperimentConfig",
    "ReportRow",
    "BoundednessReport",
    "RefinementReport",
    "build_level",
    "apply_operator",
    "run_boundedness",
    "run_refinement",
    "fubini_error",
    "emit",
    "load_rows",
]

OPERATORS = ("S", "g", "gstar", "[b,S]", "[b,g]", "[b,gstar]")
GSTAR_OPS = ("gstar", "[b,gstar]")
COMM_OPS = ("[b,S]", "[b,g]", "[b,gstar]")


def _parse_p(p) -> float:
    if p is None or (isinstance(p, str) and p.lower() in ("inf", "infinity")):
        return INF
    return float(p)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on; defaults are the desk-scale budget."""

    dim: int = 1
    cells: int = 2048
    half_width: float = 4.0
    params: tuple[tuple[float, float, float], ...] = ((2.0, 4.0, 2.0), (2.0, INF, 2.0))
    weights: tuple[dict, ...] = ({"kind": "constant", "c": 1.0}, {"kind": "power", "a": 0.5})
    gammas: tuple[float, ...] = (0.5, 1.0)
    dict_count: int = 16
    dict_seed: int = 0
    n_t: int = 32
    t_min: float | None = None
    t_max: float = 2.0
    lam: float = 4.0
    J: int = 6
    r_min: float = 0.0625
    r_max: float = 2.0
    n_radii: int = 16
    stride: int = 1
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    corpus_seed: int = 0
    operators: tuple[str, ...] = OPERATORS
    symbol: str = "log_abs"
    memory_budget_mb: float = 2048.0

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(
            (float(q), _parse_p(p), float(a)) for q, p, a in self.params))
        object.__setattr__(self, "weights", tuple(dict(w) for w in self.weights))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "operators", tuple(self.operators))
        if isinstance(self.corpus, dict):
            object.__setattr__(self, "corpus", CorpusSpec.from_dict(self.corpus))
        self.validate()

    def validate(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.cells < 16:
            raise ValueError("need at least 16 cells per axis")
        bad = set(self.operators) - set(OPERATORS)
        if bad:
            raise ValueError(f"unknown operators {sorted(bad)}")
        for q, p, a in self.params:
            if not (1 < q <= a <= p):
                raise ValueError(f"need 1 < q <= alpha <= p, got {(q, p, a)}")
            if set(self.operators) & set(GSTAR_OPS) and not self.lam > max(q, 3.0):
                raise ValueError(f"g* needs lambda > max(q, 3); lambda={self.lam}, q={q}")
        for w in self.weights:
            Weight.from_config(w).check_dim(self.dim)
        if self.symbol != "log_abs":
            raise ValueError(f"unknown symbol {self.symbol!r}")
        if not 0 < self.t_max <= self.half_width:
            raise ValueError("t_max must lie in (0, half_width]")
        if self.J < 1:
            raise ValueError("J must be >= 1")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.cells

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def at_level(self, level: int) -> "ExperimentConfig":
        """Grid halved and dictionary doubled ``level - 1`` times; t-range and radii fixed."""
        if level < 1:
            raise ValueError("levels start at 1")
        f = 2 ** (level - 1)
        return self.replace(cells=self.cells * f, dict_count=self.dict_count * f,
                            t_min=self.t_min_value)

    @property
    def t_min_value(self) -> float:
        return 2.0 * self.h if self.t_min is None else self.t_min

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        d = dict(d)
        for key in ("params", "weights", "gammas", "operators"):
            if key in d:
                d[key] = tuple(tuple(x) if key == "params" else x for x in d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = [[q, "inf" if p == INF else p, a] for q, p, a in self.params]
        return d


@dataclass(frozen=True)
class ReportRow:
    operator: str
    f_id: str
    weight: str
    q: float
    p: float
    alpha: float
    lam: float
    gamma: float
    input_norm: float
    output_norm: float
    ratio: float
    level: int
    dict_size: int
    truncation_mass: float


FIELDS = tuple(f.name for f in dataclasses.fields(ReportRow))


@dataclass
class BoundednessReport:
    rows: list[ReportRow]
    skipped: list[tuple[str, str]]
    summary: dict[tuple, float]

    def max_ratio(self, **match) -> float:
        vals = [r.ratio for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]
        return max(vals) if vals else math.nan


@dataclass
class RefinementReport:
    levels: list[BoundednessReport]
    drift: dict[tuple, list[float]]
    fubini: list[float]


@dataclass
class Level:
    """Grid, family, quadrature, corpus and symbol for one configuration."""

    config: ExperimentConfig
    grid: Grid
    family: BallFamily
    quad: isq.ConeQuadrature
    corpus: list[GridFunction]
    symbol: GridFunction


def build_level(config: ExperimentConfig, base: ExperimentConfig | None = None) -> Level:
    """Materialize ``config``; radii are snapped on ``base``'s grid so that
    refinements share one family."""
    base = base or config
    grid = Grid.centered(config.dim, config.cells, config.half_width)
    base_grid = Grid.centered(base.dim, base.cells, base.half_width)
    family = BallFamily.geometric(base_grid, base.r_min, base.r_max, base.n_radii,
                                  base.stride, snap=True).on(grid)
    family = BallFamily(grid, family.radii, config.stride).validate()
    quad = isq.ConeQuadrature(base.t_min_value, config.t_max, config.n_t, 1.0, config.lam, config.J)
    quad.validate(grid)
    corpus = gen_corpus(config.corpus, config.corpus_seed, grid)
    return Level(config, grid, family, quad, corpus, log_abs_field(grid))


def _check_memory(config: ExperimentConfig, grid: Grid, quad: isq.ConeQuadrature) -> None:
    need = cm.memory_estimate(grid.shape, quad.n_t, config.dict_count)
    if need > config.memory_budget_mb * 2**20:
        raise MemoryError(
            f"memory budget exceeded: N_y*N_t*M = {grid.size}*{quad.n_t}*{config.dict_count} "
            f"needs {need / 2**20:.0f} MiB > {config.memory_budget_mb:g} MiB"
        )


def apply_operator(op: str, f: GridFunction, b: GridFunction, D: isq.TestDictionary,
                   Q: isq.ConeQuadrature, lam: float) -> GridFunction:
    if op == "S":
        return isq.s_gamma(f, D, Q)
    if op == "g":
        return isq.g_gamma(f, D, Q)
    if op == "gstar":
        return isq.g_star(f, D, Q, lam)
    if op == "[b,S]":
        return cm.commutator_s(f, b, D, Q)
    if op == "[b,g]":
        return cm.commutator_g(f, b, D, Q)
    if op == "[b,gstar]":
        return cm.commutator_gstar(f, b, D, Q, lam)
    raise ValueError(f"unknown operator {op!r}")


def run_boundedness(config: ExperimentConfig, level: int = 1,
                    base: ExperimentConfig | None = None) -> BoundednessReport:
    """Ratios ``fofana_norm(T f) / fofana_norm(f)`` over the full sweep.

    Rows are ordered by (gamma, f, operator, weight, params).  Inputs with
    norm below 1e-14 are skipped with a reason.
    """
    lv = build_level(config, base)
    _check_memory(config, lv.grid, lv.quad)
    weights = [Weight.from_config(w) for w in config.weights]
    rows: list[ReportRow] = []
    skipped: list[tuple[str, str]] = []
    for gamma in config.gammas:
        D = isq.build_dictionary(gamma, config.dict_count, config.dict_seed, config.dim)
        for f in lv.corpus:
            in_norms = {}
            for w in weights:
                for q, p, a in config.params:
                    prm = NormParams(q, p, a, w, lv.family)
                    in_norms[(w.label, q, p, a)] = (prm, fofana_norm(f, prm))
            if all(v < 1e-14 for _, v in in_norms.values()):
                skipped.append((f.name, "input norm below 1e-14"))
                continue
            for op in config.operators:
                Tf = apply_operator(op, f, lv.symbol, D, lv.quad, config.lam)
                trunc = isq.gstar_truncation_bound(config.dim, config.lam, config.J) if op in GSTAR_OPS else 0.0
                for (wl, q, p, a), (prm, nin) in in_norms.items():
                    if nin < 1e-14:
                        skipped.append((f.name, f"input norm below 1e-14 for {wl}"))
                        continue
                    nout = fofana_norm(Tf, prm)
                    rows.append(ReportRow(op, f.name, wl, q, p, a, config.lam, gamma,
                                          nin, nout, nout / nin, level, len(D), trunc))
        isq.clear_cache()
    summary: dict[tuple, float] = {}
    for r in rows:
        key = (r.operator, r.weight, r.q, r.p, r.alpha, r.gamma)
        summary[key] = max(summary.get(key, 0.0), r.ratio)
    return BoundednessReport(rows, skipped, summary)


def fubini_error(grid: Grid, family: BallFamily, corpus: Iterable[GridFunction]) -> float:
    """Max over bump members and radii of the relative gap between the
    fixed-radius amalgam norm with ``q = p = alpha = 2``, ``w = 1`` and the
    plain ``L^2`` norm."""
    from .norms import amalgam_fixed_r, lq_w_norm

    w = Weight.constant()
    prm = NormParams(2.0, 2.0, 2.0, w, family)
    worst = 0.0
    for f in corpus:
        if not f.name.startswith("bump"):
            continue
        ref = lq_w_norm(f, w, 2.0)
        for r in family.radii:
            worst = max(worst, abs(amalgam_fixed_r(f, prm, r) - ref) / ref)
    return worst


def run_refinement(config: ExperimentConfig, levels: int) -> RefinementReport:
    """Repeat :func:`run_boundedness` halving ``h`` and doubling the
    dictionary per level; drift is ``|m_(k+1) / m_k - 1|`` of the per-key max ratio."""
    if levels < 2:
        raise ValueError("refinement needs at least 2 levels")
    for k in range(1, levels + 1):
        cfg = config.at_level(k)
        _check_memory(cfg, Grid.centered(cfg.dim, cfg.cells, cfg.half_width),
                      isq.ConeQuadrature(config.t_min_value, cfg.t_max, cfg.n_t))
    reports, fub = [], []
    for k in range(1, levels + 1):
        cfg = config if k == 1 else config.at_level(k)
        reports.append(run_boundedness(cfg, level=k, base=config))
        lv = build_level(cfg, config)
        fub.append(fubini_error(lv.grid, lv.family, lv.corpus))
    drift: dict[tuple, list[float]] = {}
    for key in reports[0].summary:
        vals = [rep.summary.get(key, math.nan) for rep in reports]
        drift[key] = [abs(b / a - 1.0) for a, b in zip(vals, vals[1:])]
    return RefinementReport(reports, drift, fub)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(rows: Iterable[ReportRow], path: str | Path, fmt: str = "csv") -> None:
    """Write rows as CSV (fixed header) or JSON lines; floats use shortest
    round-trip decimal."""
    rows = list(rows)
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(FIELDS)
            for r in rows:
                wr.writerow([_fmt(getattr(r, k)) for k in FIELDS])
    elif fmt in ("jsonl", "json-lines"):
        with path.open("w") as fh:
            for r in rows:
                fh.write(json.dumps({k: getattr(r, k) for k in FIELDS}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


_TYPES = {f.name: f.type for f in dataclasses.fields(ReportRow)}


def _coerce(key: str, raw) -> object:
    kind = _TYPES[key]
    if kind == "str":
        return str(raw)
    if kind == "int":
        return int(raw)
    return float(raw)


def load_rows(path: str | Path, fmt: str = "csv") -> list[ReportRow]:
    path = Path(path)
    if fmt == "csv":
        with path.open(newline="") as fh:
            rd = csv.reader(fh)
            header = tuple(next(rd))
            if header != FIELDS:
                raise ValueError("unexpected header")
            return [ReportRow(**{k: _coerce(k, v) for k, v in zip(FIELDS, line)}) for line in rd]
    out = []
    for line in path.read_text().splitlines():
        d = json.loads(line)
        out.append(ReportRow(**{k: _coerce(k, d[k]) for k in FIELDS}))
    return out
