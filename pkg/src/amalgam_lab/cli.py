"""Command-line entry point ``amalgam-lab``.

Exit codes: 0 when every check passes, 2 on a failed check, 1 on a usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import intrinsic_sq as isq
from .grid_core import Ball, Grid, load_gridfunction, save_gridfunction
from .norms import NormParams, fofana_profile, log_abs_field, morrey_kappa, weighted_morrey_norm
from .weights import BallFamily, Weight, aq_constant, doubling_ratio, reverse_holder

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.from_json(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(corpus_seed=args.seed, dict_seed=args.seed)
    return cfg


def _open_out(args):
    return open(args.out, "w", newline="") if args.out else sys.stdout


def cmd_gen_corpus(args) -> int:
    cfg = _config(args)
    lv = ex.build_level(cfg)
    out = Path(args.out or "corpus")
    out.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(lv.corpus):
        save_gridfunction(f, out / f"{i:03d}.grid")
    (out / "index.txt").write_text("".join(f"{i:03d} {f.name}\n" for i, f in enumerate(lv.corpus)))
    print(f"wrote {len(lv.corpus)} members to {out}")
    return EXIT_OK


def _family_for(cfg: ex.ExperimentConfig, grid: Grid) -> BallFamily:
    return BallFamily.geometric(grid, cfg.r_min, cfg.r_max, cfg.n_radii, cfg.stride, snap=True).validate()


def cmd_norm(args) -> int:
    cfg = _config(args)
    f = load_gridfunction(args.input)
    fam = _family_for(cfg, f.grid)
    cols = ("norm_name", "q", "p", "alpha", "kappa", "weight_kind", "value", "r_at_max")
    fh = _open_out(args)
    try:
        rows = []
        for wspec in cfg.weights:
            w = Weight.from_config(wspec)
            for q, p, a in cfg.params:
                prm = NormParams(q, p, a, w, fam)
                val, r_at, _ = fofana_profile(f, prm)
                kappa = morrey_kappa(q, a) if p == math.inf else math.nan
                rows.append(("fofana", q, p, a, kappa, w.label, val, r_at))
                if p == math.inf:
                    rows.append(("weighted_morrey", q, p, a, kappa, w.label,
                                 weighted_morrey_norm(f, q, kappa, w, fam), math.nan))
        if args.format == "csv":
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(cols)
            wr.writerows([[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
        else:
            for r in rows:
                fh.write(json.dumps(dict(zip(cols, r))) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def _operator_output(args, commutator: bool):
    cfg = _config(args)
    f = load_gridfunction(args.input)
    D = isq.build_dictionary(args.gamma, cfg.dict_count, cfg.dict_seed, f.dim)
    t_min = cfg.t_min if cfg.t_min is not None else 2.0 * f.h
    Q = isq.ConeQuadrature(t_min, cfg.t_max, cfg.n_t, 1.0, cfg.lam, cfg.J).validate(f.grid)
    op = args.op if not commutator else f"[b,{args.op}]"
    b = load_gridfunction(args.symbol) if commutator and args.symbol else log_abs_field(f.grid)
    Tf = ex.apply_operator(op, f, b, D, Q, cfg.lam)
    if args.out:
        save_gridfunction(Tf, args.out)
    print(f"{op} max={float(np.max(Tf.values))!r}")
    return EXIT_OK


def cmd_square(args) -> int:
    return _operator_output(args, commutator=False)


def cmd_commutator(args) -> int:
    return _operator_output(args, commutator=True)


def cmd_experiment(args) -> int:
    cfg = _config(args)
    rep = ex.run_boundedness(cfg)
    if args.out:
        ex.emit(rep.rows, args.out, args.format)
    for key, val in sorted(rep.summary.items()):
        print("max_ratio", *key, repr(val))
    for name, why in rep.skipped:
        print("skipped", name, why)
    ok = all(math.isfinite(r.ratio) for r in rep.rows)
    print("PASS" if ok else "FAIL: non-finite ratio")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_refine(args) -> int:
    cfg = _config(args)
    rep = ex.run_refinement(cfg, args.levels)
    if args.out:
        ex.emit([r for lv in rep.levels for r in lv.rows], args.out, args.format)
    worst = 0.0
    for key, drifts in sorted(rep.drift.items()):
        print("drift", *key, *(repr(d) for d in drifts))
        worst = max([worst, *drifts])
    print("fubini_error", *(repr(e) for e in rep.fubini))
    ok = worst <= args.tolerance
    print("PASS" if ok else f"FAIL: drift {worst!r} > {args.tolerance!r}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_weights_audit(args) -> int:
    cfg = _config(args)
    grid = Grid.centered(cfg.dim, cfg.cells, cfg.half_width)
    fam = _family_for(cfg, grid)
    quarter = BallFamily.geometric(grid, cfg.r_min, cfg.r_max / 4, cfg.n_radii, cfg.stride, snap=True)
    ok = True
    for wspec in cfg.weights:
        w = Weight.from_config(wspec)
        try:
            aq = aq_constant(w, args.q, fam)
            rh = reverse_holder(w, args.q, fam)
        except ArithmeticError as err:
            print(w.label, "FAIL", err)
            ok = False
            continue
        # an A_q weight plateaus as the radius range grows; others keep climbing
        plateau = aq / aq_constant(w, args.q, quarter)
        ball = Ball((0.0,) * cfg.dim, 1.0)
        dr = doubling_ratio(w, ball, 2.0, grid)
        bound = aq * 2.0 ** (cfg.dim * args.q)
        good = aq >= 1 - 1e-9 and dr <= bound and plateau <= 1.1
        ok &= good
        print(w.label, f"A_q={aq!r}", f"plateau={plateau!r}", f"tau={rh.tau!r}",
              f"rh_const={rh.constant!r}", f"doubling(2)={dr!r}", "ok" if good else "FAIL")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override corpus and dictionary seeds")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    p = _Parser(prog="amalgam-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-corpus", parents=[common], help="write the corpus as grid files").set_defaults(run=cmd_gen_corpus)
    sp = sub.add_parser("norm", parents=[common], help="Fofana / weighted Morrey norms of a grid file")
    sp.add_argument("input")
    sp.set_defaults(run=cmd_norm)
    for name, func, ops in (("square", cmd_square, ("S", "g", "gstar")),
                            ("commutator", cmd_commutator, ("S", "g", "gstar"))):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("input")
        sp.add_argument("--op", choices=ops, default="S")
        sp.add_argument("--gamma", type=float, default=1.0)
        if name == "commutator":
            sp.add_argument("--symbol", help="grid file for b (default log|x|)")
        sp.set_defaults(run=func)
    sub.add_parser("experiment", parents=[common], help="boundedness ratios").set_defaults(run=cmd_experiment)
    sp = sub.add_parser("refine", parents=[common], help="refinement study")
    sp.add_argument("--levels", type=int, default=2)
    sp.add_argument("--tolerance", type=float, default=0.25)
    sp.set_defaults(run=cmd_refine)
    sp = sub.add_parser("weights-audit", parents=[common], help="A_q, reverse Hoelder and doubling report")
    sp.add_argument("--q", type=float, default=2.0)
    sp.set_defaults(run=cmd_weights_audit)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except MemoryError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
