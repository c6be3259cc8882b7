"""Command-line front end.

    cstarfourier tower MODEL.json --depth 3 --out report.json
    cstarfourier verify --suite fourier --models all
    cstarfourier lattice MODEL.json --dot lattice.dot --out report.json

Exit codes: 0 when no check fails, 1 on a failed check, 2 on usage or spec errors.
Reports are JSON with sorted keys, so identical inputs give identical bytes.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from pathlib import Path

from . import __version__
from .models import BadSpec, ModelSpec, build, corpus
from .numkernel import TOL_OPERATOR, TOL_PROJECTION, TOL_ROUNDING, default_seed
from .tower import DepthLimit, jones_tower

SUITES = ("expect", "tower", "fourier", "biproj", "angles")


def tolerance_ledger() -> dict:
    from .angles import CLAMP, TOL_ANGLE
    from .fourier import TOL_MEMBER
    from .lattice import DEDUP, NODE_CAP

    return {
        "operator": TOL_OPERATOR,
        "projection": TOL_PROJECTION,
        "rounding": TOL_ROUNDING,
        "membership": TOL_MEMBER,
        "angle": TOL_ANGLE,
        "angle_clamp": CLAMP,
        "lattice_dedup": DEDUP,
        "lattice_node_cap": NODE_CAP,
    }


def default_depth(index: float) -> int:
    """Depth 3 for index at most 3, else 2 (A_3 grows like index^4)."""
    return 3 if index <= 3 + 1e-9 else 2


def make_report(model: str, suite: str, seed: int, checks, extra: dict | None = None) -> dict:
    counts = Counter(c.status for c in checks)
    rep = {
        "tool": "cstarfourier",
        "version": __version__,
        "seed": seed,
        "model": model,
        "suite": suite,
        "tolerances": tolerance_ledger(),
        "checks": [c.to_dict() for c in checks],
        "summary": {k: counts.get(k, 0) for k in ("pass", "fail", "hypothesis_not_met", "undefined")},
    }
    if extra:
        rep.update(extra)
    return rep


def dump(rep: dict) -> str:
    return json.dumps(rep, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def load_spec(path) -> ModelSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise BadSpec(f"cannot read {path}: {exc}") from exc
    return ModelSpec.from_json(text)


def build_model(spec: ModelSpec):
    """build() with malformed parameters reported as BadSpec."""
    try:
        return build(spec)
    except BadSpec:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise BadSpec(f"bad parameters for {spec.family}: {exc}") from exc


# suites -----------------------------------------------------------------------------------


def run_suite(suite: str, model, seed: int, tol: float | None = None, depth: int | None = None):
    """Checks and extra report fields for one suite on one built model."""
    from .expect import expect_suite, minimal_expectation

    kw = {} if tol is None else {"tol": tol}
    if suite == "expect":
        return expect_suite(model.pair, seed=seed, **kw), {}
    index = minimal_expectation(model.pair).index_norm
    d = default_depth(index) if depth is None else depth
    tw = jones_tower(model.pair, d)
    extra = {"depth": d}
    if suite == "tower":
        from .tower import tower_suite

        return tower_suite(tw, **kw), extra
    from .fourier import FourierContext

    fc = FourierContext(tw)
    ints = [(label, tw.lift_algebra(a, label)) for label, a in model.intermediates()]
    if suite == "fourier":
        from .fourier import fourier_suite

        return fourier_suite(fc, seed=seed, **kw), extra
    if suite == "biproj":
        from .biproj import biprojection_suite

        return biprojection_suite(fc, ints, **kw), extra
    if suite == "angles":
        from .angles import angle_suite, exterior_angle, interior_angle, quadruple

        quads = [(f"{l1}|{l2}", a1, a2) for i, (l1, a1) in enumerate(ints) for l2, a2 in ints[i:]]
        records = []
        for label, C, D in quads:
            q = quadruple(fc, C, D, label=label)
            a = interior_angle(fc, q)
            rec = {"quadruple": label, "alpha": a.angle, "cos_alpha": a.cos, "r": q.r}
            if d >= 2:
                b = exterior_angle(fc, q)
                rec.update({"beta": b.angle, "cos_beta": b.cos})
            records.append(rec)
        extra["angles"] = records
        return angle_suite(fc, quads, **kw), extra
    raise ValueError(f"unknown suite {suite!r}")


# commands -----------------------------------------------------------------------------------


def cmd_tower(args) -> int:
    from .tower import MAX_DEPTH, tower_suite

    spec = load_spec(args.spec)
    if args.depth > MAX_DEPTH:
        raise DepthLimit(f"depth {args.depth} exceeds the limit {MAX_DEPTH}")
    model = build_model(spec)
    t0 = time.perf_counter()
    tw = jones_tower(model.pair, args.depth)
    kw = {} if args.tol is None else {"tol": args.tol}
    checks = tower_suite(tw, **kw)
    extra = {"depth": args.depth, "commutant_dims": [tw.B_commutant(k).dim for k in range(args.depth + 1)],
             "index": tw.index}
    if args.timing:
        extra["timing_s"] = time.perf_counter() - t0
    rep = make_report(spec.label, "tower", args.seed, checks, extra)
    _emit(rep, args.out)
    return 1 if rep["summary"]["fail"] else 0


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return 2
    specs = corpus(default=True)
    if args.models != "all":
        wanted = args.models.split(",")
        pool = {s.label: s for s in corpus(default=False)}
        missing = [w for w in wanted if w not in pool]
        if missing:
            raise BadSpec(f"unknown model(s): {', '.join(missing)}")
        specs = [pool[w] for w in wanted]
    failed = False
    rows = []
    for spec in specs:
        t0 = time.perf_counter()
        checks, extra = run_suite(args.suite, build_model(spec), args.seed, args.tol)
        if args.timing:
            extra["timing_s"] = time.perf_counter() - t0
        rep = make_report(spec.label, args.suite, args.seed, checks, extra)
        s = rep["summary"]
        failed = failed or s["fail"] > 0
        rows.append((spec.label, s))
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            _write(Path(args.out_dir) / f"{spec.label}.{args.suite}.json", dump(rep))
    width = max(len(r[0]) for r in rows) if rows else 5
    print(f"{'model':<{width}}  pass  fail  hyp  undef")
    for label, s in rows:
        print(f"{label:<{width}}  {s['pass']:>4}  {s['fail']:>4}  {s['hypothesis_not_met']:>3}  {s['undefined']:>5}")
    return 1 if failed else 0


def cmd_lattice(args) -> int:
    from .lattice import hasse, lattice_report

    spec = load_spec(args.spec)
    model = build_model(spec)
    lat, checks = lattice_report(model, seed=args.seed, cap=args.cap, candidates=args.candidates)
    extra = {
        "strategy": lat.strategy,
        "heuristic": lat.heuristic,
        "warnings": list(lat.warnings),
        "warning": bool(lat.warnings),
        "nodes": [
            {"label": n.label, "dim": n.dim, "index_top": n.index_top, "index_bottom": n.index_bottom,
             "minimal": n.minimal}
            for n in lat.nodes
        ],
        "edges": [[lat.nodes[i].label, lat.nodes[j].label] for i, j in sorted(lat.edges)],
    }
    rep = make_report(spec.label, "lattice", args.seed, checks, extra)
    if args.dot:
        _write(args.dot, hasse(lat))
    _emit(rep, args.out)
    return 1 if rep["summary"]["fail"] else 0


def _emit(rep: dict, out) -> None:
    text = dump(rep)
    if out:
        _write(out, text)
    s = rep["summary"]
    print(f"{rep['model']}: {s['pass']} pass, {s['fail']} fail, "
          f"{s['hypothesis_not_met']} hypothesis_not_met, {s['undefined']} undefined")


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cstarfourier", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                        help="random seed (default: CSTAR_SEED or the package default)")
        sp.add_argument("--timing", action="store_true", help="add wall-clock timing to reports")

    t = sub.add_parser("tower", help="build a tower and run its invariant suite")
    t.add_argument("spec")
    t.add_argument("--depth", type=int, default=2)
    t.add_argument("--out")
    t.add_argument("--tol", type=float)
    common(t)
    t.set_defaults(func=cmd_tower)

    v = sub.add_parser("verify", help="run an invariant suite over the corpus")
    v.add_argument("--suite", required=True)
    v.add_argument("--models", default="all", help="'all' or comma-separated model labels")
    v.add_argument("--tol", type=float)
    v.add_argument("--out-dir")
    common(v)
    v.set_defaults(func=cmd_verify)

    lt = sub.add_parser("lattice", help="enumerate intermediate subalgebras")
    lt.add_argument("spec")
    lt.add_argument("--dot")
    lt.add_argument("--out")
    lt.add_argument("--cap", type=int, default=10_000)
    lt.add_argument("--candidates", type=int, default=5000)
    common(lt)
    lt.set_defaults(func=cmd_lattice)
    return p


def main(argv=None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    if args.seed is None:
        args.seed = default_seed()
    try:
        return args.func(args)
    except (BadSpec, DepthLimit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
