"""Command-line front end.

Exit status: 0 success, 1 domain or validation error, 2 I/O error,
3 refused because a size guard would be exceeded.
"""

from __future__ import annotations

import argparse
import math
import sys

from . import abstraction, bisim, ltl, traces
from .docs import (
    BUILTIN_SPEC, DocumentError, dumps, load_model, model_from_doc, model_to_doc, read_json,
    relation_from_doc, relation_to_doc, write_text,
)
from .lmc import BUILTINS, FiniteLmc, LmcError, ScaleGuardError, builtin, validate

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_GUARD = 0, 1, 2, 3


class Failed(Exception):
    """Command ran but its verdict is negative (exit 1, output still printed)."""


def _emit(args, command: str, params: dict, result: dict, table: list[str]) -> None:
    doc = {"command": command, "params": params, "result": result}
    if args.format == "doc":
        text = dumps(doc)
    else:
        text = "\n".join(table) + "\n"
    if getattr(args, "out", None):
        write_text(args.out, dumps(doc))
    sys.stdout.write(text)


def _fmt(x: float) -> str:
    return f"{x:.6f}" if math.isfinite(x) else str(x)


def cmd_validate(args) -> int:
    model = _read_unchecked(args.model)
    report = validate(model, strict=not args.normalize)
    result = {"ok": report.ok, "issues": report.issues, "adjustments": report.adjustments}
    table = ["valid" if report.ok else "invalid"] + [f"  {m}" for m in report.issues + report.adjustments]
    params = {"model": args.model, "normalize": args.normalize, "row_tol": 1e-9, "renorm_tol": 1e-6}
    _emit(args, "validate", params, result, table)
    if report.ok and args.normalize and args.write_model:
        write_text(args.write_model, dumps(model_to_doc(report.model)))
    if not report.ok:
        raise Failed
    return EXIT_OK


def _read_unchecked(spec: str) -> FiniteLmc:
    if BUILTIN_SPEC.match(spec):
        return load_model(spec)
    return model_from_doc(read_json(spec))


def cmd_bisim(args) -> int:
    model = load_model(args.model, args.normalize)
    if args.min_eps:
        s, t = args.min_eps
        value = bisim.minimal_epsilon(model, s, t, tol=args.tol)
        params = {"model": args.model, "pair": [s, t], "tol": args.tol}
        _emit(args, "bisim", params, {"minimal_epsilon": value}, [f"minimal eps({s}, {t}) = {value:.12g}"])
        return EXIT_OK
    if args.eps is None:
        raise LmcError("give --eps or --min-eps S T")
    rel = bisim.maximal_bisim(model, args.eps)
    names = model.states
    table = [f"maximal {args.eps}-bisimulation: {len(rel.pairs())} pairs"]
    table += [f"  {names[i]} ~ {names[j]}" for i, j in rel.pairs() if i < j]
    _emit(args, "bisim", {"model": args.model, "eps": args.eps}, relation_to_doc(rel), table)
    return EXIT_OK


def cmd_tracedist(args) -> int:
    model = load_model(args.model, args.normalize)
    d = traces.trace_distances(model, args.s, args.t, args.k)
    table = [f"{'k':>3}  d_tv"] + [f"{k:>3}  {v:.12g}" for k, v in enumerate(d)]
    result = {"distance": float(d[-1]), "per_k": [float(v) for v in d]}
    params = {"model": args.model, "s": args.s, "t": args.t, "k": args.k, "prune_mass": 1e-15}
    _emit(args, "tracedist", params, result, table)
    return EXIT_OK


def cmd_check(args) -> int:
    model = load_model(args.model, args.normalize)
    if args.formula_file:
        try:
            with open(args.formula_file, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise DocumentError(f"cannot read {args.formula_file}: {exc.strerror}") from None
    elif args.formula is not None:
        text = args.formula
    else:
        raise LmcError("give a formula or --formula-file")
    ast = ltl.parse(text)
    k = ltl.horizon(ast)
    params = {"model": args.model, "start": args.start, "formula": ltl.to_text(ast), "eps": args.eps}
    result = {"horizon": k}
    if args.against is not None:
        if args.eps is None:
            raise LmcError("--against needs --eps")
        c = ltl.closeness_bound(model, args.start, args.against, ast, args.eps)
        result.update(probability=c.p_s, partner_probability=c.p_t, bound=c.bound)
        table = [f"P[{args.start} |= phi] = {c.p_s:.6f}", f"P[{args.against} |= phi] = {c.p_t:.6f}",
                 f"bound (eps={args.eps}, k={k}) = {c.bound:.6f}"]
    else:
        p = ltl.probability(model, args.start, ast)
        result["probability"] = p
        table = [f"P[{args.start} |= phi] = {p:.6f}"]
        if args.eps is not None:
            b = traces.bisim_bound(args.eps, k)
            result["bound"] = b
            table.append(f"bound (eps={args.eps}, k={k}) = {b:.6f}")
    _emit(args, "check", params, result, table)
    return EXIT_OK


def cmd_casestudy(args) -> int:
    N = args.n
    if N < 1:
        raise LmcError("--n must be at least 1")
    h = math.floor(0.5 * N)
    model = abstraction.weather_abstract(N)
    start = abstraction.weather_state(0, h)
    ast = ltl.parse(abstraction.TWO_RAINY_DAYS)
    p = ltl.probability(model, start, ast)
    eps = 1.0 / N
    bound = traces.bisim_bound(eps, ltl.horizon(ast))
    result = {"abstract_probability": p, "eps": eps, "bound": bound, "start": start}
    table = [f"states              {model.n}", f"abstract P          {_fmt(p)}", f"eps = 1/N           {eps:.6g}",
             f"bound               {_fmt(bound)}"]
    if args.analytic:
        a = abstraction.weather_analytic()
        diff = abs(p - a.total)
        result.update(analytic=a.total, p11=a.p11, p011=a.p011, difference=diff, within_bound=diff <= bound)
        table += [f"analytic P          {_fmt(a.total)}", f"difference          {_fmt(diff)}",
                  f"within bound        {'yes' if diff <= bound else 'NO'}"]
    if args.export_prism:
        write_text(args.export_prism, abstraction.prism_listing(N))
        table.append(f"PRISM model written to {args.export_prism}")
    params = {"n": N, "formula": abstraction.TWO_RAINY_DAYS, "analytic_tol": abstraction.ANALYTIC_TOL}
    _emit(args, "casestudy", params, result, table)
    return EXIT_OK


def cmd_game(args) -> int:
    model = load_model(args.model, args.normalize)
    rep = traces.distinguishability_game(model, args.s, args.t, args.k, args.rounds, seed=args.seed)
    table = [f"rounds        {rep.rounds}", f"wins          {rep.wins}", f"empirical     {rep.empirical_rate:.6f}",
             f"optimal       {rep.exact_rate:.6f}", f"d_tv          {rep.d_tv:.6f}"]
    params = {"model": args.model, "s": args.s, "t": args.t, "k": args.k, "rounds": args.rounds, "seed": args.seed}
    _emit(args, "game", params, rep.to_doc(), table)
    return EXIT_OK


def cmd_altbisim(args) -> int:
    model = load_model(args.model, args.normalize)
    rel = relation_from_doc(read_json(args.relation), model)
    eps = args.eps if args.eps is not None else rel.eps
    alt = bisim.check_alt_bisim(model, rel, eps)
    names = model.states
    result = {"closed_set_notion": alt.ok}
    table = [f"closed-set notion at eps={eps}: {'holds' if alt.ok else 'fails'}"]
    if not alt.ok:
        i, j = alt.pair
        result.update(pair=[names[i], names[j]], gap=alt.gap)
        if alt.closed_set is not None:
            result["closed_set"] = sorted(names[x] for x in alt.closed_set)
        table.append(f"  pair ({names[i]}, {names[j]}) differs by {alt.gap:.6g} on a closed set")
    if rel.is_symmetric():
        lift = bisim.check_relation(model, rel, eps)
        result["lifting_notion"] = lift.ok
        table.append(f"lifting notion at eps={eps}: {'holds' if lift.ok else 'fails'}")
        if not lift.ok:
            i, j = lift.pair
            table.append(f"  pair ({names[i]}, {names[j]}): {lift.reason}")
    _emit(args, "altbisim", {"model": args.model, "relation": args.relation, "eps": eps}, result, table)
    if not alt.ok:
        raise Failed
    return EXIT_OK


def cmd_builtin(args) -> int:
    params = {}
    if args.eps is not None:
        params["eps"] = args.eps
    if args.n is not None:
        params["N"] = args.n
    model = builtin(args.name, **params)
    text = dumps(model_to_doc(model))
    if args.out:
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="approxbisim", description="Approximate bisimulation and trace distance for labelled Markov chains.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("model", help="chain document path, or builtin:NAME(ARG)")
            sp.add_argument("--normalize", action="store_true", help="rescale rows off by at most 1e-6")
        sp.add_argument("--format", choices=("table", "doc"), default="table")
        sp.add_argument("--out", help="also write the result document here")
        return sp

    sp = common(sub.add_parser("validate", help="check a chain document"))
    sp.add_argument("--write-model", help="with --normalize, write the corrected chain here")
    sp.set_defaults(func=cmd_validate)

    sp = common(sub.add_parser("bisim", help="maximal eps-bisimulation or least eps for a pair"))
    sp.add_argument("--eps", type=float, help="print the maximal eps-bisimulation")
    sp.add_argument("--min-eps", nargs=2, metavar=("S", "T"), help="least eps relating S and T")
    sp.add_argument("--tol", type=float, default=1e-9, help="accuracy of --min-eps")
    sp.set_defaults(func=cmd_bisim)

    sp = common(sub.add_parser("tracedist", help="total variation between trace laws"))
    sp.add_argument("s")
    sp.add_argument("t")
    sp.add_argument("--k", type=int, required=True, help="number of transitions (traces have k + 1 letters)")
    sp.set_defaults(func=cmd_tracedist)

    sp = common(sub.add_parser("check", help="probability of a bounded LTL formula"))
    sp.add_argument("start")
    sp.add_argument("formula", nargs="?")
    sp.add_argument("--formula-file", help="read the formula from this file")
    sp.add_argument("--eps", type=float, help="also print 1 - (1 - eps)^horizon")
    sp.add_argument("--against", metavar="T", help="second state; certifies the closeness bound")
    sp.set_defaults(func=cmd_check)

    sp = common(sub.add_parser("casestudy", help="rain/humidity abstraction end to end"), model=False)
    sp.add_argument("--n", type=int, default=1000, help="humidity cells per rain mode")
    sp.add_argument("--analytic", action="store_true", help="compare with the continuous model")
    sp.add_argument("--export-prism", metavar="PATH", help="write the abstract chain as a PRISM model")
    sp.set_defaults(func=cmd_casestudy)

    sp = common(sub.add_parser("game", help="simulate the distinguishability game"))
    sp.add_argument("s")
    sp.add_argument("t")
    sp.add_argument("--k", type=int, required=True, help="number of transitions shown to the observer")
    sp.add_argument("--rounds", type=int, default=100000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_game)

    sp = common(sub.add_parser("altbisim", help="closed-set notion against the lifting notion"))
    sp.add_argument("relation", help="relation document path")
    sp.add_argument("--eps", type=float, help="overrides the eps stored in the relation")
    sp.set_defaults(func=cmd_altbisim)

    sp = sub.add_parser("builtin", help="write a builtin chain as a document")
    sp.add_argument("name", choices=BUILTINS)
    sp.add_argument("--eps", type=float, help="parameter of tightness")
    sp.add_argument("--n", type=int, help="size parameter of alt_counterexample and weather_abstract")
    sp.add_argument("--out", help="write here instead of stdout")
    sp.set_defaults(func=cmd_builtin)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Failed:
        return EXIT_DOMAIN
    except ScaleGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except DocumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
