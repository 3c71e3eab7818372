"""Command-line interface: count, sample, exact, verify."""

import argparse
import json
import sys
from fractions import Fraction

from . import oracle
from .errors import CspcountError, InternalError
from .formats import load_file
from .model import Caps, DEFAULT_CAPS, PartialAssignment, default_params
from .pipeline import Sampler, count_approx
from .verify import verify_instance


def _fraction(text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError("not a rational number: %r" % text)


def _caps(text):
    fields = dict(oracle=DEFAULT_CAPS.oracle, nodes=DEFAULT_CAPS.tree_nodes,
                  enum=DEFAULT_CAPS.enumeration, resample=DEFAULT_CAPS.resample)
    for part in text.split(","):
        if not part:
            continue
        key, _, value = part.partition("=")
        if key not in fields or not value.isdigit():
            raise argparse.ArgumentTypeError(
                "caps must be comma-separated key=int with keys %s" % sorted(fields)
            )
        fields[key] = int(value)
    return Caps(oracle=fields["oracle"], tree_nodes=fields["nodes"],
                enumeration=fields["enum"], resample=fields["resample"])


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="cspcount",
        description="Approximate counting and near-uniform sampling of CSP solutions, "
                    "with a brute-force oracle for verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file")
        p.add_argument("--format", default="auto",
                       choices=["auto", "dimacs", "hcol", "csp"])
        p.add_argument("--epsilon", type=_fraction, default=Fraction(1, 5))
        p.add_argument("--L", type=int, default=None, dest="depth",
                       help="override the truncation depth (warns; certificates "
                            "are recomputed from the actual value)")
        p.add_argument("--p-freeze", type=_fraction, default=None,
                       help="set both freezing thresholds")
        p.add_argument("--caps", type=_caps, default=DEFAULT_CAPS)
        p.add_argument("--json", action="store_true")

    p_count = sub.add_parser("count", help="deterministic approximate count")
    common(p_count)

    p_sample = sub.add_parser("sample", help="near-uniform satisfying assignments")
    common(p_sample)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--samples", type=int, default=1)

    p_exact = sub.add_parser("exact", help="brute-force oracle count or marginal")
    common(p_exact)
    p_exact.add_argument("--marginal", type=int, default=None, metavar="VAR",
                         help="1-based variable; print its exact conditional "
                              "distribution instead of the count")

    p_verify = sub.add_parser("verify", help="run the invariant battery")
    common(p_verify)
    return parser


def _frac_json(f):
    if f is None:
        return None
    return {"fraction": "%d/%d" % (f.numerator, f.denominator), "float": float(f)}


def _params_json(params):
    return {
        "q": params.q,
        "k": params.k,
        "delta": params.delta,
        "p": _frac_json(params.p),
        "p_guide": _frac_json(params.p_guide),
        "p_freeze": _frac_json(params.p_freeze),
        "depth": params.depth,
        "epsilon": _frac_json(params.eps),
        "eta": _frac_json(params.eta),
    }


def _emit(obj, as_json):
    if as_json:
        print(json.dumps(obj, sort_keys=True))
    return 0


def _regime_lines(report):
    lines = []
    for entry in report["entries"]:
        lines.append("  [%s] %s: %s" % ("ok" if entry["holds"] else "VIOLATED",
                                        entry["name"], entry["detail"]))
    return lines


def _cmd_count(args):
    inst = load_file(args.file, kind=args.format)
    params = default_params(inst, eps=args.epsilon, depth=args.depth,
                            p_freeze=args.p_freeze)
    result = count_approx(inst, params, caps=args.caps)
    if args.json:
        steps = []
        for s in result.per_step_marginals:
            steps.append({
                "stage": s.stage,
                "var": s.var + 1,
                "value": s.value,
                "kind": s.kind,
                "estimate": _frac_json(s.estimate),
                "lo": _frac_json(s.lo),
                "hi": _frac_json(s.hi),
            })
        return _emit({
            "command": "count",
            "n": inst.n,
            "m": inst.m,
            "estimate": _frac_json(result.estimate),
            "estimate_integer_rounded": str(round(result.estimate)),
            "relative_error_bound": _frac_json(result.relative_error_bound),
            "certified_error_bound": _frac_json(result.certified_error_bound),
            "residual_count": str(result.residual_count),
            "params": _params_json(params),
            "regime": result.regime_report,
            "steps": steps,
        }, True)
    print("instance: n=%d m=%d q=%d k=%d delta=%d" % (inst.n, inst.m, inst.q,
                                                      inst.k, inst.delta))
    print("regime report:")
    for line in _regime_lines(result.regime_report):
        print(line)
    est = result.estimate
    if est.numerator < 10**12 and est.denominator < 10**12:
        print("estimate: %s  (~%.6g)" % (est, float(est)))
    else:
        print("estimate: ~%.9g  (exact rational in --json output)" % float(est))
    print("relative error bound (achieved): %.6g" % float(result.relative_error_bound))
    if result.certified_error_bound is None:
        print("certified error bound: vacuous at this depth")
    else:
        print("certified error bound: %.6g" % float(result.certified_error_bound))
    return 0


def _cmd_sample(args):
    inst = load_file(args.file, kind=args.format)
    params = default_params(inst, eps=args.epsilon, depth=args.depth,
                            p_freeze=args.p_freeze, sampling=True)
    sampler = Sampler(inst, params=params, caps=args.caps)
    results = [sampler.sample(args.seed + i) for i in range(args.samples)]
    if args.json:
        return _emit({
            "command": "sample",
            "n": inst.n,
            "m": inst.m,
            "seed": args.seed,
            "params": _params_json(params),
            "samples": [
                {"assignment": r.assignment, "path": r.path} for r in results
            ],
        }, True)
    for r in results:
        print("%s  # path=%s" % (" ".join(str(a) for a in r.assignment), r.path))
    return 0


def _cmd_exact(args):
    inst = load_file(args.file, kind=args.format)
    if args.marginal is not None:
        var = args.marginal - 1
        if not 0 <= var < inst.n:
            raise InternalError("variable %d out of range" % args.marginal)
        dist = oracle.brute_marginal(inst, PartialAssignment.empty(), var, caps=args.caps)
        if args.json:
            return _emit({
                "command": "exact",
                "marginal_of": args.marginal,
                "distribution": [_frac_json(p) for p in dist],
            }, True)
        for a, p in enumerate(dist):
            print("value %d: %s (~%.6g)" % (a, p, float(p)))
        return 0
    count = oracle.brute_count(inst, caps=args.caps)
    if args.json:
        return _emit({"command": "exact", "count": str(count)}, True)
    print(count)
    return 0


def _cmd_verify(args):
    inst = load_file(args.file, kind=args.format)
    params = default_params(inst, eps=args.epsilon, depth=args.depth,
                            p_freeze=args.p_freeze)
    results = verify_instance(inst, params, caps=args.caps)
    failed = False
    out = []
    for name, ok, detail in results:
        status = "skip" if ok is None else ("ok" if ok else "FAIL")
        failed = failed or ok is False
        out.append((name, status, detail))
    if args.json:
        _emit({
            "command": "verify",
            "checks": [
                {"name": n, "status": s, "detail": d} for n, s, d in out
            ],
        }, True)
    else:
        for name, status, detail in out:
            print("[%s] %s: %s" % (status, name, detail))
    return 9 if failed else 0


def run_cli(argv):
    """Parse arguments and dispatch; returns the process exit status."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "count": _cmd_count,
        "sample": _cmd_sample,
        "exact": _cmd_exact,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except CspcountError as exc:
        print("error (%s): %s" % (exc.category, exc), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print("error (syntax): %s" % exc, file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
