"""Command-line entry point: ``elldensity {density,verify,catalog,goursat,artin}``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from fractions import Fraction

import mpmath

from . import __version__
from .catalog import (
    CATALOG_IDS,
    CatalogEntry,
    CatalogError,
    SerreCurveSpec,
    WeierstrassCurve,
    catalog_entries,
    catalog_entry,
)
from .density import (
    DEFAULT_L,
    DensityProblem,
    artin_classical,
    compute_density,
    spec_at_working_levels,
    vanishing_analysis,
)
from .entanglement import EntanglementSpec, SpecError, build_phi, materialize
from .groups import CapExceededError, GroupError, goursat_data, has_abelian_entanglements, is_normal, regroup

EXIT_OK, EXIT_INVALID, EXIT_CAP = 0, 2, 3


class UsageError(ValueError):
    pass


def _sha(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _fraction(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


# --------------------------------------------------------------------------
# inputs


def _resolve_entry(args) -> tuple[CatalogEntry, dict]:
    """Catalog entry plus an input descriptor for the report hash."""
    if args.catalog:
        entry = catalog_entry(args.catalog)
        return entry, {"catalog": args.catalog, "sha256": _sha(entry.to_json())}
    if args.entry:
        with open(args.entry, "rb") as fh:
            raw = fh.read()
        try:
            entry = CatalogEntry.from_json(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise CatalogError(f"malformed JSON in {args.entry}: {exc}") from None
        return entry, {"entry_file": args.entry, "sha256": hashlib.sha256(raw).hexdigest()}
    if args.curve:
        try:
            ainvs = [int(x) for x in args.curve.replace(" ", "").split(",")]
        except ValueError:
            raise UsageError("--curve expects comma-separated integers") from None
        curve = WeierstrassCurve.from_ainvs(ainvs)
        desc = {"curve": list(curve.ainvs)}
        if args.spec:
            with open(args.spec, "rb") as fh:
                raw = fh.read()
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SpecError(f"malformed spec JSON in {args.spec}: {exc}") from None
            desc["spec_sha256"] = hashlib.sha256(raw).hexdigest()
            spec = dict(data, kind=data.get("kind", "explicit"))
            serre = None
        else:
            spec = {"kind": "serre"}
            serre = SerreCurveSpec.from_delta(curve.discriminant)
            desc["serre_asserted"] = True
        m_E = int(getattr(args, "m_E", None) or 0)
        entry = CatalogEntry("user", curve, m_E, spec, ["user input"], serre)
        desc["sha256"] = _sha(desc)
        return entry, desc
    raise UsageError("give one of --catalog, --entry or --curve")


def _problem(args) -> DensityProblem:
    kind = args.problem
    if kind == "cyclic-ap":
        if args.f is None or args.a is None:
            raise UsageError("cyclic-ap needs --a and --f")
        return DensityProblem.ap(args.a, args.f)
    if kind == "koblitz":
        return DensityProblem.koblitz(args.t if args.t is not None else 1)
    if args.a is not None or args.f is not None:
        raise UsageError("--a/--f only apply to cyclic-ap")
    return DensityProblem.cyclic()


def _envelope(verb: str, args, inputs: dict, body: dict) -> dict:
    return {
        "tool": "elldensity",
        "version": __version__,
        "command": verb,
        "seed": getattr(args, "seed", None),
        "truncation_L": getattr(args, "L", None),
        "inputs": inputs,
        "result": body,
    }


# --------------------------------------------------------------------------
# verbs


def _density(args):
    entry, inputs = _resolve_entry(args)
    problem = _problem(args)
    args.L = args.L or DEFAULT_L[problem.kind]
    res = compute_density(problem, entry.spec, L=args.L)
    body = res.to_json()
    body["curve"] = entry.id
    if isinstance(entry.spec, EntanglementSpec):
        body["vanishing_analysis"] = str(vanishing_analysis(problem, entry.spec))
    return _envelope("density", args, inputs, body)


def _verify(args):
    from .verifier import census

    entry, inputs = _resolve_entry(args)
    problem = _problem(args)
    args.L = args.L or DEFAULT_L[problem.kind]
    prediction = compute_density(problem, entry.spec, L=args.L)
    rep = census(
        entry.curve,
        problem,
        args.x,
        threads=args.threads,
        seed=args.seed,
        prediction=prediction,
        dump=args.dump,
        checkpoint=args.checkpoint,
    )
    body = rep.to_json()
    body["predicted_digits"] = prediction.digits
    return _envelope("verify", args, inputs, body)


def _catalog(args):
    if args.id:
        e = catalog_entry(args.id)
        body = e.to_json()
        body["j_invariant"] = str(e.curve.j_invariant)
        body["bad_primes"] = list(e.curve.bad_primes)
        if isinstance(e.spec, EntanglementSpec):
            sq = spec_at_working_levels(DensityProblem.cyclic(), e.spec)
            body["phi_orders"] = list(build_phi(e.spec).group.cyclic_orders)
            body["phi_orders_squarefree_level"] = list(build_phi(sq).group.cyclic_orders)
        else:
            body["phi_orders"] = None
        if e.serre is not None:
            body["serre"] = e.serre.to_json()
        return _envelope("catalog", args, {"catalog": args.id, "sha256": _sha(e.to_json())}, body)
    rows = [{"id": e.id, "ainvs": list(e.curve.ainvs), "m_E": e.m_E, "kind": e.spec_data.get("kind", "explicit")}
            for e in catalog_entries()]
    return _envelope("catalog", args, {"catalog": "all"}, {"entries": rows})


def _parse_blocks(text: str, n: int) -> list[list[int]]:
    if not text:
        if n < 2:
            raise UsageError("need at least two components for a Goursat decomposition")
        return [[0], list(range(1, n))]
    blocks = [[int(i) for i in part.split(",") if i.strip()] for part in text.split("|")]
    if len(blocks) != 2:
        raise UsageError("--blocks needs exactly two blocks, e.g. '0|1,2'")
    return blocks


def _goursat(args):
    entry, inputs = _resolve_entry(args)
    spec = entry.spec
    if isinstance(spec, EntanglementSpec):
        spec = spec_at_working_levels(DensityProblem.cyclic(), spec)
        g = materialize(spec, cap=args.cap)
        labels = [c.level for c in spec.components]
    else:
        g = spec.product_subgroup()
        labels = [2, 3]
    blocks = _parse_blocks(args.blocks, len(g.factors))
    g2 = regroup(g, blocks)
    data = goursat_data(g2)
    body = {
        "curve": entry.id,
        "component_levels": labels,
        "blocks": blocks,
        "order": g.order,
        "factor_orders": [f.order for f in g2.factors],
        "kernel_orders": [data.n1.order, data.n2.order],
        "quotient_order": data.quotient.order,
        "quotient_abelian": bool((data.quotient.table == data.quotient.table.T).all()),
        "abelian_entanglements": has_abelian_entanglements(g),
        "normal_in_product": is_normal(g, g.__class__.full(g.factors, cap=max(args.cap, g.order))) if args.check_normal else None,
    }
    return _envelope("goursat", args, inputs, body)


def _artin(args):
    res = artin_classical(args.g, L=args.L or 10**5, N=args.N)
    args.L = args.L or 10**5
    return _envelope("artin", args, {"g": args.g}, res.to_json())


# --------------------------------------------------------------------------
# output


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list) and obj and isinstance(obj[0], dict):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix.rstrip("."), obj


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2)
    rows = list(_flatten(report))
    width = max(len(k) for k, _ in rows) if rows else 0
    return "\n".join(f"{k.ljust(width)}  {json.dumps(v) if not isinstance(v, str) else v}" for k, v in rows)


def _add_source(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--catalog", choices=CATALOG_IDS, help="catalog curve id")
    src.add_argument("--entry", help="catalog-entry JSON file (curve + spec)")
    src.add_argument("--curve", help="inline coefficients a1,a2,a3,a4,a6 (or a4,a6)")
    p.add_argument("--spec", help="EntanglementSpec JSON for --curve (default: assume a Serre curve)")


def _add_problem(p):
    p.add_argument("problem", choices=("cyclic", "cyclic-ap", "koblitz"))
    p.add_argument("--a", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--L", type=int, help="Euler product truncation (default 1e5, Koblitz 1e6)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elldensity", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "table"), default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    ap.add_argument("--format", choices=("json", "table"), default="json")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    d = sub.add_parser("density", parents=[common], help="density constant with entanglement correction")
    _add_problem(d)
    _add_source(d)

    v = sub.add_parser("verify", parents=[common], help="empirical census over primes p <= x")
    _add_problem(v)
    _add_source(v)
    v.add_argument("--x", type=int, default=10**6)
    v.add_argument("--threads", type=int, default=1)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--dump", help="write per-prime CSV here")
    v.add_argument("--checkpoint", help="checkpoint file for resumable runs")

    c = sub.add_parser("catalog", parents=[common], help="list or show catalog entries")
    c.add_argument("id", nargs="?", choices=CATALOG_IDS)

    g = sub.add_parser("goursat", parents=[common], help="Goursat data of a materialised G(m)")
    _add_source(g)
    g.add_argument("--blocks", default="", help="two blocks of component indices, e.g. '0|1,2'")
    g.add_argument("--cap", type=int, default=10**6)
    g.add_argument("--check-normal", action="store_true", help="also test normality in the full product")

    a = sub.add_parser("artin", parents=[common], help="classical Artin constant for base g")
    a.add_argument("--g", type=int, required=True)
    a.add_argument("--L", type=int)
    a.add_argument("--N", type=int, default=10**6, help="cut-off for the Mobius sum")
    return ap


VERBS = {"density": _density, "verify": _verify, "catalog": _catalog, "goursat": _goursat, "artin": _artin}


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        report = VERBS[args.verb](args)
    except (CapExceededError, MemoryError) as exc:
        print(f"error: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (UsageError, CatalogError, SpecError, GroupError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    with mpmath.workdps(20):
        print(render(report, args.format), file=out)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
