"""Command-line interface: ``blogmh infer | citebench | oracle | selftest``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .citebench import (DatasetError, citation_model, generate_synthetic, load_dataset, make_proposer,
                        run_citebench, write_dataset)
from .engine import Engine, Query, parse_evidence_queries
from .model import ModelError
from .oracle import OracleError, exact_posteriors, load_bounds
from .parser import ParseErrors, parse_model, parse_term
from .worlds import ContractError

__all__ = ["main", "UsageError"]

REPORT_VERSION = 1


class UsageError(Exception):
    """Bad command-line input: missing files, malformed models or evidence."""


def _read(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p.read_text(encoding="utf-8")


def _load_model(path: str):
    try:
        return parse_model(_read(path, "model"))
    except ParseErrors as e:
        raise UsageError(f"{path}: {e}") from None


def _load_inputs(model, args):
    evidence, queries = {}, []
    texts = []
    if args.evidence:
        texts.append((args.evidence, _read(args.evidence, "evidence")))
    if getattr(args, "queries", None):
        texts.append((args.queries, _read(args.queries, "queries")))
    try:
        for src, text in texts:
            ev, qs = parse_evidence_queries(model, text, src)
            for var in ev:
                if var in evidence:
                    raise UsageError(f"{src}: duplicate evidence for {var!r}")
            evidence.update(ev)
            queries.extend(qs)
        for k, qtext in enumerate(args.query or (), 1):
            term, _ = parse_term(model, qtext)
            queries.append(Query(f"q{len(queries) + 1}" if len(args.query) > 1 or queries else "q", term, qtext))
    except (ValueError, ParseErrors, ModelError) as e:
        if isinstance(e, UsageError):
            raise
        raise UsageError(str(e)) from None
    names = [q.name for q in queries]
    if len(set(names)) != len(names):
        raise UsageError("duplicate query names")
    return evidence, queries


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _cmd_infer(args) -> int:
    model = _load_model(args.model)
    evidence, queries = _load_inputs(model, args)
    chains = []
    pooled: dict = {}
    for k in range(args.chains):
        proposer = make_proposer(args.proposer, args.theta, args.rho)
        eng = Engine(model, evidence, queries, proposer, seed=args.seed + k, assert_mode=args.assert_mode)
        stats = eng.run(args.samples, burn_in=args.burnin)
        d = stats.to_dict()
        d["seed"] = args.seed + k
        chains.append(d)
        for name, v in stats.estimates.items():
            pooled[name] = pooled.get(name, 0.0) + v / args.chains
    report = {
        "report_version": REPORT_VERSION,
        "config": {"model": args.model, "evidence": args.evidence, "proposer": args.proposer,
                   "samples": args.samples, "burnin": args.burnin, "seed": args.seed,
                   "chains": args.chains, "theta": args.theta, "rho": args.rho,
                   "assert": args.assert_mode},
        "estimates": pooled,
        "chains": chains,
    }
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


def _cmd_citebench(args) -> int:
    if (args.dataset is None) == (args.synthetic is None):
        raise UsageError("give exactly one of --dataset PATH or --synthetic N")
    if args.dataset is not None:
        if not Path(args.dataset).is_file():
            raise UsageError(f"dataset file not found: {args.dataset}")
        try:
            dataset = load_dataset(args.dataset)
        except DatasetError as e:
            raise UsageError(str(e)) from None
    else:
        if args.synthetic < 1:
            raise UsageError("--synthetic needs a positive citation count")
        source = _read(args.model, "model") if args.model else None
        try:
            model = citation_model(args.synthetic, eps=args.eps, source=source)
        except ParseErrors as e:
            raise UsageError(f"{args.model}: {e}") from None
        dataset = generate_synthetic(model, args.synthetic, seed=args.seed)
        if args.write_dataset:
            write_dataset(dataset, args.write_dataset)
    t0 = time.perf_counter()
    report = run_citebench(dataset, samples=args.samples, burnin=args.burnin, seed=args.seed,
                           chains=args.chains, proposer=args.proposer, theta=args.theta, rho=args.rho,
                           eps=args.eps, assert_mode=args.assert_mode)
    report.config["dataset"] = args.dataset
    report.config["synthetic"] = args.synthetic
    report.config["total_ms"] = (time.perf_counter() - t0) * 1e3
    _emit(report.to_json(), args.out)
    return 0


def _cmd_oracle(args) -> int:
    model = _load_model(args.model)
    if not Path(args.bounds).is_file():
        raise UsageError(f"bounds file not found: {args.bounds}")
    try:
        bounds = load_bounds(args.bounds)
    except OracleError as e:
        raise UsageError(f"{args.bounds}: {e}") from None
    evidence, queries = _load_inputs(model, args)
    if not queries:
        raise UsageError("no query given (use --query TERM or query lines in the evidence file)")
    post = exact_posteriors(model, bounds, evidence, {q.name: q.term for q in queries})
    if len(post) == 1 and not args.json:
        _emit(repr(next(iter(post.values()))), args.out)
    else:
        _emit(json.dumps(post, indent=2, sort_keys=True), args.out)
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_all

    failures = run_all(verbose=not args.quiet)
    return 1 if failures else 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blogmh", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common_run(sp, proposer_default):
        sp.add_argument("--proposer", choices=("generic", "splitmerge"), default=proposer_default)
        sp.add_argument("--samples", type=int, default=10_000)
        sp.add_argument("--burnin", type=int, default=0)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--chains", type=int, default=1)
        sp.add_argument("--theta", type=float, default=0.25, help="canopy Jaccard threshold")
        sp.add_argument("--rho", type=float, default=0.1, help="prior-draw probability for attributes")
        sp.add_argument("--assert", dest="assert_mode", action="store_true",
                        help="check state contracts after every accepted step")
        sp.add_argument("--out", help="write the JSON report here instead of stdout")

    sp = sub.add_parser("infer", help="estimate query probabilities with Metropolis-Hastings")
    sp.add_argument("--model", required=True)
    sp.add_argument("--evidence", help="file of 'Var = value' and 'query name : term' lines")
    sp.add_argument("--queries", help="extra file of query lines")
    sp.add_argument("--query", action="append", help="query term (repeatable)")
    common_run(sp, "generic")
    sp.set_defaults(func=_cmd_infer)

    sp = sub.add_parser("citebench", help="run the citation-matching benchmark")
    sp.add_argument("--dataset", help="TSV of id, gold label, text")
    sp.add_argument("--synthetic", type=int, help="generate N synthetic citations")
    sp.add_argument("--model", help="citation model source used for synthetic generation")
    sp.add_argument("--eps", type=float, default=0.05, help="corruption probability of the text models")
    sp.add_argument("--write-dataset", help="save the synthetic dataset as TSV")
    common_run(sp, "splitmerge")
    sp.set_defaults(func=_cmd_citebench)

    sp = sub.add_parser("oracle", help="exact posterior by enumeration on a bounded model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--bounds", required=True)
    sp.add_argument("--evidence")
    sp.add_argument("--query", action="append")
    sp.add_argument("--json", action="store_true", help="always print a JSON object")
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_oracle)

    sp = sub.add_parser("selftest", help="run the built-in invariant suites")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    """Run the CLI; returns 0 on success, 2 on usage errors, 1 on contract violations."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    for name in ("samples", "chains"):
        if getattr(args, name, 1) < 1:
            print(f"error: --{name} must be positive", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ContractError, OracleError, ModelError) as e:
        print(f"contract violation: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
