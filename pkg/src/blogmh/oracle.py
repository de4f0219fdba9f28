"""Brute-force exact inference and state enumeration for small bounded models.

Everything here works with concrete (numbered) objects.  Enumeration is a
depth-first search that instantiates a variable only when something already
required reads it, so the instantiations it produces are exactly the
self-supporting ones that are minimal beyond the targets.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .model import DictView, Model, Term, _Unsupported
from .parser import strip_line_comment
from .values import MISSING, NULL, FuncAppVar, NonGuaranteedObject, NumberVar
from .worlds import PartialWorld

__all__ = [
    "WorldBounds",
    "OracleError",
    "OracleCapError",
    "parse_bounds",
    "load_bounds",
    "enumerate_worlds",
    "exact_posterior",
    "exact_posteriors",
    "enumerate_minimal_states",
    "object_universe",
]

NEG_INF = -math.inf
DEFAULT_CAP = 10**7


class OracleError(Exception):
    """The model cannot be enumerated under the given bounds, or the evidence has no mass."""


class OracleCapError(OracleError):
    """Enumeration would exceed the configured number of instantiations."""


@dataclass
class WorldBounds:
    """Per-type maxima for number variables and finite value domains per function."""

    number_max: dict = field(default_factory=dict)
    domains: dict = field(default_factory=dict)
    cap: int = DEFAULT_CAP


_BOUND = re.compile(r"bound\s+#\s*([A-Za-z_]\w*)\s*<=\s*(\d+)\s*;?$")
_DOMAIN = re.compile(r"domain\s+([A-Za-z_]\w*)\s+in\s+\{(.*)\}\s*;?$")
_VALUE = re.compile(r'\s*("(?:[^"\\]|\\.)*"|-?\d+(?:\.\d+)?|true|false|null)\s*(,|$)')


def _parse_values(body: str, lineno: int) -> tuple:
    out = []
    pos = 0
    body = body.strip()
    while pos < len(body):
        m = _VALUE.match(body, pos)
        if m is None:
            raise OracleError(f"line {lineno}: cannot read a value at {body[pos:]!r}")
        tok = m.group(1)
        if tok.startswith('"'):
            out.append(bytes(tok[1:-1], "utf-8").decode("unicode_escape"))
        elif tok in ("true", "false"):
            out.append(tok == "true")
        elif tok == "null":
            out.append(NULL)
        elif "." in tok:
            out.append(float(tok))
        else:
            out.append(int(tok))
        pos = m.end()
    return tuple(out)


def parse_bounds(text: str, cap: int = DEFAULT_CAP) -> WorldBounds:
    """Read ``bound #T <= n`` and ``domain F in {v, ...}`` lines (``//`` comments allowed)."""
    b = WorldBounds(cap=cap)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = strip_line_comment(raw).strip()
        if not line:
            continue
        m = _BOUND.match(line)
        if m:
            b.number_max[m.group(1)] = int(m.group(2))
            continue
        m = _DOMAIN.match(line)
        if m:
            b.domains[m.group(1)] = _parse_values(m.group(2), lineno)
            continue
        raise OracleError(f"line {lineno}: expected 'bound #T <= n' or 'domain F in {{...}}'")
    return b


def load_bounds(path, cap: int = DEFAULT_CAP) -> WorldBounds:
    with open(path, encoding="utf-8") as f:
        return parse_bounds(f.read(), cap)


# ------------------------------------------------------------------ search


def _objects(model: Model, values: dict, type_name: str) -> list | None:
    """Objects of ``type_name`` that exist given the number variables in ``values``."""
    objs = list(model.guaranteed.get(type_name, ()))
    if type_name in model.number_statements:
        n = values.get(NumberVar(type_name), MISSING)
        if n is MISSING:
            return None
        objs.extend(NonGuaranteedObject(type_name, k) for k in range(1, n + 1))
    return objs


def _full_targets(model: Model, values: dict) -> list:
    """Number variables, then every variable whose arguments are all existing user-typed objects."""
    out: list = [NumberVar(t) for t in model.number_statements]
    if any(v not in values for v in out):
        return out
    for name, fs in model.functions.items():
        pools = []
        for t in fs.arg_types:
            if model.types[t].builtin:
                break
            pools.append(_objects(model, values, t))
        else:
            combos = [()]
            for pool in pools:
                combos = [c + (o,) for c in combos for o in pool]
            out.extend(FuncAppVar(name, c) for c in combos)
    return out


def _choices(model: Model, bounds: WorldBounds, var, dist, evidence: dict):
    """``[(value, log mass)]`` to branch on for ``var``."""
    if var in evidence:
        val = evidence[var]
        lp = dist.log_prob(val)
        return [(val, lp)] if lp > NEG_INF else []
    if var.__class__ is NumberVar:
        hi = bounds.number_max.get(var.type_name)
        if hi is not None:
            cands = range(hi + 1)
        else:
            cands = dist.support()
            if cands is None:
                raise OracleError(f"#{var.type_name} needs a bound")
    else:
        cands = bounds.domains.get(var.func)
        if cands is None or _object_valued(model, var):
            cands = dist.support()
            if cands is None:
                raise OracleError(f"{var.func} needs a finite domain")
    out = []
    for v in cands:
        lp = dist.log_prob(v)
        if lp > NEG_INF:
            out.append((v, lp))
    return out


def _object_valued(model: Model, var) -> bool:
    rt = model.functions[var.func].return_type
    return not model.types[rt].builtin


def _next_var(model: Model, view: DictView, targets: Iterable):
    """The next variable to branch on with its distribution, or None when all targets are supported."""
    for t in targets:
        if isinstance(t, Term):
            reads: list = []
            try:
                t.ev(view, (), reads)
                continue
            except _Unsupported:
                var = reads[-1]
        else:
            if t in view.values:
                continue
            var = t
        while True:
            reads = []
            try:
                return var, model.dependency(view, var, reads)
            except _Unsupported:
                var = reads[-1]
    return None


def _search(model: Model, bounds: WorldBounds, targets, evidence: dict) -> Iterator[tuple[dict, float]]:
    """Yield ``(values, log probability)`` for each minimal self-supporting instantiation.

    ``targets`` is a list of variables and terms, or None for full worlds.
    Evidence variables only take their observed values.
    """
    values: dict = {}
    view = DictView(values)
    full = targets is None
    count = 0

    def rec(logp):
        nonlocal count
        tg = _full_targets(model, values) if full else targets
        nxt = _next_var(model, view, tg)
        if nxt is None:
            count += 1
            if count > bounds.cap:
                raise OracleCapError(f"more than {bounds.cap} instantiations")
            yield dict(values), logp
            return
        var, dist = nxt
        for val, lp in _choices(model, bounds, var, dist, evidence):
            values[var] = val
            yield from rec(logp + lp)
            del values[var]

    yield from rec(0.0)


def _check_evidence(model: Model, evidence: dict):
    for var in evidence:
        model.check_var(var)


def enumerate_worlds(model: Model, bounds: WorldBounds, evidence: dict | None = None,
                     targets=None) -> Iterator[tuple[dict, float]]:
    """Yield ``(values, probability)`` for every world inside ``bounds``.

    Without ``targets`` the worlds are complete over number variables and all
    variables whose arguments are existing objects (plus whatever those read).
    With ``evidence`` only worlds agreeing with it are produced, weighted by
    their joint probability.  The probabilities sum to the prior mass inside
    the bounds (times the evidence likelihood, if given).
    """
    evidence = dict(evidence or {})
    _check_evidence(model, evidence)
    for values, lp in _search(model, bounds, targets, evidence):
        yield values, math.exp(lp)


def _query_targets(evidence: dict, terms) -> list:
    return list(evidence) + list(terms)


def exact_posteriors(model: Model, bounds: WorldBounds, evidence: dict, queries: dict) -> dict:
    """``{name: p(query true | evidence)}`` for ``queries`` mapping names to boolean terms."""
    evidence = dict(evidence)
    _check_evidence(model, evidence)
    names = list(queries)
    terms = [queries[n] for n in names]
    z = 0.0
    hits = [0.0] * len(names)
    for values, lp in _search(model, bounds, _query_targets(evidence, terms), evidence):
        p = math.exp(lp)
        z += p
        view = DictView(values)
        for k, t in enumerate(terms):
            if t.ev(view, (), []) is True:
                hits[k] += p
    if z <= 0.0:
        raise OracleError("the evidence has zero probability within the bounds")
    return {n: h / z for n, h in zip(names, hits)}


def exact_posterior(model: Model, bounds: WorldBounds, evidence: dict, query: Term) -> float:
    """p(query | evidence) by enumeration."""
    return exact_posteriors(model, bounds, evidence, {"q": query})["q"]


def enumerate_minimal_states(model: Model, bounds: WorldBounds, core: Iterable,
                             evidence: dict | None = None) -> list[PartialWorld]:
    """Every self-supporting instantiation minimal beyond ``core`` (variables or terms).

    With ``evidence`` only states agreeing with it are returned.
    """
    evidence = dict(evidence or {})
    targets = list(core)
    return [PartialWorld(model, values, identifier_types=())
            for values, _ in _search(model, bounds, targets, evidence)]


def object_universe(model: Model, bounds: WorldBounds, type_name: str) -> list:
    """All objects of ``type_name`` that exist in some bounded world."""
    objs: list = list(model.guaranteed.get(type_name, ()))
    hi = bounds.number_max.get(type_name, 0) if type_name in model.number_statements else 0
    objs.extend(NonGuaranteedObject(type_name, k) for k in range(1, hi + 1))
    return objs

