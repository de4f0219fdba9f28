"""Metropolis-Hastings over minimal self-supporting partial worlds.

The engine keeps a child graph mirroring the evaluation traces of the
current state.  Scoring a proposal re-evaluates only the variables the patch
changed plus the children of changed or removed variables; every other
factor is unchanged because its active parents are.  Pruning to a minimal
state uses the same graph: a non-core variable survives only while some
active child still reads it.

Queries are boolean terms.  Each query is a virtual node in the graph whose
parents are the variables its evaluation reads, so query reads belong to the
core and query values are refreshed only when one of those reads changes.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from itertools import chain
from typing import Iterable, NamedTuple

from .model import Model, ModelError, Term, _Unsupported
from .parser import ParseErrors, parse_term, strip_line_comment
from .rng import spawn_streams
from .values import MISSING, UNSUPPORTED, FuncAppVar, Identifier, NumberVar
from .worlds import (
    ContractError,
    PartialWorld,
    UngroundedIdentifierError,
    WorldPatch,
    check_identifiers_grounded,
    is_minimal_beyond,
    is_self_supporting,
    log_perm,
    log_prob_abstract,
)

__all__ = [
    "QueryNode",
    "Query",
    "ChildGraph",
    "PatchAnalysis",
    "Scorer",
    "ChainStats",
    "Engine",
    "rebuild_child_graph",
    "verify_child_graph",
    "acceptance_log_ratio",
    "naive_log_ratio",
    "run",
    "parse_evidence_queries",
    "load_evidence_queries",
]

NEG_INF = -math.inf


class QueryNode(NamedTuple):
    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


@dataclass
class Query:
    name: str
    term: Term
    text: str = ""

    def holds(self, view) -> bool:
        """Indicator of the query in a state; null counts as false."""
        reads: list = []
        try:
            return self.term.ev(view, (), reads) is True
        except _Unsupported:
            raise ContractError(f"query {self.name!r} is not evaluable (missing {reads[-1]!r})")


# ------------------------------------------------------------ child graph


class ChildGraph:
    """Active parents, active children and cached log factor of every variable."""

    __slots__ = ("parents", "children", "logf", "qvalue")

    def __init__(self):
        self.parents: dict = {}
        self.children: dict = {}
        self.logf: dict = {}
        self.qvalue: dict = {}

    def set_parents(self, var, reads: tuple):
        old = self.parents.get(var, ())
        if old == reads and var in self.parents:
            return
        children = self.children
        for p in old:
            if p not in reads:
                ch = children[p]
                del ch[var]
                if not ch:
                    del children[p]
        for p in reads:
            if p not in old:
                ch = children.get(p)
                if ch is None:
                    children[p] = {var: None}
                else:
                    ch[var] = None
        self.parents[var] = reads

    def drop(self, var):
        self.set_parents(var, ())
        del self.parents[var]
        self.logf.pop(var, None)

    def children_of(self, var) -> list:
        return list(self.children.get(var, ()))


def _trace(model, view, var):
    reads: list = []
    try:
        dist = model.dependency(view, var, reads)
    except _Unsupported:
        return UNSUPPORTED, tuple(dict.fromkeys(reads))
    return dist, tuple(dict.fromkeys(reads))


def _query_trace(query: Query, view):
    reads: list = []
    try:
        val = query.term.ev(view, (), reads)
    except _Unsupported:
        raise ContractError(f"query {query.name!r} is not evaluable (missing {reads[-1]!r})")
    return tuple(dict.fromkeys(reads)), val is True


def rebuild_child_graph(world, queries: Iterable[Query] = ()) -> ChildGraph:
    g = ChildGraph()
    model = world.model
    items = world.items() if isinstance(world, WorldPatch) else world.values.items()
    for var, val in items:
        dist, reads = _trace(model, world, var)
        if dist is UNSUPPORTED:
            raise ContractError(f"{var!r} is not supported by the state")
        g.set_parents(var, reads)
        g.logf[var] = dist.log_prob(val)
    for q in queries:
        reads, val = _query_trace(q, world)
        node = QueryNode(q.name)
        g.set_parents(node, reads)
        g.qvalue[q.name] = val
    return g


def verify_child_graph(world, graph: ChildGraph, queries: Iterable[Query] = ()) -> bool:
    """Recompute the graph from scratch and compare."""
    fresh = rebuild_child_graph(world, queries)
    if fresh.parents != graph.parents or fresh.logf != graph.logf or fresh.qvalue != graph.qvalue:
        return False
    norm = lambda ch: {k: set(v) for k, v in ch.items() if v}  # noqa: E731
    return norm(fresh.children) == norm(graph.children)


# ---------------------------------------------------------------- scoring


class PatchAnalysis:
    """Result of scoring a patch.

    ``new`` maps re-evaluated variables to ``(reads, log factor)``;
    ``qnew`` does the same for query nodes with the query value;
    ``pruned`` maps dropped variables to their base value (``MISSING`` when
    the patch itself had added them); ``repaired`` lists variables drawn by
    the repair hook.
    """

    __slots__ = ("version", "new", "qnew", "pruned", "repaired", "log_p_delta", "factor_evals")

    def __init__(self, version, new, qnew, pruned, repaired, log_p_delta, factor_evals):
        self.version = version
        self.new = new
        self.qnew = qnew
        self.pruned = pruned
        self.repaired = repaired
        self.log_p_delta = log_p_delta
        self.factor_evals = factor_evals


class Scorer:
    """Incremental scoring and pruning of a patch against a world and its child graph."""

    def __init__(self, world: PartialWorld, graph: ChildGraph, patch: WorldPatch,
                 evidence: Iterable = (), queries: Iterable[Query] = ()):
        self.world = world
        self.graph = graph
        self.patch = patch
        self.model = world.model
        self.evidence = dict.fromkeys(evidence)
        self.queries = {QueryNode(q.name): q for q in queries}
        self._cache: PatchAnalysis | None = None

    def analyze(self, prune: bool = True, repair=None, known=None) -> PatchAnalysis:
        """Score the patch (cached per patch version).

        ``repair(patch, var)`` is called when a re-evaluated variable reads an
        uninstantiated ``var``; it must instantiate it (and whatever that
        needs) and return the variables it set.  Without a hook an
        unsupported read is a contract violation.  ``known`` maps variables
        whose factor the caller already evaluated in the patch to
        ``(reads, log_prob)``; they are counted as evaluations but not redone.
        """
        patch = self.patch
        a = self._cache
        if a is not None and a.version == patch.version:
            return a
        a = self._analyze(prune, repair, known)
        self._cache = a
        return a

    def _analyze(self, prune: bool, repair=None, known=None) -> PatchAnalysis:
        patch, g, model = self.patch, self.graph, self.model
        base_vals = self.world.values
        changed, removed = patch.changed, patch.removed
        children, logf = g.children, g.logf
        dirty = dict.fromkeys(changed)
        for v in chain(changed, removed):
            ch = children.get(v)
            if ch:
                dirty.update(ch)
        work = list(dirty)
        new: dict = {}
        qnew: dict = {}
        repaired: list = []
        evals = 0
        get = patch.get
        k = 0
        while k < len(work):
            v = work[k]
            reads: list = []
            try:
                if v.__class__ is QueryNode:
                    val = self.queries[v].term.ev(patch, (), reads)
                    qnew[v] = (tuple(dict.fromkeys(reads)), val is True)
                else:
                    val = get(v)
                    if known is not None and v in known:
                        evals += 1
                        new[v] = known[v]
                    elif val is not MISSING:
                        dist = model.dependency(patch, v, reads)
                        evals += 1
                        new[v] = (tuple(dict.fromkeys(reads)), dist.log_prob(val))
            except _Unsupported:
                if repair is None:
                    raise ContractError(f"proposal leaves {v!r} unsupported (missing {reads[-1]!r})")
                added = repair(patch, reads[-1])
                repaired.extend(added)
                work.extend(added)
                continue  # retry v
            k += 1

        gone: dict = {}
        if prune:
            self._prune(new, qnew, gone)

        delta = 0.0
        for v, (_, lp) in new.items():
            if v in gone:
                continue
            if v in base_vals:
                delta += lp - logf[v]
            else:
                delta += lp
        for v in removed:
            delta -= logf[v]
        if patch._dref or any(v.__class__ is NumberVar for v in changed) or \
                any(v.__class__ is NumberVar for v in removed):
            delta += self._adjustment_delta()
        return PatchAnalysis(patch.version, new, qnew, gone, repaired, delta, evals)

    def _prune(self, new, qnew, gone):
        patch, g = self.patch, self.graph
        base_vals = self.world.values
        parents, children = g.parents, g.children
        evidence = self.evidence
        cand = deque(v for v in patch.changed if v not in base_vals)
        for table in (new, qnew):
            for v, (reads, _) in table.items():
                for p in parents.get(v, ()):
                    if p not in reads:
                        cand.append(p)
        for v in patch.removed:
            cand.extend(parents.get(v, ()))
        if not cand:
            return
        newch: dict = {}
        for table in (new, qnew):
            for v, (reads, _) in table.items():
                for r in reads:
                    newch.setdefault(r, []).append(v)
        get = patch.get

        def alive(c):
            return c not in gone and (c.__class__ is QueryNode or get(c) is not MISSING)

        while cand:
            x = cand.popleft()
            if x in gone or x in evidence or get(x) is MISSING:
                continue
            keep = False
            for c in children.get(x, ()):
                if c in new or c in qnew:
                    continue
                if alive(c):
                    keep = True
                    break
            if not keep:
                for c in newch.get(x, ()):
                    if alive(c):
                        keep = True
                        break
            if keep:
                continue
            reads = new[x][0] if x in new else parents.get(x, ())
            gone[x] = base_vals.get(x, MISSING)
            patch.remove(x)
            cand.extend(reads)

    def _adjustment_delta(self) -> float:
        patch, world = self.patch, self.world
        types = {v.type_name: None for v in chain(patch.changed, patch.removed) if v.__class__ is NumberVar}
        for i, d in patch._dref.items():
            if d:
                types[i.type_name] = None
        total = 0.0
        for t in types:
            if t not in world.identifier_types:
                continue
            nv = NumberVar(t)
            m_new, m_old = patch.pool_size(t), world.pool_size(t)
            n_new, n_old = patch.get(nv), world.get(nv)
            if m_new == m_old and n_new == n_old:
                continue
            if m_new and n_new is MISSING:
                raise ContractError(f"#{t} must stay instantiated while identifiers of {t} are in use")
            new_adj = log_perm(n_new, m_new) if m_new else 0.0
            old_adj = log_perm(n_old, m_old) if m_old else 0.0
            total += new_adj - old_adj
        for i, d in patch._dref.items():
            if d and patch.refs(i) > 0 and patch.value_refs(i) == 0:
                raise UngroundedIdentifierError([i])
        return total

    def commit(self, a: PatchAnalysis):
        """Apply the patch and bring the graph up to date."""
        g = self.graph
        gone = a.pruned
        for v, (reads, lp) in a.new.items():
            if v in gone:
                continue
            g.set_parents(v, reads)
            g.logf[v] = lp
        for v, (reads, val) in a.qnew.items():
            g.set_parents(v, reads)
            g.qvalue[v.name] = val
        for v in self.patch.removed:
            g.drop(v)
        self.patch.apply()
        self._cache = None


def acceptance_log_ratio(current: PartialWorld, patch: WorldPatch, log_proposal_ratio: float,
                         graph: ChildGraph | None = None, evidence: Iterable = (),
                         queries: Iterable[Query] = (), prune: bool = False) -> tuple[float, int]:
    """Incremental log acceptance ratio; returns ``(ratio, factor evaluations)``."""
    queries = list(queries)
    if graph is None:
        graph = rebuild_child_graph(current, queries)
    a = Scorer(current, graph, patch, evidence, queries).analyze(prune=prune)
    return a.log_p_delta + log_proposal_ratio, a.factor_evals


def naive_log_ratio(current: PartialWorld, patch: WorldPatch, log_proposal_ratio: float) -> float:
    """The same ratio by full recomputation of both states."""
    new = log_prob_abstract(patch)
    if new == NEG_INF:
        return NEG_INF
    return new - log_prob_abstract(current) + log_proposal_ratio


# ------------------------------------------------------------------ chain


@dataclass
class ChainStats:
    query_names: list
    sums: list = field(default_factory=list)
    n: int = 0
    proposals: int = 0
    accepted: int = 0
    factor_evals_total: int = 0
    #: step class -> [steps, factor evaluations]
    by_class: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    init_ms: float = 0.0

    def __post_init__(self):
        if not self.sums:
            self.sums = [0] * len(self.query_names)

    @property
    def estimates(self) -> dict:
        return {q: (s / self.n if self.n else float("nan")) for q, s in zip(self.query_names, self.sums)}

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0

    def mean_factor_evals(self, step_class: str) -> float:
        steps, evals = self.by_class.get(step_class, (0, 0))
        return evals / steps if steps else float("nan")

    def to_dict(self) -> dict:
        return {
            "estimates": self.estimates,
            "n": self.n,
            "acceptance_rate": self.acceptance_rate,
            "proposals": self.proposals,
            "accepted": self.accepted,
            "factor_evals_total": self.factor_evals_total,
            "factor_evals_by_class": {k: {"steps": s, "factor_evals": e}
                                      for k, (s, e) in sorted(self.by_class.items())},
            "wall_ms": self.wall_ms,
            "init_ms": self.init_ms,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


class Engine:
    """One Metropolis-Hastings chain.

    ``proposer`` follows the contract of :class:`blogmh.proposers.Proposer`.
    With ``assert_mode`` every visited state is checked for evidence,
    self-support, query evaluability, minimality, grounding and child-graph
    consistency (linear in the state size per step).
    """

    def __init__(self, model: Model, evidence: dict, queries: Iterable[Query], proposer,
                 seed: int = 0, assert_mode: bool = False, world: PartialWorld | None = None):
        t0 = time.perf_counter()
        self.model = model
        self.evidence = dict(evidence)
        self.queries = list(queries)
        self.query_by_name = {q.name: q for q in self.queries}
        self.proposer = proposer
        self.assert_mode = assert_mode
        streams = spawn_streams(seed)
        self.rng_init, self.rng_prop, self.rng_acc = streams["init"], streams["proposer"], streams["accept"]
        proposer.bind(self)
        if world is None:
            world = proposer.initial_state(model, self.evidence, self.queries, self.rng_init)
        self.world = world
        self.check_state(world, full=True)
        self.graph = rebuild_child_graph(world, self.queries)
        self.patch = world.patch()
        self.scorer = Scorer(world, self.graph, self.patch, self.evidence, self.queries)
        self.stats = ChainStats([q.name for q in self.queries])
        self.stats.init_ms = (time.perf_counter() - t0) * 1e3
        self.initial_log_prob = log_prob_abstract(world)

    # proposer hooks
    def prune(self) -> dict:
        """Prune the current patch to a minimal state; returns ``{var: base value}`` of removed vars."""
        return self.scorer.analyze().pruned

    def analysis(self, repair=None, known=None) -> PatchAnalysis:
        """Score and prune the current patch; see :meth:`Scorer.analyze`."""
        return self.scorer.analyze(repair=repair, known=known)

    def log_prob(self) -> float:
        return log_prob_abstract(self.world)

    def check_state(self, state, full: bool = True):
        for var, val in self.evidence.items():
            got = state.get(var)
            if not (got is val or (type(got) is type(val) and got == val)):
                raise ContractError(f"state violates evidence {var!r} = {val!r} (has {got!r})")
        if not is_self_supporting(state):
            raise ContractError("state is not self-supporting")
        for q in self.queries:
            q.holds(state)
        if full:
            if not is_minimal_beyond(state, self.evidence, [q.term for q in self.queries]):
                raise ContractError("state is not minimal beyond evidence and queries")
            ok, bad = check_identifiers_grounded(state)
            if not ok:
                raise UngroundedIdentifierError(bad)
            if log_prob_abstract(state) == NEG_INF:
                raise ContractError("state has probability zero")

    def step(self) -> bool:
        patch = self.patch
        stats = self.stats
        log_q = self.proposer.propose(patch, self.rng_prop)
        u = self.rng_acc.random()
        step_class = self.proposer.last_class
        evals = 0
        if log_q == NEG_INF:
            accept = False
            a = self.scorer._cache
            if a is not None and a.version == patch.version:
                evals = a.factor_evals
        elif not patch.changed and not patch.removed:
            accept = True
            a = None
        else:
            a = self.scorer.analyze()
            evals = a.factor_evals
            ratio = a.log_p_delta + log_q
            if ratio != ratio:
                raise ContractError("acceptance ratio is NaN")
            accept = ratio >= 0.0 or (ratio > NEG_INF and u > 0.0 and math.log(u) < ratio)
        stats.proposals += 1
        stats.factor_evals_total += evals
        bc = stats.by_class.get(step_class)
        if bc is None:
            stats.by_class[step_class] = [1, evals]
        else:
            bc[0] += 1
            bc[1] += evals
        if accept and a is None:
            stats.accepted += 1
            patch.discard()
        elif accept:
            self.scorer.commit(a)
            stats.accepted += 1
            if self.assert_mode:
                self.check_state(self.world, full=True)
                if not verify_child_graph(self.world, self.graph, self.queries):
                    raise ContractError("child graph out of sync after accepted step")
        else:
            patch.discard()
            self.scorer._cache = None
        return accept

    def _record(self):
        qv = self.graph.qvalue
        sums = self.stats.sums
        for k, q in enumerate(self.stats.query_names):
            if qv[q]:
                sums[k] += 1
        self.stats.n += 1

    def run(self, n_samples: int, burn_in: int = 0, callback=None) -> ChainStats:
        if n_samples <= 0:
            raise ValueError("n_samples must be positive")
        t0 = time.perf_counter()
        step = self.step
        for _ in range(burn_in):
            step()
        record = self._record if self.queries else None
        for k in range(n_samples):
            step()
            if record is not None:
                record()
            else:
                self.stats.n += 1
            if callback is not None:
                callback(self, k)
        self.stats.wall_ms += (time.perf_counter() - t0) * 1e3
        return self.stats


def run(model: Model, evidence: dict, queries: Iterable[Query], proposer, n_samples: int,
        burn_in: int = 0, seed: int = 0, assert_mode: bool = False) -> ChainStats:
    eng = Engine(model, evidence, queries, proposer, seed=seed, assert_mode=assert_mode)
    return eng.run(n_samples, burn_in)


# ------------------------------------------------- evidence and query files


def _split_assignment(line: str):
    depth = 0
    in_str = False
    for k, ch in enumerate(line):
        if ch == '"' and (k == 0 or line[k - 1] != "\\"):
            in_str = not in_str
        if in_str:
            continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "=" and depth == 0:
            prev = line[k - 1] if k else ""
            nxt = line[k + 1] if k + 1 < len(line) else ""
            if prev not in "=!<>" and nxt != "=":
                return line[:k].strip(), line[k + 1:].strip()
    return None


def _ground_var(term):
    from .model import FuncApp, Literal, ObjectConst

    if not isinstance(term, FuncApp):
        return None
    args = []
    for a in term.args:
        if isinstance(a, ObjectConst):
            args.append(a.obj)
        elif isinstance(a, Literal):
            args.append(a.value)
        else:
            return None
    return FuncAppVar(term.func, tuple(args))


def parse_evidence_queries(model: Model, text: str, source: str = "<input>"):
    """Parse ``Var = value`` evidence lines and ``query name : term`` lines.

    Returns ``(evidence dict, list of Query)``; errors carry line numbers.
    """
    from .model import Literal, ObjectConst

    evidence: dict = {}
    queries: list = []
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = strip_line_comment(raw).strip()
        if not line:
            continue
        try:
            if line.startswith("query ") or line.startswith("query\t"):
                body = line[6:].strip()
                name, sep, term_text = body.partition(":")
                if not sep or not name.strip().isidentifier():
                    name, term_text = f"q{len(queries) + 1}", body
                name = name.strip()
                if any(q.name == name for q in queries):
                    raise ValueError(f"duplicate query name {name!r}")
                term, _ = parse_term(model, term_text.strip())
                queries.append(Query(name, term, term_text.strip()))
                continue
            parts = _split_assignment(line)
            if parts is None:
                raise ValueError("expected 'Var = value' or 'query name : term'")
            lhs, rhs = parts
            if lhs.startswith("#"):
                var = NumberVar(lhs[1:].strip())
                if var.type_name not in model.number_statements:
                    raise ValueError(f"no number statement for {lhs!r}")
            else:
                term, _ = parse_term(model, lhs)
                var = _ground_var(term)
                if var is None:
                    raise ValueError(f"{lhs!r} is not a ground function application")
            vterm, _ = parse_term(model, rhs)
            if isinstance(vterm, Literal):
                value = vterm.value
            elif isinstance(vterm, ObjectConst):
                value = vterm.obj
            else:
                raise ValueError(f"evidence value {rhs!r} must be a constant")
            model.check_var(var)
            model.check_value(var, value)
            if var in evidence:
                raise ValueError(f"duplicate evidence for {lhs}")
            evidence[var] = value
        except (ParseErrors, ValueError, ModelError) as e:
            msg = str(e).replace("\n", "; ")
            errors.append(f"{source}:{lineno}: {msg}")
    if errors:
        raise ValueError("\n".join(errors))
    return evidence, queries


def load_evidence_queries(model: Model, path) -> tuple[dict, list]:
    with open(path, encoding="utf-8") as fh:
        return parse_evidence_queries(model, fh.read(), str(path))
