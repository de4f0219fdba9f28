"""Quick invariant suites, runnable as ``blogmh selftest``.

Each suite is a small randomized check of one contract; the full
versions with larger counts live in the test suite.
"""

from __future__ import annotations

import math
from importlib import resources

from .engine import Engine, Query, naive_log_ratio, parse_evidence_queries, verify_child_graph
from .oracle import exact_posterior, load_bounds
from .parser import parse_model, parse_term
from .rng import Stream
from .values import MISSING, FuncAppVar, Identifier, NonGuaranteedObject, NumberVar
from .worlds import PartialWorld, enumerate_concrete_versions, log_prob_abstract, log_prob_concrete

__all__ = ["RatioAudit", "SUITES", "run_all", "tiny_model", "three_version_world"]

THREE_VERSION_SOURCE = """
type Pub;
type Cit;
guaranteed Cit Cit1;
#Pub ~ Categorical({1: 0.2, 2: 0.3, 3: 0.5});
random String Tit(Pub p) ~ Categorical({"foo": 0.6, "bar": 0.4});
random Pub PubCited(Cit c) ~ UniformOverObjects(Pub);
"""


def tiny_model():
    text = resources.files("blogmh").joinpath("data/tiny.blog").read_text(encoding="utf-8")
    return parse_model(text)


def tiny_bounds():
    with resources.as_file(resources.files("blogmh").joinpath("data/tiny.bounds")) as p:
        return load_bounds(p)


def three_version_world():
    """``#Pub = 3, PubCited(Cit1) = x, Tit(x) = "foo"`` with ``x`` an identifier."""
    model = parse_model(THREE_VERSION_SOURCE)
    x = Identifier("Pub", "A3F")
    cit = model.guaranteed["Cit"][0]
    values = {NumberVar("Pub"): 3, FuncAppVar("PubCited", (cit,)): x, FuncAppVar("Tit", (x,)): "foo"}
    return PartialWorld(model, values)


class RatioAudit:
    """Wraps a proposer and records, for every finite proposal, the gap between
    the incremental log acceptance ratio and a full recomputation.
    """

    def __init__(self, inner):
        self.inner = inner
        self.engine = None
        self.max_gap = 0.0
        self.checked = 0

    @property
    def name(self):
        return self.inner.name

    @property
    def last_class(self):
        return self.inner.last_class

    def bind(self, engine):
        self.engine = engine
        self.inner.bind(engine)

    def initial_state(self, model, evidence, queries, rng):
        return self.inner.initial_state(model, evidence, queries, rng)

    def propose(self, patch, rng):
        log_q = self.inner.propose(patch, rng)
        if log_q == -math.inf or patch.is_empty():
            return log_q
        a = self.engine.analysis()  # prunes the patch; the engine reuses this cached analysis
        inc = a.log_p_delta + log_q
        naive = naive_log_ratio(patch.base, patch, log_q)
        if inc == naive:
            gap = 0.0
        elif math.isinf(inc) or math.isinf(naive):
            gap = math.inf
        else:
            gap = abs(inc - naive)
        self.max_gap = max(self.max_gap, gap)
        self.checked += 1
        return log_q


def suite_patch(n_ops: int = 2000, seed: int = 0) -> str | None:
    """Random set/remove sequences read through a patch agree with an eager copy."""
    model = tiny_model()
    rng = Stream(seed)
    pubs = [NonGuaranteedObject("Pub", k) for k in range(1, 6)]
    pool = [FuncAppVar("Hot", (p,)) for p in pubs] + [NumberVar("Pub")]
    world = PartialWorld(model, {}, identifier_types=())
    shadow: dict = {}
    patch = world.patch()
    eager = dict(shadow)
    for k in range(n_ops):
        var = pool[int(rng.integers(len(pool)))]
        r = rng.random()
        if r < 0.45:
            val = int(rng.integers(4)) if var.__class__ is NumberVar else bool(rng.random() < 0.5)
            patch.set(var, val)
            eager[var] = val
        elif r < 0.8:
            patch.remove(var)
            eager.pop(var, None)
        elif r < 0.9:
            patch.apply()
            shadow = dict(eager)
        else:
            patch.discard()
            eager = dict(shadow)
        for v in pool:
            got = patch.get(v)
            want = eager.get(v, MISSING)
            if got is not want and got != want:
                return f"op {k}: {v!r} reads {got!r}, eager copy has {want!r}"
        if world.values != shadow:
            return f"op {k}: base world diverged from the committed copy"
    return None


def suite_oracle() -> str | None:
    """The tiny model's exact posterior is 21/22."""
    model = tiny_model()
    evidence, queries = parse_evidence_queries(
        model, "Obs(C1) = true\nquery hot : Hot(PubCited(C1))\n", "<selftest>")
    p = exact_posterior(model, tiny_bounds(), evidence, queries[0].term)
    if abs(p - 21 / 22) > 1e-12:
        return f"oracle gives {p!r}, expected 21/22"
    return None


def suite_three_versions() -> str | None:
    """An abstract state's mass equals the sum over its disjoint concrete versions."""
    w = three_version_world()
    versions = enumerate_concrete_versions(w)
    if len(versions) != 3:
        return f"expected 3 concrete versions, found {len(versions)}"
    total = sum(math.exp(log_prob_concrete(c)) for _, c in versions)
    got = math.exp(log_prob_abstract(w))
    if abs(total - got) > 1e-12:
        return f"abstract mass {got!r} differs from concrete sum {total!r}"
    return None


def suite_incremental(n_steps: int = 2000, seed: int = 0) -> str | None:
    """Incremental acceptance ratios match full recomputation; the child graph stays in sync."""
    from .proposers import GenericResample

    model = tiny_model()
    term, _ = parse_term(model, "Hot(PubCited(C1))")
    cit = model.guaranteed["Cit"][0]
    evidence = {FuncAppVar("Obs", (cit,)): True}
    audit = RatioAudit(GenericResample())
    eng = Engine(model, evidence, [Query("hot", term)], audit, seed=seed, assert_mode=True)
    eng.run(n_steps)
    if audit.max_gap > 1e-9:
        return f"max ratio gap {audit.max_gap!r}"
    if not verify_child_graph(eng.world, eng.graph, eng.queries):
        return "child graph out of sync"
    return None


SUITES = {
    "patch": suite_patch,
    "oracle": suite_oracle,
    "three-versions": suite_three_versions,
    "incremental": suite_incremental,
}


def run_all(verbose: bool = True) -> list[str]:
    """Run every suite; returns the names of those that failed."""
    failed = []
    for name, fn in SUITES.items():
        try:
            err = fn()
        except Exception as e:  # a crash is a failure of that suite
            err = f"{type(e).__name__}: {e}"
        if err:
            failed.append(name)
        if verbose:
            print(f"{'PASS' if not err else 'FAIL'} {name}" + (f": {err}" if err else ""))
    return failed
