import json
import math

import pytest

from blogmh.engine import (ChainStats, Engine, acceptance_log_ratio, naive_log_ratio, parse_evidence_queries,
                           rebuild_child_graph, verify_child_graph)
from blogmh.proposers import GenericResample, SplitMerge
from blogmh.selftest import RatioAudit
from blogmh.values import FuncAppVar, NumberVar
from blogmh.worlds import ContractError, log_prob_abstract

from conftest import load_case


def test_evidence_file_parsing(tiny):
    model = tiny[0]
    text = ('// observations\nObs(C1) = true  // trailing comment\n'
            'query a : Hot(PubCited(C1))\nquery !Obs(C1)\n')
    ev, qs = parse_evidence_queries(model, text)
    cit = model.guaranteed["Cit"][0]
    assert ev == {FuncAppVar("Obs", (cit,)): True}
    assert [q.name for q in qs] == ["a", "q2"]


@pytest.mark.parametrize("text,fragment", [
    ("Obs(C1) = 3", "<input>:1"),
    ("Obs(C1) = true\nObs(C1) = false", "duplicate evidence"),
    ("Obs(C2) = true", "C2"),
    ("#Cit = 2", "no number statement"),
    ("Hot(PubCited(C1)) = true", "not a ground function application"),
    ("Obs(C1) = Obs(C1)", "must be a constant"),
    ("query a : Obs(C1)\nquery a : Obs(C1)", "duplicate query name"),
    ("just words", "expected 'Var = value'"),
])
def test_evidence_errors_carry_line_numbers(tiny, text, fragment):
    with pytest.raises(ValueError, match=fragment):
        parse_evidence_queries(tiny[0], text)


def test_chain_is_reproducible(tiny):
    model, _, evidence, queries = tiny
    runs = [Engine(model, evidence, queries, GenericResample(), seed=4).run(3000).estimates for _ in range(2)]
    assert runs[0] == runs[1]
    other = Engine(model, evidence, queries, GenericResample(), seed=5).run(3000).estimates
    assert other != runs[0]


@pytest.mark.parametrize("name", ["twocite_a", "twocite_b", "twocite_c"])
def test_incremental_ratio_matches_full_recomputation(name):
    model, _, evidence, queries = load_case(name)
    audit = RatioAudit(GenericResample())
    eng = Engine(model, evidence, queries, audit, seed=2, assert_mode=True)
    eng.run(1500)
    assert audit.checked > 300
    assert audit.max_gap <= 1e-9
    assert verify_child_graph(eng.world, eng.graph, eng.queries)


def test_split_merge_ratio_matches_full_recomputation():
    model, _, evidence, queries = load_case("smallcite")
    audit = RatioAudit(SplitMerge(theta=0.0))
    eng = Engine(model, evidence, queries, audit, seed=3, assert_mode=True)
    eng.run(1500)
    assert audit.checked > 300
    assert audit.max_gap <= 1e-9


def test_acceptance_helpers_agree(tiny):
    model, _, evidence, queries = tiny
    eng = Engine(model, evidence, queries, GenericResample(), seed=1)
    world = eng.world
    patch = world.patch()
    patch.set(NumberVar("Pub"), 2 if world.get(NumberVar("Pub")) == 1 else 1)
    inc, evals = acceptance_log_ratio(world, patch, 0.0, evidence=evidence, queries=queries)
    assert evals >= 1
    naive = naive_log_ratio(world, patch, 0.0)
    assert inc == pytest.approx(naive, abs=1e-12) or inc == naive == -math.inf


def test_child_graph_detects_staleness(tiny):
    model, _, evidence, queries = tiny
    eng = Engine(model, evidence, queries, GenericResample(), seed=1)
    g = rebuild_child_graph(eng.world, queries)
    assert verify_child_graph(eng.world, g, queries)
    var = next(iter(g.logf))
    g.logf[var] += 1.0
    assert not verify_child_graph(eng.world, g, queries)


def test_log_prob_never_nan_and_stats_export(tiny):
    model, _, evidence, queries = tiny
    eng = Engine(model, evidence, queries, GenericResample(), seed=9)
    stats = eng.run(2000, burn_in=100)
    assert stats.n == 2000 and stats.proposals == 2100
    assert math.isfinite(log_prob_abstract(eng.world))
    d = json.loads(stats.to_json())
    assert set(d) == {"estimates", "n", "acceptance_rate", "proposals", "accepted", "factor_evals_total",
                      "factor_evals_by_class", "wall_ms", "init_ms"}
    assert sum(c["steps"] for c in d["factor_evals_by_class"].values()) == 2100
    assert sum(c["factor_evals"] for c in d["factor_evals_by_class"].values()) == d["factor_evals_total"]


def test_contract_violations_are_reported(tiny):
    model, _, evidence, queries = tiny
    cit = model.guaranteed["Cit"][0]
    eng = Engine(model, evidence, queries, GenericResample(), seed=1)
    broken = eng.world.copy()
    broken.values[FuncAppVar("Obs", (cit,))] = False  # contradicts the evidence
    with pytest.raises(ContractError, match="violates evidence"):
        eng.check_state(broken)
    with pytest.raises(ValueError):
        eng.run(0)


def test_empty_stats_have_nan_estimates():
    s = ChainStats(["q"])
    assert math.isnan(s.estimates["q"]) and s.acceptance_rate == 0.0
    assert math.isnan(s.mean_factor_evals("split"))
