import math
from itertools import product

import pytest

from blogmh.citebench import citation_model, citation_problem, generate_synthetic
from blogmh.engine import Engine
from blogmh.proposers import (Attributes, CitationSchema, GenericResample, Segmentation, SplitMerge,
                              attribute_log_mass, segment_text)
from blogmh.rng import Stream
from blogmh.values import FuncAppVar, NumberVar
from blogmh.worlds import is_minimal_beyond, is_self_supporting

from conftest import load_case

TEXT_SEPS = (". ", ": ")
JOIN_SEPS = (", ", " and ")


@pytest.mark.parametrize("text,expected", [
    ("Ann Lee, Bo Chan. Deep Things", Segmentation("Deep Things", ("Ann Lee", "Bo Chan"),
                                                   ("Ann Lee, Bo Chan", "Bo Chan", ""))),
    ("Ann Lee and Bo Chan: Deep Things", Segmentation("Deep Things", ("Ann Lee", "Bo Chan"),
                                                      ("Ann Lee and Bo Chan", "Bo Chan", ""))),
    ("Ann Lee. Deep Things", Segmentation("Deep Things", ("Ann Lee",), ("Ann Lee", ""))),
    ("Deep Things", Segmentation("Deep Things", (), ("",))),
    ("Ann. Bo. Deep", None),  # two cuts: ambiguous
    (". Deep Things", None),
    ("Ann, , Bo. Deep", None),  # empty author
    ("", None),
])
def test_segmentation_examples(text, expected):
    assert segment_text(text, TEXT_SEPS, JOIN_SEPS) == expected


def test_segmentation_without_separators_is_whole_title():
    assert segment_text("a b. c", None, None) == Segmentation("a b. c", (), ("",))


def test_attribute_mass_mixture():
    seg = Segmentation("t", ("x", "y"), ("x, y", "y", ""))
    priors = (math.log(0.01), math.log(0.4), (math.log(0.05), math.log(0.05), math.log(0.05)))
    rho = 0.1
    exact = Attributes("t", 2, ("x", "y"))
    want = (math.log(0.9 + 0.1 * 0.01) + math.log(0.9 + 0.1 * 0.4) + 2 * math.log(0.9 + 0.1 * 0.05))
    assert attribute_log_mass(exact, seg, rho, priors) == pytest.approx(want)
    # a third author beyond the extracted list can only come from the prior
    three = Attributes("t", 3, ("x", "y", "z"))
    want3 = (math.log(0.9 + 0.001) + math.log(0.1 * 0.4) + 2 * math.log(0.905) + math.log(0.05))
    assert attribute_log_mass(three, seg, rho, priors) == pytest.approx(want3)
    assert attribute_log_mass(exact, None, rho, priors) == pytest.approx(sum(priors[2][:2]) + priors[0]
                                                                       + priors[1] + priors[2][2])
    assert attribute_log_mass(Attributes("u", 2, ("x", "y")), seg, 0.0, priors) == -math.inf


def _smallcite_engine(seed=0, **kw):
    model, _, evidence, queries = load_case("smallcite")
    sm = SplitMerge(theta=0.0, **kw)
    return Engine(model, evidence, queries, sm, seed=seed), sm


def test_title_proposal_masses_sum_to_one_by_enumeration():
    eng, sm = _smallcite_engine()
    pub = eng.world.values[FuncAppVar("PubCited", (eng.model.guaranteed["Cit"][0],))]
    seg = segment_text("a b")
    rho = sm.rho
    total = 0.0
    max_len = 12
    for n in range(1, max_len + 1):
        for toks in product("ab", repeat=n):
            attrs = Attributes(" ".join(toks))
            total += math.exp(attribute_log_mass(attrs, seg, rho, sm._prior_lps(eng.world, pub, attrs)))
    # the title prior puts mass 0.5**max_len on longer strings
    assert total == pytest.approx(1.0 - rho * 0.5 ** max_len, abs=1e-12)


def test_proposed_attribute_frequencies_match_reported_mass():
    ds = generate_synthetic(citation_model(6), 6, seed=2)
    model, evidence = citation_problem(ds)
    sm = SplitMerge(rho=0.3)
    eng = Engine(model, evidence, [], sm, seed=0)
    text = ds.records[0].text
    pub = eng.world.values[FuncAppVar("PubCited", (model.guaranteed["Cit"][0],))]
    rng = Stream(11)
    n = 4000
    hits = 0
    mass = None
    target = None
    for _ in range(n):
        patch = eng.world.patch()
        attrs, rs, lm = sm.propose_attributes_from_citation(text, pub, patch, rng)
        seg = segment_text(text, sm.schema.text_seps, sm.schema.join_seps)
        if target is None:
            target = Attributes(seg.title, len(seg.authors), seg.authors)
        if attrs == target:
            hits += 1
            mass = math.exp(lm)
        patch.discard()
    assert mass is not None
    assert abs(hits / n - mass) < 4 * math.sqrt(mass * (1 - mass) / n)


def _propose_until(eng, sm, kind, rng, tries=5000):
    for _ in range(tries):
        patch = eng.patch
        q = sm.propose(patch, rng)
        if sm.last_class == kind and q > -math.inf:
            return q
        patch.discard()
    raise AssertionError(f"no finite {kind} proposal")


def test_split_then_merge_masses_mirror():
    eng, sm = _smallcite_engine(seed=1, number_prob=0.0, generic_prob=0.0, rho=0.05)
    rng = Stream(3)
    # merge everything into one cluster first so that a split is available
    for _ in range(200):
        q = sm.propose(eng.patch, rng)
        if sm.last_class == "merge" and q > -math.inf:
            eng.scorer.commit(eng.analysis())
        else:
            eng.patch.discard()
    _propose_until(eng, sm, "split", rng)
    split = sm.last_move
    c1, c2 = split.pair
    p1, p_new = split.pubs
    before = sm.read_attributes(eng.world, p1)[0]
    eng.scorer.commit(eng.analysis())
    clusters = sm.clusters(eng.world)
    matched = 0
    for _ in range(200):
        sm._merge(eng.patch, rng, split.canopy, c1, c2, p1, p_new, clusters[p1], clusters[p_new])
        merge = sm.last_move
        eng.patch.discard()
        # the merge's reverse is exactly the split just made
        assert merge.log_q_back == pytest.approx(split.log_q_fwd, abs=1e-12)
        if merge.attributes[0] == before:
            # and when it restores the old attributes, its forward mass is the split's reverse
            assert merge.log_q_fwd == pytest.approx(split.log_q_back, abs=1e-12)
            matched += 1
    assert matched > 0


def test_split_merge_states_stay_valid():
    eng, sm = _smallcite_engine(seed=5)
    eng.assert_mode = True
    stats = eng.run(1500)
    assert {"split", "merge", "number"} <= set(stats.by_class)
    assert is_self_supporting(eng.world)
    assert is_minimal_beyond(eng.world, eng.evidence, [q.term for q in eng.queries])


def test_number_walk_below_zero_is_rejected():
    eng, sm = _smallcite_engine(seed=0, number_prob=1.0, generic_prob=0.0)
    patch = eng.patch
    eng.world.values[NumberVar("Pub")] = 0  # contrived: force the walk to step below zero
    rng = Stream(0)
    outcomes = set()
    for _ in range(20):
        outcomes.add(sm._number_walk(patch, rng))
        patch.discard()
    assert outcomes == {0.0, -math.inf}


def test_schema_requirements(tiny):
    model, _, evidence, queries = tiny
    with pytest.raises(ValueError, match="PubCited|Text|Title"):
        CitationSchema(model)
    small, _, ev, qs = load_case("smallcite")
    with pytest.raises(ValueError, match="needs Text"):
        Engine(small, {}, [], SplitMerge())
    with pytest.raises(ValueError):
        SplitMerge(rho=1.5)
    with pytest.raises(ValueError):
        SplitMerge(number_prob=0.7, generic_prob=0.7)


def test_generic_resample_handles_every_small_model():
    for name in ("twocite_a", "twocite_b", "twocite_c"):
        model, _, evidence, queries = load_case(name)
        eng = Engine(model, evidence, queries, GenericResample(), seed=0, assert_mode=True)
        stats = eng.run(500)
        assert stats.accepted > 0
