import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blogmh.selftest import THREE_VERSION_SOURCE, three_version_world
from blogmh import parse_model
from blogmh.values import MISSING, FuncAppVar, Identifier, NonGuaranteedObject, NumberVar
from blogmh.worlds import (PartialWorld, UngroundedIdentifierError, check_identifiers_grounded,
                           enumerate_concrete_versions, is_minimal_beyond, is_self_supporting, log_perm,
                           log_prob_abstract, log_prob_concrete, prune_to_minimal)

MODEL = parse_model(THREE_VERSION_SOURCE)
CIT = MODEL.guaranteed["Cit"][0]
IDS = [Identifier("Pub", f"T{k}") for k in range(4)]
VARS = [FuncAppVar("Tit", (i,)) for i in IDS] + [NumberVar("Pub"), FuncAppVar("PubCited", (CIT,))]


def test_log_perm():
    assert log_perm(5, 0) == 0.0
    assert log_perm(5, 2) == pytest.approx(math.log(20))
    assert log_perm(3, 3) == pytest.approx(math.log(6))
    assert log_perm(2, 3) == -math.inf


def _value_for(var, draw):
    if var.__class__ is NumberVar:
        return draw % 5
    if var.func == "PubCited":
        return IDS[draw % len(IDS)]
    return "foo" if draw % 2 else "bar"


ops = st.lists(st.tuples(st.sampled_from(["set", "remove", "apply", "discard"]),
                         st.integers(0, len(VARS) - 1), st.integers(0, 50)), max_size=60)


@settings(max_examples=200)
@given(ops)
def test_patch_reads_match_eager_copy(seq):
    world = PartialWorld(MODEL, {}, identifier_types=("Pub",))
    patch = world.patch()
    committed: dict = {}
    eager: dict = {}
    for op, k, draw in seq:
        var = VARS[k]
        if op == "set":
            val = _value_for(var, draw)
            patch.set(var, val)
            eager[var] = val
        elif op == "remove":
            patch.remove(var)
            eager.pop(var, None)
        elif op == "apply":
            patch.apply()
            committed = dict(eager)
        else:
            patch.discard()
            eager = dict(committed)
        for v in VARS:
            assert patch.get(v) == eager.get(v, MISSING)
        assert dict(patch.items()) == eager
        assert world.values == committed
        # identifier pools agree with a from-scratch rebuild of the patched state
        fresh = PartialWorld(MODEL, eager, identifier_types=("Pub",), check=False)
        assert sorted(patch.pool_ids("Pub"), key=repr) == sorted(fresh.pool_ids("Pub"), key=repr)
        assert patch.pool_size("Pub") == fresh.pool_size("Pub")
        for i in IDS:
            assert patch.value_refs(i) == fresh.value_refs(i)


def _edit_costs(base_size):
    values = {FuncAppVar("Tit", (Identifier("Pub", f"B{k}"),)): "foo" for k in range(base_size)}
    world = PartialWorld(MODEL, values)
    p = world.patch()
    p.set(FuncAppVar("Tit", (Identifier("Pub", "B0"),)), "bar")
    p.set(NumberVar("Pub"), 4)
    p.discard()
    discard_cost = p.op_count
    before = world.op_count
    p.set(FuncAppVar("Tit", (Identifier("Pub", "B0"),)), "bar")
    p.remove(FuncAppVar("Tit", (Identifier("Pub", "B1"),)))
    p.apply()
    return discard_cost, world.op_count - before


def test_apply_and_discard_cost_tracks_change_set_only():
    small, large = _edit_costs(10), _edit_costs(5000)
    assert small == large
    # each edit touches the variable and at most one identifier's counters
    assert all(0 < c <= 2 * 2 for c in small)


def test_three_concrete_versions():
    w = three_version_world()
    versions = enumerate_concrete_versions(w)
    assert len(versions) == 3
    cited = {c.values[FuncAppVar("PubCited", (CIT,))] for _, c in versions}
    assert cited == {NonGuaranteedObject("Pub", k) for k in (1, 2, 3)}  # pairwise contradictory
    concrete = math.fsum(math.exp(log_prob_concrete(c)) for _, c in versions)
    # #Pub = 3 (0.5) * PubCited = one of 3 (1/3) * Tit = foo (0.6), once per version
    assert concrete == pytest.approx(0.5 * 0.6, abs=1e-15)
    assert math.exp(log_prob_abstract(w)) == pytest.approx(concrete, abs=1e-15)


def test_ungrounded_identifier_is_rejected():
    x = Identifier("Pub", "U1")
    w = PartialWorld(MODEL, {NumberVar("Pub"): 3, FuncAppVar("Tit", (x,)): "foo"})
    ok, bad = check_identifiers_grounded(w)
    assert not ok and bad == [x]
    with pytest.raises(UngroundedIdentifierError):
        log_prob_abstract(w)


def test_identifier_and_numbered_objects_do_not_mix():
    x = Identifier("Pub", "M1")
    with pytest.raises(ValueError):
        PartialWorld(MODEL, {FuncAppVar("PubCited", (CIT,)): x,
                             FuncAppVar("Tit", (NonGuaranteedObject("Pub", 1),)): "foo"})


def test_support_and_minimality():
    w = three_version_world()
    assert is_self_supporting(w)
    core = [FuncAppVar("PubCited", (CIT,))]
    assert not is_minimal_beyond(w, core)  # Tit(x) is not needed for the core
    assert is_minimal_beyond(w, core + [FuncAppVar("Tit", (Identifier("Pub", "A3F"),))])
    p = w.patch()
    dropped = prune_to_minimal(p, core)
    assert FuncAppVar("Tit", (Identifier("Pub", "A3F"),)) in dropped
    assert is_minimal_beyond(p.materialize(), core)
    partial = PartialWorld(MODEL, {FuncAppVar("PubCited", (CIT,)): Identifier("Pub", "A3F")})
    assert not is_self_supporting(partial)  # #Pub is read but missing
