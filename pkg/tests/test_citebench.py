import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from blogmh.citebench import (CitationDataset, CitationRecord, DatasetError, citation_model, cluster_accuracy,
                              generate_synthetic, load_dataset, make_proposer, mean_accuracy,
                              partition_from_labels, run_citebench, write_dataset)
from blogmh.values import NumberVar


def test_accuracy_examples():
    gold = [{"a", "b"}, {"c"}, {"d", "e"}]
    assert cluster_accuracy(gold, gold) == 1.0
    assert cluster_accuracy([{"a", "b", "c"}, {"d", "e"}], gold) == pytest.approx(1 / 3)
    assert cluster_accuracy([{"a"}, {"b"}, {"c"}, {"d"}, {"e"}], gold) == pytest.approx(1 / 3)
    assert cluster_accuracy({"a": 1, "b": 1, "c": 2, "d": 3, "e": 3}, gold) == 1.0


def test_accuracy_checks_the_universe():
    with pytest.raises(ValueError):
        cluster_accuracy([{"a"}], [{"a"}, {"b"}])
    with pytest.raises(ValueError):
        cluster_accuracy([{"a", "b"}, {"b"}], [{"a", "b"}])


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.integers(0, 4), min_size=1),
       st.randoms())
def test_accuracy_ignores_ordering(labels, rnd):
    part = partition_from_labels(labels)
    shuffled = [frozenset(sorted(c, key=lambda _: rnd.random())) for c in part]
    rnd.shuffle(shuffled)
    assert cluster_accuracy(shuffled, part) == 1.0
    relabeled = {k: f"x{v}" for k, v in labels.items()}
    assert cluster_accuracy(relabeled, labels) == 1.0


def test_dataset_round_trip(tmp_path):
    ds = CitationDataset((CitationRecord("C1", "1", "Ann. Title one"), CitationRecord("C2", "1", "Ann: Title one")))
    p = tmp_path / "d.tsv"
    write_dataset(ds, p)
    assert load_dataset(p) == ds
    crlf = tmp_path / "crlf.tsv"
    crlf.write_bytes(b"C1\t1\tAnn. Title one\r\nC2\t1\tAnn: Title one\r\n\r\n")
    assert load_dataset(crlf) == ds


@pytest.mark.parametrize("content,fragment", [
    ("C1\t1\n", ":1: expected 3 tab-separated fields"),
    ("C1\t1\tx\nC1\t2\ty\n", ":2: duplicate citation id 'C1' (first on line 1)"),
    ("C1\t1\t\n", "has empty text"),
    ("\t1\tx\n", "empty citation id"),
    ("\n\n", "no citations"),
])
def test_dataset_errors(tmp_path, content, fragment):
    p = tmp_path / "bad.tsv"
    p.write_text(content)
    with pytest.raises(DatasetError, match=fragment.replace("(", r"\(").replace(")", r"\)")):
        load_dataset(p)


def test_citation_model_resizing():
    m = citation_model(12, eps=0.2, pubs_per_citation=0.5)
    assert [c.name for c in m.guaranteed["Cit"]] == [f"C{k}" for k in range(1, 13)]
    prior = m.dependency(None, NumberVar("Pub"), [])
    assert prior.lam == pytest.approx(6.0)
    with pytest.raises(ValueError):
        citation_model(0)


def test_synthetic_generation_is_seeded():
    m = citation_model(20)
    a, b = generate_synthetic(m, 20, seed=3), generate_synthetic(m, 20, seed=3)
    assert a == b and len(a) == 20
    assert generate_synthetic(m, 20, seed=4) != a
    with pytest.raises(DatasetError):
        generate_synthetic(m, 21)


def test_small_run_report():
    ds = generate_synthetic(citation_model(15), 15, seed=1)
    rep = run_citebench(ds, samples=400, seed=2)
    d = json.loads(rep.to_json())
    assert d["report_version"] == 1 and d["n_citations"] == 15
    assert 0.0 <= d["accuracy_final"] <= 1.0 and 0.0 <= d["accuracy_avg"] <= 1.0
    flat = {c for cl in d["predicted_final"] for c in cl}
    assert flat == set(ds.ids)
    assert sorted(c for cl in d["predicted_majority"] for c in cl) == sorted(ds.ids)
    assert mean_accuracy([rep]) == rep.accuracy_final


def test_chains_are_pooled():
    ds = generate_synthetic(citation_model(8), 8, seed=5)
    rep = run_citebench(ds, samples=100, seed=0, chains=2, workers=1)
    assert [c["seed"] for c in rep.chains] == [0, 1]
    assert rep.factor_evals_total == sum(c["factor_evals_total"] for c in rep.chains)


def test_make_proposer():
    assert make_proposer("generic").name == "generic"
    assert make_proposer("splitmerge", theta=0.5).theta == 0.5
    with pytest.raises(ValueError):
        make_proposer("gibbs")
