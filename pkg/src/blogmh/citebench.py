"""Citation-matching benchmark: datasets, synthetic generation, runs and reports."""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import Engine, Query
from .model import GuaranteedDecl, Model, PriorDecl
from .parser import parse_model
from .proposers import GenericResample, SplitMerge, instantiate
from .proposers.canopy import build_canopies
from .rng import Stream
from .values import FuncAppVar, NonGuaranteedObject
from .worlds import PartialWorld, log_prob_abstract

__all__ = [
    "REPORT_VERSION",
    "DatasetError",
    "CitationRecord",
    "CitationDataset",
    "load_dataset",
    "write_dataset",
    "citation_model",
    "generate_synthetic",
    "citation_problem",
    "cluster_accuracy",
    "partition_from_labels",
    "RunReport",
    "run_citebench",
    "make_proposer",
]

REPORT_VERSION = 1
OBS_PRIORS = ("TitleObsModel", "AuthorObsModel", "AuthJoinModel", "FormatModel")


class DatasetError(ValueError):
    """A malformed or inconsistent citation dataset."""


@dataclass(frozen=True)
class CitationRecord:
    id: str
    gold: str
    text: str


@dataclass(frozen=True)
class CitationDataset:
    records: tuple

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DatasetError(f"duplicate citation id {r.id!r}")
            seen.add(r.id)
            if not r.text:
                raise DatasetError(f"citation {r.id!r} has empty text")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list:
        return [r.id for r in self.records]

    def gold_partition(self) -> list:
        return partition_from_labels({r.id: r.gold for r in self.records})


def load_dataset(path) -> CitationDataset:
    """Read a TSV file of ``id<TAB>gold<TAB>text`` lines (CRLF or LF)."""
    with open(path, encoding="utf-8", newline="") as f:
        raw = f.read()
    records = []
    seen: dict = {}
    for lineno, line in enumerate(raw.replace("\r\n", "\n").replace("\r", "\n").split("\n"), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        cid, gold, text = parts
        if not cid:
            raise DatasetError(f"{path}:{lineno}: empty citation id")
        if cid in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate citation id {cid!r} (first on line {seen[cid]})")
        if not text:
            raise DatasetError(f"{path}:{lineno}: citation {cid!r} has empty text")
        seen[cid] = lineno
        records.append(CitationRecord(cid, gold, text))
    if not records:
        raise DatasetError(f"{path}: no citations")
    return CitationDataset(tuple(records))


def write_dataset(dataset: CitationDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in dataset.records:
            f.write(f"{r.id}\t{r.gold}\t{r.text}\n")


# ------------------------------------------------------------------ models


def _bundled_source() -> str:
    return resources.files("blogmh").joinpath("data/citations.blog").read_text(encoding="utf-8")


def citation_model(n_citations: int, eps: float | None = None, pubs_per_citation: float = 1 / 3,
                   authors_per_pub: float = 2.0, source: str | None = None) -> Model:
    """The bundled citation model resized to ``n_citations`` citations.

    The publication-count prior is Poisson with mean ``n_citations *
    pubs_per_citation`` and the researcher-count prior Poisson with mean
    ``authors_per_pub`` times that.  ``eps`` overrides the corruption
    probability of every observation model.
    """
    if n_citations < 1:
        raise ValueError("need at least one citation")
    model = parse_model(source if source is not None else _bundled_source())
    n_pub = max(1.0, n_citations * pubs_per_citation)
    overrides = {
        "NumPublicationsPrior": {"lambda": n_pub},
        "NumResearchersPrior": {"lambda": max(1.0, n_pub * authors_per_pub)},
    }
    if eps is not None:
        for name in OBS_PRIORS:
            overrides[name] = {"eps": float(eps)}
    decls = []
    for d in model.decls:
        if isinstance(d, GuaranteedDecl) and d.type_name == "Cit":
            d = dataclasses.replace(d, names=tuple(f"C{k}" for k in range(1, n_citations + 1)))
        elif isinstance(d, PriorDecl) and d.name in overrides:
            kw = dict(d.call.kwargs)
            kw.update(overrides[d.name])
            d = dataclasses.replace(d, call=dataclasses.replace(d.call, kwargs=tuple(kw.items())))
        decls.append(d)
    return Model(decls)


def generate_synthetic(model: Model, n_citations: int, seed: int = 0) -> CitationDataset:
    """Forward-sample a concrete world and return its citation texts with gold clusters.

    The first ``n_citations`` guaranteed citations are used; the gold label
    of a citation is the index of the publication it cites.
    """
    cits = model.guaranteed.get("Cit", ())
    if len(cits) < n_citations:
        raise DatasetError(f"model has {len(cits)} citations, {n_citations} requested")
    world = PartialWorld(model, {}, identifier_types=(), seed=seed)
    patch = world.patch()
    rng = Stream(seed)
    for c in cits[:n_citations]:
        instantiate(patch, FuncAppVar("Text", (c,)), rng)
    patch.apply()
    records = []
    for c in cits[:n_citations]:
        pub = world.get(FuncAppVar("PubCited", (c,)))
        gold = str(pub.index) if isinstance(pub, NonGuaranteedObject) else repr(pub)
        records.append(CitationRecord(c.name, gold, world.get(FuncAppVar("Text", (c,)))))
    return CitationDataset(tuple(records))


def citation_problem(dataset: CitationDataset, eps: float = 0.05) -> tuple[Model, dict]:
    """The citation model sized to ``dataset`` and its ``Text`` evidence."""
    model = citation_model(len(dataset), eps=eps)
    cits = model.guaranteed["Cit"]
    evidence = {FuncAppVar("Text", (c,)): r.text for c, r in zip(cits, dataset.records)}
    return model, evidence


# -------------------------------------------------------------- accuracy


def partition_from_labels(labels: Mapping) -> list:
    """``{id: label}`` to a list of clusters (frozensets)."""
    groups: dict = {}
    for i, lab in labels.items():
        groups.setdefault(lab, set()).add(i)
    return [frozenset(g) for g in groups.values()]


def _as_partition(p) -> list:
    if isinstance(p, Mapping):
        return partition_from_labels(p)
    return [frozenset(c) for c in p]


def cluster_accuracy(predicted, gold) -> float:
    """Fraction of gold clusters that appear exactly as a predicted cluster.

    Partitions are given as iterables of clusters or as ``{id: label}``
    mappings; both must cover the same ids.
    """
    pred, true = _as_partition(predicted), _as_partition(gold)
    pu = set().union(*pred) if pred else set()
    tu = set().union(*true) if true else set()
    if pu != tu or sum(map(len, pred)) != len(pu) or sum(map(len, true)) != len(tu):
        raise ValueError("predicted and gold partitions cover different ids")
    if not true:
        return 1.0
    pset = set(pred)
    return sum(1 for c in true if c in pset) / len(true)


# ------------------------------------------------------------------- runs


@dataclass
class RunReport:
    """Machine-readable result of one benchmark run (all chains)."""

    config: dict
    seed: int
    n_citations: int
    estimates: dict = field(default_factory=dict)
    predicted_final: list = field(default_factory=list)
    predicted_majority: list = field(default_factory=list)
    accuracy_final: float = 0.0
    accuracy_avg: float = 0.0
    acceptance_rate: float = 0.0
    factor_evals_total: int = 0
    factor_evals_by_class: dict = field(default_factory=dict)
    log_prob_initial: float = 0.0
    log_prob_final: float = 0.0
    init_ms: float = 0.0
    wall_ms: float = 0.0
    chains: list = field(default_factory=list)
    report_version: int = REPORT_VERSION

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        kw.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kw)


def make_proposer(name: str, theta: float = 0.25, rho: float = 0.1):
    if name == "generic":
        return GenericResample(abstract=True)
    if name == "splitmerge":
        return SplitMerge(theta=theta, rho=rho)
    raise ValueError(f"unknown proposer {name!r} (expected generic or splitmerge)")


class _Tracker:
    """Per-sample clustering statistics, updated only when the state changes."""

    def __init__(self, engine: Engine, ids: Sequence[str], gold: list, pairs: list):
        self.engine = engine
        self.ids = list(ids)
        self.gold = gold
        self.pairs = pairs
        self.cits = engine.model.guaranteed["Cit"][: len(ids)]
        self.vars = [FuncAppVar("PubCited", (c,)) for c in self.cits]
        self.version = None
        self.acc = 0.0
        self.vec = np.zeros(len(pairs))
        self.acc_sum = 0.0
        self.pair_sum = np.zeros(len(pairs))
        self.n = 0

    def labels(self) -> dict:
        vals = self.engine.world.values
        return {i: vals[v] for i, v in zip(self.ids, self.vars)}

    def partition(self) -> list:
        return partition_from_labels(self.labels())

    def __call__(self, engine, step):
        w = engine.world
        if w.version != self.version:
            self.version = w.version
            lab = self.labels()
            self.acc = cluster_accuracy(partition_from_labels(lab), self.gold)
            self.vec = np.fromiter((lab[a] == lab[b] for a, b in self.pairs), float, len(self.pairs))
        self.acc_sum += self.acc
        self.pair_sum += self.vec
        self.n += 1

    def majority_partition(self) -> list:
        parent = {i: i for i in self.ids}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        if self.n:
            for (a, b), s in zip(self.pairs, self.pair_sum):
                if s / self.n > 0.5:
                    parent[find(a)] = find(b)
        return partition_from_labels({i: find(i) for i in self.ids})


def _sorted_partition(p: Iterable, order: dict) -> list:
    return sorted((sorted(c, key=order.get) for c in p), key=lambda c: order[c[0]])


def _run_chain(args) -> dict:
    dataset, cfg, seed = args
    model, evidence = citation_problem(dataset, cfg["eps"])
    proposer = make_proposer(cfg["proposer"], cfg["theta"], cfg["rho"])
    engine = Engine(model, evidence, [], proposer, seed=seed, assert_mode=cfg["assert"])
    ids = dataset.ids
    order = {i: k for k, i in enumerate(ids)}
    canopies = build_canopies(list(zip(ids, (r.text for r in dataset.records))), cfg["theta"])
    pairs = sorted({(a, b) for can in canopies for a in can.members for b in can.members
                    if order[a] < order[b]}, key=lambda p: (order[p[0]], order[p[1]]))
    gold = dataset.gold_partition()
    tracker = _Tracker(engine, ids, gold, pairs)
    lp0 = engine.initial_log_prob
    stats = engine.run(cfg["samples"], burn_in=cfg["burnin"], callback=tracker)
    final = tracker.partition()
    return {
        "seed": seed,
        "accuracy_final": cluster_accuracy(final, gold),
        "accuracy_avg": tracker.acc_sum / tracker.n if tracker.n else 0.0,
        "predicted_final": _sorted_partition(final, order),
        "predicted_majority": _sorted_partition(tracker.majority_partition(), order),
        "acceptance_rate": stats.acceptance_rate,
        "proposals": stats.proposals,
        "accepted": stats.accepted,
        "factor_evals_total": stats.factor_evals_total,
        "factor_evals_by_class": {k: {"steps": s, "factor_evals": e} for k, (s, e) in sorted(stats.by_class.items())},
        "estimates": stats.estimates,
        "log_prob_initial": lp0,
        "log_prob_final": log_prob_abstract(engine.world),
        "init_ms": stats.init_ms,
        "wall_ms": stats.wall_ms,
    }


def run_citebench(dataset: CitationDataset, samples: int = 10_000, burnin: int = 0, seed: int = 0,
                  chains: int = 1, proposer: str = "splitmerge", theta: float = 0.25, rho: float = 0.1,
                  eps: float = 0.05, assert_mode: bool = False, workers: int | None = None) -> RunReport:
    """Run ``chains`` independent chains (seeds ``seed``, ``seed + 1``, ...) on ``dataset``.

    Top-level fields describe the first chain; ``chains`` lists every chain
    and ``estimates`` are pooled across chains.
    """
    if chains < 1:
        raise ValueError("chains must be positive")
    cfg = {"samples": samples, "burnin": burnin, "proposer": proposer, "theta": theta, "rho": rho,
           "eps": eps, "assert": assert_mode, "chains": chains}
    jobs = [(dataset, cfg, seed + k) for k in range(chains)]
    if chains == 1 or workers == 1:
        results = [_run_chain(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers or chains) as ex:
            results = list(ex.map(_run_chain, jobs))
    first = results[0]
    pooled: dict = {}
    for r in results:
        for k, v in r["estimates"].items():
            pooled[k] = pooled.get(k, 0.0) + v / len(results)
    by_class: dict = {}
    for r in results:
        for k, d in r["factor_evals_by_class"].items():
            agg = by_class.setdefault(k, {"steps": 0, "factor_evals": 0})
            agg["steps"] += d["steps"]
            agg["factor_evals"] += d["factor_evals"]
    return RunReport(
        config=cfg,
        seed=seed,
        n_citations=len(dataset),
        estimates=pooled,
        predicted_final=first["predicted_final"],
        predicted_majority=first["predicted_majority"],
        accuracy_final=first["accuracy_final"],
        accuracy_avg=first["accuracy_avg"],
        acceptance_rate=sum(r["accepted"] for r in results) / sum(r["proposals"] for r in results),
        factor_evals_total=sum(r["factor_evals_total"] for r in results),
        factor_evals_by_class=dict(sorted(by_class.items())),
        log_prob_initial=first["log_prob_initial"],
        log_prob_final=first["log_prob_final"],
        init_ms=sum(r["init_ms"] for r in results),
        wall_ms=sum(r["wall_ms"] for r in results),
        chains=results,
    )


def mean_accuracy(reports: Sequence[RunReport]) -> float:
    return math.fsum(r.accuracy_final for r in reports) / len(reports)
