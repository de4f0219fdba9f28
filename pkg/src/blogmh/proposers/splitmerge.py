"""Split-merge moves over citation clusters, with canopies and text-driven attributes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..model import log_sum_exp
from ..values import MISSING, FuncAppVar, Identifier, NumberVar
from ..worlds import ContractError, PartialWorld, WorldPatch, log_prob_abstract, prune_to_minimal
from .base import Proposer, RepairError, support_term, support_var
from .canopy import Canopy, build_canopies
from .generic import GenericResample

__all__ = [
    "CitationSchema",
    "Segmentation",
    "Attributes",
    "SplitMergeMove",
    "SplitMerge",
    "segment_text",
    "attribute_log_mass",
]

NEG_INF = -math.inf
LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class Segmentation:
    """A citation text cut into its author list and title.

    ``suffixes[n]`` is the author list from author ``n`` on, as written
    (``suffixes[k] == ""``).
    """

    title: str
    authors: tuple
    suffixes: tuple


@dataclass(frozen=True)
class Attributes:
    """Proposed or current attributes of one publication.

    ``num_authors`` is None for models without authors.
    """

    title: str
    num_authors: int | None = None
    names: tuple = ()


@dataclass
class SplitMergeMove:
    kind: str  # "split" or "merge"
    canopy: Canopy
    pair: tuple
    pubs: tuple
    attributes: tuple
    log_q_fwd: float
    log_q_back: float


def _format_seps(model, func: str):
    """(sep, alt) of ``func``'s string-format clause, or None if it has none."""
    comp = model._compiled.get(func)
    if comp is None:
        return None
    for _, clause, is_term in comp.branches:
        if not is_term and clause.kind == "StringConcatFormat":
            return clause.kwargs.get("sep", " "), clause.kwargs.get("alt", "; ")
    return None


class CitationSchema:
    """The citation-model functions the split-merge proposer knows how to drive.

    Required: ``PubCited(Cit) -> Pub``, ``Text(Cit) -> String`` and
    ``Title(Pub) -> String``.  Authors are handled when ``NumAuthors``,
    ``NthAuthor`` and ``Name`` are all present; the per-citation rendering
    functions ``TitleText``, ``NthAuthorText`` and ``AuthListSuffix`` are
    optional.
    """

    def __init__(self, model):
        fns = model.functions
        for f in ("PubCited", "Text", "Title"):
            if f not in fns:
                raise ValueError(f"split-merge needs a random function {f}")
        self.model = model
        self.cit_type = fns["PubCited"].arg_types[0]
        self.pub_type = fns["PubCited"].return_type
        if self.pub_type not in model.number_statements:
            raise ValueError(f"split-merge needs a number statement for {self.pub_type}")
        self.citations = tuple(model.guaranteed.get(self.cit_type, ()))
        self.authors = all(f in fns for f in ("NumAuthors", "NthAuthor", "Name"))
        self.res_type = fns["NthAuthor"].return_type if self.authors else None
        allowed_pub = {"Title"} | ({"NumAuthors", "NthAuthor"} if self.authors else set())
        for name, fs in fns.items():
            if self.pub_type in fs.arg_types and name not in allowed_pub:
                raise ValueError(f"split-merge cannot propose values for {name}")
            if self.res_type is not None and self.res_type in fs.arg_types and name != "Name":
                raise ValueError(f"split-merge cannot propose values for {name}")
        self.title_text = "TitleText" in fns
        self.author_text = self.authors and "NthAuthorText" in fns
        self.suffix = self.authors and "AuthListSuffix" in fns
        self.text_seps = _format_seps(model, "Text")
        self.join_seps = _format_seps(model, "AuthListSuffix") if self.suffix else None
        if self.authors and self.text_seps is None:
            raise ValueError("Text must be a string format of author list and title")

    def identifier_types(self) -> list:
        return [self.pub_type] + ([self.res_type] if self.authors else [])

    def pub_cited(self, c):
        return FuncAppVar("PubCited", (c,))

    def text(self, c):
        return FuncAppVar("Text", (c,))


def _split_on(s: str, seps) -> list[tuple[int, int]]:
    """Spans of non-overlapping occurrences of any separator, left to right."""
    out = []
    i = 0
    while i < len(s):
        for sep in seps:
            if sep and s.startswith(sep, i):
                out.append((i, i + len(sep)))
                i += len(sep)
                break
        else:
            i += 1
    return out


def segment_text(text: str, text_seps=None, join_seps=None) -> Segmentation | None:
    """Cut ``text`` into author list and title, or None when that is ambiguous.

    ``text_seps`` separates the author list from the title; ``join_seps``
    separates authors.  Without ``text_seps`` the whole text is the title.
    """
    if not text:
        return None
    if text_seps is None:
        return Segmentation(text, (), ("",))
    cuts = _split_on(text, text_seps)
    if len(cuts) > 1:
        return None
    if not cuts:
        return Segmentation(text, (), ("",))
    (a, b), = cuts
    head, title = text[:a], text[b:]
    if not head or not title:
        return None
    starts = [0]
    ends = []
    if join_seps is not None:
        for x, y in _split_on(head, join_seps):
            ends.append(x)
            starts.append(y)
    ends.append(len(head))
    authors = tuple(head[s:e] for s, e in zip(starts, ends))
    if any(not a for a in authors):
        return None
    return Segmentation(title, authors, tuple(head[s:] for s in starts) + ("",))


def _mix(match: bool, prior_lp: float, rho: float) -> float:
    """log((1-rho) [match] + rho prior)."""
    a = math.log1p(-rho) if match and rho < 1.0 else NEG_INF
    b = math.log(rho) + prior_lp if rho > 0.0 else NEG_INF
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def attribute_log_mass(attrs: Attributes, seg: Segmentation | None, rho: float, priors) -> float:
    """Log mass of proposing ``attrs`` from one citation's segmentation.

    ``priors`` holds the prior log masses ``(title, num_authors, names)`` of
    the values in ``attrs``.  Each attribute is the extracted string with
    probability 1-rho and a prior draw with probability rho; extracted values
    are missing for unsegmentable text and for authors beyond the extracted
    count, in which case only the prior remains.
    """
    t_lp, k_lp, name_lps = priors
    if seg is None:
        return t_lp + (k_lp if attrs.num_authors is not None else 0.0) + sum(name_lps)
    total = _mix(attrs.title == seg.title, t_lp, rho)
    if attrs.num_authors is not None:
        total += _mix(attrs.num_authors == len(seg.authors), k_lp, rho)
        for n, (name, lp) in enumerate(zip(attrs.names, name_lps)):
            if n < len(seg.authors):
                total += _mix(name == seg.authors[n], lp, rho)
            else:
                total += lp
    return total


class SplitMerge(Proposer):
    """Split or merge publication clusters chosen through canopies.

    Each step is, with probability ``number_prob``, a +-1 walk on one
    instantiated number variable; with probability ``generic_prob`` a
    :class:`GenericResample` step; otherwise a split-merge move.  Split and
    merge keep every number variable fixed.
    """

    name = "splitmerge"

    def __init__(self, theta: float = 0.25, rho: float = 0.1,
                 number_prob: float = 0.1, generic_prob: float = 0.05):
        super().__init__()
        if not 0.0 <= rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if number_prob < 0 or generic_prob < 0 or number_prob + generic_prob > 1.0:
            raise ValueError("move probabilities must be nonnegative and sum to at most 1")
        self.theta = theta
        self.rho = rho
        self.number_prob = number_prob
        self.generic_prob = generic_prob
        self.generic = GenericResample(abstract=True)
        self.schema: CitationSchema | None = None
        self.canopies: list[Canopy] = []
        self.last_move: SplitMergeMove | None = None
        self._segs: dict = {}
        self._canopies_of: dict = {}
        self._clusters = None
        self._clusters_version = None

    # ------------------------------------------------------------ set-up

    def bind(self, engine):
        super().bind(engine)
        self.generic.bind(engine)
        self._setup(engine.model, engine.evidence)

    def _setup(self, model, evidence):
        if self.schema is not None and self.schema.model is model:
            return
        s = CitationSchema(model)
        texts = []
        for c in s.citations:
            t = evidence.get(s.text(c), MISSING)
            if not isinstance(t, str):
                raise ValueError(f"split-merge needs Text({c.name}) as evidence")
            texts.append((c, t))
        self.schema = s
        self._segs = {c: segment_text(t, s.text_seps, s.join_seps) for c, t in texts}
        self.canopies = build_canopies(texts, self.theta)
        self._canopies_of = {c: [] for c in s.citations}
        for k, can in enumerate(self.canopies):
            for c in can.members:
                self._canopies_of[c].append(k)
        self._eligible = [k for k, can in enumerate(self.canopies) if len(can) >= 2]

    # ----------------------------------------------------- attribute model

    def _prior(self, view, func, arg):
        reads: list = []
        d = self.schema.model.dependency(view, FuncAppVar(func, (arg,)), reads)
        if reads:
            raise ValueError(f"split-merge needs a parent-free prior for {func}")
        return d

    def _prior_lps(self, view, pub, attrs: Attributes, researchers=()):
        t_lp = self._prior(view, "Title", pub).log_prob(attrs.title)
        if attrs.num_authors is None:
            return t_lp, 0.0, ()
        k_lp = self._prior(view, "NumAuthors", pub).log_prob(attrs.num_authors)
        name_lps = []
        for r, name in zip(researchers, attrs.names):
            name_lps.append(self._prior(view, "Name", r).log_prob(name))
        return t_lp, k_lp, tuple(name_lps)

    def cluster_log_mass(self, view, pub, attrs: Attributes, cluster, researchers=()) -> float:
        """Log mass of proposing ``attrs`` for ``pub`` from a uniformly chosen member of ``cluster``."""
        priors = self._prior_lps(view, pub, attrs, researchers)
        segs = self._segs
        terms = [attribute_log_mass(attrs, segs[c], self.rho, priors) for c in cluster]
        return log_sum_exp(terms) - math.log(len(cluster))

    def propose_attributes_from_citation(self, text: str, pub, patch: WorldPatch, rng,
                                         old: tuple | None = None, rho: float | None = None):
        """Propose and set the attributes of ``pub`` from one citation ``text``.

        Returns ``(attributes, researchers, log mass)``.  ``old`` is the
        ``(attributes, researchers)`` pair being replaced; its author
        variables and researcher names are removed.  ``rho`` overrides the
        proposer's prior-draw probability.
        """
        s = self.schema
        seg = segment_text(text, s.text_seps, s.join_seps) if text else None
        rho = self.rho if rho is None else rho
        title_d = self._prior(patch, "Title", pub)
        if seg is not None and not (rho > 0.0 and rng.random() < rho):
            title = seg.title
        else:
            title = title_d.sample(rng)
        patch.set(FuncAppVar("Title", (pub,)), title, check=False)
        if not s.authors:
            attrs = Attributes(title)
            return attrs, (), attribute_log_mass(attrs, seg, rho, self._prior_lps(patch, pub, attrs))
        if seg is not None and not (rho > 0.0 and rng.random() < rho):
            k = len(seg.authors)
        else:
            k = self._prior(patch, "NumAuthors", pub).sample(rng)
        patch.set(FuncAppVar("NumAuthors", (pub,)), k, check=False)
        names = []
        researchers = []
        for n in range(k):
            r = patch.mint(s.res_type)
            name_d = self._prior(patch, "Name", r)
            if seg is not None and n < len(seg.authors) and not (rho > 0.0 and rng.random() < rho):
                name = seg.authors[n]
            else:
                name = name_d.sample(rng)
            patch.set(FuncAppVar("NthAuthor", (pub, n)), r, check=False)
            patch.set(FuncAppVar("Name", (r,)), name, check=False)
            names.append(name)
            researchers.append(r)
        if old is not None:
            old_attrs, old_rs = old
            for n in range(k, old_attrs.num_authors or 0):
                patch.remove(FuncAppVar("NthAuthor", (pub, n)))
            for r in old_rs:
                patch.remove(FuncAppVar("Name", (r,)))
        attrs = Attributes(title, k, tuple(names))
        return attrs, tuple(researchers), attribute_log_mass(
            attrs, seg, rho, self._prior_lps(patch, pub, attrs, researchers))

    def read_attributes(self, world, pub):
        """``(attributes, researchers, reachable)`` of ``pub`` in ``world``.

        ``reachable`` is False when the authors could not have come from a
        re-proposal (a researcher shared between author slots or publications).
        """
        s = self.schema
        title = world.get(FuncAppVar("Title", (pub,)))
        if not s.authors:
            return Attributes(title), (), True
        k = world.get(FuncAppVar("NumAuthors", (pub,)))
        rs = tuple(world.get(FuncAppVar("NthAuthor", (pub, n))) for n in range(k))
        names = tuple(world.get(FuncAppVar("Name", (r,))) for r in rs)
        ok = (len(set(rs)) == len(rs)
              and all(r.__class__ is Identifier and world.value_refs(r) == 1 for r in rs))
        return Attributes(title, k, names), rs, ok

    # ----------------------------------------------------------- clusters

    def clusters(self, world) -> dict:
        """``{publication: [citations]}`` for ``world`` (citations in model order)."""
        if self._clusters_version == (id(world), world.version):
            return self._clusters
        out: dict = {}
        get = world.values.get
        for c in self.schema.citations:
            out.setdefault(get(self.schema.pub_cited(c)), []).append(c)
        self._clusters = out
        self._clusters_version = (id(world), world.version)
        return out

    def pair_log_mass(self, a, b) -> float:
        """Log probability that canopy and ordered pair pick one citation from ``a`` and one from ``b``."""
        cof = self._canopies_of
        ca: dict = {}
        for c in a:
            for k in cof[c]:
                ca[k] = ca.get(k, 0) + 1
        total = 0.0
        seen: dict = {}
        for c in b:
            for k in cof[c]:
                if k in ca:
                    seen[k] = seen.get(k, 0) + 1
        n_elig = len(self._eligible)
        for k, nb in seen.items():
            m = len(self.canopies[k])
            total += 2.0 * ca[k] * nb / (m * (m - 1))
        return math.log(total / n_elig) if total > 0 else NEG_INF

    # ----------------------------------------------------------- proposals

    def initial_state(self, model, evidence, queries, rng) -> PartialWorld:
        self._setup(model, evidence)
        s = self.schema
        singletons = [[c] for c in s.citations]
        by_count: dict = {}
        for c in s.citations:
            seg = self._segs[c]
            by_count.setdefault(None if seg is None else len(seg.authors), []).append(c)
        for plan in (singletons, list(by_count.values())):
            world = self._build_state(model, evidence, queries, rng, plan)
            if world is not None:
                return world
        raise ContractError("could not build a split-merge initial state with positive probability")

    def _build_state(self, model, evidence, queries, rng, plan):
        s = self.schema
        world = PartialWorld(model, evidence, s.identifier_types())
        patch = world.patch()
        n_res = 0
        for cluster in plan:
            p = patch.mint(s.pub_type)
            for c in cluster:
                patch.set(s.pub_cited(c), p, check=False)
            text = evidence[s.text(cluster[0])]
            attrs, rs, _ = self.propose_attributes_from_citation(text, p, patch, rng, rho=0.0)
            n_res += len(rs)
            for c in cluster:
                self._set_rendering(patch, c, attrs)
        patch.set(NumberVar(s.pub_type), len(plan), check=False)
        if s.authors and n_res:
            patch.set(NumberVar(s.res_type), n_res, check=False)
        for var in evidence:
            support_var(patch, var, rng)
        for q in queries:
            support_term(patch, q.term, rng)
        prune_to_minimal(patch, evidence, [q.term for q in queries])
        patch.apply()
        return world if log_prob_abstract(world) > NEG_INF else None

    def _set_rendering(self, patch, c, attrs: Attributes):
        """Set the per-citation rendering variables of ``c`` from its own text."""
        s = self.schema
        seg = self._segs[c]
        if seg is None:
            return
        if s.title_text:
            patch.set(FuncAppVar("TitleText", (c,)), seg.title, check=False)
        if not s.authors or attrs.num_authors != len(seg.authors):
            return
        for n, a in enumerate(seg.authors):
            if s.author_text:
                patch.set(FuncAppVar("NthAuthorText", (c, n)), a, check=False)
        if s.suffix:
            for n, suf in enumerate(seg.suffixes):
                patch.set(FuncAppVar("AuthListSuffix", (c, n)), suf, check=False)

    def propose(self, patch: WorldPatch, rng) -> float:
        u = rng.random()
        if u < self.number_prob:
            self.last_class = "number"
            return self._number_walk(patch, rng)
        if u < self.number_prob + self.generic_prob:
            r = self.generic.propose(patch, rng)
            self.last_class = "generic-" + self.generic.last_class
            return r
        return self._split_merge(patch, rng)

    def _number_walk(self, patch, rng) -> float:
        world = patch.base
        nvars = [NumberVar(t) for t in sorted(world.model.number_statements)
                 if NumberVar(t) in world.values and NumberVar(t) not in self.engine.evidence]
        if not nvars:
            return 0.0
        v = nvars[rng.integers(len(nvars))]
        new = world.values[v] + (1 if rng.random() < 0.5 else -1)
        if new < 0:
            return NEG_INF
        patch.set(v, new, check=False)
        return 0.0

    def _split_merge(self, patch, rng) -> float:
        self.last_move = None
        if not self._eligible:
            self.last_class = "abort"
            return 0.0
        can = self.canopies[self._eligible[rng.integers(len(self._eligible))]]
        m = len(can)
        i = rng.integers(m)
        j = rng.integers(m - 1)
        if j >= i:
            j += 1
        c1, c2 = can.members[i], can.members[j]
        world = patch.base
        s = self.schema
        p1 = world.values[s.pub_cited(c1)]
        p2 = world.values[s.pub_cited(c2)]
        if p1.__class__ is not Identifier or p2.__class__ is not Identifier:
            raise ContractError("split-merge needs publication identifiers")
        clusters = self.clusters(world)
        if p1 == p2:
            self.last_class = "split"
            return self._split(patch, rng, can, c1, c2, p1, clusters[p1])
        self.last_class = "merge"
        return self._merge(patch, rng, can, c1, c2, p1, p2, clusters[p1], clusters[p2])

    def _donor(self, cluster, rng):
        c = cluster[rng.integers(len(cluster))]
        return self.engine.evidence[self.schema.text(c)]

    def _split(self, patch, rng, can, c1, c2, p1, cluster) -> float:
        world = patch.base
        old_attrs, old_rs, ok = self.read_attributes(world, p1)
        if not ok:
            return NEG_INF
        a, b = [], []
        for c in cluster:
            if c == c1:
                a.append(c)
            elif c == c2:
                b.append(c)
            else:
                (a if rng.random() < 0.5 else b).append(c)
        p_new = patch.mint(self.schema.pub_type)
        for c in b:
            patch.set(self.schema.pub_cited(c), p_new, check=False)
        attrs_a, rs_a, _ = self.propose_attributes_from_citation(
            self._donor(a, rng), p1, patch, rng, old=(old_attrs, old_rs))
        attrs_b, rs_b, _ = self.propose_attributes_from_citation(self._donor(b, rng), p_new, patch, rng)
        pair = self.pair_log_mass(a, b)
        fwd = (pair + (len(cluster) - 2) * LOG_HALF
               + self.cluster_log_mass(patch, p1, attrs_a, a, rs_a)
               + self.cluster_log_mass(patch, p_new, attrs_b, b, rs_b))
        back = pair + self.cluster_log_mass(world, p1, old_attrs, cluster, old_rs)
        self.last_move = SplitMergeMove("split", can, (c1, c2), (p1, p_new), (attrs_a, attrs_b), fwd, back)
        return self._finish(back - fwd)

    def _merge(self, patch, rng, can, c1, c2, p1, p2, a, b) -> float:
        world = patch.base
        old1, rs1, ok1 = self.read_attributes(world, p1)
        old2, rs2, ok2 = self.read_attributes(world, p2)
        if not (ok1 and ok2):
            return NEG_INF
        merged = sorted(a + b, key=self.schema.citations.index)
        for c in b:
            patch.set(self.schema.pub_cited(c), p1, check=False)
        attrs, rs, _ = self.propose_attributes_from_citation(
            self._donor(merged, rng), p1, patch, rng, old=(old1, rs1))
        pair = self.pair_log_mass(a, b)
        fwd = pair + self.cluster_log_mass(patch, p1, attrs, merged, rs)
        back = (pair + (len(merged) - 2) * LOG_HALF
                + self.cluster_log_mass(world, p1, old1, a, rs1)
                + self.cluster_log_mass(world, p2, old2, b, rs2))
        self.last_move = SplitMergeMove("merge", can, (c1, c2), (p1, p2), (attrs,), fwd, back)
        return self._finish(back - fwd)

    def _finish(self, ratio: float) -> float:
        if ratio != ratio:
            return NEG_INF
        try:
            self.engine.analysis(repair=_no_repair)
        except RepairError:
            return NEG_INF
        return ratio


def _no_repair(patch, var):
    raise RepairError(f"split-merge leaves {var!r} uninstantiated")
