"""Canopies: overlapping groups of textually similar citations."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Hashable, Sequence

__all__ = ["Canopy", "tokenize", "jaccard", "build_canopies"]

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Canopy:
    """Member citation ids, in input order."""

    members: tuple

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, c) -> bool:
        return c in self.members


def tokenize(text: str) -> frozenset:
    """Lowercased alphanumeric tokens of ``text`` (punctuation is dropped)."""
    return frozenset(_TOKEN.findall(text.lower()))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def build_canopies(citations: Sequence[tuple[Hashable, str]], theta: float = 0.25) -> list[Canopy]:
    """Group citations whose token sets have Jaccard similarity >= ``theta``.

    Candidate pairs come from an inverted token index and are first blocked
    into connected components at the relaxed threshold ``theta / 2``.
    Within a component, each citation's canopy is itself plus every citation
    at similarity >= ``theta``; duplicate member sets are kept once.  An
    isolated citation gets a singleton canopy.  With ``theta <= 0`` every
    pair qualifies, so there is a single canopy.
    """
    if not citations:
        raise ValueError("build_canopies needs at least one citation")
    ids = [c for c, _ in citations]
    if len(set(ids)) != len(ids):
        raise ValueError("citation ids must be unique")
    toks = [tokenize(t) for _, t in citations]
    n = len(ids)

    index: dict[str, list[int]] = {}
    for i, ts in enumerate(toks):
        for t in ts:
            index.setdefault(t, []).append(i)
    # empty token sets are identical to each other (similarity 1)
    empties = [i for i, ts in enumerate(toks) if not ts]

    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    strict: list[set[int]] = [{i} for i in range(n)]
    loose = theta / 2.0
    for i in range(n):
        if theta <= 0.0:
            cands = range(i + 1, n)  # every pair qualifies, token-disjoint ones included
        else:
            cands = set(empties) if not toks[i] else set()
            for t in toks[i]:
                cands.update(index[t])
        for j in cands:
            if j <= i:
                continue
            s = jaccard(toks[i], toks[j])
            if s >= loose:
                parent[find(i)] = find(j)
            if s >= theta:
                strict[i].add(j)
                strict[j].add(i)

    seen: set = set()
    out: list[Canopy] = []
    for i in range(n):
        comp = find(i)
        members = tuple(ids[k] for k in sorted(k for k in strict[i] if find(k) == comp))
        if members not in seen:
            seen.add(members)
            out.append(Canopy(members))
    return out
