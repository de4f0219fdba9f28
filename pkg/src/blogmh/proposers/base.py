"""Proposer contract and forward-sampling helpers shared by proposers."""

from __future__ import annotations

import math

from ..distributions import Fresh
from ..model import _Unsupported
from ..values import MISSING, Identifier
from ..worlds import ContractError, PartialWorld, WorldPatch, log_prob_abstract, prune_to_minimal

__all__ = ["Proposer", "RepairError", "instantiate", "support_term", "forward_initial_state"]


class RepairError(Exception):
    """Forward repair would have to sample an object-valued variable."""


class Proposer:
    """Base class.

    Subclasses implement ``initial_state(model, evidence, queries, rng)`` and
    ``propose(patch, rng) -> log q(current | proposed) - log q(proposed | current)``.
    ``bind`` hands over the engine, whose ``prune()`` a proposer may call to
    learn which variables the minimal proposed state drops.  ``last_class``
    names the kind of the latest move for per-class statistics.
    """

    name = "proposer"
    last_class = "step"

    def __init__(self):
        self.engine = None

    def bind(self, engine):
        self.engine = engine

    def initial_state(self, model, evidence, queries, rng) -> PartialWorld:
        raise NotImplementedError

    def propose(self, patch: WorldPatch, rng) -> float:
        raise NotImplementedError


def instantiate(patch: WorldPatch, var, rng, allow_objects: bool = True) -> float:
    """Forward-sample ``var`` and, first, any uninstantiated variables it reads.

    Returns the summed log mass of the values drawn.  With
    ``allow_objects=False`` drawing an identifier-valued variable raises
    :class:`RepairError`.
    """
    model = patch.model
    total = 0.0
    while True:
        reads: list = []
        try:
            dist = model.dependency(patch, var, reads)
            break
        except _Unsupported:
            total += instantiate(patch, reads[-1], rng, allow_objects)
    if patch.get(var) is not MISSING:
        return total
    val = dist.sample(rng)
    if val.__class__ is Fresh or val.__class__ is Identifier:
        if not allow_objects:
            raise RepairError(f"repair would sample object-valued {var!r}")
        if val.__class__ is Fresh:
            ident = patch.mint(val.type_name)
            lp = dist.choice_log_mass(ident, patch.pool_ids(val.type_name))
            patch.set(var, ident, check=False)
            return total + lp
    patch.set(var, val, check=False)
    return total + dist.log_prob(val)


def support_term(patch: WorldPatch, term, rng, allow_objects: bool = True) -> float:
    """Instantiate whatever ``term`` needs to evaluate."""
    total = 0.0
    while True:
        reads: list = []
        try:
            term.ev(patch, (), reads)
            return total
        except _Unsupported:
            total += instantiate(patch, reads[-1], rng, allow_objects)


def support_var(patch: WorldPatch, var, rng, allow_objects: bool = True) -> float:
    """Instantiate the uninstantiated active parents of an instantiated ``var``."""
    model = patch.model
    total = 0.0
    while True:
        reads: list = []
        try:
            model.dependency(patch, var, reads)
            return total
        except _Unsupported:
            total += instantiate(patch, reads[-1], rng, allow_objects)


def forward_initial_state(model, evidence: dict, queries, rng, identifier_types=(),
                          max_tries: int = 1000, seed: int = 0) -> PartialWorld:
    """Sample the support of evidence and queries forward, then prune to minimal.

    Retries until the state has positive probability.
    """
    for _ in range(max_tries):
        world = PartialWorld(model, evidence, identifier_types, seed=seed)
        patch = world.patch()
        for var in evidence:
            support_var(patch, var, rng)
        for q in queries:
            support_term(patch, q.term, rng)
        prune_to_minimal(patch, evidence, [q.term for q in queries])
        patch.apply()
        if log_prob_abstract(world) > -math.inf:
            return world
    raise ContractError("could not sample an initial state consistent with the evidence")
