"""Single-variable resampling for arbitrary models."""

from __future__ import annotations

import math

from ..distributions import Fresh, UniformOverObjects
from ..values import MISSING, Identifier, NumberVar
from ..worlds import ContractError, WorldPatch
from .base import Proposer, RepairError, forward_initial_state, instantiate

__all__ = ["GenericResample"]

NEG_INF = -math.inf


class GenericResample(Proposer):
    """Pick a non-evidence variable uniformly and redraw it from its dependency.

    Variables the new value makes necessary are forward-sampled; variables it
    orphans are pruned.  Object-valued variables are never repair-sampled: a
    move that would need that (in either direction) gets proposal mass zero.

    ``abstract`` selects identifiers for every type with a number statement.
    """

    name = "generic"

    def __init__(self, abstract: bool = True):
        super().__init__()
        self.abstract = abstract

    def initial_state(self, model, evidence, queries, rng):
        id_types = list(model.number_statements) if self.abstract else ()
        return forward_initial_state(model, evidence, queries, rng, id_types)

    def propose(self, patch: WorldPatch, rng) -> float:
        engine = self.engine
        self._rng = rng
        world = patch.base
        model = world.model
        evidence = engine.evidence
        n_choices = len(world) - len(evidence)
        if n_choices <= 0:
            raise ContractError("no resampleable variable")
        while True:
            var = world.var_at(rng.integers(len(world)))
            if var not in evidence:
                break
        old = world.values[var]
        reads: list = []
        dist = model.dependency(world, var, reads)
        new = dist.sample(rng)
        if new is old or (type(new) is type(old) and new == old):
            self.last_class = "noop"
            return 0.0
        uniform_ids = dist.__class__ is UniformOverObjects and dist.pool is not None
        if new.__class__ is Fresh:
            new = patch.mint(new.type_name)
            fwd = dist.fresh_log_mass(world.pool_size(new.type_name))
        elif uniform_ids and new.__class__ is Identifier:
            fwd = -math.log(dist.size)
        else:
            fwd = dist.log_prob(new)
        self.last_class = "number" if var.__class__ is NumberVar else "resample"
        patch.set(var, new, check=False)
        try:
            known = {var: (tuple(dict.fromkeys(reads)), dist.log_prob(new))}
            a = engine.analysis(repair=self._repair, known=known)
        except RepairError:
            return NEG_INF
        new_f = a.new
        for v in a.repaired:
            fwd += new_f[v][1]
        pruned = a.pruned
        back = 0.0
        logf = engine.graph.logf
        for v, val in pruned.items():
            if val is MISSING:
                continue  # drawn by this move and dropped again
            if val.__class__ is Identifier and v != var:
                return NEG_INF
            back += logf[v]
        if uniform_ids and old.__class__ is Identifier:
            if patch.refs(old) > 0:
                back += -math.log(dist.size)
            else:
                back += dist.fresh_log_mass(patch.pool_size(old.type_name))
        else:
            back += dist.log_prob(old)
        n_back = len(world) + len(patch.added()) - len(patch.removed) - len(evidence)
        return (math.log(n_choices) - math.log(n_back)) + back - fwd

    def _repair(self, patch, var):
        before = len(patch.changed)
        instantiate(patch, var, self._rng, allow_objects=False)
        return list(patch.changed)[before:]

