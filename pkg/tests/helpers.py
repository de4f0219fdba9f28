"""Shared builders for the identity and partition checks."""

from __future__ import annotations

import math

from blogmh.oracle import _full_targets, enumerate_worlds
from blogmh.proposers import instantiate
from blogmh.rng import Stream
from blogmh.values import MISSING, FuncAppVar, Identifier, NonGuaranteedObject, NumberVar
from blogmh.worlds import PartialWorld, check_identifiers_grounded


def random_concrete_state(model, rng: Stream, keep: float = 0.5) -> PartialWorld:
    """A random self-supporting concrete instantiation that includes every number variable.

    A random subset of the variables of a forward-sampled world is instantiated
    forward, pulling in whatever each one reads.
    """
    world = PartialWorld(model, {}, identifier_types=())
    patch = world.patch()
    for t in model.number_statements:
        instantiate(patch, NumberVar(t), rng)
    values = dict(patch.items())
    for var in _full_targets(model, values):
        if patch.get(var) is MISSING and rng.random() < keep:
            instantiate(patch, var, rng)
    patch.apply()
    return world


def completion_mass(model, bounds, state: PartialWorld) -> float:
    """Total probability of the bounded full worlds that extend ``state``."""
    return math.fsum(p for _, p in enumerate_worlds(model, bounds, evidence=dict(state.values)))


def abstract_version(state: PartialWorld, types) -> PartialWorld:
    """Replace the numbered objects of ``types`` by distinct identifiers."""
    ids: dict = {}

    def sub(v):
        if v.__class__ is NonGuaranteedObject and v.type_name in types:
            return ids.setdefault(v, Identifier(v.type_name, f"Z{v.index}"))
        return v

    vals = {}
    for var, val in state.values.items():
        if var.__class__ is FuncAppVar:
            var = FuncAppVar(var.func, tuple(sub(a) for a in var.args))
        vals[var] = sub(val)
    return PartialWorld(state.model, vals, identifier_types=tuple(types), check=False)


def is_grounded(world) -> bool:
    return check_identifiers_grounded(world)[0]


def contradictory(a: dict, b: dict) -> bool:
    """True when some variable instantiated by both takes different values."""
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    for var, val in small.items():
        other = large.get(var, MISSING)
        if other is not MISSING and not (other is val or (type(other) is type(val) and other == val)):
            return True
    return False
