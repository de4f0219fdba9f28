"""Partial worlds, patches, and the probability of partial instantiations.

A :class:`PartialWorld` maps basic variables to values.  Each user type is
represented either concretely, by numbered objects ``(Pub, 3)``, or
abstractly, by identifiers ``Pub@1A``; never both.  Identifiers in use form a
per-type pool kept up to date from reference counts.

All edits go through a :class:`WorldPatch`, a difference layer that reads
through to its base and is applied or discarded in time proportional to the
number of edits.
"""

from __future__ import annotations

import math
from collections import deque
from itertools import permutations
from typing import Iterable, Mapping

from .model import Model, _Unsupported
from .rng import Stream
from .values import MISSING, UNSUPPORTED, FuncAppVar, Identifier, NonGuaranteedObject, NumberVar, format_value

__all__ = [
    "UNINSTANTIATED",
    "ContractError",
    "UngroundedIdentifierError",
    "PartialWorld",
    "WorldPatch",
    "log_perm",
    "is_self_supporting",
    "is_minimal_beyond",
    "active_ancestors",
    "prune_to_minimal",
    "log_prob_concrete",
    "log_prob_abstract",
    "check_identifiers_grounded",
    "enumerate_concrete_versions",
    "format_world",
    "identifier_adjustment",
]

#: What ``get`` returns for a variable with no value.
UNINSTANTIATED = MISSING
NEG_INF = -math.inf


class ContractError(Exception):
    """A state violates a precondition (self-support, evidence, grounding...)."""


class UngroundedIdentifierError(ContractError):
    def __init__(self, identifiers):
        self.identifiers = list(identifiers)
        names = ", ".join(repr(i) for i in self.identifiers)
        super().__init__(f"identifiers not grounded by any term: {names}")


# -------------------------------------------------------------- factorials

_LOG_PREFIX = [0.0]  # _LOG_PREFIX[k] = log k!


def _log_factorial(n: int) -> float:
    while len(_LOG_PREFIX) <= n:
        _LOG_PREFIX.append(_LOG_PREFIX[-1] + math.log(len(_LOG_PREFIX)))
    return _LOG_PREFIX[n]


def log_perm(n: int, m: int) -> float:
    """log(n! / (n-m)!), or -inf when m > n."""
    if m > n:
        return NEG_INF
    if m == 0:
        return 0.0
    return _log_factorial(n) - _log_factorial(n - m)


# ------------------------------------------------------------------- world


def _ids_in(var, value):
    if var.__class__ is FuncAppVar:
        for a in var.args:
            if a.__class__ is Identifier:
                yield a
    if value.__class__ is Identifier:
        yield value


class PartialWorld:
    """A (possibly abstract) partial instantiation.

    ``values`` seeds the world; afterwards mutate it only through patches.
    ``identifier_types`` lists the types represented by identifiers; by
    default, the types of identifiers found in ``values``.
    """

    def __init__(self, model: Model, values: Mapping | None = None,
                 identifier_types: Iterable[str] | None = None, seed: int = 0, check: bool = True):
        self.model = model
        self.values: dict = {}
        self._keys: list = []  # indexable copy of the variable set
        self._slot: dict = {}
        self._refs: dict[Identifier, int] = {}
        self._vrefs: dict[Identifier, int] = {}
        self._pools: dict[str, dict[Identifier, None]] = {}
        self.version = 0
        #: elements touched by apply/discard, for cost accounting
        self.op_count = 0
        self._mint_counter = 0
        self._mint_rng = Stream(seed)
        values = dict(values or {})
        if identifier_types is None:
            identifier_types = {i.type_name for var, val in values.items() for i in _ids_in(var, val)}
        self.identifier_types = frozenset(identifier_types)
        for var, val in values.items():
            if check:
                self._check(var, val)
            self.values[var] = val
            self._index_add(var)
            self._add_refs(var, val, 1)

    def _index_add(self, var):
        self._slot[var] = len(self._keys)
        self._keys.append(var)

    def _index_del(self, var):
        k = self._slot.pop(var)
        last = self._keys.pop()
        if k < len(self._keys):
            self._keys[k] = last
            self._slot[last] = k

    def var_at(self, k: int):
        """The ``k``-th instantiated variable in an arbitrary but deterministic order."""
        return self._keys[k]

    def _check(self, var, value):
        self.model.check_var(var)
        self.model.check_value(var, value)
        for obj in list(getattr(var, "args", ())) + [value]:
            cls = obj.__class__
            if cls is Identifier and obj.type_name not in self.identifier_types:
                raise ValueError(f"identifier {obj!r} used for concretely represented type")
            if cls is NonGuaranteedObject and obj.type_name in self.identifier_types:
                raise ValueError(f"numbered object {obj!r} used for identifier-represented type")

    def _add_refs(self, var, value, sign):
        for i in _ids_in(var, value):
            c = self._refs.get(i, 0) + sign
            if c:
                self._refs[i] = c
                if c == sign == 1:
                    self._pools.setdefault(i.type_name, {})[i] = None
            else:
                del self._refs[i]
                del self._pools[i.type_name][i]
        if value.__class__ is Identifier:
            c = self._vrefs.get(value, 0) + sign
            if c:
                self._vrefs[value] = c
            else:
                del self._vrefs[value]

    # view protocol
    def get(self, var):
        return self.values.get(var, MISSING)

    def __contains__(self, var) -> bool:
        return var in self.values

    def __len__(self) -> int:
        return len(self.values)

    def uses_identifiers(self, type_name: str) -> bool:
        return type_name in self.identifier_types

    def pool_ids(self, type_name: str) -> list:
        return list(self._pools.get(type_name, ()))

    def pool_size(self, type_name: str) -> int:
        return len(self._pools.get(type_name, ()))

    def identifiers(self) -> list:
        return [i for pool in self._pools.values() for i in pool]

    def value_refs(self, ident: Identifier) -> int:
        return self._vrefs.get(ident, 0)

    def patch(self) -> "WorldPatch":
        return WorldPatch(self)

    def copy(self) -> "PartialWorld":
        w = PartialWorld(self.model, self.values, self.identifier_types, check=False)
        w._mint_counter = self._mint_counter
        return w

    def _next_token(self) -> str:
        self._mint_counter += 1
        suffix = int(self._mint_rng.integers(16 ** 3))
        return f"{self._mint_counter:X}{suffix:03X}"

    def __repr__(self) -> str:
        return f"PartialWorld({len(self.values)} vars)"


class WorldPatch:
    """A difference layer over a base world."""

    def __init__(self, base: PartialWorld):
        self.base = base
        self.changed: dict = {}
        self.removed: dict = {}  # ordered set
        self._dref: dict[Identifier, int] = {}
        self._dvref: dict[Identifier, int] = {}
        self.version = 0
        self._pool_cache: dict = {}
        self._pool_version = -1
        #: number of set / remove calls
        self.n_set = 0
        self.n_remove = 0
        #: elements touched by apply/discard
        self.op_count = 0

    @property
    def model(self) -> Model:
        return self.base.model

    def __len__(self) -> int:
        return len(self.changed) + len(self.removed)

    def is_empty(self) -> bool:
        return not self.changed and not self.removed

    # view protocol
    def get(self, var):
        v = self.changed.get(var, MISSING)
        if v is not MISSING:
            return v
        if var in self.removed:
            return MISSING
        return self.base.values.get(var, MISSING)

    def __contains__(self, var) -> bool:
        return self.get(var) is not MISSING

    def uses_identifiers(self, type_name: str) -> bool:
        return type_name in self.base.identifier_types

    @property
    def identifier_types(self):
        return self.base.identifier_types

    def pool_ids(self, type_name: str) -> list:
        if self._pool_version != self.version:
            self._pool_cache = {}
            self._pool_version = self.version
        ids = self._pool_cache.get(type_name)
        if ids is None:
            base_pool = self.base._pools.get(type_name, {})
            dref = self._dref
            if not dref:
                ids = list(base_pool)
            else:
                refs = self.base._refs
                ids = [i for i in base_pool if refs[i] + dref.get(i, 0) > 0]
                ids.extend(i for i, d in dref.items()
                           if d > 0 and i.type_name == type_name and i not in refs)
            self._pool_cache[type_name] = ids
        return ids

    def pool_size(self, type_name: str) -> int:
        m = len(self.base._pools.get(type_name, ()))
        refs = self.base._refs
        for i, d in self._dref.items():
            if d and i.type_name == type_name:
                c = refs.get(i, 0)
                if c == 0:
                    if d > 0:
                        m += 1
                elif c + d == 0:
                    m -= 1
        return m

    def value_refs(self, ident: Identifier) -> int:
        return self.base._vrefs.get(ident, 0) + self._dvref.get(ident, 0)

    def refs(self, ident: Identifier) -> int:
        return self.base._refs.get(ident, 0) + self._dref.get(ident, 0)

    def mint(self, type_name: str) -> Identifier:
        """A new identifier for ``type_name``; it joins the pool once referenced."""
        if type_name not in self.base.identifier_types:
            raise ValueError(f"type {type_name} is represented concretely")
        while True:
            ident = Identifier(type_name, self.base._next_token())
            if self.refs(ident) == 0:
                return ident

    # edits
    def _delta(self, var, value, sign):
        if var.__class__ is FuncAppVar:
            for a in var.args:
                if a.__class__ is Identifier:
                    self._dref[a] = self._dref.get(a, 0) + sign
        if value.__class__ is Identifier:
            self._dref[value] = self._dref.get(value, 0) + sign
            self._dvref[value] = self._dvref.get(value, 0) + sign

    def set(self, var, value, check: bool = True):
        if check:
            self.base._check(var, value)
        old = self.get(var)
        if old is not MISSING:
            if old is value:
                return
            self._delta(var, old, -1)
            self._delta(var, value, 1)
        else:
            self._delta(var, value, 1)
        self.removed.pop(var, None)
        self.changed[var] = value
        self.n_set += 1
        self.version += 1

    def remove(self, var):
        old = self.get(var)
        if old is MISSING:
            return
        self._delta(var, old, -1)
        self.changed.pop(var, None)
        if var in self.base.values:
            self.removed[var] = None
        self.n_remove += 1
        self.version += 1

    def added(self) -> list:
        """Variables instantiated by the patch but not by the base."""
        bv = self.base.values
        return [v for v in self.changed if v not in bv]

    def apply(self) -> PartialWorld:
        base = self.base
        vals = base.values
        refs, vrefs, pools = base._refs, base._vrefs, base._pools
        for var in self.removed:
            del vals[var]
            base._index_del(var)
        for var, val in self.changed.items():
            if var not in vals:
                base._index_add(var)
            vals[var] = val
        for i, d in self._dref.items():
            if not d:
                continue
            c = refs.get(i, 0)
            n = c + d
            if n:
                refs[i] = n
                if not c:
                    pools.setdefault(i.type_name, {})[i] = None
            else:
                del refs[i]
                del pools[i.type_name][i]
        for i, d in self._dvref.items():
            if d:
                n = vrefs.get(i, 0) + d
                if n:
                    vrefs[i] = n
                else:
                    del vrefs[i]
        work = len(self.changed) + len(self.removed) + len(self._dref) + len(self._dvref)
        base.op_count += work
        base.version += 1
        self.op_count += work
        self._clear()
        return base

    def discard(self):
        self.op_count += len(self.changed) + len(self.removed) + len(self._dref) + len(self._dvref)
        self._clear()

    def _clear(self):
        self.changed.clear()
        self.removed.clear()
        self._dref.clear()
        self._dvref.clear()
        self.version += 1

    def items(self):
        """All instantiated ``(var, value)`` pairs of the patched state (linear time)."""
        rem, ch = self.removed, self.changed
        for var, val in self.base.values.items():
            if var not in rem and var not in ch:
                yield var, val
        yield from ch.items()

    def materialize(self) -> PartialWorld:
        """An independent world equal to the patched state."""
        w = PartialWorld(self.base.model, dict(self.items()), self.base.identifier_types, check=False)
        w._mint_counter = self.base._mint_counter
        return w


# ---------------------------------------------------------- predicates


def _items(world):
    if isinstance(world, WorldPatch):
        return list(world.items())
    return list(world.values.items())


def _trace(model, world, var):
    reads: list = []
    try:
        dist = model.dependency(world, var, reads)
    except _Unsupported:
        return UNSUPPORTED, reads
    return dist, reads


def is_self_supporting(world, scope: Iterable | None = None) -> bool:
    model = world.model
    vars_ = [v for v, _ in _items(world)] if scope is None else list(scope)
    for v in vars_:
        if world.get(v) is MISSING:
            continue
        dist, _ = _trace(model, world, v)
        if dist is UNSUPPORTED:
            return False
    return True


def _core_reads(world, core_terms):
    reads: list = []
    for t in core_terms:
        r: list = []
        try:
            t.ev(world, (), r)
        except _Unsupported:
            raise ContractError(f"core term is not supported by the state: reads {r!r}")
        reads.extend(r)
    return reads


def active_ancestors(world, core: Iterable, core_terms: Iterable = ()) -> set:
    """Instantiated core variables plus all their transitive active parents."""
    model = world.model
    seen: dict = {}
    todo = deque(v for v in core if world.get(v) is not MISSING)
    todo.extend(_core_reads(world, core_terms))
    while todo:
        v = todo.popleft()
        if v in seen:
            continue
        seen[v] = None
        dist, reads = _trace(model, world, v)
        if dist is UNSUPPORTED:
            raise ContractError(f"{v!r} is not supported by the state")
        todo.extend(reads)
    return set(seen)


def is_minimal_beyond(world, core: Iterable, core_terms: Iterable = ()) -> bool:
    if not is_self_supporting(world):
        raise ContractError("minimality is only defined for self-supporting states")
    keep = active_ancestors(world, core, core_terms)
    return all(v in keep for v, _ in _items(world))


def prune_to_minimal(patch: WorldPatch, core: Iterable, core_terms: Iterable = ()) -> list:
    """Remove every variable that is neither core nor an active ancestor of core.

    Returns the removed variables.  Linear in the state size; the engine uses
    an incremental version driven by its child graph.
    """
    keep = active_ancestors(patch, core, core_terms)
    doomed = [v for v, _ in _items(patch) if v not in keep]
    for v in doomed:
        patch.remove(v)
    return doomed


def log_prob_concrete(world) -> float:
    """Sum of log factors of every instantiated variable."""
    model = world.model
    total = 0.0
    for var, val in _items(world):
        dist, _ = _trace(model, world, var)
        if dist is UNSUPPORTED:
            raise ContractError(f"{var!r} is not supported by the state")
        lp = dist.log_prob(val)
        if lp == NEG_INF:
            return NEG_INF
        total += lp
    return total


def check_identifiers_grounded(world):
    """Returns ``(grounded, witness)``.

    ``witness`` maps each grounded identifier to a variable whose value it
    is, listed in grounding order; an identifier is grounded once it is the
    value of a variable whose identifier arguments are all grounded.
    """
    pending = {i: None for i in (world.identifiers() if hasattr(world, "identifiers")
                                 else _patch_identifiers(world))}
    witness: dict = {}
    by_value: dict = {}
    for var, val in _items(world):
        if val.__class__ is Identifier and val in pending:
            by_value.setdefault(val, []).append(var)
    progress = True
    while pending and progress:
        progress = False
        for i in list(pending):
            for var in by_value.get(i, ()):
                if all(a.__class__ is not Identifier or a in witness for a in getattr(var, "args", ())):
                    witness[i] = var
                    del pending[i]
                    progress = True
                    break
    if pending:
        return False, list(pending)
    return True, witness


def _patch_identifiers(patch: WorldPatch):
    return [i for t in sorted(patch.identifier_types) for i in patch.pool_ids(t)]


def identifier_adjustment(world) -> float:
    """Sum over identifier-represented types of log(n P m)."""
    total = 0.0
    for t in sorted(world.identifier_types):
        m = world.pool_size(t)
        if m == 0:
            continue
        n = world.get(NumberVar(t))
        if n is MISSING:
            raise ContractError(f"#{t} must be instantiated when identifiers of {t} are in use")
        total += log_perm(n, m)
    return total


def log_prob_abstract(world) -> float:
    """Probability of the event of an abstract world: concrete product plus log nPm terms."""
    ok, bad = check_identifiers_grounded(world)
    if not ok:
        raise UngroundedIdentifierError(bad)
    adj = identifier_adjustment(world)
    if adj == NEG_INF:
        return NEG_INF
    pc = log_prob_concrete(world)
    return pc + adj if pc > NEG_INF else NEG_INF


def _substitute(value, h):
    if value.__class__ is Identifier:
        return h[value]
    return value


def enumerate_concrete_versions(world) -> list:
    """One ``(mapping, concrete world)`` per injective identifier mapping."""
    types = sorted(world.identifier_types)
    per_type = []
    for t in types:
        ids = world.pool_ids(t)
        if not ids:
            per_type.append([{}])
            continue
        n = world.get(NumberVar(t))
        if n is MISSING:
            raise ContractError(f"#{t} must be instantiated")
        objs = [NonGuaranteedObject(t, k) for k in range(1, n + 1)]
        per_type.append([dict(zip(ids, p)) for p in permutations(objs, len(ids))])
    out = []
    items = _items(world)

    def rec(k, h):
        if k == len(per_type):
            vals = {}
            for var, val in items:
                if var.__class__ is FuncAppVar:
                    var = FuncAppVar(var.func, tuple(_substitute(a, h) for a in var.args))
                vals[var] = _substitute(val, h)
            out.append((dict(h), PartialWorld(world.model, vals, (), check=False)))
            return
        for m in per_type[k]:
            rec(k + 1, {**h, **m})

    rec(0, {})
    return out


def format_world(world) -> str:
    """Sorted ``var = value`` lines."""
    lines = sorted(f"{var!r} = {format_value(val)}" for var, val in _items(world))
    return "\n".join(lines)
