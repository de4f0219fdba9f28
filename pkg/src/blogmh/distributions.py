"""Elementary conditional distributions.

Each distribution instance is fully parameterized: it gives the log mass of
a value, draws forward samples from a numpy ``Generator`` and, when the
support is finite and small, lists it.  Instances are built fresh by every
dependency evaluation.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from itertools import accumulate, product
from typing import Any, Iterable, Sequence

import numpy as np

from .values import NULL, GuaranteedObject, Identifier, NonGuaranteedObject

__all__ = [
    "Distribution",
    "PointMass",
    "Categorical",
    "Bernoulli",
    "UniformOverObjects",
    "UniformInt",
    "Poisson",
    "Geometric",
    "NoisyCopy",
    "TokenStringModel",
    "StringConcatFormat",
    "Fresh",
    "SUPPORT_CAP",
]

NEG_INF = -math.inf
#: Largest finite support that ``support()`` will materialize.
SUPPORT_CAP = 100_000


class Fresh:
    """Marker returned by abstract uniform sampling: a not-yet-used identifier."""

    __slots__ = ("type_name",)

    def __init__(self, type_name: str):
        self.type_name = type_name

    def __repr__(self) -> str:
        return f"Fresh({self.type_name})"


def _safe_log(p: float) -> float:
    return math.log(p) if p > 0.0 else NEG_INF


class Distribution:
    __slots__ = ()

    def log_prob(self, value: Any) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> Any:
        raise NotImplementedError

    def support(self) -> list | None:
        """Values of positive mass, or None if infinite or too large."""
        return None

    def items(self) -> Iterable[tuple[Any, float]]:
        sup = self.support()
        if sup is None:
            raise ValueError(f"{self!r} has no finite support")
        for v in sup:
            lp = self.log_prob(v)
            if lp > NEG_INF:
                yield v, lp


class PointMass(Distribution):
    __slots__ = ("value",)

    def __init__(self, value: Any):
        self.value = value

    def log_prob(self, value):
        v = self.value
        if value is v or (type(value) is type(v) and value == v):
            return 0.0
        return NEG_INF

    def sample(self, rng):
        return self.value

    def support(self):
        return [self.value]

    def __eq__(self, other):
        return isinstance(other, PointMass) and _same_value(self.value, other.value)

    def __repr__(self):
        return f"PointMass({self.value!r})"


def _same_value(a, b) -> bool:
    return a is b or (type(a) is type(b) and a == b)


class Categorical(Distribution):
    """Finite distribution given by a value -> weight map (weights normalized)."""

    __slots__ = ("values", "probs", "_lookup", "_cum")

    def __init__(self, weights: dict):
        total = float(sum(weights.values()))
        if total <= 0 or any(w < 0 for w in weights.values()):
            raise ValueError("Categorical weights must be nonnegative with positive sum")
        self.values = list(weights)
        self.probs = [w / total for w in weights.values()]
        self._lookup = {(type(v), v): p for v, p in zip(self.values, self.probs)}
        self._cum = list(accumulate(self.probs))

    def log_prob(self, value):
        return _safe_log(self._lookup.get((type(value), value), 0.0))

    def sample(self, rng):
        i = bisect_right(self._cum, rng.random() * self._cum[-1])
        return self.values[min(i, len(self.values) - 1)]

    def support(self):
        return [v for v, p in zip(self.values, self.probs) if p > 0]

    def __eq__(self, other):
        return isinstance(other, Categorical) and self._lookup == other._lookup

    def __repr__(self):
        return f"Categorical({dict(zip(self.values, self.probs))!r})"


class Bernoulli(Distribution):
    __slots__ = ("p",)

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Bernoulli parameter out of range: {p}")
        self.p = float(p)

    def log_prob(self, value):
        if value is True:
            return _safe_log(self.p)
        if value is False:
            return _safe_log(1.0 - self.p)
        return NEG_INF

    def sample(self, rng):
        return bool(rng.random() < self.p)

    def support(self):
        return [v for v, p in ((True, self.p), (False, 1.0 - self.p)) if p > 0]

    def __eq__(self, other):
        return isinstance(other, Bernoulli) and self.p == other.p

    def __repr__(self):
        return f"Bernoulli({self.p})"


class UniformOverObjects(Distribution):
    """Uniform over the guaranteed and the ``count`` numbered objects of a type.

    In a world that represents the type with identifiers, a value may be any
    identifier; sampling then returns either one of the identifiers already in
    ``pool`` (each with mass 1/N) or a ``Fresh`` marker with mass (count - m)/N.
    """

    __slots__ = ("type_name", "guaranteed", "count", "pool", "_n")

    def __init__(self, type_name: str, guaranteed: Sequence[GuaranteedObject], count: int,
                 pool: Any = None):
        self.type_name = type_name
        self.guaranteed = guaranteed
        self.count = int(count)
        self.pool = pool  # None (concrete) or a view whose pool_ids lists the identifiers
        self._n = len(guaranteed) + self.count

    @property
    def size(self) -> int:
        return self._n

    def log_prob(self, value):
        n = self._n
        if n == 0:
            return 0.0 if value is NULL else NEG_INF
        cls = value.__class__
        if cls is Identifier:
            return -math.log(n) if value.type_name == self.type_name and self.pool is not None else NEG_INF
        if cls is NonGuaranteedObject:
            if value.type_name == self.type_name and value.index <= self.count and self.pool is None:
                return -math.log(n)
            return NEG_INF
        if cls is GuaranteedObject:
            return -math.log(n) if value in self.guaranteed else NEG_INF
        return NEG_INF

    def sample(self, rng):
        n = self._n
        if n == 0:
            return NULL
        u = int(rng.integers(n))
        g = len(self.guaranteed)
        if u < g:
            return self.guaranteed[u]
        k = u - g
        if self.pool is None:
            return NonGuaranteedObject(self.type_name, k + 1)
        ids = self.pool.pool_ids(self.type_name)
        if k < len(ids):
            return ids[k]
        return Fresh(self.type_name)

    def choice_log_mass(self, value: Any, pool_ids: Sequence[Identifier] | None = None) -> float:
        """Log probability that ``sample`` returns ``value``.

        For identifiers not in the pool this is the mass of drawing a fresh one.
        """
        if self.pool is None or value.__class__ is not Identifier:
            return self.log_prob(value)
        ids = self.pool.pool_ids(self.type_name) if pool_ids is None else pool_ids
        if value in ids:
            return -math.log(self._n)
        free = self.count - len(ids)
        return _safe_log(free / self._n) if self._n else NEG_INF

    def fresh_log_mass(self, m: int) -> float:
        """Log probability of drawing an identifier outside a pool of ``m``."""
        return _safe_log((self.count - m) / self._n) if self._n else NEG_INF

    def support(self):
        if self.pool is not None:
            return None
        if self._n == 0:
            return [NULL]
        return list(self.guaranteed) + [
            NonGuaranteedObject(self.type_name, k) for k in range(1, self.count + 1)
        ]

    def __eq__(self, other):
        return (isinstance(other, UniformOverObjects) and self.type_name == other.type_name
                and self.count == other.count and tuple(self.guaranteed) == tuple(other.guaranteed)
                and (self.pool is None) == (other.pool is None))

    def __repr__(self):
        mode = "identifiers" if self.pool is not None else "concrete"
        return f"UniformOverObjects({self.type_name}, n={self._n}, {mode})"


class UniformInt(Distribution):
    __slots__ = ("lo", "hi")

    def __init__(self, lo: int, hi: int):
        if hi < lo:
            raise ValueError(f"empty UniformInt range [{lo}, {hi}]")
        self.lo, self.hi = int(lo), int(hi)

    def log_prob(self, value):
        if type(value) is int and self.lo <= value <= self.hi:
            return -math.log(self.hi - self.lo + 1)
        return NEG_INF

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def support(self):
        return list(range(self.lo, self.hi + 1))

    def __eq__(self, other):
        return isinstance(other, UniformInt) and (self.lo, self.hi) == (other.lo, other.hi)

    def __repr__(self):
        return f"UniformInt({self.lo}, {self.hi})"


class Poisson(Distribution):
    __slots__ = ("lam",)

    def __init__(self, lam: float):
        if lam <= 0:
            raise ValueError("Poisson rate must be positive")
        self.lam = float(lam)

    def log_prob(self, value):
        if type(value) is not int or value < 0:
            return NEG_INF
        return value * math.log(self.lam) - self.lam - math.lgamma(value + 1)

    def sample(self, rng):
        return int(rng.poisson(self.lam))

    def __eq__(self, other):
        return isinstance(other, Poisson) and self.lam == other.lam

    def __repr__(self):
        return f"Poisson({self.lam})"


class Geometric(Distribution):
    """Number of failures before the first success: P(k) = p (1-p)^k, k >= 0."""

    __slots__ = ("p",)

    def __init__(self, p: float):
        if not 0.0 < p <= 1.0:
            raise ValueError("Geometric parameter must lie in (0, 1]")
        self.p = float(p)

    def log_prob(self, value):
        if type(value) is not int or value < 0:
            return NEG_INF
        if self.p == 1.0:
            return 0.0 if value == 0 else NEG_INF
        return math.log(self.p) + value * math.log1p(-self.p)

    def sample(self, rng):
        return int(rng.geometric(self.p)) - 1

    def support(self):
        return [0] if self.p == 1.0 else None

    def __eq__(self, other):
        return isinstance(other, Geometric) and self.p == other.p

    def __repr__(self):
        return f"Geometric({self.p})"


class NoisyCopy(Distribution):
    """Boolean copy of ``source`` with probability ``fidelity``, flipped otherwise."""

    __slots__ = ("source", "fidelity")

    def __init__(self, source: bool, fidelity: float):
        if not isinstance(source, bool):
            raise TypeError("NoisyCopy source must be Boolean")
        if not 0.0 <= fidelity <= 1.0:
            raise ValueError("NoisyCopy fidelity out of range")
        self.source = source
        self.fidelity = float(fidelity)

    def log_prob(self, value):
        if value is self.source:
            return _safe_log(self.fidelity)
        if value is (not self.source):
            return _safe_log(1.0 - self.fidelity)
        return NEG_INF

    def sample(self, rng):
        return self.source if rng.random() < self.fidelity else (not self.source)

    def support(self):
        out = []
        if self.fidelity > 0:
            out.append(self.source)
        if self.fidelity < 1:
            out.append(not self.source)
        return out

    def __eq__(self, other):
        return (isinstance(other, NoisyCopy) and self.source is other.source
                and self.fidelity == other.fidelity)

    def __repr__(self):
        return f"NoisyCopy({self.source}, {self.fidelity})"


class TokenStringModel(Distribution):
    """Strings of space-separated vocabulary tokens.

    Without a source this is a prior: the token count L >= 1 has mass
    p (1-p)^(L-1) and each token is uniform over the vocabulary.  With a
    source string it is an observation model that keeps the token count and
    replaces each token, with probability ``eps``, by a uniform vocabulary
    token.
    """

    __slots__ = ("vocab", "p", "eps", "source", "_vocab_set", "_log_v", "_lk", "_ls")

    def __init__(self, vocab: Sequence[str], p: float, eps: float, source: str | None = None):
        if not vocab:
            raise ValueError("TokenStringModel needs a nonempty vocabulary")
        if not 0.0 < p <= 1.0:
            raise ValueError("length parameter p must lie in (0, 1]")
        if not 0.0 <= eps <= 1.0:
            raise ValueError("corruption eps out of range")
        self.vocab = tuple(vocab)
        self.p = float(p)
        self.eps = float(eps)
        self.source = source
        self._vocab_set = frozenset(self.vocab)
        self._log_v = math.log(len(self._vocab_set))
        pv = self.eps / len(self._vocab_set)
        # per-token log masses: observed token equals the source token / differs from it
        self._lk = _safe_log(1.0 - self.eps + pv)
        self._ls = _safe_log(pv)

    def with_source(self, source: str | None) -> "TokenStringModel":
        """The same model (vocabulary, p, eps) with another source string."""
        d = object.__new__(TokenStringModel)
        for k in self.__slots__:
            setattr(d, k, getattr(self, k))
        d.source = source
        return d

    def _token_log_mass(self, obs: str, src: str) -> float:
        pv = (self.eps / len(self._vocab_set)) if obs in self._vocab_set else 0.0
        keep = (1.0 - self.eps) if obs == src else 0.0
        return _safe_log(keep + pv)

    def log_prob(self, value):
        if not isinstance(value, str):
            return NEG_INF
        if self.source is None:
            if not value:
                return NEG_INF
            toks = value.split(" ")
            if any(t not in self._vocab_set for t in toks):
                return NEG_INF
            n = len(toks)
            return math.log(self.p) + (n - 1) * _log1m(self.p) - n * self._log_v
        if not self.source:
            return 0.0 if value == "" else NEG_INF
        if value == self.source:
            vs = self._vocab_set
            src = self.source.split(" ")
            if all(t in vs for t in src):
                return len(src) * self._lk
        src = self.source.split(" ")
        obs = value.split(" ") if value else []
        if len(obs) != len(src):
            return NEG_INF
        total = 0.0
        for o, s in zip(obs, src):
            total += self._token_log_mass(o, s)
            if total == NEG_INF:
                break
        return total

    def sample(self, rng):
        if self.source is None:
            n = int(rng.geometric(self.p))
            idx = rng.integers(len(self.vocab), size=n)
            return " ".join(self.vocab[i] for i in idx)
        if not self.source:
            return ""
        out = []
        for s in self.source.split(" "):
            if rng.random() < self.eps:
                out.append(self.vocab[int(rng.integers(len(self.vocab)))])
            else:
                out.append(s)
        return " ".join(out)

    def support(self):
        if self.source is None:
            return None
        if not self.source:
            return [""]
        src = self.source.split(" ")
        options = []
        for s in src:
            opts = list(dict.fromkeys(([s] if self.eps < 1 else []) + (list(self.vocab) if self.eps > 0 else [])))
            options.append(opts)
        size = math.prod(len(o) for o in options)
        if size > SUPPORT_CAP:
            return None
        vals = [" ".join(c) for c in product(*options)]
        return [v for v in vals if self.log_prob(v) > NEG_INF]

    def __eq__(self, other):
        return (isinstance(other, TokenStringModel) and self.vocab == other.vocab
                and (self.p, self.eps, self.source) == (other.p, other.eps, other.source))

    def __repr__(self):
        src = "" if self.source is None else f", source={self.source!r}"
        return f"TokenStringModel(|V|={len(self.vocab)}, p={self.p}, eps={self.eps}{src})"


def _log1m(p: float) -> float:
    return math.log1p(-p) if p < 1.0 else NEG_INF


class StringConcatFormat(Distribution):
    """Join the nonempty components; each separator is ``sep`` w.p. 1-eps, else ``alt``."""

    __slots__ = ("components", "sep", "alt", "eps")

    def __init__(self, components: Sequence[str], sep: str, alt: str, eps: float):
        if sep == alt:
            raise ValueError("separator and its corrupted alternative must differ")
        if not 0.0 <= eps <= 1.0:
            raise ValueError("separator corruption eps out of range")
        self.components = [c for c in components if c]
        self.sep = sep
        self.alt = alt
        self.eps = float(eps)

    def log_prob(self, value):
        if not isinstance(value, str):
            return NEG_INF
        comps = self.components
        if not comps:
            return 0.0 if value == "" else NEG_INF
        if not value.startswith(comps[0]):
            return NEG_INF
        return self._match(value, len(comps[0]), 1)

    def _match(self, value: str, pos: int, i: int) -> float:
        comps = self.components
        if i == len(comps):
            return 0.0 if pos == len(value) else NEG_INF
        best = []
        for s, lp in ((self.sep, _safe_log(1.0 - self.eps)), (self.alt, _safe_log(self.eps))):
            if lp == NEG_INF or not value.startswith(s, pos):
                continue
            nxt = pos + len(s)
            if value.startswith(comps[i], nxt):
                rest = self._match(value, nxt + len(comps[i]), i + 1)
                if rest > NEG_INF:
                    best.append(lp + rest)
        if not best:
            return NEG_INF
        if len(best) == 1:
            return best[0]
        m = max(best)
        return m + math.log(sum(math.exp(b - m) for b in best))

    def sample(self, rng):
        comps = self.components
        if not comps:
            return ""
        out = [comps[0]]
        for c in comps[1:]:
            out.append(self.alt if rng.random() < self.eps else self.sep)
            out.append(c)
        return "".join(out)

    def support(self):
        comps = self.components
        if not comps:
            return [""]
        seps = [s for s, w in ((self.sep, 1 - self.eps), (self.alt, self.eps)) if w > 0]
        vals = []
        for choice in product(seps, repeat=len(comps) - 1):
            parts = [comps[0]]
            for s, c in zip(choice, comps[1:]):
                parts.append(s)
                parts.append(c)
            vals.append("".join(parts))
        return list(dict.fromkeys(vals))

    def __eq__(self, other):
        return (isinstance(other, StringConcatFormat) and self.components == other.components
                and (self.sep, self.alt, self.eps) == (other.sep, other.alt, other.eps))

    def __repr__(self):
        return f"StringConcatFormat({self.components!r}, sep={self.sep!r}, alt={self.alt!r}, eps={self.eps})"
