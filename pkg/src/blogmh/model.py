"""In-memory relational models and evaluation of dependency statements.

A dependency statement is never turned into an explicit CPD tree.  Its
guards and clause parameters are evaluated against a world view, and the
variables read along the way are the active parents of the variable being
evaluated.

A *view* is any object with

* ``get(var)`` returning the value of a basic variable or ``MISSING``;
* ``uses_identifiers(type_name)`` telling whether the type is represented by
  identifiers;
* ``pool_ids(type_name)`` listing the identifiers currently in use.

``PartialWorld`` and ``WorldPatch`` are views; ``DictView`` wraps a plain
mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from . import distributions as D
from .values import (
    BUILTIN_TYPES,
    MISSING,
    NULL,
    UNSUPPORTED,
    FuncAppVar,
    GuaranteedObject,
    Identifier,
    NumberVar,
    ObjectRef,
)

__all__ = [
    "ModelError",
    "SourceSpan",
    "ModelType",
    "FunctionSymbol",
    "Literal",
    "ParamRef",
    "ObjectConst",
    "FuncApp",
    "BuiltinApp",
    "Compare",
    "BoolOp",
    "Not",
    "MapLiteral",
    "TypeArg",
    "DistCall",
    "DistClause",
    "TermClause",
    "Branch",
    "TypeDecl",
    "GuaranteedDecl",
    "PriorDecl",
    "NumberStatement",
    "DependencyStatement",
    "Model",
    "DictView",
    "evaluate_term",
    "evaluate_dependency",
    "var_log_factor",
    "sample_dependency",
]


class ModelError(Exception):
    """A model-level inconsistency found during evaluation (signals a parser or type bug)."""


class _Unsupported(Exception):
    """Raised internally when a read hits an uninstantiated variable."""


_UNSUPPORTED_EXC = _Unsupported()


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


def _span():
    return field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class ModelType:
    name: str
    builtin: bool = False


@dataclass(frozen=True)
class FunctionSymbol:
    name: str
    arg_types: tuple
    return_type: str
    kind: str = "random"  # or "builtin"


# ---------------------------------------------------------------- terms


class Term:
    __slots__ = ()

    def ev(self, view, env, reads):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class Literal(Term):
    value: Any
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        return self.value

    def __eq__(self, other):
        return (isinstance(other, Literal) and type(self.value) is type(other.value)
                and self.value == other.value)

    def __hash__(self):
        return hash((type(self.value), self.value))


@dataclass(frozen=True)
class ParamRef(Term):
    name: str
    index: int
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        return env[self.index]


@dataclass(frozen=True)
class ObjectConst(Term):
    obj: GuaranteedObject
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        return self.obj


@dataclass(frozen=True)
class FuncApp(Term):
    """Application of a random function; reading it reads a basic variable."""

    func: str
    args: tuple
    arg_types: tuple = field(default=(), compare=False, repr=False)
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        if self.args:
            vals = []
            for a, t in zip(self.args, self.arg_types):
                v = a.ev(view, env, reads)
                if v is NULL:
                    return NULL
                if isinstance(v, ObjectRef) and v.type_name != t:
                    raise ModelError(
                        f"argument of {self.func} has type {v.type_name}, expected {t}")
                vals.append(v)
            var = FuncAppVar(self.func, tuple(vals))
        else:
            var = FuncAppVar(self.func, ())
        reads.append(var)
        val = view.get(var)
        if val is MISSING:
            raise _UNSUPPORTED_EXC
        return val


def _succ(n):
    return n + 1


def _pred(n):
    return n - 1 if n > 0 else NULL


BUILTIN_FUNCTIONS: dict[str, tuple[Callable, tuple, str]] = {
    "Succ": (_succ, ("NaturalNum",), "NaturalNum"),
    "Pred": (_pred, ("NaturalNum",), "NaturalNum"),
}


@dataclass(frozen=True)
class BuiltinApp(Term):
    func: str
    args: tuple
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        vals = [a.ev(view, env, reads) for a in self.args]
        if any(v is NULL for v in vals):
            return NULL
        return BUILTIN_FUNCTIONS[self.func][0](*vals)


def _values_equal(a, b) -> bool:
    return a is b or (type(a) is type(b) and a == b)


@dataclass(frozen=True)
class Compare(Term):
    op: str
    left: Term
    right: Term
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        a = self.left.ev(view, env, reads)
        b = self.right.ev(view, env, reads)
        op = self.op
        if op == "==":
            return _values_equal(a, b)
        if op == "!=":
            return not _values_equal(a, b)
        if a is NULL or b is NULL:
            return NULL
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b


@dataclass(frozen=True)
class BoolOp(Term):
    op: str  # "&" or "|"
    left: Term
    right: Term
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        a = self.left.ev(view, env, reads)
        if self.op == "&":
            if a is False:
                return False
            b = self.right.ev(view, env, reads)
            if a is NULL or b is NULL:
                return NULL if b is not False else False
            return b
        if a is True:
            return True
        b = self.right.ev(view, env, reads)
        if a is NULL or b is NULL:
            return NULL if b is not True else True
        return b


@dataclass(frozen=True)
class Not(Term):
    arg: Term
    span: SourceSpan | None = _span()

    def ev(self, view, env, reads):
        a = self.arg.ev(view, env, reads)
        return NULL if a is NULL else (not a)


# ------------------------------------------------------- distribution calls


@dataclass(frozen=True)
class MapLiteral:
    items: tuple  # ((key, weight), ...)
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class TypeArg:
    """``Pub`` or ``Pub p`` inside ``Uniform(...)``."""

    type_name: str
    var_name: str | None = None
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class DistCall:
    """``Name(arg, ..., key=value, ...)`` as written; ``Name`` is a kind or a prior."""

    name: str
    args: tuple = ()
    kwargs: tuple = ()  # ((key, literal value), ...)
    has_parens: bool = True
    span: SourceSpan | None = _span()


DIST_KINDS = (
    "Categorical", "Bernoulli", "UniformOverObjects", "Uniform", "UniformInt", "Poisson",
    "Geometric", "NoisyCopy", "TokenStringModel", "StringConcatFormat",
)


class DistFactory:
    """A distribution call with prior bindings resolved, ready to instantiate."""

    __slots__ = ("kind", "terms", "const_args", "kwargs", "type_name", "model", "_build", "_const",
                 "_template")

    def __init__(self, kind, const_args, terms, kwargs, type_name, model):
        self.kind = kind
        self.const_args = tuple(const_args)
        self.terms = tuple(terms)
        self.kwargs = dict(kwargs)
        self.type_name = type_name
        self.model = model
        self._build = getattr(self, "_make_" + ("UniformOverObjects" if kind == "Uniform" else kind))
        self._const = None
        self._template = None

    def make(self, view, env, reads):
        const = self._const
        if const is not None:
            return const
        if self.terms:
            vals = []
            for t in self.terms:
                v = t.ev(view, env, reads)
                if v is NULL:
                    return D.PointMass(NULL)
                vals.append(v)
            args = list(self.const_args) + vals
        else:
            args = list(self.const_args)
            dist = self._build(view, args, reads)
            if self.kind not in ("Uniform", "UniformOverObjects"):
                # no term parameters: the distribution is a constant of the model
                self._const = dist
            return dist
        return self._build(view, args, reads)

    def _arg(self, args, i, key, default=None):
        if key in self.kwargs:
            return self.kwargs[key]
        if i < len(args):
            return args[i]
        if default is not None:
            return default
        raise ModelError(f"{self.kind} is missing parameter {key!r}")

    def _make_Categorical(self, view, args, reads):
        return D.Categorical(self._arg(args, 0, "weights"))

    def _make_Bernoulli(self, view, args, reads):
        return D.Bernoulli(float(self._arg(args, 0, "p")))

    def _make_UniformOverObjects(self, view, args, reads):
        tau = self.type_name
        model = self.model
        if tau in model.number_statements:
            nvar = NumberVar(tau)
            reads.append(nvar)
            n = view.get(nvar)
            if n is MISSING:
                raise _UNSUPPORTED_EXC
        else:
            n = 0
        pool = view if view.uses_identifiers(tau) else None
        return D.UniformOverObjects(tau, model.guaranteed.get(tau, ()), n, pool)

    def _make_UniformInt(self, view, args, reads):
        return D.UniformInt(int(self._arg(args, 0, "lo")), int(self._arg(args, 1, "hi")))

    def _make_Poisson(self, view, args, reads):
        if "lambda" in self.kwargs:
            return D.Poisson(float(self.kwargs["lambda"]))
        return D.Poisson(float(self._arg(args, 0, "lam")))

    def _make_Geometric(self, view, args, reads):
        return D.Geometric(float(self._arg(args, 0, "p")))

    def _make_NoisyCopy(self, view, args, reads):
        return D.NoisyCopy(self._arg(args, 0, "source"), float(self._arg(args, 1, "fidelity")))

    def _make_TokenStringModel(self, view, args, reads):
        source = args[0] if args else None
        base = self._template
        if base is None:
            vocab = self.kwargs.get("vocab")
            if vocab is None:
                raise ModelError("TokenStringModel needs vocab=...")
            # the vocabulary, p and eps are model constants; only the source varies
            base = self._template = D.TokenStringModel(
                _vocab_tuple(vocab), float(self.kwargs.get("p", 0.5)), float(self.kwargs.get("eps", 0.05)))
        return base.with_source(source)

    def _make_StringConcatFormat(self, view, args, reads):
        return D.StringConcatFormat(args, self.kwargs.get("sep", " "), self.kwargs.get("alt", "; "),
                                    float(self.kwargs.get("eps", 0.05)))


_VOCAB_CACHE: dict[str, tuple] = {}


def _vocab_tuple(vocab: str) -> tuple:
    t = _VOCAB_CACHE.get(vocab)
    if t is None:
        t = tuple(dict.fromkeys(vocab.split()))
        _VOCAB_CACHE[vocab] = t
    return t


# ------------------------------------------------------------ statements


@dataclass(frozen=True)
class DistClause:
    call: DistCall
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class TermClause:
    term: Term
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class Branch:
    guard: Term | None  # None means an unconditional / else branch
    clause: DistClause | TermClause


@dataclass(frozen=True)
class TypeDecl:
    name: str
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class GuaranteedDecl:
    type_name: str
    names: tuple
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class PriorDecl:
    name: str
    call: DistCall
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class NumberStatement:
    type_name: str
    call: DistCall
    span: SourceSpan | None = _span()


@dataclass(frozen=True)
class DependencyStatement:
    """``random Ret F(T1 a1, ...) <branches>``.

    ``branches`` are tried in order; an argument tuple that matches none of
    them gets the null value with probability 1.
    """

    function: FunctionSymbol
    params: tuple
    branches: tuple
    span: SourceSpan | None = _span()


class _CompiledDependency:
    __slots__ = ("branches",)

    def __init__(self, branches):
        self.branches = branches  # list of (guard term or None, factory or term, is_term)


class Model:
    """A validated model.  Build one with :func:`blogmh.parser.parse_model`."""

    def __init__(self, decls: Sequence[Any]):
        self.decls = tuple(decls)
        self.types: dict[str, ModelType] = {t: ModelType(t, builtin=True) for t in BUILTIN_TYPES}
        self.guaranteed: dict[str, tuple] = {}
        self.objects_by_name: dict[str, GuaranteedObject] = {}
        self.priors: dict[str, PriorDecl] = {}
        self.number_statements: dict[str, NumberStatement] = {}
        self.dependencies: dict[str, DependencyStatement] = {}
        self.functions: dict[str, FunctionSymbol] = {}
        for d in self.decls:
            if isinstance(d, TypeDecl):
                self.types[d.name] = ModelType(d.name)
            elif isinstance(d, GuaranteedDecl):
                objs = tuple(GuaranteedObject(d.type_name, n) for n in d.names)
                self.guaranteed[d.type_name] = self.guaranteed.get(d.type_name, ()) + objs
                for o in objs:
                    self.objects_by_name[o.name] = o
            elif isinstance(d, PriorDecl):
                self.priors[d.name] = d
            elif isinstance(d, NumberStatement):
                self.number_statements[d.type_name] = d
            elif isinstance(d, DependencyStatement):
                self.dependencies[d.function.name] = d
                self.functions[d.function.name] = d.function
        self._number_factories = {
            t: self.compile_call(s.call, "NaturalNum") for t, s in self.number_statements.items()
        }
        self._compiled = {name: self._compile(dep) for name, dep in self.dependencies.items()}

    # structural equality ignores spans
    def __eq__(self, other):
        return isinstance(other, Model) and self.decls == other.decls

    def __hash__(self):
        return hash(self.decls)

    @property
    def user_types(self) -> list[str]:
        return [t for t, mt in self.types.items() if not mt.builtin]

    def compile_call(self, call: DistCall, expected_type: str | None = None) -> DistFactory:
        const_args: list = []
        kwargs: dict = {}
        kind = call.name
        if kind in self.priors:
            binding = self.priors[kind].call
            kind = binding.name
            const_args = [_const_arg(a) for a in binding.args]
            kwargs.update(binding.kwargs)
        kwargs.update(call.kwargs)
        terms = []
        type_name = None
        for a in call.args:
            if isinstance(a, TypeArg):
                type_name = a.type_name
            elif isinstance(a, MapLiteral):
                const_args.append(dict(a.items))
            else:
                terms.append(a)
        if kind in ("Uniform", "UniformOverObjects") and type_name is None:
            type_name = expected_type
        return DistFactory(kind, const_args, terms, kwargs, type_name, self)

    def _compile(self, dep: DependencyStatement) -> _CompiledDependency:
        rt = dep.function.return_type
        out = []
        for b in dep.branches:
            if isinstance(b.clause, DistClause):
                out.append((b.guard, self.compile_call(b.clause.call, rt), False))
            else:
                out.append((b.guard, b.clause.term, True))
        return _CompiledDependency(out)

    # ---------------------------------------------------------- evaluation

    def dependency(self, view, var, reads: list):
        """Distribution of ``var`` under ``view``; appends reads; raises _Unsupported."""
        if var.__class__ is NumberVar:
            fac = self._number_factories.get(var.type_name)
            if fac is None:
                raise ModelError(f"no number statement for type {var.type_name}")
            return fac.make(view, (), reads)
        comp = self._compiled.get(var.func)
        if comp is None:
            raise ModelError(f"{var.func} is not a random function of this model")
        env = var.args
        for guard, clause, is_term in comp.branches:
            if guard is not None:
                g = guard.ev(view, env, reads)
                if g is not True:
                    if g is NULL:
                        return D.PointMass(NULL)
                    continue
            if is_term:
                return D.PointMass(clause.ev(view, env, reads))
            return clause.make(view, env, reads)
        return D.PointMass(NULL)

    def return_type(self, var) -> str:
        if var.__class__ is NumberVar:
            return "NaturalNum"
        return self.functions[var.func].return_type

    def check_var(self, var) -> None:
        """Raise ModelError if ``var`` is not a well-typed basic variable of this model."""
        if var.__class__ is NumberVar:
            if var.type_name not in self.number_statements:
                raise ModelError(f"no number statement for type {var.type_name}")
            return
        fs = self.functions.get(var.func)
        if fs is None:
            raise ModelError(f"unknown random function {var.func}")
        if len(var.args) != len(fs.arg_types):
            raise ModelError(f"{var.func} expects {len(fs.arg_types)} arguments")
        for a, t in zip(var.args, fs.arg_types):
            if not _has_type(a, t):
                raise ModelError(f"argument {a!r} of {var.func} is not of type {t}")

    def check_value(self, var, value) -> None:
        t = self.return_type(var)
        if value is NULL:
            return
        if not _has_type(value, t):
            raise ModelError(f"value {value!r} for {var!r} is not of type {t}")


def _has_type(value, t: str) -> bool:
    if value is NULL:
        return True
    if t == "Boolean":
        return isinstance(value, bool)
    if t == "NaturalNum":
        return isinstance(value, int) and not isinstance(value, bool) and value >= 0
    if t == "String":
        return isinstance(value, str)
    if t == "Real":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, ObjectRef) and value.type_name == t


def _const_arg(a):
    if isinstance(a, Literal):
        return a.value
    if isinstance(a, MapLiteral):
        return dict(a.items)
    raise ModelError("prior bindings take constant arguments only")


class DictView:
    """Read-only view over a plain ``{var: value}`` mapping."""

    def __init__(self, values: Mapping, identifier_types: Sequence[str] = ()):
        self.values = values
        self.identifier_types = frozenset(identifier_types)

    def get(self, var):
        return self.values.get(var, MISSING)

    def uses_identifiers(self, type_name: str) -> bool:
        return type_name in self.identifier_types

    def pool_ids(self, type_name: str) -> list:
        seen: dict = {}
        for var, val in self.values.items():
            if var.__class__ is FuncAppVar:
                for a in var.args:
                    if a.__class__ is Identifier and a.type_name == type_name:
                        seen[a] = None
            if val.__class__ is Identifier and val.type_name == type_name:
                seen[val] = None
        return list(seen)


def _as_view(world):
    if isinstance(world, Mapping):
        return DictView(world)
    return world


def evaluate_term(world, term: Term, bindings: Sequence | None = None):
    """Evaluate ``term``; returns ``(value or UNSUPPORTED, reads)``."""
    reads: list = []
    try:
        value = term.ev(_as_view(world), tuple(bindings or ()), reads)
    except _Unsupported:
        return UNSUPPORTED, reads
    return value, reads


def evaluate_dependency(model: Model, world, var):
    """Returns ``(distribution or UNSUPPORTED, active parents)``."""
    reads: list = []
    try:
        dist = model.dependency(_as_view(world), var, reads)
    except _Unsupported:
        return UNSUPPORTED, list(dict.fromkeys(reads))
    return dist, list(dict.fromkeys(reads))


def var_log_factor(model: Model, world, var) -> float:
    view = _as_view(world)
    value = view.get(var)
    if value is MISSING:
        raise ValueError(f"{var!r} is not instantiated")
    dist, _ = evaluate_dependency(model, view, var)
    if dist is UNSUPPORTED:
        raise ValueError(f"{var!r} is not supported by the world")
    return dist.log_prob(value)


def sample_dependency(model: Model, world, var, rng):
    """Forward-sample ``var``.  May return a :class:`~blogmh.distributions.Fresh` marker."""
    dist, _ = evaluate_dependency(model, world, var)
    if dist is UNSUPPORTED:
        raise ValueError(f"{var!r} is not supported by the world")
    return dist.sample(rng)


def log_sum_exp(values: Sequence[float]) -> float:
    vals = [v for v in values if v > -math.inf]
    if not vals:
        return -math.inf
    m = max(vals)
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))
