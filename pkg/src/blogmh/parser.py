"""Parser, type checker and pretty-printer for ``.blog`` model files.

The grammar is published in ``docs/grammar.md``.  Parsing happens in two
stages: a recursive-descent pass builds declarations with unresolved names,
then a checking pass resolves names (parameter, guaranteed object or zero-ary
function, in that order), checks types and arities and builds the
:class:`~blogmh.model.Model`.  All recoverable errors are collected and
raised together as :class:`ParseErrors`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .model import (
    BUILTIN_FUNCTIONS,
    DIST_KINDS,
    BoolOp,
    Branch,
    BuiltinApp,
    Compare,
    DependencyStatement,
    DistCall,
    DistClause,
    FuncApp,
    FunctionSymbol,
    GuaranteedDecl,
    Literal,
    MapLiteral,
    Model,
    Not,
    NumberStatement,
    ObjectConst,
    ParamRef,
    PriorDecl,
    SourceSpan,
    TermClause,
    TypeArg,
    TypeDecl,
)
from .values import BUILTIN_TYPES, NULL, GuaranteedObject, format_value

__all__ = ["ParseError", "ParseErrors", "parse_model", "parse_term", "format_model", "format_term",
           "load_model", "strip_line_comment"]

KEYWORDS = frozenset({"type", "guaranteed", "random", "prior", "if", "then", "else",
                      "true", "false", "null"})


@dataclass
class ParseError:
    span: SourceSpan
    message: str
    expected: str | None = None

    def __str__(self) -> str:
        hint = f" (expected {self.expected})" if self.expected else ""
        return f"{self.span.line}:{self.span.column}: {self.message}{hint}"


class ParseErrors(Exception):
    """All errors found in one source text."""

    def __init__(self, errors: list[ParseError]):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


# ------------------------------------------------------------------ lexer


@dataclass
class Token:
    kind: str  # ident, keyword, number, string, op, eof
    text: str
    value: Any
    span: SourceSpan


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\.\d+(?:[eE][+-]?\d+)?|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op>==|!=|<=|>=|&&|\|\||[<>=~\#(){},;:&|!\-])
""", re.VERBOSE)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def _unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


class _Lexer:
    def __init__(self, source: str, errors: list[ParseError]):
        self.source = source
        self.errors = errors
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", source)]

    def span(self, start: int, end: int) -> SourceSpan:
        lo, hi = 0, len(self._line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._line_starts[mid] <= start:
                lo = mid
            else:
                hi = mid - 1
        return SourceSpan(lo + 1, start - self._line_starts[lo] + 1, start, end)

    def tokens(self) -> list[Token]:
        out = []
        pos, src = 0, self.source
        while pos < len(src):
            m = _TOKEN_RE.match(src, pos)
            if m is None:
                if src[pos] == '"':
                    end = src.find("\n", pos)
                    end = len(src) if end < 0 else end
                    self.errors.append(ParseError(self.span(pos, end), "unterminated string literal"))
                    pos = end
                else:
                    self.errors.append(ParseError(self.span(pos, pos + 1),
                                                  f"unexpected character {src[pos]!r}"))
                    pos += 1
                continue
            kind = m.lastgroup
            text = m.group()
            sp = self.span(m.start(), m.end())
            pos = m.end()
            if kind in ("ws", "comment"):
                continue
            if kind == "number":
                value = float(text) if any(c in text for c in ".eE") else int(text)
                out.append(Token("number", text, value, sp))
            elif kind == "ident":
                out.append(Token("keyword" if text in KEYWORDS else "ident", text, text, sp))
            elif kind == "string":
                out.append(Token("string", text, _unescape(text[1:-1]), sp))
            else:
                text = {"&&": "&", "||": "|"}.get(text, text)
                out.append(Token("op", text, text, sp))
        end = len(src)
        out.append(Token("eof", "end of input", None, self.span(end, end)))
        return out


# ------------------------------------------------------------ raw syntax


@dataclass(frozen=True)
class _Name:
    name: str
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class _Call:
    name: str
    args: tuple
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass
class _RawRandom:
    return_type: str
    name: str
    params: list  # (type, name, span)
    branches: list  # (guard or None, clause)
    span: SourceSpan
    ret_span: SourceSpan


class _Syntax(Exception):
    def __init__(self, err: ParseError):
        self.err = err


class _Parser:
    def __init__(self, tokens: list[Token], errors: list[ParseError]):
        self.toks = tokens
        self.i = 0
        self.errors = errors

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def _next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def _is(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "keyword") and t.text == text

    def _fail(self, expected: str):
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        raise _Syntax(ParseError(t.span, f"unexpected {found}", expected))

    def _expect(self, text: str) -> Token:
        if not self._is(text):
            self._fail(repr(text))
        return self._next()

    def _ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident":
            self._fail(what)
        return self._next()

    def _sync(self):
        while self.tok.kind != "eof" and not self._is(";"):
            self._next()
        if self._is(";"):
            self._next()

    # declarations
    def parse(self) -> list:
        decls = []
        while self.tok.kind != "eof":
            start = self.i
            try:
                decls.append(self._decl())
            except _Syntax as e:
                self.errors.append(e.err)
                if self.i == start and self._is(";"):
                    self._next()
                else:
                    self._sync()
        return decls

    def _decl(self):
        t = self.tok
        if self._is("type"):
            self._next()
            name = self._ident("type name")
            self._expect(";")
            return TypeDecl(name.text, span=name.span)
        if self._is("guaranteed"):
            self._next()
            tname = self._ident("type name")
            names = [self._ident("object name")]
            while self._is(","):
                self._next()
                names.append(self._ident("object name"))
            self._expect(";")
            return ("guaranteed", tname, names, t.span)
        if self._is("prior"):
            self._next()
            name = self._ident("prior name")
            self._expect("=")
            call = self._dist_call()
            self._expect(";")
            return PriorDecl(name.text, call, span=name.span)
        if self._is("#"):
            self._next()
            tname = self._ident("type name")
            self._expect("~")
            call = self._dist_call()
            self._expect(";")
            return NumberStatement(tname.text, call, span=tname.span)
        if self._is("random"):
            return self._random()
        self._fail("a declaration ('type', 'guaranteed', 'prior', '#' or 'random')")

    def _random(self):
        start = self._next()
        ret = self._ident("return type")
        name = self._ident("function name")
        self._expect("(")
        params = []
        if not self._is(")"):
            while True:
                pt = self._ident("parameter type")
                pn = self._ident("parameter name")
                params.append((pt.text, pn.text, pn.span, pt.span))
                if self._is(","):
                    self._next()
                    continue
                break
        self._expect(")")
        branches = []
        if self._is("if"):
            while True:
                self._expect("if")
                guard = self._expr()
                self._expect("then")
                branches.append((guard, self._clause()))
                if not self._is("else"):
                    break
                self._next()
                if self._is("if"):
                    continue
                branches.append((None, self._clause()))
                break
        else:
            branches.append((None, self._clause()))
        self._expect(";")
        return _RawRandom(ret.text, name.text, params, branches, name.span, ret.span)

    def _clause(self):
        t = self.tok
        if self._is("~"):
            self._next()
            return DistClause(self._dist_call(), span=t.span)
        if self._is("="):
            self._next()
            return TermClause(self._expr(), span=t.span)
        self._fail("'~' or '='")

    def _dist_call(self) -> DistCall:
        name = self._ident("distribution or prior name")
        if not self._is("("):
            return DistCall(name.text, (), (), has_parens=False, span=name.span)
        self._next()
        args, kwargs = [], []
        if not self._is(")"):
            while True:
                self._dist_arg(name.text, args, kwargs)
                if self._is(","):
                    self._next()
                    continue
                break
        self._expect(")")
        return DistCall(name.text, tuple(args), tuple(kwargs), span=name.span)

    def _dist_arg(self, kind: str, args: list, kwargs: list):
        t = self.tok
        nxt = self.toks[self.i + 1]
        if t.kind == "ident" and nxt.kind == "op" and nxt.text == "=":
            self._next()
            self._next()
            kwargs.append((t.text, self._const()))
            return
        if self._is("{"):
            args.append(self._map())
            return
        if kind in ("Uniform", "UniformOverObjects") and t.kind == "ident":
            self._next()
            var = None
            if self.tok.kind == "ident":
                var = self._next().text
            args.append(TypeArg(t.text, var, span=t.span))
            return
        args.append(self._expr())

    def _const(self):
        t = self.tok
        if t.kind == "string":
            parts = [self._next().value]
            while self.tok.kind == "string":  # adjacent literals concatenate
                parts.append(self._next().value)
            return "".join(parts)
        neg = False
        if self._is("-"):
            self._next()
            neg = True
        t = self.tok
        if t.kind == "number":
            self._next()
            return -t.value if neg else t.value
        if neg:
            self._fail("number")
        if self._is("true") or self._is("false") or self._is("null"):
            self._next()
            return {"true": True, "false": False, "null": NULL}[t.text]
        self._fail("constant")

    def _map(self) -> MapLiteral:
        start = self._expect("{")
        items = []
        if not self._is("}"):
            while True:
                kt = self.tok
                if kt.kind == "ident":
                    key = _Name(self._next().text, kt.span)
                else:
                    key = self._const()
                self._expect(":")
                w = self._const()
                if not isinstance(w, (int, float)) or isinstance(w, bool):
                    raise _Syntax(ParseError(kt.span, "map weights must be numbers", "number"))
                items.append((key, w))
                if self._is(","):
                    self._next()
                    continue
                break
        self._expect("}")
        return MapLiteral(tuple(items), span=start.span)

    # terms
    def _expr(self):
        left = self._and()
        while self._is("|"):
            op = self._next()
            left = BoolOp("|", left, self._and(), span=op.span)
        return left

    def _and(self):
        left = self._not()
        while self._is("&"):
            op = self._next()
            left = BoolOp("&", left, self._not(), span=op.span)
        return left

    def _not(self):
        if self._is("!"):
            op = self._next()
            return Not(self._not(), span=op.span)
        return self._cmp()

    def _cmp(self):
        left = self._primary()
        t = self.tok
        if t.kind == "op" and t.text in ("==", "!=", "<", "<=", ">", ">="):
            self._next()
            return Compare(t.text, left, self._primary(), span=t.span)
        return left

    def _primary(self):
        t = self.tok
        if self._is("("):
            self._next()
            e = self._expr()
            self._expect(")")
            return e
        if t.kind == "ident":
            self._next()
            if self._is("("):
                self._next()
                args = []
                if not self._is(")"):
                    while True:
                        args.append(self._expr())
                        if self._is(","):
                            self._next()
                            continue
                        break
                self._expect(")")
                return _Call(t.text, tuple(args), t.span)
            return _Name(t.text, t.span)
        if t.kind in ("string", "number") or self._is("true") or self._is("false") \
                or self._is("null") or self._is("-"):
            return Literal(self._const(), span=t.span)
        self._fail("a term")


# ---------------------------------------------------------------- checker

_NUMERIC = ("NaturalNum", "Real")


def _compatible(a: str | None, b: str | None) -> bool:
    return a is None or b is None or a == b or (a in _NUMERIC and b in _NUMERIC)


def _literal_type(v) -> str | None:
    if v is NULL:
        return None
    if isinstance(v, bool):
        return "Boolean"
    if isinstance(v, int):
        return "NaturalNum"
    if isinstance(v, float):
        return "Real"
    if isinstance(v, GuaranteedObject):
        return v.type_name
    return "String"


class _Checker:
    def __init__(self, errors: list[ParseError], eof_span: SourceSpan):
        self.errors = errors
        self.eof_span = eof_span
        self.types: dict[str, SourceSpan | None] = {t: None for t in BUILTIN_TYPES}
        self.objects: dict[str, GuaranteedObject] = {}
        self.priors: dict[str, PriorDecl] = {}
        self.functions: dict[str, FunctionSymbol] = {}

    def err(self, span, msg, expected=None):
        self.errors.append(ParseError(span or self.eof_span, msg, expected))

    def check_type(self, name: str, span, user_only: bool = False) -> bool:
        if name not in self.types:
            self.err(span, f"unknown type {name!r}")
            return False
        if user_only and name in BUILTIN_TYPES:
            self.err(span, f"built-in type {name!r} cannot be used here")
            return False
        return True

    def run(self, raw: list) -> list:
        # pass 1: declarations and signatures
        for d in raw:
            if isinstance(d, TypeDecl):
                if d.name in self.types:
                    self.err(d.span, f"duplicate type {d.name!r}")
                else:
                    self.types[d.name] = d.span
        out = []
        numbered: set[str] = set()
        randoms = []
        for d in raw:
            if isinstance(d, TypeDecl):
                if self.types.get(d.name) is d.span:
                    out.append(d)
            elif isinstance(d, tuple) and d[0] == "guaranteed":
                _, tname, names, span = d
                if not self.check_type(tname.text, tname.span, user_only=True):
                    continue
                kept = []
                for n in names:
                    if n.text in self.objects:
                        self.err(n.span, f"duplicate guaranteed object {n.text!r}")
                    elif n.text in self.types:
                        self.err(n.span, f"object name {n.text!r} clashes with a type")
                    else:
                        self.objects[n.text] = GuaranteedObject(tname.text, n.text)
                        kept.append(n.text)
                if kept:
                    out.append(GuaranteedDecl(tname.text, tuple(kept), span=span))
            elif isinstance(d, PriorDecl):
                if d.name in self.priors or d.name in DIST_KINDS:
                    self.err(d.span, f"duplicate prior {d.name!r}")
                elif d.call.name not in DIST_KINDS:
                    self.err(d.call.span, f"prior {d.name!r} binds unknown distribution {d.call.name!r}")
                else:
                    self.priors[d.name] = d
                    out.append(("prior", d))
            elif isinstance(d, NumberStatement):
                if not self.check_type(d.type_name, d.span, user_only=True):
                    continue
                if d.type_name in numbered:
                    self.err(d.span, f"duplicate number statement for {d.type_name!r}")
                    continue
                numbered.add(d.type_name)
                out.append(d)
            elif isinstance(d, _RawRandom):
                ok = self.check_type(d.return_type, d.ret_span)
                for pt, pn, psp, ptsp in d.params:
                    ok = self.check_type(pt, ptsp) and ok
                if d.name in self.functions or d.name in BUILTIN_FUNCTIONS:
                    self.err(d.span, f"duplicate declaration of function {d.name!r}")
                    continue
                if d.name in self.objects:
                    self.err(d.span, f"function name {d.name!r} clashes with a guaranteed object")
                    continue
                if not ok:
                    continue
                fs = FunctionSymbol(d.name, tuple(p[0] for p in d.params), d.return_type)
                self.functions[d.name] = fs
                randoms.append(d)
                out.append(d)
        # pass 2: bodies
        final = []
        for d in out:
            if isinstance(d, tuple) and d[0] == "prior":
                p = d[1]
                call = self.call(p.call, {}, None, in_prior=True)
                final.append(PriorDecl(p.name, call, span=p.span))
            elif isinstance(d, NumberStatement):
                call = self.call(d.call, {}, "NaturalNum")
                final.append(NumberStatement(d.type_name, call, span=d.span))
            elif isinstance(d, _RawRandom):
                final.append(self.random(d))
            else:
                final.append(d)
        return final

    def random(self, d: _RawRandom) -> DependencyStatement:
        fs = self.functions[d.name]
        env = {}
        params = []
        for idx, (pt, pn, psp, _) in enumerate(d.params):
            if pn in env:
                self.err(psp, f"duplicate parameter {pn!r}")
            env[pn] = (idx, pt)
            params.append((pt, pn))
        branches = []
        for guard, clause in d.branches:
            g = None
            if guard is not None:
                g, gt = self.term(guard, env)
                if gt not in ("Boolean", None):
                    self.err(guard.span, f"guard of {d.name!r} must be Boolean, not {gt}")
            if isinstance(clause, DistClause):
                c = DistClause(self.call(clause.call, env, fs.return_type), span=clause.span)
            else:
                t, tt = self.term(clause.term, env)
                if not _compatible(tt, fs.return_type):
                    self.err(clause.span, f"{d.name!r} returns {fs.return_type} but the clause has type {tt}")
                c = TermClause(t, span=clause.span)
            branches.append(Branch(g, c))
        return DependencyStatement(fs, tuple(params), tuple(branches), span=d.span)

    def term(self, t, env):
        """Resolve a raw term; returns (term, type)."""
        if isinstance(t, Literal):
            return t, _literal_type(t.value)
        if isinstance(t, _Name):
            if t.name in env:
                idx, ty = env[t.name]
                return ParamRef(t.name, idx, span=t.span), ty
            if t.name in self.objects:
                o = self.objects[t.name]
                return ObjectConst(o, span=t.span), o.type_name
            if t.name in self.functions:
                fs = self.functions[t.name]
                if fs.arg_types:
                    self.err(t.span, f"function {t.name!r} expects {len(fs.arg_types)} arguments")
                return FuncApp(t.name, (), (), span=t.span), fs.return_type
            self.err(t.span, f"unknown name {t.name!r}")
            return Literal(NULL, span=t.span), None
        if isinstance(t, _Call):
            args = [self.term(a, env) for a in t.args]
            if t.name in BUILTIN_FUNCTIONS:
                _, sig, ret = BUILTIN_FUNCTIONS[t.name]
                self._check_args(t, sig, args)
                return BuiltinApp(t.name, tuple(a for a, _ in args), span=t.span), ret
            fs = self.functions.get(t.name)
            if fs is None:
                self.err(t.span, f"unknown function {t.name!r}")
                return Literal(NULL, span=t.span), None
            self._check_args(t, fs.arg_types, args)
            return FuncApp(t.name, tuple(a for a, _ in args), fs.arg_types, span=t.span), fs.return_type
        if isinstance(t, Compare):
            left, lt = self.term(t.left, env)
            right, rt = self.term(t.right, env)
            if t.op in ("==", "!="):
                if not _compatible(lt, rt):
                    self.err(t.span, f"cannot compare {lt} with {rt} using {t.op!r}")
            else:
                for ty in (lt, rt):
                    if ty is not None and ty not in _NUMERIC:
                        self.err(t.span, f"operator {t.op!r} needs numbers, got {ty}")
                        break
            return Compare(t.op, left, right, span=t.span), "Boolean"
        if isinstance(t, BoolOp):
            left, lt = self.term(t.left, env)
            right, rt = self.term(t.right, env)
            for ty in (lt, rt):
                if ty not in ("Boolean", None):
                    self.err(t.span, f"operator {t.op!r} needs Boolean operands, got {ty}")
                    break
            return BoolOp(t.op, left, right, span=t.span), "Boolean"
        if isinstance(t, Not):
            a, at = self.term(t.arg, env)
            if at not in ("Boolean", None):
                self.err(t.span, f"operator '!' needs a Boolean operand, got {at}")
            return Not(a, span=t.span), "Boolean"
        raise TypeError(f"unexpected term node {t!r}")

    def _check_args(self, t: _Call, sig, args):
        if len(sig) != len(args):
            self.err(t.span, f"function {t.name!r} expects {len(sig)} arguments, got {len(args)}")
            return
        for (a, at), want in zip(args, sig):
            if not _compatible(at, want) or (at in _NUMERIC and want not in _NUMERIC):
                self.err(t.span, f"argument of {t.name!r} has type {at}, expected {want}")

    def call(self, c: DistCall, env, expected: str | None, in_prior: bool = False) -> DistCall:
        kind = c.name
        bound_args: tuple = ()
        bound_kwargs: dict = {}
        if kind in self.priors and not in_prior:
            b = self.priors[kind].call
            kind, bound_args, bound_kwargs = b.name, b.args, dict(b.kwargs)
        elif kind not in DIST_KINDS:
            self.err(c.span, f"unknown distribution or prior {c.name!r}")
            return c
        args = []
        term_types = []
        for a in c.args:
            if isinstance(a, TypeArg):
                if kind not in ("Uniform", "UniformOverObjects"):
                    self.err(a.span, f"{kind} does not take a type argument")
                elif self.check_type(a.type_name, a.span, user_only=True):
                    if expected is not None and a.type_name != expected:
                        self.err(a.span, f"Uniform over {a.type_name!r} where {expected} is expected")
                args.append(a)
            elif isinstance(a, MapLiteral):
                items = []
                for k, w in a.items:
                    if isinstance(k, _Name):
                        if k.name not in self.objects:
                            self.err(k.span, f"unknown object {k.name!r} in map")
                            continue
                        k = self.objects[k.name]
                    items.append((k, w))
                args.append(MapLiteral(tuple(items), span=a.span))
            else:
                if in_prior and not isinstance(a, Literal):
                    self.err(getattr(a, "span", c.span), f"prior {c.name!r} may only bind constants")
                    continue
                t, tt = self.term(a, env)
                args.append(t)
                term_types.append((tt, getattr(a, "span", c.span)))
        kwargs = dict(bound_kwargs)
        kwargs.update(c.kwargs)
        out = DistCall(c.name, tuple(args), tuple(c.kwargs), c.has_parens, span=c.span)
        if in_prior:
            return out
        self._check_kind(kind, c, bound_args + tuple(args), kwargs, term_types, expected)
        return out

    def _check_kind(self, kind, c, args, kwargs, term_types, expected):
        ret = {
            "Bernoulli": "Boolean", "NoisyCopy": "Boolean", "UniformInt": "NaturalNum",
            "Poisson": "NaturalNum", "Geometric": "NaturalNum", "TokenStringModel": "String",
            "StringConcatFormat": "String",
        }.get(kind)
        nterm = sum(1 for a in args if not isinstance(a, (TypeArg, MapLiteral)))
        maps = [a for a in args if isinstance(a, MapLiteral)]
        if kind == "Categorical":
            if len(maps) != 1:
                self.err(c.span, f"{c.name!r} needs exactly one weight map", "{value: weight, ...}")
                return
            ktypes = {_literal_type(k) for k, _ in maps[0].items} - {None}
            if len(ktypes) > 1 and ktypes != {"NaturalNum", "Real"}:
                self.err(c.span, f"map keys of {c.name!r} have mixed types")
            ret = "Real" if "Real" in ktypes else next(iter(ktypes), None)
        elif kind in ("Uniform", "UniformOverObjects"):
            ta = [a for a in args if isinstance(a, TypeArg)]
            if len(ta) > 1 or nterm or maps:
                self.err(c.span, f"{c.name!r} takes a single type argument")
            ret = ta[0].type_name if ta else expected
        elif kind == "NoisyCopy":
            if nterm + ("fidelity" in kwargs) != 2:
                self.err(c.span, f"{c.name!r} needs a source and a fidelity")
            if term_types and term_types[0][0] not in ("Boolean", None):
                self.err(term_types[0][1], f"NoisyCopy source must be Boolean, not {term_types[0][0]}")
        elif kind in ("Bernoulli", "Geometric"):
            if nterm + ("p" in kwargs) != 1:
                self.err(c.span, f"{c.name!r} needs one parameter p")
        elif kind == "Poisson":
            if nterm + ("lambda" in kwargs or "lam" in kwargs) != 1:
                self.err(c.span, f"{c.name!r} needs one rate parameter")
        elif kind == "UniformInt":
            if nterm + ("lo" in kwargs) + ("hi" in kwargs) != 2:
                self.err(c.span, f"{c.name!r} needs lo and hi")
        elif kind == "TokenStringModel":
            if "vocab" not in kwargs or not isinstance(kwargs["vocab"], str):
                self.err(c.span, f"{c.name!r} needs vocab=\"...\"")
            if nterm > 1:
                self.err(c.span, f"{c.name!r} takes at most one source term")
            for tt, sp in term_types:
                if tt not in ("String", None):
                    self.err(sp, f"{c.name!r} source must be a String, not {tt}")
        elif kind == "StringConcatFormat":
            for tt, sp in term_types:
                if tt not in ("String", None):
                    self.err(sp, f"{c.name!r} components must be Strings, not {tt}")
        if kind in ("Bernoulli", "Geometric", "Poisson", "UniformInt"):
            for tt, sp in term_types:
                if tt not in _NUMERIC + (None,):
                    self.err(sp, f"{c.name!r} parameter must be numeric, not {tt}")
        if expected is not None and ret is not None and not _compatible(ret, expected):
            self.err(c.span, f"{c.name!r} yields {ret} but {expected} is expected")


# ------------------------------------------------------------- public API


def parse_model(source: str) -> Model:
    """Parse and check ``source``; raises :class:`ParseErrors` listing every problem found."""
    errors: list[ParseError] = []
    lexer = _Lexer(source, errors)
    tokens = lexer.tokens()
    raw = _Parser(tokens, errors).parse()
    decls = _Checker(errors, tokens[-1].span).run(raw)
    if errors:
        errors.sort(key=lambda e: e.span.start)
        raise ParseErrors(errors)
    return Model(decls)


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def parse_term(model: Model, source: str, params: dict | None = None):
    """Parse a term such as ``Hot(PubCited(C1)) == true`` against ``model``.

    ``params`` maps free names to ``(index, type)`` bindings.
    """
    errors: list[ParseError] = []
    tokens = _Lexer(source, errors).tokens()
    p = _Parser(tokens, errors)
    raw = None
    try:
        raw = p._expr()
        if p.tok.kind != "eof":
            p._fail("end of term")
    except _Syntax as e:
        errors.append(e.err)
    if errors:
        raise ParseErrors(errors)
    chk = _Checker(errors, tokens[-1].span)
    chk.types.update({t: None for t in model.types})
    chk.objects.update(model.objects_by_name)
    chk.functions.update(model.functions)
    term, ty = chk.term(raw, params or {})
    if errors:
        raise ParseErrors(errors)
    return term, ty


def strip_line_comment(line: str) -> str:
    """``line`` without a trailing ``//`` comment; ``//`` inside string literals is kept."""
    in_str = False
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and in_str:
            i += 2
            continue
        if ch == '"':
            in_str = not in_str
        elif not in_str and line.startswith("//", i):
            return line[:i]
        i += 1
    return line



# -------------------------------------------------------------- formatter


def _fmt_const(v) -> str:
    if isinstance(v, GuaranteedObject):
        return v.name
    if isinstance(v, float):
        return repr(v)
    return format_value(v)


def _prec(t) -> int:
    if isinstance(t, BoolOp):
        return 1 if t.op == "|" else 2
    if isinstance(t, Not):
        return 3
    if isinstance(t, Compare):
        return 4
    return 5


def format_term(t) -> str:
    if isinstance(t, Literal):
        return _fmt_const(t.value)
    if isinstance(t, ParamRef):
        return t.name
    if isinstance(t, ObjectConst):
        return t.obj.name
    if isinstance(t, (FuncApp, BuiltinApp)):
        if not t.args and isinstance(t, FuncApp):
            return t.func
        return f"{t.func}({', '.join(format_term(a) for a in t.args)})"
    if isinstance(t, Compare):
        return f"{_wrap(t.left, 5)} {t.op} {_wrap(t.right, 5)}"
    if isinstance(t, BoolOp):
        p = _prec(t)
        return f"{_wrap(t.left, p)} {t.op} {_wrap(t.right, p + 1)}"
    if isinstance(t, Not):
        return f"!{_wrap(t.arg, 3)}"
    raise TypeError(f"not a term: {t!r}")


def _wrap(t, min_prec: int) -> str:
    s = format_term(t)
    return f"({s})" if _prec(t) < min_prec else s


def _fmt_call(c: DistCall) -> str:
    if not c.has_parens:
        return c.name
    parts = []
    for a in c.args:
        if isinstance(a, TypeArg):
            parts.append(a.type_name if a.var_name is None else f"{a.type_name} {a.var_name}")
        elif isinstance(a, MapLiteral):
            inner = ", ".join(f"{_fmt_const(k)}: {_fmt_const(w)}" for k, w in a.items)
            parts.append("{" + inner + "}")
        else:
            parts.append(format_term(a))
    parts.extend(f"{k}={_fmt_const(v)}" for k, v in c.kwargs)
    return f"{c.name}({', '.join(parts)})"


def _fmt_clause(c) -> str:
    if isinstance(c, DistClause):
        return f"~ {_fmt_call(c.call)}"
    return f"= {format_term(c.term)}"


def format_model(model: Model) -> str:
    """Render ``model`` as source text that parses back to an equal model."""
    lines = []
    for d in model.decls:
        if isinstance(d, TypeDecl):
            lines.append(f"type {d.name};")
        elif isinstance(d, GuaranteedDecl):
            lines.append(f"guaranteed {d.type_name} {', '.join(d.names)};")
        elif isinstance(d, PriorDecl):
            lines.append(f"prior {d.name} = {_fmt_call(d.call)};")
        elif isinstance(d, NumberStatement):
            lines.append(f"#{d.type_name} ~ {_fmt_call(d.call)};")
        elif isinstance(d, DependencyStatement):
            fs = d.function
            params = ", ".join(f"{t} {n}" for t, n in d.params)
            head = f"random {fs.return_type} {fs.name}({params})"
            br = d.branches
            if len(br) == 1 and br[0].guard is None:
                lines.append(f"{head} {_fmt_clause(br[0].clause)};")
                continue
            body = []
            for k, b in enumerate(br):
                if b.guard is None:
                    body.append(f"  else {_fmt_clause(b.clause)}")
                else:
                    kw = "if" if k == 0 else "else if"
                    body.append(f"  {kw} {format_term(b.guard)} then {_fmt_clause(b.clause)}")
            lines.append(head + "\n" + "\n".join(body) + ";")
    return "\n".join(lines) + "\n"
