"""Objects, literal sentinels and basic random variables.

Object references are interned: constructing the same guaranteed object,
numbered object or identifier twice returns the same instance, so equality
and hashing are identity based and cheap.  Basic variables are plain named
tuples whose arguments are object references or literals.
"""

from __future__ import annotations

import weakref
from typing import Any, NamedTuple

__all__ = [
    "NULL",
    "MISSING",
    "UNSUPPORTED",
    "ObjectRef",
    "GuaranteedObject",
    "NonGuaranteedObject",
    "Identifier",
    "NumberVar",
    "FuncAppVar",
    "BUILTIN_TYPES",
    "format_value",
    "type_of_value",
]

BUILTIN_TYPES = ("Boolean", "NaturalNum", "String", "Real")


class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name

    def __reduce__(self):
        return self._name


class _Null(_Sentinel):
    """The distinguished null value; equal only to itself."""

    def __bool__(self) -> bool:
        return False


NULL = _Null("NULL")
#: Returned by world lookups for variables that are not instantiated.
MISSING = _Sentinel("MISSING")
#: Returned by evaluation when a read hits an uninstantiated variable.
UNSUPPORTED = _Sentinel("UNSUPPORTED")


class ObjectRef:
    """Base class for interned object references."""

    __slots__ = ("__weakref__",)
    type_name: str


class GuaranteedObject(ObjectRef):
    __slots__ = ("type_name", "name")
    _table: "weakref.WeakValueDictionary[tuple, GuaranteedObject]" = weakref.WeakValueDictionary()

    def __new__(cls, type_name: str, name: str):
        key = (type_name, name)
        obj = cls._table.get(key)
        if obj is None:
            obj = object.__new__(cls)
            obj.type_name = type_name
            obj.name = name
            cls._table[key] = obj
        return obj

    def __reduce__(self):
        return (GuaranteedObject, (self.type_name, self.name))

    def __repr__(self) -> str:
        return self.name


class NonGuaranteedObject(ObjectRef):
    """The ``index``-th object generated by the number statement for a type."""

    __slots__ = ("type_name", "index")
    _table: "weakref.WeakValueDictionary[tuple, NonGuaranteedObject]" = weakref.WeakValueDictionary()

    def __new__(cls, type_name: str, index: int):
        if index < 1:
            raise ValueError(f"object indices start at 1, got {index}")
        key = (type_name, index)
        obj = cls._table.get(key)
        if obj is None:
            obj = object.__new__(cls)
            obj.type_name = type_name
            obj.index = index
            cls._table[key] = obj
        return obj

    def __reduce__(self):
        return (NonGuaranteedObject, (self.type_name, self.index))

    def __repr__(self) -> str:
        return f"({self.type_name}, {self.index})"


class Identifier(ObjectRef):
    """An unnumbered stand-in for some non-guaranteed object of a type."""

    __slots__ = ("type_name", "token")
    _table: "weakref.WeakValueDictionary[tuple, Identifier]" = weakref.WeakValueDictionary()

    def __new__(cls, type_name: str, token: str):
        key = (type_name, token)
        obj = cls._table.get(key)
        if obj is None:
            obj = object.__new__(cls)
            obj.type_name = type_name
            obj.token = token
            cls._table[key] = obj
        return obj

    def __reduce__(self):
        return (Identifier, (self.type_name, self.token))

    def __repr__(self) -> str:
        return f"{self.type_name}@{self.token}"


class NumberVar(NamedTuple):
    type_name: str

    def __repr__(self) -> str:
        return f"#{self.type_name}"


class FuncAppVar(NamedTuple):
    func: str
    args: tuple = ()

    @property
    def is_abstract(self) -> bool:
        return any(isinstance(a, Identifier) for a in self.args)

    def __repr__(self) -> str:
        if not self.args:
            return self.func
        return f"{self.func}({', '.join(format_value(a) for a in self.args)})"


def format_value(value: Any) -> str:
    """Render a value in the ``var = value`` debug notation."""
    if value is NULL:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    return repr(value)


def type_of_value(value: Any) -> str | None:
    """Type name of a value, or None for null."""
    if value is NULL:
        return None
    if isinstance(value, ObjectRef):
        return value.type_name
    if isinstance(value, bool):
        return "Boolean"
    if isinstance(value, int):
        return "NaturalNum"
    if isinstance(value, str):
        return "String"
    if isinstance(value, float):
        return "Real"
    raise TypeError(f"not a model value: {value!r}")
