"""Research-query mini-language.

A query names one independent variable and the range it is swept over::

    <name>.Log<N>          powers of two 1, 2, 4, ..., N   (N a power of two)
    <name>.Linear<N>.C<K>  K evenly spaced values N/K, 2N/K, ..., N  (K divides N)
    <name>.Set{a,b,...}    the listed labels, in order

``population_size.Log8`` therefore expands to 1, 2, 4, 8.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Union

from .errors import (
    DuplicateLabel,
    EmptySet,
    InvariantError,
    MissingCase,
    NonDivisible,
    NotPowerOfTwo,
    QuerySyntaxError,
    UnknownVariable,
)
from .model import CriteriaValue
from .xmldoc import AddChild, SetAttr, Transform

PLACEHOLDER = "{value}"

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_LOG_RE = re.compile(r"^Log([0-9]+)$")
_LINEAR_RE = re.compile(r"^Linear([0-9]+)\.C([0-9]+)$")
_SET_RE = re.compile(r"^Set\{(.*)\}$")


class PlaceholderUnused(UserWarning):
    """A numeric sweep template never mentions ``{value}``."""


@dataclass(frozen=True)
class Log:
    max: int

    def __str__(self) -> str:
        return f"Log{self.max}"


@dataclass(frozen=True)
class Linear:
    max: int
    count: int

    def __str__(self) -> str:
        return f"Linear{self.max}.C{self.count}"


@dataclass(frozen=True)
class Set:
    labels: tuple[str, ...]

    def __str__(self) -> str:
        return "Set{" + ",".join(self.labels) + "}"


RangeSpec = Union[Log, Linear, Set]


@dataclass(frozen=True)
class ResearchQuery:
    variable_name: str
    range: RangeSpec

    def __str__(self) -> str:
        return f"{self.variable_name}.{self.range}"

    @property
    def is_numeric(self) -> bool:
        return not isinstance(self.range, Set)


def _positive(digits: str, text: str) -> int:
    if digits.startswith("0") and digits != "0":
        raise QuerySyntaxError(f"leading zero in {text!r}")
    return int(digits)


def parse_query(text: str) -> ResearchQuery:
    text = text.strip()
    name, dot, rest = text.partition(".")
    if not dot:
        raise QuerySyntaxError(f"query {text!r} must have the form <variable>.<range>")
    if not _NAME_RE.match(name):
        raise QuerySyntaxError(f"invalid variable name {name!r} in {text!r}")

    if m := _LOG_RE.match(rest):
        n = _positive(m.group(1), text)
        if n < 1 or n & (n - 1):
            raise NotPowerOfTwo(f"Log range needs a power of two, got {n}")
        return ResearchQuery(name, Log(n))

    if m := _LINEAR_RE.match(rest):
        n = _positive(m.group(1), text)
        k = _positive(m.group(2), text)
        if n < 1 or k < 1:
            raise QuerySyntaxError(f"Linear bounds must be positive in {text!r}")
        if n % k:
            raise NonDivisible(f"Linear count {k} does not divide {n}")
        return ResearchQuery(name, Linear(n, k))

    if m := _SET_RE.match(rest):
        body = m.group(1).strip()
        if not body:
            raise EmptySet(f"Set range in {text!r} lists no values")
        labels = tuple(s.strip() for s in body.split(","))
        for label in labels:
            if not re.match(r"^[A-Za-z0-9_-]+$", label):
                raise QuerySyntaxError(f"invalid set label {label!r} in {text!r}")
        if len(set(labels)) != len(labels):
            raise DuplicateLabel(f"Set labels must be distinct in {text!r}")
        return ResearchQuery(name, Set(labels))

    raise QuerySyntaxError(
        f"unknown range {rest!r}; expected Log<N>, Linear<N>.C<K> or Set{{a,b,...}}"
    )


def expand_values(rng: RangeSpec) -> list[CriteriaValue]:
    if isinstance(rng, Log):
        out = []
        v = 1
        while v <= rng.max:
            out.append(CriteriaValue(str(v), v))
            v *= 2
        return out
    if isinstance(rng, Linear):
        step = rng.max // rng.count
        return [CriteriaValue(str(i * step), i * step) for i in range(1, rng.count + 1)]
    return [CriteriaValue(label) for label in rng.labels]


@dataclass(frozen=True)
class VariableDefinition:
    name: str
    transform_templates: tuple[Transform, ...] = ()
    case_transforms: Mapping[str, tuple[Transform, ...]] | None = field(default=None)

    def __post_init__(self) -> None:
        if not self.transform_templates and not self.case_transforms:
            raise InvariantError(
                f"variable {self.name!r} defines neither transforms nor cases"
            )


@dataclass(frozen=True)
class BoundVariable:
    query: ResearchQuery
    per_value_transforms: tuple[tuple[CriteriaValue, tuple[Transform, ...]], ...]

    @property
    def values(self) -> list[CriteriaValue]:
        return [v for v, _ in self.per_value_transforms]


def _mentions_placeholder(t: Transform) -> bool:
    if isinstance(t, SetAttr):
        return PLACEHOLDER in t.value
    if isinstance(t, AddChild):
        return any(PLACEHOLDER in v for _, v in t.attrs)
    return False


def substitute(t: Transform, value: str) -> Transform:
    if isinstance(t, SetAttr):
        return replace(t, value=t.value.replace(PLACEHOLDER, value))
    if isinstance(t, AddChild):
        return replace(t, attrs=tuple((k, v.replace(PLACEHOLDER, value)) for k, v in t.attrs))
    return t


def bind_variable(
    query: ResearchQuery, defs: Mapping[str, VariableDefinition]
) -> BoundVariable:
    try:
        vdef = defs[query.variable_name]
    except KeyError:
        known = ", ".join(sorted(defs)) or "none"
        raise UnknownVariable(
            f"no definition for variable {query.variable_name!r} (known: {known})"
        ) from None

    if query.is_numeric:
        for t in vdef.transform_templates:
            if not _mentions_placeholder(t):
                warnings.warn(
                    f"template {t} for {vdef.name!r} does not use {PLACEHOLDER}; "
                    "it is applied unchanged to every experiment",
                    PlaceholderUnused,
                    stacklevel=2,
                )

    bound = []
    for value in expand_values(query.range):
        transforms = [substitute(t, value.label) for t in vdef.transform_templates]
        if vdef.case_transforms is not None:
            if value.label not in vdef.case_transforms:
                raise MissingCase(
                    f"variable {vdef.name!r} has no case for value {value.label!r}"
                )
            transforms.extend(vdef.case_transforms[value.label])
        bound.append((value, tuple(transforms)))
    return BoundVariable(query, tuple(bound))
