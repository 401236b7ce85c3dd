"""Template XML documents: a restricted parser, a canonical serializer,
path addressing and the three mutation kinds used to derive run inputs.

Path grammar::

    /tag/tag[@attr='value']/tag[n]

Each step names a child tag with an optional predicate: exact attribute
equality or a 1-based index among same-tag siblings. The first step must
match the root element.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Union
from xml.parsers import expat

from .errors import (
    AmbiguousPath,
    NoMatch,
    PathSyntaxError,
    TransformError,
    UnsupportedFeature,
    XmlSyntaxError,
)

XML_DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>'
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")

Attrs = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Element:
    tag: str
    attrs: Attrs = ()
    text: str = ""
    children: tuple["Element", ...] = ()

    def get(self, name: str, default: str | None = None) -> str | None:
        for key, value in self.attrs:
            if key == name:
                return value
        return default

    def iter(self) -> Iterator["Element"]:
        yield self
        for child in self.children:
            yield from child.iter()


@dataclass(frozen=True)
class XmlDoc:
    root: Element

    def element_count(self) -> int:
        return sum(1 for _ in self.root.iter())

    def node(self, ref: tuple[int, ...]) -> Element:
        el = self.root
        for i in ref:
            el = el.children[i]
        return el


def is_xml_name(name: str) -> bool:
    return bool(_NAME_RE.match(name)) and ":" not in name


# ---------------------------------------------------------------------------
# parsing


def _blank_comments(text: str) -> str:
    # keep offsets (and therefore line/column numbers) stable
    return re.sub(
        r"<!--.*?-->", lambda m: re.sub(r"[^\n]", " ", m.group(0)), text, flags=re.S
    )


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1)
    return line, col


def _reject_unsupported(text: str) -> None:
    scrubbed = _blank_comments(text)
    for token, what in (("<!DOCTYPE", "DTD"), ("<![CDATA[", "CDATA section")):
        pos = scrubbed.find(token)
        if pos >= 0:
            line, col = _position(text, pos)
            raise UnsupportedFeature(f"{what} not supported (line {line}, column {col})")
    for m in re.finditer(r"<\?([A-Za-z_][\w.\-]*)", scrubbed):
        if m.group(1).lower() != "xml" or m.start() != len(scrubbed) - len(scrubbed.lstrip()):
            line, col = _position(text, m.start())
            raise UnsupportedFeature(
                f"processing instruction not supported (line {line}, column {col})"
            )


class _Builder:
    def __init__(self, parser) -> None:
        self.parser = parser
        # each frame: [tag, attrs, text chunks, children]
        self.stack: list[list] = []
        self.root: Element | None = None

    def _where(self) -> str:
        return f"line {self.parser.CurrentLineNumber}, column {self.parser.CurrentColumnNumber}"

    def start(self, tag: str, attrs: list[str]) -> None:
        if ":" in tag:
            raise UnsupportedFeature(f"namespaced element <{tag}> not supported ({self._where()})")
        pairs = list(zip(attrs[::2], attrs[1::2]))
        for name, _ in pairs:
            # a default xmlns is kept as a plain attribute (SVG needs it); prefixes are not
            if ":" in name:
                raise UnsupportedFeature(
                    f"namespace attribute '{name}' not supported ({self._where()})"
                )
        self.stack.append([tag, tuple(pairs), [], []])

    def end(self, tag: str) -> None:
        name, attrs, chunks, children = self.stack.pop()
        el = Element(name, attrs, "".join(chunks).strip(), tuple(children))
        if self.stack:
            self.stack[-1][3].append(el)
        else:
            self.root = el

    def data(self, chunk: str) -> None:
        if self.stack:
            self.stack[-1][2].append(chunk)


def parse_xml(text: str) -> XmlDoc:
    """Parse a template document. Comments are dropped; namespaces, DTDs,
    CDATA and processing instructions are rejected."""
    _reject_unsupported(text)
    parser = expat.ParserCreate()
    builder = _Builder(parser)
    parser.StartElementHandler = builder.start
    parser.EndElementHandler = builder.end
    parser.CharacterDataHandler = builder.data
    parser.ordered_attributes = True
    parser.buffer_text = True
    try:
        parser.Parse(text, True)
    except expat.ExpatError as exc:
        raise XmlSyntaxError(
            expat.ErrorString(exc.code), exc.lineno, exc.offset
        ) from None
    if builder.root is None:
        raise XmlSyntaxError("no root element", 1, 0)
    return XmlDoc(builder.root)


# ---------------------------------------------------------------------------
# canonical serialization


def _escape_text(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(s: str) -> str:
    return (
        _escape_text(s)
        .replace('"', "&quot;")
        .replace("\n", "&#10;")
        .replace("\r", "&#13;")
        .replace("\t", "&#9;")
    )


def _emit(el: Element, depth: int, out: list[str]) -> None:
    indent = "  " * depth
    attrs = "".join(f' {k}="{_escape_attr(v)}"' for k, v in sorted(el.attrs))
    if not el.children:
        if el.text:
            out.append(f"{indent}<{el.tag}{attrs}>{_escape_text(el.text)}</{el.tag}>")
        else:
            out.append(f"{indent}<{el.tag}{attrs}/>")
        return
    out.append(f"{indent}<{el.tag}{attrs}>")
    if el.text:
        out.append(f"{indent}  {_escape_text(el.text)}")
    for child in el.children:
        _emit(child, depth + 1, out)
    out.append(f"{indent}</{el.tag}>")


def serialize_xml(doc: XmlDoc) -> str:
    out = [XML_DECLARATION]
    _emit(doc.root, 0, out)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# paths

_STEP_RE = re.compile(
    r"/(?P<tag>[A-Za-z_][A-Za-z0-9_.\-]*)"
    r"(?:\[(?:@(?P<attr>[A-Za-z_][A-Za-z0-9_.\-]*)=(?:'(?P<sq>[^']*)'|\"(?P<dq>[^\"]*)\")"
    r"|(?P<index>[0-9]+))\])?"
)


@dataclass(frozen=True)
class Step:
    tag: str
    attr: tuple[str, str] | None = None
    index: int | None = None

    def __str__(self) -> str:
        if self.attr is not None:
            name, value = self.attr
            quoted = f'"{value}"' if "'" in value else f"'{value}'"
            return f"{self.tag}[@{name}={quoted}]"
        if self.index is not None:
            return f"{self.tag}[{self.index}]"
        return self.tag


@dataclass(frozen=True)
class XmlPath:
    steps: tuple[Step, ...]

    @classmethod
    def parse(cls, text: str) -> "XmlPath":
        pos = 0
        steps = []
        while pos < len(text):
            m = _STEP_RE.match(text, pos)
            if m is None:
                raise PathSyntaxError(f"bad path {text!r} at offset {pos}")
            attr = None
            index = None
            if m.group("attr") is not None:
                value = m.group("sq") if m.group("sq") is not None else m.group("dq")
                attr = (m.group("attr"), value)
            elif m.group("index") is not None:
                index = int(m.group("index"))
                if index < 1:
                    raise PathSyntaxError(f"path indices are 1-based: {text!r}")
            steps.append(Step(m.group("tag"), attr, index))
            pos = m.end()
        if not steps:
            raise PathSyntaxError(f"empty path {text!r}")
        return cls(tuple(steps))

    def __str__(self) -> str:
        return "".join("/" + str(s) for s in self.steps)


def as_path(path: Union[str, XmlPath]) -> XmlPath:
    return path if isinstance(path, XmlPath) else XmlPath.parse(path)


def _select(candidates: list[tuple[tuple[int, ...], Element]], step: Step):
    matched = [(ref, el) for ref, el in candidates if el.tag == step.tag]
    if step.attr is not None:
        name, value = step.attr
        return [(ref, el) for ref, el in matched if el.get(name) == value]
    if step.index is not None:
        return matched[step.index - 1 : step.index]
    return matched


def resolve_path(doc: XmlDoc, path: Union[str, XmlPath]) -> list[tuple[int, ...]]:
    """Return references (child-index tuples from the root) of every node
    matching ``path``, in document order."""
    path = as_path(path)
    current = _select([((), doc.root)], path.steps[0])
    for step in path.steps[1:]:
        nxt = []
        for ref, el in current:
            children = [(ref + (i,), c) for i, c in enumerate(el.children)]
            nxt.extend(_select(children, step))
        current = nxt
    return [ref for ref, _ in current]


# ---------------------------------------------------------------------------
# transforms


@dataclass(frozen=True)
class SetAttr:
    path: XmlPath
    attr: str
    value: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", as_path(self.path))
        if not self.attr or not is_xml_name(self.attr):
            raise TransformError(f"invalid attribute name {self.attr!r}", str(self.path))


@dataclass(frozen=True)
class AddChild:
    parent_path: XmlPath
    tag: str
    attrs: Attrs = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "parent_path", as_path(self.parent_path))
        if isinstance(self.attrs, Mapping):
            object.__setattr__(self, "attrs", tuple(self.attrs.items()))
        else:
            object.__setattr__(self, "attrs", tuple(tuple(p) for p in self.attrs))
        if not is_xml_name(self.tag):
            raise TransformError(f"invalid tag name {self.tag!r}", str(self.parent_path))


@dataclass(frozen=True)
class RemoveNode:
    path: XmlPath

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", as_path(self.path))


Transform = Union[SetAttr, AddChild, RemoveNode]


def _unique(doc: XmlDoc, path: XmlPath) -> tuple[int, ...]:
    refs = resolve_path(doc, path)
    if not refs:
        raise NoMatch(f"path {path} matches no element", str(path))
    if len(refs) > 1:
        raise AmbiguousPath(f"path {path} matches {len(refs)} elements", str(path))
    return refs[0]


def _rebuild(el: Element, ref: tuple[int, ...], fn) -> Element | None:
    if not ref:
        return fn(el)
    i = ref[0]
    new_child = _rebuild(el.children[i], ref[1:], fn)
    kids = list(el.children)
    if new_child is None:
        del kids[i]
    else:
        kids[i] = new_child
    return replace(el, children=tuple(kids))


def apply_transform(doc: XmlDoc, t: Transform) -> XmlDoc:
    if isinstance(t, SetAttr):
        ref = _unique(doc, t.path)

        def set_attr(el: Element) -> Element:
            attrs = list(el.attrs)
            for i, (k, _) in enumerate(attrs):
                if k == t.attr:
                    attrs[i] = (k, t.value)
                    break
            else:
                attrs.append((t.attr, t.value))
            return replace(el, attrs=tuple(attrs))

        return XmlDoc(_rebuild(doc.root, ref, set_attr))
    if isinstance(t, AddChild):
        ref = _unique(doc, t.parent_path)
        child = Element(t.tag, t.attrs)
        return XmlDoc(
            _rebuild(doc.root, ref, lambda el: replace(el, children=el.children + (child,)))
        )
    if isinstance(t, RemoveNode):
        ref = _unique(doc, t.path)
        if not ref:
            raise TransformError("cannot remove the root element", str(t.path))
        return XmlDoc(_rebuild(doc.root, ref, lambda el: None))
    raise TypeError(f"not a transform: {t!r}")


def apply_transforms(doc: XmlDoc, transforms) -> XmlDoc:
    for t in transforms:
        doc = apply_transform(doc, t)
    return doc


def transform_to_dict(t: Transform) -> dict:
    if isinstance(t, SetAttr):
        return {"op": "set_attr", "path": str(t.path), "attr": t.attr, "value": t.value}
    if isinstance(t, AddChild):
        return {
            "op": "add_child",
            "parent": str(t.parent_path),
            "tag": t.tag,
            "attrs": dict(t.attrs),
        }
    return {"op": "remove", "path": str(t.path)}


def transform_from_dict(d: Mapping) -> Transform:
    """Inverse of :func:`transform_to_dict`; also the project-manifest form."""
    op = d.get("op")
    try:
        if op == "set_attr":
            return SetAttr(d["path"], d["attr"], str(d["value"]))
        if op == "add_child":
            attrs = {str(k): str(v) for k, v in dict(d.get("attrs", {})).items()}
            return AddChild(d["parent"], d["tag"], attrs)
        if op == "remove":
            return RemoveNode(d["path"])
    except KeyError as exc:
        raise TransformError(f"transform {op!r} lacks field {exc.args[0]!r}") from None
    raise TransformError(f"unknown transform op {op!r}")
