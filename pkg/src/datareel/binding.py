"""SVG parsing, data binding, target resolution, and annotation diffing.

Binding relies entirely on renderer-emitted metadata: group role markers
(data-role) and per-datum attributes (data-row, data-series). Annotation
elements are recovered by a structural diff between the base and annotated
renderings, keyed on content rather than geometry so re-layout never creates
false positives.
"""

import math
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

from .errors import ContractError, PreconditionError
from .model import AnimationDirective, DataTable, ValidationReport, Violation


class XmlParseError(PreconditionError):
    def __init__(self, position):
        super().__init__(f"XML parse error at line {position[0]}, column {position[1]}")
        self.position = position


class NotSvg(PreconditionError):
    pass


class UnboundMark(ContractError):
    def __init__(self, element_id: str, detail: str = "carries no data-row metadata"):
        super().__init__(f"mark element {element_id!r} {detail}")
        self.element_id = element_id


class UnresolvedTarget(ContractError):
    def __init__(self, directive: AnimationDirective):
        super().__init__(
            f"no elements resolve for target {directive.target!r} (index {list(directive.index)})"
        )
        self.directive = directive


# Attributes excluded from diff keys: layering annotations can shift layout,
# so identity must not depend on geometry. Synthesized ids are positional and
# excluded for the same reason.
GEOMETRY_ATTRS = frozenset({
    "x", "y", "x1", "y1", "x2", "y2", "cx", "cy", "r", "rx", "ry",
    "d", "points", "transform", "width", "height", "dx", "dy", "viewBox",
})


@dataclass
class SvgElement:
    id: str
    tag: str
    attrs: dict[str, str]
    text: str
    children: tuple["SvgElement", ...] = ()

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(self.attrs.get("class", "").split())


@dataclass
class SvgDoc:
    """Parsed SVG tree with unique element ids in stable document order."""

    root: SvgElement
    elements: list[SvgElement] = field(default_factory=list)
    by_id: dict[str, SvgElement] = field(default_factory=dict)
    parent: dict[str, str | None] = field(default_factory=dict)
    namespace: str = ""

    def ancestors(self, element_id: str) -> list[SvgElement]:
        """Ancestors of an element ordered root-first."""
        chain = []
        current = self.parent.get(element_id)
        while current is not None:
            chain.append(self.by_id[current])
            current = self.parent.get(current)
        chain.reverse()
        return chain

    def role_path(self, element_id: str) -> tuple[str, ...]:
        return tuple(
            a.attrs["data-role"] for a in self.ancestors(element_id) if "data-role" in a.attrs
        )

    def to_text(self) -> str:
        """Serialize with every element id materialized, for export and styling."""
        out: list[str] = []

        def emit(el: SvgElement):
            attrs = {"id": el.id}
            attrs.update((k, v) for k, v in el.attrs.items() if k != "id")
            if el is self.root and self.namespace:
                attrs["xmlns"] = self.namespace
            parts = "".join(f" {k}={quoteattr(v)}" for k, v in attrs.items())
            if not el.children and not el.text:
                out.append(f"<{el.tag}{parts}/>")
                return
            out.append(f"<{el.tag}{parts}>")
            if el.text:
                out.append(escape(el.text))
            for child in el.children:
                emit(child)
            out.append(f"</{el.tag}>")

        emit(self.root)
        return "".join(out)


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_svg(raw: str) -> SvgDoc:
    """Parse SVG text, synthesizing ids "e0","e1",... for id-less elements."""
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as e:
        raise XmlParseError(e.position) from None
    if _local_name(root.tag) != "svg":
        raise NotSvg(f"root element is <{_local_name(root.tag)}>, expected <svg>")
    namespace = ""
    if root.tag.startswith("{"):
        namespace = root.tag[1:].rsplit("}", 1)[0]

    used_ids = set()
    for node in root.iter():
        explicit = node.get("id")
        if explicit is not None:
            if explicit in used_ids:
                raise PreconditionError(f"duplicate element id {explicit!r}")
            used_ids.add(explicit)

    doc = SvgDoc(root=None, namespace=namespace)  # root assigned below
    counter = 0

    def build(node) -> SvgElement:
        nonlocal counter
        eid = node.get("id")
        if eid is None:
            while f"e{counter}" in used_ids:
                counter += 1
            eid = f"e{counter}"
            used_ids.add(eid)
        attrs = {_local_name(k): v for k, v in node.attrib.items()}
        element = SvgElement(
            id=eid,
            tag=_local_name(node.tag),
            attrs=attrs,
            text=(node.text or "").strip(),
        )
        doc.elements.append(element)
        doc.by_id[eid] = element
        children = tuple(build(child) for child in node)
        element.children = children
        for child in children:
            doc.parent[child.id] = eid
        return element

    doc.root = build(root)
    doc.parent.setdefault(doc.root.id, None)
    return doc


@dataclass(frozen=True)
class MarkEntry:
    roles: frozenset
    data_rows: frozenset
    series_key: str | None = None


@dataclass
class MarkIndex:
    """Mapping from element ids to roles, bound data rows, and series keys."""

    entries: dict[str, MarkEntry] = field(default_factory=dict)

    def ids_with_role(self, role: str) -> frozenset:
        return frozenset(eid for eid, e in self.entries.items() if role in e.roles)

    def mark_ids(self) -> frozenset:
        return self.ids_with_role("mark")

    def to_json(self) -> dict:
        return {
            eid: {
                "roles": sorted(entry.roles),
                "data_rows": sorted(entry.data_rows),
                "series_key": entry.series_key,
            }
            for eid, entry in sorted(self.entries.items())
        }

    @classmethod
    def from_json(cls, value: dict) -> "MarkIndex":
        return cls(entries={
            eid: MarkEntry(
                roles=frozenset(entry["roles"]),
                data_rows=frozenset(entry["data_rows"]),
                series_key=entry.get("series_key"),
            )
            for eid, entry in value.items()
        })


def _parse_data_rows(element: SvgElement, row_count: int | None) -> frozenset:
    raw = element.attrs["data-row"]
    if raw == "":
        return frozenset()
    try:
        rows = frozenset(int(part) for part in raw.split(";"))
    except ValueError:
        raise UnboundMark(element.id, f"carries malformed data-row {raw!r}") from None
    if any(r < 0 for r in rows):
        raise UnboundMark(element.id, f"carries negative data-row {raw!r}")
    if row_count is not None and any(r >= row_count for r in rows):
        raise UnboundMark(
            element.id, f"references rows outside the table ({raw!r}, {row_count} rows)"
        )
    return rows


def _mark_elements(group: SvgElement):
    for child in group.children:
        if child.tag == "g":
            yield from _mark_elements(child)
        else:
            yield child


def index_marks(svg: SvgDoc, table: DataTable | None = None) -> MarkIndex:
    """Build the mark index from renderer role markers and per-datum metadata."""
    entries: dict[str, MarkEntry] = {}
    for element in svg.elements:
        role = element.attrs.get("data-role")
        if role in ("axis", "legend", "title"):
            entries[element.id] = MarkEntry(roles=frozenset({role}), data_rows=frozenset())
        elif role == "marks":
            for mark in _mark_elements(element):
                if "data-row" not in mark.attrs:
                    raise UnboundMark(mark.id)
                entries[mark.id] = MarkEntry(
                    roles=frozenset({"mark"}),
                    data_rows=_parse_data_rows(mark, table.row_count if table else None),
                    series_key=mark.attrs.get("data-series"),
                )
    return MarkIndex(entries=entries)


def with_annotations(index: MarkIndex, svg: SvgDoc, annotation_ids) -> MarkIndex:
    """Extend a mark index with annotation-role entries for diffed elements."""
    entries = dict(index.entries)
    for eid in annotation_ids:
        element = svg.by_id.get(eid)
        rows = frozenset()
        series = None
        if element is not None and "data-row" in element.attrs:
            rows = _parse_data_rows(element, None)
            series = element.attrs.get("data-series")
        previous = entries.get(eid)
        if previous is not None:
            entries[eid] = MarkEntry(
                roles=previous.roles | {"annotation"},
                data_rows=previous.data_rows | rows,
                series_key=previous.series_key or series,
            )
        else:
            entries[eid] = MarkEntry(
                roles=frozenset({"annotation"}), data_rows=rows, series_key=series,
            )
    return MarkIndex(entries=entries)


_STRUCTURE_KEYWORDS = {
    "axis": ("axis", "axes"),
    "legend": ("legend",),
    "title": ("title",),
}


def resolve_targets(directive: AnimationDirective, index: MarkIndex) -> frozenset:
    """Resolve a directive to element ids.

    Row indices take priority (machine-checkable); the free-text target adds
    structural keyword matches (axes, legend, title, all/chart) or, failing
    those, series-key substring matches. The union of both routes is returned;
    an empty result raises UnresolvedTarget.
    """
    result = set()
    if directive.index:
        wanted = set(directive.index)
        for eid, entry in index.entries.items():
            if "mark" in entry.roles and entry.data_rows & wanted:
                result.add(eid)
    words = set(re.findall(r"[a-z]+", directive.target.lower()))
    keyword_hits = set()
    for role, keywords in _STRUCTURE_KEYWORDS.items():
        if words & set(keywords):
            keyword_hits |= index.ids_with_role(role)
    if words & {"all", "chart"}:
        keyword_hits |= index.mark_ids()
    if not keyword_hits:
        target_lower = directive.target.lower()
        for eid, entry in index.entries.items():
            if "mark" in entry.roles and entry.series_key:
                if entry.series_key.lower() in target_lower:
                    keyword_hits.add(eid)
    result |= keyword_hits
    if not result:
        raise UnresolvedTarget(directive)
    return frozenset(result)


def _diff_key(doc: SvgDoc, element: SvgElement):
    attrs = frozenset(
        (k, v) for k, v in element.attrs.items()
        if k not in GEOMETRY_ATTRS and k != "id"
    )
    return (element.tag, doc.role_path(element.id), attrs, element.text)


def diff_annotations(base: SvgDoc, annotated: SvgDoc) -> list[str]:
    """Ids of annotated-document elements with no structural match in the base.

    Elements are keyed by tag, role path, geometry-free attributes, and text;
    matching uses multiset semantics, so reordering content-equal elements
    yields an empty diff and injecting k elements yields exactly k ids.
    Container <g> elements are structural and never reported; their contents
    are diffed individually.
    """
    base_keys = Counter(
        _diff_key(base, el) for el in base.elements
        if el is not base.root and el.tag != "g"
    )
    extras = []
    for element in annotated.elements:
        if element is annotated.root or element.tag == "g":
            continue
        key = _diff_key(annotated, element)
        if base_keys[key] > 0:
            base_keys[key] -= 1
        else:
            extras.append(element.id)
    return extras


def _coords(element: SvgElement) -> tuple[float, float] | None:
    for xk, yk in (("x", "y"), ("cx", "cy"), ("x1", "y1")):
        if xk in element.attrs and yk in element.attrs:
            try:
                return float(element.attrs[xk]), float(element.attrs[yk])
            except ValueError:
                return None
    return None


def match_annotation_directives(annotation_ids, directives, index: MarkIndex,
                                svg: SvgDoc | None = None,
                                ) -> tuple[dict[int, list[str]], ValidationReport]:
    """Greedily assign annotation elements to annotation directives.

    Each element goes to the directive whose rows lie nearest, by data binding
    when the element carries row metadata, else by geometric proximity to the
    marks bound to the directive's rows. Unassignable elements attach to the
    earliest directive. Returns assignments keyed by directive position plus
    advisories for empty directives and unmatchable elements.
    """
    assignments: dict[int, list[str]] = {i: [] for i in range(len(directives))}
    advisories: list[Violation] = []
    if not directives:
        if annotation_ids:
            advisories.append(Violation(
                "unmatched-annotation", "",
                f"{len(annotation_ids)} annotation elements but no annotation directives",
            ))
        return assignments, ValidationReport(advisories=tuple(advisories))

    row_positions: dict[int, tuple[float, float]] = {}
    if svg is not None:
        for eid, entry in index.entries.items():
            if "mark" not in entry.roles:
                continue
            pos = _coords(svg.by_id[eid]) if eid in svg.by_id else None
            if pos is None:
                continue
            for row in entry.data_rows:
                row_positions.setdefault(row, pos)

    for eid in annotation_ids:
        entry = index.entries.get(eid)
        rows = entry.data_rows if entry is not None else frozenset()
        if not rows and svg is not None and eid in svg.by_id:
            element = svg.by_id[eid]
            if "data-row" in element.attrs:
                rows = _parse_data_rows(element, None)
        best: tuple[float, int] | None = None
        if rows:
            for i, directive in enumerate(directives):
                if not directive.index:
                    continue
                if rows & set(directive.index):
                    distance = 0.0
                else:
                    distance = min(abs(a - b) for a in rows for b in directive.index)
                if best is None or distance < best[0]:
                    best = (distance, i)
        elif svg is not None and eid in svg.by_id:
            pos = _coords(svg.by_id[eid])
            if pos is not None:
                for i, directive in enumerate(directives):
                    points = [row_positions[r] for r in directive.index if r in row_positions]
                    if not points:
                        continue
                    distance = min(math.dist(pos, p) for p in points)
                    if best is None or distance < best[0]:
                        best = (distance, i)
        if best is None:
            best = (math.inf, 0)  # unassignable: attach to the earliest directive
        assignments[best[1]].append(eid)

    for i, directive in enumerate(directives):
        if not assignments[i]:
            advisories.append(Violation(
                "directive-without-elements", f"annotation[{i}]",
                f"no annotation elements matched directive for {directive.nar!r}",
            ))
    return assignments, ValidationReport(advisories=tuple(advisories))
