"""Shared domain types and the closed vocabularies every module validates against.

The four vocabularies (insight types, visualization types, animation names,
annotation types) are fixed lists; matching is exact and case-sensitive after
trimming surrounding whitespace. All types here are immutable after
construction and safe to share across threads.
"""

from dataclasses import dataclass, field
from enum import Enum

from .errors import ContractError

Cell = str | int | float | None


class UnknownInsightType(ContractError):
    def __init__(self, name: str):
        super().__init__(f"unknown insight type: {name!r}")
        self.name = name


class UnknownVisualizationType(ContractError):
    def __init__(self, name: str):
        super().__init__(f"unknown visualization type: {name!r}")
        self.name = name


class UnknownAnimation(ContractError):
    def __init__(self, name: str):
        super().__init__(f"unknown animation: {name!r}")
        self.name = name


class UnknownAnnotationType(ContractError):
    def __init__(self, name: str):
        super().__init__(f"unknown annotation type: {name!r}")
        self.name = name


class IndexOutOfRange(ContractError):
    def __init__(self, row: int, row_count: int):
        super().__init__(f"row index {row} out of range for table with {row_count} rows")
        self.row = row
        self.row_count = row_count


INSIGHT_TYPES = (
    "Change Over Time",
    "Characterize Distribution",
    "Cluster",
    "Comparison",
    "Correlate",
    "Determine Range",
    "Deviation",
    "Find Anomalies",
    "Find Extremum",
    "Magnitude",
    "Part to Whole",
    "Sort",
    "Trend",
)

VISUALIZATION_TYPES = ("bar", "scatter", "pie", "line")

ENTRANCE_ANIMATIONS = (
    "Axes-fade-in",
    "Bar-grow-in",
    "Line-wipe-in",
    "Pie-wheel-in",
    "Pie-wheel-in-and-legend-fly-in",
    "Scatter-fade-in",
    "Bar-grow-and-legend-fade-in",
    "Line-wipe-and-legend-fade-in",
    "Fade-in",
    "Float-in",
    "Fly-in",
    "Zoom-in",
)

EMPHASIS_ANIMATIONS = (
    "Bar-bounce",
    "Zoom-in-then-zoom-out",
    "Shine-in-a-short-duration",
    "Highlight-one-and-fade-others",
)

EXIT_ANIMATIONS = ("Fade-out",)

ANIMATIONS = ENTRANCE_ANIMATIONS + EMPHASIS_ANIMATIONS + EXIT_ANIMATIONS

ANNOTATION_TYPES = ("mark label", "circle", "text", "rule", "trend line", "arrow")


class AnimationCategory(Enum):
    ENTRANCE = "entrance"
    EMPHASIS = "emphasis"
    EXIT = "exit"


_ANIMATION_CATEGORY = {name: AnimationCategory.ENTRANCE for name in ENTRANCE_ANIMATIONS}
_ANIMATION_CATEGORY.update({name: AnimationCategory.EMPHASIS for name in EMPHASIS_ANIMATIONS})
_ANIMATION_CATEGORY.update({name: AnimationCategory.EXIT for name in EXIT_ANIMATIONS})


def classify_animation(name: str) -> AnimationCategory:
    """Return the category of a known animation name; raise UnknownAnimation otherwise."""
    key = name.strip()
    try:
        return _ANIMATION_CATEGORY[key]
    except KeyError:
        raise UnknownAnimation(name) from None


def parse_insight_type(name: str) -> str:
    """Exact-match lookup into the 13-name insight vocabulary."""
    key = name.strip() if isinstance(name, str) else name
    if key not in INSIGHT_TYPES:
        raise UnknownInsightType(name)
    return key


def parse_visualization_type(name: str) -> str:
    key = name.strip() if isinstance(name, str) else name
    if key not in VISUALIZATION_TYPES:
        raise UnknownVisualizationType(name)
    return key


def parse_annotation_type(name: str) -> str:
    key = name.strip() if isinstance(name, str) else name
    if key not in ANNOTATION_TYPES:
        raise UnknownAnnotationType(name)
    return key


@dataclass(frozen=True)
class DataTable:
    """Parsed tabular input with ordered columns.

    The implicit row index 0..row_count-1 is the identity that directive
    "index" fields refer to.
    """

    title: str
    columns: tuple[tuple[str, tuple[Cell, ...]], ...]
    row_count: int

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        if any(not name for name in names):
            raise ValueError("column names must be non-empty")
        for name, values in self.columns:
            if len(values) != self.row_count:
                raise ValueError(
                    f"column {name!r} has {len(values)} values, expected {self.row_count}"
                )

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    def column(self, name: str) -> tuple[Cell, ...]:
        for cname, values in self.columns:
            if cname == name:
                return values
        raise KeyError(name)

    def row(self, index: int) -> dict[str, Cell]:
        if not 0 <= index < self.row_count:
            raise IndexOutOfRange(index, self.row_count)
        return {name: values[index] for name, values in self.columns}

    def rows(self) -> list[dict[str, Cell]]:
        return [self.row(i) for i in range(self.row_count)]


@dataclass(frozen=True)
class DataDescription:
    """Natural-language description of a table produced by the perception step."""

    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("description text must be non-empty")


@dataclass(frozen=True)
class Insight:
    insight: str
    types: tuple[str, ...]

    def __post_init__(self):
        if not self.insight.strip():
            raise ValueError("insight text must be non-empty")
        if not self.types:
            raise ValueError("insight must carry at least one type")
        for t in self.types:
            parse_insight_type(t)


@dataclass(frozen=True)
class VisualizationSpec:
    """A Vega-Lite spec plus its declared chart type.

    Structural validity (mark/encoding presence, layer placement rule) is
    reported by the analyst validator rather than enforced at construction,
    so that malformed specs can flow into the repair loop.
    """

    spec: dict
    vis_type: str

    def __post_init__(self):
        parse_visualization_type(self.vis_type)


def visualization_structure_violations(spec) -> list[str]:
    """Check the structural rules a Vega-Lite spec must obey in this pipeline.

    Returns human-readable violation messages; empty means structurally valid.
    The spec must be a JSON object with either top-level "mark"+"encoding" or
    a "layer" list, and when "layer" is present no "mark"/"encoding" may sit
    beside it at the top level.
    """
    if not isinstance(spec, dict):
        return ["visualization spec must be a JSON object"]
    violations = []
    if "layer" in spec:
        if not isinstance(spec["layer"], list) or not spec["layer"]:
            violations.append('"layer" must be a non-empty list')
        for key in ("mark", "encoding"):
            if key in spec:
                violations.append(
                    f'layered spec must not carry a top-level "{key}" key; '
                    'all "mark" and "encoding" keys belong inside "layer"'
                )
    else:
        missing = [key for key in ("mark", "encoding") if key not in spec]
        if missing:
            violations.append(
                "spec without a \"layer\" list must carry top-level "
                + " and ".join(f'"{k}"' for k in missing)
            )
    return violations


@dataclass(frozen=True)
class AnimationDirective:
    animation: str
    narration: str
    target: str
    index: tuple[int, ...]
    explanation: str = ""

    def __post_init__(self):
        classify_animation(self.animation)
        if not self.narration.strip():
            raise ValueError("narration segment must be non-empty")

    @property
    def category(self) -> AnimationCategory:
        return classify_animation(self.animation)


@dataclass(frozen=True)
class AnnotationDirective:
    types: tuple[str, ...]
    description: str
    index: tuple[int, ...]
    nar: str

    def __post_init__(self):
        if not self.types:
            raise ValueError("annotation directive must carry at least one type")
        for t in self.types:
            parse_annotation_type(t)
        if not self.nar.strip():
            raise ValueError("annotation narration segment must be non-empty")


@dataclass(frozen=True)
class AnalystOutput:
    insights: tuple[Insight, ...]
    visualization: VisualizationSpec
    narration: str

    def __post_init__(self):
        if not self.insights:
            raise ValueError("analyst output must carry at least one insight")
        if not self.narration.strip():
            raise ValueError("narration must be non-empty")


@dataclass(frozen=True)
class DesignerOutput:
    annotated_visualization: dict
    animation_directives: tuple[AnimationDirective, ...]
    annotation_directives: tuple[AnnotationDirective, ...]


_PLACEHOLDER_NAMES = ("table", "title", "description", "visualization", "narration")
TEMPLATE_IDS = ("description", "analyst", "designer")


@dataclass(frozen=True)
class PromptText:
    """A fully substituted prompt ready to send to a backend."""

    text: str
    template_id: str

    def __post_init__(self):
        if self.template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template id: {self.template_id!r}")
        residual = [n for n in _PLACEHOLDER_NAMES if "{{" + n + "}}" in self.text]
        if residual:
            raise ValueError(f"prompt still contains placeholders: {residual}")


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str

    def __str__(self):
        where = f" at {self.path}" if self.path else ""
        return f"[{self.code}]{where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    """Fatal violations plus non-blocking advisories from a validator pass."""

    violations: tuple[Violation, ...] = ()
    advisories: tuple[Violation, ...] = ()

    @property
    def passing(self) -> bool:
        return not self.violations

    def merged(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(
            violations=self.violations + other.violations,
            advisories=self.advisories + other.advisories,
        )

    def to_json(self) -> dict:
        return {
            "violations": [vars(v) for v in self.violations],
            "advisories": [vars(a) for a in self.advisories],
        }


@dataclass
class RepairReport:
    """Outcome of a validate-and-retry loop around one agent prompt."""

    attempts: int = 0
    violations_per_attempt: list[list[str]] = field(default_factory=list)
    final_status: str = "ok"

    def to_json(self) -> dict:
        return {
            "attempts": self.attempts,
            "violations_per_attempt": self.violations_per_attempt,
            "final_status": self.final_status,
        }
