"""The data-analyst role: prompt construction, reply parsing, and spec validation.

One completion covers all three analyst tasks (insights, visualization,
narration) because the prompt ends with a single combined JSON format. Spec
validation here is structural only; deep Vega-Lite validity is established
when the renderer accepts or rejects the spec.
"""

import json

from .errors import PreconditionError
from .ingest import DEFAULT_PROMPT_ROWS, load_template, render_table_text
from .model import (
    AnalystOutput,
    DataDescription,
    DataTable,
    Insight,
    PromptText,
    RepairReport,
    ValidationReport,
    VisualizationSpec,
    Violation,
    parse_insight_type,
    parse_visualization_type,
    visualization_structure_violations,
)
from .runtime import ChatSession, ContractViolation, SchemaError, extract_json, repair_loop

ANALYST_KEYS = ("Insights", "Visualization", "Visualization_Type", "Narration")

MAX_TITLE_WORDS = 10
INSIGHT_COUNT_BAND = (1, 10)


def build_analyst_prompt(description: DataDescription, table: DataTable,
                         max_rows: int | None = DEFAULT_PROMPT_ROWS) -> PromptText:
    """Fill the analyst template with the table description and rendered table."""
    text = load_template("analyst")
    text = text.replace("{{description}}", description.text)
    text = text.replace("{{table}}", render_table_text(table, max_rows))
    return PromptText(text=text, template_id="analyst")


def _parse_insight(item, position: int) -> Insight:
    path = f"Insights[{position}]"
    if not isinstance(item, dict):
        raise SchemaError(path, "insight entry must be an object")
    if "insight" not in item:
        raise SchemaError(f"{path}.insight", "missing key")
    text = item["insight"]
    if not isinstance(text, str) or not text.strip():
        raise SchemaError(f"{path}.insight", "must be a non-empty string")
    if "type" not in item:
        raise SchemaError(f"{path}.type", "missing key")
    types = item["type"]
    if not isinstance(types, list) or not types:
        raise SchemaError(f"{path}.type", "must be a non-empty list of insight types")
    return Insight(insight=text, types=tuple(parse_insight_type(t) for t in types))


def parse_analyst_response(raw: str, table: DataTable) -> AnalystOutput:
    """Parse the analyst's four-key reply into an AnalystOutput."""
    value = extract_json(raw)
    if not isinstance(value, dict):
        raise SchemaError("", "reply is not a JSON object")
    for key in ANALYST_KEYS:
        if key not in value:
            raise SchemaError(key, "missing key")
    insights_raw = value["Insights"]
    if not isinstance(insights_raw, list) or not insights_raw:
        raise SchemaError("Insights", "must be a non-empty list")
    insights = tuple(_parse_insight(item, i) for i, item in enumerate(insights_raw))
    spec = value["Visualization"]
    if not isinstance(spec, dict):
        raise SchemaError("Visualization", "must be a JSON object")
    vis_type_raw = value["Visualization_Type"]
    if not isinstance(vis_type_raw, str):
        raise SchemaError("Visualization_Type", "must be a string")
    vis_type = parse_visualization_type(vis_type_raw)
    narration = value["Narration"]
    if not isinstance(narration, str) or not narration.strip():
        raise SchemaError("Narration", "must be a non-empty string")
    return AnalystOutput(
        insights=insights,
        visualization=VisualizationSpec(spec=spec, vis_type=vis_type),
        narration=narration,
    )


def _mark_type(layer: dict) -> str | None:
    mark = layer.get("mark")
    if isinstance(mark, str):
        return mark
    if isinstance(mark, dict) and isinstance(mark.get("type"), str):
        return mark["type"]
    return None


def _iter_encodings(spec: dict):
    """Yield (path, encoding dict) for the top level and every layer."""
    if isinstance(spec.get("encoding"), dict):
        yield "encoding", spec["encoding"]
    layers = spec.get("layer")
    if isinstance(layers, list):
        for i, layer in enumerate(layers):
            if isinstance(layer, dict) and isinstance(layer.get("encoding"), dict):
                yield f"layer[{i}].encoding", layer["encoding"]


def _layers(spec: dict) -> list[dict]:
    layers = spec.get("layer")
    if isinstance(layers, list):
        return [l for l in layers if isinstance(l, dict)]
    return [spec]


def _title_text(spec: dict) -> str | None:
    title = spec.get("title")
    if isinstance(title, str):
        return title
    if isinstance(title, dict) and isinstance(title.get("text"), str):
        return title["text"]
    return None


def validate_visualization(spec: VisualizationSpec) -> ValidationReport:
    """Report structural violations and presentation advisories for a spec.

    Never raises: violations are fatal to the repair loop, advisories are not.
    """
    violations = []
    advisories = []
    for message in visualization_structure_violations(spec.spec):
        code = "layer-rule" if "layer" in message else "structure"
        violations.append(Violation(code, "", message))
    if isinstance(spec.spec, dict):
        for path, encoding in _iter_encodings(spec.spec):
            for channel, defn in encoding.items():
                if isinstance(defn, dict) and defn.get("field") == "index":
                    violations.append(
                        Violation(
                            "index-encoded",
                            f"{path}.{channel}",
                            'the "index" column must not be visualized',
                        )
                    )
        layers = _layers(spec.spec)
        if spec.vis_type == "line":
            has_points = any(
                isinstance(l.get("mark"), dict) and l["mark"].get("point")
                for l in layers
            ) or any(_mark_type(l) in ("point", "circle") for l in layers)
            if not has_points:
                advisories.append(
                    Violation("line-points", "", "line chart should include data points")
                )
        if spec.vis_type == "pie":
            if not any(_mark_type(l) == "text" for l in layers):
                advisories.append(
                    Violation(
                        "pie-label", "",
                        "pie chart should display percentages via a text layer",
                    )
                )
        title = _title_text(spec.spec)
        if title is not None and len(title.split()) > MAX_TITLE_WORDS:
            advisories.append(
                Violation(
                    "title-length", "title",
                    f"title has {len(title.split())} words; keep it under {MAX_TITLE_WORDS}",
                )
            )
    return ValidationReport(violations=tuple(violations), advisories=tuple(advisories))


def run_analyst(session: ChatSession, description: DataDescription, table: DataTable,
                max_attempts: int = 3,
                max_rows: int | None = DEFAULT_PROMPT_ROWS,
                ) -> tuple[AnalystOutput, ValidationReport, RepairReport]:
    """Run the analyst prompt through the repair loop until the reply validates."""
    if table.row_count == 0:
        raise PreconditionError("cannot analyze a table with no rows")
    prompt = build_analyst_prompt(description, table, max_rows)

    def parse_and_validate(raw: str):
        try:
            output = parse_analyst_response(raw, table)
        except ContractViolation:
            raise
        except Exception as e:
            raise ContractViolation([str(e)]) from e
        report = validate_visualization(output.visualization)
        count = len(output.insights)
        low, high = INSIGHT_COUNT_BAND
        if not low <= count <= high:
            report = report.merged(ValidationReport(advisories=(
                Violation("insight-count", "Insights",
                          f"{count} insights is outside the expected {low}..{high} band"),
            )))
        if not report.passing:
            raise ContractViolation([str(v) for v in report.violations])
        return output, report

    (output, report), repair = repair_loop(session, prompt, parse_and_validate, max_attempts)
    return output, report, repair


def analyst_output_to_json(output: AnalystOutput) -> dict:
    """Serialize an AnalystOutput mirroring the analyst reply format exactly."""
    return {
        "Insights": [
            {"insight": ins.insight, "type": list(ins.types)} for ins in output.insights
        ],
        "Visualization": output.visualization.spec,
        "Visualization_Type": output.visualization.vis_type,
        "Narration": output.narration,
    }


def analyst_output_from_json(value: dict, table: DataTable) -> AnalystOutput:
    """Rebuild an AnalystOutput from a persisted analyst.json payload."""
    return parse_analyst_response(json.dumps(value), table)
