"""CSV ingestion, prompt-embeddable table rendering, and the table-description step.

The rendered table text makes the implicit 0-based row index explicit
("index | col | ..."), because downstream directives reference rows by that
index. Prompts are built from stored templates that must stay byte-identical
to their source outside the {{placeholder}} markers.
"""

import csv
import io
import re
from importlib import resources

from .errors import PreconditionError
from .model import Cell, DataDescription, DataTable, PromptText
from .runtime import ChatSession, SchemaError, complete, extract_json


class EmptyInput(PreconditionError):
    pass


class RaggedRows(PreconditionError):
    def __init__(self, row_number: int):
        super().__init__(f"row {row_number} has a different cell count than the header")
        self.row_number = row_number


class DuplicateColumn(PreconditionError):
    def __init__(self, name: str):
        super().__init__(f"duplicate column name: {name!r}")
        self.name = name


class EmptyDescription(SchemaError):
    def __init__(self):
        super().__init__("Description", "description text is empty")


_NUMBER_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_INT_RE = re.compile(r"[+-]?\d+")

DEFAULT_PROMPT_ROWS = 100


def _type_cell(raw: str) -> Cell:
    if raw == "":
        return None
    stripped = raw.strip()
    if _INT_RE.fullmatch(stripped):
        return int(stripped)
    if _NUMBER_RE.fullmatch(stripped):
        return float(stripped)
    return raw


def parse_csv(raw: str, title: str) -> DataTable:
    """Parse RFC-4180-style CSV with a header row into a DataTable.

    Numeric-looking cells become numbers; empty cells become null. Raises
    EmptyInput, RaggedRows(row_number), or DuplicateColumn(name).
    """
    if not raw.strip():
        raise EmptyInput("CSV input is empty")
    reader = csv.reader(io.StringIO(raw, newline=""))
    rows = [row for row in reader if row != []]
    if not rows:
        raise EmptyInput("CSV input has no header row")
    header = rows[0]
    seen = set()
    for name in header:
        if not name.strip():
            raise PreconditionError("CSV header contains an empty column name")
        if name in seen:
            raise DuplicateColumn(name)
        seen.add(name)
    data = []
    for number, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise RaggedRows(number)
        data.append([_type_cell(cell) for cell in row])
    columns = tuple(
        (name, tuple(row[i] for row in data)) for i, name in enumerate(header)
    )
    return DataTable(title=title, columns=columns, row_count=len(data))


def format_cell(cell: Cell) -> str:
    """Render a cell for prompts and CSV output (shortest round-trip form)."""
    if cell is None:
        return ""
    return str(cell)


def serialize_csv(table: DataTable) -> str:
    """Write a table back out as RFC-4180 CSV; inverse of parse_csv on typed tables."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.column_names)
    for row in table.rows():
        writer.writerow([format_cell(row[name]) for name in table.column_names])
    return buf.getvalue()


def render_table_text(table: DataTable, max_rows: int | None = None) -> str:
    """Render a table as deterministic prompt text with explicit row indices.

    Header line, then one " | "-joined line per row prefixed with the 0-based
    row index; appends a truncation note when rows were elided.
    """
    if max_rows is not None and max_rows < 1:
        raise PreconditionError("max_rows must be positive")
    lines = ["index | " + " | ".join(table.column_names)]
    shown = table.row_count if max_rows is None else min(max_rows, table.row_count)
    for i in range(shown):
        row = table.row(i)
        lines.append(f"{i} | " + " | ".join(format_cell(row[n]) for n in table.column_names))
    elided = table.row_count - shown
    if elided > 0:
        lines.append(f"... ({elided} more rows)")
    return "\n".join(lines)


def load_template(template_id: str) -> str:
    """Load one of the three stored prompt templates by id."""
    path = resources.files(__package__) / "prompts" / f"{template_id}_prompt.txt"
    return path.read_text(encoding="utf-8")


def build_description_prompt(table: DataTable, max_rows: int | None = DEFAULT_PROMPT_ROWS) -> PromptText:
    """Fill the table-description template with the rendered table and title."""
    if not table.title.strip():
        raise PreconditionError("table must carry a title")
    text = load_template("description")
    text = text.replace("{{table}}", render_table_text(table, max_rows))
    text = text.replace("{{title}}", table.title)
    return PromptText(text=text, template_id="description")


def parse_description_response(raw: str) -> DataDescription:
    """Extract the "Description" string from an agent reply."""
    value = extract_json(raw)
    if not isinstance(value, dict):
        raise SchemaError("", "reply is not a JSON object")
    if "Description" not in value:
        raise SchemaError("Description", "missing key")
    text = value["Description"]
    if not isinstance(text, str):
        raise SchemaError("Description", f"expected a string, got {type(text).__name__}")
    if not text.strip():
        raise EmptyDescription()
    return DataDescription(text=text)


def describe(session: ChatSession, table: DataTable,
             max_rows: int | None = DEFAULT_PROMPT_ROWS) -> DataDescription:
    """Run the perception step: prompt the backend and parse the description."""
    prompt = build_description_prompt(table, max_rows)
    reply = complete(session, prompt.text)
    return parse_description_response(reply)
