"""Independent oracles and random generators shared by unit and acceptance tests.

Everything here is deliberately implemented without touching the code paths it
checks: the CSV oracle is a hand-rolled state machine, the span oracle is a
brute-force all-position scanner, and the SVG generator builds documents from
primitives.
"""

import random

WS_ALPHABET = " \t\n"


def reference_csv_parse(raw: str) -> list[list[str]]:
    """RFC-4180 reference parser: a character state machine, no csv module."""
    rows: list[list[str]] = []
    field_chars: list[str] = []
    row: list[str] = []
    in_quotes = False
    after_quote = False
    started_row = False
    i = 0
    while i < len(raw):
        ch = raw[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < len(raw) and raw[i + 1] == '"':
                    field_chars.append('"')
                    i += 1
                else:
                    in_quotes = False
                    after_quote = True
            else:
                field_chars.append(ch)
        elif ch == '"' and not field_chars and not after_quote:
            in_quotes = True
            started_row = True
        elif ch == ",":
            row.append("".join(field_chars))
            field_chars = []
            after_quote = False
            started_row = True
        elif ch == "\r" and i + 1 < len(raw) and raw[i + 1] == "\n":
            i += 1
            row.append("".join(field_chars))
            rows.append(row)
            row, field_chars, after_quote, started_row = [], [], False, False
        elif ch in ("\n", "\r"):
            row.append("".join(field_chars))
            rows.append(row)
            row, field_chars, after_quote, started_row = [], [], False, False
        else:
            field_chars.append(ch)
            started_row = True
        i += 1
    if field_chars or row or started_row:
        row.append("".join(field_chars))
        rows.append(row)
    return rows


def brute_force_occurrences(narration: str, segment: str) -> list[tuple[int, int]]:
    """All (start, end) matches of segment under whitespace-run-collapsing rules.

    A whitespace run in the segment matches a maximal whitespace run in the
    narration; non-whitespace characters match exactly.
    """
    import re

    parts = re.split(r"(\s+)", segment)
    occurrences = []
    for start in range(len(narration)):
        pos = start
        ok = True
        for part in parts:
            if part == "":
                continue
            if part[0].isspace():
                run_start = pos
                while pos < len(narration) and narration[pos].isspace():
                    pos += 1
                if pos == run_start:
                    ok = False
                    break
            else:
                if narration[pos:pos + len(part)] != part:
                    ok = False
                    break
                pos += len(part)
        if ok and pos > start:
            occurrences.append((start, pos))
    return occurrences


def random_text(rng: random.Random, words: int, alphabet: str = "abcde") -> str:
    tokens = []
    for _ in range(words):
        tokens.append("".join(rng.choice(alphabet) for _ in range(rng.randint(1, 5))))
    return " ".join(tokens)


def random_svg(rng: random.Random, depth: int = 0) -> str:
    """A random SVG document with groups, shapes, text, and mixed attributes."""

    def element(level: int) -> str:
        if level < 2 and rng.random() < 0.35:
            children = "".join(element(level + 1) for _ in range(rng.randint(1, 4)))
            role = f' data-role="{rng.choice(["marks", "axis", "misc"])}"' if rng.random() < 0.4 else ""
            return f"<g{role}>{children}</g>"
        tag = rng.choice(["rect", "circle", "text", "line", "path"])
        attrs = f' x="{rng.randint(0, 500)}" y="{rng.randint(0, 300)}"'
        if rng.random() < 0.5:
            attrs += f' fill="#{rng.randrange(16 ** 6):06x}"'
        if rng.random() < 0.3:
            attrs += f' data-row="{rng.randint(0, 9)}"'
        if tag == "text":
            return f"<text{attrs}>{random_text(rng, rng.randint(1, 3))}</text>"
        return f"<{tag}{attrs}/>"

    body = "".join(element(depth) for _ in range(rng.randint(3, 10)))
    return f'<svg xmlns="http://www.w3.org/2000/svg">{body}</svg>'


def inject_elements(rng: random.Random, svg_text: str, count: int) -> tuple[str, list[str]]:
    """Insert uniquely-marked content elements at random top-level positions.

    Returns the new document plus the data-marker values that identify the
    injected elements.
    """
    assert svg_text.endswith("</svg>")
    head = svg_text[: -len("</svg>")]
    markers = []
    pieces = [head]
    for i in range(count):
        marker = f"inj-{rng.randrange(10 ** 9)}-{i}"
        markers.append(marker)
        tag = rng.choice(["text", "rect", "circle", "line"])
        if tag == "text":
            pieces.append(f'<text data-marker="{marker}" x="1" y="2">note {i}</text>')
        else:
            pieces.append(f'<{tag} data-marker="{marker}" x="1" y="2"/>')
    pieces.append("</svg>")
    return "".join(pieces), markers
