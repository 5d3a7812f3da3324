"""External-tool contracts (renderer, TTS, video synthesizer) with deterministic mocks.

Each contract has a subprocess-backed implementation for real tools and an
in-process mock. The mock renderer emits the binding metadata the pipeline
relies on: <g data-role="..."> groups and per-datum data-row / data-series
attributes on mark elements. The mock TTS speaks at a fixed 0.3 s per token;
the mock synthesizer writes a frame-by-frame visibility manifest instead of
pixels.
"""

import json
import math
import re
import subprocess
import wave
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .binding import NotSvg, UnboundMark, XmlParseError, index_marks, parse_svg
from .errors import AdapterError, PreconditionError
from .model import (
    ValidationReport,
    Violation,
    VisualizationSpec,
    visualization_structure_violations,
)
from .timeline import Span, Timeline, WordTiming, validate_timings, value_at, visible_at


class RendererRejectedSpec(AdapterError):
    def __init__(self, diagnostics: str):
        super().__init__(f"renderer rejected the spec: {diagnostics}")
        self.diagnostics = diagnostics


class RendererCrashed(AdapterError):
    def __init__(self, exit_code: int, detail: str = ""):
        super().__init__(f"renderer crashed (exit {exit_code})" + (f": {detail}" if detail else ""))
        self.exit_code = exit_code


class MetadataMissing(AdapterError):
    def __init__(self, element_id: str):
        super().__init__(f"rendered mark {element_id!r} lacks required data-row metadata")
        self.element_id = element_id


class EmptyNarration(PreconditionError):
    pass


class TtsFailure(AdapterError):
    pass


class SynthFailure(AdapterError):
    pass


PALETTE = (
    "#4c78a8", "#f58518", "#e45756", "#72b7b2", "#54a24b",
    "#eeca3b", "#b279a2", "#ff9da6", "#9d755d", "#bab0ac",
)

_PLOT_LEFT, _PLOT_TOP, _PLOT_RIGHT, _PLOT_BOTTOM = 60.0, 40.0, 600.0, 320.0


def _fmt(value: float) -> str:
    return f"{value:.2f}".rstrip("0").rstrip(".")


def _enc_field(encoding: dict, channel: str) -> str | None:
    defn = encoding.get(channel)
    if isinstance(defn, dict) and isinstance(defn.get("field"), str):
        return defn["field"]
    return None


def _mark_type(layer: dict) -> str | None:
    mark = layer.get("mark")
    if isinstance(mark, str):
        return mark
    if isinstance(mark, dict) and isinstance(mark.get("type"), str):
        return mark["type"]
    return None


def _title_text(spec: dict) -> str | None:
    title = spec.get("title")
    if isinstance(title, str):
        return title
    if isinstance(title, dict) and isinstance(title.get("text"), str):
        return title["text"]
    return None


class MockRenderer:
    """Deterministic structural renderer for Vega-Lite-shaped specs.

    Layer zero renders directly under <g data-role="marks"> (one element per
    datum, or per series for line and pie marks); additional layers render
    under <g data-role="overlay"> groups placed after the marks group, so
    base element identities stay stable between base and annotated renders.
    """

    SUPPORTED_MARKS = ("bar", "line", "point", "circle", "scatter", "square",
                       "arc", "pie", "text", "rule", "tick")

    def render(self, spec: dict) -> str:
        problems = visualization_structure_violations(spec)
        if problems:
            raise RendererRejectedSpec("; ".join(problems))
        layers = spec["layer"] if "layer" in spec else [spec]
        layers = [l for l in layers if isinstance(l, dict)]
        top_data = self._data_values(spec)
        base = layers[0]
        base_data = self._data_values(base) or top_data
        if not base_data:
            raise RendererRejectedSpec("spec carries no inline data values")
        base_enc = base.get("encoding") if isinstance(base.get("encoding"), dict) else None
        if base_enc is None:
            raise RendererRejectedSpec("base layer has no encoding")
        base_mark = _mark_type(base)
        if base_mark not in self.SUPPORTED_MARKS:
            raise RendererRejectedSpec(f"unsupported mark type {base_mark!r}")
        datum_keys = set(base_data[0]) if isinstance(base_data[0], dict) else set()
        for channel, defn in base_enc.items():
            if isinstance(defn, dict) and isinstance(defn.get("field"), str):
                if defn["field"] not in datum_keys:
                    raise RendererRejectedSpec(
                        f"encoding channel {channel!r} references unknown field "
                        f"{defn['field']!r}"
                    )

        x_field = _enc_field(base_enc, "x")
        y_field = _enc_field(base_enc, "y")
        series_field = _enc_field(base_enc, "color") or _enc_field(base_enc, "detail")
        x_order = self._distinct(base_data, x_field)
        y_lo, y_hi = self._numeric_domain(base_data, y_field)

        parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="640" height="360">']
        title = _title_text(spec)
        if title is not None:
            parts.append(
                f'<g data-role="title"><text x="320" y="24">{escape(title)}</text></g>'
            )
        if base_mark not in ("arc", "pie"):
            parts.append(
                '<g data-role="axis" data-axis="x">'
                f'<line x1="{_fmt(_PLOT_LEFT)}" y1="{_fmt(_PLOT_BOTTOM)}" '
                f'x2="{_fmt(_PLOT_RIGHT)}" y2="{_fmt(_PLOT_BOTTOM)}"/>'
                f"<text x=\"330\" y=\"345\">{escape(x_field or '')}</text></g>"
            )
            parts.append(
                '<g data-role="axis" data-axis="y">'
                f'<line x1="{_fmt(_PLOT_LEFT)}" y1="{_fmt(_PLOT_TOP)}" '
                f'x2="{_fmt(_PLOT_LEFT)}" y2="{_fmt(_PLOT_BOTTOM)}"/>'
                f"<text x=\"20\" y=\"180\">{escape(y_field or '')}</text></g>"
            )
        if series_field is not None:
            series_values = self._distinct(base_data, series_field)
            legend_items = "".join(
                f'<text data-series={quoteattr(str(v))} x="612" y="{_fmt(60 + 18 * i)}">'
                f"{escape(str(v))}</text>"
                for i, v in enumerate(series_values)
            )
            parts.append(f'<g data-role="legend">{legend_items}</g>')

        scales = (x_order, y_lo, y_hi)
        parts.append('<g data-role="marks">')
        parts.extend(self._layer_elements(base, base_mark, base_enc, base_data,
                                          scales, base_rows=None))
        parts.append("</g>")

        for k, layer in enumerate(layers[1:], start=1):
            layer_enc = layer.get("encoding") if isinstance(layer.get("encoding"), dict) else {}
            layer_mark = _mark_type(layer)
            if layer_mark not in self.SUPPORTED_MARKS:
                raise RendererRejectedSpec(
                    f"unsupported mark type {layer_mark!r} in layer {k}"
                )
            layer_data = self._data_values(layer) or base_data
            parts.append(f'<g data-role="overlay" data-layer="{k}">')
            parts.extend(self._layer_elements(layer, layer_mark, layer_enc, layer_data,
                                              scales, base_rows=base_data))
            parts.append("</g>")
        parts.append("</svg>")
        return "".join(parts)

    @staticmethod
    def _data_values(node: dict) -> list | None:
        data = node.get("data")
        if isinstance(data, dict) and isinstance(data.get("values"), list) and data["values"]:
            return data["values"]
        return None

    @staticmethod
    def _distinct(data: list, field: str | None) -> list:
        if field is None:
            return []
        seen = []
        for datum in data:
            if isinstance(datum, dict) and field in datum and datum[field] not in seen:
                seen.append(datum[field])
        return seen

    @staticmethod
    def _numeric_domain(data: list, field: str | None) -> tuple[float, float]:
        values = [
            float(d[field]) for d in data
            if field is not None and isinstance(d, dict)
            and isinstance(d.get(field), (int, float)) and not isinstance(d.get(field), bool)
        ]
        if not values:
            return 0.0, 1.0
        return min(values), max(values)

    def _x_pos(self, x_order: list, value) -> float:
        if value not in x_order or len(x_order) <= 1:
            return (_PLOT_LEFT + _PLOT_RIGHT) / 2
        idx = x_order.index(value)
        return _PLOT_LEFT + idx * (_PLOT_RIGHT - _PLOT_LEFT) / (len(x_order) - 1)

    @staticmethod
    def _y_pos(lo: float, hi: float, value) -> float:
        if not isinstance(value, (int, float)) or isinstance(value, bool) or hi == lo:
            return (_PLOT_TOP + _PLOT_BOTTOM) / 2
        frac = (float(value) - lo) / (hi - lo)
        return _PLOT_BOTTOM - frac * (_PLOT_BOTTOM - _PLOT_TOP)

    @staticmethod
    def _match_rows(datum: dict, base_rows: list) -> list[int]:
        matches = []
        for i, row in enumerate(base_rows):
            if not isinstance(row, dict):
                continue
            shared = set(datum) & set(row)
            if shared and all(datum[k] == row[k] for k in shared):
                matches.append(i)
        return matches

    def _layer_elements(self, layer: dict, mark: str, encoding: dict, data: list,
                        scales, base_rows: list | None) -> list[str]:
        x_order, y_lo, y_hi = scales
        x_field = _enc_field(encoding, "x")
        y_field = _enc_field(encoding, "y")
        series_field = _enc_field(encoding, "color") or _enc_field(encoding, "detail")
        text_field = _enc_field(encoding, "text")
        series_values = self._distinct(data, series_field)

        def row_attr(datum: dict, row: int | None) -> str:
            if base_rows is None:
                return f' data-row="{row}"'
            matches = self._match_rows(datum, base_rows)
            if matches:
                return f' data-row="{";".join(str(m) for m in matches)}"'
            return ""

        def series_attr(datum: dict) -> str:
            if series_field is not None and series_field in datum:
                return f" data-series={quoteattr(str(datum[series_field]))}"
            return ""

        def color_for(datum: dict) -> str:
            if series_field is not None and series_field in datum:
                try:
                    return PALETTE[series_values.index(datum[series_field]) % len(PALETTE)]
                except ValueError:
                    pass
            return PALETTE[0]

        out = []
        if mark in ("line", "area"):
            groups: dict = {}
            for i, datum in enumerate(data):
                key = datum.get(series_field) if series_field else None
                groups.setdefault(key, []).append((i, datum))
            for key, members in groups.items():
                points = " L ".join(
                    f"{_fmt(self._x_pos(x_order, d.get(x_field)))} "
                    f"{_fmt(self._y_pos(y_lo, y_hi, d.get(y_field)))}"
                    for _, d in members
                )
                color = (PALETTE[series_values.index(key) % len(PALETTE)]
                         if key is not None and key in series_values else PALETTE[0])
                if base_rows is None:
                    rows = ";".join(str(i) for i, _ in members)
                    row_part = f' data-row="{rows}"'
                else:
                    matched: list[int] = []
                    for _, d in members:
                        matched.extend(self._match_rows(d, base_rows))
                    row_part = (f' data-row="{";".join(str(m) for m in sorted(set(matched)))}"'
                                if matched else "")
                series_part = f" data-series={quoteattr(str(key))}" if key is not None else ""
                out.append(
                    f'<path{row_part}{series_part} d="M {points}" fill="none" '
                    f'stroke="{color}" stroke-width="2"/>'
                )
        elif mark in ("arc", "pie"):
            groups = {}
            for i, datum in enumerate(data):
                key = datum.get(series_field) if series_field else i
                groups.setdefault(key, []).append((i, datum))
            total = len(groups) or 1
            for n, (key, members) in enumerate(groups.items()):
                a0 = 2 * math.pi * n / total
                a1 = 2 * math.pi * (n + 1) / total
                x0, y0 = 320 + 120 * math.cos(a0), 180 + 120 * math.sin(a0)
                x1, y1 = 320 + 120 * math.cos(a1), 180 + 120 * math.sin(a1)
                color = PALETTE[n % len(PALETTE)]
                if base_rows is None:
                    rows = ";".join(str(i) for i, _ in members)
                    row_part = f' data-row="{rows}"'
                else:
                    matched = []
                    for _, d in members:
                        matched.extend(self._match_rows(d, base_rows))
                    row_part = (f' data-row="{";".join(str(m) for m in sorted(set(matched)))}"'
                                if matched else "")
                series_part = (f" data-series={quoteattr(str(key))}"
                               if series_field is not None else "")
                out.append(
                    f'<path{row_part}{series_part} d="M 320 180 L {_fmt(x0)} {_fmt(y0)} '
                    f'A 120 120 0 0 1 {_fmt(x1)} {_fmt(y1)} Z" fill="{color}"/>'
                )
        else:
            for i, datum in enumerate(data):
                if not isinstance(datum, dict):
                    raise RendererRejectedSpec(f"datum {i} is not an object")
                x = self._x_pos(x_order, datum.get(x_field))
                y = self._y_pos(y_lo, y_hi, datum.get(y_field))
                attrs = row_attr(datum, i) + series_attr(datum)
                color = color_for(datum)
                if mark == "bar":
                    out.append(
                        f'<rect{attrs} x="{_fmt(x - 10)}" y="{_fmt(y)}" width="20" '
                        f'height="{_fmt(_PLOT_BOTTOM - y)}" fill="{color}"/>'
                    )
                elif mark in ("point", "circle", "scatter", "square"):
                    out.append(f'<circle{attrs} cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" '
                               f'fill="{color}"/>')
                elif mark == "text":
                    label = str(datum.get(text_field, "")) if text_field else ""
                    out.append(
                        f'<text{attrs} x="{_fmt(x)}" y="{_fmt(y - 8)}">{escape(label)}</text>'
                    )
                elif mark == "rule":
                    if y_field is not None and x_field is None:
                        out.append(
                            f'<line{attrs} x1="{_fmt(_PLOT_LEFT)}" y1="{_fmt(y)}" '
                            f'x2="{_fmt(_PLOT_RIGHT)}" y2="{_fmt(y)}" stroke="#333"/>'
                        )
                    else:
                        out.append(
                            f'<line{attrs} x1="{_fmt(x)}" y1="{_fmt(_PLOT_TOP)}" '
                            f'x2="{_fmt(x)}" y2="{_fmt(_PLOT_BOTTOM)}" stroke="#333"/>'
                        )
                elif mark == "tick":
                    out.append(
                        f'<line{attrs} x1="{_fmt(x - 6)}" y1="{_fmt(y)}" '
                        f'x2="{_fmt(x + 6)}" y2="{_fmt(y)}" stroke="#333"/>'
                    )
        return out


class CommandRenderer:
    """Runs an external renderer command: spec JSON on stdin, SVG on stdout."""

    def __init__(self, command: list[str], timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout

    def render(self, spec: dict) -> str:
        try:
            result = subprocess.run(
                self.command,
                input=json.dumps(spec).encode("utf-8"),
                capture_output=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired:
            raise RendererCrashed(-1, f"timed out after {self.timeout}s") from None
        except OSError as e:
            raise RendererCrashed(-1, str(e)) from None
        if result.returncode != 0:
            diagnostics = result.stderr.decode("utf-8", errors="replace").strip()
            if result.returncode < 0:
                raise RendererCrashed(result.returncode, diagnostics)
            raise RendererRejectedSpec(diagnostics or f"exit code {result.returncode}")
        return result.stdout.decode("utf-8")


def render_visualization(spec: VisualizationSpec, renderer) -> str:
    """Render a spec and enforce the metadata contract on the output."""
    problems = visualization_structure_violations(spec.spec)
    if problems:
        raise PreconditionError("spec is structurally invalid: " + "; ".join(problems))
    svg_text = renderer.render(spec.spec)
    try:
        doc = parse_svg(svg_text)
    except (XmlParseError, NotSvg) as e:
        raise RendererCrashed(0, f"renderer emitted invalid SVG: {e}") from None
    try:
        index_marks(doc)
    except UnboundMark as e:
        raise MetadataMissing(e.element_id) from None
    return svg_text


@dataclass(frozen=True)
class TtsResult:
    audio_path: str
    timings: tuple[WordTiming, ...]
    duration: float
    estimated_timings: bool = False


def _tokenize(narration: str) -> list[tuple[str, int, int]]:
    return [(m.group(), m.start(), m.end()) for m in re.finditer(r"\S+", narration)]


def _write_silent_wav(path: str | Path, duration: float, sample_rate: int = 8000) -> None:
    frames = int(round(duration * sample_rate))
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(b"\x00\x00" * frames)


class MockTts:
    """Fixed-rate speech: 0.3 s per whitespace token, contiguous, silent audio."""

    def __init__(self, seconds_per_word: float = 0.3, sample_rate: int = 8000):
        self.seconds_per_word = seconds_per_word
        self.sample_rate = sample_rate

    def synthesize(self, narration: str, out_path: str | Path) -> TtsResult:
        tokens = _tokenize(narration)
        if not tokens:
            raise EmptyNarration("narration has no words")
        spw = self.seconds_per_word
        timings = tuple(
            WordTiming(
                word=word,
                start=round(i * spw, 9),
                end=round((i + 1) * spw, 9),
                char_span=Span(start, end),
            )
            for i, (word, start, end) in enumerate(tokens)
        )
        duration = round(len(tokens) * spw, 9)
        _write_silent_wav(out_path, duration, self.sample_rate)
        return TtsResult(audio_path=str(out_path), timings=timings, duration=duration)


class CommandTts:
    """Runs an external TTS command.

    stdin: {"text": narration, "audio_path": requested output}
    stdout: {"audio_path": ..., "duration": seconds, "timings": [[word, start, end], ...]}
    When the tool returns no timings they are estimated by proportional
    character weighting over the reported duration.
    """

    def __init__(self, command: list[str], timeout: float = 120.0):
        self.command = list(command)
        self.timeout = timeout

    def synthesize(self, narration: str, out_path: str | Path) -> TtsResult:
        tokens = _tokenize(narration)
        if not tokens:
            raise EmptyNarration("narration has no words")
        payload = json.dumps({"text": narration, "audio_path": str(out_path)})
        try:
            result = subprocess.run(
                self.command, input=payload.encode("utf-8"),
                capture_output=True, timeout=self.timeout,
            )
        except (subprocess.TimeoutExpired, OSError) as e:
            raise TtsFailure(f"TTS command failed: {e}") from None
        if result.returncode != 0:
            raise TtsFailure(result.stderr.decode("utf-8", errors="replace").strip()
                             or f"exit code {result.returncode}")
        try:
            reply = json.loads(result.stdout.decode("utf-8"))
            audio_path = reply["audio_path"]
            duration = float(reply["duration"])
            raw_timings = reply.get("timings") or []
        except (ValueError, KeyError, TypeError) as e:
            raise TtsFailure(f"malformed TTS reply: {e}") from None
        if raw_timings:
            if len(raw_timings) != len(tokens):
                raise TtsFailure(
                    f"TTS returned {len(raw_timings)} timings for {len(tokens)} words"
                )
            timings = tuple(
                WordTiming(word=word, start=float(s), end=float(e), char_span=Span(cs, ce))
                for (word, cs, ce), (_, s, e) in zip(tokens, raw_timings)
            )
            estimated = False
        else:
            timings = tuple(_estimate_timings(tokens, duration))
            estimated = True
        return TtsResult(audio_path=audio_path, timings=timings,
                         duration=duration, estimated_timings=estimated)


def _estimate_timings(tokens: list[tuple[str, int, int]], duration: float):
    weights = [len(word) + 1 for word, _, _ in tokens]
    total = sum(weights)
    elapsed = 0.0
    for (word, cs, ce), weight in zip(tokens, weights):
        start = round(elapsed, 9)
        elapsed += duration * weight / total
        yield WordTiming(word=word, start=start, end=round(elapsed, 9), char_span=Span(cs, ce))


def synthesize_speech(narration: str, tts, out_path: str | Path,
                      ) -> tuple[TtsResult, ValidationReport]:
    """Synthesize narration and verify the word-timing contract."""
    if not narration.strip():
        raise EmptyNarration("narration is empty")
    result = tts.synthesize(narration, out_path)
    problems = validate_timings(narration, list(result.timings))
    if problems:
        raise TtsFailure("TTS output violates the timing contract: " + "; ".join(problems))
    advisories = []
    if result.estimated_timings:
        advisories.append(Violation(
            "tts-timings-estimated", "",
            "TTS returned no word timings; estimated by character weighting",
        ))
    return result, ValidationReport(advisories=tuple(advisories))


class MockSynth:
    """Writes a frame-by-frame visibility manifest instead of rasterizing."""

    def __init__(self, fps: int = 30):
        self.fps = fps

    def synthesize(self, timeline: Timeline, svg_path: str | Path,
                   audio_path: str | Path, out_path: str | Path) -> str:
        if timeline.duration <= 0:
            raise SynthFailure("timeline has zero duration")
        frame_count = int(round(timeline.duration * self.fps))
        ids = sorted(set(timeline.initial_visibility) | set(timeline.tracks))
        frames = []
        for f in range(frame_count):
            t = f / self.fps
            visible = [eid for eid in ids if visible_at(timeline, eid, t)]
            opacity = {}
            for eid in visible:
                value = value_at(timeline, eid, "opacity", t)
                if value != 1.0:
                    opacity[eid] = round(value, 4)
            frames.append({"index": f, "time": round(t, 6),
                           "visible": visible, "opacity": opacity})
        manifest = {
            "kind": "mock-video-manifest",
            "fps": self.fps,
            "duration": timeline.duration,
            "frame_count": frame_count,
            "svg": Path(svg_path).name,
            "audio": Path(audio_path).name,
            "frames": frames,
        }
        Path(out_path).write_text(
            json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
        )
        return str(out_path)


class CommandSynth:
    """Runs an external synthesizer: timeline.json, SVG, and audio paths as arguments."""

    def __init__(self, command: list[str], timeout: float = 600.0):
        self.command = list(command)
        self.timeout = timeout

    def synthesize(self, timeline: Timeline, svg_path: str | Path,
                   audio_path: str | Path, out_path: str | Path) -> str:
        if timeline.duration <= 0:
            raise SynthFailure("timeline has zero duration")
        timeline_path = Path(out_path).with_suffix(".timeline.json")
        timeline_path.write_text(
            json.dumps(timeline.to_json(), indent=2, sort_keys=True), encoding="utf-8"
        )
        cmd = self.command + [str(timeline_path), str(svg_path), str(audio_path), str(out_path)]
        try:
            result = subprocess.run(cmd, capture_output=True, timeout=self.timeout)
        except (subprocess.TimeoutExpired, OSError) as e:
            raise SynthFailure(f"synthesizer failed: {e}") from None
        if result.returncode != 0:
            raise SynthFailure(result.stderr.decode("utf-8", errors="replace").strip()
                               or f"exit code {result.returncode}")
        return str(out_path)


def synthesize_video(timeline: Timeline, svg_path: str | Path, audio_path: str | Path,
                     synth, out_path: str | Path) -> str:
    """Produce the final video (or mock manifest) from the compiled timeline."""
    return synth.synthesize(timeline, svg_path, audio_path, out_path)


_CSS_PROPS = {
    "opacity": lambda v: f"opacity: {v:g};",
    "scale": lambda v: f"transform: scale({v:g});",
    "translate_x": lambda v: f"transform: translateX({v:g}px);",
    "translate_y": lambda v: f"transform: translateY({v:g}px);",
    "clip_fraction": lambda v: f"clip-path: inset(0 {100 * (1 - v):.2f}% 0 0);",
    "wheel_fraction": lambda v: f"--wheel: {v * 360:.2f}deg;",
}


def export_html(timeline: Timeline, svg_text: str, audio_ref: str,
                out_path: str | Path | None = None) -> str:
    """Emit a self-contained HTML document animating the SVG along the timeline.

    Keyframe tracks become CSS @keyframes with matching delays and durations;
    animations stay paused until the play button starts them with the audio.
    svg_text must carry the element ids the timeline refers to.
    """
    keyframe_blocks = []
    element_rules = []
    uses_wheel = False
    for eid in sorted(set(timeline.tracks) | set(timeline.initial_visibility)):
        kfs = timeline.tracks.get(eid, ())
        by_prop: dict[str, list] = {}
        for kf in kfs:
            by_prop.setdefault(kf.property, []).append(kf)
        animations = []
        extra_style = ""
        for prop in sorted(by_prop):
            seq = by_prop[prop]
            name = f"kf_{eid}_{prop}"
            first, last = seq[0].time, seq[-1].time
            duration = max(last - first, 0.001)
            stops = []
            for i, kf in enumerate(seq):
                pct = (kf.time - first) / duration * 100
                easing = seq[i + 1].easing if i + 1 < len(seq) else "linear"
                stops.append(
                    f"  {pct:.4f}% {{ {_CSS_PROPS[prop](kf.value)}"
                    f" animation-timing-function: {easing}; }}"
                )
            keyframe_blocks.append(
                f"@keyframes {name} {{\n" + "\n".join(stops) + "\n}"
            )
            animations.append(f"{name} {duration:g}s linear {first:g}s 1 normal both")
            if prop == "wheel_fraction":
                uses_wheel = True
                extra_style += (
                    " mask-image: conic-gradient(#000 var(--wheel), transparent 0deg);"
                )
        hidden = timeline.initial_visibility.get(eid) == "hidden"
        if animations:
            element_rules.append(
                f"#{eid} {{ animation: {', '.join(animations)};"
                f" animation-play-state: paused;{extra_style} }}"
            )
        elif hidden:
            element_rules.append(f"#{eid} {{ opacity: 0; }}")
    playing_rule = "#stage.playing * { animation-play-state: running; }"
    wheel_property = (
        "@property --wheel { syntax: '<angle>'; inherits: false; initial-value: 0deg; }\n"
        if uses_wheel else ""
    )
    style = wheel_property + "\n".join(keyframe_blocks + element_rules + [playing_rule])
    html = f"""<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>data video</title>
<style>
{style}
</style>
</head>
<body>
<button id="play">Play</button>
<div id="stage">
{svg_text}
</div>
<audio id="narration" src="{escape(audio_ref)}" preload="auto"></audio>
<script>
document.getElementById("play").addEventListener("click", function () {{
  document.getElementById("stage").classList.add("playing");
  document.getElementById("narration").play();
}});
</script>
</body>
</html>
"""
    if out_path is not None:
        Path(out_path).write_text(html, encoding="utf-8")
    return html
