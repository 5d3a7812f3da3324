"""End-to-end pipeline orchestration with a persisted artifact manifest.

Stage order is fixed: ingest, description, analyst, base render, designer,
annotated render, binding, TTS, timeline, video. Every stage persists its
artifacts eagerly and the manifest is rewritten after each stage, so a failed
run leaves a partial manifest plus the failure record behind for debugging.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import adapters, analyst, binding, designer, ingest, timeline as tl
from .errors import PreconditionError, StageError
from .model import (
    DataTable,
    ValidationReport,
    Violation,
    VisualizationSpec,
    classify_animation,
)
from .runtime import BackendConfig, ChatSession, HttpChatBackend, MockChatBackend

STAGES = (
    "ingest", "description", "analyst", "base_render", "designer",
    "annotated_render", "binding", "tts", "timeline", "video",
)

AGENT_STAGES = ("description", "analyst", "designer")


class UnknownStage(PreconditionError):
    def __init__(self, name: str):
        super().__init__(f"unknown stage {name!r}; expected one of {', '.join(STAGES)}")


class ManifestNotFound(PreconditionError):
    pass


@dataclass
class ProjectConfig:
    """Everything one pipeline run needs: inputs, backends, tools, and knobs."""

    input_csv: str
    output_dir: str
    title: str | None = None
    mock_mode: bool = True
    transcripts: dict = field(default_factory=dict)
    backend: BackendConfig | None = None
    renderer_cmd: list | None = None
    tts_cmd: list | None = None
    synth_cmd: list | None = None
    max_repair_attempts: int = 3
    fps: int = 30
    export: str = "video"
    prompt_max_rows: int = 100
    cache_dir: str | None = None
    no_cache: bool = False

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ProjectConfig":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        backend = raw.pop("backend", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise PreconditionError(f"unknown config keys: {', '.join(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        config = cls(**raw)
        if backend is not None:
            try:
                config.backend = BackendConfig(**backend)
            except TypeError as e:
                raise PreconditionError(f"invalid backend config: {e}") from None
        return config

    def validate(self) -> None:
        if not Path(self.input_csv).is_file():
            raise PreconditionError(f"input file not found: {self.input_csv}")
        if self.export not in ("video", "html", "both"):
            raise PreconditionError(f"export must be video, html, or both; got {self.export!r}")
        if self.fps < 1:
            raise PreconditionError("fps must be at least 1")
        if self.mock_mode:
            missing = [s for s in AGENT_STAGES if s not in self.transcripts]
            if missing:
                raise PreconditionError(
                    f"mock mode requires transcript paths for: {', '.join(missing)}"
                )
            for stage_name, path in self.transcripts.items():
                if not Path(path).is_file():
                    raise PreconditionError(
                        f"transcript for {stage_name!r} not found: {path}"
                    )
        elif self.backend is None:
            raise PreconditionError("live mode requires a backend configuration")

    def to_json(self) -> dict:
        payload = {
            "input_csv": self.input_csv,
            "output_dir": self.output_dir,
            "title": self.title,
            "mock_mode": self.mock_mode,
            "transcripts": {k: str(v) for k, v in self.transcripts.items()},
            "renderer_cmd": self.renderer_cmd,
            "tts_cmd": self.tts_cmd,
            "synth_cmd": self.synth_cmd,
            "max_repair_attempts": self.max_repair_attempts,
            "fps": self.fps,
            "export": self.export,
            "prompt_max_rows": self.prompt_max_rows,
            "cache_dir": self.cache_dir,
            "no_cache": self.no_cache,
        }
        if self.backend is not None:
            payload["backend"] = vars(self.backend)
        return payload


@dataclass
class ProjectManifest:
    """Execution record: ordered stages with artifact paths, hashes, and sizes."""

    config: dict = field(default_factory=dict)
    created_at: str = ""
    stages: list = field(default_factory=list)

    def stage(self, name: str) -> dict | None:
        for record in self.stages:
            if record["name"] == name:
                return record
        return None

    def to_json(self) -> dict:
        return {"config": self.config, "created_at": self.created_at, "stages": self.stages}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ProjectManifest":
        if not Path(path).is_file():
            raise ManifestNotFound(f"manifest not found: {path}")
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(config=raw["config"], created_at=raw["created_at"], stages=raw["stages"])

    def verify(self, project_dir: str | Path) -> list[str]:
        """Check that every listed artifact exists and matches its hash."""
        problems = []
        for record in self.stages:
            for artifact in record.get("artifacts", []):
                path = Path(project_dir) / artifact["path"]
                if not path.is_file():
                    problems.append(f"{record['name']}: missing artifact {artifact['path']}")
                    continue
                digest = hashlib.sha256(path.read_bytes()).hexdigest()
                if digest != artifact["sha256"]:
                    problems.append(f"{record['name']}: hash mismatch for {artifact['path']}")
        return problems


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


class _Run:
    """Mutable state threaded through one pipeline execution."""

    def __init__(self, config: ProjectConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self.manifest = ProjectManifest(config=config.to_json(), created_at=_now())
        self.live_backend = None
        self.table: DataTable | None = None
        self.description = None
        self.analyst_output = None
        self.designer_output = None
        self.base_doc = None
        self.annotated_doc = None
        self.mark_index = None
        self.resolved_targets = []
        self.annotation_assignments = {}
        self.annotation_ids = []
        self.tts_result = None
        self.timeline: tl.Timeline | None = None

    def session_for(self, stage_name: str) -> ChatSession:
        if self.config.mock_mode:
            backend = MockChatBackend.from_file(self.config.transcripts[stage_name])
        else:
            if self.live_backend is None:
                cache_dir = None if self.config.no_cache else (
                    self.config.cache_dir or str(self.out / "cache")
                )
                self.live_backend = HttpChatBackend(self.config.backend, cache_dir=cache_dir)
            backend = self.live_backend
        return ChatSession(backend=backend)

    def renderer(self):
        if not self.config.mock_mode and self.config.renderer_cmd:
            return adapters.CommandRenderer(self.config.renderer_cmd)
        return adapters.MockRenderer()

    def tts(self):
        if not self.config.mock_mode and self.config.tts_cmd:
            return adapters.CommandTts(self.config.tts_cmd)
        return adapters.MockTts()

    def synth(self):
        if not self.config.mock_mode and self.config.synth_cmd:
            return adapters.CommandSynth(self.config.synth_cmd)
        return adapters.MockSynth(fps=self.config.fps)

    def write_artifact(self, record: dict, filename: str, content: str) -> Path:
        path = self.out / filename
        path.write_text(content, encoding="utf-8")
        self.register(record, filename)
        return path

    def register(self, record: dict, filename: str) -> None:
        path = self.out / filename
        record["artifacts"].append({
            "path": filename,
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
            "bytes": path.stat().st_size,
        })


def run_pipeline(config: ProjectConfig) -> ProjectManifest:
    """Execute every stage in order, persisting artifacts and the manifest.

    Stops at the first unrecoverable error, wrapping it with the stage name;
    the partial manifest (including the failure record) is persisted first.
    """
    config.validate()
    run = _Run(config)
    run.out.mkdir(parents=True, exist_ok=True)

    steps = (
        ("ingest", _stage_ingest),
        ("description", _stage_description),
        ("analyst", _stage_analyst),
        ("base_render", _stage_base_render),
        ("designer", _stage_designer),
        ("annotated_render", _stage_annotated_render),
        ("binding", _stage_binding),
        ("tts", _stage_tts),
        ("timeline", _stage_timeline),
        ("video", _stage_video),
    )
    for name, fn in steps:
        record = {"name": name, "status": "running", "started_at": _now(),
                  "finished_at": None, "artifacts": [], "error": None}
        run.manifest.stages.append(record)
        try:
            fn(run, record)
        except Exception as e:
            record["status"] = "failed"
            record["error"] = f"{type(e).__name__}: {e}"
            record["finished_at"] = _now()
            run.manifest.save(run.out / "manifest.json")
            raise StageError(name, e) from e
        record["status"] = "ok"
        record["finished_at"] = _now()
        run.manifest.save(run.out / "manifest.json")
    return run.manifest


def _stage_ingest(run: _Run, record: dict) -> None:
    raw = Path(run.config.input_csv).read_text(encoding="utf-8")
    title = run.config.title or Path(run.config.input_csv).stem
    run.table = ingest.parse_csv(raw, title)
    run.write_artifact(record, "table.json", _dump_json({
        "title": run.table.title,
        "row_count": run.table.row_count,
        "columns": [{"name": name, "values": list(values)}
                    for name, values in run.table.columns],
    }))


def _stage_description(run: _Run, record: dict) -> None:
    session = run.session_for("description")
    run.description = ingest.describe(session, run.table, run.config.prompt_max_rows)
    run.write_artifact(record, "description.json",
                       _dump_json({"Description": run.description.text}))


def _stage_analyst(run: _Run, record: dict) -> None:
    session = run.session_for("analyst")
    output, report, repair = analyst.run_analyst(
        session, run.description, run.table,
        max_attempts=run.config.max_repair_attempts,
        max_rows=run.config.prompt_max_rows,
    )
    run.analyst_output = output
    run.write_artifact(record, "analyst.json", _dump_json(analyst.analyst_output_to_json(output)))
    run.write_artifact(record, "analyst_validation.json", _dump_json(report.to_json()))
    run.write_artifact(record, "analyst_repair.json", _dump_json(repair.to_json()))


def _stage_base_render(run: _Run, record: dict) -> None:
    svg_text = adapters.render_visualization(run.analyst_output.visualization, run.renderer())
    run.write_artifact(record, "base.svg", svg_text)
    run.base_doc = binding.parse_svg(svg_text)


def _stage_designer(run: _Run, record: dict) -> None:
    base_index = binding.index_marks(run.base_doc, run.table)
    resolver = lambda directive: binding.resolve_targets(directive, base_index)
    session = run.session_for("designer")
    output, report, repair = designer.run_designer(
        session, run.analyst_output.visualization, run.analyst_output.narration,
        run.table, max_attempts=run.config.max_repair_attempts,
        resolver=resolver, max_rows=run.config.prompt_max_rows,
    )
    run.designer_output = output
    run.write_artifact(record, "designer.json",
                       _dump_json(designer.designer_output_to_json(output)))
    run.write_artifact(record, "designer_validation.json", _dump_json(report.to_json()))
    run.write_artifact(record, "designer_repair.json", _dump_json(repair.to_json()))


def _stage_annotated_render(run: _Run, record: dict) -> None:
    spec = VisualizationSpec(
        spec=run.designer_output.annotated_visualization,
        vis_type=run.analyst_output.visualization.vis_type,
    )
    svg_text = adapters.render_visualization(spec, run.renderer())
    run.write_artifact(record, "annotated.svg", svg_text)
    run.annotated_doc = binding.parse_svg(svg_text)


def _stage_binding(run: _Run, record: dict) -> None:
    run.annotation_ids = binding.diff_annotations(run.base_doc, run.annotated_doc)
    advisories = []
    for eid in run.annotation_ids:
        if "marks" in run.annotated_doc.role_path(eid):
            advisories.append(Violation(
                "non-additive-change", eid,
                "diffed element sits inside the marks group; the annotated spec "
                "may have altered base marks instead of adding layers",
            ))
    index = binding.index_marks(run.annotated_doc, run.table)
    index = binding.with_annotations(index, run.annotated_doc, run.annotation_ids)
    run.mark_index = index

    run.resolved_targets = []
    for directive in run.designer_output.animation_directives:
        ids = binding.resolve_targets(directive, index)
        run.resolved_targets.append((directive, ids))

    assignments, match_report = binding.match_annotation_directives(
        run.annotation_ids, run.designer_output.annotation_directives, index,
        svg=run.annotated_doc,
    )
    run.annotation_assignments = assignments
    report = ValidationReport(advisories=tuple(advisories)).merged(match_report)
    run.write_artifact(record, "bindings.json", _dump_json({
        "mark_index": index.to_json(),
        "annotation_ids": run.annotation_ids,
        "resolved_targets": [
            {"animation": d.animation, "narration": d.narration, "target": d.target,
             "index": list(d.index), "ids": sorted(ids)}
            for d, ids in run.resolved_targets
        ],
        "annotation_assignments": [
            {"position": i,
             "nar": run.designer_output.annotation_directives[i].nar,
             "ids": sorted(ids)}
            for i, ids in sorted(assignments.items())
        ],
        "report": report.to_json(),
    }))


def _stage_tts(run: _Run, record: dict) -> None:
    narration = run.analyst_output.narration
    result, report = adapters.synthesize_speech(narration, run.tts(), run.out / "narration.wav")
    run.tts_result = result
    run.register(record, "narration.wav")
    run.write_artifact(record, "word_timings.json", _dump_json({
        "duration": result.duration,
        "words": [
            {"word": t.word, "start": t.start, "end": t.end,
             "char_start": t.char_span.start_char, "char_end": t.char_span.end_char}
            for t in result.timings
        ],
        "advisories": [vars(a) for a in report.advisories],
    }))


def _stage_timeline(run: _Run, record: dict) -> None:
    narration = run.analyst_output.narration
    timings = list(run.tts_result.timings)

    placed_directives = []
    for directive, ids in run.resolved_targets:
        span = tl.locate_span(narration, directive.narration, 0)
        (interval,) = tl.align_segments([span], timings)
        placed_directives.append(tl.PlacedDirective(
            animation=directive.animation, target_ids=ids,
            interval=interval, label=f"{directive.animation} on {directive.target!r}",
        ))

    placed_annotations = []
    for i, directive in enumerate(run.designer_output.annotation_directives):
        ids = run.annotation_assignments.get(i, [])
        if not ids:
            continue
        span = tl.locate_span(narration, directive.nar, 0)
        (interval,) = tl.align_segments([span], timings)
        placed_annotations.append(tl.PlacedAnnotation(
            element_ids=tuple(sorted(ids)), interval=interval, label=directive.nar,
        ))

    run.timeline, report = tl.compile_timeline(
        placed_directives, placed_annotations, run.mark_index, run.tts_result.duration,
    )
    run.write_artifact(record, "timeline.json", _dump_json(run.timeline.to_json()))
    run.write_artifact(record, "timeline_validation.json", _dump_json(report.to_json()))


def _stage_video(run: _Run, record: dict) -> None:
    if run.config.export in ("video", "both"):
        synth = run.synth()
        out_name = ("video_manifest.json" if isinstance(synth, adapters.MockSynth)
                    else "video.mp4")
        adapters.synthesize_video(
            run.timeline, run.out / "annotated.svg", run.out / "narration.wav",
            synth, run.out / out_name,
        )
        run.register(record, out_name)
    if run.config.export in ("html", "both"):
        html = adapters.export_html(
            run.timeline, run.annotated_doc.to_text(), "narration.wav",
        )
        run.write_artifact(record, "video.html", html)


def _load_artifact(project_dir: Path, name: str):
    path = project_dir / name
    if not path.is_file():
        return None
    if name.endswith(".json"):
        return json.loads(path.read_text(encoding="utf-8"))
    return path.read_text(encoding="utf-8")


def _table_from_artifact(payload: dict) -> DataTable:
    return DataTable(
        title=payload["title"],
        columns=tuple(
            (col["name"], tuple(col["values"])) for col in payload["columns"]
        ),
        row_count=payload["row_count"],
    )


def inspect_stage(project_dir: str | Path, stage_name: str) -> str:
    """Render a human-readable report for one persisted stage."""
    project_dir = Path(project_dir)
    manifest = ProjectManifest.load(project_dir / "manifest.json")
    if stage_name not in STAGES:
        raise UnknownStage(stage_name)
    record = manifest.stage(stage_name)
    lines = [f"stage: {stage_name}"]
    if record is None:
        lines.append("status: not executed")
        return "\n".join(lines)
    lines.append(f"status: {record['status']}")
    if record.get("error"):
        lines.append(f"error: {record['error']}")
    for artifact in record.get("artifacts", []):
        lines.append(f"artifact: {artifact['path']} ({artifact['bytes']} bytes)")

    if stage_name == "ingest":
        table = _load_artifact(project_dir, "table.json")
        if table:
            names = ", ".join(col["name"] for col in table["columns"])
            lines.append(f"table: {table['title']!r}, {table['row_count']} rows, "
                         f"columns: {names}")
    elif stage_name == "description":
        payload = _load_artifact(project_dir, "description.json")
        if payload:
            lines.append(f"description: {payload['Description']}")
    elif stage_name == "analyst":
        payload = _load_artifact(project_dir, "analyst.json")
        if payload:
            lines.append(f"visualization type: {payload['Visualization_Type']}")
            for item in payload["Insights"]:
                lines.append(f"insight [{', '.join(item['type'])}]: {item['insight']}")
            lines.append(f"narration: {payload['Narration']}")
    elif stage_name == "designer":
        payload = _load_artifact(project_dir, "designer.json")
        bindings = _load_artifact(project_dir, "bindings.json")
        resolved = {}
        if bindings:
            for entry in bindings.get("resolved_targets", []):
                resolved[(entry["animation"], entry["narration"])] = entry["ids"]
        if payload:
            lines.append("animation directives:")
            for item in payload["Annotated_Narration_for_Animation"]:
                category = classify_animation(item["animation"]).value
                ids = resolved.get((item["animation"], item["narration"]))
                target_part = f" -> {ids}" if ids is not None else ""
                lines.append(
                    f"  {item['animation']} ({category}) on {item['target']!r} "
                    f"rows={item['index']} segment={item['narration']!r}{target_part}"
                )
            lines.append("annotation directives:")
            for item in payload["Annotated_Narration_for_Annotation"]:
                lines.append(
                    f"  {'/'.join(item['type'])} rows={item['index']} "
                    f"segment={item['nar']!r}: {item['description']}"
                )
    elif stage_name == "binding":
        payload = _load_artifact(project_dir, "bindings.json")
        if payload:
            roles: dict[str, int] = {}
            for entry in payload["mark_index"].values():
                for role in entry["roles"]:
                    roles[role] = roles.get(role, 0) + 1
            lines.append("indexed elements: "
                         + ", ".join(f"{r}={n}" for r, n in sorted(roles.items())))
            lines.append(f"annotation elements: {len(payload['annotation_ids'])}")
    elif stage_name == "tts":
        payload = _load_artifact(project_dir, "word_timings.json")
        if payload:
            lines.append(f"duration: {payload['duration']} s, "
                         f"{len(payload['words'])} timed words")
    elif stage_name == "timeline":
        payload = _load_artifact(project_dir, "timeline.json")
        if payload:
            hidden = sum(1 for v in payload["initial_visibility"].values() if v == "hidden")
            keyframes = sum(len(t["keyframes"]) for t in payload["tracks"])
            lines.append(
                f"duration: {payload['duration']} s, {len(payload['tracks'])} tracks, "
                f"{keyframes} keyframes, {hidden} initially hidden elements"
            )
    elif stage_name == "video":
        payload = _load_artifact(project_dir, "video_manifest.json")
        if isinstance(payload, dict):
            lines.append(f"mock video: {payload['frame_count']} frames at "
                         f"{payload['fps']} fps, {payload['duration']} s")
    return "\n".join(lines)


def validate_project(project_dir: str | Path) -> ValidationReport:
    """Re-run all validators against the persisted artifacts of a project."""
    project_dir = Path(project_dir)
    manifest = ProjectManifest.load(project_dir / "manifest.json")
    violations: list[Violation] = []
    advisories: list[Violation] = []

    for problem in manifest.verify(project_dir):
        violations.append(Violation("artifact-hash", "", problem))

    table_payload = _load_artifact(project_dir, "table.json")
    table = _table_from_artifact(table_payload) if table_payload else None

    analyst_payload = _load_artifact(project_dir, "analyst.json")
    analyst_output = None
    if analyst_payload and table:
        try:
            analyst_output = analyst.analyst_output_from_json(analyst_payload, table)
        except Exception as e:
            violations.append(Violation("analyst-contract", "analyst.json", str(e)))
        if analyst_output is not None:
            report = analyst.validate_visualization(analyst_output.visualization)
            violations.extend(report.violations)
            advisories.extend(report.advisories)

    designer_payload = _load_artifact(project_dir, "designer.json")
    designer_output = None
    if designer_payload and table:
        try:
            designer_output = designer.designer_output_from_json(designer_payload, table)
        except Exception as e:
            violations.append(Violation("designer-contract", "designer.json", str(e)))

    if designer_output is not None and analyst_output is not None:
        resolver = None
        base_text = _load_artifact(project_dir, "base.svg")
        annotated_text = _load_artifact(project_dir, "annotated.svg")
        if base_text and annotated_text:
            base_doc = binding.parse_svg(base_text)
            annotated_doc = binding.parse_svg(annotated_text)
            index = binding.with_annotations(
                binding.index_marks(annotated_doc, table), annotated_doc,
                binding.diff_annotations(base_doc, annotated_doc),
            )
            resolver = lambda d: binding.resolve_targets(d, index)
        report = designer.validate_animation_sequence(
            designer_output.animation_directives, analyst_output.narration, resolver,
        )
        violations.extend(report.violations)
        advisories.extend(report.advisories)

    timings_payload = _load_artifact(project_dir, "word_timings.json")
    timeline_payload = _load_artifact(project_dir, "timeline.json")
    if timeline_payload:
        timeline = tl.Timeline.from_json(timeline_payload)
        for problem in tl.timeline_invariant_violations(timeline):
            violations.append(Violation("timeline-invariant", "timeline.json", problem))
        if timings_payload and timeline.duration != timings_payload["duration"]:
            violations.append(Violation(
                "timeline-duration", "timeline.json",
                f"timeline duration {timeline.duration} != audio duration "
                f"{timings_payload['duration']}",
            ))
    if timings_payload and analyst_output is not None:
        words = [
            tl.WordTiming(w["word"], w["start"], w["end"],
                          tl.Span(w["char_start"], w["char_end"]))
            for w in timings_payload["words"]
        ]
        for problem in tl.validate_timings(analyst_output.narration, words):
            violations.append(Violation("tts-contract", "word_timings.json", problem))

    return ValidationReport(violations=tuple(violations), advisories=tuple(advisories))
