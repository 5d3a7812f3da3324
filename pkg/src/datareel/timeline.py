"""Narration-clock timeline: span location, audio alignment, and keyframe compilation.

The narration text is the master timeline. Directive segments are located as
verbatim substrings (whitespace runs collapse to single spaces on both sides),
mapped to seconds through word timings, and expanded into per-element keyframe
tracks using a fixed recipe per animation name.
"""

import math
import re
from dataclasses import dataclass, field

from .errors import ContractError, PreconditionError
from .model import (
    AnimationCategory,
    ValidationReport,
    Violation,
    classify_animation,
)

PROPERTIES = ("opacity", "scale", "translate_x", "translate_y", "clip_fraction", "wheel_fraction")
EASINGS = ("linear", "ease-in", "ease-out", "ease-in-out")

REST_VALUES = {
    "opacity": 1.0,
    "scale": 1.0,
    "translate_x": 0.0,
    "translate_y": 0.0,
    "clip_fraction": 1.0,
    "wheel_fraction": 1.0,
}

ANNOTATION_FADE_IN = 0.5
EMPHASIS_RAMP_FRACTION = 0.15


class SegmentNotFound(ContractError):
    def __init__(self, segment: str):
        super().__init__(f"narration segment not found verbatim: {segment!r}")
        self.segment = segment


class NoWordOverlap(ContractError):
    def __init__(self, span: "Span"):
        super().__init__(
            f"span [{span.start_char},{span.end_char}) covers no spoken words"
        )
        self.span = span


@dataclass(frozen=True)
class Span:
    """Half-open character offsets into the narration."""

    start_char: int
    end_char: int

    def __post_init__(self):
        if self.start_char < 0 or self.end_char <= self.start_char:
            raise ValueError(f"invalid span [{self.start_char},{self.end_char})")


@dataclass(frozen=True)
class WordTiming:
    word: str
    start: float
    end: float
    char_span: Span

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid word timing [{self.start},{self.end})")


def validate_timings(narration: str, timings: list[WordTiming]) -> list[str]:
    """Check the word-timing contract; returns violation messages."""
    problems = []
    tokens = narration.split()
    if [t.word for t in timings] != tokens:
        problems.append("timed words do not equal the narration's whitespace-split tokens")
    for prev, cur in zip(timings, timings[1:]):
        if cur.start < prev.end:
            problems.append(f"timings overlap at {cur.word!r}")
        if cur.char_span.start_char < prev.char_span.end_char:
            problems.append(f"char spans overlap at {cur.word!r}")
    return problems


@dataclass(frozen=True)
class Keyframe:
    element_id: str
    time: float
    property: str
    value: float
    easing: str = "linear"

    def __post_init__(self):
        if self.property not in PROPERTIES:
            raise ValueError(f"unknown property {self.property!r}")
        if self.easing not in EASINGS:
            raise ValueError(f"unknown easing {self.easing!r}")
        if self.property == "opacity" and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"opacity {self.value} outside [0,1]")
        if self.property in ("clip_fraction", "wheel_fraction") and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.property} {self.value} outside [0,1]")


@dataclass
class Timeline:
    """Per-element keyframe tracks and initial visibilities over the audio clock."""

    duration: float
    tracks: dict[str, tuple[Keyframe, ...]] = field(default_factory=dict)
    initial_visibility: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "duration": self.duration,
            "initial_visibility": dict(sorted(self.initial_visibility.items())),
            "tracks": [
                {
                    "element_id": eid,
                    "keyframes": [
                        {"time": k.time, "property": k.property,
                         "value": k.value, "easing": k.easing}
                        for k in self.tracks[eid]
                    ],
                }
                for eid in sorted(self.tracks)
            ],
        }

    @classmethod
    def from_json(cls, value: dict) -> "Timeline":
        tracks = {
            t["element_id"]: tuple(
                Keyframe(t["element_id"], k["time"], k["property"], k["value"], k["easing"])
                for k in t["keyframes"]
            )
            for t in value["tracks"]
        }
        return cls(
            duration=value["duration"],
            tracks=tracks,
            initial_visibility=dict(value["initial_visibility"]),
        )


def locate_span(narration: str, segment: str, cursor: int = 0) -> Span:
    """Find the first verbatim occurrence of segment at or after cursor.

    Matching is exact except that whitespace runs on both sides collapse to a
    single equivalence class: any run of whitespace in the segment matches any
    run in the narration (greedily).
    """
    if not segment:
        raise PreconditionError("segment must be non-empty")
    if cursor < 0:
        raise PreconditionError("cursor must be non-negative")
    parts = re.split(r"\s+", segment)
    pattern = re.compile(r"\s+".join(re.escape(p) for p in parts))
    m = pattern.search(narration, cursor)
    if m is None or m.end() == m.start():
        raise SegmentNotFound(segment)
    return Span(m.start(), m.end())


def first_sentence_end(narration: str) -> int:
    """Offset just past the first terminal punctuation followed by space or end."""
    m = re.search(r"[.!?](?=\s|$)", narration)
    return m.end() if m else len(narration)


def align_segments(spans: list[Span], timings: list[WordTiming]) -> list[tuple[float, float]]:
    """Map character spans to second intervals via overlapping word timings."""
    intervals = []
    for span in spans:
        overlapping = [
            w for w in timings
            if w.char_span.start_char < span.end_char and span.start_char < w.char_span.end_char
        ]
        if not overlapping:
            raise NoWordOverlap(span)
        intervals.append((overlapping[0].start, overlapping[-1].end))
    return intervals


@dataclass(frozen=True)
class AnimationEffect:
    """Keyframes produced for one directive plus its initial-visibility effect."""

    keyframes: tuple[Keyframe, ...]
    initially_hidden: frozenset[str]


def _ramp(ids, prop, stops, easing="linear"):
    out = []
    for eid in sorted(ids):
        for t, v in stops:
            out.append(Keyframe(eid, t, prop, v, easing))
    return out


_LEGEND_FLY = {"Pie-wheel-in-and-legend-fly-in"}
_LEGEND_FADE = {"Line-wipe-and-legend-fade-in", "Bar-grow-and-legend-fade-in"}
LEGEND_VARIANTS = _LEGEND_FLY | _LEGEND_FADE


def keyframes_for(animation: str, element_ids, interval: tuple[float, float], *,
                  legend_ids=frozenset(), other_ids=frozenset()) -> AnimationEffect:
    """Expand one animation over an interval into keyframes.

    Entrance animations leave their elements initially hidden and animate to
    the visible state; emphasis animations perturb and restore within the
    interval; Fade-out ends at opacity 0, which holds afterward. The combined
    "-and-legend-" entrances also animate legend_ids;
    Highlight-one-and-fade-others dims other_ids and leaves targets untouched.
    """
    category = classify_animation(animation)
    t0, t1 = interval
    if t1 <= t0:
        raise PreconditionError(f"interval [{t0},{t1}) is empty")
    length = t1 - t0
    ids = frozenset(element_ids)
    keyframes: list[Keyframe] = []
    hidden: frozenset[str] = frozenset()

    if category is AnimationCategory.ENTRANCE:
        hidden = ids | frozenset(legend_ids)
        fade = [(t0, 0.0), (t1, 1.0)]
        if animation in ("Fade-in", "Axes-fade-in", "Scatter-fade-in"):
            keyframes += _ramp(ids, "opacity", fade)
        elif animation in ("Bar-grow-in", "Bar-grow-and-legend-fade-in"):
            keyframes += _ramp(ids, "scale", fade, "ease-out")
        elif animation in ("Line-wipe-in", "Line-wipe-and-legend-fade-in"):
            keyframes += _ramp(ids, "clip_fraction", fade)
        elif animation in ("Pie-wheel-in", "Pie-wheel-in-and-legend-fly-in"):
            keyframes += _ramp(ids, "wheel_fraction", fade)
        elif animation == "Float-in":
            keyframes += _ramp(ids, "translate_y", [(t0, 20.0), (t1, 0.0)])
            keyframes += _ramp(ids, "opacity", fade)
        elif animation == "Fly-in":
            keyframes += _ramp(ids, "translate_x", [(t0, -40.0), (t1, 0.0)])
            keyframes += _ramp(ids, "opacity", fade)
        elif animation == "Zoom-in":
            keyframes += _ramp(ids, "scale", [(t0, 0.5), (t1, 1.0)])
            keyframes += _ramp(ids, "opacity", fade)
        if animation in _LEGEND_FADE:
            keyframes += _ramp(legend_ids, "opacity", fade)
        elif animation in _LEGEND_FLY:
            keyframes += _ramp(legend_ids, "translate_x", [(t0, -40.0), (t1, 0.0)])
            keyframes += _ramp(legend_ids, "opacity", fade)

    elif category is AnimationCategory.EMPHASIS:
        if animation == "Bar-bounce":
            stops = [(t0, 1.0), (t0 + length / 4, 1.15), (t0 + length / 2, 1.0),
                     (t0 + 3 * length / 4, 1.15), (t1, 1.0)]
            keyframes += _ramp(ids, "scale", stops, "ease-in-out")
        elif animation == "Zoom-in-then-zoom-out":
            stops = [(t0, 1.0), (t0 + length / 2, 1.25), (t1, 1.0)]
            keyframes += _ramp(ids, "scale", stops, "ease-in-out")
        elif animation == "Shine-in-a-short-duration":
            stops = [(t0 + i * length / 6, 1.0 if i % 2 == 0 else 0.4) for i in range(7)]
            keyframes += _ramp(ids, "opacity", stops)
        elif animation == "Highlight-one-and-fade-others":
            delta = EMPHASIS_RAMP_FRACTION * length
            stops = [(t0, 1.0), (t0 + delta, 0.2), (t1 - delta, 0.2), (t1, 1.0)]
            keyframes += _ramp(frozenset(other_ids) - ids, "opacity", stops)

    else:  # exit: Fade-out
        keyframes += _ramp(ids, "opacity", [(t0, 1.0), (t1, 0.0)])

    return AnimationEffect(keyframes=tuple(keyframes), initially_hidden=hidden)


@dataclass(frozen=True)
class PlacedDirective:
    """An animation directive with resolved targets and an audio interval."""

    animation: str
    target_ids: frozenset
    interval: tuple[float, float]
    label: str = ""


@dataclass(frozen=True)
class PlacedAnnotation:
    """Annotation elements that fade in when their narration segment starts."""

    element_ids: tuple
    interval: tuple[float, float]
    label: str = ""


def compile_timeline(placed_directives, placed_annotations, mark_index, duration: float,
                     fade_in_duration: float = ANNOTATION_FADE_IN,
                     ) -> tuple[Timeline, ValidationReport]:
    """Compile directives and annotation fades into a validated Timeline.

    Directives are processed in narration order. Elements with an entrance
    start hidden; everything else starts visible. Annotation elements start
    hidden and fade in over [segment_start, segment_start + fade_in_duration]
    clamped to the segment. Overlapping keyframe groups on the same element
    and property resolve last-writer-wins with an advisory.
    """
    if duration <= 0:
        raise PreconditionError("duration must be positive")
    advisories: list[Violation] = []
    groups: dict[tuple[str, str], list[dict]] = {}

    def add_group(keyframes: list[Keyframe], label: str):
        by_track: dict[tuple[str, str], list[Keyframe]] = {}
        for kf in keyframes:
            if not 0.0 <= kf.time <= duration:
                raise ValueError(f"keyframe time {kf.time} outside [0,{duration}]")
            by_track.setdefault((kf.element_id, kf.property), []).append(kf)
        for key, kfs in by_track.items():
            kfs.sort(key=lambda k: k.time)
            start, end = kfs[0].time, kfs[-1].time
            kept = []
            for g in groups.get(key, []):
                if g["start"] < end and start < g["end"]:
                    advisories.append(Violation(
                        "track-overlap", key[0],
                        f"{key[1]} keyframes from {g['label']!r} overlap {label!r}; "
                        "later directive wins",
                    ))
                else:
                    kept.append(g)
            kept.append({"start": start, "end": end, "keyframes": kfs, "label": label})
            groups[key] = kept

    initial = {eid: "visible" for eid in mark_index.entries}
    for placed in placed_annotations:
        for eid in placed.element_ids:
            initial[eid] = "hidden"

    events = []
    for seq, placed in enumerate(placed_directives):
        events.append((placed.interval[0], placed.interval[1], 0, seq, "directive", placed))
    for seq, placed in enumerate(placed_annotations):
        events.append((placed.interval[0], placed.interval[1], 1, seq, "annotation", placed))
    events.sort(key=lambda e: e[:4])

    legend_ids = mark_index.ids_with_role("legend")
    all_mark_ids = mark_index.mark_ids()

    for *_, kind, placed in events:
        if kind == "directive":
            category = classify_animation(placed.animation)
            targets = placed.target_ids
            extra_legend = frozenset()
            if placed.animation in LEGEND_VARIANTS:
                extra_legend = frozenset(legend_ids)
                targets = targets - extra_legend
            effect = keyframes_for(
                placed.animation, targets, placed.interval,
                legend_ids=extra_legend,
                other_ids=frozenset(all_mark_ids) if category is AnimationCategory.EMPHASIS
                else frozenset(),
            )
            add_group(list(effect.keyframes), placed.label or placed.animation)
            for eid in effect.initially_hidden:
                initial[eid] = "hidden"
        else:
            start, end = placed.interval
            fade_end = start + min(fade_in_duration, end - start)
            kfs = _ramp(placed.element_ids, "opacity", [(start, 0.0), (fade_end, 1.0)])
            add_group(kfs, placed.label or "annotation fade-in")

    tracks: dict[str, list[Keyframe]] = {}
    by_element: dict[str, list[tuple[str, dict]]] = {}
    for (eid, prop), bucket in groups.items():
        by_element.setdefault(eid, []).append((prop, bucket))
    for eid, prop_buckets in by_element.items():
        merged_all: list[Keyframe] = []
        for prop, bucket in sorted(prop_buckets, key=lambda pb: pb[0]):
            merged: list[Keyframe] = []
            for g in sorted(bucket, key=lambda g: (g["start"], g["end"])):
                for kf in g["keyframes"]:
                    if merged and kf.time == merged[-1].time:
                        merged[-1] = kf
                    elif merged and kf.time < merged[-1].time:
                        continue
                    else:
                        merged.append(kf)
            merged_all.extend(merged)
        merged_all.sort(key=lambda k: (k.time, k.property))
        tracks[eid] = merged_all

    for eid, vis in initial.items():
        if vis == "hidden" and not tracks.get(eid):
            advisories.append(Violation(
                "hidden-forever", eid,
                "element starts hidden and has no entrance track",
            ))

    timeline = Timeline(
        duration=duration,
        tracks={eid: tuple(kfs) for eid, kfs in tracks.items()},
        initial_visibility=initial,
    )
    return timeline, ValidationReport(advisories=tuple(advisories))


def _ease(name: str, p: float) -> float:
    if name == "ease-in":
        return p * p
    if name == "ease-out":
        return 1.0 - (1.0 - p) * (1.0 - p)
    if name == "ease-in-out":
        return 2 * p * p if p < 0.5 else 1.0 - 2 * (1.0 - p) * (1.0 - p)
    return p


def value_at(timeline: Timeline, element_id: str, prop: str, t: float) -> float:
    """Evaluate one property track at time t (rest value outside the track)."""
    kfs = [k for k in timeline.tracks.get(element_id, ()) if k.property == prop]
    if not kfs:
        return REST_VALUES[prop]
    if t < kfs[0].time:
        return REST_VALUES[prop]
    if t >= kfs[-1].time:
        return kfs[-1].value
    for left, right in zip(kfs, kfs[1:]):
        if left.time <= t < right.time:
            span = right.time - left.time
            p = (t - left.time) / span if span else 1.0
            return left.value + (right.value - left.value) * _ease(right.easing, p)
    return kfs[-1].value


def visible_at(timeline: Timeline, element_id: str, t: float) -> bool:
    """Whether an element is visible at time t under the compiled timeline."""
    initially = timeline.initial_visibility.get(element_id, "visible") == "visible"
    kfs = timeline.tracks.get(element_id, ())
    if not kfs:
        return initially
    first = min(k.time for k in kfs)
    if t < first:
        return initially
    for prop in ("opacity", "scale", "clip_fraction", "wheel_fraction"):
        if value_at(timeline, element_id, prop, t) <= 0.0:
            return False
    return True


def timeline_invariant_violations(timeline: Timeline) -> list[str]:
    """Check the structural invariants of a compiled timeline."""
    problems = []
    if not math.isfinite(timeline.duration) or timeline.duration < 0:
        problems.append(f"invalid duration {timeline.duration}")
    for eid, kfs in timeline.tracks.items():
        per_prop: dict[str, list[Keyframe]] = {}
        for kf in kfs:
            if not 0.0 <= kf.time <= timeline.duration:
                problems.append(f"{eid}: keyframe time {kf.time} outside [0,{timeline.duration}]")
            per_prop.setdefault(kf.property, []).append(kf)
        for prop, seq in per_prop.items():
            for a, b in zip(seq, seq[1:]):
                if b.time <= a.time:
                    problems.append(f"{eid}/{prop}: keyframes not strictly time-sorted")
                    break
    return problems
