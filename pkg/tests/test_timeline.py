import random

import pytest

from datareel.binding import MarkEntry, MarkIndex
from datareel.errors import PreconditionError
from datareel.timeline import (
    Keyframe,
    NoWordOverlap,
    PlacedAnnotation,
    PlacedDirective,
    SegmentNotFound,
    Span,
    Timeline,
    WordTiming,
    align_segments,
    compile_timeline,
    first_sentence_end,
    keyframes_for,
    locate_span,
    timeline_invariant_violations,
    value_at,
    visible_at,
)
from helpers import WS_ALPHABET, brute_force_occurrences, random_text


def mock_timings(narration: str, spw: float = 0.3) -> list[WordTiming]:
    import re
    return [
        WordTiming(m.group(), round(i * spw, 9), round((i + 1) * spw, 9),
                   Span(m.start(), m.end()))
        for i, m in enumerate(re.finditer(r"\S+", narration))
    ]


class TestLocateSpan:
    def test_first_occurrence(self):
        assert locate_span("A B A", "A", 0) == Span(0, 1)

    def test_cursor_advances(self):
        assert locate_span("A B A", "A", 1) == Span(4, 5)

    def test_not_found(self):
        with pytest.raises(SegmentNotFound):
            locate_span("A B A", "Z", 0)

    def test_whitespace_runs_collapse(self):
        narration = "alpha   beta\tgamma"
        assert locate_span(narration, "alpha beta", 0) == Span(0, 12)
        assert locate_span(narration, "beta \t gamma", 0) == Span(8, 18)

    def test_empty_segment_rejected(self):
        with pytest.raises(PreconditionError):
            locate_span("abc", "", 0)

    def test_matches_brute_force_oracle_randomized(self):
        rng = random.Random(42)
        checked = 0
        for _ in range(400):
            narration = random_text(rng, rng.randint(2, 20), alphabet="ab" + WS_ALPHABET)
            if rng.random() < 0.7 and len(narration) > 3:
                lo = rng.randrange(len(narration) - 1)
                hi = rng.randrange(lo + 1, len(narration) + 1)
                segment = narration[lo:hi]
            else:
                segment = random_text(rng, rng.randint(1, 3), alphabet="ab")
            if not segment:
                continue
            cursor = rng.randrange(0, len(narration) + 1)
            expected = [occ for occ in brute_force_occurrences(narration, segment)
                        if occ[0] >= cursor]
            try:
                got = locate_span(narration, segment, cursor)
            except SegmentNotFound:
                assert expected == [], (narration, segment, cursor, expected)
            else:
                assert expected, (narration, segment, cursor)
                assert (got.start_char, got.end_char) == expected[0]
            checked += 1
        assert checked >= 300


class TestAdvancingCursor:
    def test_spans_monotone_with_advancing_cursor(self):
        rng = random.Random(17)
        for _ in range(50):
            narration = random_text(rng, rng.randint(6, 30), alphabet="ab")
            timings = mock_timings(narration)
            tokens = narration.split()
            segments = [rng.choice(tokens) for _ in range(rng.randint(2, 6))]
            cursor = 0
            spans = []
            try:
                for segment in segments:
                    span = locate_span(narration, segment, cursor)
                    spans.append(span)
                    cursor = span.start_char
            except SegmentNotFound:
                continue
            starts = [s.start_char for s in spans]
            assert starts == sorted(starts)
            intervals = align_segments(spans, timings)
            interval_starts = [a for a, _ in intervals]
            assert interval_starts == sorted(interval_starts)


class TestFirstSentence:
    def test_period_followed_by_space(self):
        assert first_sentence_end("One two. Three four.") == 8

    def test_no_terminal_punctuation(self):
        assert first_sentence_end("no punctuation at all") == 21

    def test_decimal_point_is_not_terminal(self):
        text = "Price hit 12.5 today. Next."
        assert first_sentence_end(text) == 21


class TestAlignSegments:
    def test_word_3_to_5(self):
        narration = "w0 w1 w2 w3 w4 w5 w6"
        timings = mock_timings(narration)
        span = Span(narration.index("w3"), narration.index("w5") + 2)
        assert align_segments([span], timings) == [(0.9, 1.8)]

    def test_whole_narration(self):
        narration = "a b c"
        timings = mock_timings(narration)
        assert align_segments([Span(0, len(narration))], timings) == [(0.0, 0.9)]

    def test_span_in_whitespace_gap(self):
        narration = "aa  bb"
        timings = mock_timings(narration)
        with pytest.raises(NoWordOverlap):
            align_segments([Span(2, 3)], timings)

    def test_partial_word_overlap_counts(self):
        narration = "alpha beta"
        timings = mock_timings(narration)
        assert align_segments([Span(3, 7)], timings) == [(0.0, 0.6)]


class TestKeyframesFor:
    def test_fade_in(self):
        effect = keyframes_for("Fade-in", {"x"}, (2.0, 3.0))
        assert [(k.time, k.property, k.value) for k in effect.keyframes] == [
            (2.0, "opacity", 0.0), (3.0, "opacity", 1.0),
        ]
        assert effect.initially_hidden == frozenset({"x"})

    def test_fade_out(self):
        effect = keyframes_for("Fade-out", {"x"}, (5.0, 6.0))
        assert [(k.time, k.value) for k in effect.keyframes] == [(5.0, 1.0), (6.0, 0.0)]
        assert effect.initially_hidden == frozenset()

    def test_highlight_one_and_fade_others(self):
        effect = keyframes_for(
            "Highlight-one-and-fade-others", {"target"}, (10.0, 12.0),
            other_ids={"a", "b", "c", "target"},
        )
        delta = 0.15 * 2.0
        per_element = {}
        for k in effect.keyframes:
            per_element.setdefault(k.element_id, []).append((k.time, k.value))
        assert set(per_element) == {"a", "b", "c"}  # targets untouched
        for stops in per_element.values():
            assert stops == [(10.0, 1.0), (10.0 + delta, 0.2), (12.0 - delta, 0.2), (12.0, 1.0)]

    def test_emphasis_restores_start_value(self):
        for name in ("Bar-bounce", "Zoom-in-then-zoom-out", "Shine-in-a-short-duration"):
            effect = keyframes_for(name, {"x"}, (1.0, 2.0))
            assert effect.keyframes[0].value == effect.keyframes[-1].value
            assert effect.initially_hidden == frozenset()

    def test_line_wipe_with_legend(self):
        effect = keyframes_for(
            "Line-wipe-and-legend-fade-in", {"line1"}, (0.0, 1.0), legend_ids={"leg"},
        )
        props = {(k.element_id, k.property) for k in effect.keyframes}
        assert ("line1", "clip_fraction") in props
        assert ("leg", "opacity") in props
        assert effect.initially_hidden == frozenset({"line1", "leg"})

    def test_zoom_in_combines_scale_and_opacity(self):
        effect = keyframes_for("Zoom-in", {"x"}, (0.0, 1.0))
        props = {k.property for k in effect.keyframes}
        assert props == {"scale", "opacity"}
        scale = [k for k in effect.keyframes if k.property == "scale"]
        assert scale[0].value == 0.5 and scale[-1].value == 1.0

    def test_empty_interval_rejected(self):
        with pytest.raises(PreconditionError):
            keyframes_for("Fade-in", {"x"}, (1.0, 1.0))


def _index(marks=("m0", "m1"), legend=(), axes=(), annotations=()):
    entries = {}
    for i, eid in enumerate(marks):
        entries[eid] = MarkEntry(roles=frozenset({"mark"}), data_rows=frozenset({i}))
    for eid in legend:
        entries[eid] = MarkEntry(roles=frozenset({"legend"}), data_rows=frozenset())
    for eid in axes:
        entries[eid] = MarkEntry(roles=frozenset({"axis"}), data_rows=frozenset())
    for eid in annotations:
        entries[eid] = MarkEntry(roles=frozenset({"annotation"}), data_rows=frozenset())
    return MarkIndex(entries=entries)


class TestCompileTimeline:
    def test_empty_compile(self):
        timeline, report = compile_timeline([], [], _index(), 6.0)
        assert timeline.duration == 6.0
        assert timeline.tracks == {}
        assert all(v == "visible" for v in timeline.initial_visibility.values())
        assert report.passing

    def test_line_wipe_fixture(self):
        placed = [PlacedDirective("Line-wipe-in", frozenset({"m0"}), (1.0, 2.5))]
        timeline, _ = compile_timeline(placed, [], _index(), 6.0)
        assert timeline.initial_visibility["m0"] == "hidden"
        kfs = timeline.tracks["m0"]
        assert [(k.time, k.property, k.value) for k in kfs] == [
            (1.0, "clip_fraction", 0.0), (2.5, "clip_fraction", 1.0),
        ]
        assert not visible_at(timeline, "m0", 0.5)
        assert visible_at(timeline, "m0", 2.0)

    def test_annotation_fade_default_half_second(self):
        placed = [PlacedAnnotation(("a0",), (4.2, 6.0))]
        timeline, _ = compile_timeline([], placed, _index(annotations=("a0",)), 10.0)
        kfs = timeline.tracks["a0"]
        assert [(k.time, k.value) for k in kfs] == [(4.2, 0.0), (4.7, 1.0)]
        assert timeline.initial_visibility["a0"] == "hidden"

    def test_annotation_fade_clamped_to_segment(self):
        placed = [PlacedAnnotation(("a0",), (1.0, 1.2))]
        timeline, _ = compile_timeline([], placed, _index(annotations=("a0",)), 10.0)
        assert [k.time for k in timeline.tracks["a0"]] == [1.0, 1.2]

    def test_last_writer_wins_with_advisory(self):
        placed = [
            PlacedDirective("Fade-in", frozenset({"m0"}), (1.0, 3.0), label="first"),
            PlacedDirective("Fade-in", frozenset({"m0"}), (2.0, 4.0), label="second"),
        ]
        timeline, report = compile_timeline(placed, [], _index(), 6.0)
        assert any(a.code == "track-overlap" for a in report.advisories)
        opacity = [k for k in timeline.tracks["m0"] if k.property == "opacity"]
        assert [k.time for k in opacity] == [2.0, 4.0]

    def test_adjacent_groups_share_boundary_without_duplicates(self):
        placed = [
            PlacedDirective("Fade-in", frozenset({"m0"}), (1.0, 2.0)),
            PlacedDirective("Shine-in-a-short-duration", frozenset({"m0"}), (2.0, 3.2)),
        ]
        timeline, report = compile_timeline(placed, [], _index(), 6.0)
        assert not any(a.code == "track-overlap" for a in report.advisories)
        times = [k.time for k in timeline.tracks["m0"] if k.property == "opacity"]
        assert times == sorted(times)
        assert len(times) == len(set(times))

    def test_entrance_exit_visibility_window(self):
        placed = [
            PlacedDirective("Fade-in", frozenset({"m0"}), (1.0, 2.0)),
            PlacedDirective("Fade-out", frozenset({"m0"}), (4.0, 5.0)),
        ]
        timeline, _ = compile_timeline(placed, [], _index(), 6.0)
        assert not visible_at(timeline, "m0", 0.5)
        assert visible_at(timeline, "m0", 3.0)
        assert not visible_at(timeline, "m0", 5.5)

    def test_out_of_range_keyframes_rejected(self):
        placed = [PlacedDirective("Fade-in", frozenset({"m0"}), (1.0, 7.0))]
        with pytest.raises(ValueError):
            compile_timeline(placed, [], _index(), 6.0)

    def test_legend_variant_pulls_legend_ids_from_index(self):
        placed = [PlacedDirective(
            "Line-wipe-and-legend-fade-in", frozenset({"m0", "m1"}), (0.0, 1.0),
        )]
        timeline, _ = compile_timeline(placed, [], _index(legend=("leg",)), 6.0)
        assert timeline.initial_visibility["leg"] == "hidden"
        assert any(k.property == "opacity" for k in timeline.tracks["leg"])

    def test_highlight_dims_only_other_marks(self):
        placed = [PlacedDirective(
            "Highlight-one-and-fade-others", frozenset({"m0"}), (1.0, 3.0),
        )]
        index = _index(marks=("m0", "m1"), legend=("leg",), annotations=("a0",))
        timeline, _ = compile_timeline(placed, [], index, 6.0)
        assert "m0" not in timeline.tracks
        assert "leg" not in timeline.tracks
        assert "a0" not in timeline.tracks
        assert value_at(timeline, "m1", "opacity", 2.0) == 0.2

    def test_hidden_forever_advisory(self):
        placed = [PlacedAnnotation(("a0",), (1.0, 2.0))]
        index = _index(annotations=("a0", "a1"))
        timeline, report = compile_timeline(
            [], placed, index, 6.0,
        )
        # a1 is never placed: visible by default, no advisory
        assert timeline.initial_visibility["a1"] == "visible"
        assert report.passing


class TestEvaluation:
    def test_interpolation_linear(self):
        timeline = Timeline(
            duration=10.0,
            tracks={"x": (Keyframe("x", 2.0, "opacity", 0.0), Keyframe("x", 4.0, "opacity", 1.0))},
            initial_visibility={"x": "hidden"},
        )
        assert value_at(timeline, "x", "opacity", 3.0) == pytest.approx(0.5)
        assert value_at(timeline, "x", "opacity", 1.0) == 1.0  # rest before track
        assert value_at(timeline, "x", "opacity", 9.0) == 1.0  # hold after track

    def test_easing_ease_out(self):
        timeline = Timeline(
            duration=10.0,
            tracks={"x": (
                Keyframe("x", 0.0, "scale", 0.0, "ease-out"),
                Keyframe("x", 1.0, "scale", 1.0, "ease-out"),
            )},
            initial_visibility={},
        )
        assert value_at(timeline, "x", "scale", 0.5) == pytest.approx(0.75)

    def test_round_trip_serialization(self):
        placed = [PlacedDirective("Fade-in", frozenset({"m0"}), (1.0, 2.0))]
        timeline, _ = compile_timeline(placed, [], _index(), 6.0)
        again = Timeline.from_json(timeline.to_json())
        assert again.duration == timeline.duration
        assert again.tracks == timeline.tracks
        assert again.initial_visibility == timeline.initial_visibility
        assert timeline_invariant_violations(again) == []
