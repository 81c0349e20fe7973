import pytest
from hypothesis import given, settings, strategies as st

from drowsewatch.features import (
    EYE_CLOSURE_CAP_MS,
    SAMPLE_PERIOD_MS,
    WINDOW_SAMPLES,
    YAWN_SATURATION_MS,
    BehaviorSample,
    ExtractorState,
    FrameOrderError,
    SampleGapError,
    SeriesFormatError,
    Window,
    export_series,
    extract_samples,
    import_series,
    sample,
    update,
    windows,
)
from drowsewatch.ingest import BoundingBox, Detection, DetectionLabel, FrameDetection

BOX = BoundingBox(10, 10, 40, 30)


def frame(t_ms, *labels):
    return FrameDetection(t_ms, tuple(Detection(l, BOX, 0.9) for l in labels))


def grid_samples(pairs, start_ms=0):
    return [
        BehaviorSample(start_ms + k * SAMPLE_PERIOD_MS, closure, since)
        for k, (closure, since) in enumerate(pairs)
    ]


class TestUpdate:
    def test_closure_starts_on_closed_frame(self):
        state = update(ExtractorState(), frame(1000, DetectionLabel.CLOSED_EYE))
        assert state.eye_closed_since == 1000

    def test_closure_clears_on_opened_frame(self):
        state = update(ExtractorState(), frame(1000, DetectionLabel.CLOSED_EYE))
        state = update(state, frame(1200, DetectionLabel.OPENED_EYE))
        assert state.eye_closed_since is None

    def test_yawn_updates_timestamp(self):
        state = update(ExtractorState(), frame(5000, DetectionLabel.YAWN))
        assert state.last_yawn_at == 5000

    def test_later_yawn_wins(self):
        state = update(ExtractorState(), frame(5000, DetectionLabel.YAWN))
        state = update(state, frame(7000, DetectionLabel.YAWN))
        assert state.last_yawn_at == 7000

    def test_closure_start_not_reset_while_still_closed(self):
        state = update(ExtractorState(), frame(1000, DetectionLabel.CLOSED_EYE))
        state = update(state, frame(1500, DetectionLabel.CLOSED_EYE))
        assert state.eye_closed_since == 1000

    def test_mixed_eyes_treated_as_open(self):
        state = update(
            ExtractorState(),
            frame(1000, DetectionLabel.CLOSED_EYE, DetectionLabel.OPENED_EYE),
        )
        assert state.eye_closed_since is None

    def test_no_eye_detection_holds_state(self):
        closed = update(ExtractorState(), frame(1000, DetectionLabel.CLOSED_EYE))
        held = update(closed, frame(1100, DetectionLabel.FACE))
        assert held.eye_closed_since == 1000
        open_state = update(ExtractorState(), frame(500, DetectionLabel.OPENED_EYE))
        held_open = update(open_state, frame(600, DetectionLabel.FACE))
        assert held_open.eye_closed_since is None

    def test_out_of_order_frame_rejected(self):
        state = update(ExtractorState(), frame(1000, DetectionLabel.OPENED_EYE))
        with pytest.raises(FrameOrderError):
            update(state, frame(900, DetectionLabel.OPENED_EYE))


class TestSample:
    def test_closure_is_elapsed_time(self):
        state = update(ExtractorState(), frame(1000, DetectionLabel.CLOSED_EYE))
        assert sample(state, 1600).eye_closure_ms == 600

    def test_open_eyes_give_zero_closure(self):
        assert sample(ExtractorState(), 3000).eye_closure_ms == 0

    def test_no_yawn_saturates(self):
        assert sample(ExtractorState(), 3000).since_yawn_ms == YAWN_SATURATION_MS

    def test_no_yawn_saturated_in_full_replay(self):
        frames = [frame(t, DetectionLabel.OPENED_EYE) for t in range(0, 3100, 100)]
        assert all(s.since_yawn_ms == YAWN_SATURATION_MS for s in extract_samples(frames))

    def test_since_yawn_measures_elapsed(self):
        state = update(ExtractorState(), frame(5000, DetectionLabel.YAWN))
        assert sample(state, 5500).since_yawn_ms == 500

    def test_closure_clipped_at_cap(self):
        state = update(ExtractorState(), frame(0, DetectionLabel.CLOSED_EYE))
        assert sample(state, 20_000).eye_closure_ms == EYE_CLOSURE_CAP_MS

    def test_since_yawn_clipped_at_saturation(self):
        state = update(ExtractorState(), frame(0, DetectionLabel.YAWN))
        assert sample(state, 300_000).since_yawn_ms == YAWN_SATURATION_MS

    def test_off_grid_time_rejected(self):
        with pytest.raises(ValueError, match="multiple"):
            sample(ExtractorState(), 150)


class TestExtractSamples:
    @pytest.mark.parametrize("first_closed", [3, 4, 5, 6, 7, 8])
    def test_30fps_closure_quantization(self, first_closed):
        # 6 closed frames of a 30 fps stream span ~200 ms of closure; the
        # sampled closure peak lands within one 100 ms quantum of that.
        times = [round(i * 1000 / 30) for i in range(24)]
        closed = set(times[first_closed : first_closed + 6])
        frames = [
            frame(t, DetectionLabel.CLOSED_EYE if t in closed else DetectionLabel.OPENED_EYE)
            for t in times
        ]
        samples = list(extract_samples(frames))
        true_duration = times[first_closed + 6] - times[first_closed]
        peak = max(s.eye_closure_ms for s in samples)
        assert abs(peak - true_duration) <= SAMPLE_PERIOD_MS
        reopen_tick = ((times[first_closed + 6] + 99) // 100) * 100
        assert all(s.eye_closure_ms == 0 for s in samples if s.t_ms >= reopen_tick)

    def test_tick_count_covers_stream(self):
        frames = [frame(t, DetectionLabel.OPENED_EYE) for t in (0, 33, 67, 633)]
        ticks = [s.t_ms for s in extract_samples(frames)]
        assert ticks == list(range(0, 700, 100))

    def test_frame_on_tick_included_in_that_sample(self):
        frames = [
            frame(0, DetectionLabel.OPENED_EYE),
            frame(100, DetectionLabel.CLOSED_EYE),
            frame(200, DetectionLabel.CLOSED_EYE),
        ]
        by_tick = {s.t_ms: s for s in extract_samples(frames)}
        assert by_tick[100].eye_closure_ms == 0  # closure started exactly at 100
        assert by_tick[200].eye_closure_ms == 100

    def test_empty_stream(self):
        assert list(extract_samples([])) == []

    def test_contiguous_closure_length_matches_timeline(self):
        # Closure from 500 ms to 2000 ms; each sample inside reports elapsed time.
        frames = []
        for t in range(0, 3000, 50):
            closed = 500 <= t < 2000
            frames.append(frame(t, DetectionLabel.CLOSED_EYE if closed else DetectionLabel.OPENED_EYE))
        for s in extract_samples(frames):
            if 500 <= s.t_ms < 2000:
                assert s.eye_closure_ms == s.t_ms - 500
            elif s.t_ms >= 2000:
                assert s.eye_closure_ms == 0


class TestWindows:
    def test_exactly_one_window_at_boundary(self):
        wins = list(windows(grid_samples([(0, YAWN_SATURATION_MS)] * WINDOW_SAMPLES)))
        assert len(wins) == 1
        assert len(wins[0]) == WINDOW_SAMPLES

    def test_below_boundary_yields_none(self):
        wins = list(windows(grid_samples([(0, YAWN_SATURATION_MS)] * (WINDOW_SAMPLES - 1))))
        assert wins == []

    def test_120_samples_yield_71_windows(self):
        samples = grid_samples([(k % 50, YAWN_SATURATION_MS) for k in range(120)])
        wins = list(windows(samples))
        assert len(wins) == 71
        assert wins[0].samples == tuple(samples[0:50])
        assert wins[70].samples == tuple(samples[70:120])

    def test_brute_force_counts_and_overlap(self):
        # Independent enumeration: every slice of 50 consecutive positions.
        for n in range(0, 140):
            samples = grid_samples([(0, YAWN_SATURATION_MS)] * n)
            wins = list(windows(samples))
            expected = [tuple(samples[k : k + 50]) for k in range(n) if k + 50 <= n]
            assert [w.samples for w in wins] == expected
            assert len(wins) == max(0, n - 49)
            for a, b in zip(wins, wins[1:]):
                assert a.samples[1:] == b.samples[:-1]

    def test_gap_rejected(self):
        samples = grid_samples([(0, YAWN_SATURATION_MS)] * 60)
        gappy = samples[:30] + [
            BehaviorSample(samples[29].t_ms + 200 + k * 100, 0, YAWN_SATURATION_MS)
            for k in range(30)
        ]
        with pytest.raises(SampleGapError):
            windows(gappy)

    def test_window_rejects_non_consecutive(self):
        samples = grid_samples([(0, YAWN_SATURATION_MS)] * 50)
        shuffled = samples[:25] + samples[26:] + [samples[25]]
        with pytest.raises(SampleGapError):
            Window(tuple(shuffled))

    def test_normalized_range(self):
        samples = grid_samples([(EYE_CLOSURE_CAP_MS, 0)] * WINDOW_SAMPLES)
        [win] = windows(samples)
        x = win.normalized()
        assert x.shape == (WINDOW_SAMPLES, 2)
        assert x[:, 0].max() == 1.0
        assert x[:, 1].min() == 0.0


class TestSeriesFormat:
    def test_single_sample_line(self):
        assert export_series(grid_samples([(0, 120_000)])) == "0 120000\n"

    def test_import_rejects_non_integer(self):
        with pytest.raises(SeriesFormatError, match="non-integer"):
            import_series("12 abc\n")

    def test_import_rejects_wrong_columns(self):
        with pytest.raises(SeriesFormatError, match="2 columns"):
            import_series("12\n")
        with pytest.raises(SeriesFormatError, match="2 columns"):
            import_series("1 2 3\n")

    def test_import_rejects_out_of_range(self):
        with pytest.raises(SeriesFormatError):
            import_series(f"{EYE_CLOSURE_CAP_MS + 1} 0\n")

    def test_import_rejects_underscore_and_sign(self):
        with pytest.raises(SeriesFormatError):
            import_series("1_0 0\n")
        with pytest.raises(SeriesFormatError):
            import_series("+10 0\n")

    @settings(max_examples=200)
    @given(
        st.lists(
            st.tuples(
                st.integers(0, EYE_CLOSURE_CAP_MS),
                st.integers(0, YAWN_SATURATION_MS),
            ),
            max_size=60,
        )
    )
    def test_round_trip_identity(self, pairs):
        samples = grid_samples(pairs)
        assert import_series(export_series(samples)) == samples

    def test_round_trip_preserves_nonzero_start(self):
        samples = grid_samples([(10, 20), (30, 40)], start_ms=700)
        text = export_series(samples)
        assert import_series(text, start_ms=700) == samples


class TestBehaviorSampleInvariants:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"t_ms": 150, "eye_closure_ms": 0, "since_yawn_ms": 0},
            {"t_ms": -100, "eye_closure_ms": 0, "since_yawn_ms": 0},
            {"t_ms": 0, "eye_closure_ms": -1, "since_yawn_ms": 0},
            {"t_ms": 0, "eye_closure_ms": EYE_CLOSURE_CAP_MS + 1, "since_yawn_ms": 0},
            {"t_ms": 0, "eye_closure_ms": 0, "since_yawn_ms": YAWN_SATURATION_MS + 1},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            BehaviorSample(**kwargs)

    def test_normalized_in_unit_square(self):
        s = BehaviorSample(0, 2_500, 60_000)
        assert s.normalized() == (0.25, 0.5)


class TestSinceYawnDynamics:
    def test_increases_by_period_until_saturation(self):
        frames = [frame(0, DetectionLabel.YAWN)]
        frames += [frame(t, DetectionLabel.OPENED_EYE) for t in range(50, 130_000, 1000)]
        samples = list(extract_samples(frames))
        for a, b in zip(samples, samples[1:]):
            if b.since_yawn_ms < YAWN_SATURATION_MS:
                assert b.since_yawn_ms - a.since_yawn_ms == SAMPLE_PERIOD_MS
            else:
                assert b.since_yawn_ms == YAWN_SATURATION_MS

    def test_only_yawn_decreases_it(self):
        frames = [
            frame(0, DetectionLabel.OPENED_EYE),
            frame(5000, DetectionLabel.YAWN),
            frame(5050, DetectionLabel.OPENED_EYE),
            frame(9000, DetectionLabel.YAWN),
            frame(12_000, DetectionLabel.OPENED_EYE),
        ]
        samples = list(extract_samples(frames))
        yawn_times = {5000, 9000}
        for a, b in zip(samples, samples[1:]):
            if b.since_yawn_ms < a.since_yawn_ms:
                # a yawn must have landed in (a.t_ms, b.t_ms]
                assert any(a.t_ms < y <= b.t_ms for y in yawn_times)
