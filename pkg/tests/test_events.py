import math

import numpy as np
import pytest

from flames import events as ev


class TestIngest:
    def test_two_line_parse(self):
        stream = ev.ingest_events("0.001,3,4,1\n0.002,3,4,-1", geometry=(8, 8))
        assert len(stream) == 2
        assert stream.events[0] == ev.SpikeEvent(x=3, y=4, t=0.001, p=1.0)
        assert stream.events[1].p == -1.0

    def test_empty_input(self):
        stream = ev.ingest_events("", geometry=(4, 4))
        assert len(stream) == 0

    def test_geometry_header(self):
        stream = ev.ingest_events("#geometry 8 8\n0.5,1,2,1")
        assert stream.geometry == (8, 8)

    def test_explicit_geometry_wins(self):
        stream = ev.ingest_events("#geometry 4 4\n0.5,1,2,1", geometry=(16, 16))
        assert stream.geometry == (16, 16)

    def test_missing_geometry(self):
        with pytest.raises(ev.EventFormatError, match="geometry"):
            ev.ingest_events("0.5,1,2,1")

    def test_non_monotonic_strict(self):
        with pytest.raises(
            ev.EventFormatError, match="non-monotonic timestamp at line 2"
        ):
            ev.ingest_events("0.002,0,0,1\n0.001,0,0,1", geometry=(4, 4))

    def test_resort_flag(self):
        stream = ev.ingest_events(
            "0.002,0,0,1\n0.001,1,0,1", geometry=(4, 4), resort=True
        )
        assert [e.t for e in stream.events] == [0.001, 0.002]

    def test_resort_stable_among_ties(self):
        stream = ev.ingest_events(
            "0.002,0,0,1\n0.001,1,0,1\n0.001,2,0,1", geometry=(4, 4), resort=True
        )
        assert [e.x for e in stream.events] == [1, 2, 0]

    def test_malformed_line_number(self):
        with pytest.raises(ev.EventFormatError, match="line 2"):
            ev.ingest_events("0.001,0,0,1\n0.002,zero,0,1", geometry=(4, 4))

    def test_wrong_field_count(self):
        with pytest.raises(ev.EventFormatError, match="4 comma-separated"):
            ev.ingest_events("0.001,0,0", geometry=(4, 4))

    def test_out_of_geometry(self):
        with pytest.raises(ValueError, match="outside geometry"):
            ev.ingest_events("0.001,9,0,1", geometry=(8, 8))

    def test_comments_skipped(self):
        stream = ev.ingest_events(
            "# a comment\n0.001,0,0,1\n\n# another\n", geometry=(4, 4)
        )
        assert len(stream) == 1


class TestRoundTrip:
    def test_serialize_then_ingest(self):
        stream = ev.generate_poisson(rate=40, duration=0.5, channels=3, seed=7)
        text = ev.serialize_events(stream)
        again = ev.ingest_events(text)
        assert again == stream

    def test_byte_exact_on_canonical(self):
        stream = ev.generate_poisson(rate=40, duration=0.5, channels=3, seed=7)
        text = ev.serialize_events(stream)
        assert ev.serialize_events(ev.ingest_events(text)) == text

    def test_canonical_fixture(self):
        text = "#geometry 2 2\n0.001,0,0,1.0\n0.25,1,1,-1.0\n"
        assert ev.serialize_events(ev.ingest_events(text)) == text


class TestBatching:
    def test_same_timestamp_sums(self):
        stream = ev.ingest_events("0.5,0,0,1\n0.5,0,0,1", geometry=(2, 1))
        batches = ev.batch_by_timestamp(stream)
        assert len(batches) == 1
        assert batches[0].t == 0.5
        assert batches[0].values[0] == 2.0

    def test_distinct_times_one_each(self):
        stream = ev.ingest_events("0.1,0,0,1\n0.2,1,0,1\n0.3,0,0,1", geometry=(2, 1))
        batches = ev.batch_by_timestamp(stream)
        assert [b.t for b in batches] == [0.1, 0.2, 0.3]

    def test_magnitude_conservation(self):
        # brute-force sum oracle over random signed events
        rng = np.random.default_rng(5)
        lines = []
        t = 0.0
        for _ in range(100):
            t += rng.random() < 0.5 and 0.01 or 0.0  # frequent timestamp ties
            lines.append(
                f"{t + 0.001},{rng.integers(0, 4)},{rng.integers(0, 4)},"
                f"{rng.choice([-1.0, 1.0, 2.5])}"
            )
        stream = ev.ingest_events("\n".join(lines), geometry=(4, 4), resort=True)
        total_p = sum(e.p for e in stream.events)
        batches = ev.batch_by_timestamp(stream)
        assert sum(float(b.values.sum()) for b in batches) == pytest.approx(
            total_p, abs=1e-12
        )

    def test_bad_channel_index(self):
        stream = ev.ingest_events("0.5,1,1,1", geometry=(2, 2))
        with pytest.raises(ValueError, match="outside"):
            ev.batch_by_timestamp(stream, channel_map=lambda x, y, p: 99)

    def test_polarity_split_map(self):
        cmap = ev.polarity_split_channel_map((2, 2))
        assert cmap(1, 0, 1.0) == 3
        assert cmap(1, 0, -1.0) == 2


class TestPoisson:
    def test_rate_zero_rejected(self):
        with pytest.raises(ValueError, match="rate"):
            ev.generate_poisson(rate=0, duration=1.0)

    def test_duration_zero_rejected(self):
        with pytest.raises(ValueError, match="duration"):
            ev.generate_poisson(rate=1.0, duration=0)

    def test_count_within_tail_bound(self):
        # mean 1000, sd ~31.6; [800, 1200] is a +-6.3 sigma window
        for seed in range(8):
            stream = ev.generate_poisson(rate=100, duration=10, channels=1, seed=seed)
            assert 800 <= len(stream) <= 1200

    def test_seed_determinism(self):
        a = ev.generate_poisson(rate=50, duration=1.0, channels=2, seed=3)
        b = ev.generate_poisson(rate=50, duration=1.0, channels=2, seed=3)
        assert a == b
        c = ev.generate_poisson(rate=50, duration=1.0, channels=2, seed=4)
        assert a != c

    def test_sorted_and_positive_polarity(self):
        stream = ev.generate_poisson(rate=50, duration=1.0, channels=3, seed=0)
        ts = [e.t for e in stream.events]
        assert ts == sorted(ts)
        assert all(e.p == 1.0 for e in stream.events)


class TestPeriodic:
    def test_five_ms_schedule(self):
        stream = ev.generate_periodic(period=0.005, duration=0.02)
        assert [e.t for e in stream.events] == [
            0.005,
            0.005 * 2,
            0.005 * 3,
            0.005 * 4,
        ]

    def test_period_beyond_duration(self):
        assert len(ev.generate_periodic(period=1.0, duration=0.5)) == 0

    def test_count_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            period = float(rng.uniform(0.01, 0.3))
            duration = float(rng.uniform(0.0, 3.0))
            stream = ev.generate_periodic(period, duration, channels=1)
            assert len(stream) == math.floor(duration / period + 1e-9)

    def test_all_channels_fire(self):
        stream = ev.generate_periodic(period=0.5, duration=1.0, channels=3)
        assert len(stream) == 6  # 2 ticks x 3 channels
