"""Probe scheduling, rate normalization, and synthetic stream generation."""

import os
from fractions import Fraction

import numpy as np
import pytest

from socialsense import sensorstream as ss
from socialsense.errors import (
    InsufficientSamplesError,
    InvalidConfigError,
    InvalidDataError,
    InvalidSpecError,
    SequencingError,
    ShapeError,
)


def oracle_normalize(times_ms, values, target_hz, window_start_ms, window_ms=15_000):
    """Reference resampler using exact rational bin edges and a scalar loop."""
    f = Fraction(target_hz)
    m = round(window_ms / 1000 * target_hz)
    squeeze = np.asarray(values).ndim == 1
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    bins = [[] for _ in range(m)]
    for t, v in zip(times_ms, values):
        off = Fraction(int(t) - window_start_ms)
        if off < 0 or off >= window_ms:
            continue
        k = int(off * f / 1000)
        if 0 <= k < m:
            bins[k].append(v)
    means = {k: np.mean(b, axis=0) for k, b in enumerate(bins) if b}
    if not means:
        raise InsufficientSamplesError("empty")
    known = sorted(means)
    out = np.empty((m, values.shape[1]))
    for k in range(m):
        if k in means:
            out[k] = means[k]
        elif k < known[0]:
            out[k] = means[known[0]]
        elif k > known[-1]:
            out[k] = means[known[-1]]
        else:
            lo = max(j for j in known if j < k)
            hi = min(j for j in known if j > k)
            w = (k - lo) / (hi - lo)
            out[k] = (1 - w) * means[lo] + w * means[hi]
    return out[:, 0] if squeeze else out


def test_schedule_default_day_count():
    probes = ss.schedule_probes(0, 24 * 3_600_000)
    assert len(probes) == 960
    assert probes[0].start == 0 and probes[0].end == 15_000
    assert probes[-1].start == 959 * 90_000
    for i, p in enumerate(probes):
        assert p.index == i
        assert p.start == i * 90_000
        assert p.end - p.start == 15_000


def test_schedule_five_minute_horizon():
    probes = ss.schedule_probes(0, 300_000)
    # 270_000 + 15_000 = 285_000 fits, the next window would end at 375_000
    assert [p.start for p in probes] == [0, 90_000, 180_000, 270_000]


def test_schedule_partial_window_excluded():
    probes = ss.schedule_probes(0, 104_999)
    assert [p.start for p in probes] == [0]
    probes = ss.schedule_probes(0, 105_000)
    assert [p.start for p in probes] == [0, 90_000]


def test_schedule_epoch_offset():
    epoch = 9 * 3_600_000 + 1234
    probes = ss.schedule_probes(epoch, 200_000)
    assert [p.start for p in probes] == [epoch, epoch + 90_000, epoch + 180_000]


def test_schedule_rejects_negative():
    with pytest.raises(InvalidConfigError):
        ss.schedule_probes(-1, 1000)
    with pytest.raises(InvalidConfigError):
        ss.schedule_probes(0, -1)


def test_duty_cycle_config_validation():
    with pytest.raises(InvalidConfigError):
        ss.DutyCycleConfig(window_ms=0)
    with pytest.raises(InvalidConfigError):
        ss.DutyCycleConfig(gap_ms=-1)
    cfg = ss.DutyCycleConfig()
    assert cfg.period_ms == 90_000
    assert cfg.slots_per_window == 15


def test_slot_starts():
    p = ss.ProbeWindow(index=0, start=90_000, end=105_000)
    starts = p.slot_starts()
    assert len(starts) == 15
    assert starts[0] == 90_000
    assert starts[-1] == 104_000


def test_normalize_rate_matches_oracle():
    rng = np.random.default_rng(42)
    for trial in range(200):
        hz = int(rng.choice([5, 6, 25]))
        n = int(rng.integers(1, 400))
        start = int(rng.integers(0, 10**9))
        times = start + np.sort(rng.integers(0, 15_000, size=n))
        vals = rng.normal(size=n)
        got = ss.normalize_rate(times, vals, hz, start)
        want = oracle_normalize(times, vals, hz, start)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_normalize_rate_vector_values():
    rng = np.random.default_rng(3)
    times = np.sort(rng.integers(0, 15_000, size=120))
    vals = rng.normal(size=(120, 3))
    got = ss.normalize_rate(times, vals, 6, 0)
    want = oracle_normalize(times, vals, 6, 0)
    assert got.shape == (90, 3)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_normalize_rate_output_length():
    # 299 samples at roughly 20 Hz inside one window resample to 90 at 6 Hz
    times = np.linspace(0, 14_950, 299).astype(int)
    vals = np.ones(299)
    out = ss.normalize_rate(times, vals, 6, 0)
    assert out.shape == (90,)
    np.testing.assert_allclose(out, 1.0)
    assert ss.normalize_rate(times, vals, 5, 0).shape == (75,)
    assert ss.normalize_rate(times, vals, 25, 0).shape == (375,)


def test_normalize_rate_single_sample_fills_window():
    out = ss.normalize_rate([7_000], [4.5], 6, 0)
    np.testing.assert_allclose(out, 4.5)


def test_normalize_rate_edge_bins_clamp():
    # samples only in bins 30..59: bins before clamp left, after clamp right
    times = np.arange(5_000, 10_000, 167)
    vals = np.linspace(1.0, 2.0, times.size)
    out = ss.normalize_rate(times, vals, 6, 0)
    assert out[0] == out[1] == out[29]
    assert out[-1] == out[89]


def test_normalize_rate_empty_raises():
    with pytest.raises(InsufficientSamplesError):
        ss.normalize_rate([20_000], [1.0], 6, 0)
    with pytest.raises(InsufficientSamplesError):
        ss.normalize_rate([], [], 6, 0)


def test_normalize_rate_bad_inputs():
    with pytest.raises(InvalidConfigError):
        ss.normalize_rate([0], [1.0], 0, 0)
    with pytest.raises(ShapeError):
        ss.normalize_rate([0, 1], [1.0], 6, 0)


def test_magnitude():
    v = np.array([[3.0, 4.0, 12.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(ss.magnitude(v), [13.0, 0.0, 1.0])


def test_stream_io_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    streams = {
        "accel": [ss.SensorSample(int(t), "accel", tuple(rng.normal(size=3)))
                  for t in range(0, 1000, 50)],
        "light": [ss.SensorSample(int(t), "light", (float(rng.uniform()),))
                  for t in range(0, 1000, 200)],
    }
    ss.write_streams(str(tmp_path), streams)
    back = ss.read_streams(str(tmp_path))
    assert set(back) >= {"accel", "light"}
    assert [s.t for s in back["accel"]] == [s.t for s in streams["accel"]]
    got = np.array([s.values for s in back["accel"]])
    want = np.array([s.values for s in streams["accel"]])
    np.testing.assert_allclose(got, want)


def test_stream_io_missing_file_tolerated(tmp_path):
    back = ss.read_streams(str(tmp_path))
    for kind in ss.SENSOR_KINDS:
        assert back.get(kind, []) == []


def test_stream_io_rejects_bad_rows(tmp_path):
    path = os.path.join(str(tmp_path), "accel.jsonl")
    with open(path, "w") as fh:
        fh.write('{"t_ms": 0, "values": [1.0, 2.0]}\n')
    with pytest.raises(ShapeError):
        ss.read_streams(str(tmp_path))

    with open(path, "w") as fh:
        fh.write('{"t_ms": -5, "values": [1.0, 2.0, 3.0]}\n')
    with pytest.raises(InvalidDataError):
        ss.read_streams(str(tmp_path))

    with open(path, "w") as fh:
        fh.write('{"t_ms": 100, "values": [1.0, 2.0, 3.0]}\n')
        fh.write('{"t_ms": 50, "values": [1.0, 2.0, 3.0]}\n')
    with pytest.raises(SequencingError):
        ss.read_streams(str(tmp_path))


def test_fill_probes_routes_samples():
    probes = ss.schedule_probes(0, 300_000)
    streams = {
        "light": [
            ss.SensorSample(0, "light", (1.0,)),
            ss.SensorSample(14_999, "light", (2.0,)),
            ss.SensorSample(15_000, "light", (3.0,)),   # gap, dropped
            ss.SensorSample(89_999, "light", (4.0,)),   # gap, dropped
            ss.SensorSample(90_000, "light", (5.0,)),
        ],
    }
    filled = ss.fill_probes(streams, probes)
    assert [s.values[0] for s in filled[0].samples["light"]] == [1.0, 2.0]
    assert [s.values[0] for s in filled[1].samples["light"]] == [5.0]
    assert filled[2].samples.get("light", []) == []


def test_generate_scenario_deterministic():
    spec = ss.SyntheticScenario(duration_ms=600_000, seed=5, interactions=(
        ss.PlantedInteraction(start_ms=100_000, end_ms=400_000),))
    a = ss.generate_scenario(spec)
    b = ss.generate_scenario(spec)
    assert len(a.probes) == len(b.probes) == 7
    for pa, pb in zip(a.probes, b.probes):
        for kind in pa.samples:
            va = np.array([s.values for s in pa.samples[kind]])
            vb = np.array([s.values for s in pb.samples[kind]])
            np.testing.assert_array_equal(va, vb)
    assert a.truth == b.truth


def test_generate_scenario_slot_truth_counts():
    # full-density interaction covering probes 2..4 completely
    spec = ss.SyntheticScenario(duration_ms=600_000, seed=9, interactions=(
        ss.PlantedInteraction(start_ms=180_000, end_ms=420_000,
                              cue_density=1.0, fg_density=0.4),))
    data = ss.generate_scenario(spec)
    by_probe = {}
    for t in data.truth:
        by_probe.setdefault(t.probe_index, []).append(t)
    for idx in (2, 3, 4):
        slots = by_probe[idx]
        assert len(slots) == 15
        assert sum(t.cue for t in slots) == 15
        assert sum(t.fg for t in slots) == round(0.4 * 15)
    for idx in (0, 5):
        assert sum(t.cue for t in by_probe[idx]) == 0


def test_generate_scenario_off_body():
    spec = ss.SyntheticScenario(duration_ms=600_000, seed=1,
                                off_body=((90_000, 200_000),))
    data = ss.generate_scenario(spec)
    assert data.probes[1].on_body is False
    assert data.probes[2].on_body is False
    assert not data.probes[1].samples
    assert data.probes[0].on_body and data.probes[3].on_body


def test_generate_scenario_audio_feature_arity():
    spec = ss.SyntheticScenario(duration_ms=300_000, seed=2)
    data = ss.generate_scenario(spec)
    for probe in data.probes:
        feats = probe.samples["audio-feature"]
        assert len(feats) == 15
        for s in feats:
            assert len(s.values) == 2
            assert float(s.values[0]).is_integer()
            assert s.values[1] in (0.0, 1.0)


def test_generate_scenario_raw_rates():
    spec = ss.SyntheticScenario(duration_ms=300_000, seed=2)
    data = ss.generate_scenario(spec)
    p = data.probes[0]
    assert len(p.samples["ppg"]) == 15 * 25
    assert len(p.samples["accel"]) == 15 * 20
    assert len(p.samples["light"]) == 15 * 5


def test_parse_scenario_round_trip():
    obj = {
        "duration_ms": 120_000,
        "epoch_ms": 1000,
        "seed": 3,
        "interactions": [{"start_ms": 0, "end_ms": 60_000, "mode": "virtual"}],
        "off_body": [[60_000, 70_000]],
    }
    spec = ss.parse_scenario(obj)
    assert spec.duration_ms == 120_000
    assert spec.interactions[0].mode == "virtual"
    assert spec.off_body == ((60_000, 70_000),)
    with pytest.raises(InvalidSpecError):
        ss.parse_scenario({"duration_ms": -5})
    with pytest.raises(InvalidSpecError):
        ss.parse_scenario({
            "duration_ms": 1000,
            "interactions": [{"start_ms": 50, "end_ms": 10}],
        })


def test_scenario_streams_merge_probes():
    spec = ss.SyntheticScenario(duration_ms=300_000, seed=4)
    data = ss.generate_scenario(spec)
    streams = data.streams()
    for kind, series in streams.items():
        ts = [s.t for s in series]
        assert ts == sorted(ts)
    total = sum(len(p.samples.get("ppg", [])) for p in data.probes)
    assert len(streams["ppg"]) == total
