import math

import numpy as np
import pytest

from socialsense.errors import (
    ConflictError,
    InvalidConfigError,
    InvalidDataError,
    UndefinedMetricError,
)
from socialsense.evaluation import (
    DURATION_EDGES_MIN,
    LATENCY_EDGES_MS,
    LATENCY_NAMES,
    PromptOutcome,
    added_overlap,
    balanced_accuracy,
    compute_metrics,
    deployment_report,
    label_windows,
    reconcile_no_responses,
)


def oracle_counts(pred, y):
    tp = fn = tn = fp = 0
    for p, t in zip(pred, y):
        if t == 1:
            tp, fn = (tp + 1, fn) if p == 1 else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if p == 1 else (fp, tn + 1)
    return tp, fn, tn, fp


def test_metrics_match_counting_oracle():
    """Every reported figure rebuilt from first principles on random data."""
    rng = np.random.default_rng(31)
    checked = 0
    while checked < 300:
        n = int(rng.integers(4, 200))
        y = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(int)
        pred = np.where(rng.random(n) < 0.8, y, 1 - y)
        tp, fn, tn, fp = oracle_counts(pred, y)
        if tp + fn == 0 or tn + fp == 0 or tp + fp == 0 or tn + fn == 0:
            continue
        checked += 1
        rep = compute_metrics(pred, y)
        assert (rep.tp, rep.fn, rep.tn, rep.fp) == (tp, fn, tn, fp)
        sens = 100.0 * tp / (tp + fn)
        spec = 100.0 * tn / (tn + fp)
        ppos = 100.0 * tp / (tp + fp)
        pneg = 100.0 * tn / (tn + fn)
        f1p = 2 * ppos * sens / (ppos + sens) if ppos + sens else 0.0
        f1n = 2 * pneg * spec / (pneg + spec) if pneg + spec else 0.0
        assert abs(rep.accuracy - 100.0 * (tp + tn) / n) < 1e-10
        assert abs(rep.sensitivity - sens) < 1e-10
        assert abs(rep.specificity - spec) < 1e-10
        assert abs(rep.balanced_accuracy - (sens + spec) / 2) < 1e-10
        assert abs(rep.precision_macro - (ppos + pneg) / 2) < 1e-10
        assert abs(rep.f1_macro - (f1p + f1n) / 2) < 1e-10
        assert rep.balanced_accuracy == balanced_accuracy(pred, y)


def test_published_sensitivity_specificity_pair():
    # 84.86 sensitivity and 86.16 specificity average to 85.51 balanced
    y = np.array([1] * 10_000 + [0] * 10_000)
    pred = np.concatenate([
        np.array([1] * 8_486 + [0] * 1_514),
        np.array([0] * 8_616 + [1] * 1_384),
    ])
    rep = compute_metrics(pred, y)
    assert rep.sensitivity == pytest.approx(84.86, abs=1e-12)
    assert rep.specificity == pytest.approx(86.16, abs=1e-12)
    assert rep.balanced_accuracy == pytest.approx(85.51, abs=1e-12)


def test_metrics_name_the_undefined_quantity():
    with pytest.raises(UndefinedMetricError, match="sensitivity"):
        compute_metrics([0, 1], [0, 0])
    with pytest.raises(UndefinedMetricError, match="specificity"):
        compute_metrics([0, 1], [1, 1])
    with pytest.raises(UndefinedMetricError, match="precision"):
        compute_metrics([1, 1], [0, 1])
    with pytest.raises(InvalidDataError):
        compute_metrics([1, 0], [1, 0, 1])
    with pytest.raises(InvalidDataError):
        compute_metrics([2, 0], [1, 0])
    with pytest.raises(InvalidDataError):
        compute_metrics([], [])


def test_window_labels_follow_priority_order():
    windows = [(0, 10), (20, 30), (40, 50), (60, 70), (80, 90)]
    labels = label_windows(
        windows,
        confirmed=[(0, 3), (25, 26)],
        unresponded=[(8, 9), (45, 46)],
        maybe=[(48, 49), (65, 66)],
        fs_fractions=[0.5, 0.5, 0.5, 0.5, 0.10],
    )
    # confirmed wins over unresponded, unresponded over maybe, maybe over fs
    assert [l.label for l in labels] == [
        "interaction", "interaction", "excluded", "excluded", "excluded"]
    assert labels[2].reason == "unresponded"
    assert labels[3].reason == "maybe"
    assert labels[4].reason == "ambiguous-fs"


def test_window_ambiguity_band_is_exclusive():
    windows = [(0, 10), (10, 20), (20, 30)]
    labels = label_windows(windows, confirmed=[],
                           fs_fractions=[0.05, 0.15, 0.1499])
    assert [l.label for l in labels] == ["none", "none", "excluded"]


def test_window_intervals_are_half_open():
    labels = label_windows([(10, 20)], confirmed=[(20, 30)])
    assert labels[0].label == "none"
    labels = label_windows([(10, 20)], confirmed=[(19, 30)])
    assert labels[0].label == "interaction"


def test_contradictory_intervals_raise():
    with pytest.raises(ConflictError, match="unresponded"):
        label_windows([(0, 10)], confirmed=[(0, 10)], unresponded=[(5, 15)])
    with pytest.raises(ConflictError, match="maybe"):
        label_windows([(0, 10)], confirmed=[(0, 10)], maybe=[(9, 12)])
    # non-overlapping claims coexist
    label_windows([(0, 10)], confirmed=[(0, 5)], unresponded=[(5, 8)])


def test_window_input_validation():
    with pytest.raises(InvalidDataError):
        label_windows([(10, 10)], confirmed=[])
    with pytest.raises(InvalidDataError):
        label_windows([(0, 10)], confirmed=[], fs_fractions=[0.1, 0.2])
    with pytest.raises(InvalidConfigError):
        label_windows([(0, 10)], confirmed=[], ambiguity_band=(0.3, 0.1))


def test_added_overlap_worked_example():
    """An added 10:00-10:20 interval inside an automatic 09:55-10:25 segment
    satisfies only the added-endpoint-inside-automatic criterion."""
    added = [(36_000_000, 37_200_000)]
    autos = [(35_700_000, 37_500_000)]
    rows = added_overlap(added, autos)
    assert len(rows) == 1
    assert rows[0].criterion1 is False
    assert rows[0].criterion2 is True
    assert rows[0].overlap is True


def test_added_overlap_closed_endpoints_and_misses():
    rows = added_overlap([(0, 5), (100, 110)], [(5, 10)])
    assert rows[0].criterion1 is True   # automatic start sits on the boundary
    assert rows[0].criterion2 is True
    assert rows[1].overlap is False

    rows = added_overlap([(0, 50)], [(10, 20)])
    assert rows[0].criterion1 is True and rows[0].criterion2 is False


def _outcome(pid="p00", seg=(0, 300_000), issued=1_000, answered=2_000,
             answer="yes", mode=None):
    return PromptOutcome(participant=pid, segment=seg, issued_at=issued,
                         answered_at=answered, answer=answer, mode=mode)


def test_latency_buckets_are_disjoint_and_exhaustive():
    dts = [0, 60_000, 60_001, 1_800_000, 1_800_001, 7_200_000, 7_200_001]
    outcomes = [_outcome(issued=0, answered=dt) for dt in dts]
    outcomes.append(_outcome(answered=None, answer=None))
    rep = deployment_report(outcomes)
    assert rep.latency_buckets == {"<=1min": 2, "<=30min": 2, "<=2h": 2,
                                   ">2h": 1}
    assert sum(rep.latency_buckets.values()) == len(dts)
    assert list(rep.latency_buckets) == list(LATENCY_NAMES)
    assert LATENCY_EDGES_MS == (60_000, 1_800_000, 7_200_000)


def test_duration_histogram_bins():
    ms_and_bins = [
        (30_000, "<1min"),
        (60_000, "[1,5)min"),
        (299_999, "[1,5)min"),
        (300_000, "[5,10)min"),
        (600_000, "[10,30)min"),
        (1_800_000, "[30,60)min"),
        (3_600_000, ">=60min"),
    ]
    outcomes = [_outcome(seg=(0, ms)) for ms, _ in ms_and_bins]
    rep = deployment_report(outcomes)
    want = {}
    for _, name in ms_and_bins:
        want[name] = want.get(name, 0) + 1
    assert rep.duration_histogram == want
    assert DURATION_EDGES_MIN == (1, 5, 10, 30, 60)


def test_reconciliation_flips_covered_no_answers():
    """Nine answered prompts, one mis-tapped "no" covered by a user-added
    interval: accuracy moves from 6/9 to 7/9."""
    outcomes = [_outcome(seg=(i * 1_000, i * 1_000 + 500)) for i in range(6)]
    outcomes += [
        _outcome(seg=(10_000, 10_500), answer="no"),
        _outcome(seg=(20_000, 20_500), answer="no"),
        _outcome(seg=(30_000, 30_500), answer="no"),
    ]
    confirmed = {"p00": [(9_000, 11_000), (19_500, 20_400)]}
    adjusted, flips = reconcile_no_responses(outcomes, confirmed)
    assert flips == 1  # (20_000, 20_500) pokes out of its confirmed interval
    assert sum(1 for o in adjusted if o.answer == "yes") == 7

    rep = deployment_report(outcomes, confirmed)
    assert rep.reconciled == 1
    assert rep.overall_accuracy == pytest.approx(100.0 * 7 / 9)
    assert rep.accuracy_by_participant["p00"] == pytest.approx(100.0 * 7 / 9)


def test_report_accuracy_denominator_and_modes():
    outcomes = [
        _outcome(pid="a", answer="yes", mode="in-person"),
        _outcome(pid="a", answer="no"),
        _outcome(pid="a", answer="maybe", mode="phone"),
        _outcome(pid="b", answer="maybe"),
        _outcome(pid="c", answer=None, answered=None),
    ]
    rep = deployment_report(outcomes)
    assert rep.accuracy_by_participant == {"a": pytest.approx(50.0)}
    assert rep.overall_accuracy == pytest.approx(50.0)
    assert rep.mode_breakdown == {"in-person": 1, "phone": 1, "unknown": 1}
    assert rep.details["prompts"] == 5

    empty = deployment_report([_outcome(answer="maybe")])
    assert math.isnan(empty.overall_accuracy)
    assert empty.accuracy_by_participant == {}
