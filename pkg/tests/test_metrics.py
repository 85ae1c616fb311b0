"""Decisions, BER/Q conversion, SNR estimation, metric traces."""

import numpy as np
import pytest

from coheq.metrics import (MetricTrace, compute_ber, count_bit_errors,
                           hard_decide, measure_snr_db, q_from_ber,
                           read_trace_csv, write_trace_csv)
from coheq.txsig import make_constellation

FMT16 = make_constellation(16)

# q_db = 20 log10(sqrt(2) erfcinv(2 ber)), frozen with scipy offline
Q_AT_02275 = 6.020610526994262   # ber = 0.02275 (the Q(2) point)
Q_AT_1E3 = 9.79982256904398


def test_hard_decide_exact_points():
    idx = np.arange(16)
    assert np.array_equal(hard_decide(FMT16.points, FMT16), idx)


def test_hard_decide_tie_breaks_low_index():
    # midpoint between points 0 and 1 is equidistant; lowest index wins
    mid = (FMT16.points[0] + FMT16.points[1]) / 2.0
    assert hard_decide(np.array([mid]), FMT16)[0] == 0


def test_count_bit_errors_and_ber():
    # craft a stream with known label Hamming distances
    ref = np.array([0, 1, 2, 3])
    hat = ref.copy()
    assert count_bit_errors(ref, hat, FMT16) == 0
    # replace one decision with a point whose label differs by known bits
    hat2 = hat.copy()
    hat2[0] = 1
    want = bin(int(FMT16.labels[0] ^ FMT16.labels[1])).count("1")
    assert count_bit_errors(ref, hat2, FMT16) == want
    ber, n_err, n_bits = compute_ber(ref, hat2, FMT16)
    assert n_bits == 16
    assert n_err == want
    assert ber == want / 16
    with pytest.raises(ValueError):
        compute_ber(ref, hat[:2], FMT16)


def test_q_from_ber_anchors():
    assert q_from_ber(0.02275) == pytest.approx(Q_AT_02275, abs=1e-9)
    assert q_from_ber(1e-3) == pytest.approx(Q_AT_1E3, abs=1e-9)
    # monotone decreasing in ber
    assert q_from_ber(1e-4) > q_from_ber(1e-3) > q_from_ber(1e-2)
    for bad in (0.0, 0.5, 0.7, 1.0):
        assert np.isnan(q_from_ber(bad))


def test_measure_snr_db_calibrated():
    rng = np.random.default_rng(0)
    n = 1 << 15
    tx = (rng.choice([-1, 1], n) + 1j * rng.choice([-1, 1], n)) / np.sqrt(2)
    for snr_db in (10.0, 20.0):
        sigma = np.sqrt(10.0 ** (-snr_db / 10.0) / 2.0)
        rx = tx + sigma * (rng.standard_normal(n)
                           + 1j * rng.standard_normal(n))
        assert abs(measure_snr_db(tx, rx) - snr_db) < 0.2
    assert measure_snr_db(tx, tx) == np.inf
    # arbitrary complex gain on rx does not change the estimate
    rx = tx + 0.1 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    a = measure_snr_db(tx, rx)
    b = measure_snr_db(tx, rx * (0.3 - 2.1j))
    assert abs(a - b) < 1e-9


def test_metric_trace_invariants():
    tr = MetricTrace(scenario_id="s", strategy="scratch", fraction=1.0)
    tr.append(0, 1.0, 0.3, q_from_ber(0.3))
    with pytest.raises(ValueError, match="strictly increase"):
        tr.append(0, 1.0, 0.3, q_from_ber(0.3))
    with pytest.raises(ValueError, match="outside"):
        tr.append(1, 1.0, 1.2, float("nan"))
    # worse-than-chance raw fractions clamp to chance
    tr.append(1, 1.0, 0.81, float("nan"))
    assert tr.rows[-1][2] == 0.5
    tr.append(2, 0.5, 1e-3, q_from_ber(1e-3))
    assert np.array_equal(tr.epochs, [0, 1, 2])
    assert tr.best_q_db() == pytest.approx(Q_AT_1E3)


def test_metric_trace_best_with_no_finite_q():
    tr = MetricTrace(scenario_id="s", strategy="scratch", fraction=1.0)
    tr.append(0, 1.0, 0.5, float("nan"))
    assert np.isnan(tr.best_q_db())


def test_trace_csv_roundtrip(tmp_path):
    tr = MetricTrace(scenario_id="lab/seed1", strategy="freeze_conv",
                     fraction=0.25)
    tr.append(0, 0.9123456789012345, 0.4, q_from_ber(0.4))
    tr.append(1, 0.1, 1e-3, q_from_ber(1e-3))
    path = str(tmp_path / "trace.csv")
    write_trace_csv(tr, path)
    back = read_trace_csv(path)
    assert back.scenario_id == "lab/seed1"
    assert back.strategy == "freeze_conv"
    assert back.fraction == 0.25
    assert back.rows == tr.rows  # repr round-trips float64 exactly
    # identical rewrite is byte-identical
    path2 = str(tmp_path / "trace2.csv")
    write_trace_csv(back, path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_trace_csv_rejects_bad_input(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("nope,header\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_trace_csv(str(p))
    p2 = tmp_path / "empty.csv"
    p2.write_text("epoch,train_mse,ber,q_db,scenario_id,strategy,fraction\n")
    with pytest.raises(ValueError, match="empty"):
        read_trace_csv(str(p2))
