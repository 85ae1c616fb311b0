"""Constellation construction, symbol generation and pulse shaping."""

import csv

import numpy as np
import pytest

from coheq.txsig import (ModFormat, TxSpec, TxSymbols, Waveform,
                         export_constellation_csv, generate_symbols,
                         make_constellation, raised_cosine_response,
                         rrc_impulse_response, shape_waveform)


def _nearest_neighbor_gray_fraction(fmt: ModFormat) -> float:
    """Fraction of minimum-distance point pairs whose labels differ by
    exactly one bit."""
    d = np.abs(fmt.points[:, None] - fmt.points[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min()
    ii, jj = np.nonzero((d < dmin * 1.001)
                        & (np.arange(fmt.order)[:, None]
                           < np.arange(fmt.order)[None, :]))
    ham = [bin(int(fmt.labels[i] ^ fmt.labels[j])).count("1")
           for i, j in zip(ii, jj)]
    return sum(1 for h in ham if h == 1) / len(ham)


@pytest.mark.parametrize("order", [16, 32, 64, 128])
def test_constellation_structure(order):
    fmt = make_constellation(order)
    assert fmt.order == order
    assert fmt.points.shape == (order,)
    assert fmt.bits_per_symbol == int(np.log2(order))
    # unit average energy
    assert abs(np.mean(np.abs(fmt.points) ** 2) - 1.0) < 1e-12
    # one unique label per point, covering [0, order)
    assert sorted(fmt.labels.tolist()) == list(range(order))
    # no duplicate points
    d = np.abs(fmt.points[:, None] - fmt.points[None, :])
    np.fill_diagonal(d, np.inf)
    assert d.min() > 0.01


def test_square_orders_are_exactly_gray():
    for order in (16, 64):
        assert _nearest_neighbor_gray_fraction(
            make_constellation(order)) == 1.0


def test_cross_orders_are_quasi_gray():
    # regression values of the deterministic wing fold: 44/52 and 216/232
    f32 = _nearest_neighbor_gray_fraction(make_constellation(32))
    f128 = _nearest_neighbor_gray_fraction(make_constellation(128))
    assert abs(f32 - 44 / 52) < 1e-12
    assert abs(f128 - 216 / 232) < 1e-12
    assert f32 > 0.8 and f128 > 0.8


def test_unsupported_order_rejected():
    with pytest.raises(ValueError, match="unsupported"):
        make_constellation(8)


def test_label_strings_width():
    fmt = make_constellation(32)
    strs = fmt.label_strings()
    assert all(len(s) == 5 for s in strs)
    assert strs[0] == format(int(fmt.labels[0]), "05b")


def test_generate_symbols_deterministic_and_consistent():
    spec = TxSpec(format=make_constellation(16), n_symbols=256, seed=7)
    a = generate_symbols(spec)
    b = generate_symbols(spec)
    assert np.array_equal(a.idx_x, b.idx_x)
    assert np.array_equal(a.idx_y, b.idx_y)
    assert np.array_equal(a.sym_x, spec.format.points[a.idx_x])
    assert np.array_equal(a.sym_y, spec.format.points[a.idx_y])
    c = generate_symbols(TxSpec(format=spec.format, n_symbols=256, seed=8))
    assert not np.array_equal(a.idx_x, c.idx_x)


def test_txspec_validation():
    fmt = make_constellation(16)
    with pytest.raises(ValueError):
        TxSpec(format=fmt, n_symbols=1)
    with pytest.raises(ValueError):
        TxSpec(format=fmt, sps=1)
    with pytest.raises(ValueError):
        TxSpec(format=fmt, rolloff=1.0)
    with pytest.raises(ValueError):
        TxSpec(format=fmt, symbol_rate_gbd=0.0)
    spec = TxSpec(format=fmt, sps=4, symbol_rate_gbd=30.0)
    assert spec.sample_rate_hz == 120e9


def test_raised_cosine_response_shape():
    r = 10e9
    beta = 0.1
    f = np.array([0.0, (1 - beta) * r / 2, r / 2, (1 + beta) * r / 2, r])
    h = raised_cosine_response(f, r, beta)
    assert h[0] == 1.0
    assert h[1] == 1.0                    # flat out to f1
    assert abs(h[2] - 0.5) < 1e-12        # half power at R/2
    assert h[3] == 0.0                    # zero beyond f2
    assert h[4] == 0.0


def test_raised_cosine_nyquist_fold():
    # Sum over spectral aliases RC(f - k R) == 1 is what makes the matched
    # cascade ISI-free; check it on a dense grid.
    r = 10e9
    f = np.linspace(-r, r, 4001)
    total = sum(raised_cosine_response(f - k * r, r, 0.1)
                for k in (-2, -1, 0, 1, 2))
    assert np.max(np.abs(total - 1.0)) < 1e-12


def test_rrc_impulse_response_symmetric_peak():
    spec = TxSpec(format=make_constellation(16), n_symbols=64, sps=8)
    h = rrc_impulse_response(spec)
    n = h.size
    assert h.argmax() == n // 2
    # even symmetry about the center
    assert np.allclose(h[n // 2 + 1:], h[1:n // 2][::-1], atol=1e-12)


def test_shape_waveform_power_and_determinism():
    spec = TxSpec(format=make_constellation(16), n_symbols=512, sps=4,
                  launch_power_dbm=3.0, seed=1)
    wave = shape_waveform(spec, generate_symbols(spec))
    assert wave.n_samples == 512 * 4
    p_target = 1e-3 * 10 ** (3.0 / 10.0)
    assert abs(wave.avg_power_w - p_target) / p_target < 1e-12
    wave2 = shape_waveform(spec, generate_symbols(spec))
    assert np.array_equal(wave.x, wave2.x)


def test_shape_waveform_rejects_mismatched_count():
    spec = TxSpec(format=make_constellation(16), n_symbols=512)
    sym = generate_symbols(TxSpec(format=spec.format, n_symbols=256))
    with pytest.raises(ValueError, match="symbol count"):
        shape_waveform(spec, sym)


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(x=np.zeros(4, complex), y=np.zeros(5, complex),
                 sample_rate_hz=1.0)


def test_export_constellation_csv(tmp_path):
    fmt = make_constellation(16)
    path = tmp_path / "const.csv"
    export_constellation_csv(fmt, str(path))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "i", "q", "bits"]
    assert len(rows) == 17
    i = float(rows[1][1])
    assert i == fmt.points[0].real
