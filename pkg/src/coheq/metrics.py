"""Decision, error-counting and quality metrics.

BER is pooled bit errors over all counted bits; the Q-factor is the
Gaussian-equivalent quality figure

    q_db = 20 log10( sqrt(2) * erfcinv(2 * ber) ),

which maps ber 0.5 erfc(1) ~ 0.0786 to 3.01 dB and 1e-3 to ~9.80 dB.
Zero observed errors cannot be converted; such rows keep ber = 0 and a NaN
q_db and are excluded from threshold logic downstream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcinv

from .txsig import ModFormat

__all__ = [
    "hard_decide",
    "count_bit_errors",
    "compute_ber",
    "q_from_ber",
    "measure_snr_db",
    "MetricTrace",
    "write_trace_csv",
    "read_trace_csv",
]


def hard_decide(symbols: np.ndarray, fmt: ModFormat) -> np.ndarray:
    """Nearest constellation point indices; ties go to the lowest index."""
    # (n, order) distance table; argmin picks the first (lowest) index on ties
    d2 = np.abs(symbols[:, None] - fmt.points[None, :]) ** 2
    return np.argmin(d2, axis=1)


def count_bit_errors(idx_ref: np.ndarray, idx_hat: np.ndarray,
                     fmt: ModFormat) -> int:
    """Bits differing between the labels of two index streams."""
    diff = fmt.labels[idx_ref] ^ fmt.labels[idx_hat]
    # popcount via uint8 view; labels fit in one byte for order <= 256
    return int(np.unpackbits(diff.astype(np.uint8)).sum())


def compute_ber(tx_idx: np.ndarray, rx_idx: np.ndarray, fmt: ModFormat
                ) -> tuple[float, int, int]:
    """Pooled bit error rate.

    Returns
    -------
    (ber, n_errors, n_bits)
        With zero observed errors ber is 0.0 and the caller should treat
        the true value as bounded by 1 / n_bits.
    """
    if tx_idx.size != rx_idx.size:
        raise ValueError("index streams differ in length")
    n_bits = tx_idx.size * fmt.bits_per_symbol
    n_err = count_bit_errors(tx_idx, rx_idx, fmt)
    return n_err / n_bits, n_err, n_bits


def q_from_ber(ber: float) -> float:
    """Gaussian-equivalent Q in dB; NaN outside (0, 0.5)."""
    if not 0.0 < ber < 0.5:
        return float("nan")
    return float(20.0 * np.log10(np.sqrt(2.0) * erfcinv(2.0 * ber)))


def measure_snr_db(tx: np.ndarray, rx: np.ndarray) -> float:
    """EVM-based SNR: 10 log10(mean|tx|^2 / mean|rx - tx|^2) after the
    least-squares complex scale that best fits rx to tx.

    The LS scale shrinks toward zero by the factor snr/(snr+1) and absorbs
    that share of the noise, so the raw power ratio estimates snr + 1; the
    subtraction below undoes it.  Perfect recovery returns +inf.
    """
    c = np.vdot(rx, tx) / np.vdot(rx, rx)
    err = c * rx - tx
    resid = np.mean(np.abs(err) ** 2)
    if resid == 0.0:
        return float("inf")
    snr_lin = np.mean(np.abs(tx) ** 2) / resid - 1.0
    if snr_lin <= 0.0:
        return float("-inf")
    return float(10.0 * np.log10(snr_lin))


@dataclass
class MetricTrace:
    """Per-epoch training record for one run.

    rows: list of (epoch, train_mse, ber, q_db); epochs strictly increase,
    epoch 0 being the pre-training evaluation.
    """

    scenario_id: str
    strategy: str
    fraction: float
    rows: list = field(default_factory=list)

    def append(self, epoch: int, train_mse: float, ber: float,
               q_db: float) -> None:
        if self.rows and epoch <= self.rows[-1][0]:
            raise ValueError("epochs must strictly increase")
        if not 0.0 <= ber <= 1.0:
            raise ValueError(f"ber {ber} outside [0, 1]")
        # raw fractions above 0.5 (worse than chance, e.g. an untrained
        # model) are recorded as chance; q_db is undefined there anyway
        self.rows.append((int(epoch), float(train_mse),
                          min(float(ber), 0.5), float(q_db)))

    @property
    def epochs(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows], dtype=int)

    @property
    def q_db(self) -> np.ndarray:
        return np.array([r[3] for r in self.rows])

    def best_q_db(self) -> float:
        q = self.q_db
        q = q[np.isfinite(q)]
        return float(np.max(q)) if q.size else float("nan")


_TRACE_COLS = ["epoch", "train_mse", "ber", "q_db", "scenario_id",
               "strategy", "fraction"]


def write_trace_csv(trace: MetricTrace, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_TRACE_COLS)
        for epoch, mse, ber, q in trace.rows:
            w.writerow([epoch, repr(mse), repr(ber), repr(q),
                        trace.scenario_id, trace.strategy,
                        repr(trace.fraction)])


def read_trace_csv(path: str) -> MetricTrace:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != _TRACE_COLS:
            raise ValueError(f"unexpected trace header: {header}")
        rows = list(rd)
    if not rows:
        raise ValueError("empty trace file")
    trace = MetricTrace(scenario_id=rows[0][4], strategy=rows[0][5],
                        fraction=float(rows[0][6]))
    for r in rows:
        trace.rows.append((int(r[0]), float(r[1]), float(r[2]),
                           float(r[3])))
    return trace
