"""Independent recomputation of a sweep summary from its trace CSVs.

Reads only the files a sweep emitted: the per-curve MetricTrace CSVs and
summary.csv.  Every numeric summary column is recomputed from scratch
with stdlib csv/math/statistics, sharing no computation code with the
runner, and compared byte for byte against the stored summary.  The ten
metadata columns are copied through, as are rows the sweep marked
failed.

Usage:
    python3 -m coheq.harness.recompute RESULTS_DIR [--tolerance 0.05]
            [--check]

Without --check the rebuilt summary is printed; with --check the exit
code reports whether it matches summary.csv exactly.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import re
import statistics
import sys

__all__ = ["read_trace", "recompute_summary", "verify_summary", "main"]

_TRACE_HEADER = ["epoch", "train_mse", "ber", "q_db", "scenario_id",
                 "strategy", "fraction"]
_SCRATCH_RE = re.compile(r"^(?P<tag>.+)_seed(?P<seed>\d+)_scratch\.csv$")
_TL_RE = re.compile(
    r"^(?P<tag>.+)_seed(?P<seed>\d+)_tl_(?P<strategy>.+)_f\d{3}\.csv$")

_NOT_REACHED = "not_reached"
_FAILED = "failed"


def read_trace(path: str):
    """Parse one trace CSV to ([(epoch, q_db)], fraction)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _TRACE_HEADER:
            raise ValueError(f"unexpected trace header in {path}")
        rows = []
        fraction = None
        for rec in reader:
            rows.append((int(rec[0]), float(rec[3])))
            fraction = float(rec[6])
    return rows, fraction


def _best_q(rows) -> float:
    vals = [q for _, q in rows if math.isfinite(q)]
    return max(vals) if vals else float("nan")


def _first_epoch_at(rows, threshold: float):
    for epoch, q in rows:
        if epoch >= 1 and math.isfinite(q) and q >= threshold:
            return epoch
    return None


def _seed_savings(scratch_rows, tl_by_fraction, tolerance: float):
    """(best_q, epoch_savings or None, data_savings or None) for a seed."""
    threshold = _best_q(scratch_rows) - tolerance
    e_wo = _first_epoch_at(scratch_rows, threshold)
    fractions = sorted(tl_by_fraction)
    best_q = _best_q(tl_by_fraction[fractions[-1]])
    reached = {}
    for frac in fractions:
        e_tl = _first_epoch_at(tl_by_fraction[frac], threshold)
        if e_tl is not None:
            reached[frac] = e_tl
    epoch_savings = None
    if reached and e_wo is not None:
        largest = max(reached)
        epoch_savings = 100.0 * (1.0 - reached[largest] / e_wo)
    data_savings = (100.0 * (1.0 - min(reached))) if reached else None
    return best_q, epoch_savings, data_savings


def _median_or_marker(values) -> str:
    kept = [v for v in values if v is not None]
    if not kept:
        return _NOT_REACHED
    return repr(float(statistics.median(kept)))


def _collect_rows(results_dir: str):
    """Map row tag -> seed -> {'scratch': rows, 'tl': {fraction: rows}}."""
    out = {}
    for name in sorted(os.listdir(results_dir)):
        path = os.path.join(results_dir, name)
        m = _SCRATCH_RE.match(name)
        if m:
            rows, _ = read_trace(path)
            slot = out.setdefault(m.group("tag"), {}).setdefault(
                int(m.group("seed")), {"scratch": None, "tl": {}})
            slot["scratch"] = rows
            continue
        m = _TL_RE.match(name)
        if m:
            rows, fraction = read_trace(path)
            slot = out.setdefault(m.group("tag"), {}).setdefault(
                int(m.group("seed")), {"scratch": None, "tl": {}})
            slot["tl"][fraction] = rows
    return out


def recompute_summary(results_dir: str,
                      q_tolerance_db: float = 0.05) -> str:
    """Rebuild summary.csv text from the trace CSVs alone."""
    summary_path = os.path.join(results_dir, "summary.csv")
    with open(summary_path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"empty summary at {summary_path}")
    by_tag = _collect_rows(results_dir)

    rebuilt = [lines[0]]
    for line in lines[1:]:
        cols = line.split(",")
        meta, numeric = cols[:10], cols[10:]
        if numeric and numeric[0] == _FAILED:
            rebuilt.append(line)
            continue
        tag = f"row{meta[0]}"
        seeds = by_tag.get(tag, {})
        best_qs, epoch_savs, data_savs = [], [], []
        for seed in sorted(seeds):
            slot = seeds[seed]
            if slot["scratch"] is None or not slot["tl"]:
                raise ValueError(f"incomplete traces for {tag} "
                                 f"seed {seed}")
            b, e, d = _seed_savings(slot["scratch"], slot["tl"],
                                    q_tolerance_db)
            best_qs.append(b)
            epoch_savs.append(e)
            data_savs.append(d)
        if not best_qs:
            raise ValueError(f"no traces found for {tag}")
        rebuilt.append(",".join(meta + [
            repr(float(statistics.median(best_qs))),
            _median_or_marker(epoch_savs),
            _median_or_marker(data_savs),
        ]))
    return "\n".join(rebuilt) + "\n"


def verify_summary(results_dir: str,
                   q_tolerance_db: float = 0.05) -> bool:
    """True when the rebuilt summary matches summary.csv byte for byte."""
    with open(os.path.join(results_dir, "summary.csv"), "r",
              encoding="utf-8", newline="") as fh:
        stored = fh.read()
    return recompute_summary(results_dir, q_tolerance_db) == stored


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="recompute a sweep summary from its trace CSVs")
    parser.add_argument("results_dir")
    parser.add_argument("--tolerance", type=float, default=0.05,
                        help="q_tolerance_db used by the sweep")
    parser.add_argument("--check", action="store_true",
                        help="compare with summary.csv; exit 1 on "
                             "mismatch")
    args = parser.parse_args(argv)
    try:
        text = recompute_summary(args.results_dir, args.tolerance)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.check:
        sys.stdout.write(text)
        return 0
    with open(os.path.join(args.results_dir, "summary.csv"), "r",
              encoding="utf-8", newline="") as fh:
        stored = fh.read()
    if text == stored:
        print("summary verified: recomputation matches")
        return 0
    print("summary MISMATCH", file=sys.stderr)
    sys.stdout.write(text)
    return 1


if __name__ == "__main__":
    sys.exit(main())
