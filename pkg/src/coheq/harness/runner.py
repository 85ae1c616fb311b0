"""Experiment orchestration: frames, reference curves, savings, matrix runs.

Every transfer study is reported against four reference curves measured
on one shared target test frame:

    wo_nn       linear-only receiver, no network, constant over epochs
    snn         the source-trained model evaluated frozen on the target
    tnn_wo_tl   training from random init on the target (from scratch)
    tnn_tl      training from the transferred source weights, one trace
                per data fraction

Savings are measured against the from-scratch curve: its best Q minus a
tolerance defines the threshold, and the epoch and data savings follow
from the first epoch each transferred trace crosses it.
"""

from __future__ import annotations

import os
import statistics
import sys
from dataclasses import dataclass, replace

import numpy as np

from ..dataset import subset_fraction, window_frame
from ..metrics import (MetricTrace, compute_ber, hard_decide, q_from_ber,
                       write_trace_csv)
from ..neuralnet import (EqualizerConfig, TrainConfig, apply_tl_strategy,
                         evaluate_model, init_model, train)
from ..rxdsp import build_symbol_frame
from .scenarios import (RunProfile, Scenario, TLExperiment, fiber_name,
                        matrix_rows_from_kv, parse_kv_file, profile_from_kv)

__all__ = [
    "ROLE_TRAIN",
    "ROLE_TEST",
    "SUMMARY_HEADER",
    "CurveSet",
    "SavingsRow",
    "SavingsReport",
    "SeedResult",
    "ExperimentResult",
    "scenario_frame",
    "model_config",
    "train_config",
    "linear_reference",
    "ber_sentinel",
    "train_source",
    "run_reference_curves",
    "epochs_to_threshold",
    "compute_savings",
    "run_experiment",
    "run_direction_study",
    "run_scenario_matrix",
]

ROLE_TRAIN, ROLE_TEST = 0, 1

SUMMARY_HEADER = ("row,fiber_src,fiber_dst,p_src,p_dst,rate_src,rate_dst,"
                  "fmt_src,fmt_dst,strategy,best_q_db,epochs_saved_pct,"
                  "data_saved_pct")

NOT_REACHED = "not_reached"
FAILED = "failed"


def _derived_seed(*parts) -> int:
    """Mix integers into one well-separated 32-bit seed."""
    ss = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(ss.generate_state(1)[0])


def scenario_frame(scn: Scenario, seed: int, role: int,
                   n_symbols: int | None = None):
    """Simulate one frame of a scenario.

    The train and test roles derive independent data and noise streams
    from (scenario seed, experiment seed, role), so the two frames of a
    run never share symbols.
    """
    ss = np.random.SeedSequence((scn.tx.seed, int(seed), int(role)))
    data_ss, noise_ss = ss.spawn(2)
    tx = replace(scn.tx, seed=int(data_ss.generate_state(1)[0]),
                 n_symbols=int(n_symbols or scn.tx.n_symbols))
    link = scn.link
    if link is not None:
        link = replace(link,
                       noise_seed=int(noise_ss.generate_state(1)[0]))
    role_name = "train" if role == ROLE_TRAIN else "test"
    return build_symbol_frame(tx, link,
                              transceiver_noise=scn.transceiver_noise,
                              label=f"{scn.label}:{seed}:{role_name}")


def model_config(profile: RunProfile) -> EqualizerConfig:
    return EqualizerConfig(n_filters=profile.n_filters,
                           kernel_size=profile.kernel_size,
                           lstm_hidden=profile.lstm_hidden,
                           half_window=profile.half_window)


def train_config(profile: RunProfile, max_epochs: int,
                 seed: int) -> TrainConfig:
    return TrainConfig(batch_size=profile.batch_size,
                       max_epochs=max_epochs,
                       learning_rate=profile.learning_rate,
                       shuffle_seed=int(seed),
                       eval_batch=profile.eval_batch)


def linear_reference(frame, fmt) -> tuple[float, float, float, int]:
    """(ber, q_db, mse, n_bits) of hard decisions on the raw frame."""
    tx_idx = hard_decide(frame.tx_x, fmt)
    rx_idx = hard_decide(frame.rx_x, fmt)
    ber, _, n_bits = compute_ber(tx_idx, rx_idx, fmt)
    mse = float(np.mean(np.abs(frame.rx_x - frame.tx_x) ** 2))
    return ber, q_from_ber(ber), mse, n_bits


def ber_sentinel(ber: float, n_bits: int) -> str:
    """Textual BER: an error-free run reports the resolution floor."""
    return f"<{1.0 / n_bits:.3e}" if ber == 0.0 else repr(float(ber))


@dataclass
class CurveSet:
    """The four reference curves of one (experiment, seed) run."""

    wo_nn: MetricTrace
    snn: MetricTrace
    tnn_wo_tl: MetricTrace
    tnn_tl: dict  # fraction -> MetricTrace


def train_source(scn: Scenario, seed: int, profile: RunProfile,
                 scenario_id: str = "", max_epochs: int | None = None):
    """Train a fresh model on a scenario; returns (model, trace).

    max_epochs defaults to the profile's source-training cap.
    """
    tr_frame = scenario_frame(scn, seed, ROLE_TRAIN,
                              profile.n_symbols_train)
    te_frame = scenario_frame(scn, seed, ROLE_TEST,
                              profile.n_symbols_test)
    ds = window_frame(tr_frame, profile.half_window)
    model = init_model(model_config(profile), seed=_derived_seed(seed, 1))
    epochs = profile.source_epochs if max_epochs is None else max_epochs
    trace = train(model, ds, te_frame, scn.tx.format,
                  train_config(profile, epochs, seed),
                  scenario_id=scenario_id or f"{scn.label}/seed{seed}",
                  strategy="source", fraction=1.0)
    return model, trace


def run_reference_curves(exp: TLExperiment, seed: int,
                         profile: RunProfile, source_model,
                         scratch_trace: MetricTrace | None = None,
                         id_prefix: str = "") -> CurveSet:
    """Measure all four reference curves for one experiment seed.

    A precomputed from-scratch trace for the same target and seed may be
    passed in to avoid repeating the most expensive curve.
    """
    if source_model is None:
        raise ValueError("source model missing; train source first and "
                         "pass its model or checkpoint")
    tgt = exp.target
    fmt = tgt.tx.format
    sid = id_prefix or f"{exp.source.label}->{tgt.label}/seed{seed}"
    tr_frame = scenario_frame(tgt, seed, ROLE_TRAIN,
                              profile.n_symbols_train)
    te_frame = scenario_frame(tgt, seed, ROLE_TEST,
                              profile.n_symbols_test)
    ds = window_frame(tr_frame, profile.half_window)

    ber, q, mse, _ = linear_reference(te_frame, fmt)
    wo_nn = MetricTrace(scenario_id=sid, strategy="wo_nn", fraction=1.0)
    wo_nn.append(0, mse, ber, q)

    ber2, q2, mse2 = evaluate_model(source_model, te_frame, fmt,
                                    profile.half_window,
                                    eval_batch=profile.eval_batch)
    snn = MetricTrace(scenario_id=sid, strategy="snn", fraction=1.0)
    snn.append(0, mse2, ber2, q2)

    if scratch_trace is None:
        scratch = init_model(model_config(profile),
                             seed=_derived_seed(seed, 2))
        scratch_trace = train(scratch, ds, te_frame, fmt,
                              train_config(profile, profile.max_epochs,
                                           seed),
                              scenario_id=sid, strategy="scratch",
                              fraction=1.0)

    tl = {}
    for frac in exp.fractions:
        model = source_model.copy()
        apply_tl_strategy(model, exp.strategy)
        sub = (ds if frac >= 1.0
               else subset_fraction(ds, frac, seed=_derived_seed(seed, 3)))
        tl[frac] = train(model, sub, te_frame, fmt,
                         train_config(profile, profile.tl_max_epochs,
                                      seed),
                         scenario_id=sid, strategy=exp.strategy,
                         fraction=frac)
    return CurveSet(wo_nn=wo_nn, snn=snn, tnn_wo_tl=scratch_trace,
                    tnn_tl=tl)


# -- savings ----------------------------------------------------------------

def epochs_to_threshold(trace: MetricTrace, threshold: float):
    """First training epoch whose Q meets the threshold; None if never."""
    for ep, _, _, q in trace.rows:
        if ep >= 1 and np.isfinite(q) and q >= threshold:
            return ep
    return None


@dataclass
class SavingsRow:
    strategy: str
    fraction: float
    best_q_db: float
    epochs_to_threshold: int | None
    epoch_savings_pct: float | None
    data_savings_pct: float


@dataclass
class SavingsReport:
    """Savings of the transferred traces against the from-scratch curve."""

    q_wo_nn: float
    q_snn: float
    best_q_wo_tl: float
    threshold_q_db: float
    epochs_wo_tl: int | None
    rows: list

    def reached(self) -> list:
        return [r for r in self.rows if r.epochs_to_threshold is not None]

    def epoch_savings_pct(self):
        """Savings of the largest-fraction trace that reached threshold."""
        rows = self.reached()
        if not rows:
            return None
        return max(rows, key=lambda r: r.fraction).epoch_savings_pct

    def data_savings_pct(self):
        """Savings from the smallest fraction that reached threshold."""
        rows = self.reached()
        if not rows:
            return None
        return 100.0 * (1.0 - min(r.fraction for r in rows))


def compute_savings(curves: CurveSet,
                    q_tolerance_db: float) -> SavingsReport:
    """Threshold = from-scratch best Q minus tolerance; savings follow."""
    best = curves.tnn_wo_tl.best_q_db()
    thr = best - q_tolerance_db
    e_wo = epochs_to_threshold(curves.tnn_wo_tl, thr)
    rows = []
    for frac in sorted(curves.tnn_tl):
        tr = curves.tnn_tl[frac]
        e_tl = epochs_to_threshold(tr, thr)
        savings = None
        if e_tl is not None and e_wo is not None:
            savings = 100.0 * (1.0 - e_tl / e_wo)
        rows.append(SavingsRow(strategy=tr.strategy, fraction=frac,
                               best_q_db=tr.best_q_db(),
                               epochs_to_threshold=e_tl,
                               epoch_savings_pct=savings,
                               data_savings_pct=100.0 * (1.0 - frac)))
    return SavingsReport(q_wo_nn=curves.wo_nn.rows[0][3],
                         q_snn=curves.snn.rows[0][3],
                         best_q_wo_tl=best, threshold_q_db=thr,
                         epochs_wo_tl=e_wo, rows=rows)


# -- multi-seed experiments -------------------------------------------------

@dataclass
class SeedResult:
    seed: int
    source_model: object
    source_trace: MetricTrace
    curves: CurveSet
    savings: SavingsReport


@dataclass
class ExperimentResult:
    exp: TLExperiment
    profile: RunProfile
    per_seed: list

    def median_best_q_db(self):
        vals = [max(sr.savings.rows, key=lambda r: r.fraction).best_q_db
                for sr in self.per_seed]
        return statistics.median(vals)

    def median_epoch_savings_pct(self):
        return _median_or_none([sr.savings.epoch_savings_pct()
                                for sr in self.per_seed])

    def median_data_savings_pct(self):
        return _median_or_none([sr.savings.data_savings_pct()
                                for sr in self.per_seed])


def _median_or_none(vals: list):
    vals = [v for v in vals if v is not None]
    return statistics.median(vals) if vals else None


def run_experiment(exp: TLExperiment, profile: RunProfile,
                   out_dir: str | None = None, row_tag: str = "exp",
                   source_cache: dict | None = None,
                   scratch_cache: dict | None = None) -> ExperimentResult:
    """Run one transfer experiment over all its seeds.

    Caches, when given, are keyed by (scenario identity, seed) and reuse
    source trainings and from-scratch target trainings across
    experiments that share a scenario.
    """
    per_seed = []
    for seed in exp.seeds:
        src_key = (exp.source.key(), seed)
        if source_cache is not None and src_key in source_cache:
            src_model, src_trace = source_cache[src_key]
        else:
            src_model, src_trace = train_source(exp.source, seed, profile)
            if source_cache is not None:
                source_cache[src_key] = (src_model, src_trace)

        tgt_key = (exp.target.key(), seed)
        prior_scratch = (scratch_cache.get(tgt_key)
                         if scratch_cache is not None else None)
        curves = run_reference_curves(exp, seed, profile, src_model,
                                      scratch_trace=prior_scratch)
        if scratch_cache is not None:
            scratch_cache[tgt_key] = curves.tnn_wo_tl
        savings = compute_savings(curves, exp.q_tolerance_db)
        per_seed.append(SeedResult(seed=seed, source_model=src_model,
                                   source_trace=src_trace, curves=curves,
                                   savings=savings))

        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            base = os.path.join(out_dir, f"{row_tag}_seed{seed}")
            write_trace_csv(src_trace, base + "_source.csv")
            write_trace_csv(curves.wo_nn, base + "_wo_nn.csv")
            write_trace_csv(curves.snn, base + "_snn.csv")
            write_trace_csv(curves.tnn_wo_tl, base + "_scratch.csv")
            for frac in sorted(curves.tnn_tl):
                name = f"_tl_{exp.strategy}_f{round(frac * 100):03d}.csv"
                write_trace_csv(curves.tnn_tl[frac], base + name)
    return ExperimentResult(exp=exp, profile=profile, per_seed=per_seed)


def run_direction_study(exps: list, profile: RunProfile,
                        out_dir: str | None = None) -> list:
    """Compare transfer directions.

    Returns one (direction, best_q_db, epochs_required) row per
    experiment, medians over its seeds; epochs_required is +inf when the
    threshold was never reached, so direction orderings stay comparable.
    """
    source_cache, scratch_cache = {}, {}
    rows = []
    for i, exp in enumerate(exps, start=1):
        res = run_experiment(exp, profile, out_dir=out_dir,
                             row_tag=f"dir{i}",
                             source_cache=source_cache,
                             scratch_cache=scratch_cache)
        epochs, best_qs = [], []
        for sr in res.per_seed:
            row = max(sr.savings.rows, key=lambda r: r.fraction)
            epochs.append(float("inf")
                          if row.epochs_to_threshold is None
                          else float(row.epochs_to_threshold))
            best_qs.append(row.best_q_db)
        rows.append((f"{exp.source.label}->{exp.target.label}",
                     statistics.median(best_qs),
                     statistics.median(epochs)))
    return rows


def _fmt_num(v) -> str:
    return repr(float(v))


def summary_line(idx: int, exp: TLExperiment,
                 result: ExperimentResult | None) -> str:
    """One summary CSV row; a None result marks a failed row."""
    src, dst = exp.source, exp.target
    meta = ",".join([
        str(idx),
        fiber_name(src.link.fiber) if src.link else "b2b",
        fiber_name(dst.link.fiber) if dst.link else "b2b",
        _fmt_num(src.tx.launch_power_dbm),
        _fmt_num(dst.tx.launch_power_dbm),
        _fmt_num(src.tx.symbol_rate_gbd),
        _fmt_num(dst.tx.symbol_rate_gbd),
        str(src.tx.format.order), str(dst.tx.format.order),
        exp.strategy,
    ])
    if result is None:
        return f"{meta},{FAILED},{FAILED},{FAILED}"
    esav = result.median_epoch_savings_pct()
    dsav = result.median_data_savings_pct()
    return ",".join([
        meta,
        _fmt_num(result.median_best_q_db()),
        NOT_REACHED if esav is None else _fmt_num(esav),
        NOT_REACHED if dsav is None else _fmt_num(dsav),
    ])


def run_scenario_matrix(config, out_dir: str) -> str:
    """Execute a matrix config; returns the summary CSV path.

    `config` is a path or an already-parsed key dict.  Row failures are
    isolated: the row is marked in the summary and the run continues.
    """
    kv = parse_kv_file(config) if isinstance(config, str) else dict(config)
    rows = matrix_rows_from_kv(kv)
    profile = profile_from_kv(kv)
    os.makedirs(out_dir, exist_ok=True)
    lines = [SUMMARY_HEADER]
    source_cache, scratch_cache = {}, {}
    for idx, exp in rows:
        try:
            res = run_experiment(exp, profile, out_dir=out_dir,
                                 row_tag=f"row{idx}",
                                 source_cache=source_cache,
                                 scratch_cache=scratch_cache)
        except Exception as exc:  # isolate row failures
            print(f"row {idx} failed: {exc}", file=sys.stderr)
            lines.append(summary_line(idx, exp, None))
            continue
        lines.append(summary_line(idx, exp, res))
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
