"""Config parsing, experiment orchestration, savings math, matrix sweeps."""

import math
import os

import numpy as np
import pytest

from coheq.fiberlink import SSMF_FIBER, TWC_FIBER, FiberSpec
from coheq.harness import (DESK_PROFILE, FULL_PROFILE, ConfigError,
                           CurveSet, RunProfile, Scenario, TLExperiment,
                           ber_sentinel, compute_savings, default_strategy,
                           epochs_to_threshold, linear_reference,
                           parse_kv_text, profile_from_kv,
                           run_direction_study, run_experiment,
                           run_reference_curves, run_scenario_matrix,
                           scenario_frame, scenario_from_kv, train_source)
from coheq.harness.recompute import recompute_summary, verify_summary
from coheq.harness.runner import (ROLE_TEST, ROLE_TRAIN, SUMMARY_HEADER,
                                  _derived_seed, summary_line)
from coheq.harness.scenarios import (experiment_from_kv, fiber_name,
                                     matrix_rows_from_kv)
from coheq.metrics import MetricTrace

# ---------------------------------------------------------------- parsing


def test_parse_kv_text_basics():
    kv = parse_kv_text("a = 1\n# comment\n\nb= two # trailing\na = 3\n")
    assert kv == {"a": "3", "b": "two"}


def test_parse_kv_text_errors():
    with pytest.raises(ConfigError, match="line 2"):
        parse_kv_text("a = 1\nnot a pair\n")
    with pytest.raises(ConfigError, match="empty key"):
        parse_kv_text("= oops\n")


def test_scenario_defaults_and_label():
    scn = scenario_from_kv({})
    assert scn.link is not None
    assert scn.link.fiber == TWC_FIBER
    assert scn.link.n_spans == 5
    assert scn.tx.format.order == 16
    assert scn.label == "twc_5x50km_16qam_30gbd_0dbm"


def test_scenario_loopback():
    scn = scenario_from_kv(parse_kv_text("loopback = true\n"))
    assert scn.link is None
    assert scn.label == "b2b_loopback_16qam_30gbd_0dbm"


def test_scenario_prefixed_keys_win():
    kv = parse_kv_text("launch_power_dbm = 2\nsrc_launch_power_dbm = 5\n")
    assert scenario_from_kv(kv, prefix="src_").tx.launch_power_dbm == 5.0
    assert scenario_from_kv(kv, prefix="dst_").tx.launch_power_dbm == 2.0
    assert scenario_from_kv(kv).tx.launch_power_dbm == 2.0


def test_scenario_custom_fiber():
    kv = parse_kv_text("fiber = custom\nalpha_db_km = 0.21\n"
                       "d_ps_nm_km = 16\ngamma_w_km = 1.3\n")
    fib = scenario_from_kv(kv).link.fiber
    assert (fib.alpha_db_km, fib.dispersion_ps_nm_km,
            fib.gamma_w_km) == (0.21, 16.0, 1.3)
    assert fiber_name(fib) == "custom"


def test_scenario_errors():
    with pytest.raises(ConfigError, match="unknown fiber"):
        scenario_from_kv({"fiber": "sm28"})
    with pytest.raises(ConfigError, match="bad value for sps"):
        scenario_from_kv({"sps": "four"})
    with pytest.raises(ConfigError, match="invalid scenario"):
        scenario_from_kv({"mod_order": "15"})


def test_fiber_name_stock():
    assert fiber_name(TWC_FIBER) == "twc"
    assert fiber_name(SSMF_FIBER) == "ssmf"
    assert fiber_name(FiberSpec(alpha_db_km=0.25, dispersion_ps_nm_km=5.0,
                                gamma_w_km=2.0)) == "custom"


def test_scenario_key_ignores_label_and_seed():
    a = scenario_from_kv(parse_kv_text("seed = 1\nlabel = one\n"))
    b = scenario_from_kv(parse_kv_text("seed = 2\nlabel = two\n"))
    c = scenario_from_kv(parse_kv_text("launch_power_dbm = 1\n"))
    assert a.key() == b.key()
    assert a.key() != c.key()


# -------------------------------------------------------------- strategies

def _scn(**over):
    base = {"fiber": "twc", "launch_power_dbm": "0",
            "symbol_rate_gbd": "30", "mod_order": "16"}
    base.update({k: str(v) for k, v in over.items()})
    return scenario_from_kv(base)


def test_default_strategy_table():
    src = _scn()
    assert default_strategy(src, _scn(launch_power_dbm=3)) == \
        "freeze_recurrent"
    assert default_strategy(src, _scn(mod_order=64)) == "freeze_recurrent"
    assert default_strategy(src, _scn(symbol_rate_gbd=45)) == "freeze_conv"
    assert default_strategy(src, _scn(fiber="ssmf")) == "retrain_all"
    assert default_strategy(src, _scn(n_spans=9)) == "retrain_all"
    assert default_strategy(
        src, _scn(symbol_rate_gbd=45, launch_power_dbm=3)) == "retrain_all"
    assert default_strategy(
        src, _scn(symbol_rate_gbd=45, mod_order=64)) == "retrain_all"
    assert default_strategy(src, _scn()) == "freeze_recurrent"


# ---------------------------------------------------------------- profiles

def test_profile_from_kv_bases_and_overrides():
    assert profile_from_kv({}) == DESK_PROFILE
    assert profile_from_kv({"profile": "full"}) == FULL_PROFILE
    prof = profile_from_kv(parse_kv_text("n_filters = 16\n"
                                         "max_epochs = 7\n"))
    assert prof.n_filters == 16 and prof.max_epochs == 7
    assert prof.lstm_hidden == DESK_PROFILE.lstm_hidden


def test_profile_from_kv_errors():
    with pytest.raises(ConfigError, match="unknown profile"):
        profile_from_kv({"profile": "huge"})
    with pytest.raises(ConfigError, match="invalid profile"):
        profile_from_kv({"n_filters": "0"})
    with pytest.raises(ConfigError, match="bad value for max_epochs"):
        profile_from_kv({"max_epochs": "ten"})


def test_run_profile_validation():
    with pytest.raises(ValueError, match="batch_size"):
        RunProfile(batch_size=0)
    with pytest.raises(ValueError, match="max_epochs"):
        RunProfile(max_epochs=-1)


# ------------------------------------------------------------- experiments

def test_experiment_from_kv_auto_strategy():
    src, dst = _scn(launch_power_dbm=5), _scn(launch_power_dbm=2)
    exp = experiment_from_kv({}, src, dst)
    assert exp.strategy == "freeze_recurrent"
    assert exp.fractions == (1.0,)
    assert exp.seeds == (1, 2, 3)
    kv = parse_kv_text("strategy = retrain_all\nfractions = 1.0, 0.25\n"
                       "seeds = 7,8\nq_tolerance_db = 0.1\n")
    exp = experiment_from_kv(kv, src, dst)
    assert exp.strategy == "retrain_all"
    assert exp.fractions == (1.0, 0.25)
    assert exp.seeds == (7, 8)
    assert exp.q_tolerance_db == 0.1


def test_experiment_validation():
    src, dst = _scn(), _scn(launch_power_dbm=2)
    with pytest.raises(ValueError, match="unknown strategy"):
        TLExperiment(source=src, target=dst, strategy="thaw")
    with pytest.raises(ValueError, match="outside"):
        TLExperiment(source=src, target=dst, fractions=(1.5,))
    with pytest.raises(ValueError, match="q_tolerance_db"):
        TLExperiment(source=src, target=dst, q_tolerance_db=0.0)
    with pytest.raises(ValueError, match="seed"):
        TLExperiment(source=src, target=dst, seeds=())
    with pytest.raises(ConfigError, match="invalid experiment"):
        experiment_from_kv({"fractions": "0.0"}, src, dst)


def test_matrix_rows_expansion():
    kv = parse_kv_text(
        "launch_power_dbm = 0\n"
        "row2.p_src = 5\nrow2.p_dst = 2\nrow2.strategy = retrain_all\n"
        "row1.fmt_src = 16\nrow1.fmt_dst = 64\n"
        "row1.fractions = 1.0,0.5\n")
    rows = matrix_rows_from_kv(kv)
    assert [idx for idx, _ in rows] == [1, 2]
    exp1 = rows[0][1]
    assert exp1.source.tx.format.order == 16
    assert exp1.target.tx.format.order == 64
    assert exp1.fractions == (1.0, 0.5)
    assert exp1.strategy == "freeze_recurrent"  # auto: format-only change
    exp2 = rows[1][1]
    assert exp2.source.tx.launch_power_dbm == 5.0
    assert exp2.target.tx.launch_power_dbm == 2.0
    assert exp2.strategy == "retrain_all"


def test_matrix_rows_errors():
    with pytest.raises(ConfigError, match="needs a .field suffix"):
        matrix_rows_from_kv({"row1": "5"})
    with pytest.raises(ConfigError, match="bad row index"):
        matrix_rows_from_kv({"rowx.p_src": "5"})
    with pytest.raises(ConfigError, match="unknown matrix key"):
        matrix_rows_from_kv({"row1.power_src": "5"})


# ------------------------------------------------------------ frames/seeds

def test_derived_seed_deterministic():
    assert _derived_seed(3, 1) == _derived_seed(3, 1)
    assert _derived_seed(3, 1) != _derived_seed(3, 2)
    assert _derived_seed(3, 1) != _derived_seed(4, 1)


LOOPBACK_KV = ("loopback = true\ntransceiver_noise = true\n"
               "mod_order = 16\nsymbol_rate_gbd = 30\n")


def test_scenario_frame_roles_independent():
    scn = scenario_from_kv(parse_kv_text(LOOPBACK_KV))
    tr = scenario_frame(scn, 1, ROLE_TRAIN, 512)
    te = scenario_frame(scn, 1, ROLE_TEST, 512)
    tr2 = scenario_frame(scn, 1, ROLE_TRAIN, 512)
    assert tr.tx_x.tobytes() == tr2.tx_x.tobytes()
    assert tr.rx_x.tobytes() == tr2.rx_x.tobytes()
    assert tr.tx_x.tobytes() != te.tx_x.tobytes()


def test_linear_reference_clean_loopback():
    kv = parse_kv_text("loopback = true\ntransceiver_noise = false\n")
    scn = scenario_from_kv(kv)
    frame = scenario_frame(scn, 1, ROLE_TEST, 512)
    ber, q, mse, n_bits = linear_reference(frame, scn.tx.format)
    assert ber == 0.0
    assert math.isnan(q)  # error-free runs have no finite Q estimate
    assert mse < 1e-20
    assert n_bits == frame.tx_x.size * 4  # guard-trimmed symbols x 4 bits


def test_ber_sentinel():
    assert ber_sentinel(0.0, 65536) == "<1.526e-05"
    assert ber_sentinel(0.001953125, 1024) == "0.001953125"


# ----------------------------------------------------------------- savings

def _trace(qs, strategy="scratch", fraction=1.0):
    tr = MetricTrace(scenario_id="t", strategy=strategy, fraction=fraction)
    for ep, q in enumerate(qs):
        tr.append(ep, 1.0, 0.01, q)
    return tr


def test_epochs_to_threshold_rules():
    tr = _trace([9.9, 5.0, float("nan"), 9.0, 9.5])
    # epoch 0 is pre-training and never counts; nan rows are skipped
    assert epochs_to_threshold(tr, 9.0) == 3
    assert epochs_to_threshold(tr, 9.2) == 4
    assert epochs_to_threshold(tr, 9.6) is None


def test_compute_savings_arithmetic():
    scratch = _trace([0.0] + [5 + 0.5 * e for e in range(1, 11)])
    tl_full = _trace([8.0, 9.96, 9.97], strategy="freeze_recurrent")
    tl_half = _trace([8.0, 9.0, 9.2, 9.4, 9.5, 9.96],
                     strategy="freeze_recurrent", fraction=0.5)
    tl_tenth = _trace([8.0, 9.0, 9.1], strategy="freeze_recurrent",
                      fraction=0.1)
    curves = CurveSet(wo_nn=_trace([7.0], "wo_nn"),
                      snn=_trace([7.5], "snn"),
                      tnn_wo_tl=scratch,
                      tnn_tl={1.0: tl_full, 0.5: tl_half, 0.1: tl_tenth})
    rep = compute_savings(curves, q_tolerance_db=0.05)
    assert rep.best_q_wo_tl == 10.0
    assert rep.threshold_q_db == pytest.approx(9.95)
    assert rep.epochs_wo_tl == 10
    by_frac = {r.fraction: r for r in rep.rows}
    assert by_frac[1.0].epochs_to_threshold == 1
    assert by_frac[1.0].epoch_savings_pct == pytest.approx(90.0)
    assert by_frac[0.5].epochs_to_threshold == 5
    assert by_frac[0.1].epochs_to_threshold is None
    assert by_frac[0.1].epoch_savings_pct is None
    assert by_frac[0.1].data_savings_pct == pytest.approx(90.0)
    assert rep.epoch_savings_pct() == pytest.approx(90.0)  # largest reached
    assert rep.data_savings_pct() == pytest.approx(50.0)  # smallest reached
    assert rep.q_wo_nn == 7.0 and rep.q_snn == 7.5


def test_compute_savings_nothing_reached():
    scratch = _trace([0.0, 9.0, 10.0])
    tl = _trace([5.0, 6.0], strategy="freeze_conv")
    curves = CurveSet(wo_nn=_trace([7.0], "wo_nn"),
                      snn=_trace([6.5], "snn"),
                      tnn_wo_tl=scratch, tnn_tl={1.0: tl})
    rep = compute_savings(curves, q_tolerance_db=0.05)
    assert rep.reached() == []
    assert rep.epoch_savings_pct() is None
    assert rep.data_savings_pct() is None


def test_summary_line_formats():
    src, dst = _scn(launch_power_dbm=5), _scn(launch_power_dbm=2)
    exp = TLExperiment(source=src, target=dst,
                       strategy="freeze_recurrent", seeds=(1,))
    line = summary_line(4, exp, None)
    assert line == ("4,twc,twc,5.0,2.0,30.0,30.0,16,16,"
                    "freeze_recurrent,failed,failed,failed")


# ----------------------------------------------------------- tiny end-to-end

TINY_SWEEP = (
    "loopback = true\n"
    "mod_order = 16\n"
    "symbol_rate_gbd = 30\n"
    "half_window = 2\n"
    "n_filters = 3\n"
    "kernel_size = 3\n"
    "lstm_hidden = 4\n"
    "batch_size = 128\n"
    "max_epochs = 2\n"
    "tl_max_epochs = 2\n"
    "source_epochs = 1\n"
    "n_symbols_train = 512\n"
    "n_symbols_test = 512\n"
    "seeds = 1\n"
    "fractions = 1.0, 0.5\n"
    "row1.p_src = 1\n"
    "row1.p_dst = 0\n"
)


def test_run_scenario_matrix_end_to_end(tmp_path):
    kv = parse_kv_text(TINY_SWEEP)
    out_a = str(tmp_path / "a")
    path = run_scenario_matrix(kv, out_a)
    assert os.path.basename(path) == "summary.csv"
    lines = open(path, encoding="utf-8").read().splitlines()
    assert lines[0] == SUMMARY_HEADER
    assert len(lines) == 2
    assert lines[1].startswith("1,b2b,b2b,1.0,0.0,30.0,30.0,16,16,"
                               "freeze_recurrent,")
    # per-curve traces were written
    names = sorted(os.listdir(out_a))
    for suffix in ("source", "wo_nn", "snn", "scratch",
                   "tl_freeze_recurrent_f100", "tl_freeze_recurrent_f050"):
        assert f"row1_seed1_{suffix}.csv" in names
    # independent recomputation agrees byte for byte
    assert verify_summary(out_a, q_tolerance_db=0.05)
    assert recompute_summary(out_a).splitlines()[1] == lines[1]
    # a rerun reproduces everything byte for byte
    out_b = str(tmp_path / "b")
    run_scenario_matrix(kv, out_b)
    assert (open(os.path.join(out_a, "summary.csv"), "rb").read()
            == open(os.path.join(out_b, "summary.csv"), "rb").read())
    tl_name = "row1_seed1_tl_freeze_recurrent_f100.csv"
    assert (open(os.path.join(out_a, tl_name), "rb").read()
            == open(os.path.join(out_b, tl_name), "rb").read())


def test_run_scenario_matrix_isolates_row_failure(tmp_path, capsys):
    bad = TINY_SWEEP + "row2.p_src = 1\nrow2.p_dst = 0\nrow2.fmt_dst = 13\n"
    with pytest.raises(ConfigError):
        # malformed rows are config errors, caught before any run starts
        run_scenario_matrix(parse_kv_text(bad), str(tmp_path / "x"))
    # runtime failures inside a row are isolated instead
    kv = parse_kv_text(TINY_SWEEP
                       + "row2.p_src = 1\nrow2.p_dst = 0\n"
                         "row2.strategy = freeze_conv\n")
    kv["n_symbols_test"] = "8"  # too short for the window: row fails
    path = run_scenario_matrix(kv, str(tmp_path / "y"))
    lines = open(path, encoding="utf-8").read().splitlines()
    assert len(lines) == 3
    assert all(line.endswith("failed,failed,failed") for line in lines[1:])


def test_run_reference_curves_requires_source():
    kv = parse_kv_text(LOOPBACK_KV)
    scn = scenario_from_kv(kv)
    exp = TLExperiment(source=scn, target=scn, seeds=(1,))
    with pytest.raises(ValueError, match="source model missing"):
        run_reference_curves(exp, 1, DESK_PROFILE, None)


def _tiny_profile():
    return profile_from_kv(parse_kv_text(
        "half_window = 2\nn_filters = 3\nkernel_size = 3\n"
        "lstm_hidden = 4\nbatch_size = 128\nmax_epochs = 2\n"
        "tl_max_epochs = 2\nsource_epochs = 1\n"
        "n_symbols_train = 512\nn_symbols_test = 512\n"))


def test_run_experiment_uses_caches(tmp_path):
    src = scenario_from_kv(parse_kv_text(LOOPBACK_KV
                                         + "launch_power_dbm = 1\n"))
    dst = scenario_from_kv(parse_kv_text(LOOPBACK_KV))
    exp = TLExperiment(source=src, target=dst,
                       strategy="freeze_recurrent", seeds=(1,))
    prof = _tiny_profile()
    source_cache, scratch_cache = {}, {}
    res1 = run_experiment(exp, prof, source_cache=source_cache,
                          scratch_cache=scratch_cache)
    assert len(source_cache) == 1 and len(scratch_cache) == 1
    res2 = run_experiment(exp, prof, source_cache=source_cache,
                          scratch_cache=scratch_cache)
    # cache hits hand back the same objects instead of retraining
    assert res2.per_seed[0].source_model is res1.per_seed[0].source_model
    assert res2.per_seed[0].curves.tnn_wo_tl is \
        res1.per_seed[0].curves.tnn_wo_tl


def test_run_direction_study_rows(tmp_path):
    a = scenario_from_kv(parse_kv_text(LOOPBACK_KV
                                       + "launch_power_dbm = 1\n"))
    b = scenario_from_kv(parse_kv_text(LOOPBACK_KV))
    prof = _tiny_profile()
    fwd = TLExperiment(source=a, target=b, strategy="freeze_recurrent",
                       seeds=(1,))
    rev = TLExperiment(source=b, target=a, strategy="freeze_recurrent",
                       seeds=(1,))
    rows = run_direction_study([fwd, rev], prof,
                               out_dir=str(tmp_path / "dirs"))
    assert len(rows) == 2
    assert rows[0][0] == f"{a.label}->{b.label}"
    assert rows[1][0] == f"{b.label}->{a.label}"
    for _, best_q, epochs in rows:
        assert math.isfinite(best_q)
        assert epochs >= 1  # finite epoch or +inf, never None


def test_train_source_returns_trace(tmp_path):
    scn = scenario_from_kv(parse_kv_text(LOOPBACK_KV))
    model, trace = train_source(scn, 1, _tiny_profile())
    assert list(trace.epochs) == [0, 1]
    assert trace.strategy == "source"
    assert model.n_params() == 3 * (4 * 3 + 1) + 8 * (4 * (3 + 4) + 4) \
        + (5 * 8) * 2 + 2
