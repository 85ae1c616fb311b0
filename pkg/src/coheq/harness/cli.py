"""Command line interface.

Subcommands
-----------
simulate   build one scenario's train and test frames, write them as CSV
train      train a fresh equalizer on a scenario; write checkpoint + trace
transfer   fine-tune a source checkpoint on a target scenario
evaluate   score a checkpoint on a scenario's test frame, one CSV row
sweep      run a transfer-study matrix config into a results directory

All commands read the flat key=value config format documented in
scenarios.py.  Exit codes: 0 success, 2 configuration or input-file
error, 3 numeric failure during simulation or training.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..dataset import window_frame
from ..metrics import write_trace_csv
from ..neuralnet import (CheckpointError, apply_tl_strategy, evaluate_model,
                         init_model, load_checkpoint, save_checkpoint,
                         train)
from ..rxdsp import DspError, export_frame_csv
from .runner import (ROLE_TEST, ROLE_TRAIN, ber_sentinel, model_config,
                     run_scenario_matrix, scenario_frame, train_config,
                     train_source)
from .scenarios import (ConfigError, parse_kv_file, profile_from_kv,
                        scenario_from_kv)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coheq",
        description="coherent link simulation and equalizer training")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_dir=True):
        p.add_argument("--config", required=True,
                       help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="experiment seed (default: first 'seeds' "
                            "entry, else 1)")
        if out_dir:
            p.add_argument("--out", required=True,
                           help="output directory")

    p = sub.add_parser("simulate",
                       help="write a scenario's train/test frames as CSV")
    add_common(p)

    p = sub.add_parser("train",
                       help="train from scratch; write checkpoint and "
                            "metric trace")
    add_common(p)

    p = sub.add_parser("transfer",
                       help="fine-tune a source checkpoint on a target "
                            "scenario")
    add_common(p)
    p.add_argument("--source-ckpt", required=True,
                   help="checkpoint produced by the train subcommand")
    p.add_argument("--strategy", default=None,
                   choices=["retrain_all", "freeze_conv",
                            "freeze_recurrent"],
                   help="layer freeze strategy (default: config key "
                        "'strategy')")
    p.add_argument("--fraction", type=float, default=None,
                   help="training data fraction in (0, 1] (default: "
                        "config key 'fractions' first entry, else 1.0)")

    p = sub.add_parser("evaluate",
                       help="score a checkpoint on a scenario test frame")
    add_common(p, out_dir=False)
    p.add_argument("--ckpt", required=True, help="checkpoint to evaluate")
    p.add_argument("--out", default=None,
                   help="write the one-row CSV here instead of stdout")

    p = sub.add_parser("sweep",
                       help="run a matrix config of transfer experiments")
    add_common(p)
    return parser


def _seed_of(args, kv) -> int:
    if args.seed is not None:
        return args.seed
    raw = kv.get("seeds", "1")
    try:
        return int(str(raw).split(",")[0])
    except ValueError as exc:
        raise ConfigError(f"bad seeds value {raw!r}") from exc


def _cmd_simulate(args) -> int:
    kv = parse_kv_file(args.config)
    scn = scenario_from_kv(kv)
    profile = profile_from_kv(kv)
    seed = _seed_of(args, kv)
    os.makedirs(args.out, exist_ok=True)
    paths = []
    for role, name, n_sym in ((ROLE_TRAIN, "train",
                               profile.n_symbols_train),
                              (ROLE_TEST, "test",
                               profile.n_symbols_test)):
        frame = scenario_frame(scn, seed, role, n_sym)
        path = os.path.join(args.out,
                            f"{scn.label}_seed{seed}_{name}.csv")
        export_frame_csv(frame, path)
        paths.append(path)
        print(path)
    return 0


def _cmd_train(args) -> int:
    kv = parse_kv_file(args.config)
    scn = scenario_from_kv(kv)
    profile = profile_from_kv(kv)
    seed = _seed_of(args, kv)
    os.makedirs(args.out, exist_ok=True)
    model, trace = train_source(scn, seed, profile,
                                max_epochs=profile.max_epochs)
    base = os.path.join(args.out, f"{scn.label}_seed{seed}")
    save_checkpoint(model, base + ".nneq")
    write_trace_csv(trace, base + "_trace.csv")
    print(base + ".nneq")
    print(base + "_trace.csv")
    print(f"best_q_db={trace.best_q_db()!r}")
    return 0


def _cmd_transfer(args) -> int:
    kv = parse_kv_file(args.config)
    scn = scenario_from_kv(kv)
    profile = profile_from_kv(kv)
    seed = _seed_of(args, kv)
    if not os.path.exists(args.source_ckpt):
        raise ConfigError(f"source checkpoint not found: "
                          f"{args.source_ckpt}; train source first with "
                          f"the train subcommand")
    model = load_checkpoint(args.source_ckpt,
                            expect_cfg=model_config(profile))
    strategy = args.strategy or kv.get("strategy")
    if strategy in (None, "auto"):
        raise ConfigError("transfer needs an explicit strategy: pass "
                          "--strategy or set the 'strategy' config key")
    fraction = args.fraction
    if fraction is None:
        raw = kv.get("fractions", "1.0")
        fraction = float(str(raw).split(",")[0])
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction {fraction} outside (0, 1]")

    from ..dataset import subset_fraction
    from .runner import _derived_seed
    apply_tl_strategy(model, strategy)
    tr_frame = scenario_frame(scn, seed, ROLE_TRAIN,
                              profile.n_symbols_train)
    te_frame = scenario_frame(scn, seed, ROLE_TEST,
                              profile.n_symbols_test)
    ds = window_frame(tr_frame, profile.half_window)
    if fraction < 1.0:
        ds = subset_fraction(ds, fraction, seed=_derived_seed(seed, 3))
    trace = train(model, ds, te_frame, scn.tx.format,
                  train_config(profile, profile.tl_max_epochs, seed),
                  scenario_id=f"{scn.label}/seed{seed}",
                  strategy=strategy, fraction=fraction)
    os.makedirs(args.out, exist_ok=True)
    tag = f"{scn.label}_seed{seed}_tl_{strategy}_f{round(fraction*100):03d}"
    base = os.path.join(args.out, tag)
    save_checkpoint(model, base + ".nneq")
    write_trace_csv(trace, base + "_trace.csv")
    print(base + ".nneq")
    print(base + "_trace.csv")
    print(f"best_q_db={trace.best_q_db()!r}")
    return 0


def _cmd_evaluate(args) -> int:
    kv = parse_kv_file(args.config)
    scn = scenario_from_kv(kv)
    profile = profile_from_kv(kv)
    seed = _seed_of(args, kv)
    if not os.path.exists(args.ckpt):
        raise ConfigError(f"checkpoint not found: {args.ckpt}")
    model = load_checkpoint(args.ckpt, expect_cfg=model_config(profile))
    te_frame = scenario_frame(scn, seed, ROLE_TEST,
                              profile.n_symbols_test)
    fmt = scn.tx.format
    ber, q_db, mse = evaluate_model(model, te_frame, fmt,
                                    profile.half_window,
                                    eval_batch=profile.eval_batch)
    # bits actually compared: windowing drops half_window symbols per edge
    n_syms = te_frame.tx_x.size - 2 * profile.half_window
    n_bits = n_syms * int(fmt.bits_per_symbol)
    lines = ["scenario,seed,ber,q_db,mse",
             f"{scn.label},{seed},{ber_sentinel(ber, n_bits)},"
             f"{q_db!r},{mse!r}"]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_sweep(args) -> int:
    path = run_scenario_matrix(args.config, args.out)
    print(path)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "transfer": _cmd_transfer,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DspError, RuntimeError, FloatingPointError,
            ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
