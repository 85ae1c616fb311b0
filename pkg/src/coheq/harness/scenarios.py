"""Experiment descriptions and flat key=value configuration parsing.

A Scenario bundles everything needed to simulate one transmission setup:
transmitter spec, link plan, and the transceiver-noise switch.  A
TLExperiment pairs a source and a target Scenario with a transfer
strategy, the data fractions to sweep, a Q-factor tolerance, and the
seeds to repeat over.  RunProfile collects network and training sizes;
the desk profile is small enough for CI, the full profile is the
full-scale setup and is only meant for long offline runs.

Config file format
------------------
Plain text, one `key = value` per line, `#` starts a comment.  Scenario
keys (per-row variants take a `src_` / `dst_` prefix in matrix files):

    label               free-form name (default derived from the fields)
    fiber               twc | ssmf | custom
    alpha_db_km         custom fiber attenuation (dB/km)
    d_ps_nm_km          custom fiber dispersion (ps/nm/km)
    gamma_w_km          custom fiber nonlinearity (1/W/km)
    wavelength_nm       carrier wavelength, default 1550
    n_spans             spans in the link (default 5)
    span_km             span length (default 50)
    step_km             split-step size (default 1)
    edfa_nf_db          amplifier noise figure (default 4.5)
    ase_on              amplifier noise switch (default true)
    loopback            true = no fiber at all, back-to-back (default false)
    mod_order           16 | 32 | 64 | 128 (default 16)
    n_symbols           symbols per generated frame (default 16384)
    symbol_rate_gbd     symbol rate (default 30)
    sps                 samples per symbol (default 4)
    rolloff             RRC roll-off (default 0.1)
    launch_power_dbm    per-channel launch power (default 0)
    seed                scenario data seed (default 0)
    transceiver_noise   rate-dependent Tx/Rx noise switch (default true)

Training keys (shared by train / transfer / sweep):

    profile             desk | full base profile (default desk)
    half_window         N neighbor symbols each side (window M = 2N+1)
    n_filters           convolution filters
    kernel_size         convolution kernel width
    lstm_hidden         LSTM units per direction
    batch_size          minibatch size
    max_epochs          from-scratch epoch cap
    tl_max_epochs       transfer-run epoch cap
    source_epochs       source-training epoch cap
    learning_rate       Adam learning rate
    eval_batch          forward-pass chunk during evaluation
    n_symbols_train     training frame size
    n_symbols_test      test frame size

Experiment keys (transfer / sweep):

    strategy            retrain_all | freeze_conv | freeze_recurrent | auto
    fractions           comma list of data fractions in (0, 1]
    q_tolerance_db      threshold tolerance below the from-scratch best Q
    seeds               comma list of experiment seeds

Matrix files add numbered rows, e.g. `row1.p_src = 5`.  Row keys:
fiber_src, fiber_dst, p_src, p_dst, rate_src, rate_dst, fmt_src,
fmt_dst, spans_src, spans_dst, strategy, fractions.  Unset side values
fall back to the file-level scenario keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..fiberlink import SSMF_FIBER, TWC_FIBER, FiberSpec, LinkSpec
from ..neuralnet import TL_STRATEGIES
from ..txsig import TxSpec, make_constellation

__all__ = [
    "ConfigError",
    "Scenario",
    "TLExperiment",
    "RunProfile",
    "DESK_PROFILE",
    "FULL_PROFILE",
    "FIBERS",
    "fiber_name",
    "default_strategy",
    "parse_kv_text",
    "parse_kv_file",
    "scenario_from_kv",
    "profile_from_kv",
    "experiment_from_kv",
    "matrix_rows_from_kv",
]

FIBERS = {"twc": TWC_FIBER, "ssmf": SSMF_FIBER}


class ConfigError(Exception):
    """Unparseable or inconsistent configuration input."""


@dataclass
class Scenario:
    """One complete transmission setup.

    link=None is the back-to-back loopback: no fiber, no dispersion
    compensation, only pulse shaping and (optionally) transceiver noise.
    """

    tx: TxSpec
    link: LinkSpec | None
    transceiver_noise: bool = True
    label: str = ""

    def __post_init__(self) -> None:
        if not self.label:
            self.label = self.default_label()

    def default_label(self) -> str:
        fib = fiber_name(self.link.fiber) if self.link else "b2b"
        plan = (f"{self.link.n_spans}x{self.link.span_km:g}km"
                if self.link else "loopback")
        return (f"{fib}_{plan}_{self.tx.format.order}qam_"
                f"{self.tx.symbol_rate_gbd:g}gbd_"
                f"{self.tx.launch_power_dbm:g}dbm")

    def key(self) -> tuple:
        """Identity of the physical setup, ignoring label and data seed."""
        fib = self.link.fiber if self.link else None
        return (
            None if fib is None else (fib.alpha_db_km,
                                      fib.dispersion_ps_nm_km,
                                      fib.gamma_w_km, fib.wavelength_nm),
            None if self.link is None else (self.link.n_spans,
                                            self.link.span_km,
                                            self.link.step_km,
                                            self.link.edfa_nf_db,
                                            self.link.ase_on),
            self.tx.format.order, self.tx.sps, self.tx.rolloff,
            self.tx.symbol_rate_gbd, self.tx.launch_power_dbm,
            self.transceiver_noise,
        )


@dataclass
class TLExperiment:
    """A source-to-target transfer study."""

    source: Scenario
    target: Scenario
    strategy: str = "freeze_recurrent"
    fractions: tuple = (1.0,)
    q_tolerance_db: float = 0.05
    seeds: tuple = (1, 2, 3)

    def __post_init__(self) -> None:
        if self.strategy not in TL_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.fractions = tuple(float(f) for f in self.fractions)
        for f in self.fractions:
            if not 0.0 < f <= 1.0:
                raise ValueError(f"fraction {f} outside (0, 1]")
        if self.q_tolerance_db <= 0.0:
            raise ValueError("q_tolerance_db must be positive")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("need at least one seed")


@dataclass
class RunProfile:
    """Network size plus training schedule for one scale of experiment."""

    name: str = "desk"
    half_window: int = 10
    n_filters: int = 16
    kernel_size: int = 8
    lstm_hidden: int = 40
    batch_size: int = 256
    max_epochs: int = 40
    tl_max_epochs: int = 30
    source_epochs: int = 25
    learning_rate: float = 1e-3
    eval_batch: int = 1024
    n_symbols_train: int = 2 ** 14
    n_symbols_test: int = 2 ** 13

    def __post_init__(self) -> None:
        for name in ("half_window", "n_filters", "kernel_size",
                     "lstm_hidden", "batch_size", "eval_batch",
                     "n_symbols_train", "n_symbols_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("max_epochs", "tl_max_epochs", "source_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


# conv kept small so a 10% data fraction still has ~5 windows per conv
# parameter, the same ratio the full-scale profile gets at 2^18 symbols
DESK_PROFILE = RunProfile()

# Full-scale setup: 244-filter conv, 226-unit biLSTM, 40-tap window,
# 2^18-symbol frames, batch 1000, up to 200 epochs.  Hours per run; not
# exercised in CI.
FULL_PROFILE = RunProfile(
    name="full", half_window=40, n_filters=244, kernel_size=10,
    lstm_hidden=226, batch_size=1000, max_epochs=200, tl_max_epochs=200,
    source_epochs=200, eval_batch=1024,
    n_symbols_train=2 ** 18, n_symbols_test=2 ** 18)


def fiber_name(fiber: FiberSpec) -> str:
    for name, ref in FIBERS.items():
        if ref == fiber:
            return name
    return "custom"


def default_strategy(source: Scenario, target: Scenario) -> str:
    """Pick the freeze strategy from what changed between the scenarios.

    Rate-only change retrains the recurrent half (freeze_conv); a power
    or format change retrains only the convolution (freeze_recurrent);
    fiber-plant or compound changes retrain everything.
    """
    src, dst = source.key(), target.key()
    plant_changed = src[0:2] != dst[0:2]
    rate_changed = source.tx.symbol_rate_gbd != target.tx.symbol_rate_gbd
    power_changed = (source.tx.launch_power_dbm
                     != target.tx.launch_power_dbm)
    fmt_changed = source.tx.format.order != target.tx.format.order
    if plant_changed or (rate_changed and (power_changed or fmt_changed)):
        return "retrain_all"
    if rate_changed:
        return "freeze_conv"
    return "freeze_recurrent"


# -- flat key=value parsing -------------------------------------------------

def parse_kv_text(text: str) -> dict:
    """Parse `key = value` lines into a dict; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw.strip()!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = val.strip()
    return out


def parse_kv_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_kv_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _get(kv: dict, key: str, default, cast):
    if key not in kv:
        return default
    raw = kv[key]
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _bool(raw: str) -> bool:
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in str(raw).split(",") if tok.strip())


def _ints(raw: str) -> tuple:
    return tuple(int(tok) for tok in str(raw).split(",") if tok.strip())


def _fiber_from_kv(kv: dict, prefix: str) -> FiberSpec:
    name = _get(kv, prefix + "fiber", "twc", str).lower()
    if name in FIBERS:
        return FIBERS[name]
    if name != "custom":
        raise ConfigError(f"unknown fiber {name!r}; "
                          f"use twc, ssmf or custom")
    try:
        return FiberSpec(
            alpha_db_km=_get(kv, prefix + "alpha_db_km", 0.2, float),
            dispersion_ps_nm_km=_get(kv, prefix + "d_ps_nm_km", 17.0,
                                     float),
            gamma_w_km=_get(kv, prefix + "gamma_w_km", 1.2, float),
            wavelength_nm=_get(kv, prefix + "wavelength_nm", 1550.0,
                               float))
    except ValueError as exc:
        raise ConfigError(f"invalid custom fiber: {exc}") from exc


def scenario_from_kv(kv: dict, prefix: str = "") -> Scenario:
    """Build a Scenario from config keys, `prefix` selecting a variant."""
    def get(key, default, cast):
        # prefixed key wins over the bare key, which wins over default
        bare = _get(kv, key, default, cast)
        return _get(kv, prefix + key, bare, cast)

    order = get("mod_order", 16, int)
    try:
        fmt = make_constellation(order)
        tx = TxSpec(
            format=fmt,
            n_symbols=get("n_symbols", 2 ** 14, int),
            sps=get("sps", 4, int),
            rolloff=get("rolloff", 0.1, float),
            launch_power_dbm=get("launch_power_dbm", 0.0, float),
            symbol_rate_gbd=get("symbol_rate_gbd", 30.0, float),
            seed=get("seed", 0, int))
        if get("loopback", False, _bool):
            link = None
        else:
            fiber = (_fiber_from_kv(kv, prefix)
                     if prefix + "fiber" in kv or not prefix
                     else _fiber_from_kv(kv, ""))
            link = LinkSpec(
                fiber=fiber,
                n_spans=get("n_spans", 5, int),
                span_km=get("span_km", 50.0, float),
                step_km=get("step_km", 1.0, float),
                edfa_nf_db=get("edfa_nf_db", 4.5, float),
                ase_on=get("ase_on", True, _bool))
    except ValueError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc
    return Scenario(tx=tx, link=link,
                    transceiver_noise=get("transceiver_noise", True,
                                          _bool),
                    label=get("label", "", str))


def profile_from_kv(kv: dict) -> RunProfile:
    """Resolve the training profile: named base plus overrides."""
    base_name = _get(kv, "profile", "desk", str).lower()
    bases = {"desk": DESK_PROFILE, "full": FULL_PROFILE}
    if base_name not in bases:
        raise ConfigError(f"unknown profile {base_name!r}; "
                          f"use desk or full")
    base = bases[base_name]
    overrides = {}
    for name, cast in (("half_window", int), ("n_filters", int),
                       ("kernel_size", int), ("lstm_hidden", int),
                       ("batch_size", int), ("max_epochs", int),
                       ("tl_max_epochs", int), ("source_epochs", int),
                       ("learning_rate", float), ("eval_batch", int),
                       ("n_symbols_train", int), ("n_symbols_test", int)):
        if name in kv:
            overrides[name] = _get(kv, name, None, cast)
    try:
        return replace(base, **overrides)
    except ValueError as exc:
        raise ConfigError(f"invalid profile: {exc}") from exc


def experiment_from_kv(kv: dict, source: Scenario,
                       target: Scenario) -> TLExperiment:
    strategy = _get(kv, "strategy", "auto", str)
    if strategy == "auto":
        strategy = default_strategy(source, target)
    try:
        return TLExperiment(
            source=source, target=target, strategy=strategy,
            fractions=_get(kv, "fractions", (1.0,), _floats),
            q_tolerance_db=_get(kv, "q_tolerance_db", 0.05, float),
            seeds=_get(kv, "seeds", (1, 2, 3), _ints))
    except ValueError as exc:
        raise ConfigError(f"invalid experiment: {exc}") from exc


_ROW_SIDE_KEYS = {"fiber": "fiber", "p": "launch_power_dbm",
                  "rate": "symbol_rate_gbd", "fmt": "mod_order",
                  "spans": "n_spans"}


def matrix_rows_from_kv(kv: dict) -> list:
    """Expand `rowN.key` groups into numbered TLExperiments.

    Returns [(row_index, TLExperiment), ...] sorted by index.  Row keys
    use the `_src` / `_dst` suffix convention; everything else inherits
    the file-level scenario and experiment keys.
    """
    rows = {}
    for key, val in kv.items():
        if not key.startswith("row"):
            continue
        head, _, sub = key.partition(".")
        if not sub:
            raise ConfigError(f"matrix key {key!r} needs a .field suffix")
        try:
            idx = int(head[3:])
        except ValueError as exc:
            raise ConfigError(f"bad row index in {key!r}") from exc
        rows.setdefault(idx, {})[sub] = val

    out = []
    for idx in sorted(rows):
        row = rows[idx]
        side_kv = dict(kv)
        for side, prefix in (("src", "src_"), ("dst", "dst_")):
            for short, full in _ROW_SIDE_KEYS.items():
                rk = f"{short}_{side}"
                if rk in row:
                    side_kv[prefix + full] = row[rk]
        for extra in row:
            base = extra.rsplit("_", 1)[0]
            if extra not in ("strategy", "fractions", "q_tolerance_db",
                             "seeds") and base not in _ROW_SIDE_KEYS:
                raise ConfigError(f"unknown matrix key row{idx}.{extra}")
        source = scenario_from_kv(side_kv, prefix="src_")
        target = scenario_from_kv(side_kv, prefix="dst_")
        exp_kv = dict(kv)
        for name in ("strategy", "fractions", "q_tolerance_db", "seeds"):
            if name in row:
                exp_kv[name] = row[name]
        out.append((idx, experiment_from_kv(exp_kv, source, target)))
    return out
