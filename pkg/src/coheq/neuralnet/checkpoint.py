"""Equalizer checkpoint serialization.

Layout (all little-endian):

    bytes 0..3    magic "NNEQ"
    4..7          u32 format version (1)
    8..23         u32 x 4 architecture: n_filters, kernel_size,
                  lstm_hidden, half_window
    24..          parameter blocks as float64 in PARAM_ORDER
                  (conv_w, conv_b, fw_wx, fw_wh, fw_b, bw_wx, bw_wh,
                  bw_b, dense_w, dense_b), each in C order
    last 4        u32 CRC32 of everything before it

Only architecture and weights are stored; optimizer state and freeze
masks are run state, not checkpoint state.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .model import EqualizerConfig, EqualizerModel, PARAM_ORDER

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"NNEQ"
_VERSION = 1
_HEAD = struct.Struct("<4sIIIII")


class CheckpointError(ValueError):
    """Malformed, corrupt or architecturally incompatible checkpoint."""


def save_checkpoint(model: EqualizerModel, path: str) -> None:
    cfg = model.cfg
    body = bytearray(_HEAD.pack(_MAGIC, _VERSION, cfg.n_filters,
                                cfg.kernel_size, cfg.lstm_hidden,
                                cfg.half_window))
    for name in PARAM_ORDER:
        body += np.ascontiguousarray(model.params[name],
                                     dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(bytes(body))))


def load_checkpoint(path: str,
                    expect_cfg: EqualizerConfig | None = None
                    ) -> EqualizerModel:
    """Restore a model bit-exactly; optionally enforce an architecture.

    With expect_cfg given, any differing architecture field raises
    CheckpointError naming the first mismatched field.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size + 4:
        raise CheckpointError("unexpected end of checkpoint file")
    magic, version, f, k, h, n = _HEAD.unpack_from(raw)
    if magic != _MAGIC:
        raise CheckpointError("bad magic; not an equalizer checkpoint")
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg = EqualizerConfig(n_filters=f, kernel_size=k, lstm_hidden=h,
                          half_window=n)
    if expect_cfg is not None:
        for fld in ("n_filters", "kernel_size", "lstm_hidden",
                    "half_window"):
            if getattr(expect_cfg, fld) != getattr(cfg, fld):
                raise CheckpointError(
                    f"architecture mismatch in {fld}: checkpoint has "
                    f"{getattr(cfg, fld)}, expected "
                    f"{getattr(expect_cfg, fld)}")
    shapes = cfg.param_shapes()
    n_param_bytes = sum(int(np.prod(s)) for s in shapes.values()) * 8
    need = _HEAD.size + n_param_bytes + 4
    if len(raw) != need:
        raise CheckpointError("unexpected end of checkpoint file")
    (crc,) = struct.unpack("<I", raw[-4:])
    if crc != zlib.crc32(raw[:-4]):
        raise CheckpointError("checkpoint checksum mismatch")
    params = {}
    off = _HEAD.size
    for name in PARAM_ORDER:
        shape = shapes[name]
        size = int(np.prod(shape))
        block = np.frombuffer(raw, dtype="<f8", count=size, offset=off)
        params[name] = block.reshape(shape).copy()
        off += size * 8
    return EqualizerModel(cfg=cfg, params=params)
