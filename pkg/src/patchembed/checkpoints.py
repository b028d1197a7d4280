"""Encoder checkpoints: a language-neutral binary container.

Layout (all integers little-endian uint32 unless noted):
  magic "PATCHEMB" (8 bytes) | format_version
  | arch_len  | architecture key=value text (utf-8)
  | meta_len  | training-meta key=value text (utf-8)
  | n_blocks  | blocks...
Each block: name_len | name utf-8 | ndim | dims... | float32 LE data.
Round-tripping reproduces every parameter bit-exactly.
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .network import ParameterSet, arch_from_text, arch_to_text, parameter_count

MAGIC = b"PATCHEMB"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingMeta:
    epochs: int = 0
    seed: int = 0
    loss_history: tuple = ()  # ((train, heldout), ...)

    def to_text(self):
        pairs = ";".join(f"{repr(float(t))},{repr(float(h))}" for t, h in self.loss_history)
        return f"epochs={self.epochs}\nseed={self.seed}\nloss_history={pairs}\n"

    @classmethod
    def from_text(cls, text):
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                fields[key] = value
        history = []
        raw = fields.get("loss_history", "")
        if raw:
            for pair in raw.split(";"):
                t, _, h = pair.partition(",")
                history.append((float(t), float(h)))
        return cls(
            epochs=int(fields.get("epochs", 0)),
            seed=int(fields.get("seed", 0)),
            loss_history=tuple(history),
        )


@dataclass(frozen=True)
class Checkpoint:
    architecture: "ArchitectureConfig"
    parameters: ParameterSet
    training_meta: TrainingMeta = field(default_factory=TrainingMeta)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        implied = parameter_count(self.architecture)
        actual = self.parameters.total_count()
        if implied != actual:
            raise CheckpointError(
                f"parameter count {actual} does not match architecture ({implied})"
            )


def _write_u32(fh, value):
    fh.write(struct.pack("<I", value))


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _read_u32(fh, what):
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def save_checkpoint(ckpt, path):
    buf = io.BytesIO()
    buf.write(MAGIC)
    _write_u32(buf, ckpt.format_version)
    for text in (arch_to_text(ckpt.architecture), ckpt.training_meta.to_text()):
        raw = text.encode("utf-8")
        _write_u32(buf, len(raw))
        buf.write(raw)
    _write_u32(buf, len(ckpt.parameters))
    for name, arr in ckpt.parameters.items():
        raw_name = name.encode("utf-8")
        _write_u32(buf, len(raw_name))
        buf.write(raw_name)
        _write_u32(buf, arr.ndim)
        for d in arr.shape:
            _write_u32(buf, d)
        data = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(data.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    try:
        fh = open(path, "rb")
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    with fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        version = _read_u32(fh, "format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format_version {version}")
        arch_text = _read_exact(fh, _read_u32(fh, "arch length"), "architecture").decode("utf-8")
        meta_text = _read_exact(fh, _read_u32(fh, "meta length"), "training meta").decode("utf-8")
        n_blocks = _read_u32(fh, "block count")
        arrays = []
        for b in range(n_blocks):
            name = _read_exact(fh, _read_u32(fh, f"block {b} name length"), "name").decode("utf-8")
            ndim = _read_u32(fh, f"block {name} ndim")
            shape = tuple(_read_u32(fh, f"block {name} dim") for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = _read_exact(fh, 4 * count, f"block {name} data")
            arrays.append((name, np.frombuffer(data, dtype="<f4").reshape(shape).copy()))
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after last block")
    return Checkpoint(
        architecture=arch_from_text(arch_text),
        parameters=ParameterSet(arrays),
        training_meta=TrainingMeta.from_text(meta_text),
        format_version=version,
    )
