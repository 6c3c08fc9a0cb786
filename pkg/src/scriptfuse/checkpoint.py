"""Binary checkpoint serialization for networks and fusion heads.

Layout, all little-endian:

* 8-byte magic ``SFUSECKP``, u32 format version (currently 1)
* u8 kind: 0 = per-domain network, 1 = fusion head
* kind 0: 1 domain byte (``s``/``f``), u32 input size, u32 depth
* kind 1: u32 fused feature length, u32 selector byte length, selector UTF-8
* training metadata: i64 seed, u32 epochs completed, u8 history flag,
  and if the flag is 1: u32 epoch, f64 loss, f64 accuracy
* u32 block count, then per parameter block: u32 name length, UTF-8 name,
  u32 rank, u64 extents, raw float32 values

Loading rebuilds the network from its recorded identity and restores
parameters bitwise; mismatched magic, version, or network identity is
rejected with the failing field and byte offset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .fsio import atomic_write_bytes
from .pipeline import (
    EpochStats,
    Network,
    NetworkSpec,
    build_fusion_head,
    build_network,
)

MAGIC = b"SFUSECKP"
VERSION = 1
_KIND_CNN = 0
_KIND_FUSION = 1


class CheckpointError(ValueError):
    """Raised for malformed or mismatched checkpoint files."""


@dataclass
class TrainMeta:
    seed: int
    epochs_completed: int
    final: EpochStats | None


def _pack_meta(seed: int, history, epochs: int | None) -> bytes:
    history = list(history or ())
    if epochs is None:
        epochs = len(history)
    out = struct.pack("<qI", int(seed), epochs)
    if history:
        last = history[-1]
        out += struct.pack("<BIdd", 1, last.epoch, last.loss, last.accuracy)
    else:
        out += struct.pack("<B", 0)
    return out


def save_checkpoint(network: Network, path, seed: int = 0,
                    history=(), epochs: int | None = None) -> None:
    """Serialize ``network`` and its training metadata atomically.

    ``epochs`` defaults to ``len(history)``; pass it explicitly when
    re-serializing a loaded checkpoint, which keeps only the final entry.
    """
    parts = [MAGIC, struct.pack("<I", VERSION)]
    if network.spec is not None:
        spec = network.spec
        parts.append(struct.pack("<B", _KIND_CNN))
        parts.append(spec.domain.encode("ascii"))
        parts.append(struct.pack("<II", spec.input_size, spec.depth))
    else:
        label = (network.selector_label or "all").encode("utf-8")
        parts.append(struct.pack("<B", _KIND_FUSION))
        parts.append(struct.pack("<II", network.feature_len, len(label)))
        parts.append(label)
    parts.append(_pack_meta(seed, history, epochs))
    params = network.params()
    parts.append(struct.pack("<I", len(params)))
    for name, value in params.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}Q", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, field: str) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint {self.path}: needed {n} bytes for "
                f"{field} at offset {self.offset}, have "
                f"{len(self.data) - self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str, field: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), field))


def load_checkpoint(path, expected_spec: NetworkSpec | None = None) -> Network:
    """Rebuild a network from ``path``; parameters are restored bitwise.

    ``expected_spec`` guards against loading a checkpoint as the wrong
    network.  The returned network carries ``train_meta``.
    """
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    magic = reader.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(
            f"bad magic in {path} at offset 0: expected {MAGIC!r}, got {magic!r}")
    (version,) = reader.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} in {path} at offset "
            f"{len(MAGIC)}; this build reads version {VERSION}")
    (kind,) = reader.unpack("<B", "kind")
    if kind == _KIND_CNN:
        domain = reader.take(1, "domain").decode("ascii", errors="replace")
        size, depth = reader.unpack("<II", "input size/depth")
        try:
            spec = NetworkSpec(domain, size, depth)
        except ValueError as exc:
            raise CheckpointError(f"invalid network identity in {path}: {exc}")
        if expected_spec is not None and spec != expected_spec:
            raise CheckpointError(
                f"checkpoint {path} holds network {spec}, refusing to load "
                f"as {expected_spec}")
        meta = _read_meta(reader)
        network = build_network(spec, seed=None)
    elif kind == _KIND_FUSION:
        feature_len, label_len = reader.unpack("<II", "fusion header")
        label = reader.take(label_len, "selector label").decode("utf-8")
        if expected_spec is not None:
            raise CheckpointError(
                f"checkpoint {path} holds a fusion head, refusing to load "
                f"as network {expected_spec}")
        meta = _read_meta(reader)
        network = build_fusion_head(feature_len, None, label)
    else:
        raise CheckpointError(
            f"unknown checkpoint kind {kind} in {path} at offset "
            f"{reader.offset - 1}")
    values = _read_blocks(reader)
    try:
        network.set_params(values)
    except ValueError as exc:
        raise CheckpointError(f"parameter mismatch in {path}: {exc}")
    if reader.offset != len(reader.data):
        raise CheckpointError(
            f"trailing garbage in {path}: {len(reader.data) - reader.offset} "
            f"bytes past offset {reader.offset}")
    network.train_meta = meta
    return network


def _read_meta(reader: _Reader) -> TrainMeta:
    seed, epochs = reader.unpack("<qI", "training metadata")
    (flag,) = reader.unpack("<B", "history flag")
    final = None
    if flag == 1:
        epoch, loss, acc = reader.unpack("<Idd", "final history entry")
        final = EpochStats(epoch, loss, acc)
    elif flag != 0:
        raise CheckpointError(
            f"invalid history flag {flag} in {reader.path} at offset "
            f"{reader.offset - 1}")
    return TrainMeta(seed, epochs, final)


def _read_blocks(reader: _Reader) -> dict[str, np.ndarray]:
    (count,) = reader.unpack("<I", "block count")
    values: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<I", "block name length")
        name = reader.take(name_len, "block name").decode("utf-8")
        (rank,) = reader.unpack("<I", f"rank of {name}")
        if rank > 8:
            raise CheckpointError(
                f"implausible rank {rank} for block {name} in {reader.path} "
                f"at offset {reader.offset - 4}")
        shape = reader.unpack(f"<{rank}Q", f"extents of {name}")
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = reader.take(4 * n, f"values of {name}")
        values[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return values
