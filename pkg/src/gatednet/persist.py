"""Bit-exact checkpoint files for base parameters and gate banks.

Layout: magic "GNC1" | header_len (u32 LE) | UTF-8 JSON header | payload of
little-endian float32 tensors concatenated in manifest order.  Gate files
carry the FNV-1a 64-bit digest of the base payload they were trained
against, so a stale or edited base is rejected at pairing time.  Saving is
canonical (fixed tensor and JSON key order), so save -> load -> save
round-trips byte for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import NormStats, Taxonomy
from .errors import (
    CorruptCheckpointError,
    IncompatibleBaseError,
    KindMismatchError,
    NotACheckpointError,
    ShapeError,
)
from .ndcore import fnv1a64
from .nn import BaseParams, GateBank

MAGIC = b"GNC1"
FORMAT_VERSION = 1

KIND_BASE = "base"
KIND_GATES = "gates"


@dataclass
class BaseCheckpoint:
    params: BaseParams
    norm_stats: NormStats
    taxonomy: Taxonomy
    layer_sizes: tuple[int, ...]
    digest: str  # hex FNV-1a of the payload


@dataclass
class GateCheckpoint:
    task: str
    biases: list[np.ndarray]  # per hidden layer
    base_digest: str
    taxonomy: Taxonomy
    layer_sizes: tuple[int, ...]


def _payload_and_manifest(named_tensors) -> tuple[bytes, list[dict]]:
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in named_tensors:
        data = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
        manifest.append(
            {"name": name, "shape": list(tensor.shape), "offset": offset, "length": len(data)}
        )
        chunks.append(data)
        offset += len(data)
    return b"".join(chunks), manifest


def _assemble(header: dict, payload: bytes) -> bytes:
    raw = json.dumps(header, ensure_ascii=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + len(raw).to_bytes(4, "little") + raw + payload


def _base_named_tensors(params: BaseParams):
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        yield f"w{i}", w
        yield f"b{i}", b


def encode_base(params: BaseParams, stats: NormStats, taxonomy: Taxonomy) -> bytes:
    payload, manifest = _payload_and_manifest(_base_named_tensors(params))
    header = {
        "format_version": FORMAT_VERSION,
        "kind": KIND_BASE,
        "layer_sizes": list(params.layer_sizes),
        "class_names": list(taxonomy.class_names),
        "category_map": taxonomy.to_category_map(),
        "norm_stats": {"mean": stats.mean, "std": stats.std},
        "tensor_manifest": manifest,
    }
    return _assemble(header, payload)


def encode_gates(
    task: str,
    biases: list[np.ndarray],
    base_digest: str,
    taxonomy: Taxonomy,
    layer_sizes,
) -> bytes:
    named = [(f"gate{i}", b) for i, b in enumerate(biases)]
    payload, manifest = _payload_and_manifest(named)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": KIND_GATES,
        "layer_sizes": list(layer_sizes),
        "class_names": list(taxonomy.class_names),
        "category_map": taxonomy.to_category_map(),
        "task": task,
        "base_digest": base_digest,
        "tensor_manifest": manifest,
    }
    return _assemble(header, payload)


def payload_digest(blob: bytes) -> str:
    """Hex FNV-1a-64 of the payload portion of an encoded checkpoint."""
    _, payload = _split(blob)
    return f"{fnv1a64(payload):016x}"


def _split(blob: bytes) -> tuple[dict, bytes]:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise NotACheckpointError("not a checkpoint: bad magic bytes")
    header_len = int.from_bytes(blob[4:8], "little")
    if len(blob) < 8 + header_len:
        raise CorruptCheckpointError("truncated header")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"unreadable header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise NotACheckpointError(
            f"unsupported format_version {header.get('format_version')!r}"
        )
    return header, blob[8 + header_len :]


def _tensors_from(header: dict, payload: bytes) -> dict[str, np.ndarray]:
    manifest = header["tensor_manifest"]
    expected = 0
    for entry in manifest:
        if entry["offset"] != expected:
            raise CorruptCheckpointError(
                f"manifest gap or overlap at tensor {entry['name']!r}"
            )
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        if entry["length"] != count * 4:
            raise CorruptCheckpointError(
                f"tensor {entry['name']!r}: length {entry['length']} does not match shape"
            )
        expected += entry["length"]
    if expected != len(payload):
        raise CorruptCheckpointError(
            f"payload is {len(payload)} bytes, manifest expects {expected}"
        )
    out = {}
    for entry in manifest:
        raw = payload[entry["offset"] : entry["offset"] + entry["length"]]
        out[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
    return out


def _taxonomy_from(header: dict) -> Taxonomy:
    return Taxonomy.from_category_map(header["class_names"], header["category_map"])


def decode(blob: bytes) -> BaseCheckpoint | GateCheckpoint:
    header, payload = _split(blob)
    tensors = _tensors_from(header, payload)
    layer_sizes = tuple(header["layer_sizes"])
    taxonomy = _taxonomy_from(header)
    if header["kind"] == KIND_BASE:
        n_layers = len(layer_sizes) - 1
        weights = [tensors[f"w{i}"] for i in range(n_layers)]
        biases = [tensors[f"b{i}"] for i in range(n_layers)]
        params = BaseParams(weights, biases)
        if params.layer_sizes != layer_sizes:
            raise ShapeError(
                f"tensor shapes {params.layer_sizes} disagree with header {layer_sizes}"
            )
        stats = NormStats(**header["norm_stats"])
        return BaseCheckpoint(
            params=params,
            norm_stats=stats,
            taxonomy=taxonomy,
            layer_sizes=layer_sizes,
            digest=f"{fnv1a64(payload):016x}",
        )
    if header["kind"] == KIND_GATES:
        n_hidden = len(layer_sizes) - 2
        biases = [tensors[f"gate{i}"] for i in range(n_hidden)]
        widths = tuple(b.shape[0] for b in biases)
        if widths != layer_sizes[1:-1]:
            raise ShapeError(f"gate widths {widths} disagree with header {layer_sizes}")
        return GateCheckpoint(
            task=header["task"],
            biases=biases,
            base_digest=header["base_digest"],
            taxonomy=taxonomy,
            layer_sizes=layer_sizes,
        )
    raise NotACheckpointError(f"unknown checkpoint kind {header['kind']!r}")


def load_base(path: str | os.PathLike) -> BaseCheckpoint:
    ckpt = decode(_read(path))
    if not isinstance(ckpt, BaseCheckpoint):
        raise KindMismatchError(f"{path}: expected a base checkpoint, found gates")
    return ckpt


def load_gates(path: str | os.PathLike) -> GateCheckpoint:
    ckpt = decode(_read(path))
    if not isinstance(ckpt, GateCheckpoint):
        raise KindMismatchError(f"{path}: expected a gates checkpoint, found base")
    return ckpt


def _read(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def save(path: str | os.PathLike, blob: bytes) -> None:
    with open(path, "wb") as f:
        f.write(blob)


def build_gate_bank(base: BaseCheckpoint, gate_ckpts: list[GateCheckpoint]) -> GateBank:
    """Pair gate checkpoints with their base, verifying digests and shapes."""
    tasks = []
    biases = {}
    for gc in gate_ckpts:
        if gc.base_digest != base.digest:
            raise IncompatibleBaseError(
                f"gates for {gc.task!r} were trained against base {gc.base_digest}, "
                f"not {base.digest}"
            )
        if gc.layer_sizes != base.layer_sizes:
            raise ShapeError(
                f"gates for {gc.task!r} expect layers {gc.layer_sizes}, "
                f"base has {base.layer_sizes}"
            )
        if gc.task in biases:
            raise ValueError(f"duplicate gate checkpoint for task {gc.task!r}")
        tasks.append(gc.task)
        biases[gc.task] = [b.copy() for b in gc.biases]
    return GateBank(tasks, biases)
