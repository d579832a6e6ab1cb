"""On-disk model container, whole-model quantization, and MD5 integrity.

Container layout (all integers little-endian):

    magic   4 bytes  "STLM"
    version u32      currently 1
    kind    u32      0 = model, 1 = adapter
    cfglen  u32      length of the config block
    config  bytes    canonical JSON (sorted keys, compact separators)
    count   u32      tensor table entries
    per entry:
        namelen u16, name bytes (UTF-8)
        dtype   u8   0 = f32, 1 = f16, 2 = q4
        ndim    u8, dims u32 each
        offset  u64  absolute file offset of the payload
        nbytes  u64  payload length
    payload region: each tensor starts at a 32-byte-aligned offset,
        zero padding between entries
    footer  16 bytes MD5 of every preceding byte

Offsets are strictly increasing and non-overlapping; a parsed file
re-serializes to identical bytes. q4 payloads obey the 18-bytes-per-32-
weights law. Adapters reuse the same container with kind=1, config fields
{"alpha", "rank"}, and tensors named "<target>.A" / "<target>.B".
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AlreadyQuantized, CorruptFile, FormatError, ShapeError
from .lora import LoraAdapter
from .qtensor import BLOCK_BYTES, BLOCK_SIZE, QTensor, quantize_tensor
from .transformer import ModelConfig, ModelWeights

MAGIC = b"STLM"
FORMAT_VERSION = 1
KIND_MODEL = 0
KIND_ADAPTER = 1
ALIGNMENT = 32
FOOTER_BYTES = 16

DTYPE_F32 = 0
DTYPE_F16 = 1
DTYPE_Q4 = 2
DTYPE_NAMES = {DTYPE_F32: "f32", DTYPE_F16: "f16", DTYPE_Q4: "q4"}


def md5_hex(data: bytes) -> str:
    """Standard MD5 digest, lowercase hex."""
    return hashlib.md5(data).hexdigest()


def md5_file(path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dtype_of(value) -> int:
    if isinstance(value, QTensor):
        return DTYPE_Q4
    arr = np.asarray(value)
    if arr.dtype == np.float16:
        return DTYPE_F16
    if arr.dtype == np.float32:
        return DTYPE_F32
    raise FormatError(f"unsupported tensor dtype {arr.dtype}")


def payload_nbytes(dims: tuple[int, ...], dtype: int) -> int:
    n = 1
    for dim in dims:
        n *= dim
    if dtype == DTYPE_F32:
        return 4 * n
    if dtype == DTYPE_F16:
        return 2 * n
    if dtype == DTYPE_Q4:
        return n // BLOCK_SIZE * BLOCK_BYTES
    raise FormatError(f"unknown dtype code {dtype}")


def _tensor_payload(value) -> bytes:
    if isinstance(value, QTensor):
        return value.to_bytes()
    arr = np.asarray(value)
    kind = "<f4" if arr.dtype == np.float32 else "<f2"
    return np.ascontiguousarray(arr).astype(kind).tobytes()


def _align(offset: int) -> int:
    return (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


@dataclass
class FileSummary:
    path: str
    kind: int
    tensor_count: int
    file_bytes: int
    bytes_by_dtype: dict[str, int]


def _serialize(tensors: dict[str, object], config_json: bytes, kind: int) -> bytes:
    entries = []
    table_size = 4
    for name, value in tensors.items():
        raw_name = name.encode("utf-8")
        dims = tuple(int(x) for x in value.shape)
        dtype = _dtype_of(value)
        table_size += 2 + len(raw_name) + 1 + 1 + 4 * len(dims) + 8 + 8
        entries.append((raw_name, dtype, dims, value))

    header = MAGIC + struct.pack("<III", FORMAT_VERSION, kind, len(config_json)) + config_json
    offset = len(header) + table_size
    table = struct.pack("<I", len(entries))
    placed = []
    for raw_name, dtype, dims, value in entries:
        payload = _tensor_payload(value)
        expected = payload_nbytes(dims, dtype)
        if len(payload) != expected:
            raise FormatError(f"{raw_name!r}: payload {len(payload)} != expected {expected}")
        offset = _align(offset)
        table += struct.pack("<H", len(raw_name)) + raw_name
        table += struct.pack("<BB", dtype, len(dims))
        table += struct.pack(f"<{len(dims)}I", *dims)
        table += struct.pack("<QQ", offset, len(payload))
        placed.append((offset, payload))
        offset += len(payload)

    out = bytearray(header + table)
    for at, payload in placed:
        out.extend(b"\x00" * (at - len(out)))
        out.extend(payload)
    out.extend(hashlib.md5(bytes(out)).digest())
    return bytes(out)


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_file(path, blob: bytes, kind: int, tensors: dict) -> FileSummary:
    with open(path, "wb") as f:
        f.write(blob)
    by_dtype: dict[str, int] = {}
    for value in tensors.values():
        code = _dtype_of(value)
        name = DTYPE_NAMES[code]
        by_dtype[name] = by_dtype.get(name, 0) + payload_nbytes(tuple(value.shape), code)
    return FileSummary(
        path=str(path),
        kind=kind,
        tensor_count=len(tensors),
        file_bytes=len(blob),
        bytes_by_dtype=by_dtype,
    )


def write_model(weights: ModelWeights, config: ModelConfig, path) -> FileSummary:
    blob = _serialize(weights.tensors, _canonical_json(config.to_dict()), KIND_MODEL)
    return _write_file(path, blob, KIND_MODEL, weights.tensors)


def write_adapter(adapter: LoraAdapter, path) -> FileSummary:
    tensors: dict[str, np.ndarray] = {}
    for name, (a, b) in adapter.targets.items():
        tensors[f"{name}.A"] = np.asarray(a, dtype=np.float32)
        tensors[f"{name}.B"] = np.asarray(b, dtype=np.float32)
    cfg = _canonical_json({"alpha": adapter.alpha, "rank": adapter.rank})
    blob = _serialize(tensors, cfg, KIND_ADAPTER)
    return _write_file(path, blob, KIND_ADAPTER, tensors)


def _parse(blob: bytes, path) -> tuple[int, dict, dict[str, object]]:
    if len(blob) < len(MAGIC) + 12 + FOOTER_BYTES:
        raise CorruptFile(f"{path}: truncated header")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, kind, cfglen = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    body, footer = blob[:-FOOTER_BYTES], blob[-FOOTER_BYTES:]
    if hashlib.md5(body).digest() != footer:
        raise CorruptFile(f"{path}: checksum footer mismatch")
    at = 16
    try:
        config = json.loads(blob[at : at + cfglen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad config block: {e}") from None
    at += cfglen
    (count,) = struct.unpack_from("<I", blob, at)
    at += 4
    tensors: dict[str, object] = {}
    prev_end = 0
    for _ in range(count):
        (namelen,) = struct.unpack_from("<H", blob, at)
        at += 2
        name = blob[at : at + namelen].decode("utf-8")
        at += namelen
        dtype, ndim = struct.unpack_from("<BB", blob, at)
        at += 2
        dims = struct.unpack_from(f"<{ndim}I", blob, at)
        at += 4 * ndim
        offset, nbytes = struct.unpack_from("<QQ", blob, at)
        at += 16
        if offset < prev_end or offset % ALIGNMENT != 0:
            raise FormatError(f"{path}: tensor '{name}' offset out of order")
        if offset + nbytes > len(body):
            raise CorruptFile(f"{path}: tensor '{name}' payload beyond file end")
        if nbytes != payload_nbytes(dims, dtype):
            raise CorruptFile(f"{path}: tensor '{name}' payload length mismatch")
        raw = blob[offset : offset + nbytes]
        if dtype == DTYPE_Q4:
            if len(dims) != 2:
                raise FormatError(f"{path}: q4 tensor '{name}' must be 2-D")
            tensors[name] = QTensor.from_bytes(dims[0], dims[1], raw)
        elif dtype == DTYPE_F16:
            tensors[name] = np.frombuffer(raw, dtype="<f2").astype(np.float16).reshape(dims)
        else:
            tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
        prev_end = offset + nbytes
    return kind, config, tensors


def read_model(path) -> tuple[ModelWeights, ModelConfig]:
    with open(path, "rb") as f:
        blob = f.read()
    kind, config, tensors = _parse(blob, path)
    if kind != KIND_MODEL:
        raise FormatError(f"{path}: not a model container (kind={kind})")
    return ModelWeights(tensors), ModelConfig.from_dict(config)


def read_adapter(path) -> LoraAdapter:
    with open(path, "rb") as f:
        blob = f.read()
    kind, config, tensors = _parse(blob, path)
    if kind != KIND_ADAPTER:
        raise FormatError(f"{path}: not an adapter container (kind={kind})")
    targets: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name in tensors:
        if name.endswith(".A"):
            stem = name[:-2]
            if f"{stem}.B" not in tensors:
                raise FormatError(f"{path}: adapter target '{stem}' missing B matrix")
            targets[stem] = (
                np.asarray(tensors[name], dtype=np.float32),
                np.asarray(tensors[f"{stem}.B"], dtype=np.float32),
            )
    return LoraAdapter(rank=int(config["rank"]), alpha=float(config["alpha"]), targets=targets)


@dataclass
class TensorSizeEntry:
    name: str
    dims: tuple[int, ...]
    src_dtype: str
    dst_dtype: str
    src_bytes: int
    dst_bytes: int


@dataclass
class SizeReport:
    src_path: str
    dst_path: str
    src_file_bytes: int
    dst_file_bytes: int
    tensors: list[TensorSizeEntry] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.dst_file_bytes / self.src_file_bytes

    def to_dict(self) -> dict:
        return {
            "src_path": self.src_path,
            "dst_path": self.dst_path,
            "src_file_bytes": self.src_file_bytes,
            "dst_file_bytes": self.dst_file_bytes,
            "ratio": self.ratio,
            "tensors": [
                {
                    "name": t.name,
                    "dims": list(t.dims),
                    "src_dtype": t.src_dtype,
                    "dst_dtype": t.dst_dtype,
                    "src_bytes": t.src_bytes,
                    "dst_bytes": t.dst_bytes,
                }
                for t in self.tensors
            ],
        }

    def format_table(self) -> str:
        width = max([len(t.name) for t in self.tensors] + [6])
        lines = [f"{'tensor':<{width}}  {'shape':>14}  {'src':>12}  {'dst':>12}"]
        for t in self.tensors:
            shape = "x".join(str(d) for d in t.dims)
            lines.append(
                f"{t.name:<{width}}  {shape:>14}  "
                f"{t.src_bytes:>8} {t.src_dtype:<3}  {t.dst_bytes:>8} {t.dst_dtype:<3}"
            )
        lines.append(
            f"total file bytes: {self.src_file_bytes} -> {self.dst_file_bytes} "
            f"(ratio {self.ratio:.4f})"
        )
        return "\n".join(lines)


def quantize_model(src_path, dst_path) -> SizeReport:
    """Convert a dense model file to q4: 2-D tensors quantized, 1-D kept f16."""
    import os

    weights, config = read_model(src_path)
    out = ModelWeights()
    report = SizeReport(
        src_path=str(src_path),
        dst_path=str(dst_path),
        src_file_bytes=os.path.getsize(src_path),
        dst_file_bytes=0,
    )
    for name, value in weights.tensors.items():
        if isinstance(value, QTensor):
            raise AlreadyQuantized(f"{src_path}: tensor '{name}' is already q4")
        arr = np.asarray(value)
        dims = tuple(arr.shape)
        src_dtype = DTYPE_NAMES[_dtype_of(arr)]
        if arr.ndim == 2:
            if dims[1] % BLOCK_SIZE != 0:
                raise ShapeError(
                    f"tensor '{name}': cols {dims[1]} not a multiple of {BLOCK_SIZE}"
                )
            converted = quantize_tensor(arr.astype(np.float32))
            dst_dtype = "q4"
        elif arr.ndim == 1:
            converted = arr.astype(np.float16)
            dst_dtype = "f16"
        else:
            raise ShapeError(f"tensor '{name}': unsupported rank {arr.ndim}")
        out[name] = converted
        report.tensors.append(
            TensorSizeEntry(
                name=name,
                dims=dims,
                src_dtype=src_dtype,
                dst_dtype=dst_dtype,
                src_bytes=payload_nbytes(dims, _dtype_of(arr)),
                dst_bytes=payload_nbytes(dims, _dtype_of(converted)),
            )
        )
    write_model(out, config, dst_path)
    report.dst_file_bytes = os.path.getsize(dst_path)
    return report


def inspect_model(path) -> dict:
    """Header, config, and tensor table of a container, as plain data."""
    with open(path, "rb") as f:
        blob = f.read()
    kind, config, tensors = _parse(blob, path)
    table = []
    for name, value in tensors.items():
        code = _dtype_of(value)
        table.append(
            {
                "name": name,
                "dims": [int(x) for x in value.shape],
                "dtype": DTYPE_NAMES[code],
                "payload_bytes": payload_nbytes(tuple(value.shape), code),
            }
        )
    return {
        "path": str(path),
        "kind": "adapter" if kind == KIND_ADAPTER else "model",
        "format_version": FORMAT_VERSION,
        "config": config,
        "file_bytes": len(blob),
        "tensors": table,
    }
