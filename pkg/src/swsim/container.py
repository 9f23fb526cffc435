"""On-disk formats: SWSC weight container, raw tensor files, model spec files.

SWSC layout (little-endian)::

    "SWSC" | version u16 | layer count u16
    per layer: kind u8 | F C R S U V u32 | group_size u32 | elem_width u8
      conv:  per group: a u32 | offset u16[C] | r_pointer nibbles[R*C]
                        | index nibbles[a] | values int<elem_width>[group_size*a]
      fc:    entries u32 | row_starts u32[F+1] | index nibbles[entries]
             | values int<elem_width>[entries]
      pool:  no payload

Nibble arrays pack two 4-bit values per byte, low nibble first, padded to a
whole byte. Tensor files carry a 16-byte header: "SWTN", elem_width u8,
rank u8, reserved u16, four u16 extents; then row-major signed data.
"""

from __future__ import annotations

import io
import math
import struct
from pathlib import Path

import numpy as np
import yaml

from swsim.errors import FormatError
from swsim.nn_model import LayerKind, LayerSpec, ModelSpec, Tensor
from swsim.sparse_format import CompressedFc, CompressedGroup

SWSC_MAGIC = b"SWSC"
SWSC_VERSION = 1
TENSOR_MAGIC = b"SWTN"
KIND_CODES = {LayerKind.CONV: 0, LayerKind.FC: 1, LayerKind.MAXPOOL: 2}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}
_DTYPES = {8: "<i1", 16: "<i2", 32: "<i4"}


def pack_nibbles(vals) -> bytes:
    v = np.asarray(vals, dtype=np.uint8)
    if v.size and v.max() > 15:
        raise FormatError("nibble value above 15")
    if v.size % 2:
        v = np.append(v, 0)
    return (v[0::2] | (v[1::2] << 4)).astype(np.uint8).tobytes()


def unpack_nibbles(buf: bytes, count: int) -> np.ndarray:
    b = np.frombuffer(buf, dtype=np.uint8)
    out = np.empty(b.size * 2, dtype=np.int64)
    out[0::2] = b & 0xF
    out[1::2] = b >> 4
    return out[:count]


class _Reader:
    def __init__(self, data: bytes):
        self.buf = io.BytesIO(data)

    def take(self, n: int) -> bytes:
        b = self.buf.read(n)
        if len(b) != n:
            raise FormatError("container truncated")
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size), dtype=dtype).astype(np.int64)

    def nibbles(self, count: int) -> np.ndarray:
        return unpack_nibbles(self.take(math.ceil(count / 2)), count)


def dump_swsc(layers: list[LayerSpec], weights: list, elem_width: int = 16) -> bytes:
    if len(layers) != len(weights):
        raise FormatError("one weight entry per layer required")
    dt = _DTYPES[elem_width]
    out = [SWSC_MAGIC, struct.pack("<HH", SWSC_VERSION, len(layers))]
    for layer, w in zip(layers, weights):
        if layer.kind is LayerKind.CONV:
            gsize = w[0].group_size if w else 0
        elif layer.kind is LayerKind.FC:
            gsize = w.M
        else:
            gsize = 0
        out.append(struct.pack("<B6IIB", KIND_CODES[layer.kind], layer.F, layer.C, layer.R,
                               layer.S, layer.U, layer.V, gsize, elem_width))
        if layer.kind is LayerKind.CONV:
            for g in w:
                out.append(struct.pack("<I", g.a))
                out.append(g.offset.astype("<u2").tobytes())
                out.append(pack_nibbles(g.r_pointer))
                out.append(pack_nibbles(g.index))
                out.append(g.values.astype(dt).tobytes())
        elif layer.kind is LayerKind.FC:
            out.append(struct.pack("<I", w.entries))
            out.append(w.row_starts.astype("<u4").tobytes())
            out.append(pack_nibbles(w.index))
            out.append(w.values.astype(dt).tobytes())
    return b"".join(out)


def load_swsc(data: bytes) -> tuple[list[tuple], list, int]:
    """Returns (per-layer header tuples, per-layer weights, elem_width)."""
    rd = _Reader(data)
    if rd.take(4) != SWSC_MAGIC:
        raise FormatError("not an SWSC container")
    version, count = rd.unpack("<HH")
    if version != SWSC_VERSION:
        raise FormatError(f"unsupported SWSC version {version}")
    headers, weights, width = [], [], 16
    for _ in range(count):
        code, F, C, R, S, U, V, gsize, width = rd.unpack("<B6IIB")
        if code not in CODE_KINDS or width not in _DTYPES:
            raise FormatError(f"bad layer header (kind {code}, width {width})")
        kind = CODE_KINDS[code]
        headers.append((kind, F, C, R, S, U, V, gsize))
        dt = _DTYPES[width]
        if kind is LayerKind.CONV:
            groups = []
            for _ in range(math.ceil(F / gsize) if gsize else 0):
                (a,) = rd.unpack("<I")
                offset = rd.array("<u2", C)
                r_pointer = rd.nibbles(R * C)
                index = rd.nibbles(a)
                values = rd.array(dt, gsize * a).reshape(gsize, a)
                groups.append(CompressedGroup(gsize, C, R, index, r_pointer, offset, values))
            weights.append(groups)
        elif kind is LayerKind.FC:
            (entries,) = rd.unpack("<I")
            row_starts = rd.array("<u4", F + 1)
            index = rd.nibbles(entries)
            values = rd.array(dt, entries)
            weights.append(CompressedFc(gsize, index, values, row_starts))
        else:
            weights.append(None)
    if rd.buf.read(1):
        raise FormatError("trailing bytes after last layer")
    return headers, weights, width


def check_container(layers: list[LayerSpec], headers: list[tuple]) -> None:
    if len(layers) != len(headers):
        raise FormatError(f"container holds {len(headers)} layers, model has {len(layers)}")
    for k, (layer, h) in enumerate(zip(layers, headers)):
        want = (layer.kind, layer.F, layer.C, layer.R, layer.S, layer.U, layer.V)
        if tuple(h[:7]) != want:
            raise FormatError(f"layer {k}: container header {h[:7]} != model {want}")


def write_swsc(path, layers, weights, elem_width=16) -> None:
    Path(path).write_bytes(dump_swsc(layers, weights, elem_width))


def read_swsc(path):
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    return load_swsc(data)


def dump_tensor(t: Tensor) -> bytes:
    if t.data.ndim > 4:
        raise FormatError("tensor files hold rank <= 4")
    if any(d > 0xFFFF for d in t.shape):
        raise FormatError("tensor extent exceeds 65535")
    ext = list(t.shape) + [0] * (4 - t.data.ndim)
    head = TENSOR_MAGIC + struct.pack("<BBH4H", t.elem_width, t.data.ndim, 0, *ext)
    return head + t.data.astype(_DTYPES[t.elem_width]).tobytes()


def load_tensor(data: bytes) -> Tensor:
    if len(data) < 16 or data[:4] != TENSOR_MAGIC:
        raise FormatError("not a tensor file")
    width, rank, _, *ext = struct.unpack("<BBH4H", data[4:16])
    if width not in _DTYPES or rank > 4:
        raise FormatError("bad tensor header")
    shape = tuple(ext[:rank])
    arr = np.frombuffer(data[16:], dtype=_DTYPES[width])
    if arr.size != int(np.prod(shape)):
        raise FormatError(f"tensor payload of {arr.size} elements, header says {shape}")
    return Tensor(arr.reshape(shape).astype(np.int64), elem_width=width)


def write_tensor(path, t: Tensor) -> None:
    Path(path).write_bytes(dump_tensor(t))


def read_tensor(path) -> Tensor:
    try:
        return load_tensor(Path(path).read_bytes())
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e


_LAYER_KEYS = {"F", "C", "U", "V", "R", "S", "relu", "pad", "out_shift"}


def parse_model(doc: dict) -> ModelSpec:
    """Build a ModelSpec from a parsed YAML/JSON document.

    Layers list ``kind`` (conv/fc/maxpool) plus LayerSpec fields. Maxpool
    entries may use ``window``/``stride`` and ``C`` in place of R/S/F.
    """
    if not isinstance(doc, dict) or "layers" not in doc:
        raise FormatError("model spec needs a 'layers' list")
    layers, dens = [], []
    for k, entry in enumerate(doc["layers"]):
        entry = dict(entry)
        try:
            kind = LayerKind(str(entry.pop("kind")).lower())
            density = entry.pop("density", None)
            if kind is LayerKind.MAXPOOL:
                entry.setdefault("R", entry.pop("window", None))
                entry.setdefault("S", entry.pop("stride", None))
                entry.setdefault("F", entry.get("C"))
            unknown = set(entry) - _LAYER_KEYS
            if unknown:
                raise FormatError(f"layer {k}: unknown keys {sorted(unknown)}")
            layers.append(LayerSpec(kind, **entry))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, FormatError):
                raise
            raise FormatError(f"layer {k}: {e}") from e
        dens.append(None if density is None else float(density))
    return ModelSpec(layers, dens, name=str(doc.get("name", "model")))


def read_model(path) -> ModelSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise FormatError(f"{path}: {e}") from e
    return parse_model(doc)
