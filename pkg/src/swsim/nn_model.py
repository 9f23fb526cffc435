"""Layer/tensor types and the dense fixed-point reference executor.

The reference functions here are the correctness oracle for the cycle-level
simulator. They are written in plain loop order (c, kh, kw per output) with a
32-bit saturating accumulator, so the simulator can be compared bit-for-bit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from swsim.errors import ShapeMismatch

ALLOWED_WIDTHS = (8, 16, 32)


class LayerKind(enum.Enum):
    CONV = "conv"
    FC = "fc"
    MAXPOOL = "maxpool"


@dataclass(frozen=True)
class LayerSpec:
    """One network layer.

    For conv layers the input is expected pre-padded: ``H = (U-1)*S + R``.
    ``pad`` and ``out_shift`` only matter when layers are chained: ``pad``
    zero-pads the incoming activations on every side, ``out_shift`` is the
    arithmetic right shift applied before the output is saturated back to
    the activation width for the next layer.
    """

    kind: LayerKind
    F: int
    C: int
    U: int = 1
    V: int = 1
    R: int = 1
    S: int = 1
    relu: bool = False
    pad: int = 0
    out_shift: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", LayerKind(self.kind))
        for name in ("F", "C", "U", "V", "R", "S"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.pad < 0 or self.out_shift < 0:
            raise ValueError("pad and out_shift must be non-negative")
        if self.kind is LayerKind.FC and (self.U, self.V, self.R, self.S) != (1, 1, 1, 1):
            raise ValueError("FC layers require U=V=R=S=1")
        if self.kind is LayerKind.MAXPOOL and self.F != self.C:
            raise ValueError("maxpool layers keep the channel count (F == C)")

    @classmethod
    def conv(cls, F, C, U, V, R, S=1, **kw) -> "LayerSpec":
        return cls(LayerKind.CONV, F, C, U, V, R, S, **kw)

    @classmethod
    def fc(cls, F, C, **kw) -> "LayerSpec":
        return cls(LayerKind.FC, F, C, **kw)

    @classmethod
    def maxpool(cls, C, U, V, window, stride, **kw) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL, C, C, U, V, window, stride, **kw)

    @property
    def H(self) -> int:
        return (self.U - 1) * self.S + self.R

    @property
    def W(self) -> int:
        return (self.V - 1) * self.S + self.R

    @property
    def input_shape(self) -> tuple:
        if self.kind is LayerKind.FC:
            return (self.C,)
        return (self.C, self.H, self.W)

    @property
    def output_shape(self) -> tuple:
        if self.kind is LayerKind.FC:
            return (self.F,)
        return (self.F, self.U, self.V)

    @property
    def weight_shape(self) -> tuple:
        if self.kind is LayerKind.CONV:
            return (self.F, self.C, self.R, self.R)
        if self.kind is LayerKind.FC:
            return (self.F, self.C)
        return ()

    @property
    def dense_macs(self) -> int:
        if self.kind is LayerKind.MAXPOOL:
            return 0
        return self.F * self.C * self.R * self.R * self.U * self.V


def signed_range(width: int) -> tuple[int, int]:
    return -(1 << (width - 1)), (1 << (width - 1)) - 1


@dataclass(frozen=True)
class Tensor:
    """Signed fixed-point tensor. ``data`` is held as an int64 ndarray."""

    data: np.ndarray
    elem_width: int = 16

    def __post_init__(self):
        if self.elem_width not in ALLOWED_WIDTHS:
            raise ValueError(f"elem_width must be one of {ALLOWED_WIDTHS}")
        arr = np.asarray(self.data)
        if arr.dtype.kind not in "iu" and arr.size:
            raise TypeError("tensor data must be integer")
        arr = arr.astype(np.int64)
        lo, hi = signed_range(self.elem_width)
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise ValueError(f"tensor values exceed signed {self.elem_width}-bit range")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def numel(self) -> int:
        return int(self.data.size)

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class FixedPointRules:
    """Products are full width (A+B bits); accumulation saturates at acc_width."""

    mul_width: int = 32
    acc_width: int = 32
    acc_mode: str = "saturate"

    def __post_init__(self):
        if self.acc_mode != "saturate":
            raise ValueError("only saturating accumulation is supported")

    @property
    def acc_min(self) -> int:
        return signed_range(self.acc_width)[0]

    @property
    def acc_max(self) -> int:
        return signed_range(self.acc_width)[1]

    def saturate(self, x):
        return np.clip(x, self.acc_min, self.acc_max)


DEFAULT_RULES = FixedPointRules()


def _check_shape(name, got, want):
    if tuple(got) != tuple(want):
        raise ShapeMismatch(f"{name}: expected shape {tuple(want)}, got {tuple(got)}")


def conv_reference(layer: LayerSpec, ifmap: Tensor, kernels: Tensor,
                   rules: FixedPointRules = DEFAULT_RULES) -> Tensor:
    if layer.kind is not LayerKind.CONV:
        raise ShapeMismatch("conv_reference needs a conv layer")
    _check_shape("ifmap", ifmap.shape, layer.input_shape)
    _check_shape("kernels", kernels.shape, layer.weight_shape)
    X, W = ifmap.data, kernels.data
    U, V, S = layer.U, layer.V, layer.S
    acc = np.zeros((layer.F, U, V), dtype=np.int64)
    # one saturating step per (c, kh, kw) keeps per-output accumulation order
    for c in range(layer.C):
        for kh in range(layer.R):
            for kw in range(layer.R):
                win = X[c, kh:kh + (U - 1) * S + 1:S, kw:kw + (V - 1) * S + 1:S]
                acc = rules.saturate(acc + W[:, c, kh, kw][:, None, None] * win[None])
    if layer.relu:
        acc = np.maximum(acc, 0)
    return Tensor(acc, elem_width=rules.acc_width)


def fc_reference(wmat: Tensor, ivec: Tensor, relu: bool = False,
                 rules: FixedPointRules = DEFAULT_RULES) -> Tensor:
    if wmat.data.ndim != 2 or ivec.data.ndim != 1 or wmat.shape[1] != ivec.shape[0]:
        raise ShapeMismatch(f"fc: weights {wmat.shape} vs input {ivec.shape}")
    W, x = wmat.data, ivec.data
    acc = np.zeros(W.shape[0], dtype=np.int64)
    for c in range(W.shape[1]):
        acc = rules.saturate(acc + W[:, c] * x[c])
    if relu:
        acc = np.maximum(acc, 0)
    return Tensor(acc, elem_width=rules.acc_width)


def maxpool_reference(ifmap: Tensor, window: int, stride: int) -> Tensor:
    if ifmap.data.ndim != 3:
        raise ShapeMismatch("maxpool expects a (C, H, W) tensor")
    C, H, W = ifmap.shape
    if H < window or W < window or (H - window) % stride or (W - window) % stride:
        raise ShapeMismatch(f"{H}x{W} input does not tile into {window}/{stride} windows")
    U = (H - window) // stride + 1
    V = (W - window) // stride + 1
    X = ifmap.data
    out = np.full((C, U, V), np.iinfo(np.int64).min, dtype=np.int64)
    for kh in range(window):
        for kw in range(window):
            out = np.maximum(out, X[:, kh:kh + (U - 1) * stride + 1:stride,
                                    kw:kw + (V - 1) * stride + 1:stride])
    return Tensor(out, elem_width=ifmap.elem_width)


def zero_pad(t: Tensor, pad: int) -> Tensor:
    if pad == 0:
        return t
    return Tensor(np.pad(t.data, ((0, 0), (pad, pad), (pad, pad))), t.elem_width)


def requantize(t: Tensor, shift: int, width: int) -> Tensor:
    """Arithmetic right shift, then saturate to ``width`` signed bits."""
    lo, hi = signed_range(width)
    return Tensor(np.clip(t.data >> shift, lo, hi), elem_width=width)


def reference_network(layers: list[LayerSpec], weights: list, x: Tensor,
                      act_width: int = 16) -> list[Tensor]:
    """Run the dense oracle over a layer chain; returns every layer's output.

    ``weights[k]`` is the dense weight Tensor of layer k (None for pooling).
    Outputs of all but the last layer are requantized to ``act_width``.
    """
    outs = []
    cur = x
    for k, layer in enumerate(layers):
        if layer.kind is LayerKind.CONV:
            y = conv_reference(layer, zero_pad(cur, layer.pad), weights[k])
        elif layer.kind is LayerKind.FC:
            y = fc_reference(weights[k], Tensor(cur.flat(), cur.elem_width), relu=layer.relu)
        else:
            y = maxpool_reference(zero_pad(cur, layer.pad), layer.R, layer.S)
        if k < len(layers) - 1 and layer.kind is not LayerKind.MAXPOOL:
            y = requantize(y, layer.out_shift, act_width)
        outs.append(y)
        cur = y
    return outs


@dataclass
class ModelSpec:
    """Ordered layer list plus optional per-layer fixture densities."""

    layers: list[LayerSpec]
    densities: list[float | None] = field(default_factory=list)
    name: str = "model"

    def __post_init__(self):
        if not self.densities:
            self.densities = [None] * len(self.layers)
        check_chain(self.layers)


def check_chain(layers: list[LayerSpec]) -> None:
    for k in range(1, len(layers)):
        prev, nxt = layers[k - 1], layers[k]
        out = prev.output_shape
        if nxt.kind is LayerKind.FC:
            if int(np.prod(out)) != nxt.C:
                raise ShapeMismatch(f"layer {k}: FC expects {nxt.C} inputs, previous yields {out}")
            continue
        if len(out) != 3:
            raise ShapeMismatch(f"layer {k}: spatial layer after FC output {out}")
        want = (nxt.C, nxt.H - 2 * nxt.pad, nxt.W - 2 * nxt.pad)
        if tuple(out) != want:
            raise ShapeMismatch(f"layer {k}: expects input {want} (before padding), previous yields {out}")
