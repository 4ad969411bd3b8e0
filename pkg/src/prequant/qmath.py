"""Symmetric quantization arithmetic.

Everything here is a pure function of its inputs. Scales are plain Python
floats holding fp32-representable values; tensors travel as :class:`QTensor`.
Rounding is round-half-to-even throughout, matching ONNX QuantizeLinear.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BiasSaturationWarning,
    DomainError,
    InvalidRangeError,
    UnrepresentableRescaleError,
)

# Largest integer a FLOAT holds exactly; bounds Quant_scale.
FLOAT_EXACT_INT = 1 << 24
# Keep 2**-N a normal fp32 so runtimes that flush denormals agree with us.
MAX_SHIFT_BITS = 126


class ElemType(enum.Enum):
    I8 = "int8"
    U8 = "uint8"
    I32 = "int32"
    F32 = "float32"
    F16 = "float16"

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.value)

    @property
    def is_int(self) -> bool:
        return self in (ElemType.I8, ElemType.U8, ElemType.I32)

    @property
    def range(self) -> tuple[int, int]:
        info = np.iinfo(self.np_dtype)
        return int(info.min), int(info.max)

    @property
    def onnx_code(self) -> int:
        return _ONNX_CODES[self]

    @classmethod
    def from_onnx(cls, code: int) -> "ElemType":
        for k, v in _ONNX_CODES.items():
            if v == code:
                return k
        raise ValueError(f"unsupported ONNX element type {code}")


# TensorProto.DataType values from onnx.proto
_ONNX_CODES = {
    ElemType.F32: 1,
    ElemType.U8: 2,
    ElemType.I8: 3,
    ElemType.I32: 6,
    ElemType.F16: 10,
}


@dataclass(frozen=True, eq=False)
class QTensor:
    """Typed N-D tensor. ``array`` is a read-only numpy array of ``dtype``."""

    dtype: ElemType
    array: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.array)
        if self.dtype.is_int:
            if src.dtype.kind == "f":
                if not np.all(np.isfinite(src)) or np.any(src != np.rint(src)):
                    raise ValueError(f"non-integral values for {self.dtype.value}")
            elif src.dtype.kind not in "iub":
                raise TypeError(f"cannot build {self.dtype.value} tensor from {src.dtype}")
            lo, hi = self.dtype.range
            if src.size and (src.min() < lo or src.max() > hi):
                raise ValueError(f"values outside {self.dtype.value} range [{lo}, {hi}]")
            arr = src.astype(self.dtype.np_dtype)
        else:
            with np.errstate(over="ignore"):
                arr = src.astype(self.dtype.np_dtype)
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def data(self) -> list:
        return self.array.ravel().tolist()

    def __eq__(self, other):
        if not isinstance(other, QTensor):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.array.tobytes() == other.array.tobytes()
        )

    __hash__ = None

    def __repr__(self):
        return f"QTensor({self.dtype.value}, shape={list(self.shape)})"


@dataclass(frozen=True)
class RescaleSpec:
    """Rescale multiplier and its integer decomposition.

    The represented value is ``quant_scale * 2**-shift_bits``; ``multiplier``
    is the real-valued factor it approximates from below.
    """

    multiplier: float
    quant_scale: int
    shift_bits: int

    def __post_init__(self):
        qs, n, m = self.quant_scale, self.shift_bits, self.multiplier
        if not (isinstance(qs, (int, np.integer)) and isinstance(n, (int, np.integer))):
            raise TypeError("quant_scale and shift_bits must be integers")
        object.__setattr__(self, "quant_scale", int(qs))
        object.__setattr__(self, "shift_bits", int(n))
        object.__setattr__(self, "multiplier", float(m))
        if not 0 <= qs <= FLOAT_EXACT_INT:
            raise ValueError(f"quant_scale {qs} outside [0, 2**24]")
        if not 0 <= n <= MAX_SHIFT_BITS:
            raise ValueError(f"shift_bits {n} outside [0, {MAX_SHIFT_BITS}]")
        if not (math.isfinite(m) and m > 0):
            raise ValueError(f"multiplier must be positive and finite, got {m}")
        if abs(m - math.ldexp(qs, -n)) > math.ldexp(1.0, -n):
            raise ValueError(f"{qs} * 2**-{n} does not approximate multiplier {m}")

    @property
    def quant_shift(self) -> float:
        return math.ldexp(1.0, -self.shift_bits)

    @property
    def value(self) -> float:
        """Exact value of ``quant_scale * 2**-shift_bits``."""
        return math.ldexp(self.quant_scale, -self.shift_bits)


def _check_scale(scale) -> np.float32:
    s = np.float32(scale)
    if not (np.isfinite(s) and s > 0):
        raise InvalidRangeError(f"scale must be positive and finite, got {scale}")
    return s


def _qrange(target: ElemType) -> tuple[int, int]:
    if target not in (ElemType.I8, ElemType.U8):
        raise ValueError(f"quantization target must be int8 or uint8, got {target}")
    return target.range


def compute_symmetric_scale(abs_max: float, target: ElemType = ElemType.I8) -> float:
    """Scale mapping ``[-abs_max, abs_max]`` onto the int8 grid (or ``[0, abs_max]`` for uint8)."""
    _qrange(target)
    if not (math.isfinite(abs_max) and abs_max > 0):
        raise InvalidRangeError(f"abs_max must be positive and finite, got {abs_max}")
    qmax = 127 if target is ElemType.I8 else 255
    return float(np.float32(abs_max) / np.float32(qmax))


def _as_f32(x) -> np.ndarray:
    if isinstance(x, QTensor):
        return x.array.astype(np.float32)
    return np.asarray(x, dtype=np.float32)


def quantize_tensor(x, scale: float, target: ElemType = ElemType.I8) -> QTensor:
    lo, hi = _qrange(target)
    xs = _as_f32(x)
    if np.isnan(xs).any():
        raise DomainError("cannot quantize NaN")
    q = np.clip(np.rint(xs / _check_scale(scale)), lo, hi)
    return QTensor(target, q)


def dequantize_tensor(xq: QTensor, scale: float) -> QTensor:
    if xq.dtype not in (ElemType.I8, ElemType.U8, ElemType.I32):
        raise ValueError(f"cannot dequantize {xq.dtype.value}")
    return QTensor(ElemType.F32, xq.array.astype(np.float32) * _check_scale(scale))


def quantize_bias(b, scale_w: float, scale_x: float) -> QTensor:
    """Quantize bias onto the accumulator grid ``scale_w * scale_x``.

    The division runs in double precision; the product of two fp32 scales is
    exact there. Saturation warns with :class:`BiasSaturationWarning`.
    """
    sw, sx = float(_check_scale(scale_w)), float(_check_scale(scale_x))
    bd = _as_f32(b).astype(np.float64)
    if np.isnan(bd).any():
        raise DomainError("cannot quantize NaN bias")
    q = np.rint(bd / (sw * sx))
    lo, hi = ElemType.I32.range
    n_sat = int(np.count_nonzero((q < lo) | (q > hi)))
    if n_sat:
        warnings.warn(
            f"{n_sat} bias element(s) saturated to int32", BiasSaturationWarning, stacklevel=2
        )
    return QTensor(ElemType.I32, np.clip(q, lo, hi))


def rescale_multiplier(scale_w: float, scale_x: float, scale_y: float) -> float:
    """``(scale_w * scale_x) / scale_y`` evaluated in fp32."""
    sw, sx, sy = _check_scale(scale_w), _check_scale(scale_x), _check_scale(scale_y)
    return float(sw * sx / sy)


def decompose_rescale(multiplier: float) -> RescaleSpec:
    """Split a multiplier into an integer Quant_scale and a right shift.

    Picks the largest shift N with ``floor(m * 2**N) <= 2**24``; the floor is
    taken on the double-precision value of ``multiplier``, so pass the exact
    double when one is available (``1/3`` gives 11184810, ``fp32(1/3)``
    gives 11184811 since that float *is* ``11184811 * 2**-25``).
    """
    m = float(multiplier)
    if not (math.isfinite(m) and m > 0):
        raise InvalidRangeError(f"multiplier must be positive and finite, got {multiplier}")
    if m >= FLOAT_EXACT_INT:
        raise UnrepresentableRescaleError(
            f"multiplier {m} >= 2**24 would need a left shift"
        )
    _, exp = math.frexp(m)
    n = max(0, 24 - exp)
    while math.floor(math.ldexp(m, n + 1)) <= FLOAT_EXACT_INT:
        n += 1
    if n > MAX_SHIFT_BITS:
        raise UnrepresentableRescaleError(
            f"multiplier {m} needs a shift of {n} bits; 2**-{n} is not a normal FLOAT"
        )
    return RescaleSpec(m, math.floor(math.ldexp(m, n)), n)


def normalize_rescale(spec: RescaleSpec) -> RescaleSpec:
    qs, n = spec.quant_scale, spec.shift_bits
    while qs and qs % 2 == 0 and n > 0:
        qs //= 2
        n -= 1
    return RescaleSpec(spec.multiplier, qs, n)


def apply_rescale_int(acc, spec: RescaleSpec):
    """Integer rescale: ``(acc * quant_scale) >> shift_bits`` (arithmetic shift, floors)."""
    if np.ndim(acc) == 0:
        return (int(acc) * spec.quant_scale) >> spec.shift_bits
    a = np.asarray(acc, dtype=np.int64)
    return np.right_shift(a * np.int64(spec.quant_scale), spec.shift_bits)


def apply_rescale_float(acc, spec: RescaleSpec):
    """fp32 chain ``f32(acc) * f32(quant_scale) * f32(2**-N)``, as the TwoMul graph computes it."""
    a = np.asarray(acc, dtype=np.int32).astype(np.float32)
    out = a * np.float32(spec.quant_scale) * np.float32(spec.quant_shift)
    return np.float32(out) if out.ndim == 0 else out


def round_clip(x, scale: float = 1.0, zero_point_dtype: ElemType = ElemType.I8):
    """QuantizeLinear with a zero zero-point: ``saturate(rint(x / scale))``."""
    lo, hi = _qrange(zero_point_dtype)
    xs = np.asarray(x, dtype=np.float32)
    if np.isnan(xs).any():
        raise DomainError("cannot round NaN")
    q = np.clip(np.rint(xs / _check_scale(scale)), lo, hi).astype(zero_point_dtype.np_dtype)
    return int(q) if q.ndim == 0 else q


def to_fp16(x):
    """IEEE binary16, round-to-nearest-even from the fp32 value; overflow gives inf."""
    with np.errstate(over="ignore"):
        h = np.asarray(x, dtype=np.float32).astype(np.float16)
    return h[()] if h.ndim == 0 else h


def from_fp16(h):
    f = np.asarray(h, dtype=np.float16).astype(np.float32)
    return f[()] if f.ndim == 0 else f
