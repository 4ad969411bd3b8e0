"""Reference interpreter for the supported ONNX subset.

Integer ops accumulate in int64 and must land inside int32; float ops run in
their operand precision with IEEE round-to-nearest-even, the way an ONNX
runtime evaluates them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import AccumulatorOverflowError, BindingError, ExecutionError
from .graphir import GraphIR, NodeIR
from .qmath import ElemType, QTensor, round_clip, to_fp16

_I32_MIN, _I32_MAX = ElemType.I32.range
_EXACT = 1 << 24


@dataclass
class ExecStats:
    """Counters collected during :func:`run`; pass one in to accumulate across calls."""

    cast_inexact: int = 0
    saturated: int = 0
    per_node_saturated: dict = field(default_factory=dict)


def _tanh32(x: np.ndarray) -> np.ndarray:
    return np.tanh(x.astype(np.float64)).astype(np.float32)


def _elementwise(fn, t: QTensor) -> QTensor:
    if t.dtype is ElemType.F16:
        # widen exactly, evaluate as float32, then round to binary16
        with np.errstate(over="ignore"):
            wide = fn(t.array.astype(np.float64)).astype(np.float32)
        return QTensor(ElemType.F16, wide.astype(np.float16))
    if t.dtype is ElemType.F32:
        return QTensor(ElemType.F32, fn(t.array.astype(np.float64)).astype(np.float32))
    raise ExecutionError(f"elementwise function on {t.dtype.value}")


def _tanh64(x):
    return np.tanh(x)


def _sigmoid64(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _fit_i32(acc: np.ndarray, node: NodeIR) -> QTensor:
    if acc.size and (acc.min() < _I32_MIN or acc.max() > _I32_MAX):
        raise AccumulatorOverflowError(node.name or node.op_type)
    return QTensor(ElemType.I32, acc)


def _operand(env, node, pos, default=None):
    if pos >= len(node.inputs) or node.inputs[pos] == "":
        return default
    return env[node.inputs[pos]]


def _int64(t: QTensor | None, zp: QTensor | None = None) -> np.ndarray:
    a = t.array.astype(np.int64)
    return a - zp.array.astype(np.int64) if zp is not None else a


def _matmul_integer(node, env, stats):
    a, b = _operand(env, node, 0), _operand(env, node, 1)
    acc = np.matmul(_int64(a, _operand(env, node, 2)), _int64(b, _operand(env, node, 3)))
    return _fit_i32(acc, node)


def conv2d(x: np.ndarray, wt: np.ndarray, strides=(1, 1), pads=(0, 0, 0, 0)) -> np.ndarray:
    """2-D cross-correlation, NCHW x OIHW, zero padding, groups=1.

    Exact for int64 operands; float operands accumulate in their own dtype.
    """
    n, c, h, w_ = x.shape
    o, ci, kh, kw = wt.shape
    if ci != c:
        raise ExecutionError(f"conv channel mismatch: input {c}, weights {ci}")
    top, left, bottom, right = pads
    xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ExecutionError("kernel larger than padded input")
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, :: strides[0], :: strides[1]]
    return np.einsum("nchwij,ocij->nohw", win, wt)


def _conv_integer(node, env, stats):
    x, wt = _operand(env, node, 0), _operand(env, node, 1)
    attrs = node.attributes
    if attrs.get("auto_pad", "NOTSET") != "NOTSET":
        raise ExecutionError(f"{node.name}: auto_pad is not supported")
    if x.array.ndim != 4 or wt.array.ndim != 4:
        raise ExecutionError(f"{node.name}: ConvInteger needs 4-D input and weights")
    strides = attrs.get("strides", (1, 1))
    pads = attrs.get("pads", (0, 0, 0, 0))
    acc = conv2d(
        _int64(x, _operand(env, node, 2)), _int64(wt, _operand(env, node, 3)), strides, pads
    )
    return _fit_i32(acc, node)


def _arith(op):
    def run(node, env, stats):
        a, b = _operand(env, node, 0), _operand(env, node, 1)
        if a.dtype.is_int:
            acc = op(a.array.astype(np.int64), b.array.astype(np.int64))
            lo, hi = a.dtype.range
            if acc.size and (acc.min() < lo or acc.max() > hi):
                raise AccumulatorOverflowError(node.name or node.op_type, f"{a.dtype.value} overflow")
            return QTensor(a.dtype, acc)
        with np.errstate(over="ignore"):
            return QTensor(a.dtype, op(a.array, b.array))
    return run


def _cast(node, env, stats):
    x = _operand(env, node, 0)
    to = ElemType.from_onnx(node.attributes["to"])
    src = x.array
    if to is ElemType.F32:
        out = src.astype(np.float32)
        if x.dtype is ElemType.I32:
            big = np.abs(src.astype(np.int64)) > _EXACT
            if big.any():
                stats.cast_inexact += int(np.count_nonzero(out[big].astype(np.int64) != src[big]))
        return QTensor(to, out)
    if to is ElemType.F16:
        return QTensor(to, to_fp16(src.astype(np.float32)))
    # float -> int truncates toward zero; out-of-range is a runtime error
    vals = np.trunc(src.astype(np.float64)) if not x.dtype.is_int else src.astype(np.int64)
    lo, hi = to.range
    if vals.size and (np.isnan(vals).any() or vals.min() < lo or vals.max() > hi):
        raise ExecutionError(f"{node.name}: Cast to {to.value} out of range")
    return QTensor(to, vals)


def _quantize_linear(node, env, stats):
    x, scale = _operand(env, node, 0), _operand(env, node, 1)
    zp = _operand(env, node, 2)
    zp_dtype = zp.dtype if zp is not None else ElemType.U8
    xs = x.array.astype(np.float32)  # int32 and float16 widen exactly or per Cast rules
    s = np.float32(scale.array.reshape(-1)[0])
    raw = np.rint(xs / s)
    if zp is not None:
        raw = raw + zp.array.astype(np.float32)
    lo, hi = zp_dtype.range
    n_sat = int(np.count_nonzero((raw < lo) | (raw > hi)))
    if n_sat:
        stats.saturated += n_sat
        key = node.name or node.op_type
        stats.per_node_saturated[key] = stats.per_node_saturated.get(key, 0) + n_sat
    if np.isnan(raw).any():
        raise ExecutionError(f"{node.name}: QuantizeLinear on NaN")
    return QTensor(zp_dtype, np.clip(raw, lo, hi))


def _relu(node, env, stats):
    x = _operand(env, node, 0)
    return QTensor(x.dtype, np.maximum(x.array, x.array.dtype.type(0)))


_KERNELS = {
    "MatMulInteger": _matmul_integer,
    "ConvInteger": _conv_integer,
    "Add": _arith(np.add),
    "Mul": _arith(np.multiply),
    "Cast": _cast,
    "QuantizeLinear": _quantize_linear,
    "Relu": _relu,
    "Tanh": lambda node, env, stats: _elementwise(_tanh64, _operand(env, node, 0)),
    "Sigmoid": lambda node, env, stats: _elementwise(_sigmoid64, _operand(env, node, 0)),
}


def _bind_inputs(g: GraphIR, inputs: dict) -> dict:
    env = dict(g.initializers)
    for vi in g.inputs:
        if vi.name not in inputs:
            raise BindingError(f"missing graph input {vi.name!r}")
        t = inputs[vi.name]
        if not isinstance(t, QTensor):
            raise BindingError(f"input {vi.name!r} must be a QTensor")
        if t.dtype is not vi.dtype:
            raise BindingError(
                f"input {vi.name!r}: expected {vi.dtype.value}, got {t.dtype.value}"
            )
        if vi.shape is not None:
            ok = len(vi.shape) == len(t.shape) and all(
                isinstance(d, str) or d == s for d, s in zip(vi.shape, t.shape)
            )
            if not ok:
                raise BindingError(
                    f"input {vi.name!r}: expected shape {list(vi.shape)}, got {list(t.shape)}"
                )
        env[vi.name] = t
    return env


def run(g: GraphIR, inputs: dict, *, stats: ExecStats | None = None) -> dict:
    """Execute ``g`` on ``inputs`` (name -> QTensor); returns graph outputs by name."""
    stats = stats if stats is not None else ExecStats()
    env = _bind_inputs(g, inputs)
    for node in g.nodes:
        kernel = _KERNELS.get(node.op_type)
        if kernel is None:
            raise ExecutionError(f"no kernel for operator {node.op_type!r}")
        for i in node.inputs:
            if i and i not in env:
                raise BindingError(f"{node.name}: value {i!r} is unbound")
        env[node.outputs[0]] = kernel(node, env, stats)
    return {vi.name: env[vi.name] for vi in g.outputs}


def tanh_i8_lut(x_step: float, y_scale: float) -> QTensor:
    """int8 tanh table: entry ``i + 128`` holds ``round_clip(tanh(i * x_step), y_scale)``.

    The products and tanh are evaluated exactly as the Cast/Mul/Tanh/
    QuantizeLinear node chain does, so the table and the graph agree bit for bit.
    """
    if not x_step > 0:
        raise ValueError("x_step must be positive")
    grid = np.arange(-128, 128, dtype=np.int8).astype(np.float32) * np.float32(x_step)
    return QTensor(ElemType.I8, round_clip(_tanh32(grid), y_scale, ElemType.I8))
