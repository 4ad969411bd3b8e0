"""Layer patterns: emit hardware layer descriptors as standard-ONNX node
chains, and match such chains back into descriptors.

Every layer is ``{MatMulInteger|ConvInteger} -> Add(bias) -> Cast(float) ->
rescale Mul(s) -> [activation] -> QuantizeLinear``. The rescale is either
two Muls (integer Quant_scale stored as FLOAT, then ``2**-N``) or a single
Mul by the fused multiplier.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BuildError, CodificationError, PatternMismatchError, QuantizationError
from .graphir import GraphIR, NodeIR, ValueInfo, check
from .qmath import (
    FLOAT_EXACT_INT,
    ElemType,
    QTensor,
    RescaleSpec,
    decompose_rescale,
)

_F32 = np.float32


def _fp32(x: float) -> float:
    return float(_F32(x))


class LayerKind(enum.Enum):
    FULLY_CONNECTED = "fc"
    CONV2D = "conv2d"


class Codification(enum.Enum):
    TWO_MUL = "2mul"
    ONE_MUL = "1mul"


# -- activations -------------------------------------------------------------

@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class TanhI8:
    """int8-in/int8-out tanh: the int8 grid spans ``[-input_bound, input_bound]``."""

    input_bound: float = 4.0
    y_scale: float = 1 / 127

    def __post_init__(self):
        object.__setattr__(self, "input_bound", _fp32(self.input_bound))
        object.__setattr__(self, "y_scale", _fp32(self.y_scale))
        if not (math.isfinite(self.input_bound) and self.input_bound > 0):
            raise BuildError(f"TanhI8 input_bound must be positive, got {self.input_bound}")
        _check_y_scale(self.y_scale)

    @property
    def x_step(self) -> float:
        return float(_F32(self.input_bound) / _F32(127))


@dataclass(frozen=True)
class TanhF16:
    y_scale: float = 1 / 127

    def __post_init__(self):
        object.__setattr__(self, "y_scale", _fp32(self.y_scale))
        _check_y_scale(self.y_scale)


@dataclass(frozen=True)
class SigmoidF16:
    y_scale: float = 1 / 255

    def __post_init__(self):
        object.__setattr__(self, "y_scale", _fp32(self.y_scale))
        _check_y_scale(self.y_scale)


def _check_y_scale(s):
    if not (math.isfinite(s) and s > 0):
        raise BuildError(f"y_scale must be positive, got {s}")


ACTIVATION_TYPES = (Relu, TanhI8, TanhF16, SigmoidF16, type(None))


def activation_output_dtype(act) -> ElemType:
    return ElemType.U8 if isinstance(act, SigmoidF16) else ElemType.I8


# -- descriptor --------------------------------------------------------------

@dataclass(frozen=True)
class ConvAttrs:
    strides: tuple[int, int] = (1, 1)
    pads: tuple[int, int, int, int] = (0, 0, 0, 0)  # top, left, bottom, right
    kernel_shape: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "pads", tuple(int(p) for p in self.pads))
        if self.kernel_shape is not None:
            object.__setattr__(self, "kernel_shape", tuple(int(k) for k in self.kernel_shape))


@dataclass(frozen=True)
class HwLayerDescriptor:
    """One quantized layer as a hardware toolchain consumes it.

    FC weights are stored ``[in, out]`` (the MatMulInteger right operand);
    conv weights ``[out_ch, in_ch, kH, kW]``. ``bias`` has one int32 entry
    per output channel.
    """

    name: str
    kind: LayerKind
    weights: QTensor
    bias: QTensor
    rescale: RescaleSpec
    codification: Codification = Codification.TWO_MUL
    activation: object = None
    input_dtype: ElemType = ElemType.I8
    output_dtype: ElemType | None = None
    conv: ConvAttrs | None = None

    def __post_init__(self):
        if not isinstance(self.activation, ACTIVATION_TYPES):
            raise BuildError(f"{self.name}: unknown activation {self.activation!r}")
        expected = activation_output_dtype(self.activation)
        if self.output_dtype is None:
            object.__setattr__(self, "output_dtype", expected)
        elif self.output_dtype is not expected:
            raise BuildError(
                f"{self.name}: {type(self.activation).__name__} implies {expected.value} output"
            )
        if self.input_dtype not in (ElemType.I8, ElemType.U8):
            raise BuildError(f"{self.name}: input dtype must be int8/uint8")
        if self.weights.dtype is not ElemType.I8 or self.bias.dtype is not ElemType.I32:
            raise BuildError(f"{self.name}: weights must be int8 and bias int32")
        if self.bias.array.ndim != 1:
            raise BuildError(f"{self.name}: bias must be 1-D")
        w = self.weights.shape
        if self.kind is LayerKind.FULLY_CONNECTED:
            if len(w) != 2:
                raise BuildError(f"{self.name}: FC weights must be rank 2, got {list(w)}")
            if self.conv is not None:
                raise BuildError(f"{self.name}: FC layer cannot carry conv attributes")
            out_ch = w[1]
        else:
            if len(w) != 4:
                raise BuildError(f"{self.name}: conv weights must be rank 4, got {list(w)}")
            conv = self.conv or ConvAttrs()
            if conv.kernel_shape is None:
                conv = replace(conv, kernel_shape=tuple(w[2:]))
            if conv.kernel_shape != tuple(w[2:]):
                raise BuildError(f"{self.name}: kernel_shape disagrees with weights")
            if len(conv.strides) != 2 or len(conv.pads) != 4 or min(conv.strides) < 1 or min(conv.pads) < 0:
                raise BuildError(f"{self.name}: bad strides/pads")
            object.__setattr__(self, "conv", conv)
            out_ch = w[0]
        if self.bias.shape[0] != out_ch:
            raise BuildError(
                f"{self.name}: bias length {self.bias.shape[0]} != output channels {out_ch}"
            )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[1 if self.kind is LayerKind.FULLY_CONNECTED else 0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[0 if self.kind is LayerKind.FULLY_CONNECTED else 1]

    def codified(self) -> "HwLayerDescriptor":
        """The descriptor as its graph encoding carries it.

        TwoMul graphs hold only ``(quant_scale, N)``, so the multiplier becomes
        the represented value; OneMul graphs hold ``fp32(multiplier)``, whose
        decomposition is recomputed. A TanhI8 graph holds only the step
        ``fp32(bound / 127)``; near the top of a binade two bounds share a
        step, and the canonical bound is the one extraction recovers.
        """
        r = self.rescale
        if self.codification is Codification.TWO_MUL:
            rescale = RescaleSpec(r.value, r.quant_scale, r.shift_bits)
        else:
            rescale = decompose_rescale(_fp32(r.multiplier))
        act = self.activation
        if isinstance(act, TanhI8):
            act = replace(act, input_bound=_recover_bound(act.x_step))
        return replace(self, rescale=rescale, activation=act)


# -- emission ----------------------------------------------------------------

class GraphBuilder:
    """Accumulates nodes and initializers for :func:`build_model`."""

    def __init__(self):
        self.nodes: list[NodeIR] = []
        self.initializers: dict[str, QTensor] = {}

    def const(self, name: str, tensor: QTensor) -> str:
        if name in self.initializers:
            raise BuildError(f"initializer {name!r} defined twice")
        self.initializers[name] = tensor
        return name

    def scalar(self, name: str, value: float) -> str:
        return self.const(name, QTensor(ElemType.F32, _F32(value)))

    def zero_point(self, name: str, dtype: ElemType) -> str:
        return self.const(name, QTensor(dtype, 0))

    def node(self, op: str, name: str, inputs, output: str, **attrs) -> str:
        self.nodes.append(NodeIR(op, name, tuple(inputs), (output,), attrs))
        return output


def _emit(b: GraphBuilder, d: HwLayerDescriptor, x: str, out: str) -> list[NodeIR]:
    start = len(b.nodes)
    p = d.name
    w = b.const(f"{p}/W_q", d.weights)
    if d.kind is LayerKind.FULLY_CONNECTED:
        acc = b.node("MatMulInteger", f"{p}/matmul", [x, w], f"{p}/matmul_out")
        bias = b.const(f"{p}/B_q", d.bias)
    else:
        acc = b.node(
            "ConvInteger", f"{p}/conv", [x, w], f"{p}/conv_out",
            kernel_shape=d.conv.kernel_shape, pads=d.conv.pads, strides=d.conv.strides,
        )
        bias = b.const(f"{p}/B_q", QTensor(ElemType.I32, d.bias.array.reshape(1, -1, 1, 1)))
    acc = b.node("Add", f"{p}/bias_add", [acc, bias], f"{p}/bias_out")
    y = b.node("Cast", f"{p}/to_float", [acc], f"{p}/acc_f32", to=ElemType.F32.onnx_code)

    if d.codification is Codification.TWO_MUL:
        qs = b.scalar(f"{p}/quant_scale", float(d.rescale.quant_scale))
        y = b.node("Mul", f"{p}/mul_quant_scale", [y, qs], f"{p}/scaled")
        sh = b.scalar(f"{p}/quant_shift", d.rescale.quant_shift)
        y = b.node("Mul", f"{p}/mul_quant_shift", [y, sh], f"{p}/rescaled")
    else:
        m = b.scalar(f"{p}/quant_multiplier", d.rescale.multiplier)
        y = b.node("Mul", f"{p}/mul_quant_multiplier", [y, m], f"{p}/rescaled")

    act = d.activation
    if act is None or isinstance(act, Relu):
        if isinstance(act, Relu):
            y = b.node("Relu", f"{p}/relu", [y], f"{p}/relu_out")
        s = b.scalar(f"{p}/q_scale", 1.0)
        zp = b.zero_point(f"{p}/q_zero_point", d.output_dtype)
        b.node("QuantizeLinear", f"{p}/quantize", [y, s, zp], out)
    elif isinstance(act, TanhI8):
        s = b.scalar(f"{p}/q_scale", 1.0)
        zp = b.zero_point(f"{p}/q_zero_point", ElemType.I8)
        y = b.node("QuantizeLinear", f"{p}/quantize", [y, s, zp], f"{p}/tanh_in_q")
        y = b.node("Cast", f"{p}/tanh_to_float", [y], f"{p}/tanh_in_f32", to=ElemType.F32.onnx_code)
        step = b.scalar(f"{p}/tanh_x_step", act.x_step)
        y = b.node("Mul", f"{p}/tanh_step", [y, step], f"{p}/tanh_in")
        y = b.node("Tanh", f"{p}/tanh", [y], f"{p}/tanh_out")
        ys = b.scalar(f"{p}/y_scale", act.y_scale)
        yzp = b.zero_point(f"{p}/y_zero_point", ElemType.I8)
        b.node("QuantizeLinear", f"{p}/output_quantize", [y, ys, yzp], out)
    else:
        op = "Tanh" if isinstance(act, TanhF16) else "Sigmoid"
        stage = op.lower()
        y = b.node("Cast", f"{p}/to_half", [y], f"{p}/{stage}_in_f16", to=ElemType.F16.onnx_code)
        y = b.node(op, f"{p}/{stage}", [y], f"{p}/{stage}_out_f16")
        # QuantizeLinear-13 takes float32 only; the widening is exact
        y = b.node("Cast", f"{p}/from_half", [y], f"{p}/{stage}_out", to=ElemType.F32.onnx_code)
        ys = b.scalar(f"{p}/y_scale", act.y_scale)
        yzp = b.zero_point(f"{p}/y_zero_point", d.output_dtype)
        b.node("QuantizeLinear", f"{p}/output_quantize", [y, ys, yzp], out)
    return b.nodes[start:]


def build_fc(b: GraphBuilder, desc: HwLayerDescriptor, input_name: str, output_name: str) -> list[NodeIR]:
    if desc.kind is not LayerKind.FULLY_CONNECTED:
        raise BuildError(f"{desc.name}: build_fc needs a fully connected descriptor")
    return _emit(b, desc, input_name, output_name)


def build_conv(b: GraphBuilder, desc: HwLayerDescriptor, input_name: str, output_name: str) -> list[NodeIR]:
    if desc.kind is not LayerKind.CONV2D:
        raise BuildError(f"{desc.name}: build_conv needs a Conv2D descriptor")
    return _emit(b, desc, input_name, output_name)


@dataclass(frozen=True)
class InputSpec:
    name: str = "input"
    shape: tuple | None = None  # None: ("N", in_features) for FC-first models


def _out_shape(d: HwLayerDescriptor, shape: tuple) -> tuple:
    if d.kind is LayerKind.FULLY_CONNECTED:
        if len(shape) < 1:
            raise BuildError(f"{d.name}: FC input must have rank >= 1")
        if isinstance(shape[-1], int) and shape[-1] != d.in_channels:
            raise BuildError(f"{d.name}: expects {d.in_channels} features, got {shape[-1]}")
        return tuple(shape[:-1]) + (d.out_channels,)
    if len(shape) != 4:
        raise BuildError(f"{d.name}: conv input must be NCHW, got rank {len(shape)}")
    n, c, h, w = shape
    if isinstance(c, int) and c != d.in_channels:
        raise BuildError(f"{d.name}: expects {d.in_channels} channels, got {c}")
    (kh, kw), (sh, sw), (pt, pl, pb, pr) = d.conv.kernel_shape, d.conv.strides, d.conv.pads
    ho = (h + pt + pb - kh) // sh + 1 if isinstance(h, int) else "H_" + d.name
    wo = (w + pl + pr - kw) // sw + 1 if isinstance(w, int) else "W_" + d.name
    if (isinstance(ho, int) and ho < 1) or (isinstance(wo, int) and wo < 1):
        raise BuildError(f"{d.name}: kernel larger than padded input")
    return (n, d.out_channels, ho, wo)


def build_model(
    layers,
    input_spec: InputSpec | None = None,
    *,
    output_name: str = "output",
    name: str = "prequant",
    metadata: dict | None = None,
) -> GraphIR:
    """Chain layer patterns into a complete, validated single-input graph."""
    layers = list(layers)
    if not layers:
        raise BuildError("cannot build a model with no layers")
    input_spec = input_spec or InputSpec()
    shape = input_spec.shape
    if shape is None:
        if layers[0].kind is not LayerKind.FULLY_CONNECTED:
            raise BuildError("conv models need an explicit NCHW input shape")
        shape = ("N", layers[0].in_channels)
    shape = tuple(shape)
    seen = set()
    b = GraphBuilder()
    cur = input_spec.name
    in_shape = shape
    for i, d in enumerate(layers):
        if d.name in seen or not d.name:
            raise BuildError(f"layer names must be unique and non-empty: {d.name!r}")
        seen.add(d.name)
        if i and d.input_dtype is not layers[i - 1].output_dtype:
            raise BuildError(
                f"{d.name}: input dtype {d.input_dtype.value} does not match "
                f"{layers[i - 1].name} output {layers[i - 1].output_dtype.value}"
            )
        if i and d.kind is LayerKind.FULLY_CONNECTED and layers[i - 1].kind is LayerKind.CONV2D:
            raise BuildError(f"{d.name}: FC after conv needs a flatten, which is not supported")
        shape = _out_shape(d, shape)
        out = output_name if i == len(layers) - 1 else f"{d.name}/output"
        _emit(b, d, cur, out)
        cur = out
    g = GraphIR(
        name,
        b.nodes,
        b.initializers,
        [ValueInfo(input_spec.name, layers[0].input_dtype, in_shape)],
        [ValueInfo(output_name, layers[-1].output_dtype, shape)],
        metadata=metadata or {},
    )
    return check(g)


# -- extraction --------------------------------------------------------------

def _layer_name(node: NodeIR, fallback: str) -> str:
    return node.name.rsplit("/", 1)[0] if "/" in node.name else (node.name or fallback)


def _is_pow2_shift(c: float) -> int | None:
    """N if ``c == 2**-N`` with N >= 0, else None."""
    if not (math.isfinite(c) and 0 < c <= 1):
        return None
    mant, exp = math.frexp(c)
    return 1 - exp if mant == 0.5 else None


def _recover_bound(x_step: float) -> float:
    """The fp32 input_bound whose ``fp32(bound / 127)`` equals ``x_step``."""
    target = _F32(x_step)
    guess = _F32(float(x_step) * 127.0)
    cands = [guess]
    lo = hi = guess
    for _ in range(4):
        lo, hi = np.nextafter(lo, _F32(0)), np.nextafter(hi, _F32(np.inf))
        cands += [lo, hi]
    hits = [c for c in cands if c > 0 and c / _F32(127) == target]
    if not hits:
        raise CodificationError(f"tanh step {x_step!r} is not fp32(bound / 127) for any bound")
    return float(min(hits, key=lambda c: abs(float(c) - float(x_step) * 127.0)))


class _Matcher:
    def __init__(self, g: GraphIR):
        self.g = g
        self.consumers = g.consumers()
        self.used: set[int] = set()
        self.index = {id(n): i for i, n in enumerate(g.nodes)}
        self.outputs = {vi.name for vi in g.outputs}

    def next(self, value: str, ops, what: str) -> NodeIR:
        cons = self.consumers.get(value, [])
        if len(cons) != 1:
            # on fan-out, blame a consumer the pattern has no place for
            extra = [c for c in cons if c.op_type not in ops] or cons[1:]
            first = (extra[0].name or extra[0].op_type) if extra else self._first_unused()
            raise PatternMismatchError(
                f"expected {what} as sole consumer of {value!r}, found {len(cons)} consumer(s); "
                f"first unmatched node: {first}", first,
            )
        n = cons[0]
        if n.op_type not in ops or id(n) in self.used:
            raise PatternMismatchError(
                f"unmatched node {n.name or n.op_type!r} ({n.op_type}): expected {what} "
                f"after {value!r}", n.name,
            )
        if n.inputs[0] != value and n.op_type not in ("Add", "Mul"):
            raise PatternMismatchError(f"unmatched node {n.name!r}: {value!r} in wrong position", n.name)
        self.used.add(id(n))
        return n

    def peek(self, value: str) -> NodeIR | None:
        cons = self.consumers.get(value, [])
        return cons[0] if len(cons) == 1 else None

    def const(self, node: NodeIR, chain: str, dtype: ElemType | None = None) -> QTensor:
        others = [i for i in node.inputs if i and i != chain]
        if len(others) != 1 or others[0] not in self.g.initializers:
            raise PatternMismatchError(
                f"unmatched node {node.name!r}: {node.op_type} operand is not a constant", node.name
            )
        t = self.g.initializers[others[0]]
        if dtype is not None and t.dtype is not dtype:
            raise PatternMismatchError(
                f"unmatched node {node.name!r}: constant must be {dtype.value}", node.name
            )
        return t

    def scalar(self, node: NodeIR, chain: str) -> float:
        t = self.const(node, chain, ElemType.F32)
        if t.array.size != 1:
            raise PatternMismatchError(f"unmatched node {node.name!r}: constant must be scalar", node.name)
        return float(t.array.reshape(-1)[0])

    def quantize(self, node: NodeIR) -> tuple[float, ElemType]:
        g = self.g
        if len(node.inputs) < 3 or node.inputs[2] not in g.initializers:
            raise CodificationError(f"{node.name}: QuantizeLinear needs an explicit zero point")
        if node.inputs[1] not in g.initializers:
            raise CodificationError(f"{node.name}: QuantizeLinear scale must be a constant")
        zp = g.initializers[node.inputs[2]]
        if np.any(zp.array != 0):
            raise CodificationError(f"{node.name}: zero point must be 0")
        return float(g.initializers[node.inputs[1]].array.reshape(-1)[0]), zp.dtype

    def _first_unused(self) -> str | None:
        for n in self.g.nodes:
            if id(n) not in self.used:
                return n.name or n.op_type
        return None

    def layer(self, x: str, x_dtype: ElemType, ordinal: int) -> tuple[HwLayerDescriptor, str]:
        g = self.g
        n = self.next(x, ("MatMulInteger", "ConvInteger"), "MatMulInteger/ConvInteger")
        name = _layer_name(n, f"layer{ordinal}")
        if n.inputs[1] not in g.initializers:
            raise PatternMismatchError(f"unmatched node {n.name!r}: weights must be a constant", n.name)
        for zp in n.inputs[2:]:
            if zp and (zp not in g.initializers or np.any(g.initializers[zp].array != 0)):
                raise CodificationError(f"{n.name}: integer op zero points must be constant 0")
        weights = g.initializers[n.inputs[1]]
        conv = None
        if n.op_type == "ConvInteger":
            kind = LayerKind.CONV2D
            a = n.attributes
            conv = ConvAttrs(
                a.get("strides", (1, 1)), a.get("pads", (0, 0, 0, 0)),
                a.get("kernel_shape", tuple(weights.shape[2:])),
            )
        else:
            kind = LayerKind.FULLY_CONNECTED

        add = self.next(n.outputs[0], ("Add",), "bias Add")
        bias = self.const(add, n.outputs[0], ElemType.I32)
        out_ch = weights.shape[0] if kind is LayerKind.CONV2D else weights.shape[-1]
        if bias.array.size != out_ch:
            raise PatternMismatchError(f"unmatched node {add.name!r}: bias size {bias.array.size}", add.name)
        bias = QTensor(ElemType.I32, bias.array.reshape(-1))

        cast = self.next(add.outputs[0], ("Cast",), "Cast to float")
        if cast.attributes.get("to") != ElemType.F32.onnx_code:
            raise PatternMismatchError(f"unmatched node {cast.name!r}: expected Cast to float", cast.name)

        mul1 = self.next(cast.outputs[0], ("Mul",), "rescale Mul")
        c1 = self.scalar(mul1, cast.outputs[0])
        y = mul1.outputs[0]
        after = self.peek(y)
        if after is not None and after.op_type == "Mul" and id(after) not in self.used:
            mul2 = self.next(y, ("Mul",), "shift Mul")
            c2 = self.scalar(mul2, y)
            if c1 != int(c1) or not 0 < c1 <= FLOAT_EXACT_INT:
                raise CodificationError(f"{mul1.name}: Quant_scale {c1!r} is not an integer in (0, 2**24]")
            shift = _is_pow2_shift(c2)
            if shift is None:
                raise CodificationError(f"{mul2.name}: Quant_shift {c2!r} is not 2**-N")
            qs = int(c1)
            try:
                rescale = RescaleSpec(math.ldexp(qs, -shift), qs, shift)
            except ValueError as e:
                raise CodificationError(f"{mul2.name}: {e}") from None
            codification = Codification.TWO_MUL
            y = mul2.outputs[0]
        else:
            try:
                rescale = decompose_rescale(c1)
            except QuantizationError as e:
                raise CodificationError(f"{mul1.name}: {e}") from None
            codification = Codification.ONE_MUL

        act, y, out_dtype = self.activation(y)
        desc = HwLayerDescriptor(
            name, kind, weights, bias, rescale, codification, act, x_dtype, out_dtype, conv
        )
        return desc, y

    def activation(self, y: str):
        nxt = self.next(y, ("Relu", "QuantizeLinear", "Cast"), "activation or QuantizeLinear")
        if nxt.op_type == "Relu":
            q = self.next(nxt.outputs[0], ("QuantizeLinear",), "QuantizeLinear")
            scale, dt = self.quantize(q)
            self._unit_scale(q, scale)
            return Relu(), q.outputs[0], dt
        if nxt.op_type == "QuantizeLinear":
            scale, dt = self.quantize(nxt)
            self._unit_scale(nxt, scale)
            follow = self.peek(nxt.outputs[0])
            if follow is None or follow.op_type != "Cast":
                return None, nxt.outputs[0], dt
            # int8 tanh: Cast -> Mul(step) -> Tanh -> QuantizeLinear(y_scale)
            cast = self.next(nxt.outputs[0], ("Cast",), "Cast")
            if cast.attributes.get("to") != ElemType.F32.onnx_code:
                raise PatternMismatchError(f"unmatched node {cast.name!r}", cast.name)
            mul = self.next(cast.outputs[0], ("Mul",), "tanh step Mul")
            step = self.scalar(mul, cast.outputs[0])
            tanh = self.next(mul.outputs[0], ("Tanh",), "Tanh")
            q = self.next(tanh.outputs[0], ("QuantizeLinear",), "QuantizeLinear")
            y_scale, dt = self.quantize(q)
            if dt is not ElemType.I8:
                raise CodificationError(f"{q.name}: int8 tanh output must be int8")
            return TanhI8(_recover_bound(step), y_scale), q.outputs[0], dt
        # fp16 flows: Cast(f16) -> Tanh|Sigmoid -> Cast(f32) -> QuantizeLinear(y_scale)
        if nxt.attributes.get("to") != ElemType.F16.onnx_code:
            raise PatternMismatchError(f"unmatched node {nxt.name!r}: expected Cast to float16", nxt.name)
        fn = self.next(nxt.outputs[0], ("Tanh", "Sigmoid"), "Tanh/Sigmoid")
        back = self.next(fn.outputs[0], ("Cast",), "Cast to float")
        if back.attributes.get("to") != ElemType.F32.onnx_code:
            raise PatternMismatchError(f"unmatched node {back.name!r}", back.name)
        q = self.next(back.outputs[0], ("QuantizeLinear",), "QuantizeLinear")
        y_scale, dt = self.quantize(q)
        act = TanhF16(y_scale) if fn.op_type == "Tanh" else SigmoidF16(y_scale)
        if dt is not activation_output_dtype(act):
            raise CodificationError(f"{q.name}: {fn.op_type} output must be "
                                    f"{activation_output_dtype(act).value}")
        return act, q.outputs[0], dt

    @staticmethod
    def _unit_scale(q: NodeIR, scale: float):
        if scale != 1.0:
            raise CodificationError(f"{q.name}: rounding QuantizeLinear must have scale 1, got {scale}")


def extract(g: GraphIR) -> list[HwLayerDescriptor]:
    """Recover the layer descriptors of a graph built from these patterns."""
    check(g)
    if len(g.inputs) != 1 or len(g.outputs) != 1:
        raise PatternMismatchError("expected exactly one graph input and one graph output")
    m = _Matcher(g)
    cur, dt = g.inputs[0].name, g.inputs[0].dtype
    layers: list[HwLayerDescriptor] = []
    while not (cur in m.outputs and not m.consumers.get(cur)):
        try:
            desc, cur = m.layer(cur, dt, len(layers))
        except BuildError as e:
            raise CodificationError(str(e)) from None
        layers.append(desc)
        dt = desc.output_dtype
    leftover = m._first_unused()
    if leftover is not None:
        raise PatternMismatchError(f"unmatched node {leftover!r} is not part of any layer", leftover)
    if not layers:
        raise PatternMismatchError("graph contains no layers")
    return layers
