"""In-memory ONNX subset: IR types, structural validation and the wire format.

Only the operators needed by the pre-quantized layer patterns are accepted.
Serialization is byte-deterministic: attributes, initializers and metadata
are written sorted by name, tensor payloads always as little-endian
``raw_data``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import _wire as w
from .errors import GraphValidationError, ParseError, UnsupportedOperatorError
from .qmath import ElemType, QTensor

OPSET_VERSION = 13
IR_VERSION = 7
MIN_OPSET = 10  # first opset with MatMulInteger / ConvInteger

# op_type -> (min inputs, max inputs, outputs)
OP_ARITY = {
    "MatMulInteger": (2, 4, 1),
    "ConvInteger": (2, 4, 1),
    "Add": (2, 2, 1),
    "Mul": (2, 2, 1),
    "Cast": (1, 1, 1),
    "QuantizeLinear": (2, 3, 1),
    "Relu": (1, 1, 1),
    "Tanh": (1, 1, 1),
    "Sigmoid": (1, 1, 1),
}
SUPPORTED_OPS = frozenset(OP_ARITY)

AttrValue = Union[float, int, str, tuple, QTensor]
Dim = Union[int, str]


@dataclass(frozen=True)
class ValueInfo:
    name: str
    dtype: ElemType
    shape: tuple[Dim, ...] | None = None


@dataclass(frozen=True)
class NodeIR:
    op_type: str
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        attrs = {}
        for k, v in dict(self.attributes).items():
            attrs[k] = tuple(int(i) for i in v) if isinstance(v, (list, tuple)) else v
        object.__setattr__(self, "attributes", attrs)


@dataclass(frozen=True)
class GraphIR:
    name: str
    nodes: tuple[NodeIR, ...]
    initializers: dict
    inputs: tuple[ValueInfo, ...]
    outputs: tuple[ValueInfo, ...]
    opset_version: int = OPSET_VERSION
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "initializers", dict(self.initializers))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def producers(self) -> dict[str, NodeIR]:
        return {o: n for n in self.nodes for o in n.outputs}

    def consumers(self) -> dict[str, list[NodeIR]]:
        out: dict[str, list[NodeIR]] = {}
        for n in self.nodes:
            for i in n.inputs:
                if i:
                    out.setdefault(i, []).append(n)
        return out


@dataclass(frozen=True)
class Diagnostic:
    node: str
    severity: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"[{self.severity}] {self.node or '<graph>'}: {self.message}"


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

_FLOATS = (ElemType.F32, ElemType.F16)
_INT8S = (ElemType.I8, ElemType.U8)


def _infer(node: NodeIR, dts: list, g: GraphIR) -> tuple[ElemType | None, list[str]]:
    """Output dtype of ``node`` given input dtypes (``None`` = absent optional)."""
    op, errs = node.op_type, []
    a = dts[0]
    if op in ("MatMulInteger", "ConvInteger"):
        if a not in _INT8S:
            errs.append(f"input A must be int8/uint8, got {_dn(a)}")
        if dts[1] is not ElemType.I8:
            errs.append(f"weights must be int8, got {_dn(dts[1])}")
        for zp, ref in zip(dts[2:], dts[:2]):
            if zp is not None and zp is not ref:
                errs.append("zero-point dtype must match its operand")
        if op == "ConvInteger":
            if node.attributes.get("group", 1) != 1:
                errs.append("only group=1 is supported")
            if any(d != 1 for d in node.attributes.get("dilations", ())):
                errs.append("only unit dilations are supported")
        return ElemType.I32, errs
    if op in ("Add", "Mul"):
        if a is not dts[1]:
            errs.append(f"operand dtypes differ: {_dn(a)} vs {_dn(dts[1])}")
        return a, errs
    if op == "Cast":
        to = node.attributes.get("to")
        try:
            out = ElemType.from_onnx(to)
        except (ValueError, TypeError):
            errs.append(f"unsupported Cast target {to!r}")
            return None, errs
        return out, errs
    if op == "QuantizeLinear":
        allowed = (ElemType.F32, ElemType.I32) + ((ElemType.F16,) if g.opset_version >= 19 else ())
        if a not in allowed:
            errs.append(f"input must be one of {[t.value for t in allowed]}, got {_dn(a)}")
        if dts[1] is not ElemType.F32:
            errs.append(f"scale must be float32, got {_dn(dts[1])}")
        scale = g.initializers.get(node.inputs[1])
        if scale is not None and scale.array.size != 1:
            errs.append("per-axis scales are not supported")
        zp_dt = dts[2] if len(dts) > 2 else None
        if zp_dt is None:
            return ElemType.U8, errs
        if zp_dt not in _INT8S:
            errs.append(f"zero point must be int8/uint8, got {_dn(zp_dt)}")
            return None, errs
        zp = g.initializers.get(node.inputs[2])
        if zp is not None and np.any(zp.array != 0):
            errs.append("nonzero zero point (only symmetric quantization is supported)")
        return zp_dt, errs
    if op == "Relu":
        ok = _FLOATS + ((ElemType.I8, ElemType.I32) if g.opset_version >= 14 else ())
        if a not in ok:
            errs.append(f"unsupported input dtype {_dn(a)}")
        return a, errs
    if op in ("Tanh", "Sigmoid"):
        if a not in _FLOATS:
            errs.append(f"input must be float32/float16, got {_dn(a)}")
        return a, errs
    raise AssertionError(op)


def _dn(dt) -> str:
    return dt.value if isinstance(dt, ElemType) else str(dt)


def validate(g: GraphIR) -> list[Diagnostic]:
    """Check operator set, arities, topology, single assignment and dtype flow."""
    return _walk(g)[0]


def value_dtypes(g: GraphIR) -> dict[str, ElemType | None]:
    """Element type of every value in ``g``; ``None`` where inference failed."""
    return _walk(g)[1]


def _walk(g: GraphIR) -> tuple[list[Diagnostic], dict]:
    diags: list[Diagnostic] = []

    def err(node, msg):
        diags.append(Diagnostic(node, "error", msg))

    if g.opset_version < MIN_OPSET:
        err("", f"opset {g.opset_version} < {MIN_OPSET} lacks the integer operators")

    dtypes: dict[str, ElemType] = {}
    for vi in g.inputs:
        if vi.name in dtypes:
            err("", f"graph input {vi.name!r} declared twice")
        dtypes[vi.name] = vi.dtype
    for name, t in g.initializers.items():
        if name in dtypes:
            err("", f"initializer {name!r} shadows a graph input")
        dtypes[name] = t.dtype

    for idx, node in enumerate(g.nodes):
        label = node.name or f"#{idx}:{node.op_type}"
        if node.op_type not in SUPPORTED_OPS:
            err(label, f"unsupported operator {node.op_type!r}")
            for o in node.outputs:
                dtypes.setdefault(o, None)
            continue
        lo, hi, n_out = OP_ARITY[node.op_type]
        if not lo <= len(node.inputs) <= hi or len(node.outputs) != n_out:
            err(label, f"{node.op_type} expects {lo}..{hi} inputs and {n_out} output(s), "
                       f"got {len(node.inputs)} and {len(node.outputs)}")
            continue
        in_dts, missing = [], False
        for pos, i in enumerate(node.inputs):
            if i == "" and pos >= lo:
                in_dts.append(None)
                continue
            if i not in dtypes:
                err(label, f"input {i!r} is not defined before use")
                missing = True
            in_dts.append(dtypes.get(i))
        out_dt = None
        if not missing and None not in in_dts[:lo]:
            out_dt, errs = _infer(node, in_dts, g)
            for e in errs:
                err(label, e)
        for o in node.outputs:
            if not o:
                err(label, "empty output name")
            elif o in dtypes:
                err(label, f"value {o!r} is assigned more than once")
            dtypes[o] = out_dt

    for vi in g.outputs:
        if vi.name not in dtypes:
            err("", f"graph output {vi.name!r} is never produced")
        elif dtypes[vi.name] is not None and dtypes[vi.name] is not vi.dtype:
            err("", f"graph output {vi.name!r} declared {vi.dtype.value}, "
                    f"produced {dtypes[vi.name].value}")
    return diags, dtypes


def check(g: GraphIR) -> GraphIR:
    errors = [d for d in validate(g) if d.severity == "error"]
    if errors:
        raise GraphValidationError(errors)
    return g


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR, _ATTR_INTS = 1, 2, 3, 4, 7


def _tensor_bytes(name: str, t: QTensor) -> bytes:
    out = b"".join(w.f_varint(1, d) for d in t.shape)
    out += w.f_varint(2, t.dtype.onnx_code)
    if name:
        out += w.f_str(8, name)
    le = t.array.astype(t.dtype.np_dtype.newbyteorder("<"), copy=False)
    return out + w.f_bytes(9, np.ascontiguousarray(le).tobytes())


def _attr_bytes(name: str, v: AttrValue) -> bytes:
    out = w.f_str(1, name)
    if isinstance(v, bool):
        raise TypeError(f"attribute {name!r}: bool is not an ONNX attribute type")
    if isinstance(v, float):
        out += w.f_float(2, v)
        kind = _ATTR_FLOAT
    elif isinstance(v, int):
        out += w.f_varint(3, v)
        kind = _ATTR_INT
    elif isinstance(v, str):
        out += w.f_str(4, v)
        kind = _ATTR_STRING
    elif isinstance(v, QTensor):
        out += w.f_bytes(5, _tensor_bytes("", v))
        kind = _ATTR_TENSOR
    elif isinstance(v, tuple):
        out += b"".join(w.f_varint(8, i) for i in v)
        kind = _ATTR_INTS
    else:
        raise TypeError(f"attribute {name!r}: unsupported value {v!r}")
    return out + w.f_varint(20, kind)


def _value_info_bytes(vi: ValueInfo) -> bytes:
    tensor_type = w.f_varint(1, vi.dtype.onnx_code)
    if vi.shape is not None:
        dims = b""
        for d in vi.shape:
            dims += w.f_bytes(1, w.f_str(2, d) if isinstance(d, str) else w.f_varint(1, d))
        tensor_type += w.f_bytes(2, dims)
    return w.f_str(1, vi.name) + w.f_bytes(2, w.f_bytes(1, tensor_type))


def _node_bytes(n: NodeIR) -> bytes:
    out = b"".join(w.f_str(1, i) for i in n.inputs)
    out += b"".join(w.f_str(2, o) for o in n.outputs)
    if n.name:
        out += w.f_str(3, n.name)
    out += w.f_str(4, n.op_type)
    for k in sorted(n.attributes):
        out += w.f_bytes(5, _attr_bytes(k, n.attributes[k]))
    return out


def serialize(g: GraphIR) -> bytes:
    """Encode ``g`` as an ONNX ModelProto. Raises if ``g`` fails validation."""
    check(g)
    graph = b"".join(w.f_bytes(1, _node_bytes(n)) for n in g.nodes)
    if g.name:
        graph += w.f_str(2, g.name)
    for name in sorted(g.initializers):
        graph += w.f_bytes(5, _tensor_bytes(name, g.initializers[name]))
    graph += b"".join(w.f_bytes(11, _value_info_bytes(v)) for v in g.inputs)
    graph += b"".join(w.f_bytes(12, _value_info_bytes(v)) for v in g.outputs)

    model = w.f_varint(1, IR_VERSION)
    model += w.f_bytes(7, graph)
    model += w.f_bytes(8, w.f_varint(2, g.opset_version))
    for k in sorted(g.metadata):
        model += w.f_bytes(14, w.f_str(1, k) + w.f_str(2, g.metadata[k]))
    return model


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _expect(wt, want, offset, what):
    if wt != want:
        raise ParseError(f"{what}: unexpected wire type {wt}", offset)


def _parse_tensor(r: w.Reader, span) -> tuple[str, QTensor]:
    sub = r.sub(span)
    dims, dtype_code, name, raw = [], None, "", None
    floats, int32s, int64s = [], [], []
    for f, wt, v, off in sub:
        if f == 1:
            dims.extend(map(w.to_int64, sub.packed_varints(v) if wt == w.LEN else [v]))
        elif f == 2:
            _expect(wt, w.VARINT, off, "TensorProto.data_type")
            dtype_code = v
        elif f == 8:
            _expect(wt, w.LEN, off, "TensorProto.name")
            name = sub.text(v, off)
        elif f == 9:
            _expect(wt, w.LEN, off, "TensorProto.raw_data")
            raw = sub.raw(v)
        elif f == 4:
            if wt == w.LEN:
                floats.extend(struct.unpack(f"<{(v[1] - v[0]) // 4}f", sub.raw(v)))
            else:
                floats.append(struct.unpack("<f", v)[0])
        elif f == 5:
            int32s.extend(sub.packed_varints(v) if wt == w.LEN else [v])
        elif f == 7:
            int64s.extend(sub.packed_varints(v) if wt == w.LEN else [v])
        elif f == 14 and wt == w.VARINT and v == 1:
            raise ParseError(f"tensor {name!r}: external data is not supported", off)
    try:
        dtype = ElemType.from_onnx(dtype_code)
    except ValueError:
        raise ParseError(f"tensor {name!r}: unsupported data_type {dtype_code}", span[0]) from None
    shape = tuple(dims)
    count = int(np.prod(shape, dtype=np.int64))
    if raw is not None:
        npdt = dtype.np_dtype.newbyteorder("<")
        if len(raw) != count * npdt.itemsize:
            raise ParseError(f"tensor {name!r}: raw_data size mismatch", span[0])
        arr = np.frombuffer(raw, dtype=npdt).astype(dtype.np_dtype)
    elif dtype is ElemType.F32:
        arr = np.array(floats, dtype=np.float32)
    elif dtype is ElemType.F16:
        arr = np.array([x & 0xFFFF for x in int32s], dtype=np.uint16).view(np.float16)
    else:
        vals = [w.to_int64(x) for x in (int32s or int64s)]
        arr = np.array(vals, dtype=np.int64)
    if arr.size != count:
        raise ParseError(f"tensor {name!r}: {arr.size} elements for shape {list(shape)}", span[0])
    try:
        return name, QTensor(dtype, arr.reshape(shape))
    except (ValueError, TypeError) as e:
        raise ParseError(f"tensor {name!r}: {e}", span[0]) from None


def _parse_attr(r: w.Reader, span) -> tuple[str, AttrValue | None]:
    sub = r.sub(span)
    name, kind, vals = "", None, {}
    ints = []
    for f, wt, v, off in sub:
        if f == 1:
            name = sub.text(v, off)
        elif f == 20:
            kind = v
        elif f == 2 and wt == w.FIXED32:
            vals["f"] = float(np.float32(struct.unpack("<f", v)[0]))
        elif f == 3 and wt == w.VARINT:
            vals["i"] = w.to_int64(v)
        elif f == 4 and wt == w.LEN:
            vals["s"] = sub.text(v, off)
        elif f == 5 and wt == w.LEN:
            vals["t"] = _parse_tensor(sub, v)[1]
        elif f == 8:
            ints.extend(map(w.to_int64, sub.packed_varints(v) if wt == w.LEN else [v]))
    if kind == _ATTR_FLOAT:
        return name, vals.get("f", 0.0)
    if kind == _ATTR_INT:
        return name, vals.get("i", 0)
    if kind == _ATTR_STRING:
        return name, vals.get("s", "")
    if kind == _ATTR_TENSOR:
        return name, vals.get("t")
    if kind == _ATTR_INTS:
        return name, tuple(ints)
    return name, None  # attribute kinds the subset never uses


def _parse_node(r: w.Reader, span) -> NodeIR:
    sub = r.sub(span)
    inputs, outputs, name, op, domain, attrs = [], [], "", "", "", {}
    for f, wt, v, off in sub:
        if wt != w.LEN:
            continue
        if f == 1:
            inputs.append(sub.text(v, off))
        elif f == 2:
            outputs.append(sub.text(v, off))
        elif f == 3:
            name = sub.text(v, off)
        elif f == 4:
            op = sub.text(v, off)
        elif f == 7:
            domain = sub.text(v, off)
        elif f == 5:
            k, val = _parse_attr(sub, v)
            if val is not None:
                attrs[k] = val
    if domain not in ("", "ai.onnx"):
        op = f"{domain}:{op}"
    return NodeIR(op, name, tuple(inputs), tuple(outputs), attrs)


def _parse_value_info(r: w.Reader, span) -> ValueInfo:
    sub = r.sub(span)
    name, elem, shape = "", None, None
    for f, wt, v, off in sub:
        if f == 1 and wt == w.LEN:
            name = sub.text(v, off)
        elif f == 2 and wt == w.LEN:
            for f2, wt2, v2, _ in sub.sub(v):
                if f2 != 1 or wt2 != w.LEN:
                    continue  # non-tensor TypeProto variants
                for f3, wt3, v3, off3 in sub.sub(v2):
                    if f3 == 1 and wt3 == w.VARINT:
                        elem = v3
                    elif f3 == 2 and wt3 == w.LEN:
                        shape = []
                        for f4, wt4, v4, _ in sub.sub(v3):
                            if f4 != 1 or wt4 != w.LEN:
                                continue
                            dim: Dim = "?"
                            for f5, wt5, v5, off5 in sub.sub(v4):
                                if f5 == 1 and wt5 == w.VARINT:
                                    dim = w.to_int64(v5)
                                elif f5 == 2 and wt5 == w.LEN:
                                    dim = sub.text(v5, off5)
                            shape.append(dim)
    try:
        dtype = ElemType.from_onnx(elem)
    except ValueError:
        raise ParseError(f"value {name!r}: unsupported element type {elem}", span[0]) from None
    return ValueInfo(name, dtype, None if shape is None else tuple(shape))


def parse(data: bytes) -> GraphIR:
    """Decode ONNX ModelProto bytes into a :class:`GraphIR`.

    Unknown fields are skipped; operators outside the supported set raise
    :class:`UnsupportedOperatorError` naming every offending op_type.
    """
    buf = bytes(data)
    if not buf:
        raise ParseError("empty model", 0)
    r = w.Reader(buf)
    graph_span, opset, metadata = None, None, {}
    for f, wt, v, off in r:
        if f == 7:
            _expect(wt, w.LEN, off, "ModelProto.graph")
            graph_span = v
        elif f == 8:
            _expect(wt, w.LEN, off, "ModelProto.opset_import")
            domain, version = "", None
            for f2, wt2, v2, off2 in r.sub(v):
                if f2 == 1 and wt2 == w.LEN:
                    domain = r.text(v2, off2)
                elif f2 == 2 and wt2 == w.VARINT:
                    version = v2
            if domain in ("", "ai.onnx"):
                opset = version
        elif f == 14:
            _expect(wt, w.LEN, off, "ModelProto.metadata_props")
            k = val = ""
            for f2, wt2, v2, off2 in r.sub(v):
                if f2 == 1 and wt2 == w.LEN:
                    k = r.text(v2, off2)
                elif f2 == 2 and wt2 == w.LEN:
                    val = r.text(v2, off2)
            metadata[k] = val
    if graph_span is None:
        raise ParseError("model has no graph", len(buf))
    if opset is None:
        raise ParseError("model has no default-domain opset import", len(buf))

    nodes, inits, inputs, outputs, name = [], {}, [], [], ""
    for f, wt, v, off in r.sub(graph_span):
        if wt != w.LEN:
            continue
        if f == 1:
            nodes.append(_parse_node(r, v))
        elif f == 2:
            name = r.text(v, off)
        elif f == 5:
            tname, t = _parse_tensor(r, v)
            inits[tname] = t
        elif f == 11:
            inputs.append(_parse_value_info(r, v))
        elif f == 12:
            outputs.append(_parse_value_info(r, v))

    bad = [n.op_type for n in nodes if n.op_type not in SUPPORTED_OPS]
    if bad:
        raise UnsupportedOperatorError(bad)
    inputs = [vi for vi in inputs if vi.name not in inits]
    return GraphIR(name, nodes, inits, inputs, outputs, opset, metadata)
