"""JSON documents for tensors, float models, layer descriptors and reports.

Tensor document::

    {"name": "x", "dtype": "int8", "shape": [1, 2], "data": [1, 2]}

A tensor *file* holds either one tensor document or ``{"tensors": [...]}``.

Float model document::

    {"name": "mlp", "input": {"name": "input", "shape": ["N", 16]},
     "layers": [{"name": "fc1", "kind": "fc", "activation": "relu",
                 "weights": <tensor doc, [out, in]>, "bias": <tensor doc>},
                {"name": "c1", "kind": "conv2d", "strides": [1, 1], "pads": [0, 0, 0, 0],
                 "activation": "tanh_i8", "input_bound": 4.0, "y_scale": 0.0078740157, ...}]}
"""
from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .patterns import (
    HwLayerDescriptor,
    LayerKind,
    Relu,
    SigmoidF16,
    TanhF16,
    TanhI8,
)
from .qmath import ElemType, QTensor
from .quantizer import ACTIVATIONS, FloatLayer, FloatModelSpec


class DocumentError(ValueError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _number(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)  # JSON has no inf/nan literals
    return v


# -- tensors -----------------------------------------------------------------

def tensor_to_doc(name: str, t: QTensor) -> dict:
    data = t.array.ravel().tolist()
    if not t.dtype.is_int:
        data = [_number(float(v)) for v in data]
    return {"name": name, "dtype": t.dtype.value, "shape": list(t.shape), "data": data}


def tensor_from_doc(doc: dict) -> tuple[str, QTensor]:
    try:
        dtype = ElemType(doc["dtype"])
        shape = tuple(int(s) for s in doc["shape"])
        data = [float(v) if isinstance(v, str) else v for v in doc["data"]]
    except (KeyError, TypeError, ValueError) as e:
        raise DocumentError(f"bad tensor document: {e}") from None
    if len(data) != int(np.prod(shape, dtype=np.int64)):
        raise DocumentError(f"tensor {doc.get('name')!r}: {len(data)} values for shape {list(shape)}")
    try:
        src = np.asarray(data) if dtype.is_int else np.asarray(data, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DocumentError(f"tensor {doc.get('name')!r}: {e}") from None
    try:
        return doc.get("name", ""), QTensor(dtype, src.reshape(shape))
    except (TypeError, ValueError) as e:
        raise DocumentError(f"tensor {doc.get('name')!r}: {e}") from None


def load_tensors(text: str) -> list[tuple[str, QTensor]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError(f"invalid JSON: {e}") from None
    docs = doc["tensors"] if isinstance(doc, dict) and "tensors" in doc else [doc]
    return [tensor_from_doc(d) for d in docs]


def tensors_to_doc(tensors: dict) -> dict:
    return {"tensors": [tensor_to_doc(k, v) for k, v in tensors.items()]}


# -- float models ------------------------------------------------------------

def model_from_doc(doc: dict) -> FloatModelSpec:
    try:
        layers = []
        for ld in doc["layers"]:
            _, w = tensor_from_doc(ld["weights"])
            _, b = tensor_from_doc(ld["bias"])
            act = ld.get("activation", "none")
            if act not in ACTIVATIONS:
                raise DocumentError(f"layer {ld.get('name')!r}: unknown activation {act!r}")
            layers.append(FloatLayer(
                name=ld["name"], kind=ld["kind"], weights=w.array, bias=b.array,
                activation=act,
                strides=tuple(ld.get("strides", (1, 1))),
                pads=tuple(ld.get("pads", (0, 0, 0, 0))),
                input_bound=float(ld.get("input_bound", 4.0)),
                y_scale=ld.get("y_scale"),
            ))
        inp = doc["input"]
        return FloatModelSpec(doc.get("name", "model"), tuple(inp["shape"]), layers, inp.get("name", "input"))
    except DocumentError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise DocumentError(f"bad model document: {e}") from None


def model_to_doc(model: FloatModelSpec) -> dict:
    layers = []
    for l in model.layers:
        d = {
            "name": l.name,
            "kind": l.kind,
            "activation": l.activation,
            "weights": tensor_to_doc("weights", QTensor(ElemType.F32, l.weights)),
            "bias": tensor_to_doc("bias", QTensor(ElemType.F32, l.bias)),
        }
        if l.kind == "conv2d":
            d["strides"], d["pads"] = list(l.strides), list(l.pads)
        if l.activation == "tanh_i8":
            d["input_bound"] = l.input_bound
        if l.y_scale is not None:
            d["y_scale"] = l.y_scale
        layers.append(d)
    return {
        "name": model.name,
        "input": {"name": model.input_name, "shape": list(model.input_shape)},
        "layers": layers,
    }


# -- descriptors ---------------------------------------------------------------

def _digest(t: QTensor) -> str:
    le = np.ascontiguousarray(t.array.astype(t.dtype.np_dtype.newbyteorder("<")))
    return "sha256:" + hashlib.sha256(le.tobytes()).hexdigest()


def _activation_doc(act) -> dict:
    if act is None:
        return {"kind": "none"}
    if isinstance(act, Relu):
        return {"kind": "relu"}
    if isinstance(act, TanhI8):
        return {"kind": "tanh_i8", "input_bound": act.input_bound, "x_step": act.x_step,
                "y_scale": act.y_scale}
    if isinstance(act, TanhF16):
        return {"kind": "tanh_f16", "y_scale": act.y_scale}
    if isinstance(act, SigmoidF16):
        return {"kind": "sigmoid_f16", "y_scale": act.y_scale}
    raise TypeError(act)


def descriptor_to_doc(d: HwLayerDescriptor, with_data: bool = False) -> dict:
    out = {
        "name": d.name,
        "kind": d.kind.value,
        "input_dtype": d.input_dtype.value,
        "output_dtype": d.output_dtype.value,
        "weights": {"dtype": "int8", "shape": list(d.weights.shape), "digest": _digest(d.weights)},
        "bias": {"dtype": "int32", "shape": list(d.bias.shape), "digest": _digest(d.bias)},
        "rescale": {
            "codification": d.codification.value,
            "multiplier": d.rescale.multiplier,
            "quant_scale": d.rescale.quant_scale,
            "shift_bits": d.rescale.shift_bits,
        },
        "activation": _activation_doc(d.activation),
    }
    if d.kind is LayerKind.CONV2D:
        out["conv"] = {
            "strides": list(d.conv.strides),
            "pads": list(d.conv.pads),
            "kernel_shape": list(d.conv.kernel_shape),
        }
    if with_data:
        out["weights"]["data"] = d.weights.data
        out["bias"]["data"] = d.bias.data
    return out


def descriptors_to_doc(descs, with_data: bool = False) -> dict:
    return {"layers": [descriptor_to_doc(d, with_data) for d in descs]}


def report_to_doc(obj: dict) -> dict:
    return {k: _number(v) for k, v in obj.items()}
