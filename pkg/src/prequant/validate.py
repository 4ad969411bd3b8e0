"""fp32 reference execution and quantized-vs-reference error reporting."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import MissingScaleError
from .graphir import GraphIR
from .interp import ExecStats, conv2d, run
from .qmath import dequantize_tensor, quantize_tensor
from .quantizer import INPUT_SCALE_KEY, OUTPUT_SCALE_KEY, FloatModelSpec


def _apply_activation(kind: str, y: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(y, np.float32(0))
    if kind in ("tanh_i8", "tanh_f16"):
        return np.tanh(y)
    if kind == "sigmoid_f16":
        with np.errstate(over="ignore"):
            return (np.float32(1) / (np.float32(1) + np.exp(-y))).astype(np.float32)
    return y


def run_reference(model: FloatModelSpec, x) -> dict[str, np.ndarray]:
    """Plain fp32 forward pass.

    Returns the input under ``model.input_name`` and every layer's
    post-activation output under the layer name (pre-activation under
    ``"<layer>:pre"``).
    """
    x = np.asarray(x, dtype=np.float32)
    out = {model.input_name: x}
    for layer in model.layers:
        if layer.kind == "fc":
            if x.shape[-1] != layer.in_channels:
                raise ValueError(
                    f"{layer.name}: expected {layer.in_channels} features, got {x.shape[-1]}"
                )
            y = (x @ layer.weights.T + layer.bias).astype(np.float32)
        else:
            if x.ndim != 4 or x.shape[1] != layer.in_channels:
                raise ValueError(f"{layer.name}: expected NCHW input with {layer.in_channels} channels")
            y = conv2d(x, layer.weights, layer.strides, layer.pads).astype(np.float32)
            y = y + layer.bias.reshape(1, -1, 1, 1)
        out[f"{layer.name}:pre"] = y
        x = _apply_activation(layer.activation, y).astype(np.float32)
        out[layer.name] = x
    return out


@dataclass
class ErrorReport:
    output: str
    samples: int
    elements: int
    output_scale: float
    max_abs_error: float
    mean_abs_error: float
    max_error_steps: float
    sqnr_db: float  # inf when the error is exactly zero
    saturated: int
    cast_inexact: int

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def graph_scales(g: GraphIR) -> tuple[float, float]:
    try:
        return float(g.metadata[INPUT_SCALE_KEY]), float(g.metadata[OUTPUT_SCALE_KEY])
    except (KeyError, ValueError):
        raise MissingScaleError(
            f"model lacks {INPUT_SCALE_KEY!r}/{OUTPUT_SCALE_KEY!r} metadata"
        ) from None


def compare(model: FloatModelSpec, g: GraphIR, inputs) -> ErrorReport:
    """Quantize each input, run the graph, dequantize, and measure against fp32."""
    inputs = list(inputs)
    if not inputs:
        raise ValueError("compare needs at least one input sample")
    in_scale, out_scale = graph_scales(g)
    gin, gout = g.inputs[0], g.outputs[0]
    stats = ExecStats()
    abs_errs, sq_errs, sq_sig = [], [], []
    max_err = 0.0
    for x in inputs:
        ref = run_reference(model, x)[model.layers[-1].name].astype(np.float64)
        xq = quantize_tensor(np.asarray(x, dtype=np.float32), in_scale, gin.dtype)
        yq = run(g, {gin.name: xq}, stats=stats)[gout.name]
        y = dequantize_tensor(yq, out_scale).array.astype(np.float64)
        if y.shape != ref.shape:
            raise ValueError(f"output shape {y.shape} differs from reference {ref.shape}")
        err = np.abs(y - ref).ravel()
        max_err = max(max_err, float(err.max(initial=0.0)))
        abs_errs.extend(err.tolist())
        sq_errs.extend((err * err).tolist())
        sq_sig.extend((ref * ref).ravel().tolist())
    n = len(abs_errs)
    noise = math.fsum(sq_errs)
    signal = math.fsum(sq_sig)
    if noise == 0:
        sqnr = math.inf
    elif signal == 0:
        sqnr = -math.inf
    else:
        sqnr = 10.0 * math.log10(signal / noise)
    return ErrorReport(
        output=gout.name,
        samples=len(inputs),
        elements=n,
        output_scale=out_scale,
        max_abs_error=max_err,
        mean_abs_error=math.fsum(abs_errs) / n if n else 0.0,
        max_error_steps=max_err / out_scale,
        sqnr_db=sqnr,
        saturated=stats.saturated,
        cast_inexact=stats.cast_inexact,
    )
