"""Post-training quantization: min-max calibration, then per-layer scales,
int8 weights, int32 bias and decomposed rescale multipliers emitted through
the layer patterns.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BiasSaturationWarning, CalibrationError, InvalidRangeError
from .graphir import GraphIR
from .patterns import (
    Codification,
    ConvAttrs,
    HwLayerDescriptor,
    InputSpec,
    LayerKind,
    Relu,
    SigmoidF16,
    TanhF16,
    TanhI8,
    build_model,
)
from .qmath import (
    ElemType,
    QTensor,
    compute_symmetric_scale,
    decompose_rescale,
    normalize_rescale,
    quantize_bias,
    quantize_tensor,
    rescale_multiplier,
)

ACTIVATIONS = ("none", "relu", "tanh_i8", "tanh_f16", "sigmoid_f16")
INPUT_SCALE_KEY = "prequant.input_scale"
OUTPUT_SCALE_KEY = "prequant.output_scale"


@dataclass
class FloatLayer:
    name: str
    kind: str  # "fc" or "conv2d"
    weights: np.ndarray  # fc: [out, in]; conv2d: [O, I, kH, kW]
    bias: np.ndarray
    activation: str = "none"
    strides: tuple = (1, 1)
    pads: tuple = (0, 0, 0, 0)
    input_bound: float = 4.0  # tanh_i8 only
    y_scale: float | None = None  # tanh/sigmoid output scale; None = activation default

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32).reshape(-1)
        self.strides = tuple(int(s) for s in self.strides)
        self.pads = tuple(int(p) for p in self.pads)
        if self.kind not in ("fc", "conv2d"):
            raise ValueError(f"{self.name}: kind must be 'fc' or 'conv2d', got {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"{self.name}: unknown activation {self.activation!r}")
        rank = 2 if self.kind == "fc" else 4
        if self.weights.ndim != rank:
            raise ValueError(f"{self.name}: {self.kind} weights must be rank {rank}")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(f"{self.name}: bias length must equal output channels")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


@dataclass
class FloatModelSpec:
    name: str
    input_shape: tuple
    layers: list
    input_name: str = "input"

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        if not self.layers:
            raise ValueError("model has no layers")
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names) or self.input_name in names:
            raise ValueError("layer and input names must be unique")
        prev = None
        for l in self.layers:
            if prev is None:
                if l.kind == "conv2d" and len(self.input_shape) != 4:
                    raise ValueError(f"{l.name}: conv input must be NCHW")
                want = self.input_shape[-1] if l.kind == "fc" else self.input_shape[1]
            else:
                if l.kind == "fc" and prev.kind == "conv2d":
                    raise ValueError(f"{l.name}: fc after conv2d is not supported")
                want = prev.out_channels
            if isinstance(want, int) and want != l.in_channels:
                raise ValueError(f"{l.name}: expects {l.in_channels} input channels, gets {want}")
            prev = l


@dataclass
class CalibrationProfile:
    """Per-tensor max |value|: the model input and every layer output (post-activation)."""

    abs_max: dict = field(default_factory=dict)

    def merge(self, other: "CalibrationProfile") -> "CalibrationProfile":
        keys = list(dict.fromkeys([*self.abs_max, *other.abs_max]))
        return CalibrationProfile(
            {k: max(self.abs_max.get(k, 0.0), other.abs_max.get(k, 0.0)) for k in keys}
        )


def calibrate(model: FloatModelSpec, samples) -> CalibrationProfile:
    from .validate import run_reference

    samples = list(samples)
    if not samples:
        raise CalibrationError("calibration needs at least one sample")
    profile = CalibrationProfile()
    for x in samples:
        acts = run_reference(model, x)
        keys = [model.input_name] + [l.name for l in model.layers]
        profile = profile.merge(
            CalibrationProfile({k: float(np.max(np.abs(acts[k]), initial=0.0)) for k in keys})
        )
    for k, v in profile.abs_max.items():
        if not v > 0:
            raise CalibrationError(f"tensor {k!r} is all zero over the calibration set")
    return profile


@dataclass
class LayerReport:
    name: str
    scale_x: float
    scale_w: float
    scale_y: float
    multiplier: float
    quant_scale: int
    shift_bits: int
    normalized_quant_scale: int
    normalized_shift_bits: int
    bias_saturated: int


@dataclass
class QuantReport:
    codification: str
    input_scale: float
    output_scale: float
    layers: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _activation(layer: FloatLayer):
    a = layer.activation
    if a == "relu":
        return Relu()
    if a == "tanh_i8":
        return TanhI8(layer.input_bound) if layer.y_scale is None else TanhI8(layer.input_bound, layer.y_scale)
    if a == "tanh_f16":
        return TanhF16() if layer.y_scale is None else TanhF16(layer.y_scale)
    if a == "sigmoid_f16":
        return SigmoidF16() if layer.y_scale is None else SigmoidF16(layer.y_scale)
    return None


def _scale_of(profile: CalibrationProfile, key: str) -> float:
    if key not in profile.abs_max:
        raise CalibrationError(f"profile has no range for tensor {key!r}")
    try:
        return compute_symmetric_scale(profile.abs_max[key], ElemType.I8)
    except InvalidRangeError as e:
        raise CalibrationError(f"tensor {key!r}: {e}") from None


def quantize_model(
    model: FloatModelSpec,
    profile: CalibrationProfile,
    codification: Codification = Codification.TWO_MUL,
) -> tuple[GraphIR, QuantReport]:
    scale_x = _scale_of(profile, model.input_name)
    in_dtype = ElemType.I8
    report = QuantReport(codification.value, scale_x, scale_x)
    descs = []
    for layer in model.layers:
        w_max = float(np.max(np.abs(layer.weights), initial=0.0))
        if not w_max > 0:
            raise CalibrationError(f"layer {layer.name!r}: weights are all zero")
        scale_w = compute_symmetric_scale(w_max, ElemType.I8)
        w_q = quantize_tensor(layer.weights, scale_w, ElemType.I8)
        if layer.kind == "fc":
            w_q = QTensor(ElemType.I8, w_q.array.T)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BiasSaturationWarning)
            b_q = quantize_bias(layer.bias, scale_w, scale_x)
        n_sat = 0
        for wmsg in caught:
            report.warnings.append(f"{layer.name}: {wmsg.message}")
            lo, hi = ElemType.I32.range
            n_sat = int(np.count_nonzero((b_q.array == lo) | (b_q.array == hi)))

        act = _activation(layer)
        if isinstance(act, TanhI8):
            # land the accumulator on the tanh-input int8 grid
            pre_scale = act.x_step
            multiplier = rescale_multiplier(scale_w, scale_x, pre_scale)
            scale_y = act.y_scale
        elif isinstance(act, (TanhF16, SigmoidF16)):
            # back to real units; the activation runs in float16
            multiplier = float(np.float32(scale_w) * np.float32(scale_x))
            scale_y = act.y_scale
        else:
            scale_y = _scale_of(profile, layer.name)
            multiplier = rescale_multiplier(scale_w, scale_x, scale_y)
        try:
            rescale = decompose_rescale(multiplier)
        except InvalidRangeError as e:
            raise CalibrationError(f"layer {layer.name!r}: {e}") from None
        norm = normalize_rescale(rescale)
        conv = ConvAttrs(layer.strides, layer.pads) if layer.kind == "conv2d" else None
        kind = LayerKind.FULLY_CONNECTED if layer.kind == "fc" else LayerKind.CONV2D
        desc = HwLayerDescriptor(
            layer.name, kind, w_q, b_q, rescale, codification, act, in_dtype, conv=conv
        )
        descs.append(desc)
        report.layers.append(LayerReport(
            layer.name, scale_x, scale_w, scale_y, multiplier, rescale.quant_scale,
            rescale.shift_bits, norm.quant_scale, norm.shift_bits, n_sat,
        ))
        scale_x, in_dtype = scale_y, desc.output_dtype
    report.output_scale = scale_x
    metadata = {INPUT_SCALE_KEY: repr(report.input_scale), OUTPUT_SCALE_KEY: repr(report.output_scale)}
    g = build_model(
        descs, InputSpec(model.input_name, model.input_shape), name=model.name, metadata=metadata
    )
    return g, report
