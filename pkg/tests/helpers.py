"""Random model generators shared by several test modules."""
import math

import numpy as np

from prequant.patterns import (
    Codification,
    ConvAttrs,
    HwLayerDescriptor,
    LayerKind,
    Relu,
    SigmoidF16,
    TanhF16,
    TanhI8,
)
from prequant.qmath import ElemType, QTensor, decompose_rescale

ACTIVATION_KINDS = ("none", "relu", "tanh_i8", "tanh_f16", "sigmoid_f16")


def random_multiplier(rng, lo=2.0**-16, hi=1.0) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def make_activation(kind, rng):
    if kind == "none":
        return None
    if kind == "relu":
        return Relu()
    if kind == "tanh_i8":
        return TanhI8(float(rng.uniform(0.5, 8.0)), float(rng.uniform(0.5, 2.0)) / 127)
    if kind == "tanh_f16":
        return TanhF16(float(rng.uniform(0.5, 2.0)) / 127)
    return SigmoidF16(float(rng.uniform(0.5, 2.0)) / 255)


def random_descriptor(
    rng,
    name,
    kind=LayerKind.FULLY_CONNECTED,
    in_ch=None,
    out_ch=None,
    activation=None,
    codification=None,
    input_dtype=ElemType.I8,
    max_dim=8,
    kernel=None,
):
    in_ch = in_ch or int(rng.integers(1, max_dim + 1))
    out_ch = out_ch or int(rng.integers(1, max_dim + 1))
    if activation is None:
        activation = ACTIVATION_KINDS[rng.integers(len(ACTIVATION_KINDS))]
    if codification is None:
        codification = (Codification.TWO_MUL, Codification.ONE_MUL)[rng.integers(2)]
    conv = None
    if kind is LayerKind.FULLY_CONNECTED:
        shape = (in_ch, out_ch)
    else:
        kh, kw = kernel or (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        shape = (out_ch, in_ch, kh, kw)
        conv = ConvAttrs(
            (int(rng.integers(1, 3)), int(rng.integers(1, 3))),
            tuple(int(p) for p in rng.integers(0, 2, size=4)),
        )
    w = rng.integers(-128, 128, size=shape, dtype=np.int64)
    b = rng.integers(-5000, 5001, size=out_ch, dtype=np.int64)
    return HwLayerDescriptor(
        name,
        kind,
        QTensor(ElemType.I8, w),
        QTensor(ElemType.I32, b),
        decompose_rescale(random_multiplier(rng)),
        codification,
        make_activation(activation, rng),
        input_dtype,
        conv=conv,
    )


def random_layer_list(rng, n_layers=None, kind=None, activations=None):
    """A chain of FC or conv descriptors whose dtypes line up."""
    n_layers = n_layers or int(rng.integers(1, 4))
    if kind is None:
        kind = (LayerKind.FULLY_CONNECTED, LayerKind.CONV2D)[rng.integers(2)]
    dtype = (ElemType.I8, ElemType.U8)[rng.integers(2)]
    ch = int(rng.integers(1, 6))
    layers = []
    for i in range(n_layers):
        act = activations[i] if activations else None
        d = random_descriptor(
            rng, f"layer{i}", kind, in_ch=ch, activation=act, input_dtype=dtype, max_dim=5,
            kernel=(1, 1) if kind is LayerKind.CONV2D and i else None,
        )
        layers.append(d)
        ch, dtype = d.out_channels, d.output_dtype
    return layers


def input_shape_for(layers, rng, batch=None):
    first = layers[0]
    batch = batch or int(rng.integers(1, 4))
    if first.kind is LayerKind.FULLY_CONNECTED:
        return (batch, first.in_channels)
    return (batch, first.in_channels, int(rng.integers(4, 8)), int(rng.integers(4, 8)))


def random_input(rng, shape, dtype=ElemType.I8) -> QTensor:
    lo, hi = dtype.range
    return QTensor(dtype, rng.integers(lo, hi + 1, size=shape, dtype=np.int64))


def exact_scenario(rng, n_layers=1, activation="none", in_features=3, width=2, batch=4):
    """A float model, calibration profile and samples where quantization is lossless.

    Every scale is a power of two, weights carry one +-127 entry (so the
    min-max weight scale is exactly 2**-7), every value sits on its grid, and
    every accumulator fits the int8 output grid without rescaling loss.
    """
    from prequant.quantizer import CalibrationProfile, FloatLayer, FloatModelSpec

    sx0 = 2.0**-3
    while True:
        x_num = rng.integers(-1, 2, size=(batch, in_features))
        layers, profile = [], {"input": 127 * sx0}
        h, sx, ok, fan_in = x_num, sx0, True, in_features
        for i in range(n_layers):
            w_num = rng.integers(-2, 3, size=(width, fan_in))
            r, c = rng.integers(width), rng.integers(fan_in)
            w_num[r, c] = 127 * (1 if rng.integers(2) else -1)
            b_num = rng.integers(-3, 4, size=width)
            sw, sy = 2.0**-7, 2.0**-7 * sx
            acc = h @ w_num.T + b_num
            if activation == "relu":
                acc = np.maximum(acc, 0)
            if np.abs(acc).max() > 127:
                ok = False
                break
            layers.append(FloatLayer(f"fc{i + 1}", "fc", w_num * sw, b_num * sw * sx, activation))
            profile[f"fc{i + 1}"] = 127 * sy
            h, sx, fan_in = acc, sy, width
        if ok:
            model = FloatModelSpec("exact", ("N", in_features), layers)
            return model, CalibrationProfile(profile), [x_num.astype(np.float32) * sx0]
