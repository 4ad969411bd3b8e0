import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import ACTIVATION_KINDS, random_descriptor, random_layer_list
from prequant.errors import BuildError, CodificationError, PatternMismatchError
from prequant.graphir import SUPPORTED_OPS, NodeIR, validate
from prequant.interp import run
from prequant.patterns import (
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
    extract,
)
from prequant.qmath import ElemType, QTensor, RescaleSpec

FC = LayerKind.FULLY_CONNECTED


def tiny_layer(name="fc1", activation=None, codification=Codification.TWO_MUL):
    return HwLayerDescriptor(
        name, FC,
        QTensor(ElemType.I8, [[3], [4]]),
        QTensor(ElemType.I32, [5]),
        RescaleSpec(1.0, 1, 0),
        codification,
        activation,
    )


@pytest.mark.parametrize(
    "activation,codification,ops",
    [
        (None, Codification.TWO_MUL,
         ["MatMulInteger", "Add", "Cast", "Mul", "Mul", "QuantizeLinear"]),
        (Relu(), Codification.ONE_MUL,
         ["MatMulInteger", "Add", "Cast", "Mul", "Relu", "QuantizeLinear"]),
        (TanhI8(), Codification.TWO_MUL,
         ["MatMulInteger", "Add", "Cast", "Mul", "Mul", "QuantizeLinear",
          "Cast", "Mul", "Tanh", "QuantizeLinear"]),
        (TanhF16(), Codification.TWO_MUL,
         ["MatMulInteger", "Add", "Cast", "Mul", "Mul", "Cast", "Tanh", "Cast", "QuantizeLinear"]),
        (SigmoidF16(), Codification.ONE_MUL,
         ["MatMulInteger", "Add", "Cast", "Mul", "Cast", "Sigmoid", "Cast", "QuantizeLinear"]),
    ],
)
def test_node_sequences(activation, codification, ops):
    g = build_model([tiny_layer(activation=activation, codification=codification)])
    assert [n.op_type for n in g.nodes] == ops
    assert validate(g) == []
    assert g.outputs[0].dtype is (ElemType.U8 if isinstance(activation, SigmoidF16) else ElemType.I8)


def test_value_names_carry_the_layer():
    g = build_model([tiny_layer()])
    assert {"fc1/W_q", "fc1/B_q", "fc1/quant_scale", "fc1/quant_shift"} <= set(g.initializers)
    assert all(n.name.startswith("fc1/") for n in g.nodes)


def test_two_layer_mlp_has_twelve_nodes():
    # FC+Relu with one rescale Mul, then a plain FC with two
    l1 = tiny_layer(activation=Relu(), codification=Codification.ONE_MUL)
    l2 = dataclasses.replace(tiny_layer("fc2"), weights=QTensor(ElemType.I8, [[2]]))
    g = build_model([l1, l2])
    assert len(g.nodes) == 12
    assert validate(g) == []
    assert [n.op_type for n in g.nodes].count("MatMulInteger") == 2


def test_quantize_linear_zero_points_are_zero():
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = build_model(random_layer_list(rng, kind=FC))
        for n in g.nodes:
            if n.op_type == "QuantizeLinear":
                zp = g.initializers[n.inputs[2]]
                assert zp.data == [0]
                assert zp.dtype in (ElemType.I8, ElemType.U8)


def test_conv_bias_is_broadcast_shaped():
    rng = np.random.default_rng(0)
    d = random_descriptor(rng, "c1", LayerKind.CONV2D, in_ch=2, out_ch=3)
    g = build_model([d], InputSpec("input", (1, 2, 6, 6)))
    assert g.initializers["c1/B_q"].shape == (1, 3, 1, 1)


def test_descriptor_invariants():
    with pytest.raises(BuildError):
        dataclasses.replace(tiny_layer(), bias=QTensor(ElemType.I32, [1, 2]))
    with pytest.raises(BuildError):
        dataclasses.replace(tiny_layer(), weights=QTensor(ElemType.I32, [[3], [4]]))
    with pytest.raises(BuildError):
        dataclasses.replace(tiny_layer(activation=SigmoidF16()), output_dtype=ElemType.I8)
    with pytest.raises(BuildError):
        dataclasses.replace(tiny_layer(), conv=ConvAttrs())
    with pytest.raises(BuildError):
        TanhI8(input_bound=0.0)


def test_build_model_checks_chain():
    a = tiny_layer("a", activation=SigmoidF16())
    b = dataclasses.replace(tiny_layer("b"), weights=QTensor(ElemType.I8, [[1]]))
    with pytest.raises(BuildError):
        build_model([a, b])  # uint8 output feeding an int8 input
    build_model([a, dataclasses.replace(b, input_dtype=ElemType.U8)])
    with pytest.raises(BuildError):
        build_model([tiny_layer("a"), tiny_layer("a")])
    with pytest.raises(BuildError):
        build_model([])


# -- extraction -------------------------------------------------------------

def test_extract_tiny_fc():
    (d,) = extract(build_model([tiny_layer()]))
    assert d.kind is FC and d.codification is Codification.TWO_MUL
    assert d == tiny_layer()


@pytest.mark.parametrize("seed", range(25))
def test_extract_recovers_codified_descriptors(seed):
    rng = np.random.default_rng(seed)
    layers = random_layer_list(rng)
    shape = None if layers[0].kind is FC else (1, layers[0].in_channels, 7, 7)
    g = build_model(layers, InputSpec("input", shape))
    assert extract(g) == [d.codified() for d in layers]


def test_tanh_bound_shares_a_step_near_binade_top():
    # both bounds round to the same fp32 step; extraction can only see the step
    a, b = TanhI8(7.983227729797363), TanhI8(7.9832282066345215)
    assert a.input_bound != b.input_bound and a.x_step == b.x_step
    da = tiny_layer(activation=a).codified()
    db = tiny_layer(activation=b).codified()
    assert da == db


def test_codified_is_idempotent():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d = random_descriptor(rng, "x").codified()
        assert d.codified() == d


def _replace_init(g, name, value):
    return dataclasses.replace(g, initializers=dict(g.initializers, **{name: value}))


def test_non_power_of_two_shift_is_a_codification_error():
    g = build_model([tiny_layer()])
    bad = _replace_init(g, "fc1/quant_shift", QTensor(ElemType.F32, 0.3))
    with pytest.raises(CodificationError):
        extract(bad)


def test_fractional_quant_scale_is_a_codification_error():
    g = build_model([tiny_layer()])
    with pytest.raises(CodificationError):
        extract(_replace_init(g, "fc1/quant_scale", QTensor(ElemType.F32, 2.5)))


def test_unmatched_node_is_named():
    g = build_model([tiny_layer()])
    nodes = list(g.nodes)
    # splice a Relu between Cast and the first Mul
    cast = nodes[2]
    nodes[2] = dataclasses.replace(cast, outputs=("tmp",))
    nodes.insert(3, NodeIR("Relu", "intruder", ["tmp"], [cast.outputs[0]]))
    bad = dataclasses.replace(g, nodes=nodes)
    assert validate(bad) == []
    with pytest.raises(PatternMismatchError) as e:
        extract(bad)
    assert "intruder" in str(e.value)


def test_dangling_node_is_a_mismatch():
    g = build_model([tiny_layer()])
    extra = NodeIR("Relu", "stray", ["fc1/acc_f32"], ["stray_out"])
    with pytest.raises(PatternMismatchError) as e:
        extract(dataclasses.replace(g, nodes=list(g.nodes) + [extra]))
    assert "stray" in str(e.value)


# -- codification equivalence --------------------------------------------------

@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from(ACTIVATION_KINDS))
def test_one_mul_and_two_mul_agree_within_one_step(seed, act):
    rng = np.random.default_rng(seed)
    d2 = random_descriptor(rng, "fc", activation=act, codification=Codification.TWO_MUL)
    d1 = dataclasses.replace(d2, codification=Codification.ONE_MUL)
    x = QTensor(ElemType.I8, rng.integers(-128, 128, size=(4, d2.in_channels)))
    y2 = run(build_model([d2]), {"input": x})["output"].array.astype(int)
    y1 = run(build_model([d1]), {"input": x})["output"].array.astype(int)
    assert np.max(np.abs(y2 - y1)) <= 1


def test_emitted_ops_are_in_the_closed_set():
    rng = np.random.default_rng(9)
    for _ in range(20):
        layers = random_layer_list(rng)
        shape = None if layers[0].kind is FC else (1, layers[0].in_channels, 5, 5)
        g = build_model(layers, InputSpec("input", shape))
        assert {n.op_type for n in g.nodes} <= SUPPORTED_OPS
