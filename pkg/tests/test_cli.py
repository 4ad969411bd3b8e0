import dataclasses
import json
from pathlib import Path

import numpy as np

from helpers import exact_scenario
from prequant.cli import (
    EXIT_CALIBRATION,
    EXIT_GRAPH,
    EXIT_IO,
    EXIT_OK,
    EXIT_OVERFLOW,
    EXIT_PATTERN,
    EXIT_THRESHOLD,
    main,
)
from prequant.documents import dumps, model_to_doc, tensor_to_doc
from prequant.graphir import GraphIR, NodeIR, ValueInfo, parse, serialize
from prequant.patterns import (
    Codification,
    HwLayerDescriptor,
    InputSpec,
    LayerKind,
    TanhI8,
    build_model,
)
from prequant.qmath import ElemType, QTensor, RescaleSpec, decompose_rescale
from prequant.quantizer import FloatLayer, FloatModelSpec, quantize_model

GOLDEN = Path(__file__).parent / "golden"


def write_json(path, obj):
    path.write_text(dumps(obj))
    return str(path)


def f32_doc(name, x):
    return tensor_to_doc(name, QTensor(ElemType.F32, np.asarray(x, dtype=np.float32)))


def fixture_mlp(tmp_path):
    rng = np.random.default_rng(7)
    model = FloatModelSpec("mlp", ("N", 8), [
        FloatLayer("fc1", "fc", rng.standard_normal((6, 8)), rng.standard_normal(6) * 0.1, "relu"),
        FloatLayer("fc2", "fc", rng.standard_normal((4, 6)), rng.standard_normal(4) * 0.1),
    ])
    calib = [rng.uniform(-1, 1, (1, 8)) for _ in range(10)]
    mpath = write_json(tmp_path / "mlp.json", model_to_doc(model))
    cpaths = [write_json(tmp_path / f"calib{i}.json", f32_doc("x", c)) for i, c in enumerate(calib)]
    return model, mpath, cpaths


# -- quantize --------------------------------------------------------------------

def test_quantize_writes_parseable_model(tmp_path):
    _, mpath, cpaths = fixture_mlp(tmp_path)
    out, rep = tmp_path / "m.onnx", tmp_path / "report.json"
    assert main(["quantize", mpath, *cpaths, "--out", str(out), "--report", str(rep)]) == EXIT_OK
    g = parse(out.read_bytes())
    assert serialize(g) == out.read_bytes()
    report = json.loads(rep.read_text())
    assert report["codification"] == "2mul" and len(report["layers"]) == 2


def test_quantize_is_deterministic(tmp_path):
    _, mpath, cpaths = fixture_mlp(tmp_path)
    outs = []
    for i in range(2):
        o, r = tmp_path / f"m{i}.onnx", tmp_path / f"r{i}.json"
        assert main(["quantize", mpath, *cpaths, "--codification", "1mul", "--out", str(o),
                     "--report", str(r)]) == EXIT_OK
        outs.append((o.read_bytes(), r.read_bytes()))
    assert outs[0] == outs[1]


def test_quantize_zero_weights_exit_2(tmp_path):
    model = FloatModelSpec("z", ("N", 2), [FloatLayer("fc1", "fc", [[0.0, 0.0]], [0.5])])
    mpath = write_json(tmp_path / "z.json", model_to_doc(model))
    cpath = write_json(tmp_path / "c.json", f32_doc("x", [[1.0, -1.0]]))
    assert main(["quantize", mpath, cpath, "--out", str(tmp_path / "o.onnx")]) == EXIT_CALIBRATION


def test_quantize_missing_file_exit_1(tmp_path, capsys):
    code = main(["quantize", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.onnx")])
    assert code == EXIT_IO
    assert "cannot read" in capsys.readouterr().err


def test_usage_error_exit_1(capsys):
    assert main(["quantize"]) == EXIT_IO
    assert main(["frobnicate"]) == EXIT_IO


# -- run -------------------------------------------------------------------------

def test_run_golden_tiny_fc(tmp_path):
    out = tmp_path / "y.json"
    code = main(["run", str(GOLDEN / "tiny_fc.onnx"), str(GOLDEN / "tiny_fc_input.json"), "--out", str(out)])
    assert code == EXIT_OK
    assert out.read_text() == (GOLDEN / "tiny_fc_output.json").read_text()


def test_run_to_stdout(capsys):
    assert main(["run", str(GOLDEN / "tiny_fc.onnx"), str(GOLDEN / "tiny_fc_input.json")]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["tensors"][0]["data"] == [16]


def test_run_dtype_mismatch_exit_3(tmp_path):
    x = write_json(tmp_path / "x.json", tensor_to_doc("X_q", QTensor(ElemType.U8, [[1, 2]])))
    assert main(["run", str(GOLDEN / "tiny_fc.onnx"), x]) == EXIT_GRAPH


def test_run_overflow_exit_4(tmp_path):
    d = HwLayerDescriptor(
        "fc1", LayerKind.FULLY_CONNECTED, QTensor(ElemType.I8, np.full((4, 1), 127)),
        QTensor(ElemType.I32, [2**31 - 1000]), RescaleSpec(1.0, 1, 0),
    )
    model = tmp_path / "ovf.onnx"
    model.write_bytes(serialize(build_model([d])))
    x = write_json(tmp_path / "x.json", tensor_to_doc("input", QTensor(ElemType.I8, [[127] * 4])))
    assert main(["run", str(model), x]) == EXIT_OVERFLOW


def test_run_float16_input_is_rerounded(tmp_path):
    g = GraphIR("h", [NodeIR("Tanh", "t", ["x"], ["y"])], {},
                [ValueInfo("x", ElemType.F16, (1,))], [ValueInfo("y", ElemType.F16, (1,))])
    model = tmp_path / "h.onnx"
    model.write_bytes(serialize(g))
    x = write_json(tmp_path / "x.json", {"name": "x", "dtype": "float16", "shape": [1], "data": [2049.0]})
    out = tmp_path / "y.json"
    assert main(["run", str(model), x, "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["tensors"][0]["data"] == [1.0]


# -- extract ----------------------------------------------------------------------

def test_extract_golden_tiny_fc(tmp_path):
    out = tmp_path / "d.json"
    assert main(["extract", str(GOLDEN / "tiny_fc.onnx"), "--out", str(out), "--with-data"]) == EXIT_OK
    (layer,) = json.loads(out.read_text())["layers"]
    assert layer["kind"] == "fc"
    assert layer["rescale"] == {"codification": "2mul", "multiplier": 1.0, "quant_scale": 1, "shift_bits": 0}
    assert layer["weights"]["data"] == [3, 4] and layer["bias"]["data"] == [5]


def test_extract_conv_and_tanh(tmp_path):
    rng = np.random.default_rng(0)
    conv = HwLayerDescriptor(
        "conv1", LayerKind.CONV2D, QTensor(ElemType.I8, rng.integers(-128, 128, (2, 1, 3, 3))),
        QTensor(ElemType.I32, [10, -10]), decompose_rescale(0.01), Codification.ONE_MUL,
        TanhI8(3.0),
    )
    model = tmp_path / "c.onnx"
    model.write_bytes(serialize(build_model([conv], InputSpec("input", (1, 1, 5, 5)))))
    assert main(["extract", str(model), "--out", str(tmp_path / "d.json")]) == EXIT_OK
    (layer,) = json.loads((tmp_path / "d.json").read_text())["layers"]
    assert layer["kind"] == "conv2d"
    spec = decompose_rescale(float(np.float32(0.01)))
    assert (layer["rescale"]["quant_scale"], layer["rescale"]["shift_bits"]) == (spec.quant_scale, spec.shift_bits)
    assert layer["activation"]["kind"] == "tanh_i8"
    assert layer["activation"]["input_bound"] == 3.0
    assert layer["conv"]["kernel_shape"] == [3, 3]
    assert layer["weights"]["digest"].startswith("sha256:") and "data" not in layer["weights"]


def test_extract_nonconforming_exit_5(tmp_path, capsys):
    g = GraphIR("r", [NodeIR("Relu", "lonely_relu", ["x"], ["y"])], {},
                [ValueInfo("x", ElemType.F32, (2,))], [ValueInfo("y", ElemType.F32, (2,))])
    model = tmp_path / "r.onnx"
    model.write_bytes(serialize(g))
    assert main(["extract", str(model)]) == EXIT_PATTERN
    assert "lonely_relu" in capsys.readouterr().err


# -- validate ----------------------------------------------------------------------

def _exact_cli_setup(tmp_path):
    model, profile, samples = exact_scenario(np.random.default_rng(5), 1, "none")
    g, _ = quantize_model(model, profile)
    onnx = tmp_path / "exact.onnx"
    onnx.write_bytes(serialize(g))
    mpath = write_json(tmp_path / "model.json", model_to_doc(model))
    spath = write_json(tmp_path / "s.json", {"tensors": [f32_doc("x", s) for s in samples]})
    return g, onnx, mpath, spath


def test_validate_exact_exit_0(tmp_path, capsys):
    _, onnx, mpath, spath = _exact_cli_setup(tmp_path)
    assert main(["validate", mpath, str(onnx), spath]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["max_abs_error"] == 0.0 and report["sqnr_db"] == "inf"


def test_validate_corrupted_scale_exit_6(tmp_path):
    g, onnx, mpath, spath = _exact_cli_setup(tmp_path)
    inits = dict(g.initializers)
    inits["fc1/quant_scale"] = QTensor(ElemType.F32, inits["fc1/quant_scale"].array * 0.5)
    onnx.write_bytes(serialize(dataclasses.replace(g, initializers=inits)))
    assert main(["validate", mpath, str(onnx), spath]) == EXIT_THRESHOLD


def test_validate_missing_samples_exit_1(tmp_path):
    _, onnx, mpath, _ = _exact_cli_setup(tmp_path)
    assert main(["validate", mpath, str(onnx)]) == EXIT_IO
    assert main(["validate", mpath, str(onnx), str(tmp_path / "absent.json")]) == EXIT_IO


# -- inspect -----------------------------------------------------------------------

def test_inspect_tiny_fc_table(capsys):
    assert main(["inspect", str(GOLDEN / "tiny_fc.onnx")]) == EXIT_OK
    out = capsys.readouterr().out
    table = out.split("nodes:\n")[1].split("\n\n")[0].splitlines()
    assert len(table) == 1 + 6  # header + six operators
    assert "MatMulInteger" in table[1] and "QuantizeLinear" in table[6]
    assert "Y_intermediate:int32" in out


def test_inspect_empty_file_exit_1(tmp_path):
    empty = tmp_path / "empty.onnx"
    empty.write_bytes(b"")
    assert main(["inspect", str(empty)]) == EXIT_IO


def test_inspect_unsupported_op_exit_3(tmp_path, capsys):
    data = (GOLDEN / "tiny_fc.onnx").read_bytes().replace(b"Cast", b"Gemm")
    bad = tmp_path / "bad.onnx"
    bad.write_bytes(data)
    assert main(["inspect", str(bad)]) == EXIT_GRAPH
    assert "Gemm" in capsys.readouterr().err


def test_verbose_prints_version_only_to_stderr(capsys):
    assert main(["--verbose", "inspect", str(GOLDEN / "tiny_fc.onnx")]) == EXIT_OK
    captured = capsys.readouterr()
    assert "prequant" in captured.err and "0.1.0" not in captured.out


def test_golden_bytes_are_stable():
    data = (GOLDEN / "tiny_fc.onnx").read_bytes()
    assert serialize(parse(data)) == data
