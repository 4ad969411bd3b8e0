"""Regenerate the checked-in tiny FC golden files under tests/golden/.

The graph is assembled node by node (not through the pattern builder) so the
extract and run tests see an independently written model. The expected
output is the hand-evaluated chain 1*3 + 2*4 + 5 = 16, rescaled by 1 * 2**0.

    python3 scripts/make_golden.py [--check-ort]
"""
import argparse
from pathlib import Path

from prequant.documents import dumps, tensors_to_doc
from prequant.graphir import GraphIR, NodeIR, ValueInfo, check, serialize
from prequant.interp import run
from prequant.qmath import ElemType, QTensor

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def tiny_fc_graph() -> GraphIR:
    f32 = ElemType.F32.onnx_code
    nodes = [
        NodeIR("MatMulInteger", "MatMulInteger_0", ["X_q", "W_q"], ["Y_int"]),
        NodeIR("Add", "Add_0", ["Y_int", "B_q"], ["Y_intermediate"]),
        NodeIR("Cast", "Cast_0", ["Y_intermediate"], ["Y_f32"], {"to": f32}),
        NodeIR("Mul", "Mul_quant_scale", ["Y_f32", "Quant_scale"], ["Y_scaled"]),
        NodeIR("Mul", "Mul_quant_shift", ["Y_scaled", "Quant_shift"], ["Y_rescaled"]),
        NodeIR("QuantizeLinear", "QuantizeLinear_0", ["Y_rescaled", "one", "zero"], ["Y_q"]),
    ]
    inits = {
        "W_q": QTensor(ElemType.I8, [[3], [4]]),
        "B_q": QTensor(ElemType.I32, [5]),
        "Quant_scale": QTensor(ElemType.F32, 1.0),
        "Quant_shift": QTensor(ElemType.F32, 1.0),
        "one": QTensor(ElemType.F32, 1.0),
        "zero": QTensor(ElemType.I8, 0),
    }
    return check(GraphIR(
        "tiny_fc", nodes, inits,
        [ValueInfo("X_q", ElemType.I8, (1, 2))],
        [ValueInfo("Y_q", ElemType.I8, (1, 1))],
    ))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--check-ort", action="store_true", help="also run the model in onnxruntime")
    args = p.parse_args()
    g = tiny_fc_graph()
    x = QTensor(ElemType.I8, [[1, 2]])
    y = run(g, {"X_q": x})["Y_q"]
    assert y.data == [1 * 3 + 2 * 4 + 5], y.data
    GOLDEN.mkdir(parents=True, exist_ok=True)
    (GOLDEN / "tiny_fc.onnx").write_bytes(serialize(g))
    (GOLDEN / "tiny_fc_input.json").write_text(dumps(tensors_to_doc({"X_q": x})))
    (GOLDEN / "tiny_fc_output.json").write_text(dumps(tensors_to_doc({"Y_q": y})))
    print(f"wrote golden files to {GOLDEN}")
    if args.check_ort:
        import onnxruntime as ort

        sess = ort.InferenceSession(serialize(g), providers=["CPUExecutionProvider"])
        (out,) = sess.run(None, {"X_q": x.array})
        print("onnxruntime output:", out.tolist(), "dtype", out.dtype)
        assert out.tolist() == [[16]]


if __name__ == "__main__":
    main()
