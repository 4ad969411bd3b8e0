"""Run serialized models in onnxruntime and compare with the reference interpreter.

First the golden tiny FC model through the ``prequant run`` command path, then
random built models covering every activation variant, both codifications
and conv layers. Needs the optional ``onnxruntime`` dependency.

    python3 scripts/ort_crosscheck.py --models 200
"""
import argparse
import io
import json
import sys
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
import onnxruntime as ort

from prequant import cli
from prequant.graphir import serialize
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
)
from prequant.qmath import ElemType, QTensor, decompose_rescale

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def session(data: bytes):
    return ort.InferenceSession(data, providers=["CPUExecutionProvider"])


def check_golden() -> bool:
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli.main(["run", str(GOLDEN / "tiny_fc.onnx"), str(GOLDEN / "tiny_fc_input.json")])
    ours = json.loads(buf.getvalue())["tensors"][0]
    x = json.loads((GOLDEN / "tiny_fc_input.json").read_text())["tensors"][0]
    (theirs,) = session((GOLDEN / "tiny_fc.onnx").read_bytes()).run(
        None, {x["name"]: np.array(x["data"], dtype=np.int8).reshape(x["shape"])}
    )
    ok = code == 0 and theirs.ravel().tolist() == ours["data"]
    print(f"golden tiny_fc: prequant run {ours['data']} onnxruntime {theirs.ravel().tolist()} "
          f"{'OK' if ok else 'MISMATCH'}")
    return ok


def _activation(kind, rng):
    return {
        "none": None, "relu": Relu(), "tanh_i8": TanhI8(float(rng.uniform(1, 6))),
        "tanh_f16": TanhF16(), "sigmoid_f16": SigmoidF16(),
    }[kind]


def random_model(rng):
    kind = (LayerKind.FULLY_CONNECTED, LayerKind.CONV2D)[rng.integers(2)]
    act = ["none", "relu", "tanh_i8", "tanh_f16", "sigmoid_f16"][rng.integers(5)]
    cod = (Codification.TWO_MUL, Codification.ONE_MUL)[rng.integers(2)]
    cin, cout = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    m = float(np.exp(rng.uniform(np.log(2.0**-14), 0)))
    if kind is LayerKind.FULLY_CONNECTED:
        w, conv, shape = rng.integers(-128, 128, (cin, cout)), None, (3, cin)
    else:
        k = int(rng.integers(1, 4))
        w = rng.integers(-128, 128, (cout, cin, k, k))
        conv = ConvAttrs(tuple(rng.integers(1, 3, 2)), tuple(rng.integers(0, 2, 4)))
        shape = (1, cin, 6, 7)
    d = HwLayerDescriptor(
        "l", kind, QTensor(ElemType.I8, w), QTensor(ElemType.I32, rng.integers(-4000, 4000, cout)),
        decompose_rescale(m), cod, _activation(act, rng), conv=conv,
    )
    return build_model([d], InputSpec("input", shape)), shape, f"{kind.value}/{act}/{cod.value}"


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--models", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    ok = check_golden()
    rng = np.random.default_rng(args.seed)
    tally, worst, unsupported = {}, {}, {}
    for _ in range(args.models):
        g, shape, label = random_model(rng)
        x = rng.integers(-128, 128, shape).astype(np.int8)
        ours = run(g, {"input": QTensor(ElemType.I8, x)})["output"].array.astype(int)
        try:
            sess = session(serialize(g))
        except ort.capi.onnxruntime_pybind11_state.NotImplemented as e:
            # e.g. the CPU ConvInteger kernel only takes uint8 x uint8
            unsupported[label] = unsupported.get(label, 0) + 1
            unsupported.setdefault("_msg", str(e).splitlines()[0])
            continue
        (theirs,) = sess.run(None, {"input": x})
        diff = int(np.max(np.abs(ours - theirs.astype(int))))
        tally[label] = tally.get(label, 0) + 1
        worst[label] = max(worst.get(label, 0), diff)
    for label in sorted(tally):
        print(f"{label:<24} models {tally[label]:>3}  max |diff| {worst[label]}")
    msg = unsupported.pop("_msg", None)
    for label in sorted(unsupported):
        print(f"{label:<24} models {unsupported[label]:>3}  not runnable in onnxruntime")
    if msg:
        print(f"  ({msg})")
    exact = all(v == 0 for v in worst.values())
    print("all runnable outputs bit-identical" if exact else
          "some outputs differ (see the float16 elementary-function note in the README)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
