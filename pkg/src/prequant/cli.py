"""Command-line front end.

Exit codes: 0 ok, 1 I/O or parse error, 2 calibration error, 3 pattern or
validation error, 4 runtime overflow, 5 layer-pattern mismatch on extract,
6 validation threshold exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .documents import (
    DocumentError,
    descriptors_to_doc,
    dumps,
    load_tensors,
    model_from_doc,
    report_to_doc,
    tensors_to_doc,
)
from .errors import (
    AccumulatorOverflowError,
    CalibrationError,
    ExecutionError,
    GraphError,
    ParseError,
    PatternError,
    QuantizationError,
    UnsupportedOperatorError,
)
from .graphir import check, parse, serialize, validate, value_dtypes
from .interp import run
from .patterns import Codification, extract
from .quantizer import calibrate, quantize_model
from .validate import compare

EXIT_OK, EXIT_IO, EXIT_CALIBRATION, EXIT_GRAPH, EXIT_OVERFLOW, EXIT_PATTERN, EXIT_THRESHOLD = range(7)


class _Fail(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Fail(EXIT_IO, f"{self.prog}: {message}")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot read {path}: {e.strerror or e}") from None


def _read_text(path) -> str:
    return _read_bytes(path).decode("utf-8", errors="replace")


def _write(path, data):
    try:
        p = Path(path)
        if isinstance(data, bytes):
            p.write_bytes(data)
        else:
            p.write_text(data)
    except OSError as e:
        raise _Fail(EXIT_IO, f"cannot write {path}: {e.strerror or e}") from None


def _load_graph(path):
    data = _read_bytes(path)
    try:
        return parse(data)
    except UnsupportedOperatorError as e:
        raise _Fail(EXIT_GRAPH, str(e)) from None
    except ParseError as e:
        raise _Fail(EXIT_IO, f"{path}: {e}") from None


def _load_model(path):
    try:
        return model_from_doc(json.loads(_read_text(path)))
    except json.JSONDecodeError as e:
        raise _Fail(EXIT_IO, f"{path}: invalid JSON: {e}") from None
    except DocumentError as e:
        raise _Fail(EXIT_IO, f"{path}: {e}") from None


def _load_samples(paths):
    if not paths:
        raise _Fail(EXIT_IO, "no sample files given")
    samples = []
    for p in paths:
        try:
            samples.extend(t.array for _, t in load_tensors(_read_text(p)))
        except DocumentError as e:
            raise _Fail(EXIT_IO, f"{p}: {e}") from None
    return samples


def cmd_quantize(args) -> int:
    model = _load_model(args.model)
    samples = _load_samples(args.calib)
    try:
        profile = calibrate(model, samples)
        g, report = quantize_model(model, profile, Codification(args.codification))
    except (CalibrationError, QuantizationError) as e:
        raise _Fail(EXIT_CALIBRATION, f"calibration error: {e}") from None
    except ValueError as e:
        raise _Fail(EXIT_IO, f"{args.model}: {e}") from None
    _write(args.out, serialize(g))
    if args.report:
        _write(args.report, dumps(report.to_dict()))
    return EXIT_OK


def cmd_run(args) -> int:
    g = _load_graph(args.model)
    try:
        check(g)
    except GraphError as e:
        raise _Fail(EXIT_GRAPH, str(e)) from None
    try:
        tensors = load_tensors(_read_text(args.input))
    except DocumentError as e:
        raise _Fail(EXIT_IO, f"{args.input}: {e}") from None
    if len(tensors) == 1 and len(g.inputs) == 1 and tensors[0][0] in ("", g.inputs[0].name):
        feeds = {g.inputs[0].name: tensors[0][1]}
    else:
        feeds = dict(tensors)
    try:
        outputs = run(g, feeds)
    except AccumulatorOverflowError as e:
        raise _Fail(EXIT_OVERFLOW, f"runtime overflow: {e}") from None
    except ExecutionError as e:
        raise _Fail(EXIT_GRAPH, str(e)) from None
    text = dumps(tensors_to_doc(outputs))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_extract(args) -> int:
    g = _load_graph(args.model)
    try:
        descs = extract(g)
    except PatternError as e:
        raise _Fail(EXIT_PATTERN, f"pattern mismatch: {e}") from None
    except GraphError as e:
        raise _Fail(EXIT_GRAPH, str(e)) from None
    text = dumps(descriptors_to_doc(descs, with_data=args.with_data))
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    model = _load_model(args.model)
    g = _load_graph(args.onnx)
    samples = _load_samples(args.samples)
    try:
        check(g)
        report = compare(model, g, samples)
    except GraphError as e:
        raise _Fail(EXIT_GRAPH, str(e)) from None
    except AccumulatorOverflowError as e:
        raise _Fail(EXIT_OVERFLOW, f"runtime overflow: {e}") from None
    except (ExecutionError, ValueError) as e:
        raise _Fail(EXIT_IO, str(e)) from None
    sys.stdout.write(dumps(report_to_doc(report.to_dict())))
    if report.max_error_steps > args.max_error_steps:
        print(
            f"max error {report.max_error_steps:.3f} steps exceeds {args.max_error_steps}",
            file=sys.stderr,
        )
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_inspect(args) -> int:
    g = _load_graph(args.model)
    diags = validate(g)
    dtypes = {k: (v.value if v else "?") for k, v in value_dtypes(g).items()}
    out = sys.stdout
    out.write(f"graph {g.name!r} opset {g.opset_version}\n")
    for vi in g.inputs:
        out.write(f"input  {vi.name}: {vi.dtype.value} {list(vi.shape) if vi.shape is not None else '?'}\n")
    for vi in g.outputs:
        out.write(f"output {vi.name}: {vi.dtype.value} {list(vi.shape) if vi.shape is not None else '?'}\n")
    out.write("\nnodes:\n")
    rows = [("name", "op_type", "inputs", "outputs")]
    for n in g.nodes:
        ins = ", ".join(f"{i}:{dtypes.get(i, '?')}" for i in n.inputs if i)
        outs = ", ".join(f"{o}:{dtypes.get(o, '?')}" for o in n.outputs)
        rows.append((n.name, n.op_type, ins, outs))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for r in rows:
        out.write("  " + "  ".join(c.ljust(w) for c, w in zip(r[:3], widths)) + "  " + r[3] + "\n")
    out.write("\ninitializers:\n")
    for k, t in g.initializers.items():
        summary = t.data if t.array.size <= 4 else f"min {t.array.min()} max {t.array.max()}"
        out.write(f"  {k}: {t.dtype.value} {list(t.shape)} {summary}\n")
    if g.metadata:
        out.write("\nmetadata:\n")
        for k, v in sorted(g.metadata.items()):
            out.write(f"  {k} = {v}\n")
    if diags:
        out.write("\ndiagnostics:\n")
        for d in diags:
            out.write(f"  {d}\n")
    return EXIT_GRAPH if any(d.severity == "error" for d in diags) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="prequant", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", action="store_true", help="print version information to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="calibrate and quantize a float model to ONNX")
    q.add_argument("model", help="float model document (JSON)")
    q.add_argument("calib", nargs="*", help="calibration tensor file(s)")
    q.add_argument("--codification", choices=[c.value for c in Codification], default="2mul")
    q.add_argument("--out", required=True, help="output .onnx path")
    q.add_argument("--report", help="write the quantization report here")
    q.set_defaults(func=cmd_quantize)

    r = sub.add_parser("run", help="execute a model with the reference interpreter")
    r.add_argument("model")
    r.add_argument("input", help="input tensor file")
    r.add_argument("--out", help="output tensor file (default: stdout)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("extract", help="extract hardware layer descriptors")
    e.add_argument("model")
    e.add_argument("--out", help="descriptor file (default: stdout)")
    e.add_argument("--with-data", action="store_true", help="include weight and bias values")
    e.set_defaults(func=cmd_extract)

    v = sub.add_parser("validate", help="compare a quantized model against its float source")
    v.add_argument("model", help="float model document (JSON)")
    v.add_argument("onnx", help="quantized .onnx model")
    v.add_argument("samples", nargs="*", help="sample tensor file(s)")
    v.add_argument("--max-error-steps", type=float, default=4.0)
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("inspect", help="print the node table of an ONNX model")
    i.add_argument("model")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            print(f"prequant {__version__}", file=sys.stderr)
        return args.func(args)
    except _Fail as f:
        print(f"error: {f}", file=sys.stderr)
        return f.code


if __name__ == "__main__":
    sys.exit(main())
