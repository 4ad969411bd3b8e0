"""Pre-quantized int8 models codified with standard ONNX operators."""

__version__ = "0.1.0"
