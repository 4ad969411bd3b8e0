"""Exception hierarchy shared by all pipeline stages.

The CLI maps each family onto a stable exit code, so new error types should
subclass one of the families below rather than ``PrequantError`` directly.
"""


class PrequantError(Exception):
    pass


# -- quantization arithmetic ------------------------------------------------

class QuantizationError(PrequantError, ValueError):
    pass


class InvalidRangeError(QuantizationError):
    pass


class DomainError(QuantizationError):
    pass


class UnrepresentableRescaleError(QuantizationError):
    pass


class BiasSaturationWarning(UserWarning):
    """Quantized bias hit the int32 rails; usually a calibration problem."""


# -- graph structure / wire format ------------------------------------------

class GraphError(PrequantError):
    pass


class GraphValidationError(GraphError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"graph validation failed: {lines}")


class ParseError(GraphError):
    def __init__(self, message, offset=None):
        self.offset = offset
        where = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class MissingScaleError(GraphError):
    pass


class UnsupportedOperatorError(GraphError):
    def __init__(self, op_types):
        self.op_types = sorted(set(op_types))
        super().__init__(f"unsupported operator(s): {', '.join(self.op_types)}")


# -- pattern building / matching --------------------------------------------

class PatternError(PrequantError):
    pass


class BuildError(PatternError):
    pass


class PatternMismatchError(PatternError):
    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message)


class CodificationError(PatternError):
    pass


# -- calibration / execution ------------------------------------------------

class CalibrationError(PrequantError):
    pass


class ExecutionError(PrequantError):
    pass


class AccumulatorOverflowError(ExecutionError):
    def __init__(self, node, message="int32 overflow"):
        self.node = node
        super().__init__(f"{message} in node {node!r}")


class BindingError(ExecutionError):
    pass
