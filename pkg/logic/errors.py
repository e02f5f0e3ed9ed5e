from typing import Any, Dict, Optional


class SimulationError(Exception):
    """Base class for every failure raised by the simulator.

    The optional context carries where the failure happened (time, pipe or
    node id, cell index) so the CLI can emit a machine-readable report.
    """

    kind = "simulation-error"

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = dict(context or {})

    def with_context(self, **context) -> "SimulationError":
        for key, value in context.items():
            self.context.setdefault(key, value)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'message': self.message,
            'context': self.context
        }

    def __str__(self):
        if not self.context:
            return self.message
        details = ', '.join(f'{key}={value}' for key, value in sorted(self.context.items()))
        return f'{self.message} ({details})'


class NonPhysicalDensityError(SimulationError):
    kind = "non-physical-density"


class NonPhysicalPressureError(SimulationError):
    kind = "non-physical-pressure"


class DegenerateStateError(SimulationError):
    kind = "degenerate-state"


class NegativeDensityError(SimulationError):
    kind = "negative-density"


class PressureCollapseError(SimulationError):
    kind = "pressure-collapse"


class InconsistentDataError(SimulationError):
    kind = "inconsistent-data"


class StabilityError(SimulationError):
    kind = "stability"


class FlowReversalError(SimulationError):
    kind = "flow-reversal"


class CompressorRatioError(SimulationError):
    kind = "compressor-ratio"


class NetworkValidationError(SimulationError):
    kind = "network-validation"

    def __init__(self, message: str, violations=None, context: Optional[Dict[str, Any]] = None):
        super().__init__(message, context)
        self.violations = list(violations or [])

    def to_dict(self) -> Dict[str, Any]:
        report = super().to_dict()
        report['violations'] = self.violations
        return report
