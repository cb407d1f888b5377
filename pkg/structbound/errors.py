from typing import Any, Dict, Iterable, List


class StructboundError(Exception):
    exit_code = 1

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.__class__.__name__, "message": self.message, "exit_code": self.exit_code}


class InvalidSpec(StructboundError):
    """Carries every violated invariant, not just the first one found."""
    exit_code = 2

    def __init__(self, violations: Iterable[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations))

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "violations": self.violations}


class NumericalBlowup(StructboundError):
    exit_code = 3

    def __init__(self, time: float, max_abs: float):
        self.time, self.max_abs = time, max_abs
        super().__init__(f"State exceeded overflow guard at t={time:.6g} (max |value| = {max_abs:.6g})")

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "time": self.time, "max_abs": self.max_abs}


class ConvergenceFailure(StructboundError):
    exit_code = 4


class TailNotConverged(StructboundError):
    exit_code = 4

    def __init__(self, bound: float, tolerance: float):
        self.bound, self.tolerance = bound, tolerance
        super().__init__(f"Transform tail bound {bound:.3g} exceeds tolerance {tolerance:.3g}")

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "bound": self.bound, "tolerance": self.tolerance}


class PoleAtZero(StructboundError):
    exit_code = 2


class DegenerateCurve(StructboundError):
    exit_code = 2

    def __init__(self, min_g: float):
        self.min_g = min_g
        super().__init__(f"Induced metric degenerates (min g = {min_g:.3g})")

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), "min_g": self.min_g}
