"""Exception and warning types raised by the fitting library."""

from __future__ import annotations


class FrailtyError(Exception):
    """Base class for every library error."""


class FrailtyWarning(UserWarning):
    """Non-fatal numerical condition (boundary estimate, noisy oracle, ...)."""


class ConfigError(FrailtyError, ValueError):
    """Invalid run-time configuration value."""


class ParameterError(FrailtyError, ValueError):
    """Parameter outside its box or an invalid implied correlation."""


class InvalidCorrelationError(ParameterError):
    """Element-wise square root of a frailty correlation matrix is not PSD."""

    def __init__(self, min_eigenvalue: float) -> None:
        super().__init__(
            f"invalid correlation structure: element-wise root has smallest eigenvalue {min_eigenvalue:.3e}"
        )
        self.min_eigenvalue = min_eigenvalue


class BaselineSupportError(FrailtyError, ValueError):
    """A failure time carries no positive baseline jump."""

    def __init__(self, time: float) -> None:
        super().__init__(f"baseline support violation: failure at t={time!r} has no positive jump")
        self.time = time


class EStepDegenerateError(FrailtyError, ArithmeticError):
    """A pair expectation has a vanishing denominator."""


class DegenerateDesignError(FrailtyError, ArithmeticError):
    """The weighted partial-likelihood Hessian is singular."""


class NewtonConvergenceError(FrailtyError, RuntimeError):
    """Newton-Raphson did not reach the score tolerance."""

    def __init__(self, n_iter: int, score_norm: float, beta: object) -> None:
        super().__init__(
            f"Newton-Raphson did not converge after {n_iter} iterations (score norm {score_norm:.3e}, beta={beta})"
        )
        self.n_iter = n_iter
        self.score_norm = score_norm
        self.beta = beta


class InformationSingularError(FrailtyError, ArithmeticError):
    """The composite Hessian cannot be inverted reliably."""

    def __init__(self, condition_number: float) -> None:
        super().__init__(f"information singular: condition number {condition_number:.3e}")
        self.condition_number = condition_number


class SchemaError(FrailtyError, ValueError):
    """Input table violates the expected schema; carries (line, message) pairs."""

    def __init__(self, violations: list[tuple[int, str]]) -> None:
        self.violations = violations
        lines = [f"line {line}: {message}" for line, message in violations[:20]]
        if len(violations) > 20:
            lines.append(f"... and {len(violations) - 20} more")
        super().__init__("input schema violations:\n" + "\n".join(lines))


class NonFiniteError(FrailtyError, ArithmeticError):
    """A numerical derivative produced a non-finite value at one coordinate."""

    def __init__(self, coordinate: int, what: str = "evaluation") -> None:
        super().__init__(f"non-finite {what} at coordinate {coordinate}")
        self.coordinate = coordinate
