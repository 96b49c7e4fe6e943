# ********************************
# |docname| - Errors for jointfield
# ********************************
# Every error raised on purpose by this package derives from `JointFieldError`. The command line (see `__main__.py`) maps these onto exit codes: configuration and input problems exit with 2, numeric failures with 3.
#
# Imports
# =======
# These are listed in the order prescribed by `PEP 8`_.
#
# Standard library
# ----------------
from typing import Optional

# Third-party imports
# -------------------
# None.
#
# Local application imports
# -------------------------
# None.


# Input and configuration errors
# ==============================
class JointFieldError(Exception):
    pass


# Array shapes that don't fit together. The message always names both shapes.
class ShapeError(JointFieldError, ValueError):
    pass


# An image tagged ``linear`` was passed where a ``log`` image was required, or the reverse.
class DomainError(JointFieldError, ValueError):
    pass


class ConfigError(JointFieldError, ValueError):
    pass


# A parameter or raster file with a bad magic number, version or length.
class FormatError(JointFieldError, ValueError):
    pass


# The albedo / shading split isn't determined: nothing pins the constant that can move from one to the other.
class GaugeError(JointFieldError, ValueError):
    pass


# Numeric failures
# ================
class NumericError(JointFieldError, RuntimeError):
    pass


class SolverError(NumericError):
    def __init__(
        self,
        message: str,
        # The relative residual ``|Ax - b| / |b|`` when the solver stopped.
        residual: float,
        iterations: int,
        # Where in coarse-to-fine inference this happened, if known.
        level: Optional[int] = None,
        iteration: Optional[int] = None,
    ):
        self.residual = residual
        self.iterations = iterations
        self.level = level
        self.iteration = iteration
        super().__init__(message)

    def __str__(self) -> str:
        where = ""
        if self.level is not None:
            where = f" (level {self.level}, inner iteration {self.iteration})"
        return f"{self.args[0]}{where}: relative residual {self.residual:.3e} after {self.iterations} iterations"

    # Return a copy of this error tagged with the inference level and inner iteration.
    def at(self, level: int, iteration: int) -> "SolverError":
        return SolverError(self.args[0], self.residual, self.iterations, level, iteration)


# Training produced a non-finite or exploding loss.
class DivergenceError(NumericError):
    def __init__(self, phase: str, round_: int, loss: float, epoch: Optional[int] = None):
        self.phase = phase
        self.round = round_
        self.loss = loss
        # Only the global depth net trains in epochs.
        self.epoch = epoch
        where = f"at epoch {epoch}" if epoch is not None else f"of round {round_}"
        super().__init__(f"Training diverged in phase '{phase}' {where}; loss = {loss!r}.")
