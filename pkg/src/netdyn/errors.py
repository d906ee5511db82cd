"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ArgumentError(ValueError):
    """An argument is outside its documented domain."""


class ContractError(ValueError):
    """A structural precondition was violated (non-scalar loss, reused tape, ...)."""


class DivergenceError(RuntimeError):
    """Numerical state became non-finite during integration or rollout."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""
