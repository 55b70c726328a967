class NodeError(ArithmeticError):
    """The wavefunction amplitude vanished exactly."""


class NonFiniteActivation(FloatingPointError):
    def __init__(self, layer: int, message: str = ""):
        self.layer = layer
        super().__init__(message or f"non-finite activation in layer {layer}")


class EDRangeError(ValueError):
    """System too large for exact diagonalization."""


class EDConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"Lanczos did not converge after {iterations} iterations (residual {residual:.3e})")


class CheckpointError(ValueError):
    """Malformed, truncated or mismatched checkpoint."""
