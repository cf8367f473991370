"""Failure types shared across solvers and ensemble drivers.

Every solver fails loudly: no routine returns a partially converged value.
``NumericalError`` subclasses map to CLI exit code 2.
"""


class NumericalError(RuntimeError):
    """A computation failed for numerical reasons (not bad arguments)."""


class NonConvergenceError(NumericalError):
    """An iterative solver exhausted its budget without reaching tolerance."""


class BranchError(NumericalError):
    """A self-consistent equation left its real/physical branch."""


class SingularOperatorError(NumericalError):
    """A linear operator is numerically singular (condition estimate too large)."""


class EnsembleSampleError(NumericalError):
    """One disorder sample failed; records which seed to replay."""

    def __init__(self, n: int, index: int, seed: int, message: str):
        super().__init__(
            f"sample {index} at n={n} failed (seed={seed}): {message}"
        )
        self.n = n
        self.index = index
        self.seed = seed
