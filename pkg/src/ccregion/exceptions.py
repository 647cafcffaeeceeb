class CCRError(Exception):
    """Base class for all errors raised by ccregion."""


class DomainError(CCRError, ValueError):
    """An argument lies outside the domain of the function."""


class DimensionError(CCRError, ValueError):
    """Vector or matrix shapes do not line up."""


class SingularDesignError(CCRError, ValueError):
    def __init__(self, n_columns: int, rank: int):
        self.n_columns = n_columns
        self.rank = rank
        super().__init__(
            f"design matrix is rank deficient: rank {rank} < {n_columns} columns "
            f"({n_columns - rank} deficient)"
        )


class InfeasibleQuantileError(CCRError, ValueError):
    def __init__(self, n_cal: int, alpha: float, min_n_cal: int):
        self.n_cal = n_cal
        self.alpha = alpha
        self.min_n_cal = min_n_cal
        super().__init__(
            f"calibration set of size {n_cal} is too small for alpha={alpha}; "
            f"need n_cal >= {min_n_cal}"
        )


class VacuousGuaranteeError(CCRError, ValueError):
    """alpha / b >= 1: the noise-free coverage bound says nothing."""


class NoValidKError(CCRError, ValueError):
    """No vote threshold k reaches the requested coverage level."""


class AuditError(CCRError, RuntimeError):
    """A solver incumbent failed the independent membership recheck."""
