"""Exception hierarchy. Every domain error derives from AsyrkError."""


class AsyrkError(Exception):
    """Base class for domain errors (CLI exit code 1)."""

    code = "asyrk_error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class IndexOutOfRange(AsyrkError):
    code = "index_out_of_range"


class DuplicateEntry(AsyrkError):
    code = "duplicate_entry"


class ZeroRow(AsyrkError):
    """A row has no nonzero entries."""

    code = "zero_row"


class ZeroColumn(AsyrkError):
    """A column of A is empty; the augmented row would read 0 = 0."""

    code = "zero_column"


class NotNormalized(AsyrkError):
    code = "not_normalized"


class DimensionMismatch(AsyrkError):
    code = "dimension_mismatch"


class PowerIterationDiverged(AsyrkError):
    code = "power_iteration_diverged"


class NonFinite(AsyrkError):
    """Iterate contains NaN or Inf."""

    code = "non_finite"


class ComponentNotInSupport(AsyrkError):
    code = "component_not_in_support"


class Inconsistent(AsyrkError):
    code = "inconsistent"


class TooLarge(AsyrkError):
    """Problem exceeds the dense-computation size cap."""

    code = "too_large"


class InvalidRho(AsyrkError):
    code = "invalid_rho"


class MissingStats(AsyrkError):
    code = "missing_stats"


class StepTooLarge(AsyrkError):
    code = "step_too_large"


class ZeroLambdaMin(AsyrkError):
    code = "zero_lambda_min"


class InvalidGamma(AsyrkError):
    code = "invalid_gamma"


class NonPositiveData(AsyrkError):
    code = "non_positive_data"


class InvalidConfig(AsyrkError):
    code = "invalid_config"


class ThreadSpawnFailure(AsyrkError):
    code = "thread_spawn_failure"


class NonPositiveSigma(AsyrkError):
    code = "non_positive_sigma"


class SigmaUnavailable(AsyrkError):
    code = "sigma_unavailable"


class InfeasibleSpec(AsyrkError):
    code = "infeasible_spec"


class NotConverged(AsyrkError):
    code = "not_converged"
