"""Exception hierarchy with stable machine-readable codes."""


class FurstenbergError(Exception):
    """Base class; ``code`` is the stable identifier used in CLI output."""

    code = "error"


class NearRotation(FurstenbergError):
    code = "near_rotation"


class OutsideLogDomain(FurstenbergError):
    code = "outside_log_domain"


class AlignmentViolated(FurstenbergError):
    code = "alignment_violated"


class GridMismatch(FurstenbergError):
    code = "grid_mismatch"


class StoppingTimeOverflow(FurstenbergError):
    code = "stopping_time_overflow"


class DegenerateFit(FurstenbergError):
    code = "degenerate_fit"


class MixedFields(FurstenbergError):
    code = "mixed_fields"


class ExplosionGuard(FurstenbergError):
    code = "explosion_guard"


class ArcsOverlap(FurstenbergError):
    code = "arcs_overlap"

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DomainError(FurstenbergError):
    code = "domain_error"


class ParameterOutOfScope(FurstenbergError):
    code = "parameter_out_of_scope"


class ParseError(FurstenbergError):
    code = "parse_error"


class DeterminantNotOne(FurstenbergError):
    code = "determinant_not_one"


class WeightsNotProbability(FurstenbergError):
    code = "weights_not_probability"
