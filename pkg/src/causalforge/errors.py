"""Exception types. Every error carries a short machine-readable ``code``."""


class CausalForgeError(Exception):
    code = "ERROR"


class FactorError(CausalForgeError, ValueError):
    code = "FACTOR_MISMATCH"


class NotHermitianError(CausalForgeError, ValueError):
    code = "NOT_HERMITIAN"


class NotIsometryError(CausalForgeError, ValueError):
    code = "NOT_ISOMETRY"


class DistributionError(CausalForgeError, ValueError):
    code = "BAD_DISTRIBUTION"


class ConstraintError(CausalForgeError, ValueError):
    code = "SWITCH_CONSTRAINT_VIOLATED"


class MajorizationError(CausalForgeError, ValueError):
    code = "MAJORIZATION_VIOLATED"


class InstrumentError(CausalForgeError, ValueError):
    code = "BAD_INSTRUMENT"


class SpecMismatchError(CausalForgeError, ValueError):
    code = "SPEC_MISMATCH"


class SupportError(CausalForgeError, ValueError):
    code = "BAD_SUPPORT"


class DesignSearchError(CausalForgeError, RuntimeError):
    code = "DESIGN_SEARCH_EXHAUSTED"


class FileFormatError(CausalForgeError, ValueError):
    code = "PARSE_ERROR"
