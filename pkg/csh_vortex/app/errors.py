"""Exception hierarchy.

Every error knows the CLI exit code it maps to, so commands can translate a
failure into a one-line reason without a lookup table.
"""


class CshError(Exception):
    exit_code = 1
    code = "error"


class ConfigurationError(CshError):
    exit_code = 2
    code = "configuration"


class ConfigParseError(ConfigurationError):
    code = "parse"


class ResolutionError(ConfigurationError):
    code = "resolution"


class ConstraintInputError(ConfigurationError):
    code = "constraint_input"


class DecompositionError(CshError):
    exit_code = 6
    code = "decomposition"


class CartanValidationError(CshError):
    exit_code = 6
    code = "cartan_invalid"


class NecessaryConditionError(CshError):
    exit_code = 3
    code = "necessary_condition"


class InadmissibleError(CshError):
    exit_code = 4
    code = "inadmissible"


class ConstraintInfeasibleError(InadmissibleError):
    code = "infeasible"


class ConstraintSolverError(CshError):
    exit_code = 5
    code = "constraint_solver"


class NonConvergenceError(CshError):
    exit_code = 5
    code = "non_convergence"


class SeedError(CshError):
    exit_code = 5
    code = "seed"


class ExponentRangeError(CshError):
    exit_code = 7
    code = "exponent_range"
