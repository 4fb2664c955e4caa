class JumpFisherError(Exception):
    exit_code = 1


# ---------------- CONFIGURATION ----------------
class ConfigError(JumpFisherError):
    exit_code = 2


class ModelError(ConfigError):
    pass


# ---------------- MODEL / MODE ----------------
class ModelModeError(JumpFisherError):
    exit_code = 4


# ---------------- NUMERICS ----------------
class NumericalError(JumpFisherError):
    exit_code = 3


class AmbiguousSteadyStateError(NumericalError):
    pass


class SteadyStateNotFoundError(NumericalError):
    pass


class DarkSubspaceError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class InfiniteInformationError(NumericalError):
    pass


class GridOverflowError(NumericalError):
    pass


class UnderflowError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class NonPositiveDefiniteError(NumericalError):
    pass
