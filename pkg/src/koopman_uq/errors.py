"""Exception hierarchy shared by all modules."""


class KoopmanUQError(Exception):
    """Base class for library errors."""


class InvalidRegion(KoopmanUQError, ValueError):
    pass


class InvalidState(KoopmanUQError, ValueError):
    pass


class IntegrationDiverged(KoopmanUQError, ArithmeticError):
    """Raised when an RK4 stage produces a non-finite value.

    ``time`` is the elapsed time at which the bad stage occurred, ``state``
    the last finite state, ``prefix`` any trajectory computed so far and
    ``index`` the sample index inside an ensemble (when known).
    """

    def __init__(self, message, time=None, state=None, prefix=None, index=None):
        super().__init__(message)
        self.time = time
        self.state = state
        self.prefix = prefix
        self.index = index


class InvalidQuadrature(KoopmanUQError, ValueError):
    pass


class EmptyData(KoopmanUQError, ValueError):
    pass


class InvalidData(KoopmanUQError, ValueError):
    pass


class SingularGram(KoopmanUQError, ArithmeticError):
    pass


class EmptySupport(KoopmanUQError, ValueError):
    pass


class UnsupportedDictionary(KoopmanUQError, ValueError):
    pass


class DegenerateBandwidth(KoopmanUQError, ValueError):
    pass


class DictionaryMismatch(KoopmanUQError, ValueError):
    pass


class ConfigError(KoopmanUQError, ValueError):
    pass
