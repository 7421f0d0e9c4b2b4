class PsmException(Exception):
    def __init__(self, message):
        super().__init__(message)

    def __reduce__(self):
        return _restore, (type(self), self.args, self.__dict__)


def _restore(cls, args, state):
    error = cls.__new__(cls)
    error.args = args
    error.__dict__.update(state)
    return error


def add_context(error, context):
    """
    prefix the message, keeping the exception type and its attributes
    """
    error.args = ("{}: {}".format(context, error.args[0] if error.args else ""),) + tuple(error.args[1:])
    return error


class ConfigError(PsmException):
    def __init__(self, message, field=None):
        self.field = field
        self.reason = message
        if field:
            message = "{}: {}".format(field, message)
        super().__init__(message)


class MissingArtifact(PsmException):
    def __init__(self, path):
        self.path = str(path)
        super().__init__("missing upstream artifact: {}".format(self.path))


class NumericalException(PsmException):
    def __init__(self, message):
        super().__init__(message)


class PlacementFailure(NumericalException):
    def __init__(self, message, achieved_fraction=0.0):
        self.achieved_fraction = achieved_fraction
        super().__init__("{} (achieved volume fraction {:.6f})".format(message, achieved_fraction))


class EmptyDomain(NumericalException):
    def __init__(self, message):
        super().__init__(message)


class PoissonMismatch(NumericalException):
    def __init__(self, message):
        super().__init__(message)


class SingularSystem(NumericalException):
    def __init__(self, message):
        super().__init__(message)


class DegenerateEnergy(NumericalException):
    def __init__(self, message):
        super().__init__(message)


class NonConvergence(NumericalException):
    def __init__(self, message):
        super().__init__(message)


class NoFailure(NumericalException):
    def __init__(self, message):
        super().__init__(message)


class RepresentabilityWarning(UserWarning):
    pass
