class CustomException(Exception):
    status_code = 400

    def __init__(self, message, status_code=None, payload=None):
        Exception.__init__(self, message)
        self.message = message
        if status_code is not None:
            self.status_code = status_code
        self.payload = payload

    def to_dict(self):
        rv = dict(self.payload or ())
        rv['message'] = self.message
        rv['status_code'] = 'error'
        rv['error'] = type(self).__name__
        return rv


class DescriptorError(CustomException):
    """Base for every failure raised by the descriptor pipeline.

    ``exit_code`` is what the command line returns, ``status_code`` what the
    HTTP surface answers with. Both are stable.
    """
    exit_code = 4
    status_code = 422


# ---------------------------------------------------------------- I/O (exit 2)

class InputError(DescriptorError):
    exit_code = 2
    status_code = 400


class ScanFileNotFound(InputError, FileNotFoundError):
    status_code = 404


class TruncatedRecord(InputError):
    pass


class NonFiniteValue(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line_number=None, payload=None):
        payload = dict(payload or ())
        if line_number is not None:
            payload['line'] = line_number
            message = f"line {line_number}: {message}"
        InputError.__init__(self, message, payload=payload)
        self.line_number = line_number


class CorruptCheckpoint(InputError):
    pass


class VersionMismatch(InputError):
    pass


class CorruptArchive(InputError):
    pass


# ------------------------------------------------------- config/shape (exit 3)

class ConfigError(DescriptorError):
    exit_code = 3
    status_code = 400


class InvalidConfig(ConfigError):
    pass


class InvalidTransform(ConfigError):
    pass


class NonPositiveRadius(ConfigError):
    pass


class InvalidSceneParams(ConfigError):
    pass


class OddBatchSize(ConfigError):
    pass


class ShapeMismatch(ConfigError):
    pass


class EmptyOutput(ConfigError):
    pass


class BatchTooSmall(ConfigError):
    pass


class HeadMismatch(ConfigError):
    pass


class DegenerateLabels(ConfigError):
    pass


class NegativeDistance(ConfigError):
    pass


# --------------------------------------------------------- algorithmic (exit 4)

class DegenerateRay(DescriptorError):
    pass


class EmptyNeighborhood(DescriptorError):
    pass


class NoPositives(DescriptorError):
    pass


class InsufficientKeypoints(DescriptorError):
    pass


class InsufficientPairs(DescriptorError):
    pass


class NonDifferentiablePoint(DescriptorError):
    pass


class EmptyEvaluationSet(DescriptorError):
    pass


class EmptyInput(DescriptorError):
    pass


class InsufficientCorrespondences(DescriptorError):
    pass


class DegenerateGeometry(DescriptorError):
    pass


class NoConsensus(DescriptorError):
    pass
