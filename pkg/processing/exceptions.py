"""Error hierarchy shared by services, tasks and management commands.

Each error carries a machine-parsable ``category`` and the process exit code
the CLI uses for it.
"""


class R3DError(Exception):
    category = 'error'
    exit_code = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def one_line(self):
        detail = ' '.join(str(self).split())
        return f"{self.category}: {detail}"


class ParameterError(R3DError, ValueError):
    category = 'parameter'
    exit_code = 2


class ConfigError(R3DError):
    category = 'config'
    exit_code = 3


class MissingFileError(R3DError, FileNotFoundError):
    category = 'missing_file'
    exit_code = 4


class FormatError(R3DError):
    category = 'format'
    exit_code = 5

    def __init__(self, message, offset=None, **context):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message, offset=offset, **context)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    category = 'unsupported_version'


class ArchitectureMismatchError(R3DError):
    category = 'architecture'
    exit_code = 6


class TrainingError(R3DError):
    category = 'training'
    exit_code = 7

    def __init__(self, message, sigma=None, batch_id=None, **context):
        super().__init__(f"{message} (sigma={sigma}, batch={batch_id})",
                         sigma=sigma, batch_id=batch_id, **context)
        self.sigma = sigma
        self.batch_id = batch_id


class SamplerError(R3DError):
    category = 'sampler'
    exit_code = 8

    def __init__(self, message, step=None, **context):
        super().__init__(f"{message} (step {step})", step=step, **context)
        self.step = step


class EmptyPointSetError(R3DError, ValueError):
    category = 'empty_point_set'
    exit_code = 9
