"""Error hierarchy shared by all modules.

Exit-code mapping used by the CLI: 2 for configuration/validation problems,
3 for container I/O problems, 4 for failures inside a computation stage.
"""


class MasksegError(Exception):
    exit_code = 1


class ValidationError(MasksegError, ValueError):
    """Bad arguments, shapes, dtypes, value ranges or configuration."""

    exit_code = 2


class ContainerError(MasksegError, IOError):
    """Problems reading or writing the on-disk container formats."""

    exit_code = 3


class MalformedHeaderError(ContainerError):
    pass


class PayloadLengthError(ContainerError):
    pass


class UnsupportedDtypeError(ContainerError):
    pass


class ComputeError(MasksegError):
    """A computation stage failed on otherwise valid inputs."""

    exit_code = 4
