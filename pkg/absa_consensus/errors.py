class PipelineError(Exception):
    """Base class for every failure the CLI reports with its own exit code"""
    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 2


class TemplateError(ConfigError):
    pass


class DataError(PipelineError):
    exit_code = 3


class TransportError(PipelineError):
    """The endpoint could not be reached; ``partial`` holds what did come back"""
    exit_code = 4

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else {}


class ContractError(PipelineError):
    exit_code = 5


class ShapeError(ContractError):
    pass


class DomainError(ContractError, ValueError):
    pass


class DegenerateSampleError(DomainError):
    pass
