from typing import Optional, Sequence


class StirsapError(Exception):
    '''Base class for every error raised by the toolkit.'''
    exit_code: int = 2


class ConfigError(StirsapError, ValueError):
    '''Invalid or unreadable experiment configuration.'''
    exit_code = 1


class NumericalError(StirsapError, RuntimeError):
    '''Non-finite values, failed decompositions or other numerical breakdowns.'''
    exit_code = 2

    def __init__(self, message: str, step_index: Optional[int] = None):
        if step_index is not None:
            message = f"{message} (step {step_index})"
        super().__init__(message)
        self.step_index = step_index


class OptimizationError(NumericalError):
    '''A cost evaluation failed; the offending candidate is attached.'''

    def __init__(self, message: str, candidate: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.candidate = None if candidate is None else [float(x) for x in candidate]


class OutputError(StirsapError):
    '''Writing run artifacts failed.'''
    exit_code = 3
