from __future__ import annotations
from enum import IntEnum
from typing import Optional


class ExitCode(IntEnum):
    OK = 0
    CONFIG = 2
    NUMERICAL = 3
    IO = 4


class AlmabError(Exception):
    exit_code = ExitCode.NUMERICAL


class InputError(AlmabError, ValueError):
    """Неверные аргументы операции (размерность, границы, индексы)."""
    exit_code = ExitCode.CONFIG


class ConfigError(AlmabError):
    exit_code = ExitCode.CONFIG

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(AlmabError, ArithmeticError):
    exit_code = ExitCode.NUMERICAL


class OutputError(AlmabError, OSError):
    exit_code = ExitCode.IO
