"""
Error types raised across the toolkit
"""
from typing import Optional


class QvManifoldError(Exception):
    """Base error; `module` names the toolkit module that raised it"""

    module = 'qvmanifold'

    def __init__(self, message: str, module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class InvalidInputError(QvManifoldError, ValueError):
    pass


class ShapeError(InvalidInputError):
    pass


class DegenerateBasisError(QvManifoldError, ValueError):
    """Raised when a family of vectors is linearly dependent under the chosen inner product"""


class DegenerateSpectrumError(QvManifoldError, ValueError):
    pass


class InsufficientDataError(QvManifoldError, ValueError):
    pass


class BlowUpError(QvManifoldError, ArithmeticError):
    """Raised when a simulated state stops being finite"""

    def __init__(self, message: str, step: int, module: Optional[str] = None):
        super().__init__(message, module)
        self.step = step


class PanelParseError(QvManifoldError, ValueError):
    """Malformed CSV input; row and column are 1-based file coordinates when known"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None,
                 module: Optional[str] = None):
        super().__init__(message, module)
        self.row = row
        self.column = column


class ConfigError(QvManifoldError, ValueError):
    module = 'config'


class CommandError(QvManifoldError):
    """Raised by the service layer; the module error is chained as __cause__"""

    def __init__(self, message: str, command: str, module: Optional[str] = None):
        super().__init__(message, module)
        self.command = command
