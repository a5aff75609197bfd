from __future__ import annotations

from typing import Optional


class NGFError(Exception):
    """Base error. `exit_code` is what the CLI returns, `detail` what it prints."""

    exit_code = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(NGFError, ValueError):
    exit_code = 1


class GraphError(NGFError, ValueError):
    pass


class ConvergenceError(GraphError):
    def __init__(self, detail: str, residual: float, iterations: int):
        super().__init__(f"{detail} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class FilterError(NGFError, ValueError):
    pass


class FilterOverflowError(FilterError, ArithmeticError):
    def __init__(self, power: int):
        super().__init__(f"non-finite filter entry while accumulating S^{power}")
        self.power = power


class DivergenceError(NGFError, ArithmeticError):
    def __init__(self, detail: str, layer: Optional[int] = None, epoch: Optional[int] = None):
        super().__init__(detail)
        self.layer = layer
        self.epoch = epoch


class DatasetError(NGFError):
    def __init__(self, detail: str, path: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + detail)
        self.path = path
        self.line = line
