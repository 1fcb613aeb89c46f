"""Grid and report records for the order checkers."""

from collections.abc import Callable
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.tools.shared_libraries.errors import InvalidInputError


Verdict = Literal['holds', 'fails', 'inconclusive']

DEFAULT_CLIP = 1e-4


def _checked_points(points, source: str) -> list[float]:
    arr = np.asarray(points, dtype=float).ravel()
    if arr.size < 2:
        raise InvalidInputError(f'{source} grid needs at least 2 points, got {arr.size}')
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f'{source} grid has non-finite points')
    if not np.all(np.diff(arr) > 0):
        raise InvalidInputError(f'{source} grid points must be strictly increasing')
    return arr.tolist()


class Grid(BaseModel):
    """Strictly increasing evaluation points."""

    model_config = ConfigDict(frozen=True)

    points: list[float]
    source: Literal['explicit', 'linspace', 'log-spaced', 'quantile-spaced'] = 'explicit'

    @model_validator(mode='after')
    def _increasing(self) -> 'Grid':
        arr = np.asarray(self.points, dtype=float)
        if arr.size < 2 or not np.all(np.isfinite(arr)) or not np.all(np.diff(arr) > 0):
            raise ValueError('grid needs at least 2 finite, strictly increasing points')
        return self

    @classmethod
    def explicit(cls, points) -> 'Grid':
        return cls(points=_checked_points(points, 'explicit'), source='explicit')

    @classmethod
    def linspace(cls, lower: float, upper: float, size: int) -> 'Grid':
        return cls(points=_checked_points(np.linspace(lower, upper, size), 'linspace'), source='linspace')

    @classmethod
    def log_spaced(cls, lower: float, upper: float, size: int) -> 'Grid':
        if not 0 < lower < upper:
            raise InvalidInputError(f'log-spaced grid needs 0 < lower < upper, got ({lower}, {upper})')
        return cls(points=_checked_points(np.geomspace(lower, upper, size), 'log-spaced'), source='log-spaced')

    @classmethod
    def quantile_spaced(
        cls,
        ppf: Callable[[np.ndarray], np.ndarray],
        size: int,
        clip: float = DEFAULT_CLIP,
    ) -> 'Grid':
        """Points ppf(u) for u evenly spaced in [clip, 1 - clip]; ties are merged."""
        if not 0 < clip < 0.5:
            raise InvalidInputError(f'quantile clip must lie in (0, 0.5), got {clip}')
        points = np.unique(np.asarray(ppf(np.linspace(clip, 1.0 - clip, size)), dtype=float))
        return cls(points=_checked_points(points, 'quantile-spaced'), source='quantile-spaced')

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def __len__(self) -> int:
        return len(self.points)


class OrderReport(BaseModel):
    """Verdict of a grid check with its witnesses."""

    verdict: Verdict
    witnesses: list[tuple[float, ...]] = Field(default_factory=list)
    max_violation: float = 0.0
    tolerance: float
    checked: int = 0
