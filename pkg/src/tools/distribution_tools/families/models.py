"""Interval records for parameter domains and supports."""

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


class Interval(BaseModel):
    """An interval of the extended real line."""

    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    kind: Literal['open', 'half-open', 'closed'] = 'open'

    @model_validator(mode='after')
    def _ordered(self) -> 'Interval':
        if not self.lower < self.upper:
            raise ValueError(f'interval needs lower < upper, got ({self.lower}, {self.upper})')
        return self

    def contains(self, x: float | np.ndarray) -> bool | np.ndarray:
        """Membership test; endpoints count only when the interval is closed there."""
        arr = np.asarray(x, dtype=float)
        if self.kind == 'closed':
            inside = (arr >= self.lower) & (arr <= self.upper)
        elif self.kind == 'half-open':
            inside = (arr >= self.lower) & (arr < self.upper)
        else:
            inside = (arr > self.lower) & (arr < self.upper)
        return bool(inside) if inside.ndim == 0 else inside

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def as_tuple(self) -> tuple[float, float]:
        return (self.lower, self.upper)


class Support(Interval):
    """Support (a, b) of a density; endpoints are open unless stated."""
