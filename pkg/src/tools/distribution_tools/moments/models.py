"""Records for moment specifications and estimates."""

from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.tools.distribution_tools.families.families import Family


Direction = Literal['increasing', 'decreasing']


@dataclass(frozen=True, kw_only=True, eq=False)
class MomentSpec:
    """A generalized moment g and its moment function m(theta) = E_theta g(X).

    Immutable once built by make_spec; the monotone direction is detected
    at construction and cached here.
    """

    family: Family
    selector: str
    g: Callable[[np.ndarray], np.ndarray]
    m_fn: Callable[[float], float]
    monotone_direction: Direction
    m_range: tuple[float, float]
    m_prime_fn: Callable[[float], float] | None = None
    inverse_fn: Callable[[float], float] | None = None
    closed_form: bool = False
    range_known: bool = True


class Estimate(BaseModel):
    """Result of a moment estimation."""

    model_config = ConfigDict(frozen=True)

    theta_hat: float
    gbar: float
    iterations: int
    residual: float
    n: int
