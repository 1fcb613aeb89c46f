"""Configuration and result records for Monte Carlo experiments."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.tools.order_tools.orders.models import Verdict


EstimatorKind = Literal[
    'moment-spec',
    'location-mean',
    'scale-kth-moment',
    'scale-sample-sd',
    'weibull-abslog-sd',
    'weibull-abslog-mean',
]

Theorem = Literal['t3-lr', 't4-st', 't5-st', 'location-lr', 'scale-st']


class McConfig(BaseModel):
    """One Monte Carlo experiment: an estimator at two ordered parameter values."""

    model_config = ConfigDict(frozen=True)

    family: str
    params: dict[str, float] = Field(default_factory=dict)
    estimator: EstimatorKind = 'moment-spec'
    spec: str = 'mean'
    k: int = Field(default=1, ge=1)
    theta_pair: tuple[float, float]
    n: int = Field(ge=1)
    reps: int = Field(ge=1000)
    seed: int = Field(default=20240915, ge=0, lt=2 ** 64)
    workers: int = Field(default=1, ge=1)
    confidence: float = Field(default=0.999, gt=0.9, lt=1.0)
    bins: int = Field(default=20, ge=5)

    @model_validator(mode='after')
    def _ordered(self) -> 'McConfig':
        if not self.theta_pair[0] < self.theta_pair[1]:
            raise ValueError(f'theta_pair must satisfy theta1 < theta2, got {self.theta_pair}')
        return self


class EmpiricalStReport(BaseModel):
    """One-sided ECDF dominance test with a DKW band."""

    verdict: Verdict
    statistic: float
    threshold: float
    confidence: float
    location: float | None = None
    sizes: tuple[int, int]


class EmpiricalLrReport(BaseModel):
    """Monotonicity of binned count ratios over pooled-quantile bins."""

    verdict: Verdict
    measure: float
    threshold: float
    bin_edges: list[float]
    counts1: list[int]
    counts2: list[int]
    ratios: list[float]


class SampleSummary(BaseModel):
    mean: float
    variance: float
    size: int
    failures: int


class McResult(BaseModel):
    """Sampling distributions of an estimator at theta1 < theta2 and the order tests."""

    config: McConfig
    theorem: Theorem
    samples1: list[float]
    samples2: list[float]
    failed_replicates1: list[int] = Field(default_factory=list)
    failed_replicates2: list[int] = Field(default_factory=list)
    st_report: EmpiricalStReport
    lr_report: EmpiricalLrReport | None = None
    hypotheses: dict[str, Verdict]
    hypotheses_met: bool
    summary: dict[str, SampleSummary]
