"""Request/response models for the HTTP service."""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ValuationModel(BaseModel):
    kind: Literal["coverage", "budget_additive", "tabular"]
    universe_size: Optional[int] = None
    sets: Optional[List[List[int]]] = None
    bids: Optional[List[float]] = None
    budget: Optional[float] = None
    box: Optional[List[int]] = None
    values: Optional[List[float]] = None
    integer_valued: Optional[bool] = None

    def to_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


class ArrivalModel(BaseModel):
    type: Literal["stages", "iid"]
    stages: Optional[List[List[int]]] = None
    p: Optional[List[float]] = None
    draws: Optional[int] = None

    def to_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


class ActivityModel(BaseModel):
    type: Literal["none", "fixed", "one_per_group", "whole_group"] = "none"
    deactivate_after: Optional[List[int]] = None
    groups: Optional[List[List[int]]] = None

    def to_dict(self) -> dict:
        return self.model_dump(exclude_none=True)


class InstanceModel(BaseModel):
    """Wire form of an online instance; matches the CLI's JSON files."""

    agents: List[ValuationModel]
    arrival: ArrivalModel
    activity: ActivityModel = ActivityModel()
    meta: Dict = Field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "agents": [a.to_dict() for a in self.agents],
            "arrival": self.arrival.to_dict(),
            "activity": self.activity.to_dict(),
            "meta": self.meta,
        }


class GenerateRequest(BaseModel):
    family: Literal["staged", "iid", "budget-block", "budget-staged", "budget-iid"]
    k: int = 3
    n: int = 3
    s: int = 2
    t: int = 1
    draws: int = 3
    seed: int = 0


class LpRequest(BaseModel):
    target: Literal["budget-block", "budget-staged", "instance"]
    t: int = 1
    seed: int = 0
    instance: Optional[InstanceModel] = None
    export: bool = False


class LpResponse(BaseModel):
    value: float
    status: str
    residual: float
    iterations: int
    num_vars: int
    num_rows: int
    export_text: Optional[str] = None


class StagedBoundRequest(BaseModel):
    t: int = 10_000


class StagedBoundResponse(BaseModel):
    t: int
    discrete_sum: float
    pair_discrete_sum: float
    integral_value: float
    integral_quadrature: float
    ratio: float
    below_0612: bool


class HarmonicRequest(BaseModel):
    m: int
    t: int
    j: int


class HarmonicResponse(BaseModel):
    bound: float
    exact_sum: float


class EnvelopeRequest(BaseModel):
    x: float


class EnvelopeResponse(BaseModel):
    value: float


class CoverBoundRequest(BaseModel):
    k: int
    epsilon: float
    c0: float
    universe_size: int
    ell: float
    mu: Optional[float] = None


class CoverBoundResponse(BaseModel):
    raw: float
    smooth: float
    tangent: float


class RunRequest(BaseModel):
    policy: str = "greedy"
    seed: int = 0
    include_steps: bool = False
    instance: Optional[InstanceModel] = None
    family: Optional[Literal["staged", "iid", "budget-block", "budget-staged",
                             "budget-iid"]] = None
    k: int = 3
    n: int = 3
    s: int = 2
    t: int = 1
    draws: int = 3


class StepModel(BaseModel):
    step: int
    stage: int
    item: int
    agent: Optional[int]
    gain: float
    welfare: float


class RunResponse(BaseModel):
    policy: str
    welfare: float
    per_agent_value: List[float]
    per_agent_items: List[int]
    deact_stage: List[int]
    steps: Optional[List[StepModel]] = None


class ExperimentRequest(BaseModel):
    family: Literal["budget_block", "budget_staged", "coverage_staged",
                    "budget_iid", "coverage_iid"]
    policy: str = "greedy"
    trials: int = 1
    seed: int = 0
    baseline: Literal["budget_lp", "bruteforce_opt", "stochastic_lp",
                      "known_value", "none"] = "none"
    k: int = 3
    n: int = 3
    s: int = 2
    t: int = 1
    draws: int = 3
    known_value: Optional[float] = None
    threads: int = 1
    claim_checks: List[str] = Field(default_factory=list)


class VerdictModel(BaseModel):
    name: str
    passed: bool
    lhs: float
    relation: str
    rhs: float
    tolerance: float
    detail: str = ""


class WelfareStats(BaseModel):
    mean: float
    std: float
    stderr: float
    per_trial: List[float]


class BaselineInfo(BaseModel):
    name: str
    value: Optional[float] = None


class RatioStats(BaseModel):
    value: float
    stderr: float
    z: float
    ci_halfwidth: float


class PerStageStats(BaseModel):
    stage: List[int]
    items_to_deactivated_mean: List[float]
    items_to_deactivated_se: List[float]
    value_of_deactivated_mean: List[float]


class ExperimentResponse(BaseModel):
    spec: Dict
    trials: int
    welfare: WelfareStats
    baseline: BaselineInfo
    ratio: Optional[RatioStats] = None
    per_stage: Optional[PerStageStats] = None
    verdicts: List[VerdictModel]
    all_passed: bool


class VerifyRequest(BaseModel):
    checks: Optional[List[str]] = None
    scale: Literal["desk", "quick"] = "desk"
    seed: int = 0
    threads: int = 1


class CriterionModel(BaseModel):
    name: str
    passed: bool
    runtime_s: float
    runtime_limit_s: Optional[float] = None
    verdicts: List[VerdictModel]
    notes: List[str]


class VerifyResponse(BaseModel):
    results: List[CriterionModel]
    all_passed: bool
    expected_red: List[str]
