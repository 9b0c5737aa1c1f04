from __future__ import annotations

from datetime import datetime
from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import RULES, RuleName


class ModelConfig(BaseModel):
    features: int = Field(default=2, ge=1)
    width: int = Field(default=64, ge=1)
    transform_layers: int = Field(default=2, ge=1)
    hops: int = Field(default=3, ge=0)
    policy_width: int = Field(default=64, ge=1)
    policy_blocks: int = Field(default=2, ge=0)
    seed: int = 0


class TrainConfig(BaseModel):
    lr: float = Field(default=1e-3, ge=0)
    iterations: int = Field(default=10_000, ge=0)
    rollouts: int = Field(default=10, ge=1)
    edges: int = Field(default=5, ge=1)
    hops: int | None = Field(default=None, ge=0)
    gamma: float = Field(default=1.0, ge=0, le=1)
    epsilon: float = Field(default=0.05, ge=0, lt=1)
    rule: RuleName = "sjf"
    seed: int = 0
    dags_mean: float = Field(default=5.0, gt=0)
    dags_max: int = Field(default=20, ge=1)
    beam: int = Field(default=10, ge=1)
    eval_every: int = Field(default=100, ge=1)

    @field_validator("rule")
    @classmethod
    def validate_rule(cls, value: str) -> str:
        if value not in RULES:
            raise ValueError(f"Unsupported rule: {value}")
        return value


class GeneratorConfig(BaseModel):
    min_nodes: int = Field(default=2, ge=1)
    max_nodes: int = Field(default=18, ge=1)
    runtime_mode: Literal["empirical", "uniform"] = "empirical"
    resource_dist: float = Field(default=1.0, gt=0, le=1)
    out_degree: float = Field(default=1.5, ge=0)

    @model_validator(mode="after")
    def validate_range(self) -> GeneratorConfig:
        if self.min_nodes > self.max_nodes:
            raise ValueError("min_nodes must not exceed max_nodes")
        return self


class NodeRecord(BaseModel):
    id: int = Field(ge=0)
    runtime: float = Field(ge=0, allow_inf_nan=False)
    resource: float = Field(ge=0, le=1, allow_inf_nan=False)


class DagDocument(BaseModel):
    nodes: list[NodeRecord] = Field(min_length=1)
    edges: list[tuple[int, int]] = Field(default_factory=list)
    virtual_root: int | None = Field(default=None, ge=0)


class ParamRecord(BaseModel):
    shape: tuple[int, int]
    values: list[float]

    @model_validator(mode="after")
    def validate_size(self) -> ParamRecord:
        if len(self.values) != self.shape[0] * self.shape[1]:
            raise ValueError("values length does not match shape")
        return self


class Checkpoint(BaseModel):
    version: int = 1
    model: ModelConfig
    params: dict[str, ParamRecord]
    meta: dict = Field(default_factory=dict)


class DatasetManifest(BaseModel):
    version: int = 1
    seed: int
    generator: GeneratorConfig
    splits: dict[str, list[str]]
    seeds: dict[str, int] = Field(default_factory=dict)


class ScheduleRequest(BaseModel):
    dag: DagDocument
    rule: RuleName = "sjf"


class ScheduleRow(BaseModel):
    node: int
    start: float
    finish: float


class ScheduleResponse(BaseModel):
    rule: str
    makespan: float
    rows: list[ScheduleRow]


class InferRequest(BaseModel):
    dag: DagDocument
    rule: RuleName = "sjf"
    edges: int = Field(default=5, ge=0, le=50)
    beam: int = Field(default=10, ge=1)


class InferResponse(BaseModel):
    added_edges: list[tuple[int, int]]
    before: float
    after: float


class MilpRequest(BaseModel):
    dag: DagDocument
    relax: bool = True


class MilpResponse(BaseModel):
    lp: str
    variables: int
    constraints: int


class BenchRequest(BaseModel):
    manifest: str = Field(min_length=1)
    rules: list[RuleName] = Field(default_factory=lambda: ["sjf", "cp"])
    edges: int = Field(default=5, ge=0, le=20)
    beam: int = Field(default=10, ge=1)
    use_checkpoint: bool = True
    lp_column: bool = False


class JobStartResponse(BaseModel):
    job_id: str
    status_url: str


class JobStatusResponse(BaseModel):
    job_id: str
    kind: str
    status: Literal["queued", "running", "done", "failed"]
    phase: str
    progress_pct: int = Field(ge=0, le=100)
    started_at: datetime | None = None
    finished_at: datetime | None = None
    message: str = ""
    error: str | None = None
    run_id: str | None = None


class RunListRow(BaseModel):
    run_id: str
    rules: str
    max_edges: int
    beam: int
    created_at: datetime | None = None
    row_count: int


class RunListResponse(BaseModel):
    rows: list[RunListRow]


class BenchRowOut(BaseModel):
    dags: str
    rule: str
    base: float
    learned: float
    reduce_pct: float
    tetris: float | None = None
    lp_order: float | None = None


class RunRowsResponse(BaseModel):
    run_id: str
    rows: list[BenchRowOut]


class RunDeleteResponse(BaseModel):
    run_id: str
    removed_rows: int
    removed_run: bool
