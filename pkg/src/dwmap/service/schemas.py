"""Request and response bodies of the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator

from dwmap.decomposition import TIE_RULES
from dwmap.formats import NATIVE_FORMAT, NATIVE_VERSION


class InjectivePayload(BaseModel):
    kind: Literal["injective"] = "injective"
    nodes: Optional[list[int]] = None
    outlier_state: Optional[int] = None


class LinearPayload(BaseModel):
    kind: Literal["linear"] = "linear"
    terms: list[tuple[int, int, float]]
    sense: Literal["<=", ">=", "="]
    rhs: float


class ModelDocument(BaseModel):
    """Same layout as the native model file."""

    format: Literal["dwmap-model"] = NATIVE_FORMAT
    version: Literal[1] = NATIVE_VERSION
    cardinalities: list[int]
    edges: list[tuple[int, int]]
    local_potentials: list[list[float]]
    pairwise_potentials: list[list[list[float]]]
    side_constraints: list[Union[InjectivePayload, LinearPayload]] = Field(default_factory=list)


class SolveOptions(BaseModel):
    backend: Literal["dw", "direct-lp", "brute", "max-product"] = "dw"
    max_iters: int = Field(1000, ge=0)
    columns_per_iter: int = Field(200, ge=1)
    purge_after_seconds: Optional[float] = Field(None, ge=0)
    tie_rule: str = "lowest-index"
    tol: float = Field(1e-9, gt=0)
    round_eps: float = Field(1e-6, gt=0)
    workers: int = Field(1, ge=1)
    damping: float = Field(0.0, ge=0, lt=1)

    @field_validator("tie_rule")
    @classmethod
    def _known_tie_rule(cls, v: str) -> str:
        if v not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {TIE_RULES}")
        return v


class SolveRequest(BaseModel):
    model: ModelDocument
    options: SolveOptions = Field(default_factory=SolveOptions)


class TraceItem(BaseModel):
    iter: int
    objective: float
    columns_added: int
    pool_size: int
    master_ms: float
    pricing_ms: float
    bytes_tx: int
    bytes_rx: int


class SolveResponse(BaseModel):
    backend: str
    assignment: list[int]
    value: float
    lp_objective: Optional[float]
    converged: bool
    iterations: int
    fractional_fraction: Optional[float]
    many_to_one: Optional[int]
    rounding_fallback: bool
    seconds: dict[str, float]
    trace: list[TraceItem] = Field(default_factory=list)


class JobStatus(BaseModel):
    id: str
    state: Literal["queued", "running", "done", "failed"]
    trace: list[TraceItem] = Field(default_factory=list)
    result: Optional[SolveResponse] = None
    error: Optional[str] = None
