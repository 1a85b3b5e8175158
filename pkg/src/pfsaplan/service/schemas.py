"""Request/response models for the planning service.

Every request carries its full problem description (map text, uncertainty
source, parameters), so the service is stateless and responses are
deterministic functions of the request body.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelSpec(BaseModel):
    """A navigation-plant description shared by plan/simulate/sweep requests.

    The uncertainty source is either ``gamma`` (mass ``1 - gamma`` spread
    uniformly over the 8 compass twins) or ``uncertainty_text`` (the
    ``uc`` / ``uc_state`` file format); giving both is an error, giving
    neither means no uncertainty.  ``goal`` overrides the map's goal cell
    as ``[row, col]`` (plus a goal heading for the heading model).
    """

    model_config = ConfigDict(extra="forbid")

    map_text: str
    model: Literal["2d", "heading", "history"] = "2d"
    gamma: float | None = None
    uncertainty_text: str | None = None
    goal: list[int] | None = None
    headings: int = 24
    max_turn_deg: int = 45
    theta_start: float = Field(default=0.99, gt=0.0, lt=1.0)
    tie_tol: float = Field(default=1e-9, gt=0.0)

    @field_validator("gamma")
    @classmethod
    def _gamma_in_range(cls, v: float | None) -> float | None:
        if v is not None and not (0.0 < v <= 1.0):
            raise ValueError(f"gamma must lie in (0, 1], got {v}")
        return v

    @field_validator("goal")
    @classmethod
    def _goal_shape(cls, v: list[int] | None) -> list[int] | None:
        if v is not None and len(v) not in (2, 3):
            raise ValueError("goal must be [row, col] or [row, col, heading]")
        return v

    @model_validator(mode="after")
    def _one_uncertainty_source(self) -> "ModelSpec":
        if self.gamma is not None and self.uncertainty_text is not None:
            raise ValueError("give gamma or uncertainty_text, not both")
        return self


class PlanRequest(ModelSpec):
    svg: bool = False
    cell_px: int = Field(default=24, ge=4, le=256)


class PlanStepOut(BaseModel):
    """One supervision pass of the recursion."""

    theta_min: float
    chi_goal: float
    feasible_states: int


class PlanResponse(BaseModel):
    k: int
    gamma: float
    total_states: int
    feasible_states: int
    infeasible_everywhere: bool
    steps: list[PlanStepOut]
    plan_csv: str
    svg: str | None = None


class SimulateRequest(ModelSpec):
    """Plan inline, then run missions from ``start`` (``[row, col]``,
    plus a heading for the heading model)."""

    start: list[int]
    beta: float = Field(default=0.0, ge=0.0, le=1.0)
    runs: int = Field(default=1000, ge=1)
    seed: int = 0
    max_steps: int | None = Field(default=None, ge=1)
    trace: bool = False

    @field_validator("start")
    @classmethod
    def _start_shape(cls, v: list[int]) -> list[int]:
        if len(v) not in (2, 3):
            raise ValueError("start must be [row, col] or [row, col, heading]")
        return v


class SimulateResponse(BaseModel):
    p_goal: float
    p_obstacle: float
    se_goal: float
    se_obstacle: float
    runs: int
    n_goal: int
    n_obstacle: int
    n_step_limit: int
    exact_p_goal: float
    exact_p_obstacle: float
    exact_identity_gap: float
    success_margin_exact: float
    trace_csv: str | None = None


class SweepGammaRequest(BaseModel):
    """Plan once per gamma and record the deterministic gradient-path length."""

    model_config = ConfigDict(extra="forbid")

    map_text: str
    model: Literal["2d", "heading", "history"] = "2d"
    gammas: list[float] = Field(min_length=1)
    start: list[int]
    beta: float = Field(default=0.0, ge=0.0, le=1.0)
    goal: list[int] | None = None
    headings: int = 24
    max_turn_deg: int = 45
    theta_start: float = Field(default=0.99, gt=0.0, lt=1.0)
    tie_tol: float = Field(default=1e-9, gt=0.0)

    @field_validator("gammas")
    @classmethod
    def _gammas_in_range(cls, v: list[float]) -> list[float]:
        for g in v:
            if not (0.0 < g <= 1.0):
                raise ValueError(f"gamma must lie in (0, 1], got {g}")
        return v

    @field_validator("start")
    @classmethod
    def _start_shape(cls, v: list[int]) -> list[int]:
        if len(v) not in (2, 3):
            raise ValueError("start must be [row, col] or [row, col, heading]")
        return v

    @field_validator("goal")
    @classmethod
    def _goal_shape(cls, v: list[int] | None) -> list[int] | None:
        if v is not None and len(v) not in (2, 3):
            raise ValueError("goal must be [row, col] or [row, col, heading]")
        return v


class SweepRow(BaseModel):
    """path_length is the number of gradient moves to the goal, -1 if the
    start is infeasible at that gamma."""

    gamma: float
    path_length: int
    p_goal_exact: float


class SweepGammaResponse(BaseModel):
    rows: list[SweepRow]
    csv: str


class IdentifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    log_csv: str
    window: int = Field(default=200, ge=1)
    max_shift: int = Field(default=50, ge=0)
    bins: int = Field(default=32, ge=1)
    upper: float = Field(default=2.0, gt=0.0)
    samples: int = Field(default=100_000, ge=1)
    seed: int = 0
    truncation_tol: float = Field(default=1e-3, ge=0.0)


class IdentifyResponse(BaseModel):
    gamma: float
    uncertainty_text: str
    delays: list[int]
    histogram_edges: list[float]
    histogram_masses: list[float]
    histogram_csv: str
    probs: dict[str, float]
    se: dict[str, float]
    truncated_mass: float


class MeasureRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pfsa_text: str
    theta: float = Field(gt=0.0, le=1.0)


class MeasureResponse(BaseModel):
    theta: float
    nu: list[float]


class OptimizeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pfsa_text: str
    theta_start: float = Field(default=0.99, gt=0.0, lt=1.0)
    tie_tol: float = Field(default=1e-9, gt=0.0)


class OptimizeResponse(BaseModel):
    theta_min: float
    iterations: int
    nu: list[float]
    disabled: list[tuple[int, str]]
    supervised_pfsa_text: str


class HealthResponse(BaseModel):
    status: str
    version: str
