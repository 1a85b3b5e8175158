"""FastAPI service wrapping the planning toolkit.

All endpoints are stateless POSTs: each request carries the full problem
(map text, uncertainty source, parameters) and the response is a
deterministic function of the body.  Domain errors (bad maps, bad
automata, infeasible preconditions) map to HTTP 400 with a ``detail``
message; schema violations get FastAPI's usual 422.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..nav_model import (
    COMPASS,
    GridMap,
    NavAutomaton,
    UncertaintyModel,
    build_2d,
    build_heading,
    build_history,
    gamma_of,
    parse_grid,
    parse_uncertainty,
)
from ..pfsa import PfsaError, parse_pfsa, renormalized_measure, serialize_pfsa, transition_matrix
from ..planner import (
    AssembledPlan,
    InfeasibleStateError,
    assemble,
    gradient_path,
    plan_csv,
    plan_svg,
    recursive_plan,
)
from ..simulator import absorbing_probabilities, execute_mission, mission_trace_csv, monte_carlo, success_margin
from ..supervisor import optimize
from ..uncertainty import identify, parse_trajectory_csv
from .schemas import (
    HealthResponse,
    IdentifyRequest,
    IdentifyResponse,
    MeasureRequest,
    MeasureResponse,
    ModelSpec,
    OptimizeRequest,
    OptimizeResponse,
    PlanRequest,
    PlanResponse,
    PlanStepOut,
    SimulateRequest,
    SimulateResponse,
    SweepGammaRequest,
    SweepGammaResponse,
    SweepRow,
)

__all__ = ["app", "create_app"]


def _grid_for(map_text: str, goal: list[int] | None, model: str) -> GridMap:
    grid = parse_grid(map_text)
    if goal is None:
        return grid
    heading = None
    if len(goal) == 3:
        if model != "heading":
            raise PfsaError("a goal heading only applies to the heading model")
        heading = int(goal[2])
    return dataclasses.replace(
        grid, goal=(int(goal[0]), int(goal[1])), goal_heading=heading
    )


def _uncertainty_for(gamma: float | None, uncertainty_text: str | None) -> UncertaintyModel:
    if gamma is not None:
        return UncertaintyModel.uniform(gamma)
    if uncertainty_text is not None:
        return parse_uncertainty(uncertainty_text)
    return UncertaintyModel.none()


def _build_nav(
    *,
    map_text: str,
    model: str,
    gamma: float | None,
    uncertainty_text: str | None,
    goal: list[int] | None,
    headings: int,
    max_turn_deg: int,
) -> NavAutomaton:
    grid = _grid_for(map_text, goal, model)
    unc = _uncertainty_for(gamma, uncertainty_text)
    if model == "2d":
        return build_2d(grid, unc)
    if model == "heading":
        return build_heading(grid, unc, headings=headings, max_turn_deg=max_turn_deg)
    # History pairs get the same row for every incoming direction; per-state
    # rows are indexed by 2d states and do not map onto pair states.
    if unc.mode == "per_state":
        raise PfsaError("the history model takes gamma or an averaged 'uc' row")
    row = dict(unc.averaged) if unc.mode == "averaged" else {}
    table = {name: row for name, _ in COMPASS}
    table["rest"] = row
    return build_history(grid, table)


def _nav_from_spec(spec: ModelSpec) -> NavAutomaton:
    return _build_nav(
        map_text=spec.map_text,
        model=spec.model,
        gamma=spec.gamma,
        uncertainty_text=spec.uncertainty_text,
        goal=spec.goal,
        headings=spec.headings,
        max_turn_deg=spec.max_turn_deg,
    )


def _planned(spec: ModelSpec) -> tuple[NavAutomaton, AssembledPlan, object]:
    nav = _nav_from_spec(spec)
    stack = recursive_plan(nav, theta_start=spec.theta_start, tie_tol=spec.tie_tol)
    return nav, assemble(stack), stack


def _start_state(nav: NavAutomaton, start: list[int]) -> int:
    r, c = int(start[0]), int(start[1])
    if nav.model_kind == "heading":
        if len(start) != 3:
            raise PfsaError("the heading model needs start = [row, col, heading]")
        return nav.state_of((r, c, int(start[2])))
    if len(start) == 3:
        raise PfsaError("a start heading only applies to the heading model")
    if nav.model_kind == "history":
        return nav.state_of(((r, c), (r, c)))
    return nav.state_of((r, c))


def create_app() -> FastAPI:
    app = FastAPI(
        title="pfsaplan",
        version=__version__,
        description="Measure-theoretic optimal path planning over probabilistic automata.",
    )

    @app.exception_handler(PfsaError)
    async def _domain_error(request: Request, exc: PfsaError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/plan", response_model=PlanResponse)
    def plan(req: PlanRequest) -> PlanResponse:
        nav, plan, stack = _planned(req)
        feasible = int((plan.field > 0.0).sum())
        non_goal_feasible = feasible - len(nav.goal_states)
        return PlanResponse(
            k=stack.k,
            gamma=gamma_of(nav),
            total_states=nav.pfsa.n_states,
            feasible_states=feasible,
            infeasible_everywhere=non_goal_feasible <= 0,
            steps=[
                PlanStepOut(
                    theta_min=s.theta_min,
                    chi_goal=s.chi_goal,
                    feasible_states=len(s.q_set),
                )
                for s in stack.steps
            ],
            plan_csv=plan_csv(plan),
            svg=plan_svg(plan, cell_px=req.cell_px) if req.svg else None,
        )

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        nav, plan, _ = _planned(req)
        start = _start_state(nav, req.start)
        est = monte_carlo(
            nav,
            plan,
            start,
            beta=req.beta,
            runs=req.runs,
            seed=req.seed,
            max_steps=req.max_steps,
        )
        exact_goal, exact_obstacle = absorbing_probabilities(
            nav, plan, start, beta=req.beta
        )
        trace_csv = None
        if req.trace:
            result = execute_mission(
                nav, plan, start, beta=req.beta, seed=req.seed, max_steps=req.max_steps
            )
            trace_csv = mission_trace_csv(result, nav)
        return SimulateResponse(
            p_goal=est.p_goal,
            p_obstacle=est.p_obstacle,
            se_goal=est.se_goal,
            se_obstacle=est.se_obstacle,
            runs=est.runs,
            n_goal=est.n_goal,
            n_obstacle=est.n_obstacle,
            n_step_limit=est.n_step_limit,
            exact_p_goal=exact_goal,
            exact_p_obstacle=exact_obstacle,
            exact_identity_gap=abs(exact_goal + exact_obstacle - 1.0),
            success_margin_exact=success_margin(exact_goal, exact_obstacle),
            trace_csv=trace_csv,
        )

    @app.post("/sweep/gamma", response_model=SweepGammaResponse)
    def sweep_gamma(req: SweepGammaRequest) -> SweepGammaResponse:
        rows: list[SweepRow] = []
        for g in req.gammas:
            nav = _build_nav(
                map_text=req.map_text,
                model=req.model,
                gamma=g,
                uncertainty_text=None,
                goal=req.goal,
                headings=req.headings,
                max_turn_deg=req.max_turn_deg,
            )
            stack = recursive_plan(
                nav, theta_start=req.theta_start, tie_tol=req.tie_tol
            )
            plan = assemble(stack)
            start = _start_state(nav, req.start)
            try:
                length = len(gradient_path(plan, nav, start, beta=req.beta)) - 1
            except InfeasibleStateError:
                length = -1
            exact_goal, _ = absorbing_probabilities(nav, plan, start, beta=req.beta)
            rows.append(
                SweepRow(gamma=g, path_length=length, p_goal_exact=exact_goal)
            )
        lines = ["gamma,path_length,p_goal_exact"]
        lines += [f"{r.gamma!r},{r.path_length},{r.p_goal_exact!r}" for r in rows]
        return SweepGammaResponse(rows=rows, csv="\n".join(lines) + "\n")

    @app.post("/identify", response_model=IdentifyResponse)
    def identify_endpoint(req: IdentifyRequest) -> IdentifyResponse:
        log = parse_trajectory_csv(req.log_csv)
        res = identify(
            log,
            window=req.window,
            max_shift=req.max_shift,
            bins=req.bins,
            upper=req.upper,
            samples=req.samples,
            seed=req.seed,
            truncation_tol=req.truncation_tol,
        )
        hist = res.histogram
        hist_lines = ["bin_lo,bin_hi,mass"]
        hist_lines += [
            f"{float(hist.edges[i])!r},{float(hist.edges[i + 1])!r},{float(m)!r}"
            for i, m in enumerate(hist.masses)
        ]
        return IdentifyResponse(
            gamma=res.gamma,
            uncertainty_text=res.uncertainty_text(),
            delays=list(res.delays),
            histogram_edges=[float(v) for v in hist.edges],
            histogram_masses=[float(v) for v in hist.masses],
            histogram_csv="\n".join(hist_lines) + "\n",
            probs=dict(res.estimate.probs),
            se=dict(res.estimate.se),
            truncated_mass=res.estimate.truncated_mass,
        )

    @app.post("/pfsa/measure", response_model=MeasureResponse)
    def pfsa_measure(req: MeasureRequest) -> MeasureResponse:
        pfsa = parse_pfsa(req.pfsa_text)
        nu = renormalized_measure(transition_matrix(pfsa), pfsa.chi, req.theta)
        return MeasureResponse(theta=req.theta, nu=[float(v) for v in nu])

    @app.post("/pfsa/optimize", response_model=OptimizeResponse)
    def pfsa_optimize(req: OptimizeRequest) -> OptimizeResponse:
        pfsa = parse_pfsa(req.pfsa_text)
        res = optimize(pfsa, theta_start=req.theta_start, tie_tol=req.tie_tol)
        disabled = sorted(
            (int(q), pfsa.events[e].name) for q, e in res.disabled
        )
        return OptimizeResponse(
            theta_min=res.theta_min,
            iterations=res.iterations,
            nu=[float(v) for v in res.nu_sharp],
            disabled=disabled,
            supervised_pfsa_text=serialize_pfsa(res.supervised),
        )

    return app


app = create_app()
