"""Recursive measure planning over navigation automata.

A single supervisor optimization marks as positive-measure exactly the states
from which the goal is reachable without ever risking more obstacle mass than
goal mass; with uncontrollable events present that positivity horizon can be
as short as one hop.  The recursive planner therefore repeats: optimize,
collect the positive-measure set Q_k, then (a) raise the characteristic of
every state in Q_k to a value exceeding the expansion bound and (b) eliminate
the uncontrollable events of states inside Q_k (their mass is redistributed
uniformly over the state's controllable moves), and optimize again.  Each
pass grows Q_k by at least its one-hop controllable boundary, so the
recursion ends in at most Card(Q) passes, when Q_k stops changing.

The per-pass plan vectors are then assembled into a single scalar field
whose sign encodes feasibility and whose gradient (over controllable
successors) is free of local maxima; missions follow that gradient, with an
optional turn penalty blending straight-line preference into tie-breaking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nav_model import NavAutomaton, gamma_of
from .pfsa import Pfsa, PfsaError
from .supervisor import THETA_START_DEFAULT, SupervisionResult, optimize

__all__ = [
    "AssembledPlan",
    "GoalReachedError",
    "InfeasibleStateError",
    "PlanInvariantError",
    "PlanStack",
    "PlanStep",
    "assemble",
    "chi_goal_bound",
    "feasible",
    "gradient_path",
    "next_states",
    "plan_csv",
    "plan_svg",
    "recursive_plan",
    "select_move",
]

CHI_SAFETY = 1.01
"""Characteristic values are set this factor above the strict expansion bound."""

NEXT_TIE_TOL = 1e-9
"""Successors within this tolerance of the best successor count as tied."""


class PlanInvariantError(PfsaError):
    """A property the recursion guarantees failed to hold (internal error)."""


class GoalReachedError(PfsaError):
    """select_move called at a goal state: there is nowhere better to go."""


class InfeasibleStateError(PfsaError):
    """select_move called at a state with no feasible path to the goal."""


@dataclass(frozen=True)
class PlanStep:
    """One recursion pass: its plan vector, positive set, and parameters."""

    nu: np.ndarray
    q_set: frozenset[int]
    theta_min: float
    chi_goal: float
    supervision: SupervisionResult


@dataclass(frozen=True)
class PlanStack:
    """All recursion passes for one navigation automaton, k = 1..K."""

    nav: NavAutomaton
    q0: frozenset[int]
    steps: tuple[PlanStep, ...]

    @property
    def k(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class AssembledPlan:
    """Summed plan field: positive exactly on the feasible states.

    ``provenance[q]`` is the first pass index whose plan vector made q
    positive (0 for goal states, -1 for infeasible states).
    """

    nav: NavAutomaton
    field: np.ndarray
    provenance: np.ndarray


def chi_goal_bound(card_sigma_c: int, theta_min: float, gamma: float) -> float:
    """Strict lower bound on the goal characteristic for one-hop expansion.

    Evaluates Card(Sigma_C) / (1 - theta_min) * (1/gamma - 1): any goal
    characteristic strictly above it guarantees that every state one
    controllable hop from the current positive set becomes positive on the
    next pass.  Zero when gamma = 1; grows without bound as gamma -> 0+.
    """
    if gamma <= 0.0:
        raise PfsaError(f"gamma must be positive, got {gamma!r}; the bound diverges")
    if gamma > 1.0:
        raise PfsaError(f"gamma must lie in (0, 1], got {gamma!r}")
    if not (0.0 < theta_min < 1.0):
        raise PfsaError(f"theta_min must lie in (0, 1), got {theta_min!r}")
    if card_sigma_c <= 0:
        raise PfsaError(f"need at least one controllable event, got {card_sigma_c}")
    return card_sigma_c / (1.0 - theta_min) * (1.0 / gamma - 1.0)


def _column_split(pfsa: Pfsa) -> tuple[list[int], list[int]]:
    mv = [e for e, ev in enumerate(pfsa.events) if ev.controllable]
    uc = [e for e, ev in enumerate(pfsa.events) if not ev.controllable]
    return mv, uc


def _eliminate_uncontrollable(pfsa: Pfsa, states: frozenset[int], new_chi: np.ndarray) -> Pfsa:
    """Drop uncontrollable events at ``states``; mass moves to their moves."""
    mv_cols, uc_cols = _column_split(pfsa)
    delta = pfsa.delta.copy()
    probs = pfsa.probs.copy()
    for q in states:
        defined_uc = [e for e in uc_cols if delta[q, e] >= 0]
        if not defined_uc:
            continue
        mass = float(probs[q, defined_uc].sum())
        defined_mv = [e for e in mv_cols if delta[q, e] >= 0]
        if not defined_mv:
            raise PlanInvariantError(
                f"state {q} has positive measure but no controllable moves"
            )
        probs[q, defined_uc] = 0.0
        delta[q, defined_uc] = -1
        probs[q, defined_mv] += mass / len(defined_mv)
    return pfsa.replace(delta=delta, probs=probs, chi=new_chi)


def _one_hop_boundary(pfsa: Pfsa, q_set: frozenset[int]) -> list[int]:
    """States outside q_set with a controllable move into q_set."""
    mv_cols, _ = _column_split(pfsa)
    members = np.zeros(pfsa.n_states, dtype=bool)
    members[list(q_set)] = True
    out = []
    for q in range(pfsa.n_states):
        if members[q]:
            continue
        for e in mv_cols:
            j = pfsa.delta[q, e]
            if j >= 0 and members[j]:
                out.append(q)
                break
    return out


def recursive_plan(
    nav: NavAutomaton,
    *,
    theta_start: float = THETA_START_DEFAULT,
    tie_tol: float = 1e-9,
) -> PlanStack:
    """Run the full recursion; see the module docstring for the loop."""
    if not nav.goal_states:
        raise PfsaError("navigation automaton has no goal states")
    gamma = gamma_of(nav)
    mv_cols, _ = _column_split(nav.pfsa)
    card_sigma_c = len(mv_cols)
    n = nav.pfsa.n_states

    q_prev: frozenset[int] = frozenset(nav.goal_states)
    plant = nav.pfsa
    chi_goal = float(plant.chi[next(iter(nav.goal_states))])
    theta = theta_start
    warm: frozenset[tuple[int, int]] = frozenset()
    steps: list[PlanStep] = []
    for k in range(1, n + 1):
        res = optimize(plant, theta_start=theta, tie_tol=tie_tol, initial_disabled=warm)
        if k == 1:
            # The expansion bound needs theta_min, which only the first
            # optimization reveals; if the built goal characteristic does not
            # clear it, raise chi and redo the pass (theta only shrinks, and
            # the bound shrinks with it, so once is enough).
            bound = chi_goal_bound(card_sigma_c, res.theta_min, gamma)
            if chi_goal <= bound:
                chi_goal = CHI_SAFETY * bound
                chi = np.zeros(n)
                chi[list(q_prev)] = chi_goal
                chi[nav.deadlock_state] = -1.0
                plant = plant.replace(chi=chi)
                res = optimize(
                    plant,
                    theta_start=res.theta_min,
                    tie_tol=tie_tol,
                    initial_disabled=res.disabled,
                )
        theta = res.theta_min
        warm = res.disabled
        nu = res.nu_sharp
        q_k = frozenset(int(q) for q in np.nonzero(nu > 0.0)[0])
        if not q_prev <= q_k:
            missing = sorted(q_prev - q_k)
            raise PlanInvariantError(
                f"pass {k} lost previously positive states {missing[:8]}"
            )
        if k > 1 or chi_goal > chi_goal_bound(card_sigma_c, res.theta_min, gamma):
            boundary = _one_hop_boundary(plant, q_prev)
            not_positive = [q for q in boundary if nu[q] <= 0.0]
            if not_positive:
                raise PlanInvariantError(
                    f"pass {k} left one-hop boundary states {not_positive[:8]} "
                    "non-positive despite the expansion bound"
                )
        steps.append(
            PlanStep(
                nu=nu,
                q_set=q_k,
                theta_min=res.theta_min,
                chi_goal=chi_goal,
                supervision=res,
            )
        )
        if q_k == q_prev:
            return PlanStack(nav=nav, q0=frozenset(nav.goal_states), steps=tuple(steps))
        bound = chi_goal_bound(card_sigma_c, res.theta_min, gamma)
        chi_goal = max(1.0, CHI_SAFETY * bound)
        chi = np.zeros(n)
        chi[list(q_k)] = chi_goal
        chi[nav.deadlock_state] = -1.0
        plant = _eliminate_uncontrollable(plant, q_k, chi)
        q_prev = q_k
    raise PlanInvariantError(
        f"recursion did not terminate within Card(Q) = {n} passes"
    )


def assemble(stack: PlanStack) -> AssembledPlan:
    """Sum the per-pass plan vectors into one feasibility/gradient field.

    Pass k contributes, per state: 1 if the previous pass's vector was
    already positive there, else that state's current plan value if positive,
    else nothing.  The pass-0 vector is the goal-membership indicator.

    Each pass's plan value is divided by that pass's goal characteristic
    before summation.  States holding the characteristic are already covered
    by the previous pass's indicator, so a pass's fresh contributions land
    strictly inside (0, 1): states that became feasible earlier always stand
    at least a full unit above later ones, which is what frees the summed
    field of local maxima.  When every goal characteristic is 1 (no dynamic
    uncertainty), the division is the identity.
    """
    n = stack.nav.pfsa.n_states
    prev = np.zeros(n)
    prev[list(stack.q0)] = 1.0
    field = np.zeros(n)
    provenance = np.full(n, -1, dtype=np.int64)
    provenance[list(stack.q0)] = 0
    for k, step in enumerate(stack.steps, start=1):
        cur = step.nu
        scaled = cur / step.chi_goal
        tmp = np.where(prev > 0.0, 1.0, np.where(scaled > 0.0, scaled, 0.0))
        field += tmp
        newly = (provenance < 0) & (cur > 0.0)
        provenance[newly] = k
        prev = cur
    return AssembledPlan(nav=stack.nav, field=field, provenance=provenance)


def feasible(plan: AssembledPlan, q: int) -> bool:
    """A feasible path to the goal exists iff the assembled field is positive."""
    return bool(plan.field[q] > 0.0)


def next_states(plan: AssembledPlan, nav: NavAutomaton, q: int) -> list[int]:
    """Best strictly-improving controllable successors of q.

    Empty exactly when q is a goal state or has no feasible path.  Successors
    must strictly exceed q's field value and lie within ``NEXT_TIE_TOL`` of
    the best successor, so geometric ties survive for the turn penalty to
    break.
    """
    if q in nav.obstacle_states:
        raise PfsaError(f"state {q} is an obstacle state")
    if q in nav.goal_states or plan.field[q] <= 0.0:
        return []
    mv_cols, _ = _column_split(nav.pfsa)
    succ = {int(j) for j in nav.pfsa.delta[q, mv_cols] if j >= 0}
    if not succ:
        return []
    best = max(plan.field[j] for j in succ)
    here = plan.field[q]
    return sorted(
        j for j in succ if plan.field[j] > here and plan.field[j] >= best - NEXT_TIE_TOL
    )


def _cosine(nav: NavAutomaton, q: int, j: int, incoming: tuple[float, float] | None) -> float:
    """Cosine of the angle between the incoming direction and the move q->j."""
    if incoming is None:
        return 1.0
    vin = np.asarray(incoming, dtype=np.float64)
    nin = float(np.hypot(vin[0], vin[1]))
    if nin == 0.0:
        return 1.0
    w = plan_displacement(nav, q, j)
    nw = float(np.hypot(w[0], w[1]))
    if nw == 0.0:
        return 1.0
    return float(np.dot(vin, w) / (nin * nw))


def plan_displacement(nav: NavAutomaton, q: int, j: int) -> np.ndarray:
    """Planar displacement between the footprints of q and j."""
    return nav.positions[j] - nav.positions[q]


def select_move(
    plan: AssembledPlan,
    nav: NavAutomaton,
    q: int,
    incoming: tuple[float, float] | None,
    beta: float,
) -> int:
    """Argmax of (1-beta) * field + beta * cos(turn angle) over next_states.

    ``incoming`` is the planar direction of the previous displacement (None
    at rest, which scores every candidate's cosine as 1).  Ties fall to the
    lowest state index, so runs are reproducible.
    """
    if not (0.0 <= beta <= 1.0):
        raise PfsaError(f"beta must lie in [0, 1], got {beta!r}")
    candidates = next_states(plan, nav, q)
    if not candidates:
        if q in nav.goal_states:
            raise GoalReachedError(f"state {q} is a goal state")
        raise InfeasibleStateError(f"state {q} has no feasible path to the goal")
    best_q = candidates[0]
    best_score = -math.inf
    for j in candidates:
        score = (1.0 - beta) * float(plan.field[j]) + beta * _cosine(nav, q, j, incoming)
        if score > best_score + 1e-12:
            best_score = score
            best_q = j
    return best_q


def gradient_path(
    plan: AssembledPlan, nav: NavAutomaton, start: int, beta: float = 0.0
) -> list[int]:
    """Deterministic gradient descent-to-goal; the no-uncertainty trajectory.

    Every chosen move is taken as if it always succeeded; the walk must
    reach a goal state within Card(Q) moves without revisiting any state,
    or the field's no-local-maxima guarantee is broken.
    """
    if not feasible(plan, start):
        raise InfeasibleStateError(f"state {start} has no feasible path to the goal")
    path = [start]
    seen = {start}
    incoming: tuple[float, float] | None = None
    q = start
    while q not in nav.goal_states:
        j = select_move(plan, nav, q, incoming, beta)
        d = plan_displacement(nav, q, j)
        if float(np.hypot(d[0], d[1])) > 0.0:
            incoming = (float(d[0]), float(d[1]))
        if j in seen:
            raise PlanInvariantError(f"gradient path revisited state {j}")
        if len(path) > nav.pfsa.n_states:
            raise PlanInvariantError("gradient path exceeded Card(Q) moves")
        path.append(j)
        seen.add(j)
        q = j
    return path


def plan_csv(plan: AssembledPlan) -> str:
    """One line per non-deadlock state: position, field value, best move."""
    nav = plan.nav
    with_heading = nav.model_kind == "heading"
    header = "row,col,heading,measure,best_next_row,best_next_col" if with_heading else (
        "row,col,measure,best_next_row,best_next_col"
    )
    lines = [header]
    for q in range(nav.pfsa.n_states):
        if q == nav.deadlock_state:
            continue
        r, c = nav.cell_of(q)
        try:
            nxt = next_states(plan, nav, q)
        except PfsaError:
            nxt = []
        target = nxt[0] if nxt else q
        tr, tc = nav.cell_of(target)
        value = float(plan.field[q])
        if with_heading:
            h = nav.xi[q][2]
            lines.append(f"{r},{c},{h},{value!r},{tr},{tc}")
        else:
            lines.append(f"{r},{c},{value!r},{tr},{tc}")
    return "\n".join(lines) + "\n"


def plan_svg(plan: AssembledPlan, cell_px: int = 24) -> str:
    """Heatmap of the assembled field with per-cell best-move arrows."""
    nav = plan.nav
    grid = nav.grid
    width, height = grid.cols * cell_px, grid.rows * cell_px
    # aggregate per cell: strongest state and its best move
    best_state: dict[tuple[int, int], int] = {}
    for q in range(nav.pfsa.n_states):
        if q == nav.deadlock_state:
            continue
        cell = nav.cell_of(q)
        cur = best_state.get(cell)
        if cur is None or plan.field[q] > plan.field[cur]:
            best_state[cell] = q
    positive = [float(v) for v in plan.field if v > 0.0]
    vmax = max(positive) if positive else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    for r in range(grid.rows):
        for c in range(grid.cols):
            x, y = c * cell_px, r * cell_px
            if grid.is_blocked(r, c):
                fill = "#222222"
            else:
                q = best_state[(r, c)]
                v = float(plan.field[q])
                if v <= 0.0:
                    fill = "#d0d0d0"
                else:
                    # light yellow -> saturated red with field strength
                    t = v / vmax
                    green = int(round(235 * (1.0 - t)))
                    fill = f"#ff{green:02x}30"
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" '
                f'fill="{fill}" stroke="#888888" stroke-width="1"/>'
            )
    gr, gc = grid.goal
    parts.append(
        f'<circle cx="{gc * cell_px + cell_px / 2:g}" cy="{gr * cell_px + cell_px / 2:g}" '
        f'r="{cell_px / 3:g}" fill="none" stroke="#006600" stroke-width="2"/>'
    )
    for (r, c), q in sorted(best_state.items()):
        try:
            nxt = next_states(plan, nav, q)
        except PfsaError:
            continue
        if not nxt:
            continue
        tr, tc = nav.cell_of(nxt[0])
        x0, y0 = c * cell_px + cell_px / 2, r * cell_px + cell_px / 2
        x1 = x0 + (tc - c) * cell_px * 0.38
        y1 = y0 + (tr - r) * cell_px * 0.38
        parts.append(
            f'<line x1="{x0:g}" y1="{y0:g}" x2="{x1:g}" y2="{y1:g}" '
            f'stroke="#003399" stroke-width="2" marker-end="url(#tip)"/>'
        )
    parts.insert(
        1,
        '<defs><marker id="tip" markerWidth="6" markerHeight="6" refX="5" refY="3" '
        'orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#003399"/></marker></defs>',
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
