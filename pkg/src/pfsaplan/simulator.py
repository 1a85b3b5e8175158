"""Mission execution against an assembled plan, with exact outcome analysis.

A mission runs the plan's gradient policy step by step: at every state the
agent picks the best next state (turn penalty included), then *attempts* the
corresponding controllable move.  One event is sampled from the normalized
distribution over the chosen move plus every uncontrollable event defined at
the current state, so the attempt may land somewhere else.  The mission ends
in success on entering a goal state, in failure on entering any state whose
assembled field is non-positive (blocked cells, the off-grid sink, walled-off
regions), or inconclusively at the step limit.

Beyond sampling, the same execution process is solved exactly: the policy
induces an absorbing Markov chain over (state, incoming direction) pairs —
the direction matters because the turn penalty does — whose absorption
probabilities at the goal and at failure states are computed by one sparse
linear solve.  Monte Carlo estimates must agree with these exact values at
the binomial-noise rate, and the optimized plan's exact success probability
must dominate any other feasible policy's.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .nav_model import COMPASS, NavAutomaton
from .pfsa import PfsaError
from .planner import AssembledPlan, select_move

__all__ = [
    "MissionResult",
    "OutcomeEstimate",
    "absorbing_probabilities",
    "estimate_json",
    "execute_mission",
    "mission_trace_csv",
    "monte_carlo",
    "random_descent_policy",
    "success_margin",
]

_DIR_VECTORS = tuple((float(dr), float(dc)) for _, (dr, dc) in COMPASS)
_DIR_INDEX = {vec: i for i, vec in enumerate(_DIR_VECTORS)}
_NO_DIR = len(_DIR_VECTORS)  # "at rest": no incoming direction yet
_SUM_TOL = 1e-10


@dataclass(frozen=True)
class MissionResult:
    """One executed mission.

    ``trace`` lists every state entered, starting with the start state;
    ``event_kinds`` parallels it ("start", then "controlled" when the chosen
    move succeeded, "uncontrolled" when a deviation fired).
    ``moves_attempted`` counts chosen moves (= sampled events = ``steps``);
    ``states_entered`` counts actual state changes.
    """

    outcome: str  # "goal_reached" | "mission_failed" | "step_limit"
    trace: tuple[int, ...]
    event_kinds: tuple[str, ...]
    moves_attempted: int
    states_entered: int
    steps: int
    seed: int


@dataclass(frozen=True)
class OutcomeEstimate:
    """Aggregated Monte Carlo outcome frequencies with binomial errors."""

    p_goal: float
    p_obstacle: float
    se_goal: float
    se_obstacle: float
    runs: int
    n_goal: int
    n_obstacle: int
    n_step_limit: int

    @property
    def success_margin(self) -> float:
        return self.p_goal - self.p_obstacle


def success_margin(p_goal: float, p_obstacle: float) -> float:
    """Success probability minus failure probability; 2*p_goal - 1 when they sum to 1."""
    return p_goal - p_obstacle


def _check_pair(nav: NavAutomaton, plan: AssembledPlan) -> None:
    if plan.nav is not nav:
        raise PfsaError("plan was assembled for a different navigation automaton")


def _check_start(nav: NavAutomaton, start: int) -> None:
    n = nav.pfsa.n_states
    if not (0 <= start < n):
        raise PfsaError(f"start state {start} out of range 0..{n - 1}")
    if start in nav.obstacle_states:
        raise PfsaError(f"start state {start} is blocked")


def _mv_columns(nav: NavAutomaton) -> list[int]:
    return [e for e, ev in enumerate(nav.pfsa.events) if ev.controllable]


def _uc_columns(nav: NavAutomaton) -> list[int]:
    return [e for e, ev in enumerate(nav.pfsa.events) if not ev.controllable]


def _step_candidates(
    nav: NavAutomaton, q: int, target: int, mv_cols: list[int], uc_cols: list[int]
) -> list[tuple[int, float, bool]]:
    """(destination, normalized probability, was-the-chosen-move) triples."""
    pfsa = nav.pfsa
    chosen = None
    for e in mv_cols:
        if pfsa.delta[q, e] == target:
            chosen = e
            break
    if chosen is None:
        raise PfsaError(f"no controllable move from state {q} to {target}")
    entries: list[tuple[int, float, bool]] = [
        (target, float(pfsa.probs[q, chosen]), True)
    ]
    for e in uc_cols:
        dst = int(pfsa.delta[q, e])
        if dst >= 0:
            entries.append((dst, float(pfsa.probs[q, e]), False))
    total = sum(p for _, p, _ in entries)
    return [(dst, p / total, kind) for dst, p, kind in entries]


def _run_mission(
    nav: NavAutomaton,
    plan: AssembledPlan,
    start: int,
    beta: float,
    rng: np.random.Generator,
    max_steps: int,
    seed_label: int,
) -> MissionResult:
    mv_cols, uc_cols = _mv_columns(nav), _uc_columns(nav)
    trace = [start]
    kinds = ["start"]
    q = start
    incoming: tuple[float, float] | None = None
    steps = entered = 0
    while True:
        if q in nav.goal_states:
            outcome = "goal_reached"
            break
        if plan.field[q] <= 0.0:
            outcome = "mission_failed"
            break
        if steps >= max_steps:
            outcome = "step_limit"
            break
        target = select_move(plan, nav, q, incoming, beta)
        r = rng.random()
        acc = 0.0
        dst, controlled = target, True
        for cand_dst, p, kind in _step_candidates(nav, q, target, mv_cols, uc_cols):
            acc += p
            if r < acc:
                dst, controlled = cand_dst, kind
                break
        steps += 1
        if dst != q:
            entered += 1
            dr = float(nav.positions[dst][0] - nav.positions[q][0])
            dc = float(nav.positions[dst][1] - nav.positions[q][1])
            if not (np.isnan(dr) or np.isnan(dc)) and (dr != 0.0 or dc != 0.0):
                incoming = (dr, dc)
        trace.append(dst)
        kinds.append("controlled" if controlled else "uncontrolled")
        q = dst
    return MissionResult(
        outcome=outcome,
        trace=tuple(trace),
        event_kinds=tuple(kinds),
        moves_attempted=steps,
        states_entered=entered,
        steps=steps,
        seed=seed_label,
    )


def execute_mission(
    nav: NavAutomaton,
    plan: AssembledPlan,
    start: int,
    beta: float = 0.0,
    seed: int = 0,
    max_steps: int | None = None,
) -> MissionResult:
    """Run one seeded mission; see the module docstring for the semantics."""
    _check_pair(nav, plan)
    _check_start(nav, start)
    if max_steps is None:
        max_steps = 50 * nav.pfsa.n_states
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    return _run_mission(nav, plan, start, beta, rng, max_steps, seed)


def monte_carlo(
    nav: NavAutomaton,
    plan: AssembledPlan,
    start: int,
    beta: float = 0.0,
    runs: int = 1000,
    seed: int = 0,
    max_steps: int | None = None,
) -> OutcomeEstimate:
    """Estimate outcome probabilities over independently seeded missions.

    Run r draws from the counter-based stream keyed by (seed, r), so the
    aggregate does not depend on execution order and a single run can be
    replayed in isolation.
    """
    _check_pair(nav, plan)
    _check_start(nav, start)
    if runs < 1:
        raise PfsaError(f"need at least one run, got {runs}")
    if max_steps is None:
        max_steps = 50 * nav.pfsa.n_states
    counts = {"goal_reached": 0, "mission_failed": 0, "step_limit": 0}
    for r in range(runs):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, r])))
        res = _run_mission(nav, plan, start, beta, rng, max_steps, r)
        counts[res.outcome] += 1
    p_goal = counts["goal_reached"] / runs
    p_obstacle = counts["mission_failed"] / runs
    return OutcomeEstimate(
        p_goal=p_goal,
        p_obstacle=p_obstacle,
        se_goal=float(np.sqrt(p_goal * (1.0 - p_goal) / runs)),
        se_obstacle=float(np.sqrt(p_obstacle * (1.0 - p_obstacle) / runs)),
        runs=runs,
        n_goal=counts["goal_reached"],
        n_obstacle=counts["mission_failed"],
        n_step_limit=counts["step_limit"],
    )


def mission_trace_csv(result: MissionResult, nav: NavAutomaton) -> str:
    """Trace as CSV rows ``step,row,col[,heading],event_kind``.

    The off-grid sink has no footprint and is written as -1 coordinates.
    """
    with_heading = nav.model_kind == "heading"
    header = "step,row,col,heading,event_kind" if with_heading else "step,row,col,event_kind"
    lines = [header]
    for step, (q, kind) in enumerate(zip(result.trace, result.event_kinds)):
        fp = nav.xi[q]
        if fp is None:
            coords = "-1,-1,-1" if with_heading else "-1,-1"
        elif with_heading:
            coords = f"{fp[0]},{fp[1]},{fp[2]}"
        else:
            coords = f"{fp[0]},{fp[1]}"
        lines.append(f"{step},{coords},{kind}")
    return "\n".join(lines) + "\n"


def estimate_json(est: OutcomeEstimate) -> str:
    """OutcomeEstimate as a deterministic JSON block."""
    return json.dumps(
        {
            "p_goal": est.p_goal,
            "p_obstacle": est.p_obstacle,
            "se_goal": est.se_goal,
            "se_obstacle": est.se_obstacle,
            "success_margin": est.success_margin,
            "runs": est.runs,
            "n_goal": est.n_goal,
            "n_obstacle": est.n_obstacle,
            "n_step_limit": est.n_step_limit,
        },
        sort_keys=True,
    )


def random_descent_policy(
    nav: NavAutomaton, rng: np.random.Generator
) -> dict[int, int]:
    """A feasible but plan-independent policy for baseline comparisons.

    Every feasible non-goal state picks, uniformly at random, a controllable
    successor strictly closer to the goal in hop distance over the enabled
    move graph; following it always reaches the goal when moves succeed.
    """
    pfsa = nav.pfsa
    mv_cols = _mv_columns(nav)
    n = pfsa.n_states
    # hop distance to the nearest goal state over controllable moves
    dist = np.full(n, -1, dtype=np.int64)
    queue: deque[int] = deque()
    preds: list[list[int]] = [[] for _ in range(n)]
    for q in range(n):
        if q in nav.obstacle_states:
            continue
        for e in mv_cols:
            j = int(pfsa.delta[q, e])
            if j >= 0 and j not in nav.obstacle_states:
                preds[j].append(q)
    for g in nav.goal_states:
        dist[g] = 0
        queue.append(g)
    while queue:
        j = queue.popleft()
        for q in preds[j]:
            if dist[q] < 0:
                dist[q] = dist[j] + 1
                queue.append(q)
    policy: dict[int, int] = {}
    for q in range(n):
        if dist[q] <= 0:
            continue
        closer = sorted(
            {
                int(pfsa.delta[q, e])
                for e in mv_cols
                if pfsa.delta[q, e] >= 0 and 0 <= dist[pfsa.delta[q, e]] < dist[q]
            }
        )
        policy[q] = closer[int(rng.integers(len(closer)))]
    return policy


def absorbing_probabilities(
    nav: NavAutomaton,
    plan: AssembledPlan,
    start: int,
    beta: float = 0.0,
    policy: dict[int, int] | None = None,
) -> tuple[float, float]:
    """Exact (p_goal, p_obstacle) of the execution process started at ``start``.

    The process follows the plan's move selection (or ``policy``, a state ->
    successor map) with the automaton's original uncontrollable rows, exactly
    as :func:`execute_mission` samples it, and is solved as an absorbing
    chain over (state, incoming direction) pairs.  Raises if some reachable
    part of the chain can never absorb (a recurrent class away from both the
    goal and the failure states), or if the two probabilities do not sum to
    1 within 1e-10.
    """
    _check_pair(nav, plan)
    _check_start(nav, start)
    if start in nav.goal_states:
        return 1.0, 0.0
    if plan.field[start] <= 0.0:
        return 0.0, 1.0
    mv_cols, uc_cols = _mv_columns(nav), _uc_columns(nav)
    n_dirs = _NO_DIR + 1

    def ext(q: int, d: int) -> int:
        return q * n_dirs + d

    def dir_after(q: int, dst: int, d: int) -> int:
        dr = float(nav.positions[dst][0] - nav.positions[q][0])
        dc = float(nav.positions[dst][1] - nav.positions[q][1])
        if np.isnan(dr) or np.isnan(dc) or (dr == 0.0 and dc == 0.0):
            return d
        return _DIR_INDEX.get((dr, dc), d)

    start_ext = ext(start, _NO_DIR)
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    b_goal: dict[int, float] = {}
    b_obs: dict[int, float] = {}
    seen: set[int] = set()
    frontier = deque([start_ext])
    seen.add(start_ext)
    while frontier:
        s = frontier.popleft()
        q, d = divmod(s, n_dirs)
        if policy is not None:
            if q not in policy:
                raise PfsaError(f"policy has no move for feasible state {q}")
            target = policy[q]
        else:
            inc = None if d == _NO_DIR else _DIR_VECTORS[d]
            target = select_move(plan, nav, q, inc, beta)
        for dst, p, _ in _step_candidates(nav, q, target, mv_cols, uc_cols):
            if dst in nav.goal_states:
                b_goal[s] = b_goal.get(s, 0.0) + p
            elif plan.field[dst] <= 0.0:
                b_obs[s] = b_obs.get(s, 0.0) + p
            else:
                t = ext(dst, dir_after(q, dst, d))
                rows.append(s)
                cols.append(t)
                vals.append(p)
                if t not in seen:
                    seen.add(t)
                    frontier.append(t)
    # every reachable transient state must be able to absorb eventually
    reverse: dict[int, list[int]] = {}
    for s, t in zip(rows, cols):
        reverse.setdefault(t, []).append(s)
    can_absorb = set(b_goal) | set(b_obs)
    frontier = deque(can_absorb)
    while frontier:
        t = frontier.popleft()
        for s in reverse.get(t, ()):
            if s not in can_absorb:
                can_absorb.add(s)
                frontier.append(s)
    stuck = seen - can_absorb
    if stuck:
        q, d = divmod(next(iter(stuck)), n_dirs)
        raise PfsaError(
            f"execution chain has a reachable recurrent class (e.g. state {q}) "
            "that can never absorb at the goal or at a failure state"
        )
    index = {s: i for i, s in enumerate(sorted(seen))}
    m = len(index)
    t_mat = sp.csr_matrix(
        (vals, ([index[s] for s in rows], [index[t] for t in cols])), shape=(m, m)
    )
    rhs = np.zeros((m, 2))
    for s, p in b_goal.items():
        rhs[index[s], 0] = p
    for s, p in b_obs.items():
        rhs[index[s], 1] = p
    sol = spla.spsolve(sp.identity(m, format="csr") - t_mat, rhs)
    sol = np.atleast_2d(sol)
    if sol.shape != (m, 2):
        sol = sol.reshape(m, 2)
    p_goal = float(sol[index[start_ext], 0])
    p_obstacle = float(sol[index[start_ext], 1])
    if abs(p_goal + p_obstacle - 1.0) > _SUM_TOL:
        raise PfsaError(
            f"absorption probabilities sum to {p_goal + p_obstacle!r}, not 1; "
            "the chain violates the two-outcome premise"
        )
    return p_goal, p_obstacle
