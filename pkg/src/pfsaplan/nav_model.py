"""Navigation automata built from occupancy grids and uncertainty models.

A workspace is an occupancy grid of cells; an agent moves between 8-adjacent
cells.  Three automaton variants share one construction recipe:

* ``build_2d``     — one state per cell,
* ``build_heading``— one state per (cell, discrete heading),
* ``build_history``— one state per ordered (previous cell, cell) pair, so
  uncontrollable behaviour may depend on the direction of arrival.

Every variant appends one abstract absorbing deadlock state (``q_minus``):
blocked cells transition to it uncontrollably with probability one, and
moves that would leave the grid target it directly (the implicit ring of
blocked boundary cells is identified with the deadlock state rather than
materialized).  The characteristic vector is -1 at the deadlock state,
``chi_goal`` (> 0) at goal states and 0 elsewhere.

At every unblocked non-goal state the controllable moves share the
probability mass left over by the state's uncontrollable events equally;
each uncontrollable event mirrors a move (same target) and carries the
probability assigned by the :class:`UncertaintyModel`.  Goal states generate
controllable moves only, uniformly.

File formats
    Grid map: ASCII, one row per line, ``#`` blocked / ``.`` free /
    ``G`` goal / ``S`` start, with an optional leading ``<rows> <cols>``
    header line.  Uncertainty: ``uc <direction> <prob>`` lines (one shared
    row) or ``uc_state <state> <direction> <prob>`` lines (per-state rows,
    states indexed row-major).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .pfsa import Pfsa, PfsaError, build_pfsa

__all__ = [
    "COMPASS",
    "GAMMA_FLOOR",
    "GridMap",
    "NavAutomaton",
    "UncertaintyModel",
    "build_2d",
    "build_heading",
    "build_history",
    "gamma_of",
    "merge_history_to_2d",
    "parse_grid",
    "parse_uncertainty",
    "serialize_grid",
    "serialize_uncertainty",
]

COMPASS: tuple[tuple[str, tuple[int, int]], ...] = (
    ("N", (-1, 0)),
    ("NE", (-1, 1)),
    ("E", (0, 1)),
    ("SE", (1, 1)),
    ("S", (1, 0)),
    ("SW", (1, -1)),
    ("W", (0, -1)),
    ("NW", (-1, -1)),
)
"""The 8 move directions, clockwise from north, with (d_row, d_col) offsets."""

_COMPASS_OFFSET = dict(COMPASS)
_TURN_DIRECTIONS = ("turn_left", "turn_right")

GAMMA_FLOOR = 1e-3
"""Per-state uncontrollable mass may not exceed 1 - GAMMA_FLOOR."""


@dataclass(frozen=True)
class GridMap:
    """Occupancy grid with one goal cell and an optional start cell."""

    rows: int
    cols: int
    blocked: frozenset[tuple[int, int]]
    goal: tuple[int, int]
    start: tuple[int, int] | None = None
    goal_heading: int | None = None

    def __post_init__(self) -> None:
        if self.rows <= 0 or self.cols <= 0:
            raise PfsaError(f"grid must be non-empty, got {self.rows}x{self.cols}")
        cells = list(self.blocked) + [self.goal] + ([self.start] if self.start else [])
        for r, c in cells:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise PfsaError(f"cell ({r}, {c}) outside {self.rows}x{self.cols} grid")
        if self.goal in self.blocked:
            raise PfsaError(f"goal cell {self.goal} is blocked")
        if self.start is not None and self.start in self.blocked:
            raise PfsaError(f"start cell {self.start} is blocked")
        object.__setattr__(self, "blocked", frozenset(self.blocked))

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_index(self, row: int, col: int) -> int:
        """Row-major cell numbering from the top-left corner."""
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise PfsaError(f"cell ({row}, {col}) outside {self.rows}x{self.cols} grid")
        return row * self.cols + col

    def is_blocked(self, row: int, col: int) -> bool:
        return (row, col) in self.blocked

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols


def parse_grid(text: str) -> GridMap:
    """Parse the ASCII map format (see the module docstring)."""
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise PfsaError("empty grid map")
    header: tuple[int, int] | None = None
    first = lines[0].split()
    if len(first) == 2 and all(tok.isdigit() for tok in first):
        header = (int(first[0]), int(first[1]))
        lines = lines[1:]
        if not lines:
            raise PfsaError("grid header present but no rows follow")
    rows = len(lines)
    cols = len(lines[0])
    if header is not None and (rows, cols) != header:
        raise PfsaError(f"grid header says {header}, body is {rows}x{cols}")
    blocked: set[tuple[int, int]] = set()
    goal: tuple[int, int] | None = None
    start: tuple[int, int] | None = None
    for r, ln in enumerate(lines):
        if len(ln) != cols:
            raise PfsaError(f"grid row {r} has {len(ln)} columns, expected {cols}")
        for c, ch in enumerate(ln):
            if ch == "#":
                blocked.add((r, c))
            elif ch == "G":
                if goal is not None:
                    raise PfsaError("grid has more than one goal cell")
                goal = (r, c)
            elif ch == "S":
                if start is not None:
                    raise PfsaError("grid has more than one start cell")
                start = (r, c)
            elif ch != ".":
                raise PfsaError(f"unknown map character {ch!r} at row {r}, col {c}")
    if goal is None:
        raise PfsaError("grid has no goal cell")
    return GridMap(rows=rows, cols=cols, blocked=frozenset(blocked), goal=goal, start=start)


def serialize_grid(grid: GridMap) -> str:
    """Render a GridMap back to the ASCII map format (with header)."""
    out = [f"{grid.rows} {grid.cols}"]
    for r in range(grid.rows):
        row = []
        for c in range(grid.cols):
            if (r, c) == grid.goal:
                row.append("G")
            elif grid.start is not None and (r, c) == grid.start:
                row.append("S")
            elif (r, c) in grid.blocked:
                row.append("#")
            else:
                row.append(".")
        out.append("".join(row))
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class UncertaintyModel:
    """Per-state uncontrollable event probabilities.

    ``averaged`` mode shares one probability row across all states;
    ``per_state`` mode maps row-major state indices to rows; ``none``
    disables uncertainty entirely.  Row keys are direction tokens: the 8
    compass names, plus ``turn_left``/``turn_right`` for heading models.
    """

    mode: str
    averaged: Mapping[str, float] | None = None
    per_state: Mapping[int, Mapping[str, float]] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("none", "averaged", "per_state"):
            raise PfsaError(f"unknown uncertainty mode {self.mode!r}")
        if self.mode == "averaged":
            if self.averaged is None:
                raise PfsaError("averaged mode requires a probability row")
            _validate_uc_row(self.averaged, "averaged row")
        elif self.mode == "per_state":
            if self.per_state is None:
                raise PfsaError("per_state mode requires per-state rows")
            for state, row in self.per_state.items():
                _validate_uc_row(row, f"state {state}")

    @staticmethod
    def none() -> "UncertaintyModel":
        return UncertaintyModel(mode="none")

    @staticmethod
    def uniform(gamma: float) -> "UncertaintyModel":
        """Spread mass 1 - gamma equally over the 8 compass twins."""
        if not (0.0 < gamma <= 1.0):
            raise PfsaError(f"gamma must lie in (0, 1], got {gamma!r}")
        if gamma == 1.0:
            return UncertaintyModel.none()
        share = (1.0 - gamma) / 8.0
        return UncertaintyModel(mode="averaged", averaged={d: share for d, _ in COMPASS})

    def row_for(self, state: int) -> Mapping[str, float]:
        if self.mode == "averaged":
            return self.averaged  # type: ignore[return-value]
        if self.mode == "per_state":
            return self.per_state.get(state, {})  # type: ignore[union-attr]
        return {}


def _validate_uc_row(row: Mapping[str, float], label: str) -> None:
    valid = {name for name, _ in COMPASS} | set(_TURN_DIRECTIONS)
    total = 0.0
    for direction, p in row.items():
        if direction not in valid:
            raise PfsaError(f"unknown uncontrollable direction {direction!r} ({label})")
        if p < 0.0:
            raise PfsaError(f"negative probability {p!r} for {direction} ({label})")
        total += p
    if total > 1.0 - GAMMA_FLOOR:
        raise PfsaError(
            f"uncontrollable mass {total!r} at {label} exceeds {1.0 - GAMMA_FLOOR} "
            f"(gamma floor {GAMMA_FLOOR})"
        )


def parse_uncertainty(text: str) -> UncertaintyModel:
    """Parse `uc <dir> <p>` / `uc_state <state> <dir> <p>` lines."""
    averaged: dict[str, float] = {}
    per_state: dict[int, dict[str, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        ln = raw.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        try:
            if parts[0] == "uc" and len(parts) == 3:
                averaged[parts[1]] = averaged.get(parts[1], 0.0) + float(parts[2])
            elif parts[0] == "uc_state" and len(parts) == 4:
                row = per_state.setdefault(int(parts[1]), {})
                row[parts[2]] = row.get(parts[2], 0.0) + float(parts[3])
            else:
                raise ValueError("bad shape")
        except ValueError as exc:
            raise PfsaError(f"malformed uncertainty line {lineno}: {raw!r}") from exc
    if averaged and per_state:
        raise PfsaError("uncertainty file mixes 'uc' and 'uc_state' lines")
    if per_state:
        return UncertaintyModel(mode="per_state", per_state=per_state)
    if averaged:
        return UncertaintyModel(mode="averaged", averaged=averaged)
    return UncertaintyModel.none()


def serialize_uncertainty(unc: UncertaintyModel) -> str:
    if unc.mode == "none":
        return ""
    lines: list[str] = []
    if unc.mode == "averaged":
        for d in sorted(unc.averaged):  # type: ignore[arg-type]
            lines.append(f"uc {d} {float(unc.averaged[d])!r}")
    else:
        for state in sorted(unc.per_state):  # type: ignore[union-attr]
            row = unc.per_state[state]  # type: ignore[index]
            for d in sorted(row):
                lines.append(f"uc_state {state} {d} {float(row[d])!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class NavAutomaton:
    """A navigation plant: the automaton plus its geometric bookkeeping.

    ``xi`` maps each state to its footprint -- ``(row, col)``,
    ``(row, col, heading)`` or ``(prev_cell, cell)`` -- with ``None`` for the
    abstract deadlock state.  ``positions`` holds the planar center of each
    footprint (the deadlock state gets NaNs) for gradient geometry.
    """

    pfsa: Pfsa
    grid: GridMap
    model_kind: str
    xi: tuple
    goal_states: frozenset[int]
    obstacle_states: frozenset[int]
    deadlock_state: int
    positions: np.ndarray
    state_index: Mapping[object, int] = field(repr=False, default_factory=dict)

    @property
    def n_states(self) -> int:
        return self.pfsa.n_states

    def state_of(self, footprint: object) -> int:
        try:
            return self.state_index[footprint]
        except KeyError:
            raise PfsaError(f"no state with footprint {footprint!r}") from None

    def cell_of(self, state: int) -> tuple[int, int]:
        """The cell a state occupies (the current cell for pair states)."""
        fp = self.xi[state]
        if fp is None:
            raise PfsaError("the deadlock state has no cell")
        if self.model_kind == "history":
            return fp[1]
        return (fp[0], fp[1])

    def full_neighborhood(self, state: int) -> list[int]:
        """States an amortized deviation from ``state`` may land on.

        These are every state whose footprint lies in the 3x3 cell block
        around the state's own cell (the cell itself included): the 2d model
        yields up to 9 states, the heading model up to 9 x headings (216 for
        24 headings at an interior cell), the history model the pairs whose
        previous cell is this state's cell.
        """
        cell = self.cell_of(state)
        block = [cell] + [
            (cell[0] + dr, cell[1] + dc)
            for _, (dr, dc) in COMPASS
            if self.grid.in_bounds(cell[0] + dr, cell[1] + dc)
        ]
        out: list[int] = []
        if self.model_kind == "2d":
            out = [self.state_index[c] for c in block]
        elif self.model_kind == "heading":
            headings = (self.n_states - 1) // self.grid.n_cells
            out = [self.state_index[(r, c, h)] for (r, c) in block for h in range(headings)]
        else:
            out = [
                self.state_index[(cell, c)]
                for c in block
                if (cell, c) in self.state_index
            ]
        return sorted(out)

    def with_chi(self, chi: np.ndarray) -> "NavAutomaton":
        return NavAutomaton(
            pfsa=self.pfsa.replace(chi=chi),
            grid=self.grid,
            model_kind=self.model_kind,
            xi=self.xi,
            goal_states=self.goal_states,
            obstacle_states=self.obstacle_states,
            deadlock_state=self.deadlock_state,
            positions=self.positions,
            state_index=self.state_index,
        )


def _finish(transitions, events_used, n_states, chi, grid, kind, xi, goals, obstacles,
            q_minus, positions, index) -> NavAutomaton:
    """Assemble the Pfsa from accumulated transitions; shared by all builders."""
    events = [(f"mv_{name}", True) for name in events_used["mv"]]
    events += [(f"uc_{name}", False) for name in events_used["uc"]]
    events.append(("u", False))
    pfsa = build_pfsa(events, n_states, transitions, chi)
    return NavAutomaton(
        pfsa=pfsa,
        grid=grid,
        model_kind=kind,
        xi=tuple(xi),
        goal_states=frozenset(goals),
        obstacle_states=frozenset(obstacles),
        deadlock_state=q_minus,
        positions=positions,
        state_index=index,
    )


def build_2d(grid: GridMap, unc: UncertaintyModel, chi_goal: float = 1.0) -> NavAutomaton:
    """One state per cell plus the deadlock state.

    Blocked cells get the single uncontrollable event ``u`` into the deadlock
    state; unblocked non-goal cells get 8 controllable moves sharing
    ``(1 - total uncontrollable mass) / 8`` plus one uncontrollable twin per
    direction with positive probability; the goal generates the 8 moves
    uniformly with no uncontrollable events.
    """
    if chi_goal <= 0.0:
        raise PfsaError(f"chi_goal must be positive, got {chi_goal!r}")
    n_cells = grid.n_cells
    q_minus = n_cells
    n = n_cells + 1

    def target(r: int, c: int, dr: int, dc: int) -> int:
        rr, cc = r + dr, c + dc
        return grid.cell_index(rr, cc) if grid.in_bounds(rr, cc) else q_minus

    transitions: list[tuple[int, str, int, float]] = []
    uc_used: list[str] = []
    goal_idx = grid.cell_index(*grid.goal)
    for r in range(grid.rows):
        for c in range(grid.cols):
            i = grid.cell_index(r, c)
            if grid.is_blocked(r, c):
                transitions.append((i, "u", q_minus, 1.0))
                continue
            if i == goal_idx:
                for name, (dr, dc) in COMPASS:
                    transitions.append((i, f"mv_{name}", target(r, c, dr, dc), 1.0 / 8.0))
                continue
            row = unc.row_for(i)
            total_uc = sum(row.get(name, 0.0) for name, _ in COMPASS)
            share = (1.0 - total_uc) / 8.0
            for name, (dr, dc) in COMPASS:
                dst = target(r, c, dr, dc)
                transitions.append((i, f"mv_{name}", dst, share))
                p = row.get(name, 0.0)
                if p > 0.0:
                    transitions.append((i, f"uc_{name}", dst, p))
                    if name not in uc_used:
                        uc_used.append(name)
    transitions.append((q_minus, "u", q_minus, 1.0))

    chi = np.zeros(n)
    chi[goal_idx] = chi_goal
    chi[q_minus] = -1.0
    xi = [(r, c) for r in range(grid.rows) for c in range(grid.cols)] + [None]
    positions = np.full((n, 2), np.nan)
    positions[:n_cells] = [(r, c) for r in range(grid.rows) for c in range(grid.cols)]
    obstacles = {grid.cell_index(r, c) for r, c in grid.blocked} | {q_minus}
    index = {fp: i for i, fp in enumerate(xi) if fp is not None}
    uc_order = [name for name, _ in COMPASS if name in uc_used]
    return _finish(
        transitions, {"mv": [name for name, _ in COMPASS], "uc": uc_order}, n, chi,
        grid, "2d", xi, {goal_idx}, obstacles, q_minus, positions, index,
    )


def build_heading(
    grid: GridMap,
    unc: UncertaintyModel,
    headings: int = 24,
    max_turn_deg: int = 45,
    chi_goal: float = 1.0,
) -> NavAutomaton:
    """One state per (cell, heading) plus the deadlock state.

    A controllable move turns by any multiple of the heading step within
    ``±max_turn_deg`` and advances one cell in the compass direction nearest
    the new heading (heading 0 = north, increasing clockwise).  Move events
    are named ``mv_t{k:+d}`` by their signed step count k.  Uncontrollable
    twins shift one cell with heading unchanged (compass tokens) or turn in
    place by one step (``turn_left`` / ``turn_right``).
    """
    if chi_goal <= 0.0:
        raise PfsaError(f"chi_goal must be positive, got {chi_goal!r}")
    if headings <= 0 or 360 % headings != 0:
        raise PfsaError(f"heading count must divide 360, got {headings}")
    step_deg = 360 // headings
    if max_turn_deg % step_deg != 0:
        raise PfsaError(
            f"max turn {max_turn_deg} must be a multiple of the heading step {step_deg}"
        )
    if grid.goal_heading is not None and not (0 <= grid.goal_heading < headings):
        raise PfsaError(f"goal heading {grid.goal_heading} out of range")
    k_max = max_turn_deg // step_deg
    turn_steps = list(range(-k_max, k_max + 1))
    n_cells = grid.n_cells
    q_minus = n_cells * headings
    n = q_minus + 1

    def state(r: int, c: int, h: int) -> int:
        return (r * grid.cols + c) * headings + h

    def nearest_compass(h: int) -> tuple[int, int]:
        angle = h * step_deg
        k = int(round(angle / 45.0)) % 8
        return COMPASS[k][1]

    def cell_target(r: int, c: int, dr: int, dc: int, h: int) -> int:
        rr, cc = r + dr, c + dc
        return state(rr, cc, h) if grid.in_bounds(rr, cc) else q_minus

    goal_cell = grid.goal
    goals = set()
    transitions: list[tuple[int, str, int, float]] = []
    uc_used: list[str] = []
    mv_names = [f"t{k:+d}" for k in turn_steps]
    for r in range(grid.rows):
        for c in range(grid.cols):
            blocked = grid.is_blocked(r, c)
            is_goal_cell = (r, c) == goal_cell
            for h in range(headings):
                i = state(r, c, h)
                if blocked:
                    transitions.append((i, "u", q_minus, 1.0))
                    continue
                if is_goal_cell and (grid.goal_heading is None or h == grid.goal_heading):
                    goals.add(i)
                    for k in turn_steps:
                        h2 = (h + k) % headings
                        dr, dc = nearest_compass(h2)
                        dst = cell_target(r, c, dr, dc, h2)
                        transitions.append((i, f"mv_t{k:+d}", dst, 1.0 / len(turn_steps)))
                    continue
                row = unc.row_for(i)
                total_uc = sum(
                    row.get(name, 0.0) for name in list(_COMPASS_OFFSET) + list(_TURN_DIRECTIONS)
                )
                share = (1.0 - total_uc) / len(turn_steps)
                for k in turn_steps:
                    h2 = (h + k) % headings
                    dr, dc = nearest_compass(h2)
                    dst = cell_target(r, c, dr, dc, h2)
                    transitions.append((i, f"mv_t{k:+d}", dst, share))
                for name, (dr, dc) in COMPASS:
                    p = row.get(name, 0.0)
                    if p > 0.0:
                        dst = cell_target(r, c, dr, dc, h)
                        transitions.append((i, f"uc_{name}", dst, p))
                        if name not in uc_used:
                            uc_used.append(name)
                for name, dh in (("turn_left", -1), ("turn_right", 1)):
                    p = row.get(name, 0.0)
                    if p > 0.0:
                        transitions.append((i, f"uc_{name}", state(r, c, (h + dh) % headings), p))
                        if name not in uc_used:
                            uc_used.append(name)
    transitions.append((q_minus, "u", q_minus, 1.0))

    chi = np.zeros(n)
    chi[sorted(goals)] = chi_goal
    chi[q_minus] = -1.0
    xi: list = [
        (r, c, h)
        for r in range(grid.rows)
        for c in range(grid.cols)
        for h in range(headings)
    ] + [None]
    positions = np.full((n, 2), np.nan)
    positions[:q_minus] = [(fp[0], fp[1]) for fp in xi[:-1]]
    obstacles = {
        state(r, c, h) for (r, c) in grid.blocked for h in range(headings)
    } | {q_minus}
    index = {fp: i for i, fp in enumerate(xi) if fp is not None}
    uc_order = [
        name for name in list(_COMPASS_OFFSET) + list(_TURN_DIRECTIONS) if name in uc_used
    ]
    return _finish(
        transitions, {"mv": mv_names, "uc": uc_order}, n, chi,
        grid, "heading", xi, goals, obstacles, q_minus, positions, index,
    )


def _incoming_direction(prev: tuple[int, int], cur: tuple[int, int]) -> str:
    if prev == cur:
        return "rest"
    d = (cur[0] - prev[0], cur[1] - prev[1])
    for name, off in COMPASS:
        if off == d:
            return name
    raise PfsaError(f"cells {prev} and {cur} are not adjacent")


def build_history(
    grid: GridMap,
    contour_table: Mapping[str, Mapping[str, float]],
    chi_goal: float = 1.0,
) -> NavAutomaton:
    """One state per ordered (previous cell, cell) adjacency pair.

    ``contour_table`` maps each incoming direction (8 compass tokens plus
    ``"rest"`` for the no-motion pair) to that direction's uncontrollable
    probability row, so deviation contours may differ with the direction of
    arrival.  Merging the pair states over their previous cell with
    probability averaging reproduces :func:`build_2d`
    (see :func:`merge_history_to_2d`).
    """
    if chi_goal <= 0.0:
        raise PfsaError(f"chi_goal must be positive, got {chi_goal!r}")
    required = {name for name, _ in COMPASS} | {"rest"}
    missing = required - set(contour_table)
    if missing:
        raise PfsaError(f"contour table misses incoming directions {sorted(missing)}")
    for key, row in contour_table.items():
        _validate_uc_row(row, f"incoming {key}")

    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            cur = (r, c)
            pairs.append((cur, cur))  # the "rest" pair: no motion history
            for _, (dr, dc) in COMPASS:
                pr, pc = r - dr, c - dc
                if grid.in_bounds(pr, pc):
                    pairs.append(((pr, pc), cur))
    index = {pair: i for i, pair in enumerate(pairs)}
    q_minus = len(pairs)
    n = q_minus + 1

    transitions: list[tuple[int, str, int, float]] = []
    uc_used: list[str] = []
    goals = set()
    obstacles = {q_minus}
    goal_cell = grid.goal
    for pair, i in index.items():
        prev, cur = pair
        r, c = cur
        if grid.is_blocked(r, c):
            transitions.append((i, "u", q_minus, 1.0))
            obstacles.add(i)
            continue

        def target(dr: int, dc: int) -> int:
            rr, cc = r + dr, c + dc
            return index[(cur, (rr, cc))] if grid.in_bounds(rr, cc) else q_minus

        if cur == goal_cell:
            goals.add(i)
            for name, (dr, dc) in COMPASS:
                transitions.append((i, f"mv_{name}", target(dr, dc), 1.0 / 8.0))
            continue
        row = contour_table[_incoming_direction(prev, cur)]
        total_uc = sum(row.get(name, 0.0) for name, _ in COMPASS)
        share = (1.0 - total_uc) / 8.0
        for name, (dr, dc) in COMPASS:
            dst = target(dr, dc)
            transitions.append((i, f"mv_{name}", dst, share))
            p = row.get(name, 0.0)
            if p > 0.0:
                transitions.append((i, f"uc_{name}", dst, p))
                if name not in uc_used:
                    uc_used.append(name)
    transitions.append((q_minus, "u", q_minus, 1.0))

    chi = np.zeros(n)
    chi[sorted(goals)] = chi_goal
    chi[q_minus] = -1.0
    xi: list = list(pairs) + [None]
    positions = np.full((n, 2), np.nan)
    positions[:q_minus] = [pair[1] for pair in pairs]
    uc_order = [name for name, _ in COMPASS if name in uc_used]
    return _finish(
        transitions, {"mv": [name for name, _ in COMPASS], "uc": uc_order}, n, chi,
        grid, "history", xi, goals, obstacles, q_minus, positions, index,
    )


def merge_history_to_2d(nav: NavAutomaton) -> NavAutomaton:
    """Merge a history automaton's pair states over their previous cell.

    Every pair state of a cell has the same move targets up to the merge, so
    the merged transition probabilities are the plain averages over the
    cell's pair states; identical rows are passed through exactly.  The
    result is a 2d-model automaton comparable with :func:`build_2d` output.
    """
    if nav.model_kind != "history":
        raise PfsaError(f"expected a history automaton, got {nav.model_kind!r}")
    grid = nav.grid
    by_cell: dict[tuple[int, int], list[int]] = {}
    for i, fp in enumerate(nav.xi[:-1]):
        by_cell.setdefault(fp[1], []).append(i)
    per_state: dict[int, dict[str, float]] = {}
    for r in range(grid.rows):
        for c in range(grid.cols):
            if grid.is_blocked(r, c) or (r, c) == grid.goal:
                continue
            members = by_cell[(r, c)]
            row: dict[str, float] = {}
            for e, ev in enumerate(nav.pfsa.events):
                if not ev.name.startswith("uc_"):
                    continue
                vals = [
                    float(nav.pfsa.probs[i, e]) if nav.pfsa.delta[i, e] >= 0 else 0.0
                    for i in members
                ]
                if all(v == vals[0] for v in vals):
                    p = vals[0]
                else:
                    p = float(np.mean(vals))
                if p > 0.0:
                    row[ev.name[3:]] = p
            if row:
                per_state[grid.cell_index(r, c)] = row
    if per_state:
        unc = UncertaintyModel(mode="per_state", per_state=per_state)
    else:
        unc = UncertaintyModel.none()
    goal_chi = float(nav.pfsa.chi[next(iter(nav.goal_states))])
    return build_2d(grid, unc, chi_goal=goal_chi)


def gamma_of(nav: NavAutomaton) -> float:
    """1 minus the worst state's total uncontrollable-twin probability.

    The deadlock event ``u`` models collision absorption, not dynamic
    deviation, and is excluded; with no uncontrollable twins the value is 1.
    """
    uc_cols = [
        e for e, ev in enumerate(nav.pfsa.events) if ev.name.startswith("uc_")
    ]
    if not uc_cols:
        return 1.0
    probs = nav.pfsa.probs[:, uc_cols]
    defined = nav.pfsa.delta[:, uc_cols] >= 0
    sums = np.where(defined, probs, 0.0).sum(axis=1)
    return float(1.0 - sums.max())
