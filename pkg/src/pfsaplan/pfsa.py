"""Probabilistic finite state automata and their renormalized language measure.

A PFSA here is a finite set of states with a deterministic (partial)
transition function ``delta`` and a per-state probability distribution over
the event alphabet.  Each state carries a scalar weight ``chi`` encoding how
desirable it is to end up there (positive for goals, negative for states that
must be avoided).  The *renormalized measure* of a state scores the whole
family of event strings that can be generated from it: every string is
weighted by its generation probability, discounted per step by a termination
probability ``theta``, and valued by the weight of the state it lands on.
Stacked over all states the measure is the solution of a linear system

    [I - (1 - theta) * P] nu = theta * chi

where ``P`` is the state-to-state transition probability matrix.

The module provides the automaton value type, construction/validation,
single-string measures, measure solving (dense, sparse-direct, or
preconditioned-iterative depending on size), selective disabling of
controllable transitions, and a plain-text serialization format.

Serialization format (one automaton per file)::

    pfsa <n_states> <n_events>
    <src> <event> <dst> <prob> <ctrl|unctrl>    # one line per defined transition
    chi <state> <value>                         # one line per state

Transition lines are sorted by (src, event index); float fields use Python's
shortest round-trip ``repr``.  The event alphabet is reconstructed in order of
first appearance, and an event is marked controllable iff at least one of its
transitions is tagged ``ctrl``; automata whose alphabet cannot be recovered
that way (events with no transitions) are rejected by the writer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Event",
    "Pfsa",
    "PfsaError",
    "MeasureSolveError",
    "UndefinedTransitionError",
    "transition_matrix",
    "renormalized_measure",
    "string_measure",
    "apply_disabling",
    "serialize_pfsa",
    "parse_pfsa",
]

ROW_SUM_TOL = 1e-12
"""Row sums of the event probability matrix must be 1 within this."""

RESIDUAL_TOL = 1e-10
"""Measure solves must satisfy ||A nu - theta chi||_inf <= RESIDUAL_TOL * ||chi||_inf."""

CHI_MAX_DEFAULT = 1e6
"""Default upper bound accepted for positive chi entries."""

DENSE_SOLVE_MAX = 256
"""Largest state count solved with a dense factorization."""

DIRECT_SOLVE_MAX = 5000
"""Largest state count solved with a sparse-direct factorization."""


class PfsaError(ValueError):
    """Invalid automaton, argument, or serialized text."""


class MeasureSolveError(PfsaError):
    """Measure linear system could not be solved to tolerance."""


class UndefinedTransitionError(PfsaError):
    """A word walked off the defined part of the transition function."""

    def __init__(self, message: str, position: int, state: int, event: str):
        super().__init__(message)
        self.position = position
        self.state = state
        self.event = event


@dataclass(frozen=True)
class Event:
    """An alphabet symbol: a name plus whether supervisors may disable it."""

    name: str
    controllable: bool


@dataclass(frozen=True, eq=False)
class Pfsa:
    """Immutable PFSA value.

    Attributes:
        events: the alphabet, in index order.
        delta: (n, l) int array; ``delta[q, e]`` is the successor state or -1.
        probs: (n, l) float array; generation probability of event ``e`` at
            ``q``.  Zero exactly where ``delta`` is -1; rows sum to 1.
        chi: (n,) float array of state weights in [-1, chi_max].
        controllable: (n, l) bool mask of transitions a supervisor may
            disable.  True requires ``delta`` defined and the event marked
            controllable.
    """

    events: tuple[Event, ...]
    delta: np.ndarray
    probs: np.ndarray
    chi: np.ndarray
    controllable: np.ndarray

    def __post_init__(self) -> None:
        events = tuple(self.events)
        delta = np.ascontiguousarray(np.asarray(self.delta, dtype=np.int32))
        probs = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        chi = np.ascontiguousarray(np.asarray(self.chi, dtype=np.float64))
        ctrl = np.ascontiguousarray(np.asarray(self.controllable, dtype=bool))
        for name, arr in (("delta", delta), ("probs", probs), ("controllable", ctrl)):
            if arr.ndim != 2:
                raise PfsaError(f"{name} must be 2-D, got shape {arr.shape}")
        n, l = delta.shape
        if probs.shape != (n, l) or ctrl.shape != (n, l):
            raise PfsaError("delta, probs and controllable shapes disagree")
        if chi.shape != (n,):
            raise PfsaError(f"chi must have shape ({n},), got {chi.shape}")
        if len(events) != l:
            raise PfsaError(f"{len(events)} events for {l} alphabet columns")
        if len({e.name for e in events}) != l:
            raise PfsaError("event names must be unique")
        for arr in (delta, probs, chi, ctrl):
            arr.setflags(write=False)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "controllable", ctrl)
        self._validate()

    def _validate(self, chi_max: float = CHI_MAX_DEFAULT) -> None:
        n, _ = self.delta.shape
        defined = self.delta >= 0
        if np.any(self.delta[defined] >= n):
            raise PfsaError("delta targets out of range")
        # probability support must match the defined part of delta exactly
        if np.any(self.probs[~defined] != 0.0):
            raise PfsaError("nonzero probability on an undefined transition")
        if np.any(self.probs[defined] <= 0.0):
            raise PfsaError("defined transitions need strictly positive probability")
        row_sums = self.probs.sum(axis=1)
        bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
        if np.any(bad):
            i = int(np.argmax(np.abs(row_sums - 1.0)))
            raise PfsaError(f"row {i} sums to {row_sums[i]!r}, not 1")
        if np.any(self.chi < -1.0 - 1e-15) or np.any(self.chi > chi_max):
            raise PfsaError(f"chi entries must lie in [-1, {chi_max}]")
        if np.any(self.controllable & ~defined):
            raise PfsaError("controllable mask set on an undefined transition")
        event_ctrl = np.array([e.controllable for e in self.events], dtype=bool)
        if np.any(self.controllable & ~event_ctrl[np.newaxis, :]):
            raise PfsaError("controllable mask set on an uncontrollable event")

    @property
    def n_states(self) -> int:
        return self.delta.shape[0]

    @property
    def n_events(self) -> int:
        return self.delta.shape[1]

    def event_index(self, name: str) -> int:
        for i, e in enumerate(self.events):
            if e.name == name:
                return i
        raise PfsaError(f"unknown event {name!r}")

    def controllable_pairs(self) -> list[tuple[int, int]]:
        """All (state, event index) pairs a supervisor may disable."""
        qs, es = np.nonzero(self.controllable)
        return list(zip(qs.tolist(), es.tolist()))

    def replace(self, **kwargs) -> "Pfsa":
        """Copy with selected fields replaced (arrays are copied)."""
        fields = {
            "events": self.events,
            "delta": self.delta.copy(),
            "probs": self.probs.copy(),
            "chi": self.chi.copy(),
            "controllable": self.controllable.copy(),
        }
        fields.update(kwargs)
        return Pfsa(**fields)

    def equivalent(self, other: "Pfsa", tol: float = 0.0) -> bool:
        """Structural equality: same alphabet, delta, probs, chi and mask.

        ``tol`` loosens only the float comparisons (probs, chi) to an
        absolute elementwise tolerance; the structure must match exactly.
        """
        if not (
            self.events == other.events
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.controllable, other.controllable)
        ):
            return False
        if tol == 0.0:
            return bool(
                np.array_equal(self.probs, other.probs)
                and np.array_equal(self.chi, other.chi)
            )
        return bool(
            np.max(np.abs(self.probs - other.probs)) <= tol
            and np.max(np.abs(self.chi - other.chi)) <= tol
        )


def build_pfsa(
    events: Sequence[Event | tuple[str, bool]],
    n_states: int,
    transitions: Iterable[tuple[int, str, int, float]],
    chi: Sequence[float],
    controllable_pairs: Iterable[tuple[int, str]] | None = None,
) -> Pfsa:
    """Assemble a :class:`Pfsa` from sparse transition descriptions.

    ``transitions`` yields (src, event name, dst, prob).  When
    ``controllable_pairs`` is None, every transition on a controllable event
    is eligible for disabling; otherwise only the named (state, event) pairs.
    """
    evs = tuple(e if isinstance(e, Event) else Event(*e) for e in events)
    index = {e.name: i for i, e in enumerate(evs)}
    l = len(evs)
    delta = np.full((n_states, l), -1, dtype=np.int32)
    probs = np.zeros((n_states, l), dtype=np.float64)
    for src, name, dst, p in transitions:
        e = index[name]
        if delta[src, e] != -1:
            raise PfsaError(f"duplicate transition for state {src}, event {name!r}")
        delta[src, e] = dst
        probs[src, e] = p
    if controllable_pairs is None:
        ctrl_events = np.array([e.controllable for e in evs], dtype=bool)
        mask = (delta >= 0) & ctrl_events[np.newaxis, :]
    else:
        mask = np.zeros((n_states, l), dtype=bool)
        for q, name in controllable_pairs:
            mask[q, index[name]] = True
    return Pfsa(evs, delta, probs, np.asarray(chi, dtype=np.float64), mask)


def transition_matrix(pfsa: Pfsa) -> sp.csr_matrix:
    """State-to-state probability matrix; parallel event edges are summed."""
    qs, es = np.nonzero(pfsa.delta >= 0)
    data = pfsa.probs[qs, es]
    cols = pfsa.delta[qs, es]
    n = pfsa.n_states
    m = sp.csr_matrix((data, (qs, cols)), shape=(n, n))
    m.sum_duplicates()
    return m


def _as_csr(pi: sp.spmatrix | np.ndarray) -> sp.csr_matrix:
    if sp.issparse(pi):
        return pi.tocsr()
    return sp.csr_matrix(np.asarray(pi, dtype=np.float64))


def validate_row_stochastic(pi: sp.spmatrix | np.ndarray, tol: float = 1e-9) -> sp.csr_matrix:
    m = _as_csr(pi)
    if m.shape[0] != m.shape[1]:
        raise PfsaError(f"transition matrix must be square, got {m.shape}")
    if m.nnz and m.data.min() < -tol:
        raise PfsaError("transition matrix has negative entries")
    sums = np.asarray(m.sum(axis=1)).ravel()
    if np.any(np.abs(sums - 1.0) > tol):
        i = int(np.argmax(np.abs(sums - 1.0)))
        raise PfsaError(f"transition matrix row {i} sums to {sums[i]!r}")
    return m


def renormalized_measure(
    pi: sp.spmatrix | np.ndarray,
    chi: np.ndarray,
    theta: float,
    *,
    dense_threshold: int = DENSE_SOLVE_MAX,
    direct_threshold: int = DIRECT_SOLVE_MAX,
    residual_tol: float = RESIDUAL_TOL,
) -> np.ndarray:
    """Solve [I - (1-theta) Pi] nu = theta chi and verify the residual.

    Raises:
        PfsaError: theta outside (0, 1) or Pi not row-stochastic.
        MeasureSolveError: solver failure or residual above tolerance.
    """
    if not (0.0 < theta < 1.0):
        raise PfsaError(f"theta must lie strictly inside (0, 1), got {theta!r}")
    m = validate_row_stochastic(pi)
    n = m.shape[0]
    chi = np.asarray(chi, dtype=np.float64)
    if chi.shape != (n,):
        raise PfsaError(f"chi must have shape ({n},), got {chi.shape}")
    chi_scale = float(np.abs(chi).max()) if n else 0.0
    if chi_scale == 0.0:
        return np.zeros(n)
    b = theta * chi
    a = sp.identity(n, format="csr") - (1.0 - theta) * m
    if n <= dense_threshold:
        lu, piv = scipy.linalg.lu_factor(a.toarray())
        nu = _refine_dense(m.toarray(), chi, theta, scipy.linalg.lu_solve((lu, piv), b),
                           lambda r: scipy.linalg.lu_solve((lu, piv), r))
    elif n <= direct_threshold:
        fac = spla.splu(a.tocsc())
        nu = _refine(m, chi, theta, fac.solve(b), fac.solve)
    else:
        nu = _iterative_solve(a, b, residual_tol * chi_scale)
    residual = float(np.abs(a @ nu - b).max())
    if not np.isfinite(residual) or residual > residual_tol * chi_scale:
        raise MeasureSolveError(
            f"measure residual {residual!r} exceeds {residual_tol * chi_scale!r} "
            f"(n={n}, theta={theta!r})"
        )
    # |nu| <= max|chi| holds exactly; numerically the forward error grows
    # with the system's conditioning, which scales like 1/theta.
    slack = max(1e-9, 64.0 * float(np.finfo(np.float64).eps) / theta)
    if np.abs(nu).max() > chi_scale * (1.0 + slack):
        raise MeasureSolveError("solution exceeds the chi bound; system ill-conditioned")
    return nu


_EPS64 = float(np.finfo(np.float64).eps)
_SPLIT = 134217729.0  # 2**27 + 1, Dekker's splitting constant


def _refine(pi, chi: np.ndarray, theta: float, x: np.ndarray, solve) -> np.ndarray:
    # Iterative refinement for the sparse direct tier.  The residual is
    # evaluated in extended precision from the original data as
    # theta*(chi - Pi x) + (Pi x - x); forming I - (1-theta) Pi first would
    # bake an eps-sized rounding into the matrix that the ill-conditioned
    # solve amplifies to eps/theta.
    pi_ext = pi.astype(np.longdouble)
    chi_ext = chi.astype(np.longdouble)
    theta_ext = np.longdouble(theta)
    for _ in range(3):
        x_ext = x.astype(np.longdouble)
        u = pi_ext @ x_ext
        r = np.asarray(theta_ext * (chi_ext - u) + (u - x_ext), dtype=np.float64)
        correction = solve(r)
        # a backward-stable solve always leaves a tiny residual, so
        # convergence is judged by the correction size instead
        if float(np.abs(correction).max()) <= _EPS64 * float(np.abs(x).max()):
            break
        x = x + correction
    return x


def _two_sum(a, b):
    # Knuth's branch-free exact addition: returns (s, e) with s + e == a + b.
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _residual_from_data(
    pi: np.ndarray, chi: np.ndarray, theta: float, x: np.ndarray
) -> np.ndarray:
    """theta*(chi - Pi x) + (Pi x - x) in double-double arithmetic.

    Algebraically equal to theta*chi - [I - (1-theta) Pi] x, but computed
    straight from the stored inputs: Pi entries, chi, and theta are exact
    float64 data, so no rounded matrix formation enters.  Dekker two-products
    and Knuth two-sums keep every term to O(eps64^2), which lets iterative
    refinement reach a forward error near eps64 * ||x|| even when theta is
    tiny and the system's conditioning is 1/theta.
    """
    c = pi * _SPLIT
    pi_hi = c - (c - pi)
    pi_lo = pi - pi_hi
    xr = x[np.newaxis, :]
    c = xr * _SPLIT
    x_hi = c - (c - xr)
    x_lo = xr - x_hi
    p = pi * xr
    err = ((pi_hi * x_hi - p) + pi_hi * x_lo + pi_lo * x_hi) + pi_lo * x_lo
    # u = Pi @ x as a (hi, lo) pair via compensated column accumulation
    u = np.zeros(pi.shape[0])
    u_lo = err.sum(axis=1)
    for j in range(pi.shape[1]):
        u, e = _two_sum(u, p[:, j])
        u_lo = u_lo + e
    # d1 = Pi x - x,  d2 = chi - Pi x, both as (hi, lo) pairs
    d1, e1 = _two_sum(u, -x)
    e1 = e1 + u_lo
    d2, e2 = _two_sum(chi, -u)
    e2 = e2 - u_lo
    # t = theta * d2 with an exact scalar-vector two-product
    c = d2 * _SPLIT
    d2_hi = c - (c - d2)
    d2_lo = d2 - d2_hi
    ct = theta * _SPLIT
    t_hi = ct - (ct - theta)
    t_lo = theta - t_hi
    t = theta * d2
    t_err = ((t_hi * d2_hi - t) + t_hi * d2_lo + t_lo * d2_hi) + t_lo * d2_lo
    t_err = t_err + theta * e2
    r, e = _two_sum(t, d1)
    return r + (e + t_err + e1)


def _refine_dense(
    pi: np.ndarray, chi: np.ndarray, theta: float, x: np.ndarray, solve
) -> np.ndarray:
    # Iterative refinement on the dense tier with a double-double residual
    # taken from the original data; see _residual_from_data.
    for _ in range(4):
        r = _residual_from_data(pi, chi, theta, x)
        correction = solve(r)
        # a backward-stable solve always leaves a tiny residual, so
        # convergence is judged by the correction size instead
        if float(np.abs(correction).max()) <= _EPS64 * float(np.abs(x).max()):
            break
        x = x + correction
    return x


def _iterative_solve(a: sp.csr_matrix, b: np.ndarray, atol: float) -> np.ndarray:
    """ILU-preconditioned LGMRES with a sparse-direct fallback."""
    try:
        ilu = spla.spilu(a.tocsc(), drop_tol=1e-6, fill_factor=20.0)
        prec = spla.LinearOperator(a.shape, matvec=ilu.solve)
        nu, info = spla.lgmres(a, b, M=prec, rtol=0.0, atol=0.1 * atol, maxiter=2000)
        if info == 0:
            return nu
    except RuntimeError:
        pass
    return spla.splu(a.tocsc()).solve(b)


def string_measure(pfsa: Pfsa, state: int, word: Sequence[str], theta: float) -> float:
    """Measure of the single event string ``word`` generated from ``state``.

    Each step contributes a factor (1-theta) * prob; the result is
    theta * (product of step factors) * chi(terminal state).  The empty word
    has measure theta * chi(state).
    """
    if not (0.0 < theta < 1.0):
        raise PfsaError(f"theta must lie strictly inside (0, 1), got {theta!r}")
    if not (0 <= state < pfsa.n_states):
        raise PfsaError(f"state {state} out of range")
    weight = theta
    q = state
    for pos, name in enumerate(word):
        e = pfsa.event_index(name)
        nxt = int(pfsa.delta[q, e])
        if nxt < 0:
            raise UndefinedTransitionError(
                f"word leaves the defined transitions at position {pos} "
                f"(state {q}, event {name!r})",
                position=pos,
                state=q,
                event=name,
            )
        weight *= (1.0 - theta) * float(pfsa.probs[q, e])
        q = nxt
    return weight * float(pfsa.chi[q])


def apply_disabling(pfsa: Pfsa, disabled: Iterable[tuple[int, int]]) -> Pfsa:
    """Redirect each disabled controllable transition to a self-loop.

    Probabilities are untouched, so rows stay stochastic.  ``disabled`` holds
    (state, event index) pairs; each must be in the controllable set.
    Disabling an already-self-looping transition is a no-op, which makes the
    operation idempotent.
    """
    delta = pfsa.delta.copy()
    for q, e in disabled:
        if not (0 <= q < pfsa.n_states and 0 <= e < pfsa.n_events):
            raise PfsaError(f"disable pair ({q}, {e}) out of range")
        if not pfsa.controllable[q, e]:
            raise PfsaError(f"pair ({q}, {e}) is not a controllable transition")
        delta[q, e] = q
    return Pfsa(pfsa.events, delta, pfsa.probs.copy(), pfsa.chi.copy(), pfsa.controllable.copy())


def serialize_pfsa(pfsa: Pfsa) -> str:
    """Render the automaton in the module's plain-text format."""
    used = {int(e) for e in np.unique(np.nonzero(pfsa.delta >= 0)[1])}
    missing = [e.name for i, e in enumerate(pfsa.events) if i not in used]
    if missing:
        raise PfsaError(f"events with no transitions cannot be serialized: {missing}")
    lines = [f"pfsa {pfsa.n_states} {pfsa.n_events}"]
    # Canonical ordering: states ascending, event names ascending within a
    # state, so equivalent automata with permuted alphabets serialize the same.
    name_order = sorted(range(pfsa.n_events), key=lambda e: pfsa.events[e].name)
    for q in range(pfsa.n_states):
        for e in name_order:
            dst = int(pfsa.delta[q, e])
            if dst < 0:
                continue
            tag = "ctrl" if pfsa.controllable[q, e] else "unctrl"
            lines.append(f"{q} {pfsa.events[e].name} {dst} {float(pfsa.probs[q, e])!r} {tag}")
    for q in range(pfsa.n_states):
        lines.append(f"chi {q} {float(pfsa.chi[q])!r}")
    return "\n".join(lines) + "\n"


def parse_pfsa(text: str) -> Pfsa:
    """Parse the plain-text format produced by :func:`serialize_pfsa`."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("pfsa"):
        raise PfsaError("missing 'pfsa <n> <l>' header")
    head = lines[0].split()
    if len(head) != 3:
        raise PfsaError(f"malformed header: {lines[0]!r}")
    try:
        n, l = int(head[1]), int(head[2])
    except ValueError as exc:
        raise PfsaError(f"malformed header: {lines[0]!r}") from exc
    order: dict[str, int] = {}
    controllable_events: set[str] = set()
    transitions: list[tuple[int, str, int, float, bool]] = []
    chi = np.zeros(n, dtype=np.float64)
    chi_seen = np.zeros(n, dtype=bool)
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "chi":
            if len(parts) != 3:
                raise PfsaError(f"malformed chi line: {ln!r}")
            q = int(parts[1])
            if not (0 <= q < n):
                raise PfsaError(f"chi state {q} out of range")
            chi[q] = float(parts[2])
            chi_seen[q] = True
            continue
        if len(parts) != 5 or parts[4] not in ("ctrl", "unctrl"):
            raise PfsaError(f"malformed transition line: {ln!r}")
        src, name, dst, prob = int(parts[0]), parts[1], int(parts[2]), float(parts[3])
        if name not in order:
            order[name] = len(order)
        if parts[4] == "ctrl":
            controllable_events.add(name)
        transitions.append((src, name, dst, prob, parts[4] == "ctrl"))
    if len(order) != l:
        raise PfsaError(f"header names {l} events but {len(order)} appear")
    if not chi_seen.all():
        raise PfsaError("chi line missing for some state")
    events = tuple(Event(name, name in controllable_events) for name in order)
    delta = np.full((n, l), -1, dtype=np.int32)
    probs = np.zeros((n, l), dtype=np.float64)
    mask = np.zeros((n, l), dtype=bool)
    for src, name, dst, prob, ctrl in transitions:
        if not (0 <= src < n and 0 <= dst < n):
            raise PfsaError(f"transition {src}->{dst} out of range")
        e = order[name]
        if delta[src, e] != -1:
            raise PfsaError(f"duplicate transition for state {src}, event {name!r}")
        delta[src, e] = dst
        probs[src, e] = prob
        mask[src, e] = ctrl
    return Pfsa(events, delta, probs, chi, mask)
