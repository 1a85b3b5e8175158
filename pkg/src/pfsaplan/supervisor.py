"""Optimal supervision of a PFSA by selective disabling of transitions.

A supervisor picks a subset of the controllable transitions and disables
them; a disabled transition becomes a self-loop with unchanged probability.
The optimal supervisor maximizes the renormalized measure of every state
simultaneously.  It is computed by a fixed-point iteration: evaluate the
measure of the currently supervised plant at a sufficiently small termination
probability, then disable exactly those controllable transitions whose target
scores strictly below their source (ties keep the transition enabled), and
repeat until the disabled set stops changing.

"Sufficiently small" is made operational by :func:`critical_theta`: a
verified geometric bisection that starts at an upper default of 0.99 and
halves theta until the pairwise orderings of state measures relevant to the
disabling decisions are free of contradictions across a geometric ladder of
probes spanning three decades below the candidate (theta, theta/4,
theta/16, theta/256, theta/1024): no pair may strictly order one way at one
probe and the other way at another, and every pair must agree with its
extrapolated theta -> 0 limit.  Successive iterations restart the bisection
at the previous value, so the accepted theta never increases and the final
value is the run's theta_min.

For small controllable sets, :func:`brute_force_optimize` enumerates every
one of the 2^|C| supervisors outright and returns the element-wise dominant
one; it exists as an independent check on the iteration and shares no code
path with it beyond the plant representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .pfsa import (
    MeasureSolveError,
    Pfsa,
    PfsaError,
    apply_disabling,
    renormalized_measure,
    serialize_pfsa,
    transition_matrix,
    validate_row_stochastic,
)

__all__ = [
    "SupervisionResult",
    "critical_theta",
    "optimize",
    "brute_force_optimize",
    "decision_pairs",
    "probe_tolerance",
    "serialize_supervision",
    "worst_monotonicity_violation",
]

THETA_START_DEFAULT = 0.99
THETA_FLOOR = 1e-12
TIE_TOL = 1e-9
"""Measure comparisons treat |difference| <= TIE_TOL as a tie (tie enables)."""

BRUTE_FORCE_LIMIT = 20
_BATCH = 1 << 14


@dataclass(frozen=True)
class SupervisionResult:
    """Outcome of :func:`optimize`.

    Attributes:
        plant: the automaton that was optimized.
        supervised: the plant with the final disabled set applied.
        disabled: frozenset of (state, event index) pairs disabled.
        theta_min: smallest accepted critical termination probability.
        nu_sharp: measure of ``supervised`` at ``theta_min``.
        iterations: number of measure/decision iterations run.
        thetas: accepted theta of each iteration (non-increasing).
        measures: per-iteration measures, all re-evaluated at ``theta_min``
            so they are directly comparable; the last one is ``nu_sharp``.
    """

    plant: Pfsa
    supervised: Pfsa
    disabled: frozenset[tuple[int, int]]
    theta_min: float
    nu_sharp: np.ndarray
    iterations: int
    thetas: tuple[float, ...]
    measures: tuple[np.ndarray, ...]


def decision_pairs(plant: Pfsa) -> list[tuple[int, int]]:
    """Distinct (source, original target) pairs the disabling rule compares."""
    seen: set[tuple[int, int]] = set()
    for q, e in zip(*np.nonzero(plant.controllable)):
        seen.add((int(q), int(plant.delta[q, e])))
    return sorted(seen)


def _signature(nu: np.ndarray, ia: np.ndarray, ib: np.ndarray, tol: float):
    d = nu[ia] - nu[ib]
    sig = np.zeros(d.shape, dtype=np.int8)
    sig[d > tol] = 1
    sig[d < -tol] = -1
    return sig, d


_PROBE_SHIFTS = (0, 2, 4, 8, 10)
"""Probe ladder: measures are compared at theta / 2**k for these k."""

_EPS = float(np.finfo(np.float64).eps)


def probe_tolerance(
    probe_theta: float, cand_theta: float, tie_tol: float, chi_scale: float
) -> float:
    """Tie deadband for an ordering check at a probe below a candidate theta.

    Measure differences that discriminate states of a single recurrent class
    vanish linearly in s = theta / (1 - theta), so a fixed deadband would
    eventually swallow every genuine ordering; the deadband therefore
    shrinks proportionally to s below the candidate (where it equals
    ``tie_tol``, the tolerance the disabling decision itself uses) and is
    floored at the solver's forward-error scale, which grows as 1/theta.
    """
    s_probe = probe_theta / (1.0 - probe_theta)
    s_cand = cand_theta / (1.0 - cand_theta)
    return max(tie_tol * s_probe / s_cand, 64.0 * _EPS * chi_scale / probe_theta)


def _orderings_consistent(sigs, diffs, thetas, tie_tol, chi_scale) -> bool:
    """True when no pairwise ordering across the probes is contradictory.

    ``sigs``/``diffs`` hold each probe's deadband signs and raw measure
    differences.  Three contradictions force a smaller candidate:

    * an inversion — some probe reads the pair strictly one way, another
      probe strictly the other way;
    * a strict reading at the candidate whose extrapolated theta -> 0 limit
      is significantly of the opposite sign (a crossing below the ladder);
    * a tie at the candidate whose extrapolated limit is significantly
      nonzero (a genuine order emerging below; halving until it is visible
      at the candidate itself lets the disabling rule act on it).

    Differences that merely shrink toward zero pass: they keep their sign on
    the way down, which is all the disabling decisions rely on.  The measure
    is analytic in s = theta / (1 - theta) near 0, so two-point linear
    extrapolations from the smallest probes estimate the limit.
    """
    s = np.array([t / (1.0 - t) for t in thetas])
    d = np.vstack(diffs)  # probes x pairs
    sig_mat = np.vstack(sigs)
    if np.any((sig_mat == 1).any(axis=0) & (sig_mat == -1).any(axis=0)):
        return False

    def extrapolate(j: int, k: int) -> np.ndarray:
        return (s[j] * d[k] - s[k] * d[j]) / (s[j] - s[k])

    lim_a = extrapolate(-2, -1)
    lim_b = extrapolate(-3, -1)
    # the extrapolation roughly doubles the solve noise of the deepest probe
    noise = 4.0 * 64.0 * _EPS * chi_scale / thetas[-1]
    slack = tie_tol + noise
    strict = sigs[0] != 0
    sg = sigs[0].astype(np.float64)
    strict_ok = (lim_a * sg >= -slack) & (lim_b * sg >= -slack)
    tie_ok = np.maximum(np.abs(lim_a), np.abs(lim_b)) <= slack
    return bool(np.all(np.where(strict, strict_ok, tie_ok)))


def critical_theta(
    pi: sp.spmatrix | np.ndarray,
    chi: np.ndarray,
    *,
    pairs: list[tuple[int, int]] | None = None,
    start: float = THETA_START_DEFAULT,
    tie_tol: float = TIE_TOL,
    theta_floor: float = THETA_FLOOR,
) -> float:
    """Largest verified theta whose orderings are stable on (0, theta].

    The orderings checked are the measure differences over ``pairs`` (all
    adjacent pairs of the candidate's ranking when None).  A candidate c is
    accepted when the deadband signs at c, c/4, c/16, c/256 and c/1024 show
    no inversion and every pairwise difference agrees with its extrapolated
    theta -> 0 limit; otherwise the candidate is halved.  Raises below
    ``theta_floor``.
    """
    theta, _ = _critical_theta_with_measure(
        pi, chi, pairs=pairs, start=start, tie_tol=tie_tol, theta_floor=theta_floor
    )
    return theta


def _critical_theta_with_measure(
    pi,
    chi,
    *,
    pairs,
    start=THETA_START_DEFAULT,
    tie_tol=TIE_TOL,
    theta_floor=THETA_FLOOR,
):
    m = validate_row_stochastic(pi)
    chi = np.asarray(chi, dtype=np.float64)
    chi_scale = max(float(np.abs(chi).max()), 1e-30)
    if not (0.0 < start < 1.0):
        raise PfsaError(f"start theta must lie in (0, 1), got {start!r}")
    use_pairs = pairs is not None
    if use_pairs:
        if len(pairs) == 0:
            return start, renormalized_measure(m, chi, start)
        ia = np.array([p[0] for p in pairs], dtype=np.intp)
        ib = np.array([p[1] for p in pairs], dtype=np.intp)

    cache: dict[float, np.ndarray] = {}

    def measure(t: float) -> np.ndarray:
        if t not in cache:
            cache[t] = renormalized_measure(m, chi, t)
        return cache[t]

    theta = start
    while theta >= theta_floor:
        probe_thetas = [theta / (1 << k) for k in _PROBE_SHIFTS]
        tols = [probe_tolerance(t, theta, tie_tol, chi_scale) for t in probe_thetas]
        try:
            nus = [measure(t) for t in probe_thetas]
        except MeasureSolveError as exc:
            raise PfsaError(
                f"measure solve failed during theta bisection at {theta!r}: {exc}"
            ) from exc
        if not use_pairs:
            # Adjacent pairs in the candidate's sorted order stand in for the
            # full ranking: any reordering below shows up as an inversion.
            order = np.argsort(nus[0], kind="stable")
            ia, ib = order[1:], order[:-1]
            if ia.size == 0:
                return theta, nus[0]
        sigs_d = [_signature(nu, ia, ib, tol) for nu, tol in zip(nus, tols)]
        sigs = [s for s, _ in sigs_d]
        diffs = [d for _, d in sigs_d]
        if _orderings_consistent(sigs, diffs, probe_thetas, tie_tol, chi_scale):
            return theta, nus[0]
        theta /= 2.0
    raise PfsaError(
        f"orderings never stabilized above the theta floor {theta_floor!r}; "
        "measure differences keep changing sign"
    )


def optimize(
    plant: Pfsa,
    *,
    theta_start: float = THETA_START_DEFAULT,
    tie_tol: float = TIE_TOL,
    max_iterations: int | None = None,
    theta_floor: float = THETA_FLOOR,
    initial_disabled: frozenset[tuple[int, int]] = frozenset(),
) -> SupervisionResult:
    """Compute the measure-maximizing supervisor by fixed-point iteration.

    Each iteration evaluates the supervised plant's measure at its verified
    critical theta and disables exactly the controllable transitions whose
    original target measures strictly below the source (beyond ``tie_tol``);
    everything else is (re-)enabled.  Terminates when the disabled set
    repeats; raises if ``max_iterations`` (default 10 * n) is exhausted.
    ``initial_disabled`` seeds the first iteration (a warm start from a
    related plant's supervisor); the fixed point does not depend on it.
    """
    n = plant.n_states
    if max_iterations is None:
        max_iterations = max(10 * n, 10)
    ctrl_q, ctrl_e = np.nonzero(plant.controllable)
    ctrl_targets = plant.delta[ctrl_q, ctrl_e]
    pairs = decision_pairs(plant)
    chi = plant.chi

    disabled: frozenset[tuple[int, int]] = frozenset(initial_disabled)
    theta = theta_start
    thetas: list[float] = []
    disabled_history: list[frozenset[tuple[int, int]]] = []
    for _ in range(max_iterations):
        current = apply_disabling(plant, disabled)
        pi = transition_matrix(current)
        theta, nu = _critical_theta_with_measure(
            pi, chi, pairs=pairs, start=theta, tie_tol=tie_tol, theta_floor=theta_floor
        )
        thetas.append(theta)
        disabled_history.append(disabled)
        worse = nu[ctrl_targets] < nu[ctrl_q] - tie_tol
        new_disabled = frozenset(
            (int(q), int(e)) for q, e in zip(ctrl_q[worse], ctrl_e[worse])
        )
        if new_disabled == disabled:
            break
        disabled = new_disabled
    else:
        raise PfsaError(
            f"supervisor iteration did not reach a fixed point in {max_iterations} steps"
        )

    theta_min = thetas[-1]
    measures = tuple(
        renormalized_measure(transition_matrix(apply_disabling(plant, d)), chi, theta_min)
        for d in disabled_history
    )
    supervised = apply_disabling(plant, disabled)
    return SupervisionResult(
        plant=plant,
        supervised=supervised,
        disabled=disabled,
        theta_min=theta_min,
        nu_sharp=measures[-1],
        iterations=len(thetas),
        thetas=tuple(thetas),
        measures=measures,
    )


def worst_monotonicity_violation(result: SupervisionResult) -> float:
    """Largest elementwise decrease between successive iteration measures.

    The optimal iteration is monotone, so this should never exceed the
    solver-noise scale; returns 0.0 for single-iteration runs.
    """
    worst = 0.0
    for a, b in zip(result.measures, result.measures[1:]):
        worst = max(worst, float(np.max(a - b)))
    return worst


def brute_force_optimize(
    plant: Pfsa,
    theta: float = 0.01,
    *,
    tol: float = TIE_TOL,
    limit: int = BRUTE_FORCE_LIMIT,
) -> tuple[frozenset[tuple[int, int]], np.ndarray]:
    """Enumerate all 2^|C| supervisors and return the element-wise dominant one.

    Every subset of the controllable transitions is applied, the supervised
    measure evaluated at the shared ``theta``, and a subset returned whose
    measure is >= every other subset's measure - ``tol`` at every state.
    Raises if |C| exceeds ``limit`` or no subset dominates element-wise.
    """
    pairs = plant.controllable_pairs()
    c = len(pairs)
    if c > limit:
        raise PfsaError(f"brute force limited to {limit} controllable transitions, got {c}")
    n = plant.n_states
    base = transition_matrix(plant).toarray()
    # rank-one row update per disabled pair: move the mass back to the diagonal
    updates = np.zeros((c, n, n), dtype=np.float64)
    for k, (q, e) in enumerate(pairs):
        t = int(plant.delta[q, e])
        p = float(plant.probs[q, e])
        if t != q:
            updates[k, q, t] -= p
            updates[k, q, q] += p
    total = 1 << c
    b = theta * np.asarray(plant.chi, dtype=np.float64)
    eye = np.eye(n)
    best_nu = np.full(n, -np.inf)
    nus = np.empty((total, n), dtype=np.float64)
    bits_template = np.arange(c, dtype=np.uint32)
    for lo in range(0, total, _BATCH):
        hi = min(lo + _BATCH, total)
        masks = np.arange(lo, hi, dtype=np.uint32)
        bits = ((masks[:, None] >> bits_template[None, :]) & 1).astype(np.float64)
        pis = base[None, :, :] + np.tensordot(bits, updates, axes=(1, 0))
        a = eye[None, :, :] - (1.0 - theta) * pis
        sol = np.linalg.solve(a, np.broadcast_to(b, (hi - lo, n))[..., None])[..., 0]
        # one refinement sweep keeps the comparison noise well under tol
        resid = b[None, :] - np.einsum("kij,kj->ki", a, sol)
        sol = sol + np.linalg.solve(a, resid[..., None])[..., 0]
        nus[lo:hi] = sol
        np.maximum(best_nu, sol.max(axis=0), out=best_nu)
    dominant = np.nonzero(np.all(nus >= best_nu[None, :] - tol, axis=1))[0]
    if dominant.size == 0:
        raise PfsaError(
            "no supervisor dominates element-wise at this theta; "
            "theta is likely above the critical value"
        )
    k = int(dominant[0])
    chosen = frozenset(pairs[j] for j in range(c) if (k >> j) & 1)
    return chosen, nus[k]


def serialize_supervision(result: SupervisionResult) -> str:
    """Plant text format plus one `disabled <src> <event>` line per pair."""
    lines = [serialize_pfsa(result.plant).rstrip("\n")]
    for q, e in sorted(result.disabled):
        lines.append(f"disabled {q} {result.plant.events[e].name}")
    return "\n".join(lines) + "\n"
