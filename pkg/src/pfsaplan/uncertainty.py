"""Identify execution-uncertainty parameters from trajectory logs.

The pipeline turns raw tracking data into the uncontrollable-event
probabilities consumed by the navigation plant builders:

1. ``raw_deviation``        -- distance from each logged pose to the target
                               cell it was chasing at that instant.
2. ``delay_corrected``      -- remove the actuation/sensing lag by finding,
                               per fixed-length interval, the integer sample
                               shift that minimizes the mean deviation.
3. ``histogram_from_series``/``deviation_distribution`` -- bin the corrected
                               deviations per interval and average the
                               per-interval histograms into one radial
                               distribution of deviation distances.
4. ``DeviationContour``     -- that radial distribution (histogram-backed or
                               an analytic half-gaussian kernel), optionally
                               offset or stretched anisotropically.
5. ``uncontrollable_probabilities`` -- Monte Carlo integration of the
                               contour's ball against the 3x3 block of cell
                               footprints around a state, yielding the
                               probability of drifting into each neighbor
                               (and of staying put, which feeds gamma).
6. ``identify``             -- the whole pipeline: log in, uncertainty-file
                               text out.

Workspace coordinates are measured in cell widths: x increases along
columns, y along rows, and cell ``(r, c)`` spans ``x in [c, c+1)``,
``y in [r, r+1)``.  All randomness uses counter-based generators seeded
from explicit integers, so every estimate is reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

from .nav_model import COMPASS
from .pfsa import PfsaError

__all__ = [
    "BINS_DEFAULT",
    "DeviationContour",
    "DeviationHistogram",
    "GAMMA_PRESETS",
    "IdentificationResult",
    "MAX_SHIFT_DEFAULT",
    "RANGE_DEFAULT",
    "SAMPLES_DEFAULT",
    "TRUNCATION_TOL_DEFAULT",
    "TrajectoryLog",
    "UncontrollableEstimate",
    "WINDOW_DEFAULT",
    "delay_corrected",
    "deviation_distribution",
    "histogram_from_series",
    "identify",
    "identify_deviation",
    "n_intervals",
    "parse_contour",
    "parse_histogram",
    "parse_trajectory_csv",
    "point_cell_distance",
    "raw_deviation",
    "serialize_contour",
    "serialize_histogram",
    "serialize_trajectory_csv",
    "synthesize_log",
    "uncontrollable_probabilities",
]

WINDOW_DEFAULT = 200
"""Samples per constant-delay interval."""

MAX_SHIFT_DEFAULT = 50
"""Largest integer sample shift tried when estimating the delay."""

BINS_DEFAULT = 32
"""Histogram bins for the deviation distribution."""

RANGE_DEFAULT = 2.0
"""Upper edge of the deviation histogram, in cell widths."""

SAMPLES_DEFAULT = 100_000
"""Monte Carlo samples for the neighbor-probability integral."""

TRUNCATION_TOL_DEFAULT = 1e-3
"""Largest tolerated probability mass landing beyond the 3x3 neighborhood."""

GAMMA_PRESETS: Mapping[str, float] = MappingProxyType(
    {"low_speed": 0.973, "high_speed": 0.93}
)
"""Field-identified dynamic-deviation coefficients for a two-wheeled
self-balancing platform, shipped as ready-made ``gamma`` presets (the raw
logs behind them are not distributed)."""

_OFFSET_TOKEN = {off: name for name, off in COMPASS}


# ---------------------------------------------------------------------------
# Trajectory logs


@dataclass(frozen=True)
class TrajectoryLog:
    """A timed pose trace annotated with the target cell active at each sample.

    ``poses`` has shape ``(n, 2)`` for planar logs or ``(n, 3)`` when a
    heading column is present (the heading rides along but deviations are
    measured on the planar position only).  ``targets`` holds ``(row, col)``
    cell indices.
    """

    times: np.ndarray
    poses: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        poses = np.asarray(self.poses, dtype=np.float64)
        targets = np.asarray(self.targets)
        if times.ndim != 1 or times.size == 0:
            raise PfsaError("empty trajectory log")
        n = times.size
        if poses.ndim != 2 or poses.shape[0] != n or poses.shape[1] not in (2, 3):
            raise PfsaError(
                f"poses must be ({n}, 2) or ({n}, 3), got {poses.shape}"
            )
        if targets.ndim != 2 or targets.shape != (n, 2):
            raise PfsaError(f"targets must be ({n}, 2), got {targets.shape}")
        if not np.issubdtype(targets.dtype, np.integer):
            raise PfsaError("target cells must be integer (row, col) indices")
        if np.any(targets < 0):
            raise PfsaError("target cells must be nonnegative (row, col) indices")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(poses)):
            raise PfsaError("trajectory log contains non-finite values")
        if n > 1 and not np.all(np.diff(times) > 0.0):
            raise PfsaError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "targets", targets.astype(np.int64))

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def has_heading(self) -> bool:
        return self.poses.shape[1] == 3


def parse_trajectory_csv(text: str) -> TrajectoryLog:
    """Parse ``t,x,y[,heading],target_row,target_col`` CSV text."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise PfsaError("empty trajectory log")
    header = [h.strip() for h in lines[0].split(",")]
    if header == ["t", "x", "y", "target_row", "target_col"]:
        width = 5
    elif header == ["t", "x", "y", "heading", "target_row", "target_col"]:
        width = 6
    else:
        raise PfsaError(f"unrecognized trajectory CSV header: {lines[0]!r}")
    times: list[float] = []
    poses: list[tuple[float, ...]] = []
    targets: list[tuple[int, int]] = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != width:
            raise PfsaError(
                f"trajectory CSV line {lineno}: expected {width} fields, "
                f"got {len(parts)}"
            )
        try:
            times.append(float(parts[0]))
            poses.append(tuple(float(p) for p in parts[1:-2]))
            targets.append((int(parts[-2]), int(parts[-1])))
        except ValueError as exc:
            raise PfsaError(f"trajectory CSV line {lineno}: {exc}") from None
    return TrajectoryLog(
        times=np.array(times),
        poses=np.array(poses),
        targets=np.array(targets, dtype=np.int64),
    )


def serialize_trajectory_csv(log: TrajectoryLog) -> str:
    """Inverse of :func:`parse_trajectory_csv` (floats round-trip via repr)."""
    cols = ["t", "x", "y", "heading", "target_row", "target_col"]
    if not log.has_heading:
        cols.remove("heading")
    out = [",".join(cols)]
    for i in range(log.n):
        row = [repr(float(log.times[i]))]
        row += [repr(float(v)) for v in log.poses[i]]
        row += [str(int(log.targets[i, 0])), str(int(log.targets[i, 1]))]
        out.append(",".join(row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Deviation series


def point_cell_distance(x: float, y: float, row: int, col: int) -> float:
    """Euclidean distance from ``(x, y)`` to cell ``(row, col)``; 0 inside."""
    dx = max(col - x, 0.0, x - (col + 1.0))
    dy = max(row - y, 0.0, y - (row + 1.0))
    return math.hypot(dx, dy)


def _distances(poses: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized planar distance from each pose to its target cell."""
    x = poses[:, 0]
    y = poses[:, 1]
    col = targets[:, 1].astype(np.float64)
    row = targets[:, 0].astype(np.float64)
    dx = np.maximum(np.maximum(col - x, 0.0), x - (col + 1.0))
    dy = np.maximum(np.maximum(row - y, 0.0), y - (row + 1.0))
    return np.hypot(dx, dy)


def raw_deviation(log: TrajectoryLog) -> np.ndarray:
    """Distance from each logged pose to the target cell active at that sample.

    Zero whenever the pose lies inside its target cell; otherwise the
    Euclidean distance to the nearest point of the cell.
    """
    return _distances(log.poses, log.targets)


def n_intervals(log: TrajectoryLog, *, window: int = WINDOW_DEFAULT) -> int:
    """Number of full constant-delay windows the log supports."""
    if window < 1:
        raise PfsaError(f"window must be >= 1, got {window}")
    return log.n // window


def _shifted_deviation(log: TrajectoryLog, start: int, stop: int, shift: int) -> np.ndarray:
    """Deviation of pose ``t + shift`` from target ``t`` for t in [start, hi).

    ``hi`` is ``stop`` clipped so the shifted pose index stays in range; the
    array may therefore be shorter than the interval near the end of the log.
    """
    hi = min(stop, log.n - shift)
    if hi <= start:
        return np.empty(0)
    return _distances(log.poses[start + shift : hi + shift], log.targets[start:hi])


def delay_corrected(
    log: TrajectoryLog,
    interval: int,
    *,
    window: int = WINDOW_DEFAULT,
    max_shift: int = MAX_SHIFT_DEFAULT,
) -> tuple[np.ndarray, int]:
    """Deviation series of one interval after removing the tracking lag.

    The lag is the nonnegative integer sample shift minimizing the mean
    deviation of pose ``t + shift`` from target ``t`` over the interval
    (ties resolved toward the smaller shift, so perfect tracking reports
    lag 0).  Returns the per-sample deviations evaluated at that shift and
    the shift itself.
    """
    if window < 1:
        raise PfsaError(f"window must be >= 1, got {window}")
    if max_shift < 0:
        raise PfsaError(f"max_shift must be >= 0, got {max_shift}")
    if window <= max_shift:
        raise PfsaError(
            f"interval window ({window} samples) is not longer than the "
            f"delay search window (max_shift {max_shift})"
        )
    total = n_intervals(log, window=window)
    if not 0 <= interval < total:
        raise PfsaError(
            f"interval {interval} out of range: log has {total} full "
            f"window(s) of {window} samples"
        )
    start = interval * window
    stop = start + window
    means = np.empty(max_shift + 1)
    for shift in range(max_shift + 1):
        dev = _shifted_deviation(log, start, stop, shift)
        if dev.size == 0:
            raise PfsaError(
                f"interval {interval} is shorter than the delay search "
                f"window: no samples left at shift {shift}"
            )
        means[shift] = dev.mean()
    best = int(np.argmin(means))
    return _shifted_deviation(log, start, stop, best), best


# ---------------------------------------------------------------------------
# Deviation histograms


@dataclass(frozen=True)
class DeviationHistogram:
    """A binned radial distribution of deviation distances.

    ``edges`` has one more entry than ``masses``; masses are nonnegative and
    sum to 1 within 1e-12.  ``delays`` records the per-interval lag estimates
    that produced the underlying series (empty for analytic histograms).
    """

    edges: np.ndarray
    masses: np.ndarray
    delays: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.float64)
        masses = np.asarray(self.masses, dtype=np.float64)
        if edges.ndim != 1 or masses.ndim != 1 or edges.size != masses.size + 1:
            raise PfsaError("histogram needs len(edges) == len(masses) + 1")
        if masses.size == 0:
            raise PfsaError("histogram needs at least one bin")
        if not np.all(np.diff(edges) > 0.0):
            raise PfsaError("histogram bin edges must be strictly increasing")
        if edges[0] < 0.0:
            raise PfsaError("deviation distances are nonnegative; edges must be >= 0")
        if np.any(masses < 0.0) or not np.all(np.isfinite(masses)):
            raise PfsaError("histogram masses must be finite and nonnegative")
        if abs(float(masses.sum()) - 1.0) > 1e-12:
            raise PfsaError(
                f"histogram masses must sum to 1 within 1e-12, got {masses.sum()!r}"
            )
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))

    @property
    def n_bins(self) -> int:
        return int(self.masses.size)


def histogram_from_series(
    series: np.ndarray,
    *,
    bins: int = BINS_DEFAULT,
    upper: float = RANGE_DEFAULT,
    delays: Sequence[int] = (),
) -> DeviationHistogram:
    """Bin a deviation series into ``bins`` uniform bins over [0, upper].

    Values at or beyond ``upper`` are counted in the last bin so the masses
    always sum to 1.
    """
    values = np.asarray(series, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise PfsaError("cannot histogram an empty deviation series")
    if bins < 1:
        raise PfsaError(f"bins must be >= 1, got {bins}")
    if not upper > 0.0:
        raise PfsaError(f"histogram range must be positive, got {upper}")
    if np.any(values < 0.0):
        raise PfsaError("deviation series contains negative distances")
    edges = np.linspace(0.0, float(upper), bins + 1)
    idx = np.minimum((values / (upper / bins)).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return DeviationHistogram(
        edges=edges, masses=counts / values.size, delays=tuple(delays)
    )


def deviation_distribution(
    per_interval: Sequence[DeviationHistogram],
) -> DeviationHistogram:
    """Average per-interval histograms into the aggregate distribution.

    All inputs must share bin edges; the result's masses are the arithmetic
    mean, renormalized to sum to exactly 1, and its ``delays`` concatenate
    the inputs' delays in order.
    """
    if not per_interval:
        raise PfsaError("deviation_distribution needs at least one histogram")
    edges = per_interval[0].edges
    for k, hist in enumerate(per_interval[1:], start=1):
        if not np.array_equal(hist.edges, edges):
            raise PfsaError(f"histogram {k} has mismatched bin edges")
    masses = np.mean([h.masses for h in per_interval], axis=0)
    masses = masses / masses.sum()
    delays = tuple(d for h in per_interval for d in h.delays)
    return DeviationHistogram(edges=edges, masses=masses, delays=delays)


def identify_deviation(
    log: TrajectoryLog,
    *,
    window: int = WINDOW_DEFAULT,
    max_shift: int = MAX_SHIFT_DEFAULT,
    bins: int = BINS_DEFAULT,
    upper: float = RANGE_DEFAULT,
) -> DeviationHistogram:
    """Full deviation pipeline: windows -> lag correction -> averaged histogram.

    Splits the log into consecutive full windows (a trailing partial window
    is dropped), delay-corrects each, histograms each with shared bins and
    returns the per-interval average.  The result's ``delays`` hold one lag
    estimate per interval.
    """
    total = n_intervals(log, window=window)
    if total < 1:
        raise PfsaError(
            f"log has {log.n} samples; need at least one full window of {window}"
        )
    parts = []
    for k in range(total):
        series, lag = delay_corrected(log, k, window=window, max_shift=max_shift)
        parts.append(
            histogram_from_series(series, bins=bins, upper=upper, delays=(lag,))
        )
    return deviation_distribution(parts)


# ---------------------------------------------------------------------------
# Deviation contours


@dataclass(frozen=True)
class DeviationContour:
    """A radial distribution of deviation distances around the estimated pose.

    ``kind`` is ``"gaussian"`` (half-normal radial density with scale
    ``sigma``) or ``"histogram"`` (backed by a :class:`DeviationHistogram`).
    ``offset`` shifts the ball center off the estimated pose (in cell
    widths) for asymmetric drift; ``anisotropy`` stretches the ball's x/y
    semi-axes for direction-dependent spread.  Both densities integrate to 1
    over their support by construction.
    """

    kind: str
    sigma: float | None = None
    histogram: DeviationHistogram | None = None
    offset: tuple[float, float] = (0.0, 0.0)
    anisotropy: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if self.kind == "gaussian":
            if self.sigma is None or not (math.isfinite(self.sigma) and self.sigma > 0):
                raise PfsaError("gaussian contour needs a finite sigma > 0")
            if self.histogram is not None:
                raise PfsaError("gaussian contour must not carry a histogram")
        elif self.kind == "histogram":
            if self.histogram is None:
                raise PfsaError("histogram contour needs a histogram")
            if self.sigma is not None:
                raise PfsaError("histogram contour must not carry a sigma")
        else:
            raise PfsaError(f"unknown contour kind {self.kind!r}")
        off = tuple(float(v) for v in self.offset)
        ani = tuple(float(v) for v in self.anisotropy)
        if len(off) != 2 or not all(math.isfinite(v) for v in off):
            raise PfsaError("contour offset must be two finite numbers")
        if len(ani) != 2 or not all(math.isfinite(v) and v > 0 for v in ani):
            raise PfsaError("contour anisotropy must be two positive numbers")
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "anisotropy", ani)

    def sample_radii(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` deviation radii from the radial density."""
        if self.kind == "gaussian":
            return np.abs(rng.normal(0.0, self.sigma, n))
        hist = self.histogram
        assert hist is not None
        idx = rng.choice(hist.n_bins, size=n, p=hist.masses)
        lo = hist.edges[idx]
        hi = hist.edges[idx + 1]
        return lo + rng.random(n) * (hi - lo)


def parse_contour(
    text: str,
    *,
    histogram_loader: Callable[[str], str] | None = None,
) -> DeviationContour:
    """Parse a contour spec.

    Grammar (one key per line, ``#`` comments allowed)::

        kernel gaussian sigma=<v>
        kernel histogram <file>
        offset <dx> <dy>
        anisotropy <ax> <ay>

    Exactly one ``kernel`` line is required.  ``kernel histogram`` resolves
    ``<file>`` through ``histogram_loader`` (a callable returning the file's
    text), letting callers control path resolution.
    """
    kernel: DeviationContour | None = None
    offset = (0.0, 0.0)
    anisotropy = (1.0, 1.0)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        ln = raw.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        try:
            if parts[0] == "kernel":
                if kernel is not None:
                    raise ValueError("duplicate kernel line")
                if len(parts) == 3 and parts[1] == "gaussian":
                    key, _, val = parts[2].partition("=")
                    if key != "sigma" or not val:
                        raise ValueError("gaussian kernel needs sigma=<v>")
                    kernel = DeviationContour(kind="gaussian", sigma=float(val))
                elif len(parts) == 3 and parts[1] == "histogram":
                    if histogram_loader is None:
                        raise ValueError(
                            "histogram kernel given but no histogram_loader"
                        )
                    hist = parse_histogram(histogram_loader(parts[2]))
                    kernel = DeviationContour(kind="histogram", histogram=hist)
                else:
                    raise ValueError("kernel must be 'gaussian sigma=<v>' or 'histogram <file>'")
            elif parts[0] == "offset" and len(parts) == 3:
                offset = (float(parts[1]), float(parts[2]))
            elif parts[0] == "anisotropy" and len(parts) == 3:
                anisotropy = (float(parts[1]), float(parts[2]))
            else:
                raise ValueError(f"unknown key {parts[0]!r}")
        except (ValueError, PfsaError) as exc:
            raise PfsaError(f"malformed contour line {lineno}: {raw!r} ({exc})") from None
    if kernel is None:
        raise PfsaError("contour spec has no kernel line")
    return DeviationContour(
        kind=kernel.kind,
        sigma=kernel.sigma,
        histogram=kernel.histogram,
        offset=offset,
        anisotropy=anisotropy,
    )


def serialize_contour(contour: DeviationContour, *, histogram_ref: str | None = None) -> str:
    """Inverse of :func:`parse_contour`.

    Histogram-backed contours store their distribution in a separate file;
    pass its path as ``histogram_ref`` (the histogram text itself comes from
    :func:`serialize_histogram`).
    """
    if contour.kind == "gaussian":
        lines = [f"kernel gaussian sigma={contour.sigma!r}"]
    else:
        if histogram_ref is None:
            raise PfsaError("histogram contour needs histogram_ref to serialize")
        lines = [f"kernel histogram {histogram_ref}"]
    if contour.offset != (0.0, 0.0):
        lines.append(f"offset {contour.offset[0]!r} {contour.offset[1]!r}")
    if contour.anisotropy != (1.0, 1.0):
        lines.append(f"anisotropy {contour.anisotropy[0]!r} {contour.anisotropy[1]!r}")
    return "\n".join(lines) + "\n"


def parse_histogram(text: str) -> DeviationHistogram:
    """Parse ``<lo> <hi> <mass>`` histogram lines into a DeviationHistogram.

    Bins must be contiguous; masses are renormalized to sum to exactly 1
    (they must already be within 1e-9 of 1).
    """
    rows: list[tuple[float, float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        ln = raw.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if len(parts) != 3:
            raise PfsaError(f"malformed histogram line {lineno}: {raw!r}")
        try:
            rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            raise PfsaError(f"malformed histogram line {lineno}: {raw!r}") from None
    if not rows:
        raise PfsaError("empty histogram file")
    edges = [rows[0][0]]
    masses = []
    for lo, hi, mass in rows:
        if abs(lo - edges[-1]) > 1e-12:
            raise PfsaError(
                f"histogram bins are not contiguous: bin starts at {lo!r}, "
                f"previous ended at {edges[-1]!r}"
            )
        edges.append(hi)
        masses.append(mass)
    total = float(np.sum(masses))
    if abs(total - 1.0) > 1e-9:
        raise PfsaError(f"histogram masses sum to {total!r}, expected 1")
    return DeviationHistogram(
        edges=np.array(edges), masses=np.array(masses) / total
    )


def serialize_histogram(hist: DeviationHistogram) -> str:
    """Inverse of :func:`parse_histogram` (floats round-trip via repr)."""
    lines = [
        f"{float(hist.edges[i])!r} {float(hist.edges[i + 1])!r} {float(m)!r}"
        for i, m in enumerate(hist.masses)
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Neighbor-probability integration


@dataclass(frozen=True)
class UncontrollableEstimate:
    """Monte Carlo estimate of where amortized deviations land.

    ``probs`` maps ``"stay"`` plus the 8 compass tokens to probabilities
    summing to 1 over the 3x3 cell block; ``se`` holds the matching binomial
    standard errors.  ``truncated_mass`` is the sample fraction that fell
    beyond the block (kept below the truncation tolerance by construction).
    """

    probs: Mapping[str, float]
    se: Mapping[str, float]
    samples: int
    kept: int
    truncated_mass: float

    @property
    def gamma(self) -> float:
        """Probability of no uncontrollable deviation (the ``stay`` mass)."""
        return self.probs["stay"]

    @property
    def total_uncontrollable(self) -> float:
        return 1.0 - self.probs["stay"]

    def uncertainty_text(self) -> str:
        """``uc <dir> <p>`` lines consumable by the plant builders."""
        lines = [
            f"uc {name} {self.probs[name]!r}"
            for name, _ in COMPASS
            if self.probs[name] > 0.0
        ]
        return "\n".join(lines) + "\n" if lines else ""


def _neighbor_probabilities(
    contour: DeviationContour,
    *,
    samples: int,
    seed: int,
    truncation_tol: float,
) -> UncontrollableEstimate:
    """Core Monte Carlo integral on the translation-invariant 3x3 geometry.

    Samples the estimated pose uniformly over the state's own cell, a
    deviation radius from the contour, and an actual pose uniformly over the
    (possibly offset/stretched) deviation ball, then attributes the actual
    pose to the cell containing it.
    """
    if samples < 1:
        raise PfsaError(f"samples must be >= 1, got {samples}")
    if not truncation_tol >= 0.0:
        raise PfsaError(f"truncation_tol must be >= 0, got {truncation_tol}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    sx = rng.random(samples)
    sy = rng.random(samples)
    radii = contour.sample_radii(rng, samples)
    theta = rng.random(samples) * (2.0 * math.pi)
    rho = np.sqrt(rng.random(samples))
    ax, ay = contour.anisotropy
    dx, dy = contour.offset
    x = sx + dx + radii * rho * np.cos(theta) * ax
    y = sy + dy + radii * rho * np.sin(theta) * ay
    dcol = np.floor(x).astype(np.int64)
    drow = np.floor(y).astype(np.int64)
    inside = (np.abs(dcol) <= 1) & (np.abs(drow) <= 1)
    truncated = samples - int(inside.sum())
    truncated_mass = truncated / samples
    if truncated_mass > truncation_tol:
        raise PfsaError(
            "contour support exceeds the 3x3 neighborhood footprint: "
            f"truncated mass {truncated_mass!r} > tolerance {truncation_tol!r}"
        )
    kept = samples - truncated
    if kept == 0:
        raise PfsaError("no Monte Carlo samples landed inside the neighborhood")
    flat = (drow[inside] + 1) * 3 + (dcol[inside] + 1)
    counts = np.bincount(flat, minlength=9).astype(np.float64)
    probs: dict[str, float] = {}
    ses: dict[str, float] = {}
    for idx in range(9):
        off = (idx // 3 - 1, idx % 3 - 1)
        name = "stay" if off == (0, 0) else _OFFSET_TOKEN[off]
        p = counts[idx] / kept
        probs[name] = float(p)
        ses[name] = float(math.sqrt(p * (1.0 - p) / kept))
    return UncontrollableEstimate(
        probs=MappingProxyType(probs),
        se=MappingProxyType(ses),
        samples=samples,
        kept=kept,
        truncated_mass=truncated_mass,
    )


def uncontrollable_probabilities(
    contour: DeviationContour,
    nav,
    q: int,
    *,
    samples: int = SAMPLES_DEFAULT,
    seed: int = 0,
    truncation_tol: float = TRUNCATION_TOL_DEFAULT,
) -> UncontrollableEstimate:
    """Probability of uncontrollably drifting from state ``q`` to each neighbor.

    Estimates, by Monte Carlo, the normalized overlap of the deviation ball
    with each cell footprint in the 3x3 block centered on ``q``'s cell: the
    estimated pose is uniform over the cell, the radius is drawn from the
    contour and the actual pose is uniform over the resulting ball.  Mass
    landing in the state's own cell means "no uncontrollable event" (the
    ``stay`` entry, which feeds gamma); mass on a neighbor cell becomes that
    direction's uncontrollable twin probability.  Neighbor cells outside the
    grid keep their direction token -- the plant builders route those moves
    to the absorbing off-map state.  Mass beyond the 3x3 block has no state
    to land on and raises once it exceeds ``truncation_tol``.

    Cell footprints are translation-invariant unit squares, so the estimate
    depends on ``q`` only through validity checks; heading-resolved states
    partition a cell by heading interval and are not supported here.
    """
    if nav.model_kind == "heading":
        raise PfsaError(
            "uncontrollable_probabilities supports cell footprints only; "
            "heading-resolved states are not supported"
        )
    if q == nav.deadlock_state:
        raise PfsaError("the deadlock state has no cell footprint")
    if q in nav.obstacle_states:
        raise PfsaError(f"state {q} is blocked; identification needs a free cell")
    nav.cell_of(q)
    return _neighbor_probabilities(
        contour, samples=samples, seed=seed, truncation_tol=truncation_tol
    )


# ---------------------------------------------------------------------------
# End-to-end identification


@dataclass(frozen=True)
class IdentificationResult:
    """Everything the pipeline learned from one trajectory log."""

    histogram: DeviationHistogram
    contour: DeviationContour
    estimate: UncontrollableEstimate

    @property
    def gamma(self) -> float:
        return self.estimate.gamma

    @property
    def delays(self) -> tuple[int, ...]:
        return self.histogram.delays

    def uncertainty_text(self) -> str:
        return self.estimate.uncertainty_text()


def identify(
    log: TrajectoryLog,
    *,
    window: int = WINDOW_DEFAULT,
    max_shift: int = MAX_SHIFT_DEFAULT,
    bins: int = BINS_DEFAULT,
    upper: float = RANGE_DEFAULT,
    samples: int = SAMPLES_DEFAULT,
    seed: int = 0,
    truncation_tol: float = TRUNCATION_TOL_DEFAULT,
) -> IdentificationResult:
    """Run the whole pipeline: log -> deviation distribution -> neighbor probs.

    The resulting ``uncertainty_text()`` feeds straight into the plant
    builders' averaged uncertainty model.
    """
    hist = identify_deviation(
        log, window=window, max_shift=max_shift, bins=bins, upper=upper
    )
    contour = DeviationContour(kind="histogram", histogram=hist)
    estimate = _neighbor_probabilities(
        contour, samples=samples, seed=seed, truncation_tol=truncation_tol
    )
    return IdentificationResult(histogram=hist, contour=contour, estimate=estimate)


# ---------------------------------------------------------------------------
# Log synthesis (for pipeline validation)


def synthesize_log(
    seed: int,
    *,
    n: int = 4000,
    contour: DeviationContour | None = None,
    deviations: np.ndarray | None = None,
    lag: int = 0,
    grid_shape: tuple[int, int] = (6, 6),
    hold: int = 25,
    dt: float = 0.1,
) -> TrajectoryLog:
    """Build a synthetic trajectory log with known deviations and lag.

    The target cell performs a random walk over ``grid_shape``, holding each
    cell for ``hold`` samples.  The ideal pose at sample ``i`` sits at an
    exactly known distance from target ``i`` (radii drawn from ``contour``,
    taken from ``deviations``, or zero), and the logged pose trails the
    ideal one by ``lag`` samples.  Delay correction therefore recovers
    ``lag`` and the corrected deviations reproduce the given radii.
    """
    if n < 1:
        raise PfsaError(f"n must be >= 1, got {n}")
    if lag < 0:
        raise PfsaError(f"lag must be >= 0, got {lag}")
    if hold < 1:
        raise PfsaError(f"hold must be >= 1, got {hold}")
    rows, cols = grid_shape
    if rows < 1 or cols < 1:
        raise PfsaError(f"grid_shape must be positive, got {grid_shape}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    if contour is not None and deviations is not None:
        raise PfsaError("pass a contour or explicit deviations, not both")
    if contour is not None:
        radii = contour.sample_radii(rng, n)
    elif deviations is not None:
        radii = np.asarray(deviations, dtype=np.float64)
        if radii.shape != (n,):
            raise PfsaError(f"deviations must have shape ({n},), got {radii.shape}")
        if np.any(radii < 0.0):
            raise PfsaError("deviations must be nonnegative")
    else:
        radii = np.zeros(n)

    n_holds = -(-n // hold)
    cells = np.empty((n_holds, 2), dtype=np.int64)
    cells[0] = (rng.integers(rows), rng.integers(cols))
    moves = np.array([off for _, off in COMPASS])
    for k in range(1, n_holds):
        step = moves[rng.integers(len(moves))]
        cells[k, 0] = np.clip(cells[k - 1, 0] + step[0], 0, rows - 1)
        cells[k, 1] = np.clip(cells[k - 1, 1] + step[1], 0, cols - 1)
    targets = np.repeat(cells, hold, axis=0)[:n]

    # Ideal pose i: exactly radii[i] away from target i (or inside it when 0),
    # reached by walking outward from the nearest boundary point toward a
    # random far anchor -- convexity makes the clamped point the nearest one.
    phi = rng.random(n) * (2.0 * math.pi)
    center_x = targets[:, 1] + 0.5
    center_y = targets[:, 0] + 0.5
    far_x = center_x + 10.0 * np.cos(phi)
    far_y = center_y + 10.0 * np.sin(phi)
    zx = np.clip(far_x, targets[:, 1], targets[:, 1] + 1.0)
    zy = np.clip(far_y, targets[:, 0], targets[:, 0] + 1.0)
    norm = np.hypot(far_x - zx, far_y - zy)
    inside = rng.random((n, 2))
    ideal_x = np.where(radii > 0.0, zx + radii * (far_x - zx) / norm,
                       targets[:, 1] + inside[:, 0])
    ideal_y = np.where(radii > 0.0, zy + radii * (far_y - zy) / norm,
                       targets[:, 0] + inside[:, 1])

    src = np.maximum(np.arange(n) - lag, 0)
    poses = np.column_stack([ideal_x[src], ideal_y[src]])
    return TrajectoryLog(
        times=dt * np.arange(n, dtype=np.float64),
        poses=poses,
        targets=targets,
    )
