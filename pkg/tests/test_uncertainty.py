"""Deviation pipeline: logs -> delay-corrected histograms -> neighbor probabilities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfsaplan.nav_model import build_2d, build_heading, gamma_of, parse_grid, parse_uncertainty
from pfsaplan.pfsa import PfsaError
from pfsaplan.uncertainty import (
    GAMMA_PRESETS,
    DeviationContour,
    DeviationHistogram,
    TrajectoryLog,
    _neighbor_probabilities,
    delay_corrected,
    deviation_distribution,
    histogram_from_series,
    identify,
    identify_deviation,
    n_intervals,
    parse_contour,
    parse_histogram,
    parse_trajectory_csv,
    point_cell_distance,
    raw_deviation,
    serialize_contour,
    serialize_histogram,
    serialize_trajectory_csv,
    synthesize_log,
    uncontrollable_probabilities,
)

from oracles import point_rect_distance_sampled


def tiny_log(n=3, heading=False):
    poses = np.column_stack([np.linspace(0.2, 0.8, n), np.full(n, 0.5)])
    if heading:
        poses = np.column_stack([poses, np.linspace(0.0, 1.0, n)])
    return TrajectoryLog(
        times=np.arange(n, dtype=float),
        poses=poses,
        targets=np.zeros((n, 2), dtype=np.int64),
    )


def tiny_ball_contour(radius=1e-9):
    """A contour whose deviation ball is far smaller than a cell."""
    return DeviationContour(
        kind="histogram",
        histogram=DeviationHistogram(
            edges=np.array([0.0, radius]), masses=np.array([1.0])
        ),
    )


class TestTrajectoryCsv:
    def test_roundtrip_planar(self):
        log = tiny_log(5)
        text = serialize_trajectory_csv(log)
        back = parse_trajectory_csv(text)
        assert np.array_equal(back.times, log.times)
        assert np.array_equal(back.poses, log.poses)
        assert np.array_equal(back.targets, log.targets)
        assert serialize_trajectory_csv(back) == text

    def test_roundtrip_heading(self):
        log = tiny_log(4, heading=True)
        assert log.has_heading
        back = parse_trajectory_csv(serialize_trajectory_csv(log))
        assert back.has_heading
        assert np.array_equal(back.poses, log.poses)

    def test_header_names_the_columns(self):
        text = serialize_trajectory_csv(tiny_log())
        assert text.splitlines()[0] == "t,x,y,target_row,target_col"
        text = serialize_trajectory_csv(tiny_log(heading=True))
        assert text.splitlines()[0] == "t,x,y,heading,target_row,target_col"

    def test_bad_header_rejected(self):
        with pytest.raises(PfsaError, match="header"):
            parse_trajectory_csv("time,x,y,target_row,target_col\n0,0,0,0,0\n")

    def test_bad_field_count_rejected(self):
        with pytest.raises(PfsaError, match="line 2"):
            parse_trajectory_csv("t,x,y,target_row,target_col\n0,0,0,0\n")

    def test_non_numeric_rejected(self):
        with pytest.raises(PfsaError, match="line 3"):
            parse_trajectory_csv(
                "t,x,y,target_row,target_col\n0,0,0,0,0\n1,a,0,0,0\n"
            )

    def test_empty_rejected(self):
        with pytest.raises(PfsaError, match="empty"):
            parse_trajectory_csv("")
        with pytest.raises(PfsaError, match="empty"):
            TrajectoryLog(
                times=np.empty(0),
                poses=np.empty((0, 2)),
                targets=np.empty((0, 2), dtype=np.int64),
            )

    def test_non_increasing_times_rejected(self):
        with pytest.raises(PfsaError, match="strictly increasing"):
            TrajectoryLog(
                times=np.array([0.0, 1.0, 1.0]),
                poses=np.zeros((3, 2)),
                targets=np.zeros((3, 2), dtype=np.int64),
            )

    def test_negative_target_rejected(self):
        with pytest.raises(PfsaError, match="nonnegative"):
            TrajectoryLog(
                times=np.array([0.0]),
                poses=np.zeros((1, 2)),
                targets=np.array([[-1, 0]]),
            )

    def test_non_finite_pose_rejected(self):
        with pytest.raises(PfsaError, match="non-finite"):
            TrajectoryLog(
                times=np.array([0.0]),
                poses=np.array([[np.nan, 0.0]]),
                targets=np.zeros((1, 2), dtype=np.int64),
            )


class TestRawDeviation:
    def test_inside_target_cell_is_zero(self):
        rng = np.random.default_rng(0)
        n = 200
        targets = rng.integers(0, 5, size=(n, 2))
        poses = np.column_stack(
            [targets[:, 1] + rng.random(n), targets[:, 0] + rng.random(n)]
        )
        log = TrajectoryLog(
            times=np.arange(n, dtype=float), poses=poses, targets=targets
        )
        assert np.all(raw_deviation(log) == 0.0)

    def test_distance_from_edge_is_exact(self):
        # Poses directly west of cell (2, 3) by d: deviation is exactly d.
        ds = np.array([0.25, 0.5, 1.0])
        poses = np.column_stack([3.0 - ds, np.full(3, 2.5)])
        log = TrajectoryLog(
            times=np.arange(3, dtype=float),
            poses=poses,
            targets=np.full((3, 2), (2, 3), dtype=np.int64),
        )
        assert np.array_equal(raw_deviation(log), ds)

    def test_circular_arc_matches_sampled_oracle(self):
        # A circle of radius 2.5 around the center of cell (1, 1).
        angles = np.linspace(0.0, 2.0 * math.pi, 60, endpoint=False)
        poses = np.column_stack(
            [1.5 + 2.5 * np.cos(angles), 1.5 + 2.5 * np.sin(angles)]
        )
        log = TrajectoryLog(
            times=np.arange(60, dtype=float),
            poses=poses,
            targets=np.full((60, 2), (1, 1), dtype=np.int64),
        )
        dev = raw_deviation(log)
        for i, (x, y) in enumerate(poses):
            want = point_rect_distance_sampled(x, y, 1.0, 1.0, 2.0, 2.0)
            assert dev[i] == pytest.approx(want, abs=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(-3.0, 6.0),
        st.floats(-3.0, 6.0),
        st.integers(0, 2),
        st.integers(0, 2),
    )
    def test_point_cell_distance_matches_clamp(self, x, y, row, col):
        cx = min(max(x, float(col)), col + 1.0)
        cy = min(max(y, float(row)), row + 1.0)
        want = math.hypot(x - cx, y - cy)
        assert point_cell_distance(x, y, row, col) == pytest.approx(want, abs=1e-12)


class TestDelayCorrected:
    def test_perfect_tracking_zero_lag(self):
        log = synthesize_log(1, n=600, lag=0)
        series, lag = delay_corrected(log, 0)
        assert lag == 0
        assert np.all(series == 0.0)

    def test_exact_lag_recovered(self):
        log = synthesize_log(2, n=800, lag=17)
        for k in range(n_intervals(log)):
            series, lag = delay_corrected(log, k)
            assert lag == 17
            assert np.all(series == 0.0)

    def test_injected_lag_clusters_at_17(self):
        # Noisy tracking with a 17-sample actuation lag: the per-interval
        # estimates cluster tightly on 17 (hold boundaries can nudge one to 18).
        contour = DeviationContour(kind="gaussian", sigma=0.12)
        log = synthesize_log(3, n=8000, contour=contour, lag=17)
        delays = identify_deviation(log).delays
        assert len(delays) == 40
        assert set(delays) <= {17, 18}
        assert sum(1 for d in delays if d == 17) >= 30

    def test_corrected_mean_matches_half_normal(self):
        sigma = 0.1
        contour = DeviationContour(kind="gaussian", sigma=sigma)
        log = synthesize_log(4, n=4000, contour=contour, lag=9)
        means = []
        for k in range(n_intervals(log)):
            series, lag = delay_corrected(log, k)
            assert lag == 9
            means.append(series.mean())
        want = sigma * math.sqrt(2.0 / math.pi)
        se = sigma * math.sqrt(1.0 - 2.0 / math.pi) / math.sqrt(4000)
        assert np.mean(means) == pytest.approx(want, abs=4 * se)

    def test_window_not_longer_than_search_rejected(self):
        log = synthesize_log(5, n=400, lag=0)
        with pytest.raises(PfsaError, match="delay search window"):
            delay_corrected(log, 0, window=50, max_shift=50)

    def test_interval_out_of_range(self):
        log = synthesize_log(6, n=450, lag=0)
        assert n_intervals(log) == 2
        with pytest.raises(PfsaError, match="out of range"):
            delay_corrected(log, 2)

    def test_log_shorter_than_one_window(self):
        log = synthesize_log(7, n=150, lag=0)
        with pytest.raises(PfsaError, match="full window"):
            identify_deviation(log)


class TestHistograms:
    def test_masses_sum_to_one_and_clip(self):
        series = np.array([0.0, 0.1, 1.9, 2.0, 5.0])
        hist = histogram_from_series(series, bins=4, upper=2.0)
        assert hist.masses.sum() == pytest.approx(1.0, abs=1e-15)
        # 2.0 and 5.0 both land in the last bin.
        assert hist.masses[-1] == pytest.approx(0.6)
        assert np.array_equal(hist.edges, np.array([0.0, 0.5, 1.0, 1.5, 2.0]))

    def test_empty_series_rejected(self):
        with pytest.raises(PfsaError, match="empty"):
            histogram_from_series(np.empty(0))

    def test_negative_values_rejected(self):
        with pytest.raises(PfsaError, match="negative"):
            histogram_from_series(np.array([-0.1]))

    def test_single_histogram_identity(self):
        hist = histogram_from_series(np.array([0.3, 0.7]), bins=8, upper=2.0)
        agg = deviation_distribution([hist])
        assert np.array_equal(agg.masses, hist.masses)
        assert np.array_equal(agg.edges, hist.edges)

    def test_mirror_histograms_average_to_uniform(self):
        edges = np.linspace(0.0, 1.0, 5)
        a = DeviationHistogram(edges=edges, masses=np.array([0.4, 0.1, 0.4, 0.1]))
        b = DeviationHistogram(edges=edges, masses=np.array([0.1, 0.4, 0.1, 0.4]))
        agg = deviation_distribution([a, b])
        assert np.allclose(agg.masses, 0.25, atol=1e-15)

    def test_three_run_mixture_matches_analytic_mean(self):
        edges = np.linspace(0.0, 2.0, 9)
        rng = np.random.default_rng(11)
        hists = []
        for _ in range(3):
            m = rng.random(8)
            hists.append(DeviationHistogram(edges=edges, masses=m / m.sum()))
        agg = deviation_distribution(hists)
        want = np.mean([h.masses for h in hists], axis=0)
        want = want / want.sum()
        assert np.allclose(agg.masses, want, atol=1e-12)
        assert abs(agg.masses.sum() - 1.0) <= 1e-12

    def test_mismatched_bins_rejected(self):
        a = DeviationHistogram(
            edges=np.linspace(0.0, 2.0, 5), masses=np.full(4, 0.25)
        )
        b = DeviationHistogram(
            edges=np.linspace(0.0, 1.0, 5), masses=np.full(4, 0.25)
        )
        with pytest.raises(PfsaError, match="mismatched"):
            deviation_distribution([a, b])
        with pytest.raises(PfsaError, match="at least one"):
            deviation_distribution([])

    def test_invariants_enforced(self):
        edges = np.linspace(0.0, 1.0, 3)
        with pytest.raises(PfsaError, match="sum to 1"):
            DeviationHistogram(edges=edges, masses=np.array([0.5, 0.4]))
        with pytest.raises(PfsaError, match="nonnegative"):
            DeviationHistogram(edges=edges, masses=np.array([-0.5, 1.5]))
        with pytest.raises(PfsaError, match="increasing"):
            DeviationHistogram(
                edges=np.array([0.0, 0.0, 1.0]), masses=np.array([0.5, 0.5])
            )
        with pytest.raises(PfsaError, match="len"):
            DeviationHistogram(edges=edges, masses=np.array([1.0]))

    def test_delays_concatenate_in_order(self):
        edges = np.linspace(0.0, 1.0, 3)
        a = DeviationHistogram(edges=edges, masses=np.array([0.5, 0.5]), delays=(3,))
        b = DeviationHistogram(edges=edges, masses=np.array([1.0, 0.0]), delays=(7,))
        assert deviation_distribution([a, b]).delays == (3, 7)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.0, 3.0), min_size=1, max_size=50))
    def test_histogram_is_a_distribution(self, values):
        hist = histogram_from_series(np.array(values))
        assert np.all(hist.masses >= 0.0)
        assert hist.masses.sum() == pytest.approx(1.0, abs=1e-12)
        assert hist.n_bins == 32
        assert hist.edges[0] == 0.0 and hist.edges[-1] == 2.0


class TestContours:
    def test_parse_gaussian_with_options(self):
        text = "# drift model\nkernel gaussian sigma=0.18\noffset 0.1 -0.05\nanisotropy 1.0 1.4\n"
        c = parse_contour(text)
        assert c.kind == "gaussian"
        assert c.sigma == 0.18
        assert c.offset == (0.1, -0.05)
        assert c.anisotropy == (1.0, 1.4)
        assert parse_contour(serialize_contour(c)) == c

    def test_parse_histogram_kernel_via_loader(self):
        hist = histogram_from_series(np.array([0.1, 0.3, 0.3]), bins=4, upper=1.0)
        files = {"dev.hist": serialize_histogram(hist)}
        c = parse_contour("kernel histogram dev.hist\n", histogram_loader=files.get)
        assert c.kind == "histogram"
        assert np.array_equal(c.histogram.masses, hist.masses)
        assert np.array_equal(c.histogram.edges, hist.edges)

    def test_serialize_histogram_roundtrip(self):
        hist = histogram_from_series(np.array([0.05, 0.4, 1.2, 1.9]), bins=8, upper=2.0)
        back = parse_histogram(serialize_histogram(hist))
        assert np.array_equal(back.edges, hist.edges)
        assert np.array_equal(back.masses, hist.masses)

    def test_parse_errors(self):
        with pytest.raises(PfsaError, match="no kernel"):
            parse_contour("offset 0 0\n")
        with pytest.raises(PfsaError, match="duplicate kernel"):
            parse_contour("kernel gaussian sigma=1\nkernel gaussian sigma=2\n")
        with pytest.raises(PfsaError, match="unknown key"):
            parse_contour("kernel gaussian sigma=1\nspread 2\n")
        with pytest.raises(PfsaError, match="sigma"):
            parse_contour("kernel gaussian width=1\n")
        with pytest.raises(PfsaError, match="histogram_loader"):
            parse_contour("kernel histogram dev.hist\n")
        with pytest.raises(PfsaError, match="line 1"):
            parse_contour("kernel gaussian sigma=abc\n")

    def test_histogram_file_errors(self):
        with pytest.raises(PfsaError, match="contiguous"):
            parse_histogram("0.0 0.5 0.5\n0.6 1.0 0.5\n")
        with pytest.raises(PfsaError, match="sum"):
            parse_histogram("0.0 0.5 0.5\n0.5 1.0 0.4\n")
        with pytest.raises(PfsaError, match="empty"):
            parse_histogram("# nothing\n")
        with pytest.raises(PfsaError, match="malformed"):
            parse_histogram("0.0 0.5\n")

    def test_contour_validation(self):
        with pytest.raises(PfsaError, match="sigma > 0"):
            DeviationContour(kind="gaussian", sigma=0.0)
        with pytest.raises(PfsaError, match="needs a histogram"):
            DeviationContour(kind="histogram")
        with pytest.raises(PfsaError, match="unknown contour kind"):
            DeviationContour(kind="uniform", sigma=1.0)
        with pytest.raises(PfsaError, match="anisotropy"):
            DeviationContour(kind="gaussian", sigma=1.0, anisotropy=(0.0, 1.0))
        with pytest.raises(PfsaError, match="must not carry"):
            DeviationContour(
                kind="gaussian",
                sigma=1.0,
                histogram=tiny_ball_contour().histogram,
            )

    def test_gaussian_radii_are_half_normal(self):
        rng = np.random.default_rng(3)
        c = DeviationContour(kind="gaussian", sigma=0.5)
        radii = c.sample_radii(rng, 40_000)
        assert np.all(radii >= 0.0)
        want = 0.5 * math.sqrt(2.0 / math.pi)
        se = 0.5 * math.sqrt(1.0 - 2.0 / math.pi) / math.sqrt(40_000)
        assert radii.mean() == pytest.approx(want, abs=4 * se)

    def test_histogram_radii_stay_within_support(self):
        hist = DeviationHistogram(
            edges=np.array([0.2, 0.4, 0.6]), masses=np.array([0.75, 0.25])
        )
        c = DeviationContour(kind="histogram", histogram=hist)
        radii = c.sample_radii(np.random.default_rng(4), 10_000)
        assert np.all((radii >= 0.2) & (radii <= 0.6))
        assert np.mean(radii < 0.4) == pytest.approx(0.75, abs=0.02)


def open_nav(rows=5, cols=5):
    lines = ["." * cols for _ in range(rows)]
    lines[rows // 2] = "." * (cols // 2) + "G" + "." * (cols - cols // 2 - 1)
    return build_2d(parse_grid("\n".join(lines) + "\n"), parse_uncertainty(""))


class TestUncontrollableProbabilities:
    def test_containment_gives_gamma_one(self):
        nav = open_nav()
        est = uncontrollable_probabilities(tiny_ball_contour(), nav, 0, samples=50_000)
        assert est.gamma == 1.0
        assert est.total_uncontrollable == 0.0
        assert est.truncated_mass == 0.0
        assert est.uncertainty_text() == ""

    def test_row_is_a_probability_vector(self):
        nav = open_nav()
        c = DeviationContour(kind="gaussian", sigma=0.15)
        est = uncontrollable_probabilities(c, nav, 7, samples=100_000, seed=2)
        assert set(est.probs) == {"stay", "N", "NE", "E", "SE", "S", "SW", "W", "NW"}
        assert all(p >= 0.0 for p in est.probs.values())
        assert sum(est.probs.values()) == pytest.approx(1.0, abs=1e-12)
        assert est.kept == est.samples

    def test_symmetric_contour_symmetric_neighbors(self):
        c = DeviationContour(kind="gaussian", sigma=0.2)
        est = _neighbor_probabilities(c, samples=200_000, seed=1, truncation_tol=1e-3)
        for a, b in (("N", "E"), ("E", "S"), ("S", "W")):
            assert abs(est.probs[a] - est.probs[b]) <= 3 * (est.se[a] + est.se[b])
        for a, b in (("NE", "SE"), ("SE", "SW"), ("SW", "NW")):
            assert abs(est.probs[a] - est.probs[b]) <= 3 * (est.se[a] + est.se[b])
        # Edges are much closer than corners for an isotropic contour.
        assert est.probs["N"] > 5 * est.probs["NE"]

    def test_widening_contour_never_decreases_uncontrollable_mass(self):
        # Same seed couples the draws: scaling sigma scales every radius, and
        # leaving a convex cell is monotone in the radius.
        totals = []
        for sigma in (0.05, 0.1, 0.15, 0.2):
            c = DeviationContour(kind="gaussian", sigma=sigma)
            est = _neighbor_probabilities(c, samples=50_000, seed=8, truncation_tol=1e-3)
            totals.append(est.total_uncontrollable)
        assert all(b >= a for a, b in zip(totals, totals[1:]))
        assert totals[-1] > totals[0]

    def test_doubling_samples_shrinks_se_by_sqrt2(self):
        c = DeviationContour(kind="gaussian", sigma=0.15)
        small = _neighbor_probabilities(c, samples=50_000, seed=3, truncation_tol=1e-3)
        big = _neighbor_probabilities(c, samples=100_000, seed=3, truncation_tol=1e-3)
        for key in ("stay", "N"):
            ratio = big.se[key] / small.se[key]
            assert 0.8 / math.sqrt(2.0) <= ratio <= 1.2 / math.sqrt(2.0)

    def test_wide_contour_reports_truncated_mass(self):
        nav = open_nav()
        c = DeviationContour(kind="gaussian", sigma=0.6)
        with pytest.raises(PfsaError, match="truncated mass"):
            uncontrollable_probabilities(c, nav, 0, samples=20_000)

    def test_offset_skews_in_the_offset_direction(self):
        c = DeviationContour(kind="gaussian", sigma=0.1, offset=(0.4, 0.0))
        est = _neighbor_probabilities(c, samples=50_000, seed=5, truncation_tol=1e-3)
        assert est.probs["E"] > est.probs["W"] + 0.1

    def test_anisotropy_stretches_the_ball(self):
        c = DeviationContour(kind="gaussian", sigma=0.12, anisotropy=(2.0, 0.5))
        est = _neighbor_probabilities(c, samples=50_000, seed=6, truncation_tol=1e-3)
        ew = est.probs["E"] + est.probs["W"]
        ns = est.probs["N"] + est.probs["S"]
        assert ew > 2 * ns

    def test_precondition_errors(self):
        grid = parse_grid(".#.\n...\nG..\n")
        nav = build_2d(grid, parse_uncertainty(""))
        c = DeviationContour(kind="gaussian", sigma=0.1)
        with pytest.raises(PfsaError, match="blocked"):
            uncontrollable_probabilities(c, nav, 1, samples=100)
        with pytest.raises(PfsaError, match="deadlock"):
            uncontrollable_probabilities(c, nav, nav.deadlock_state, samples=100)
        with pytest.raises(PfsaError, match="samples"):
            uncontrollable_probabilities(c, nav, 0, samples=0)
        hnav = build_heading(
            parse_grid("..\nG.\n"), parse_uncertainty(""), headings=4, max_turn_deg=90
        )
        with pytest.raises(PfsaError, match="heading"):
            uncontrollable_probabilities(c, hnav, 0, samples=100)

    def test_determinism(self):
        c = DeviationContour(kind="gaussian", sigma=0.15)
        a = _neighbor_probabilities(c, samples=30_000, seed=7, truncation_tol=1e-3)
        b = _neighbor_probabilities(c, samples=30_000, seed=7, truncation_tol=1e-3)
        assert dict(a.probs) == dict(b.probs)

    def test_text_feeds_the_plant_builders(self):
        nav = open_nav()
        c = DeviationContour(kind="gaussian", sigma=0.18)
        est = uncontrollable_probabilities(c, nav, 0, samples=100_000, seed=9)
        unc = parse_uncertainty(est.uncertainty_text())
        grid = parse_grid("....\n....\n..G.\n....\n")
        built = build_2d(grid, unc)
        assert gamma_of(built) == pytest.approx(est.gamma, abs=1e-12)


class TestIdentifyPipeline:
    def test_closure_recovers_the_generating_contour(self):
        true = DeviationContour(kind="gaussian", sigma=0.12)
        log = synthesize_log(3, n=8000, contour=true, lag=17)
        res = identify(log, samples=200_000, seed=5)
        direct = _neighbor_probabilities(
            true, samples=200_000, seed=6, truncation_tol=1e-3
        )
        for key in res.estimate.probs:
            diff = abs(res.estimate.probs[key] - direct.probs[key])
            assert diff <= 3 * (res.estimate.se[key] + direct.se[key]) + 1e-12

    def test_identified_text_builds_matching_gamma(self):
        true = DeviationContour(kind="gaussian", sigma=0.1)
        log = synthesize_log(12, n=4000, contour=true, lag=5)
        res = identify(log, samples=100_000, seed=1)
        unc = parse_uncertainty(res.uncertainty_text())
        nav = build_2d(parse_grid("...\n.G.\n...\n"), unc)
        assert gamma_of(nav) == pytest.approx(res.gamma, abs=1e-12)
        assert res.delays == res.histogram.delays

    def test_gamma_presets_are_shipped(self):
        assert GAMMA_PRESETS["low_speed"] == 0.973
        assert GAMMA_PRESETS["high_speed"] == 0.93
        with pytest.raises(TypeError):
            GAMMA_PRESETS["low_speed"] = 0.5


class TestSynthesizeLog:
    def test_explicit_deviations_reproduced_exactly(self):
        rng = np.random.default_rng(21)
        devs = rng.random(500) * 0.8
        devs[::7] = 0.0
        log = synthesize_log(22, n=500, deviations=devs, lag=0)
        assert np.allclose(raw_deviation(log), devs, atol=1e-12)

    def test_default_is_perfect_tracking(self):
        log = synthesize_log(23, n=300)
        assert np.all(raw_deviation(log) == 0.0)

    def test_determinism(self):
        a = synthesize_log(24, n=400, contour=DeviationContour(kind="gaussian", sigma=0.1))
        b = synthesize_log(24, n=400, contour=DeviationContour(kind="gaussian", sigma=0.1))
        assert np.array_equal(a.poses, b.poses)
        assert np.array_equal(a.targets, b.targets)

    def test_argument_validation(self):
        with pytest.raises(PfsaError, match="n must"):
            synthesize_log(0, n=0)
        with pytest.raises(PfsaError, match="lag"):
            synthesize_log(0, n=10, lag=-1)
        with pytest.raises(PfsaError, match="not both"):
            synthesize_log(
                0,
                n=10,
                contour=DeviationContour(kind="gaussian", sigma=0.1),
                deviations=np.zeros(10),
            )
        with pytest.raises(PfsaError, match="shape"):
            synthesize_log(0, n=10, deviations=np.zeros(5))
