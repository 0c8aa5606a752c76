import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickrev.clicks import (
    CLICK_RADIUS_PX,
    CLICK_SIGMA_PX,
    Click,
    EmptyGroundTruth,
    OutOfBounds,
    click_distribution,
    encode_clicks,
    oracle_click,
    sample_training_click,
)
from clickrev.geometry import (
    PIXEL_UNITS,
    ContourPointSet,
    DistanceField,
    EmptyContour,
    PixelSpacing,
    distance_field,
    extract_contour,
    largest_error_point,
)

from conftest import random_blob_mask


def contour_of(*pairs, shape=(40, 40)) -> ContourPointSet:
    return ContourPointSet(np.array(pairs, np.int64).reshape(-1, 2), shape)


def field_px(distances, points=None) -> DistanceField:
    d = np.asarray(distances, dtype=np.float64)
    if points is None:
        points = np.stack([np.zeros(len(d), np.int64), np.arange(len(d), dtype=np.int64)], axis=1)
    return DistanceField(points=points, distances=d, units="px")


class TestEncodeClicks:
    def test_center_value_is_exactly_one(self):
        grid = encode_clicks([Click(20, 20, 1)], (64, 64))
        assert grid[20, 20] == 1.0

    def test_zero_beyond_truncation_radius(self):
        grid = encode_clicks([Click(20, 20, 1)], (64, 64))
        assert grid[20, 31] == 0.0  # d = 11 > 10
        assert grid[42, 20] == 0.0
        rows, cols = np.nonzero(grid)
        d = np.hypot(rows - 20, cols - 20)
        assert d.max() <= CLICK_RADIUS_PX

    def test_value_at_distance_four(self):
        grid = encode_clicks([Click(20, 20, 1)], (64, 64))
        expected = math.exp(-(4.0 ** 2) / (2.0 * CLICK_SIGMA_PX ** 2))
        assert grid[20, 24] == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.4868, abs=5e-5)

    def test_kept_at_exact_radius(self):
        grid = encode_clicks([Click(20, 20, 1)], (64, 64))
        assert grid[20, 30] == pytest.approx(math.exp(-100.0 / (2 * CLICK_SIGMA_PX ** 2)))

    def test_out_of_bounds_click_raises(self):
        with pytest.raises(OutOfBounds):
            encode_clicks([Click(-1, 5, 1)], (16, 16))
        with pytest.raises(OutOfBounds):
            encode_clicks([Click(5, 16, 1)], (16, 16))

    def test_empty_click_list_gives_zero_map(self):
        assert encode_clicks([], (8, 8)).sum() == 0.0

    def test_max_combination_is_monotone_in_clicks(self, rng):
        clicks = [Click(int(rng.integers(64)), int(rng.integers(64)), i + 1) for i in range(4)]
        previous = encode_clicks(clicks[:1], (64, 64))
        for k in range(2, 5):
            current = encode_clicks(clicks[:k], (64, 64))
            assert (current >= previous - 1e-15).all()
            previous = current

    def test_far_apart_clicks_each_peak_at_one(self):
        clicks = [Click(10, 10, 1), Click(10, 40, 2), Click(40, 25, 3)]
        grid = encode_clicks(clicks, (64, 64))
        assert (grid == 1.0).sum() == 3

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_range_always_unit_interval(self, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 6))
        clicks = [Click(int(r.integers(32)), int(r.integers(32)), i + 1) for i in range(n)]
        grid = encode_clicks(clicks, (32, 32))
        assert grid.min() >= 0.0 and grid.max() <= 1.0


class TestClickDistribution:
    def test_uniform_when_distances_equal(self):
        dist = click_distribution(field_px([2.0, 2.0, 2.0, 2.0]))
        np.testing.assert_allclose(dist.probabilities, 0.25)

    def test_two_point_softmax_value(self):
        dist = click_distribution(field_px([1.0, 3.0]), temperature=1.0)
        expected = np.exp([1.0, 3.0])
        expected /= expected.sum()
        np.testing.assert_allclose(dist.probabilities, expected, atol=1e-12)
        assert dist.probabilities[1] == pytest.approx(0.8808, abs=5e-5)

    def test_all_zero_distances_uniform(self):
        dist = click_distribution(field_px([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(dist.probabilities, 1.0 / 3.0)

    def test_normalizes_to_one_large_field(self, rng):
        d = rng.uniform(0, 50, size=10_000)
        dist = click_distribution(field_px(d))
        assert abs(dist.probabilities.sum() - 1.0) <= 1e-9
        assert (dist.probabilities >= 0).all()

    def test_strict_monotonicity_in_distance(self, rng):
        d = rng.uniform(0, 30, size=200)
        p = click_distribution(field_px(d)).probabilities
        order = np.argsort(d)
        assert (np.diff(p[order]) > 0).all() or np.allclose(np.diff(d[order]), 0)
        i, j = int(np.argmin(d)), int(np.argmax(d))
        assert p[j] > p[i]

    def test_sign_flip_prefers_small_errors(self):
        p = click_distribution(field_px([1.0, 3.0]), favor_large_errors=False).probabilities
        assert p[0] > p[1]

    def test_rejects_mm_units(self):
        f = DistanceField(points=np.zeros((2, 2), np.int64), distances=np.array([1.0, 2.0]), units="mm")
        with pytest.raises(ValueError):
            click_distribution(f)

    def test_empty_field_raises(self):
        with pytest.raises(EmptyContour):
            click_distribution(field_px([]))

    def test_temperature_zero_limit_matches_oracle(self, rng):
        for _ in range(20):
            gt = extract_contour(random_blob_mask(rng, 24))
            pred = extract_contour(random_blob_mask(rng, 24))
            if gt.is_empty or pred.is_empty:
                continue
            f = distance_field(gt, pred, PIXEL_UNITS, units="px")
            dist = click_distribution(f, temperature=1e-9)
            best = dist.points[int(np.argmax(dist.probabilities))]
            assert tuple(best) == largest_error_point(gt, pred, PIXEL_UNITS)


class TestSampleTrainingClick:
    def test_degenerate_distribution_always_hits(self, rng):
        from clickrev.clicks import ClickProbability

        dist = ClickProbability(
            points=np.array([[3, 4], [5, 6]], np.int64), probabilities=np.array([0.0, 1.0])
        )
        for _ in range(20):
            click = sample_training_click(dist, rng)
            assert (click.row, click.col) == (5, 6)

    def test_uniform_frequencies_within_three_sigma(self):
        n, draws = 20, 100_000
        dist = click_distribution(field_px(np.zeros(n)))
        rng = np.random.default_rng(7)
        counts = np.zeros(n)
        idx_of = {(0, c): i for i, c in enumerate(range(n))}
        for _ in range(draws):
            click = sample_training_click(dist, rng)
            counts[idx_of[(click.row, click.col)]] += 1
        p = 1.0 / n
        sigma = math.sqrt(p * (1 - p) * draws)
        assert (np.abs(counts - draws * p) <= 3 * sigma).all()

    def test_fixed_seed_reproduces_sequence(self):
        dist = click_distribution(field_px([0.0, 1.0, 2.0, 5.0, 3.0]))
        seq1 = [sample_training_click(dist, np.random.default_rng(42), ordinal=i + 1) for i in range(1)]
        rng_a, rng_b = np.random.default_rng(42), np.random.default_rng(42)
        a = [sample_training_click(dist, rng_a) for _ in range(50)]
        b = [sample_training_click(dist, rng_b) for _ in range(50)]
        assert a == b
        assert seq1[0] == a[0]


class TestOracleClick:
    def test_picks_largest_error_point(self):
        gt = contour_of((0, 0), (0, 3))
        pred = contour_of((0, 1))
        click = oracle_click(gt, pred, PixelSpacing(1, 1))
        assert (click.row, click.col) == (0, 3)

    def test_identity_returns_row_major_first(self):
        c = contour_of((2, 3), (1, 5), (1, 2))
        click = oracle_click(c, c, PixelSpacing(1, 1))
        assert (click.row, click.col) == (1, 2)

    def test_empty_prediction_falls_back_to_seeded_uniform(self):
        gt = contour_of((1, 1), (2, 2), (3, 3), (4, 4))
        empty = ContourPointSet(np.empty((0, 2), np.int64), (40, 40))
        a = oracle_click(gt, empty, rng=np.random.default_rng(5))
        b = oracle_click(gt, empty, rng=np.random.default_rng(5))
        assert a == b
        assert (a.row, a.col) in gt.as_set()

    def test_empty_prediction_without_rng_raises(self):
        gt = contour_of((1, 1))
        empty = ContourPointSet(np.empty((0, 2), np.int64), (40, 40))
        with pytest.raises(ValueError):
            oracle_click(gt, empty)

    def test_empty_ground_truth_raises(self):
        empty = ContourPointSet(np.empty((0, 2), np.int64), (40, 40))
        with pytest.raises(EmptyGroundTruth):
            oracle_click(empty, contour_of((1, 1)))

    def test_click_serialization_round_trip(self):
        click = Click(12, 34, 2)
        assert Click.from_json(click.to_json()) == click
