"""
Unit tests for hybrid_mortality.demographic module.

Tests the mortality layer including:
- HMD table parsing, filtering and error reporting
- Synthetic surfaces with known structure
- Key-age series and spline reconstruction of age curves
- Lee-Carter fitting and forecasting
"""

import pytest
import numpy as np
import sys
sys.path.insert(0, '..')

from hybrid_mortality.demographic import (
    ALL_AGES,
    KEY_AGES,
    LeeCarterParams,
    MortalitySurface,
    SyntheticSurfaceParams,
    curves_frame,
    expected_log_rates,
    extract_series,
    fit_lee_carter,
    forecast_lee_carter,
    interpolate_curve,
    interpolate_forecasts,
    parse_surface,
    read_surface,
    serialize_surface,
    synthesize_surface,
    write_surface,
)
from hybrid_mortality.exceptions import DataError, DemographicError, ParseError

HMD_TEXT = """Australia, Death rates (period 1x1)  Last modified: 01 Jan 2020

  Year          Age             Female            Male           Total
1950 0 0.021 0.027 0.024
1950 1 0.0021 0.0026 0.0024
1950 2 0.0011 0.0013 0.0012
1950 110+ 0.6 0.7 0.65
1951 0 0.020 0.026 0.023
1951 1 0.0020 0.0025 0.0023
1951 2 0.0010 0.0012 0.0011
1951 110+ 0.6 0.7 0.65
"""


def replace_line(text, old, new):
    assert old in text
    return text.replace(old, new)


class TestParseSurface:
    """Tests for HMD Mx_1x1 ingestion."""

    def test_grid(self):
        """Test years, ages and the open age group being dropped."""
        surface = parse_surface(HMD_TEXT)
        np.testing.assert_array_equal(surface.years, [1950, 1951])
        np.testing.assert_array_equal(surface.ages, [0, 1, 2])
        assert surface.rates[1, 0, 1] == 0.026
        assert surface.summary() == "2 years, 3 ages, 3 sexes"

    def test_year_filter(self):
        """Test that years outside the range are skipped."""
        surface = parse_surface(HMD_TEXT, first_year=1951)
        np.testing.assert_array_equal(surface.years, [1951])

    def test_missing_value(self):
        """Test that a '.' cell is a data error naming its line."""
        text = replace_line(HMD_TEXT, "1951 1 0.0020 0.0025", "1951 1 . 0.0025")
        with pytest.raises(DataError) as excinfo:
            parse_surface(text)
        assert excinfo.value.line == 9

    def test_missing_value_filtered_out(self):
        """Test that a missing value in a dropped year is ignored."""
        text = replace_line(HMD_TEXT, "1950 1 0.0021", "1950 1 .")
        assert parse_surface(text, first_year=1951).shape == (1, 3, 3)

    def test_non_positive_rate(self):
        """Test that zero rates are rejected."""
        with pytest.raises(DataError):
            parse_surface(replace_line(HMD_TEXT, "1950 2 0.0011", "1950 2 0.0"))

    def test_not_a_number(self):
        """Test that a garbled cell is a parse error."""
        with pytest.raises(ParseError) as excinfo:
            parse_surface(replace_line(HMD_TEXT, "1950 2 0.0011", "1950 2 abc"))
        assert excinfo.value.line == 6
        assert "abc" in excinfo.value.detail

    def test_wrong_field_count(self):
        """Test that a short row is a parse error."""
        with pytest.raises(ParseError):
            parse_surface(replace_line(HMD_TEXT, "1950 2 0.0011 0.0013 0.0012", "1950 2 0.0011"))

    def test_wrong_header(self):
        """Test that a header with other columns is rejected."""
        with pytest.raises(ParseError):
            parse_surface(replace_line(HMD_TEXT, "Male           Total", "Male"))

    def test_no_header(self):
        """Test that a file without a header is rejected."""
        with pytest.raises(ParseError):
            parse_surface("1950 0 0.02 0.03 0.025\n")

    def test_duplicate_row(self):
        """Test that a repeated (year, age) is rejected."""
        with pytest.raises(DataError):
            parse_surface(HMD_TEXT + "1951 2 0.0010 0.0012 0.0011\n")

    def test_incomplete_grid(self):
        """Test that a missing (year, age) row is rejected."""
        with pytest.raises(DataError, match="grid incomplete"):
            parse_surface(replace_line(HMD_TEXT, "1951 1 0.0020 0.0025 0.0023\n", ""))

    def test_file_round_trip(self, tmp_path):
        """Test that a written surface is read back exactly."""
        surface = synthesize_surface(SyntheticSurfaceParams(first_year=1990, last_year=1999), seed=3)
        path = tmp_path / "Mx_1x1.txt"
        write_surface(surface, path)
        back = read_surface(path)
        np.testing.assert_array_equal(back.years, surface.years)
        np.testing.assert_array_equal(back.rates, surface.rates)

    def test_serialized_header(self):
        """Test that serialized text carries the HMD column header."""
        surface = parse_surface(HMD_TEXT)
        assert "Year  Age  Female  Male  Total" in serialize_surface(surface)


class TestMortalitySurface:
    """Tests for the surface container."""

    def test_rejects_non_positive(self):
        """Test that non-positive rates are rejected."""
        rates = np.full((2, 2, 3), 0.01)
        rates[1, 1, 2] = 0.0
        with pytest.raises(DemographicError):
            MortalitySurface([2000, 2001], [0, 1], rates)

    def test_rejects_gaps(self):
        """Test that years must be consecutive."""
        with pytest.raises(DemographicError):
            MortalitySurface([2000, 2002], [0, 1], np.full((2, 2, 3), 0.01))

    def test_select_years(self):
        """Test restriction to a year range."""
        surface = synthesize_surface(SyntheticSurfaceParams(), seed=0)
        sub = surface.select_years(1960, 1969)
        assert sub.shape == (10, 101, 3)
        np.testing.assert_array_equal(sub.rates[0], surface.rates[10])

    def test_unknown_sex(self):
        """Test that only female, male and total are accepted."""
        surface = parse_surface(HMD_TEXT)
        with pytest.raises(DemographicError):
            surface.log_rates("both")

    def test_extract_series(self):
        """Test the crude-rate series of one age and sex."""
        surface = parse_surface(HMD_TEXT)
        series = extract_series(surface, 1, "male")
        assert series.start_index == 1950
        np.testing.assert_array_equal(series.values, [0.0026, 0.0025])

    def test_extract_series_age_outside(self):
        """Test that ages outside the grid are rejected."""
        with pytest.raises(DemographicError):
            extract_series(parse_surface(HMD_TEXT), 40, "total")


class TestSyntheticSurface:
    """Tests for generated surfaces."""

    def test_noise_free(self):
        """Test that zero noise reproduces the expected log rates."""
        params = SyntheticSurfaceParams(noise=0.0)
        surface = synthesize_surface(params, seed=0)
        assert surface.summary() == "70 years, 101 ages, 3 sexes"
        for sex in ("female", "male", "total"):
            np.testing.assert_allclose(surface.log_rates(sex), expected_log_rates(params, sex), atol=1e-12)

    def test_structure(self):
        """Test loadings summing to one and a centered period index."""
        params = SyntheticSurfaceParams()
        assert params.b_x().sum() == pytest.approx(1.0)
        assert params.k_t().sum() == pytest.approx(0.0, abs=1e-9)
        assert np.all(np.diff(params.a_x()[30:]) > 0)

    def test_male_above_female(self):
        """Test the sex offsets."""
        surface = synthesize_surface(SyntheticSurfaceParams(noise=0.0), seed=0)
        assert np.all(surface.rates[:, :, 1] > surface.rates[:, :, 0])

    def test_deterministic(self):
        """Test that equal seeds give equal surfaces."""
        params = SyntheticSurfaceParams(kt_volatility=0.5)
        np.testing.assert_array_equal(synthesize_surface(params, 4).rates, synthesize_surface(params, 4).rates)

    def test_invalid(self):
        """Test that a single year is rejected."""
        with pytest.raises(DemographicError):
            SyntheticSurfaceParams(first_year=2000, last_year=2000)


class TestInterpolation:
    """Tests for key-age spline reconstruction."""

    def test_linear_curve(self):
        """Test that a straight log curve is reproduced at age 35."""
        keys = np.array(KEY_AGES)
        curve = interpolate_curve(keys, np.log(0.001) + 0.08 * keys)
        assert curve.shape == (101,)
        assert curve[35] == pytest.approx(-4.1078, abs=1e-4)

    def test_passes_through_knots(self):
        """Test exact values at the key ages."""
        values = np.random.default_rng(0).normal(-5.0, 1.0, len(KEY_AGES))
        curve = interpolate_curve(KEY_AGES, values)
        np.testing.assert_allclose(curve[list(KEY_AGES)], values, atol=1e-12)

    def test_rows(self):
        """Test that each forecast year is interpolated separately."""
        values = np.random.default_rng(1).normal(size=(10, len(KEY_AGES)))
        curves = interpolate_forecasts(KEY_AGES, values)
        assert curves.shape == (10, len(ALL_AGES))
        np.testing.assert_allclose(curves[3], interpolate_curve(KEY_AGES, values[3]))

    def test_natural_boundary(self):
        """Test zero curvature at the end knots."""
        keys = np.array([0.0, 10.0, 20.0, 30.0])
        curve = interpolate_curve(keys, [0.0, 1.0, 0.0, 1.0], np.array([0.0, 0.01, 0.02, 29.98, 29.99, 30.0]))
        assert curve[0] - 2 * curve[1] + curve[2] == pytest.approx(0.0, abs=1e-7)
        assert curve[3] - 2 * curve[4] + curve[5] == pytest.approx(0.0, abs=1e-7)

    def test_outside_knots(self):
        """Test that extrapolation is refused."""
        with pytest.raises(DemographicError):
            interpolate_curve([10, 20, 30], [1.0, 2.0, 3.0], [5])

    def test_unsorted_knots(self):
        """Test that knots must increase."""
        with pytest.raises(DemographicError):
            interpolate_curve([0, 20, 10], [1.0, 2.0, 3.0], [5])

    def test_curves_frame(self):
        """Test the long table layout sorted by age then year."""
        block = np.arange(6.0).reshape(2, 3)
        frame = curves_frame(block, [2010, 2011], [0, 1, 2])
        assert list(frame.columns) == ["age", "year", "log_rate"]
        assert list(frame["year"]) == [2010, 2011] * 3
        assert list(frame["log_rate"]) == [0.0, 3.0, 1.0, 4.0, 2.0, 5.0]


class TestLeeCarter:
    """Tests for the Lee-Carter baseline."""

    params = SyntheticSurfaceParams(noise=0.0)

    def test_recovers_structure(self):
        """Test that a noise-free surface gives back its loadings and index."""
        fitted = fit_lee_carter(synthesize_surface(self.params, 0), "total")
        np.testing.assert_allclose(fitted.b_x, self.params.b_x(), atol=1e-6)
        np.testing.assert_allclose(fitted.k_t, self.params.k_t(), atol=1e-6)
        np.testing.assert_allclose(fitted.a_x, self.params.a_x(), atol=1e-9)
        assert fitted.drift == pytest.approx(-1.0, abs=1e-6)

    def test_normalization(self):
        """Test sum(b_x) = 1 and sum(k_t) = 0 on a noisy surface."""
        fitted = fit_lee_carter(synthesize_surface(SyntheticSurfaceParams(kt_volatility=0.3), 2), "female")
        assert fitted.b_x.sum() == pytest.approx(1.0)
        assert fitted.k_t.sum() == pytest.approx(0.0, abs=1e-8)

    def test_forecast_extrapolates_drift(self):
        """Test that forecasts follow k_T + h * drift."""
        fitted = fit_lee_carter(synthesize_surface(self.params, 0))
        curves = forecast_lee_carter(fitted, 3)
        assert curves.shape == (3, 101)
        k_last = fitted.k_t[-1]
        for h in range(3):
            expected = fitted.a_x + (k_last + (h + 1) * fitted.drift) * fitted.b_x
            np.testing.assert_allclose(curves[h], expected)

    def test_forecast_matches_truth(self):
        """Test that noise-free extrapolation continues the true surface."""
        full = SyntheticSurfaceParams(noise=0.0, last_year=2029)
        fit_params = SyntheticSurfaceParams(noise=0.0, last_year=2019)
        fitted = fit_lee_carter(synthesize_surface(fit_params, 0))
        truth = expected_log_rates(full, "total")
        # the fit window is centered differently, so compare year-on-year changes
        np.testing.assert_allclose(
            np.diff(forecast_lee_carter(fitted, 10), axis=0), np.diff(truth[70:], axis=0), atol=1e-6
        )

    def test_flat_surface(self):
        """Test that a surface without change gives k_t = 0 and uniform loadings."""
        surface = MortalitySurface([2000, 2001, 2002], [0, 1], np.full((3, 2, 3), 0.01))
        fitted = fit_lee_carter(surface)
        np.testing.assert_array_equal(fitted.k_t, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(fitted.b_x, [0.5, 0.5])
        assert fitted.drift == 0.0

    def test_drift_standard_error(self):
        """Test zero drift uncertainty for a straight period index."""
        fitted = fit_lee_carter(synthesize_surface(self.params, 0))
        assert fitted.drift_standard_error == pytest.approx(0.0, abs=1e-6)

    def test_noisy_drift_within_three_se(self):
        """Test that a wandering index and noisy rates still recover the drift of -1."""
        params = SyntheticSurfaceParams(noise=0.05, kt_volatility=0.3)
        for seed in range(10):
            fitted = fit_lee_carter(synthesize_surface(params, seed), "female")
            assert fitted.drift_standard_error > 0.0
            assert abs(fitted.drift - params.drift) < 3.0 * fitted.drift_standard_error

    def test_record_round_trip(self):
        """Test that a reloaded model forecasts identically."""
        fitted = fit_lee_carter(synthesize_surface(SyntheticSurfaceParams(), 1), "male")
        back = LeeCarterParams.from_record(fitted.to_record())
        np.testing.assert_array_equal(back.ages, fitted.ages)
        np.testing.assert_array_equal(forecast_lee_carter(back, 5), forecast_lee_carter(fitted, 5))

    def test_invalid_horizon(self):
        """Test that H < 1 is rejected."""
        fitted = fit_lee_carter(synthesize_surface(self.params, 0))
        with pytest.raises(DemographicError):
            forecast_lee_carter(fitted, 0)
