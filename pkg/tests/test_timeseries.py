"""
Unit tests for hybrid_mortality.timeseries module.

Tests the series container and its transforms including:
- Log and min-max transforms with provenance replay
- Temporal train/validation/test split
- Supervised window construction for the three modes
- CSV input/output
"""

import math

import pytest
import numpy as np
import sys
sys.path.insert(0, '..')

from hybrid_mortality.exceptions import DegenerateScaleError, DomainError, SplitError, WindowError
from hybrid_mortality.timeseries import (
    MinMaxScaler,
    SplitSpec,
    TimeSeries,
    WindowMode,
    denormalize,
    log_transform,
    make_windows,
    minmax_normalize,
    read_series_csv,
    split,
    write_series_csv,
)


class TestTimeSeries:
    """Tests for the TimeSeries container."""

    def test_labels(self):
        """Test consecutive time labels from the start index."""
        s = TimeSeries([0.01, 0.009, 0.0085], start_index=1950)
        assert len(s) == 3
        assert s.end_index == 1952
        np.testing.assert_array_equal(s.index, [1950, 1951, 1952])

    def test_rejects_empty(self):
        """Test that an empty series is rejected."""
        with pytest.raises(ValueError):
            TimeSeries([])

    def test_rejects_nan(self):
        """Test that NaN values are rejected."""
        with pytest.raises(ValueError, match="index 1"):
            TimeSeries([1.0, np.nan, 2.0])

    def test_values_read_only(self):
        """Test that the stored values cannot be modified in place."""
        s = TimeSeries([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 5.0

    def test_window(self):
        """Test sub-series extraction by time labels."""
        s = TimeSeries(np.arange(10.0), start_index=2000)
        w = s.window(2003, 2005)
        assert w.start_index == 2003
        np.testing.assert_array_equal(w.values, [3.0, 4.0, 5.0])

    def test_window_out_of_range(self):
        """Test that a window beyond the series is rejected."""
        s = TimeSeries(np.arange(10.0), start_index=2000)
        with pytest.raises(ValueError):
            s.window(2005, 2012)


class TestLogTransform:
    """Tests for the natural-log transform."""

    def test_powers_of_e(self):
        """Test log of [1, e, e^2]."""
        out = log_transform(TimeSeries([1.0, math.e, math.e ** 2]))
        np.testing.assert_allclose(out.values, [0.0, 1.0, 2.0], atol=1e-15)

    def test_mortality_value(self):
        """Test log of a typical mortality rate."""
        out = log_transform(TimeSeries([0.010]))
        assert out.values[0] == pytest.approx(-4.605170185988091, rel=1e-14)

    def test_negative_value(self):
        """Test that a negative value raises a domain error naming its index."""
        with pytest.raises(DomainError) as excinfo:
            log_transform(TimeSeries([0.5, -0.1]))
        assert excinfo.value.index == 1

    def test_transform_log_appended(self):
        """Test that the transform is recorded in the provenance log."""
        out = log_transform(TimeSeries([1.0, 2.0]))
        assert [t.name for t in out.transform_log] == ["natural-log"]

    def test_restore_round_trip(self):
        """Test exp(log(x)) == x on random positive series."""
        rng = np.random.default_rng(0)
        raw = TimeSeries(rng.uniform(1e-4, 0.5, 60), start_index=1950)
        restored = log_transform(raw).restore()
        np.testing.assert_allclose(restored.values, raw.values, rtol=1e-12)
        assert restored.start_index == 1950
        assert restored.transform_log == ()


class TestMinMax:
    """Tests for min-max normalization."""

    def test_affine_map(self):
        """Test [2, 4, 6] -> [0, 0.5, 1] with scaler (2, 6)."""
        out, scaler = minmax_normalize(TimeSeries([2.0, 4.0, 6.0]))
        np.testing.assert_allclose(out.values, [0.0, 0.5, 1.0])
        assert (scaler.lo, scaler.hi) == (2.0, 6.0)

    def test_two_points(self):
        """Test the two-point case."""
        out, _ = minmax_normalize(TimeSeries([-1.0, 1.0]))
        np.testing.assert_allclose(out.values, [0.0, 1.0])

    def test_constant_series(self):
        """Test that a constant series cannot be scaled."""
        with pytest.raises(DegenerateScaleError):
            minmax_normalize(TimeSeries([3.0, 3.0, 3.0]))

    def test_single_value(self):
        """Test that a single value cannot be scaled."""
        with pytest.raises(DegenerateScaleError):
            MinMaxScaler.fit([1.0])

    def test_round_trip(self):
        """Test denormalize(normalize(x)) == x on random series."""
        rng = np.random.default_rng(1)
        raw = TimeSeries(rng.normal(-5.0, 2.0, 80))
        normalized, scaler = minmax_normalize(raw)
        back = denormalize(normalized, scaler)
        np.testing.assert_allclose(back.values, raw.values, rtol=1e-12)
        assert back.transform_log == ()

    def test_log_then_minmax_restore(self):
        """Test provenance replay through two stacked transforms."""
        raw = TimeSeries([0.02, 0.015, 0.011, 0.009], start_index=2000)
        normalized, _ = minmax_normalize(log_transform(raw))
        np.testing.assert_allclose(normalized.restore().values, raw.values, rtol=1e-12)


class TestSplit:
    """Tests for the temporal split."""

    def test_annual_protocol(self):
        """Test 1950-2019 with training through 2009: 48 / 12 / 10 points."""
        series = TimeSeries(np.linspace(-3.0, -4.0, 70), start_index=1950)
        train, val, test = split(series, SplitSpec(2009, 0.2, 10))
        assert (len(train), len(val), len(test)) == (48, 12, 10)
        assert train.end_index == 1997
        assert val.start_index == 1998 and val.end_index == 2009
        assert test.start_index == 2010 and test.end_index == 2019

    def test_short_series(self):
        """Test 20 points with training through the 10th: 8 / 2 / 10."""
        series = TimeSeries(np.arange(20.0), start_index=1)
        train, val, test = split(series, SplitSpec(10, 0.2, 10))
        assert (len(train), len(val), len(test)) == (8, 2, 10)

    def test_concatenation_reproduces_series(self):
        """Test that train + val + test is the covered part of the series."""
        series = TimeSeries(np.arange(30.0), start_index=0)
        parts = split(series, SplitSpec(19, 0.25, 10))
        np.testing.assert_array_equal(np.concatenate([p.values for p in parts]), series.values)

    def test_too_short(self):
        """Test that a series without H points after train_end is rejected."""
        series = TimeSeries(np.arange(12.0), start_index=1)
        with pytest.raises(SplitError) as excinfo:
            split(series, SplitSpec(10, 0.2, 10))
        assert excinfo.value.required == 20
        assert excinfo.value.available == 12

    def test_invalid_fraction(self):
        """Test that the validation fraction must lie in (0, 1)."""
        with pytest.raises(ValueError):
            SplitSpec(2009, 1.0, 10)


class TestWindows:
    """Tests for supervised window construction."""

    def test_recursive(self):
        """Test N=10, d=2 recursive: 8 pairs, first ([z1, z2] -> z3)."""
        ds = make_windows(np.arange(1.0, 11.0), 2, WindowMode.recursive())
        assert len(ds) == 8
        np.testing.assert_array_equal(ds.inputs[0], [1.0, 2.0])
        np.testing.assert_array_equal(ds.targets[0], [3.0])

    def test_direct(self):
        """Test N=10, d=2, h=3: 6 pairs mapping lags to the third value ahead."""
        ds = make_windows(np.arange(1.0, 11.0), 2, WindowMode.direct(3))
        assert len(ds) == 6
        for row, target in zip(ds.inputs, ds.targets[:, 0]):
            assert target == row[-1] + 3

    def test_mimo(self):
        """Test N=10, d=2, H=4: 5 pairs of width-4 targets, nearest first."""
        ds = make_windows(np.arange(1.0, 11.0), 2, WindowMode.mimo(4))
        assert ds.targets.shape == (5, 4)
        np.testing.assert_array_equal(ds.targets[0], [3.0, 4.0, 5.0, 6.0])
        np.testing.assert_array_equal(ds.inputs[-1], [5.0, 6.0])
        np.testing.assert_array_equal(ds.targets[-1], [7.0, 8.0, 9.0, 10.0])

    def test_reconstruction(self):
        """Test that flattened recursive windows plus the last target give the series."""
        z = np.random.default_rng(2).normal(size=25)
        ds = make_windows(z, 3, WindowMode.recursive())
        rebuilt = np.concatenate([ds.inputs[:, 0], ds.inputs[-1, 1:], ds.targets[-1]])
        np.testing.assert_array_equal(rebuilt, z)

    def test_counts_closed_form(self):
        """Test window counts against N - d, N - d - h + 1 and N - d - H + 1."""
        for d in range(1, 6):
            for H in range(1, 13):
                for n in range(d + H + 1, 201, 7):
                    z = np.arange(float(n))
                    assert len(make_windows(z, d, WindowMode.recursive())) == n - d
                    assert len(make_windows(z, d, WindowMode.direct(H))) == n - d - H + 1
                    assert len(make_windows(z, d, WindowMode.mimo(H))) == n - d - H + 1

    def test_too_short(self):
        """Test that a series with no full window is rejected."""
        with pytest.raises(WindowError):
            make_windows(np.arange(5.0), 2, WindowMode.mimo(4))

    def test_invalid_lag_order(self):
        """Test that the lag order must be positive."""
        with pytest.raises(WindowError):
            make_windows(np.arange(5.0), 0, WindowMode.recursive())


class TestCsv:
    """Tests for standalone series CSV files."""

    def test_write_read(self, tmp_path):
        """Test that a written series is read back exactly."""
        series = TimeSeries([0.0123456789012345, 0.5, 1e-7], start_index=1990)
        path = tmp_path / "series.csv"
        write_series_csv(series, path)
        back = read_series_csv(path)
        assert back.start_index == 1990
        np.testing.assert_array_equal(back.values, series.values)

    def test_rejects_gaps(self, tmp_path):
        """Test that non-consecutive indices are rejected."""
        path = tmp_path / "gaps.csv"
        path.write_text("index,value\n1,0.1\n3,0.2\n")
        with pytest.raises(ValueError, match="consecutive"):
            read_series_csv(path)
