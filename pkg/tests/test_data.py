import os

import numpy as np
import pytest

from wavecast.data import (
    RawSeries,
    SynthSpec,
    apply_scaler,
    chronological_split,
    invert_scaler,
    load_csv,
    make_windows,
    prepare_datasets,
    standardize,
    synth_series,
    write_csv,
)

ETTH1 = os.environ.get("WAVECAST_ETTH1", "data/ETTh1.csv")


class TestLoadCsv:
    def test_basic_with_date_column(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("date,a,b\n2016-07-01,1.5,2.5\n2016-07-02,3.0,4.0\n")
        s = load_csv(p)
        assert s.column_names == ["a", "b"]
        np.testing.assert_array_equal(s.values, [[1.5, 2.5], [3.0, 4.0]])
        assert s.timestamps == ["2016-07-01", "2016-07-02"]

    def test_no_date_column(self, tmp_path):
        p = tmp_path / "b.csv"
        p.write_text("x,y\n1,2\n3,4\n")
        s = load_csv(p)
        assert s.column_names == ["x", "y"]
        assert s.timestamps is None

    def test_nan_cell_names_row(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("a,b\n1,2\n3,NaN\n5,6\n")
        with pytest.raises(ValueError, match="lines 3"):
            load_csv(p)

    def test_unparseable_rows_listed_up_to_ten(self, tmp_path):
        rows = ["a,b"] + [("x,y" if i % 2 == 0 else "1,2") for i in range(30)]
        p = tmp_path / "d.csv"
        p.write_text("\n".join(rows) + "\n")
        with pytest.raises(ValueError) as exc:
            load_csv(p)
        msg = str(exc.value)
        assert msg.count(",") >= 9 and "more" in msg

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_csv(p)

    def test_header_only(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("a,b\n")
        with pytest.raises(ValueError, match="no data"):
            load_csv(p)

    @pytest.mark.skipif(not os.path.exists(ETTH1), reason="ETTh1.csv not provided")
    def test_etth1_has_seven_channels(self):
        s = load_csv(ETTH1)
        assert s.channels == 7
        assert s.length == 17420


class TestChronologicalSplit:
    def _series(self, n):
        return RawSeries(column_names=["a", "b"],
                         values=np.arange(2 * n, dtype=float).reshape(n, 2))

    def test_standard_ratios(self):
        tr, va, te = chronological_split(self._series(100))
        assert (tr.length, va.length, te.length) == (70, 10, 20)

    def test_floor_then_remainder_to_test(self):
        tr, va, te = chronological_split(self._series(10), (0.5, 0.2, 0.3))
        assert (tr.length, va.length, te.length) == (5, 2, 3)

    def test_partition_property(self):
        s = self._series(97)
        tr, va, te = chronological_split(s, (0.6, 0.2, 0.2))
        np.testing.assert_array_equal(np.vstack([tr.values, va.values, te.values]), s.values)

    def test_bad_ratios(self):
        with pytest.raises(ValueError, match="sum to 1"):
            chronological_split(self._series(10), (0.5, 0.2, 0.2))
        with pytest.raises(ValueError, match="positive"):
            chronological_split(self._series(10), (1.0, 0.0, 0.0))


class TestStandardize:
    def test_train_becomes_zero_mean_unit_std(self):
        rng = np.random.default_rng(0)
        seg = RawSeries(["a", "b"], 5.0 + 2.0 * rng.standard_normal((500, 2)))
        scaler = standardize(seg)
        z = apply_scaler(scaler, seg.values)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)

    def test_invert_round_trip(self):
        rng = np.random.default_rng(1)
        seg = RawSeries(["a"], rng.standard_normal((50, 1)))
        scaler = standardize(seg)
        np.testing.assert_allclose(invert_scaler(scaler, apply_scaler(scaler, seg.values)),
                                   seg.values, atol=1e-12)

    def test_val_test_standardized_with_train_stats(self):
        rng = np.random.default_rng(2)
        series = RawSeries(["a"], np.concatenate([
            rng.standard_normal((70, 1)),  # train at mean 0
            5.0 + rng.standard_normal((30, 1)),  # val/test shifted
        ]))
        tr, va, te = chronological_split(series, (0.7, 0.1, 0.2))
        scaler = standardize(tr)
        z_val = apply_scaler(scaler, va.values)
        assert abs(z_val.mean()) > 2.0  # train stats, not val's own

    def test_zero_variance_channel_named(self):
        seg = RawSeries(["ok", "flat"], np.column_stack([np.arange(10.0), np.full(10, 3.0)]))
        with pytest.raises(ValueError, match="flat"):
            standardize(seg)

    def test_no_leakage(self):
        rng = np.random.default_rng(3)
        series = RawSeries(["a"], rng.standard_normal((100, 1)))
        tr, _, _ = chronological_split(series)
        s1 = standardize(tr)
        series.values[90:] += 100.0  # poke test rows only
        tr2, _, _ = chronological_split(series)
        s2 = standardize(tr2)
        np.testing.assert_array_equal(s1.mean, s2.mean)
        np.testing.assert_array_equal(s1.std, s2.std)


class TestMakeWindows:
    def test_window_count(self):
        ds = make_windows(np.arange(20.0).reshape(10, 2), T=4, T_pred=2)
        assert ds.inputs.shape == (5, 4, 2)
        assert ds.targets.shape == (5, 2, 2)

    def test_first_window_pairing(self):
        vals = np.arange(20.0).reshape(10, 2)
        ds = make_windows(vals, T=4, T_pred=2)
        np.testing.assert_array_equal(ds.inputs[0], vals[0:4])
        np.testing.assert_array_equal(ds.targets[0], vals[4:6])

    def test_every_window_contiguous(self):
        vals = np.arange(60.0).reshape(20, 3)
        ds = make_windows(vals, T=5, T_pred=3)
        for i in range(ds.inputs.shape[0]):
            np.testing.assert_array_equal(ds.inputs[i], vals[i : i + 5])
            np.testing.assert_array_equal(ds.targets[i], vals[i + 5 : i + 8])

    def test_too_short_segment(self):
        with pytest.raises(ValueError, match="at least"):
            make_windows(np.zeros((5, 1)), T=4, T_pred=2, split_tag="val")

    def test_windows_do_not_straddle_splits(self):
        rng = np.random.default_rng(4)
        series = RawSeries(["a"], rng.standard_normal((100, 1)))
        train, val, test = prepare_datasets(series, T=4, T_pred=2)
        scaler = train.scaler
        z = apply_scaler(scaler, series.values)
        # every window of each split must come from that split's rows alone
        np.testing.assert_array_equal(val.inputs[0], z[70:74])
        np.testing.assert_array_equal(val.targets[-1], z[78:80])
        np.testing.assert_array_equal(test.inputs[0], z[80:84])
        assert train.targets[-1].base is not None  # views into the segment, no copies beyond it


def test_prepare_datasets_counts():
    rng = np.random.default_rng(5)
    series = RawSeries(["a"], rng.standard_normal((100, 1)))
    train, val, test = prepare_datasets(series, T=4, T_pred=2)
    assert train.split_tag == "train" and val.split_tag == "val" and test.split_tag == "test"
    assert train.inputs.shape[0] == 70 - 6 + 1
    assert val.inputs.shape[0] == 10 - 6 + 1
    assert test.inputs.shape[0] == 20 - 6 + 1
    assert train.scaler is val.scaler is test.scaler


class TestSynthSeries:
    def test_exact_periodicity(self):
        spec = SynthSpec(length=200, channels=2, frequencies=[0.05], amplitudes=[1.0],
                         noise_std=0.0, trend_slope=0.0, seed=0)
        s = synth_series(spec)
        period = 20  # 1 / 0.05
        np.testing.assert_allclose(s.values[:-period], s.values[period:], atol=1e-9)

    def test_noise_only_sample_std(self):
        spec = SynthSpec(length=10_000, channels=1, frequencies=[0.1], amplitudes=[0.0],
                         noise_std=0.5, seed=1)
        s = synth_series(spec)
        assert abs(s.values.std() - 0.5) < 0.05

    def test_seeded_determinism(self):
        a = synth_series(SynthSpec(seed=9, length=100))
        b = synth_series(SynthSpec(seed=9, length=100))
        np.testing.assert_array_equal(a.values, b.values)

    def test_trend(self):
        s = synth_series(SynthSpec(length=100, channels=1, frequencies=[0.1],
                                   amplitudes=[0.0], noise_std=0.0, trend_slope=0.5))
        np.testing.assert_allclose(np.diff(s.values[:, 0]), 0.5, atol=1e-12)

    def test_mismatched_spec_rejected(self):
        with pytest.raises(ValueError, match="equal length"):
            SynthSpec(frequencies=[0.1], amplitudes=[1.0, 2.0])


def test_write_csv_load_csv_round_trip(tmp_path):
    s = synth_series(SynthSpec(length=50, channels=3, seed=2))
    p = tmp_path / "synth.csv"
    write_csv(s, p)
    s2 = load_csv(p)
    assert s2.column_names == s.column_names
    np.testing.assert_allclose(s2.values, s.values, atol=1e-12)


def test_nan_in_first_cell_is_not_a_date_column(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("a,b\nNaN,2\n3,4\n")
    with pytest.raises(ValueError, match="lines 2"):
        load_csv(p)
