import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from domgap.errors import ConfigError, FormatError, ShapeError
from domgap.signal import (CsiFrame, KalmanParams, amplitude, frame_stream_to_sample,
                           import_ndjson, kalman_denoise, minmax_normalize, write_ndjson)

components = st.floats(-1e3, 1e3, allow_nan=False)


@pytest.mark.parametrize("re,im,amp", [(3, 4, 5), (0, 0, 0), (1, 0, 1)])
def test_amplitude_examples(re, im, amp):
    assert amplitude(CsiFrame(0, np.array([re + 1j * im])))[0] == amp


@given(arrays(np.float64, 6, elements=components), arrays(np.float64, 6, elements=components))
def test_amplitude_non_negative_and_conjugation_invariant(re, im):
    v = re + 1j * im
    a = amplitude(CsiFrame(0, v))
    assert (a >= 0).all()
    np.testing.assert_array_equal(a, amplitude(CsiFrame(0, np.conj(v))))


def test_frame_rejects_non_finite():
    with pytest.raises(FormatError):
        CsiFrame(0, np.array([np.nan + 0j]))


class TestKalman:
    def test_constant_converges(self):
        out = kalman_denoise(np.full(100, 5.0))
        assert abs(out[-1] - 5.0) < 1e-3

    def test_noise_variance_halved(self):
        rng = np.random.default_rng(2024)
        z = 5.0 + rng.normal(size=10_000)
        out = kalman_denoise(z)
        assert np.var(out - 5.0) <= 0.5 * np.var(z - 5.0)

    def test_single_value(self):
        np.testing.assert_array_equal(kalman_denoise([7.0]), [7.0])

    def test_first_output_is_first_measurement(self):
        z = np.array([3.0, 10.0, -2.0])
        assert kalman_denoise(z)[0] == 3.0

    def test_empty(self):
        with pytest.raises(ShapeError):
            kalman_denoise([])

    def test_monotone_error_towards_constant(self):
        z = np.concatenate([[0.0], np.full(200, 4.0)])
        err = np.abs(kalman_denoise(z, KalmanParams(q=1e-3, r=1e-1))[1:] - 4.0)
        assert (np.diff(err) <= 0).all()

    def test_channels_independent(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(3, 50))
        out = kalman_denoise(z)
        for i in range(3):
            np.testing.assert_array_equal(out[i], kalman_denoise(z[i]))

    def test_matches_textbook_recursion(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=40)
        q, r, p0 = 1e-3, 0.5, 2.0
        est, p = z[0], p0 * r / (p0 + r)
        ref = [est]
        for zk in z[1:]:
            pp = p + q
            k = pp / (pp + r)
            est = est + k * (zk - est)
            p = (1 - k) * pp
            ref.append(est)
        np.testing.assert_allclose(kalman_denoise(z, KalmanParams(q, r, p0)), ref, rtol=1e-12)

    @pytest.mark.parametrize("kw", [{"q": 0}, {"r": -1}, {"p0": 0}])
    def test_invalid_params(self, kw):
        with pytest.raises(ConfigError):
            KalmanParams(**kw)


def _stream(values):
    """One frame per column of a (channels, time) amplitude matrix."""
    return [CsiFrame(float(t), values[:, t].astype(complex)) for t in range(values.shape[1])]


class TestFrameStreamToSample:
    def test_constant_channels(self):
        levels = np.linspace(1.0, 3.0, 6)
        frames = _stream(np.repeat(levels[:, None], 8, axis=1))
        out = frame_stream_to_sample(frames, rows=6, cols=8)
        assert out.min() == 0 and out.max() == 1
        assert (out == out[:, :1]).all()

    def test_resamples_to_target_columns(self):
        rng = np.random.default_rng(0)
        frames = _stream(rng.uniform(1, 2, size=(4, 32)))
        assert frame_stream_to_sample(frames, rows=4, cols=16).shape == (4, 16)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(0, 1, size=(5, 20)) + 1j * rng.uniform(0, 1, size=(5, 20))
        frames = [CsiFrame(t, values[:, t]) for t in range(20)]
        a = frame_stream_to_sample(frames, rows=5, cols=12)
        b = frame_stream_to_sample(frames, rows=5, cols=12)
        assert a.tobytes() == b.tobytes()
        assert a.dtype == np.float32

    def test_too_few_frames(self):
        with pytest.raises(ShapeError):
            frame_stream_to_sample(_stream(np.ones((3, 1))), rows=3, cols=4)

    def test_channel_count_checked(self):
        with pytest.raises(ShapeError):
            frame_stream_to_sample(_stream(np.ones((3, 5))), rows=4, cols=4)

    def test_flat_sample_becomes_zeros(self):
        out = frame_stream_to_sample(_stream(np.full((3, 5), 2.0)), rows=3, cols=4)
        assert not out.any()


def test_normalisation_idempotent():
    rng = np.random.default_rng(9)
    x = minmax_normalize(rng.normal(size=(5, 7)))
    assert x.min() == 0 and x.max() == 1
    np.testing.assert_array_equal(minmax_normalize(x), x)


class TestNdjson:
    def test_three_lines_sorted(self, tmp_path):
        path = tmp_path / "s.ndjson"
        recs = [{"t": 2, "re": [1, 2], "im": [0, 0]}, {"t": 0, "re": [3, 4], "im": [4, 3]},
                {"t": 1, "re": [0, 0], "im": [1, 1]}]
        path.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
        frames = import_ndjson(path)
        assert [f.timestamp for f in frames] == [0, 1, 2]
        np.testing.assert_array_equal(amplitude(frames[0]), [5, 5])

    def test_length_mismatch_names_line(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        path.write_text('{"t": 0, "re": [1], "im": [0]}\n{"t": 1, "re": [1, 2], "im": [0]}\n')
        with pytest.raises(FormatError, match=":2:"):
            import_ndjson(path)

    def test_inconsistent_widths(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        path.write_text('{"t": 0, "re": [1], "im": [0]}\n{"t": 1, "re": [1, 2], "im": [0, 0]}\n')
        with pytest.raises(FormatError, match=":2:"):
            import_ndjson(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.ndjson"
        path.write_text('{"t": 0, "re": [1], "im": [0]}\n\n{"t": 1, "re": [1\n')
        with pytest.raises(FormatError, match=":3:"):
            import_ndjson(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.ndjson"
        path.write_text("")
        assert import_ndjson(path) == []

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        frames = [CsiFrame(float(t), rng.normal(size=6) + 1j * rng.normal(size=6)) for t in range(5)]
        write_ndjson(tmp_path / "rt.ndjson", frames)
        back = import_ndjson(tmp_path / "rt.ndjson")
        for a, b in zip(frames, back):
            assert a.timestamp == b.timestamp
            np.testing.assert_array_equal(a.values, b.values)
