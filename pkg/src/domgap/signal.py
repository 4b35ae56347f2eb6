"""CSI acquisition stage: amplitude extraction, Kalman denoising, resampling, normalisation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

DEFAULT_ROWS = 90
DEFAULT_COLS = 128


@dataclass(frozen=True)
class CsiFrame:
    timestamp: float
    values: np.ndarray  # complex, one entry per (link, subcarrier) channel

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise FormatError(f"frame at t={self.timestamp} has non-finite components")


@dataclass(frozen=True)
class KalmanParams:
    q: float = 1e-5   # process variance
    r: float = 1e-2   # measurement variance
    p0: float = 1.0   # initial estimate variance

    def __post_init__(self):
        for name in ("q", "r", "p0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Kalman {name} must be positive, got {getattr(self, name)}")


def amplitude(frame: CsiFrame | np.ndarray) -> np.ndarray:
    values = frame.values if isinstance(frame, CsiFrame) else np.asarray(frame)
    return np.abs(values).astype(np.float64)


def kalman_denoise(series, params: KalmanParams = KalmanParams()) -> np.ndarray:
    """Scalar random-walk Kalman filter applied independently along the last axis.

    ``series`` may be 1-D (one channel) or 2-D (channels x time). The prior for
    the first step is the first measurement, so the first output equals it.
    """
    z = np.asarray(series, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ShapeError("cannot denoise an empty series")
    out = np.empty_like(z)
    est = z[..., 0].copy()
    p = params.p0 * params.r / (params.p0 + params.r)
    out[..., 0] = est
    # the gain sequence does not depend on the data
    for k in range(1, z.shape[-1]):
        p_prior = p + params.q
        gain = p_prior / (p_prior + params.r)
        est += gain * (z[..., k] - est)
        p = (1.0 - gain) * p_prior
        out[..., k] = est
    return out


def resample_time(matrix: np.ndarray, cols: int) -> np.ndarray:
    """Linear interpolation of each row onto ``cols`` evenly spaced instants."""
    n = matrix.shape[1]
    if n == cols:
        return matrix.copy()
    src = np.linspace(0.0, n - 1.0, cols)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = src - lo
    return matrix[:, lo] * (1.0 - frac) + matrix[:, hi] * frac


def minmax_normalize(matrix: np.ndarray) -> np.ndarray:
    """Scale the whole sample to [0, 1]; a sample with no dynamic range becomes all zeros."""
    lo, hi = matrix.min(), matrix.max()
    if hi <= lo:
        return np.zeros_like(matrix)
    return (matrix - lo) / (hi - lo)


def frame_stream_to_sample(frames, params: KalmanParams = KalmanParams(),
                           rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> np.ndarray:
    """frames -> amplitude -> Kalman -> resample to ``cols`` -> min-max. Returns float32 (rows, cols)."""
    frames = list(frames)
    if len(frames) < 2:
        raise ShapeError(f"need at least 2 frames, got {len(frames)}")
    amp = np.stack([amplitude(f) for f in frames], axis=1)
    if amp.shape[0] != rows:
        raise ShapeError(f"frames carry {amp.shape[0]} channels, expected {rows}")
    smooth = kalman_denoise(amp, params)
    return minmax_normalize(resample_time(smooth, cols)).astype(np.float32)


def import_ndjson(path) -> list[CsiFrame]:
    """Read ``{"t": ..., "re": [...], "im": [...]}`` records, one per line, sorted by ``t``."""
    frames = []
    width = None
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t, re, im = rec["t"], rec["re"], rec["im"]
                re = np.asarray(re, dtype=np.float64)
                im = np.asarray(im, dtype=np.float64)
                t = float(t)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed record ({exc})") from None
            if re.ndim != 1 or re.shape != im.shape:
                raise FormatError(f"{path}:{lineno}: re/im lengths differ ({re.size} vs {im.size})")
            if width is None:
                width = re.size
            elif re.size != width:
                raise FormatError(f"{path}:{lineno}: {re.size} channels, earlier lines had {width}")
            try:
                frames.append(CsiFrame(t, re + 1j * im))
            except FormatError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    frames.sort(key=lambda f: f.timestamp)
    return frames


def write_ndjson(path, frames) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps({"t": f.timestamp, "re": f.values.real.tolist(),
                                 "im": f.values.imag.tolist()}) + "\n")
