"""Seeded multi-domain, multi-gesture CSI amplitude benchmark.

Each gesture owns a template made of three sinusoidal ridges in the
(channel, time) plane. Each domain imprints a smooth per-channel gain, a
smooth per-channel additive offset and a temporal warp on every gesture it
performs. Sample noise is drawn from a stream keyed by
(seed, gesture, domain, rep), so generation order never changes the output.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset
from .errors import ConfigError
from .rng import CounterStream, stream_key
from .signal import DEFAULT_COLS, DEFAULT_ROWS, minmax_normalize

# stream purposes
_TEMPLATE, _DOMAIN, _NOISE = 11, 12, 13


@dataclass(frozen=True)
class GeneratorConfig:
    n_gestures: int = 10
    n_domains: int = 10
    reps: int = 20
    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS
    noise: float = 0.05
    gain_strength: float = 0.3
    offset_strength: float = 1.5
    warp_strength: float = 0.1
    gesture_spread: float = 0.1
    seed: int = 42

    def __post_init__(self):
        for name in ("n_gestures", "n_domains", "reps", "rows", "cols"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not 0 <= self.gesture_spread <= 1:
            raise ConfigError(f"gesture_spread must lie in [0, 1], got {self.gesture_spread}")
        for name in ("noise", "gain_strength", "offset_strength", "warp_strength"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.warp_strength >= 1:
            raise ConfigError("warp_strength must be below 1")
        if self.n_gestures > 65535 or self.n_domains > 65535:
            raise ConfigError("label counts must fit in 16 bits")


@dataclass(frozen=True)
class Ridge:
    center: float     # time position, fraction of the window
    width: float      # gaussian width, fraction of the window
    sway: float       # amplitude of the sinusoidal drift of the centre across channels
    freq: float       # drift cycles across all channels
    phase: float
    height: float


def gesture_ridges(seed: int, gesture: int, spread: float = 1.0) -> list[Ridge]:
    """Three ridges per gesture, interpolated between shared base ridges and gesture-specific ones.

    ``spread`` = 1 gives fully independent gestures; smaller values shrink the gesture gap.
    """
    base = CounterStream(stream_key(seed, _TEMPLATE, 0xFFFF)).uniform(18).reshape(3, 6)
    own = CounterStream(stream_key(seed, _TEMPLATE, gesture)).uniform(18).reshape(3, 6)
    u = base + spread * (own - base)
    return [Ridge(center=0.15 + 0.7 * a, width=0.03 + 0.06 * b, sway=0.02 + 0.13 * c,
                  freq=0.5 + 2.5 * d, phase=2 * np.pi * e, height=0.5 + 0.5 * f)
            for a, b, c, d, e, f in u]


def render_template(ridges, rows: int, cols: int, time_warp: float = 1.0) -> np.ndarray:
    """Evaluate the ridge sum on a rows x cols grid; ``time_warp`` stretches time about the centre."""
    r = (np.arange(rows) / rows)[:, None]
    t = (np.arange(cols) / max(cols - 1, 1))[None, :]
    t = 0.5 + (t - 0.5) / time_warp
    out = np.zeros((rows, cols))
    for rd in ridges:
        centre = rd.center + rd.sway * np.sin(2 * np.pi * rd.freq * r + rd.phase)
        out += rd.height * np.exp(-0.5 * ((t - centre) / rd.width) ** 2)
    return out


def _smooth_profile(stream: CounterStream, rows: int) -> np.ndarray:
    # low-rank channel profile: two random cosines over the channel axis, scaled to [-1, 1]
    a = stream.uniform(6)
    r = np.arange(rows) / rows
    prof = (np.cos(2 * np.pi * (0.5 + 1.5 * a[0]) * r + 2 * np.pi * a[1]) * (a[2] * 2 - 1)
            + np.cos(2 * np.pi * (2.0 + 2.0 * a[3]) * r + 2 * np.pi * a[4]) * (a[5] * 2 - 1))
    return prof / max(np.abs(prof).max(), 1e-12)


@dataclass(frozen=True)
class DomainEffect:
    gain: np.ndarray     # per channel
    offset: np.ndarray   # per channel
    warp: float


def domain_effect(cfg: GeneratorConfig, domain: int) -> DomainEffect:
    s = CounterStream(stream_key(cfg.seed, _DOMAIN, domain))
    gain = 1.0 + cfg.gain_strength * _smooth_profile(s, cfg.rows)
    offset = cfg.offset_strength * _smooth_profile(s, cfg.rows)
    warp = 1.0 + cfg.warp_strength * (2 * s.uniform(1)[0] - 1)
    return DomainEffect(gain, offset, warp)


def render_sample(cfg: GeneratorConfig, gesture: int, domain: int, rep: int,
                  ridges=None, effect=None) -> np.ndarray:
    ridges = ridges if ridges is not None else gesture_ridges(cfg.seed, gesture, cfg.gesture_spread)
    effect = effect if effect is not None else domain_effect(cfg, domain)
    clean = render_template(ridges, cfg.rows, cfg.cols, effect.warp)
    x = effect.gain[:, None] * clean + effect.offset[:, None]
    if cfg.noise > 0:
        noise = CounterStream(stream_key(cfg.seed, _NOISE, gesture, domain, rep)).normal(x.size)
        x = x + cfg.noise * noise.reshape(x.shape)
    return minmax_normalize(x).astype(np.float32)


def generate_dataset(cfg: GeneratorConfig = GeneratorConfig()) -> Dataset:
    """All gestures x domains x reps, ordered gesture-major, then domain, then rep."""
    n = cfg.n_gestures * cfg.n_domains * cfg.reps
    x = np.empty((n, cfg.rows, cfg.cols), dtype=np.float32)
    domains = np.empty(n, dtype=np.int64)
    gestures = np.empty(n, dtype=np.int64)
    effects = [domain_effect(cfg, d) for d in range(cfg.n_domains)]
    i = 0
    for g in range(cfg.n_gestures):
        ridges = gesture_ridges(cfg.seed, g, cfg.gesture_spread)
        for d in range(cfg.n_domains):
            for rep in range(cfg.reps):
                x[i] = render_sample(cfg, g, d, rep, ridges, effects[d])
                domains[i], gestures[i] = d, g
                i += 1
    provenance = {
        "generator": "domgap.synth/sinusoidal-ridges-v1",
        "config": asdict(cfg),
        "gesture_names": [f"gesture-{g}" for g in range(cfg.n_gestures)],
        "domain_names": [f"domain-{d}" for d in range(cfg.n_domains)],
    }
    return Dataset(x, domains, gestures, cfg.n_domains, cfg.n_gestures, cfg.seed, provenance)
