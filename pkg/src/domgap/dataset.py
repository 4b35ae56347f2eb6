"""Dual-labelled sample collections, the DISET container, and train/test splits."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, LabelError, ShapeError
from .rng import CounterStream, stream_key

DISET_MAGIC = b"DISET"
DISET_VERSION = 1


@dataclass(frozen=True)
class LabeledSample:
    sample: np.ndarray
    domain: int
    gesture: int


@dataclass
class Dataset:
    """Samples stacked as an (n, rows, cols) float32 array with per-sample labels."""

    x: np.ndarray
    domains: np.ndarray
    gestures: np.ndarray
    n_domains: int
    n_gestures: int
    seed: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float32)
        self.domains = np.asarray(self.domains, dtype=np.int64)
        self.gestures = np.asarray(self.gestures, dtype=np.int64)
        if self.x.ndim != 3:
            raise ShapeError(f"samples must be stacked as (n, rows, cols), got {self.x.shape}")
        n = len(self.x)
        if self.domains.shape != (n,) or self.gestures.shape != (n,):
            raise ShapeError("label arrays must have one entry per sample")
        if n and not (0 <= self.domains.min() and self.domains.max() < self.n_domains):
            raise LabelError(f"domain labels must lie in [0, {self.n_domains})")
        if n and not (0 <= self.gestures.min() and self.gestures.max() < self.n_gestures):
            raise LabelError(f"gesture labels must lie in [0, {self.n_gestures})")

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i) -> LabeledSample:
        return LabeledSample(self.x[i], int(self.domains[i]), int(self.gestures[i]))

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.x.shape[1:])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.x[idx], self.domains[idx], self.gestures[idx], self.n_domains,
                       self.n_gestures, self.seed, dict(self.provenance))

    def with_samples(self, x: np.ndarray, **provenance) -> "Dataset":
        """Same labels and metadata, new sample values (e.g. after domain-gap elimination)."""
        if x.shape != self.x.shape:
            raise ShapeError(f"replacement samples {x.shape} != {self.x.shape}")
        prov = dict(self.provenance)
        prov.update(provenance)
        return Dataset(x, self.domains, self.gestures, self.n_domains, self.n_gestures,
                       self.seed, prov)

    def cells(self) -> dict[tuple[int, int], np.ndarray]:
        """(gesture, domain) -> sample indices, for non-empty cells."""
        out = {}
        for key in sorted(set(zip(self.gestures.tolist(), self.domains.tolist()))):
            out[key] = np.flatnonzero((self.gestures == key[0]) & (self.domains == key[1]))
        return out


def save_dataset(ds: Dataset, path) -> None:
    header = json.dumps({
        "shape": list(ds.shape),
        "M": ds.n_gestures,
        "N": ds.n_domains,
        "count": len(ds),
        "seed": ds.seed,
        "provenance": ds.provenance,
    }, sort_keys=True).encode("utf-8")
    labels = np.empty((len(ds), 2), dtype="<u2")
    labels[:, 0] = ds.domains
    labels[:, 1] = ds.gestures
    with open(Path(path), "wb") as fh:
        fh.write(DISET_MAGIC)
        fh.write(struct.pack("<HI", DISET_VERSION, len(header)))
        fh.write(header)
        fh.write(ds.x.astype("<f4").tobytes())
        fh.write(labels.tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:5] != DISET_MAGIC:
        raise FormatError(f"{path}: not a DISET file")
    version, hlen = struct.unpack_from("<HI", raw, 5)
    if version != DISET_VERSION:
        raise FormatError(f"{path}: unsupported DISET version {version}")
    off = 11
    try:
        header = json.loads(raw[off:off + hlen])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    off += hlen
    count = header["count"]
    rows, cols = header["shape"]
    nbytes = count * rows * cols * 4
    if len(raw) != off + nbytes + count * 4:
        raise FormatError(f"{path}: payload size does not match header")
    x = np.frombuffer(raw, dtype="<f4", count=count * rows * cols, offset=off).reshape(count, rows, cols)
    labels = np.frombuffer(raw, dtype="<u2", count=2 * count, offset=off + nbytes).reshape(count, 2)
    return Dataset(x.astype(np.float32), labels[:, 0], labels[:, 1], header["N"], header["M"],
                   header["seed"], header.get("provenance", {}))


def split(ds: Dataset, protocol: str = "lodo", *, held_domain: int = 0,
          train_frac: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Leave-one-domain-out, or a stratified random split within every (gesture, domain) cell."""
    if protocol == "lodo":
        if not 0 <= held_domain < ds.n_domains:
            raise ConfigError(f"held_domain {held_domain} outside [0, {ds.n_domains})")
        test = ds.domains == held_domain
        train_idx, test_idx = np.flatnonzero(~test), np.flatnonzero(test)
    elif protocol == "mixed":
        if not 0 < train_frac < 1:
            raise ConfigError(f"train_frac must lie strictly between 0 and 1, got {train_frac}")
        train_idx, test_idx = [], []
        for (g, d), idx in ds.cells().items():
            order = np.argsort(CounterStream(stream_key(seed, 1, g, d)).uniform(len(idx)), kind="stable")
            n_train = int(round(train_frac * len(idx)))
            train_idx.extend(idx[order[:n_train]])
            test_idx.extend(idx[order[n_train:]])
        train_idx, test_idx = np.sort(train_idx), np.sort(test_idx)
    else:
        raise ConfigError(f"unknown split protocol {protocol!r}")
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ConfigError(f"{protocol} split leaves an empty {'train' if len(train_idx) == 0 else 'test'} side")
    return ds.subset(train_idx), ds.subset(test_idx)
