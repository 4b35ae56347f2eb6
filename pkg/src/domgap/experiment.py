"""End-to-end experiment runs: split, domain DCNN, DGE conversion, recogniser, accuracy."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .ahnet import DomainDcnn, convert_dataset, domain_accuracy, train_domain_dcnn
from .dataset import Dataset, load_dataset, split
from .errors import ConfigError
from .recognizers import accuracy, fit_recognizer
from .synth import GeneratorConfig, generate_dataset
from .training import TrainConfig

log = logging.getLogger(__name__)

RECOGNIZERS = ("knn", "svm", "cnn")
PROTOCOLS = ("lodo", "mixed")
REPORT_COLUMNS = ("protocol", "held_domain", "recognizer", "alpha", "with_dge", "accuracy",
                  "domain_classifier_accuracy_on_inputs")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None            # DISET path; None means generate
    generator: GeneratorConfig = GeneratorConfig()
    protocol: str = "lodo"
    held_domain: int = 0
    train_frac: float = 0.8
    alpha: float = 0.1
    label_source: str = "true_label"      # how training samples pick the domain label
    strict_paper_arch: bool = False
    recognizer: str = "cnn"
    k: int = 5
    lam: float = 1e-4
    svm_epochs: int = 50
    train: TrainConfig = TrainConfig()
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        if self.recognizer not in RECOGNIZERS:
            raise ConfigError(f"recognizer must be one of {RECOGNIZERS}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.label_source not in ("true_label", "predicted_label"):
            raise ConfigError("label_source must be true_label or predicted_label")
        if self.dataset is not None and not Path(self.dataset).exists():
            raise ConfigError(f"dataset {self.dataset} does not exist")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ReportRow:
    protocol: str
    held_domain: int | None
    recognizer: str
    alpha: float
    with_dge: bool
    accuracy: float
    domain_classifier_accuracy_on_inputs: float
    wall_time_s: float = 0.0

    def csv_values(self):
        return [self.protocol, "" if self.held_domain is None else self.held_domain,
                self.recognizer, f"{self.alpha:.6g}", int(self.with_dge),
                f"{self.accuracy:.6f}", f"{self.domain_classifier_accuracy_on_inputs:.6f}"]


@dataclass
class RunArtifacts:
    domain_model: DomainDcnn
    recognizers: dict = field(default_factory=dict)   # with_dge -> fitted recogniser
    rows: list = field(default_factory=list)


def load_or_generate(cfg: ExperimentConfig) -> Dataset:
    return load_dataset(cfg.dataset) if cfg.dataset else generate_dataset(cfg.generator)


def split_for(cfg: ExperimentConfig, ds: Dataset):
    return split(ds, cfg.protocol, held_domain=cfg.held_domain, train_frac=cfg.train_frac,
                 seed=cfg.seed)


def _train_cfg(cfg: ExperimentConfig, offset: int) -> TrainConfig:
    return replace(cfg.train, seed=cfg.seed + offset)


def train_domain_model(cfg: ExperimentConfig, train: Dataset) -> DomainDcnn:
    return train_domain_dcnn(train, _train_cfg(cfg, 0), cfg.strict_paper_arch)


def evaluate(cfg: ExperimentConfig, train: Dataset, test: Dataset, domain_model: DomainDcnn,
             with_dge: bool, alpha: float | None = None):
    """Fit the configured recogniser (optionally on DGE-converted data) and score it on ``test``."""
    alpha = cfg.alpha if alpha is None else alpha
    start = time.perf_counter()
    if with_dge:
        train = convert_dataset(domain_model, train, alpha, cfg.label_source)
        test = convert_dataset(domain_model, test, alpha, "predicted_label")
    model = fit_recognizer(cfg.recognizer, train, k=cfg.k, lam=cfg.lam, svm_epochs=cfg.svm_epochs,
                           cnn=_train_cfg(cfg, 1), strict_paper_arch=cfg.strict_paper_arch,
                           seed=cfg.seed)
    acc = accuracy(model.predict(test.x), test.gestures)
    row = ReportRow(cfg.protocol, cfg.held_domain if cfg.protocol == "lodo" else None,
                    cfg.recognizer, alpha, with_dge, acc, domain_accuracy(domain_model, train),
                    time.perf_counter() - start)
    log.info("%s %s alpha=%g dge=%s accuracy=%.4f", cfg.protocol, cfg.recognizer, alpha, with_dge, acc)
    return row, model


def run_experiment(cfg: ExperimentConfig, modes=(True,), ds: Dataset | None = None,
                   domain_model: DomainDcnn | None = None) -> RunArtifacts:
    """One row per entry of ``modes`` (``False`` = baseline without DGE, ``True`` = with DGE)."""
    ds = ds if ds is not None else load_or_generate(cfg)
    train, test = split_for(cfg, ds)
    if domain_model is None:
        domain_model = train_domain_model(cfg, train)
    out = RunArtifacts(domain_model)
    for with_dge in modes:
        row, model = evaluate(cfg, train, test, domain_model, with_dge)
        out.rows.append(row)
        out.recognizers[with_dge] = model
    return out


def run_all_folds(cfg: ExperimentConfig, modes=(False, True), ds: Dataset | None = None) -> list:
    """LODO over every domain in turn; one RunArtifacts per held-out domain."""
    if cfg.protocol != "lodo":
        raise ConfigError("all-fold runs need the lodo protocol")
    ds = ds if ds is not None else load_or_generate(cfg)
    return [run_experiment(replace(cfg, held_domain=d), modes, ds) for d in range(ds.n_domains)]


def sweep_alpha(cfg: ExperimentConfig, grid, ds: Dataset | None = None,
                domain_model: DomainDcnn | None = None) -> tuple[list, DomainDcnn]:
    """Rows for every alpha (ascending) sharing one trained domain DCNN."""
    grid = sorted(float(a) for a in grid)
    if not grid:
        raise ConfigError("alpha grid is empty")
    if grid[0] <= 0:
        raise ConfigError("alpha values must be positive")
    ds = ds if ds is not None else load_or_generate(cfg)
    train, test = split_for(cfg, ds)
    if domain_model is None:
        domain_model = train_domain_model(cfg, train)
    rows = [evaluate(cfg, train, test, domain_model, True, a)[0] for a in grid]
    return rows, domain_model


def alpha_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid, rounded to suppress float drift (0.04..0.20 by 0.01 -> 17 values)."""
    if step <= 0 or stop < start:
        raise ConfigError("alpha grid needs step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def write_report(rows, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(r.csv_values())


def read_report(path) -> list[dict]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, config: dict, rows, files, extra=None) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": config,
        "versions": {"domgap": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "rows": [asdict(r) for r in rows],
        "files": {Path(f).name: sha256(f) for f in files},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    base = [r.accuracy for r in rows if not r.with_dge]
    dge = [r.accuracy for r in rows if r.with_dge]
    if base and len(base) == len(dge):
        manifest["dge_margin"] = float(np.mean(dge) - np.mean(base))
    manifest.update(extra or {})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str), encoding="utf-8")
    return path


def config_fields() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]
