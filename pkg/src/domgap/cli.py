"""Command-line entry point: ``domgap <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .ahnet import DomainDcnn, convert_dataset, domain_accuracy
from .dataset import Dataset, load_dataset, save_dataset
from .embedding import domain_centroid_distance, export_embedding
from .errors import ConfigError, LabelError, ShapeError
from .experiment import (ExperimentConfig, alpha_grid, run_all_folds, run_experiment,
                         sweep_alpha, write_manifest, write_report)
from .signal import KalmanParams, frame_stream_to_sample, import_ndjson
from .synth import GeneratorConfig, generate_dataset
from .training import TrainConfig

log = logging.getLogger("domgap")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
LABEL_SOURCES = {"true": "true_label", "predicted": "predicted_label"}


def _generator_args(p, seed_flag="--data-seed"):
    g = p.add_argument_group("synthetic benchmark")
    g.add_argument("--gestures", type=int, default=10)
    g.add_argument("--domains", type=int, default=10)
    g.add_argument("--reps", type=int, default=20)
    g.add_argument("--rows", type=int, default=90)
    g.add_argument("--cols", type=int, default=128)
    g.add_argument("--noise", type=float, default=GeneratorConfig.noise)
    g.add_argument("--gain-strength", type=float, default=GeneratorConfig.gain_strength)
    g.add_argument("--offset-strength", type=float, default=GeneratorConfig.offset_strength)
    g.add_argument("--warp-strength", type=float, default=GeneratorConfig.warp_strength)
    g.add_argument("--gesture-spread", type=float, default=GeneratorConfig.gesture_spread,
                   help="1 gives independent gesture templates, 0 makes them identical")
    g.add_argument(seed_flag, dest="data_seed", type=int, default=42, help="generator seed")


def _generator_config(a) -> GeneratorConfig:
    return GeneratorConfig(n_gestures=a.gestures, n_domains=a.domains, reps=a.reps, rows=a.rows,
                           cols=a.cols, noise=a.noise, gain_strength=a.gain_strength,
                           offset_strength=a.offset_strength, warp_strength=a.warp_strength,
                           gesture_spread=a.gesture_spread, seed=a.data_seed)


def _experiment_args(p):
    p.add_argument("--dataset", help="DISET file; the synthetic benchmark is generated if omitted")
    _generator_args(p)
    p.add_argument("--seed", type=int, default=0, help="split and training seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--label-source", choices=sorted(LABEL_SOURCES), default="true",
                   help="domain label used to convert training samples")
    p.add_argument("--strict-paper-arch", action="store_true",
                   help="apply a sigmoid to the CNN output layer before softmax")
    p.add_argument("--recognizer", choices=("knn", "svm", "cnn"), default="cnn")
    p.add_argument("--protocol", choices=("lodo", "mixed"), default="lodo")
    p.add_argument("--held-domain", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--svm-epochs", type=int, default=50)


def _experiment_config(a) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=a.dataset, generator=_generator_config(a), protocol=a.protocol,
        held_domain=a.held_domain, train_frac=a.train_frac, alpha=a.alpha,
        label_source=LABEL_SOURCES[a.label_source], strict_paper_arch=a.strict_paper_arch,
        recognizer=a.recognizer, k=a.k, lam=a.lam, svm_epochs=a.svm_epochs,
        train=TrainConfig(epochs=a.epochs, lr=a.lr, momentum=a.momentum, batch_size=a.batch),
        seed=a.seed, out_dir=a.out)


def cmd_synth(a) -> int:
    ds = generate_dataset(_generator_config(a))
    save_dataset(ds, a.out)
    print(f"wrote {len(ds)} samples to {a.out}")
    return 0


def cmd_run(a) -> int:
    cfg = _experiment_config(a)
    modes = {"dge": (True,), "no-dge": (False,), "compare": (False, True)}[a.mode]
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if a.all_folds:
        runs = run_all_folds(cfg, modes)
        suffixes = [f"_d{d}" for d in range(len(runs))]
    else:
        runs, suffixes = [run_experiment(cfg, modes)], [""]
    rows = [r for res in runs for r in res.rows]
    files = [out / "report.csv"]
    write_report(rows, files[0])
    for res, sfx in zip(runs, suffixes):
        files.append(out / f"domain_dcnn{sfx}.dimdl")
        res.domain_model.save(files[-1])
        for with_dge, model in res.recognizers.items():
            files.append(out / f"recognizer_{cfg.recognizer}_{'dge' if with_dge else 'raw'}{sfx}.dimdl")
            model.save(files[-1])
    write_manifest(out, "run", {**cfg.to_dict(), "all_folds": a.all_folds}, rows, files)
    for r in rows:
        print(f"{r.protocol} held={r.held_domain} {r.recognizer} alpha={r.alpha:g} "
              f"dge={int(r.with_dge)} accuracy={r.accuracy:.4f}")
    return 0


def cmd_sweep(a) -> int:
    cfg = _experiment_config(a)
    grid = ([float(v) for v in a.alphas.split(",")] if a.alphas
            else alpha_grid(a.alpha_start, a.alpha_stop, a.alpha_step))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, domain_model = sweep_alpha(cfg, grid)
    files = [out / "sweep.csv", out / "domain_dcnn.dimdl"]
    write_report(rows, files[0])
    domain_model.save(files[1])
    write_manifest(out, "sweep-alpha", {**cfg.to_dict(), "grid": grid}, rows, files)
    print(f"wrote {len(rows)} rows to {files[0]}")
    return 0


def _maybe_convert(a, ds: Dataset) -> Dataset:
    if a.alpha is None:
        return ds
    if not a.model:
        raise ConfigError("--alpha needs --model to compute sign maps")
    model = DomainDcnn.load(a.model)
    return convert_dataset(model, ds, a.alpha, LABEL_SOURCES[a.label_source])


def cmd_export_embedding(a) -> int:
    ds = _maybe_convert(a, load_dataset(a.dataset))
    scores = export_embedding(ds, a.out)
    print(f"wrote {len(ds)} rows to {a.out}; mean domain-centroid distance "
          f"{domain_centroid_distance(scores, ds.domains):.6f}")
    return 0


def cmd_eval_domain(a) -> int:
    model = DomainDcnn.load(a.model)
    ds = load_dataset(a.dataset)
    if a.alpha is not None:
        ds = convert_dataset(model, ds, a.alpha, LABEL_SOURCES[a.label_source])
    print(f"domain accuracy {domain_accuracy(model, ds):.6f}")
    return 0


def cmd_import(a) -> int:
    params = KalmanParams(a.kalman_q, a.kalman_r, a.kalman_p0)
    base = Path(a.index).parent
    samples, domains, gestures = [], [], []
    with open(a.index, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            frames = import_ndjson(base / rec["path"])
            samples.append(frame_stream_to_sample(frames, params, a.rows, a.cols))
            domains.append(int(rec["domain"]))
            gestures.append(int(rec["gesture"]))
    if not samples:
        raise ConfigError(f"{a.index} lists no recordings")
    n_domains = a.domains or max(domains) + 1
    n_gestures = a.gestures or max(gestures) + 1
    ds = Dataset(np.stack(samples), domains, gestures, n_domains, n_gestures, 0,
                 {"generator": "ndjson-import", "index": str(a.index),
                  "kalman": asdict(params)})
    save_dataset(ds, a.out)
    print(f"wrote {len(ds)} samples to {a.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="domgap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark as a DISET file")
    _generator_args(p, seed_flag="--seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="train, convert and evaluate one configuration")
    _experiment_args(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--dge", dest="mode", action="store_const", const="dge")
    mode.add_argument("--no-dge", dest="mode", action="store_const", const="no-dge")
    mode.add_argument("--compare", dest="mode", action="store_const", const="compare",
                      help="baseline and DGE rows sharing one domain DCNN")
    p.add_argument("--all-folds", action="store_true",
                   help="LODO over every domain in turn (ignores --held-domain)")
    p.set_defaults(func=cmd_run, mode="dge")

    p = sub.add_parser("sweep-alpha", help="evaluate a grid of alpha values")
    _experiment_args(p)
    p.add_argument("--alpha-start", type=float, default=0.04)
    p.add_argument("--alpha-stop", type=float, default=0.20)
    p.add_argument("--alpha-step", type=float, default=0.01)
    p.add_argument("--alphas", help="explicit comma-separated grid (overrides start/stop/step)")
    p.set_defaults(func=cmd_sweep)

    for name, func, hlp in (("export-embedding", cmd_export_embedding, "PCA 2-D projection CSV"),
                            ("eval-domain", cmd_eval_domain, "domain DCNN accuracy on a dataset")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--dataset", required=True)
        p.add_argument("--model", required=name == "eval-domain", help="domain DCNN (DIMDL)")
        p.add_argument("--alpha", type=float, help="convert samples with the DGE first")
        p.add_argument("--label-source", choices=sorted(LABEL_SOURCES), default="predicted")
        if name == "export-embedding":
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("import", help="NDJSON CSI recordings -> DISET")
    p.add_argument("--index", required=True, help="CSV with columns path,domain,gesture")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=90)
    p.add_argument("--cols", type=int, default=128)
    p.add_argument("--domains", type=int, help="domain count (default: max label + 1)")
    p.add_argument("--gestures", type=int, help="gesture count (default: max label + 1)")
    p.add_argument("--kalman-q", type=float, default=1e-5)
    p.add_argument("--kalman-r", type=float, default=1e-2)
    p.add_argument("--kalman-p0", type=float, default=1.0)
    p.set_defaults(func=cmd_import)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, LabelError, ShapeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
