"""Command-line entry point.

Subcommands: ``experiment1`` (benchmark sweeps), ``distill`` (synthetic-image
pipeline), ``evaluate`` (metrics over a score file), ``boundary`` (decision
grid of a saved 2-D model), ``cv-lambda`` (penalty-weight selection on a
dataset CSV). Every run writes a ``manifest.json`` holding the fully
resolved configuration; passing that manifest back through ``--config``
reproduces the outputs byte for byte.

Exit codes: 0 success, 1 computation/I-O failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigurationError, Seed, load_dataset_csv, save_dataset_csv
from .experiments import (
    DEFAULT_MIXTURE,
    SWEEP_STRATEGIES,
    SyntheticImageConfig,
    logistic_network,
    run_accuracy_vs_n,
    run_distillation_experiment,
    run_imbalance_vs_ece,
    save_distill_csv,
    save_sweep_csv,
    format_distill_table,
    train_boundary_model,
)
from .metrics import (
    compute_report,
    decision_boundary_grid,
    save_boundary_csv,
    save_metrics_csv,
    save_metrics_json,
    save_reliability_csv,
)
from .network import NetworkSpec, Parameters, predict_proba, save_model
from .prob_label import LogisticFeatureModel, logistic_posterior
from .svg import heatmap, line_plot
from .trainers import DEFAULT_LAMBDA_GRID, TrainConfig, cross_validate_lambda

_SCHEMAS = {
    "experiment1": {
        "seed": 0,
        "reps": 100,
        "n_values": list(range(2, 61, 2)),
        "strategies": list(SWEEP_STRATEGIES),
        "test_count_per_class": 1000,
        "imbalance_majority": 10,
        "imbalance_minority_values": list(range(1, 11)),
        "imbalance_strategies": ["hard", "correct-prob"],
        "boundary_ns": [4, 60],
    },
    "distill": {
        "seed": 0,
        "n_images": 505,
        "image_size": 32,
        "train_fraction": 0.7,
        "learning_rate": 0.1,
        "epochs": 120,
        "batch_size": 32,
        "epsilon_smoothing": 0.1,
        "lambda_grid": list(DEFAULT_LAMBDA_GRID),
        "cv_folds": 2,
        "offset_std": 0.08,
        "noise_std": 0.05,
        "class0_prior": 0.62,
    },
    "evaluate": {
        "seed": 0,
        "predictions": None,
        "bins": 10,
        "groups": 10,
    },
    "boundary": {
        "seed": 0,
        "model": None,
        "x_range": [0.0, 1.0],
        "y_range": [0.0, 1.0],
        "resolution": 50,
        "data": None,
    },
    "cv-lambda": {
        "seed": 0,
        "data": None,
        "grid": list(DEFAULT_LAMBDA_GRID),
        "folds": 5,
        "learning_rate": 0.1,
        "epochs": 500,
        "batch_size": 1 << 30,
    },
}


def _load_config_file(path: str, command: str) -> dict:
    doc = json.loads(Path(path).read_text())
    if "command" in doc and "config" in doc:  # a previous run's manifest
        if doc["command"] != command:
            raise ConfigurationError(
                f"manifest was written by {doc['command']!r}, not {command!r}"
            )
        return dict(doc["config"])
    return dict(doc)


def _resolve_config(command: str, args: argparse.Namespace) -> dict:
    config = dict(_SCHEMAS[command])
    if args.config:
        loaded = _load_config_file(args.config, command)
        unknown = set(loaded) - set(config)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config", "out", "quiet") or value is None:
            continue
        if key in config:
            config[key] = value
    return config


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _write_manifest(out: Path, command: str, config: dict, outputs: list[str]) -> None:
    doc = {
        "command": command,
        "config": config,
        "config_sha256": _config_hash(config),
        "versions": {
            "problabel": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def cmd_experiment1(config: dict, out: Path, quiet: bool) -> int:
    seed = Seed(config["seed"])
    test_counts = (config["test_count_per_class"], config["test_count_per_class"])
    _say(quiet, f"accuracy sweep: n in {config['n_values']}, {config['reps']} reps")
    acc_sweep = run_accuracy_vs_n(
        DEFAULT_MIXTURE,
        n_values=config["n_values"],
        reps=config["reps"],
        strategies=tuple(config["strategies"]),
        test_counts=test_counts,
        seed=seed,
    )
    save_sweep_csv(acc_sweep, out / "accuracy_vs_n.csv")
    line_plot(
        out / "accuracy_vs_n.svg",
        acc_sweep.axis,
        {s: acc_sweep.means[s] for s in acc_sweep.strategies},
        title="Accuracy vs training-set size",
        x_label="training instances",
        y_label="test accuracy",
    )
    _say(quiet, "imbalance sweep")
    ece_sweep = run_imbalance_vs_ece(
        DEFAULT_MIXTURE,
        majority=config["imbalance_majority"],
        minority_values=config["imbalance_minority_values"],
        reps=config["reps"],
        strategies=tuple(config["imbalance_strategies"]),
        test_counts=test_counts,
        seed=seed,
    )
    save_sweep_csv(ece_sweep, out / "ece_vs_imbalance.csv")
    line_plot(
        out / "ece_vs_imbalance.svg",
        ece_sweep.axis,
        {s: ece_sweep.means[s] for s in ece_sweep.strategies},
        title="Calibration error vs class imbalance",
        x_label="minority-class instances",
        y_label="ECE",
    )
    outputs = [
        "accuracy_vs_n.csv",
        "accuracy_vs_n.svg",
        "ece_vs_imbalance.csv",
        "ece_vs_imbalance.svg",
    ]
    for n in config["boundary_ns"]:
        for strategy in ("hard", "correct-prob"):
            net, params, pool = train_boundary_model(DEFAULT_MIXTURE, int(n), strategy, seed)
            name = f"boundary_model_{strategy}_n{n}.json"
            save_model(net, params, out / name)
            outputs.append(name)
        data_name = f"boundary_train_n{n}.csv"
        save_dataset_csv(pool, out / data_name)
        outputs.append(data_name)
    _write_manifest(out, "experiment1", config, outputs)
    _say(quiet, f"wrote {len(outputs)} files to {out}")
    return 0


def cmd_distill(config: dict, out: Path, quiet: bool) -> int:
    seed = Seed(config["seed"])
    image_config = SyntheticImageConfig(
        image_size=config["image_size"],
        offset_std=config["offset_std"],
        noise_std=config["noise_std"],
        class0_prior=config["class0_prior"],
    )
    train_config = TrainConfig(
        learning_rate=config["learning_rate"],
        epochs=config["epochs"],
        batch_size=config["batch_size"],
        epsilon_smoothing=config["epsilon_smoothing"],
        seed=seed,
    )
    _say(quiet, f"distillation run: {config['n_images']} images, {config['epochs']} epochs")
    result = run_distillation_experiment(
        image_config,
        train_config,
        seed,
        n=config["n_images"],
        train_fraction=config["train_fraction"],
        lambda_grid=tuple(config["lambda_grid"]),
        cv_folds=config["cv_folds"],
    )
    save_distill_csv(result, out / "distill_metrics.csv")
    table = format_distill_table(result)
    (out / "distill_metrics.txt").write_text(table + "\n")
    (out / "feature_model.json").write_text(
        json.dumps(result.feature_model.to_json(), indent=1) + "\n"
    )
    outputs = ["distill_metrics.csv", "distill_metrics.txt", "feature_model.json"]
    for strategy, report in result.reports.items():
        save_model(result.network, result.params[strategy], out / f"model_{strategy}.json")
        save_reliability_csv(report.reliability_rows, out / f"reliability_{strategy}.csv")
        populated = [r for r in report.reliability_rows if r.count > 0]
        xs = [r.mean_confidence for r in populated]
        line_plot(
            out / f"reliability_{strategy}.svg",
            xs,
            {"model": [r.empirical_accuracy for r in populated], "ideal": xs},
            title=f"Reliability ({strategy} labels)",
            x_label="mean predicted probability",
            y_label="empirical positive rate",
        )
        with open(out / f"loss_trace_{strategy}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(result.loss_traces[strategy]):
                writer.writerow([str(epoch), repr(loss)])
        outputs.extend(
            [
                f"model_{strategy}.json",
                f"reliability_{strategy}.csv",
                f"reliability_{strategy}.svg",
                f"loss_trace_{strategy}.csv",
            ]
        )
    _write_manifest(out, "distill", config, outputs)
    _say(quiet, "chosen lambda: " + repr(result.chosen_lambda))
    _say(quiet, table)
    return 0


def _read_predictions(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["score", "label"]:
            raise ConfigurationError(f"{path}: expected header 'score,label'")
        scores: list[float] = []
        labels: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                score = float(row[0])
                label = int(row[1])
                if not 0 <= label <= 1:
                    raise ValueError
            except (ValueError, IndexError):
                raise ConfigurationError(f"{path}: malformed row at line {line_no}")
            scores.append(score)
            labels.append(label)
    if not scores:
        raise ConfigurationError(f"{path}: no data rows")
    return np.array(scores), np.array(labels)


def cmd_evaluate(config: dict, out: Path, quiet: bool) -> int:
    if not config["predictions"]:
        raise ConfigurationError("evaluate needs a predictions CSV")
    scores, labels = _read_predictions(config["predictions"])
    report = compute_report(scores, labels, bins=config["bins"], groups=config["groups"])
    save_metrics_json(report, out / "metrics.json")
    save_metrics_csv(report, out / "metrics.csv")
    save_reliability_csv(report.reliability_rows, out / "reliability.csv")
    _write_manifest(out, "evaluate", config, ["metrics.json", "metrics.csv", "reliability.csv"])
    if np.isnan(report.auc):
        print("warning: AUC undefined (labels contain a single class)", file=sys.stderr)
    _say(quiet, f"n:        {report.n}")
    _say(quiet, f"accuracy: {report.accuracy:.4f}")
    _say(quiet, "auc:      " + ("undefined" if np.isnan(report.auc) else f"{report.auc:.4f}"))
    _say(quiet, f"ece:      {report.ece:.4f}")
    _say(quiet, f"hl:       {report.hl_statistic:.4f}")
    return 0


def _load_boundary_scorer(path: str):
    doc = json.loads(Path(path).read_text())
    if "weights" in doc and "bias" in doc:
        model = LogisticFeatureModel.from_json(doc)
        if model.weights.size != 2:
            raise ConfigurationError("boundary needs a 2-D model")
        return lambda x, y: logistic_posterior(model, np.array([x, y]))[1]
    spec = NetworkSpec.from_json(doc["spec"])
    params = Parameters.from_json(doc["params"])
    if spec.input_shape != (2,):
        raise ConfigurationError("boundary needs a 2-D model")
    return lambda x, y: float(predict_proba(spec, params, np.array([[x, y]]))[0, 1])


def cmd_boundary(config: dict, out: Path, quiet: bool) -> int:
    if not config["model"]:
        raise ConfigurationError("boundary needs a model file")
    scorer = _load_boundary_scorer(config["model"])
    grid = decision_boundary_grid(
        scorer, config["x_range"], config["y_range"], config["resolution"]
    )
    save_boundary_csv(grid, out / "boundary.csv")
    scatter = None
    if config["data"]:
        data = load_dataset_csv(config["data"])
        scatter = [
            (fv.values[0], fv.values[1], int(y))
            for fv, y in zip(data.inputs, data.hard_labels)
        ]
    heatmap(
        out / "boundary.svg",
        grid.scores,
        grid.xs,
        grid.ys,
        title="Decision boundary",
        contour_level=0.5,
        scatter=scatter,
    )
    _write_manifest(out, "boundary", config, ["boundary.csv", "boundary.svg"])
    _say(quiet, f"boundary grid written to {out}")
    return 0


def cmd_cv_lambda(config: dict, out: Path, quiet: bool) -> int:
    if not config["data"]:
        raise ConfigurationError("cv-lambda needs a dataset CSV")
    data = load_dataset_csv(config["data"])
    if data.soft_labels is None:
        raise ConfigurationError("dataset must carry soft-label columns p0..p{K-1}")
    dim = data.inputs[0].dim
    chosen = cross_validate_lambda(
        logistic_network(dim),
        data,
        tuple(config["grid"]),
        config["folds"],
        TrainConfig(
            learning_rate=config["learning_rate"],
            epochs=config["epochs"],
            batch_size=config["batch_size"],
            seed=Seed(config["seed"]),
        ),
    )
    (out / "cv_lambda.json").write_text(
        json.dumps(
            {"chosen_lambda": chosen, "grid": list(config["grid"]), "folds": config["folds"]},
            indent=1,
        )
        + "\n"
    )
    _write_manifest(out, "cv-lambda", config, ["cv_lambda.json"])
    _say(quiet, f"chosen lambda: {chosen!r}")
    return 0


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _pair(text: str) -> list[float]:
    parts = _float_list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 'lo,hi'")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="problabel")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default="problabel_out", help="output directory")
        p.add_argument("--config", default=None, help="JSON config or prior manifest")
        p.add_argument(
            "--reps", type=int, default=None, help="sweep repetitions (experiment1 only)"
        )
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("experiment1", help="benchmark accuracy and imbalance sweeps")
    common(p)
    p.add_argument("--n-values", dest="n_values", type=_int_list, default=None)

    p = sub.add_parser("distill", help="synthetic-image distillation pipeline")
    common(p)
    p.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--n-images", dest="n_images", type=int, default=None)

    p = sub.add_parser("evaluate", help="metrics over a score,label CSV")
    common(p)
    p.add_argument("predictions", nargs="?", default=None, help="CSV with score,label")

    p = sub.add_parser("boundary", help="decision grid of a saved 2-D model")
    common(p)
    p.add_argument("--model", default=None, help="model JSON file")
    p.add_argument("--x-range", dest="x_range", type=_pair, default=None)
    p.add_argument("--y-range", dest="y_range", type=_pair, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--data", default=None, help="scatter overlay dataset CSV")

    p = sub.add_parser("cv-lambda", help="cross-validate the penalty weight")
    common(p)
    p.add_argument("--data", default=None, help="dataset CSV with soft labels")
    p.add_argument("--grid", type=_float_list, default=None)
    p.add_argument("--folds", type=int, default=None)
    return parser


_HANDLERS = {
    "experiment1": cmd_experiment1,
    "distill": cmd_distill,
    "evaluate": cmd_evaluate,
    "boundary": cmd_boundary,
    "cv-lambda": cmd_cv_lambda,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args.command, args)
    except (ConfigurationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](config, out, args.quiet)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # computation / I-O failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:  # pragma: no cover - console-script shim
    raise SystemExit(main())
