"""Command-line entry point: ``gkde gen-data | train | eval | predict | analyze``.

Exit codes: 0 success, 1 data or runtime error, 2 configuration error.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import analysis, model_bank
from .config import RunConfig, make_config
from .errors import BankFormatError, ConfigError, ContractError, PlacementError, ShapeError
from .stream import (
    blob_arrays,
    evaluate_stream,
    ingest_csv,
    metrics_csv,
    stream_from_arrays,
    summary_text,
    train_stream,
    write_csv,
)

log = logging.getLogger("gkde")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

DENSITIES = {
    "normal1d": lambda: analysis.standard_normal(1),
    "normal2d": lambda: analysis.standard_normal(2),
    "mixture1d": analysis.gaussian_mixture_1d,
}


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _bool(text):
    low = text.lower()
    if low not in ("true", "false", "1", "0"):
        raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")
    return low in ("true", "1")


def _add_common(p):
    p.add_argument("--config", help="flat JSON file with RunConfig fields")
    p.add_argument("--seed", type=int)


def _add_dataset(p):
    g = p.add_argument_group("dataset")
    g.add_argument("--tasks", type=int)
    g.add_argument("--classes-per-task", type=int, dest="classes_per_task")
    g.add_argument("--input-dim", type=int, dest="input_dim")
    g.add_argument("--sep", type=float, dest="separation")
    g.add_argument("--samples-per-class", type=int, dest="samples_per_class")
    g.add_argument("--cluster-std", type=float, dest="cluster_std")
    g.add_argument("--data", dest="data_path", help="CSV file; synthetic blobs are used when omitted")
    g.add_argument("--partition", dest="partition_path", help='JSON {"tasks": [[labels...], ...]}')
    g.add_argument("--label-column", dest="label_column")
    g.add_argument("--no-header", dest="header", action="store_const", const=False)


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--dim", type=int)
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--n-anchors", type=int, dest="n_anchors")
    g.add_argument("--clip", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float, dest="learning_rate")
    g.add_argument("--weight-decay", type=float, dest="weight_decay")
    g.add_argument("--decoupled-weight-decay", type=_bool, dest="decoupled_weight_decay")
    g.add_argument("--batch-size", type=int, dest="batch_size")
    g.add_argument("--hidden", type=_ints)
    g.add_argument("--activation")
    g.add_argument("--init-gain", type=float, dest="init_gain")
    g.add_argument("--warmup-epochs", type=int, dest="warmup_epochs")
    g.add_argument("--refresh-anchors-every-epoch", dest="refresh_anchors_every_epoch",
                   action="store_const", const=True)
    g.add_argument("--repulsion-prior", dest="repulsion_prior")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkde", description="Online class-incremental learning with GKDE.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic blob CSV and its task partition")
    _add_common(p)
    _add_dataset(p)
    # --dim is the input dimension here, matching the usual blob-generator wording
    p.add_argument("--dim", type=int, dest="input_dim_alias")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--partition-out", help="partition JSON path (default: <out>.partition.json)")

    p = sub.add_parser("train", help="train a model bank over the task stream")
    _add_common(p)
    _add_dataset(p)
    _add_model(p)
    p.add_argument("--bank", dest="bank_path")
    p.add_argument("--metrics", dest="metrics_path")

    p = sub.add_parser("eval", help="evaluate a saved bank on a task stream")
    _add_common(p)
    _add_dataset(p)
    p.add_argument("--bank", dest="bank_path")
    p.add_argument("--metrics", dest="metrics_path")

    p = sub.add_parser("predict", help="predict task and class for one input row")
    p.add_argument("--bank", required=True)
    p.add_argument("--input", required=True, type=_floats, help="comma-separated feature values")
    p.add_argument("--json", action="store_true", help="print the prediction as JSON")

    p = sub.add_parser("analyze", help="Monte-Carlo bias/variance report for the plain KDE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", choices=sorted(DENSITIES), default="normal1d")
    p.add_argument("--z", type=_floats, default=None, help="evaluation point (default: origin)")
    p.add_argument("--h", type=_floats, default=[0.1, 0.2, 0.4])
    p.add_argument("--n", type=_ints, default=[500, 1000, 2000, 4000])
    p.add_argument("--replications", type=int, default=2000)
    p.add_argument("--out", required=True)
    return parser


def _config(args) -> RunConfig:
    names = set(RunConfig.__dataclass_fields__)
    overrides = {k: v for k, v in vars(args).items() if k in names}
    return make_config(args.config, overrides)


def _write_text(path, text):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _read_partition(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: invalid partition JSON: {exc}") from None
    tasks = data.get("tasks") if isinstance(data, dict) else None
    if not isinstance(tasks, list) or not all(isinstance(t, list) for t in tasks):
        raise ContractError(f'{path}: expected {{"tasks": [[labels...], ...]}}')
    return [[int(v) for v in t] for t in tasks]


def _stream(cfg: RunConfig):
    if cfg.data_path:
        if not cfg.partition_path:
            raise ConfigError("partition_path", "a CSV dataset needs a task partition file")
        partition = _read_partition(cfg.partition_path)
        return ingest_csv(cfg.data_path, cfg.label_column, partition, seed=cfg.seed, header=cfg.header)
    X, y, partition = blob_arrays(cfg.tasks, cfg.classes_per_task, cfg.input_dim, cfg.separation,
                                  cfg.samples_per_class, cfg.seed, cfg.cluster_std)
    return stream_from_arrays(X, y, partition, cfg.seed)


def cmd_gen_data(args) -> int:
    if args.input_dim_alias is not None:
        args.input_dim = args.input_dim_alias
    cfg = _config(args)
    X, y, partition = blob_arrays(cfg.tasks, cfg.classes_per_task, cfg.input_dim, cfg.separation,
                                  cfg.samples_per_class, cfg.seed, cfg.cluster_std)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    write_csv(args.out, X, y)
    part_path = args.partition_out or args.out + ".partition.json"
    _write_text(part_path, json.dumps({"tasks": [list(map(int, t)) for t in partition]}) + "\n")
    print(f"wrote {len(y)} rows, {len(set(y.tolist()))} labels to {args.out}")
    print(f"wrote partition to {part_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    stream = _stream(cfg)
    tcfg = cfg.train_config()
    bank = train_stream(stream, tcfg)
    model_bank.save(bank, cfg.bank_path)
    report = evaluate_stream(bank, stream)
    _write_text(cfg.metrics_path, metrics_csv(report))
    sys.stdout.write(summary_text(report))
    print(f"bank: {cfg.bank_path}")
    print(f"metrics: {cfg.metrics_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    bank = model_bank.load(cfg.bank_path)
    report = evaluate_stream(bank, _stream(cfg))
    _write_text(cfg.metrics_path, metrics_csv(report))
    sys.stdout.write(summary_text(report))
    return EXIT_OK


def cmd_predict(args) -> int:
    bank = model_bank.load(args.bank)
    x = np.asarray(args.input, dtype=np.float64)[None, :]
    expected = bank.entries[0].params.input_dim if bank.entries else None
    if expected is not None and x.shape[1] != expected:
        raise ShapeError(f"input has {x.shape[1]} values, bank expects {expected}")
    p = bank.predict(x)
    fields = {
        "task": p.task_id,
        "class": p.class_label,
        "posterior": p.wp_posterior,
        "tp_probability": p.tp_probability,
        "combined_probability": p.combined_probability,
        "combined_log_prob": p.combined_log_prob,
    }
    if args.json:
        print(json.dumps(fields))
    else:
        for k, v in fields.items():
            print(f"{k}: {v!r}" if isinstance(v, float) else f"{k}: {v}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.replications < 100:
        raise ConfigError("replications", "must be >= 100")
    if any(h <= 0 for h in args.h):
        raise ConfigError("h", "bandwidths must be positive")
    if any(n < 1 for n in args.n):
        raise ConfigError("n", "sample sizes must be >= 1")
    density = DENSITIES[args.density]()
    z = [0.0] * density.dim if args.z is None else args.z
    if len(z) != density.dim:
        raise ConfigError("z", f"{args.density} needs a {density.dim}-dimensional point")
    reports = analysis.sweep(density, z, args.h, args.n, args.replications, args.seed)
    _write_text(args.out, analysis.report_csv(reports))
    print(f"wrote {len(reports)} rows to {args.out}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BankFormatError, ContractError, PlacementError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
