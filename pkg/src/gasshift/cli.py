"""Command-line driver.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric failure.
Option precedence: command-line flag > ``--config`` JSON file > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, datagen, exphouse, mlp, ood
from .similarity import BinningConfig, DivergenceReport, divergence_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "out": None,
    "gas": "Ideal Gas",
    "preset": "exp1",
    "n": 10_000,
    "bins": 50,
    "column": "pressure_atm",
    "epochs": 200,
    "batch_size": 32,
    "step_size": 1e-3,
    "passes": 100,
    "percentile": 95.0,
    "holdout": 0.2,
}

PRESETS = {
    "exp1": datagen.exp1_params,
    "exp2-1": lambda: datagen.exp2_params().first,
    "exp2-2": lambda: datagen.exp2_params().second,
}
SAMPLER_FLAGS = ("mu_T", "sigma_T", "mu_V", "sigma_V", "mu_N", "sigma_N")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None, help="master seed (default 0)")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--config", default=None, help="JSON file with option defaults")

    parser = _Parser(prog="gasshift", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("gases", parents=[common], help="list the built-in van der Waals gas table")

    p = sub.add_parser("generate", parents=[common], help="generate a synthetic gas dataset (CSV + metadata)")
    p.add_argument("--gas", default=None)
    p.add_argument("-n", "--n", type=int, default=None, help="number of records (default 10000)")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None, help="sampler parameter set (default exp1)")
    for name in SAMPLER_FLAGS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None)

    p = sub.add_parser("metrics", parents=[common], help="KL divergence and JS distance between two CSV columns")
    p.add_argument("file_a", help="reference sample (KL direction a || b)")
    p.add_argument("file_b")
    p.add_argument("--column", default=None, help="column to compare (default pressure_atm)")
    p.add_argument("--bins", type=int, default=None)

    p = sub.add_parser("train", parents=[common], help="train the MLP on a dataset CSV and save a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--step-size", dest="step_size", type=float, default=None)

    p = sub.add_parser("predict", parents=[common], help="deterministic and MC-Dropout predictions for a dataset CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--passes", type=int, default=None)
    p.add_argument("--train-data", dest="train_data", default=None, help="training CSV; adds a mahalanobis column")

    for name, help_text in (("exp1", "run experiment 1 (target drift)"), ("exp2", "run experiment 2 (covariate shift)")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("-n", "--n", type=int, default=None)
        p.add_argument("--bins", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--holdout", type=float, default=None)
        if name == "exp2":
            p.add_argument("--passes", type=int, default=None)
            p.add_argument("--percentile", type=float, default=None)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over the optional config file over DEFAULTS."""
    opts = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ValueError(f"config {args.config} must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in loaded.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    return opts


def _sampler_params(opts) -> datagen.SamplerParams:
    base = PRESETS[opts["preset"]]()
    overrides = {k: float(opts[k]) for k in SAMPLER_FLAGS if opts.get(k) is not None}
    return replace(base, **overrides)


def cmd_gases(opts, out):
    table = datagen.builtin_gas_table()
    print(f"{'gas':<16}{'a [L^2 atm/mol^2]':>20}{'b [L/mol]':>12}", file=out)
    for gas in table:
        print(f"{gas.name:<16}{gas.a:>20.4f}{gas.b:>12.4f}", file=out)
    print(f"R = {table.R} L atm/(mol K)", file=out)


def cmd_generate(opts, out):
    gas = datagen.builtin_gas_table().lookup(opts["gas"])
    ds = datagen.generate(gas, _sampler_params(opts), int(opts["n"]), int(opts["seed"]))
    path = opts["out"] or f"{gas.name.lower().replace(' ', '_')}.csv"
    datagen.write_dataset(ds, path)
    print(f"wrote {ds.size} records for {gas.name} to {path}", file=out)


def _column(path, name):
    cols = datagen.read_columns(path)
    if name not in cols:
        raise ValueError(f"{path}: no column {name!r}; available columns: {', '.join(cols)}")
    return cols[name]


def cmd_metrics(opts, out):
    a = _column(opts["file_a"], opts["column"])
    b = _column(opts["file_b"], opts["column"])
    report = divergence_report(a, b, BinningConfig(n_bins=int(opts["bins"])))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DivergenceReport.CSV_HEADER)
    writer.writerow(report.csv_row(Path(opts["file_b"]).stem))


def cmd_train(opts, out):
    ds = datagen.read_dataset(opts["data"])
    cfg = mlp.TrainConfig(
        epochs=int(opts["epochs"]),
        batch_size=int(opts["batch_size"]),
        step_size=float(opts["step_size"]),
        seed=int(opts["seed"]),
    )
    result = mlp.train(ds, mlp.NetworkConfig(), cfg)
    path = opts["out"] or "model.json"
    mlp.save_checkpoint(path, result.params, result.standardizer)
    print(f"trained {cfg.epochs} epochs; final loss {result.loss_trace[-1]:.6g}; checkpoint {path}", file=out)


def cmd_predict(opts, out):
    params, std = mlp.load_checkpoint(opts["model"])
    ds = datagen.read_dataset(opts["data"])
    det = mlp.predict_deterministic(params, std, ds.features)
    mc = mlp.mc_predict(params, std, ds.features, int(opts["passes"]), int(opts["seed"]))
    header = [*datagen.CSV_HEADER, "prediction", "mc_mean", "mc_std"]
    columns = [ds.data, det[:, None], mc.mean[:, None], mc.std[:, None]]
    if opts.get("train_data"):
        profile = ood.fit_profile(datagen.read_dataset(opts["train_data"]).features)
        header.append("mahalanobis")
        columns.append(ood.distances(profile, ds)[:, None])
    table = np.hstack(columns)
    path = opts["out"] or "predictions.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[repr(float(v)) for v in row] for row in table])
    print(f"wrote {len(table)} predictions to {path} (MAPE {exphouse.mape(ds.pressure, det):.4f}%)", file=out)


def _exp_common(opts):
    return dict(
        seed=int(opts["seed"]),
        n=int(opts["n"]),
        holdout=float(opts["holdout"]),
        binning=BinningConfig(n_bins=int(opts["bins"])),
        epochs=int(opts["epochs"]),
    )


def cmd_exp1(opts, out):
    result = exphouse.run_experiment1(**_exp_common(opts))
    out_dir = opts["out"] or "results"
    exphouse.write_exp1(result, out_dir)
    print(f"{'gas':<20}{'KL [nats]':>12}{'JS dist':>10}{'MAPE %':>10}", file=out)
    for r in result.rows:
        print(f"{r.gas:<20}{r.kl:>12.4f}{r.js:>10.4f}{r.mape:>10.3f}", file=out)
    print(f"spearman(KL, MAPE) = {result.kl_vs_mape.spearman:.3f}; results in {out_dir}", file=out)


def cmd_exp2(opts, out):
    result = exphouse.run_experiment2(
        **_exp_common(opts), n_passes=int(opts["passes"]), percentile=float(opts["percentile"])
    )
    out_dir = opts["out"] or "results"
    exphouse.write_exp2(result, out_dir)
    for r in result.summary:
        print(
            f"{r.dataset:<26} KL {r.pressure.kl:.4f}  JS {r.pressure.js_distance:.4f}  "
            f"MAPE {r.mape:.3f}%  above threshold {100 * r.exceedance:.1f}%",
            file=out,
        )
    t = result.threshold
    print(f"threshold: {t.percentile:g}th percentile = {t.value:.4f} (n_train={t.n_train})", file=out)
    print(f"spearman(mahalanobis, APE) = {result.mahalanobis_vs_ape.spearman:.3f}; results in {out_dir}", file=out)


COMMANDS = {
    "gases": cmd_gases,
    "generate": cmd_generate,
    "metrics": cmd_metrics,
    "train": cmd_train,
    "predict": cmd_predict,
    "exp1": cmd_exp1,
    "exp2": cmd_exp2,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve(args)
        COMMANDS[args.command](opts, out)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"gasshift: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, LookupError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"gasshift: error: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
