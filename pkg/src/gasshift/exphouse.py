"""End-to-end pipelines for the two distribution-shift experiments.

Experiment 1 (target drift): train on ideal-gas data, evaluate on the other
gases sampled from the same (T, V, N) distribution.  Experiment 2 (covariate
shift): train on one ideal-gas dataset, evaluate on a held-out subset and on
a second dataset with shifted (T, V, N) distributions, adding MC-Dropout
uncertainty and Mahalanobis distances per point.

Every random stream is derived from one master seed with
:func:`gasshift.datagen.derive_seed` and a fixed stage label, e.g.
``"exp1/data/Xenon"`` or ``"exp2/mc"``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .datagen import Dataset, builtin_gas_table, derive_seed, exp1_params, exp2_params, generate
from .errors import DegenerateInputError
from .mlp import NetworkConfig, TrainConfig, TrainResult, mc_predict, predict_deterministic, train
from .ood import distances, fit_profile, threshold_from_training
from .similarity import BinningConfig, DivergenceReport, divergence_report

SUBSET_LABEL = "Ideal Gas (subset)"
IN_DIST = "in_distribution"
OUT_DIST = "out_of_distribution"


def mape(y_true, y_pred) -> float:
    """Mean absolute percentage error, in percent."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("y_true and y_pred must have the same nonzero length")
    if np.any(y_true == 0):
        raise ValueError("MAPE is undefined for zero targets")
    return float(100.0 * np.mean(np.abs(y_pred - y_true) / np.abs(y_true)))


def _pair(xs, ys):
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.shape != ys.shape or xs.size < 3:
        raise ValueError("correlation needs two equal-length samples of size >= 3")
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        raise DegenerateInputError("correlation is undefined for constant input")
    return xs, ys


def pearson(xs, ys) -> float:
    xs, ys = _pair(xs, ys)
    return float(stats.pearsonr(xs, ys)[0])


def spearman(xs, ys) -> float:
    """Rank correlation; ties receive their average rank."""
    xs, ys = _pair(xs, ys)
    return float(stats.spearmanr(xs, ys)[0])


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    n: int

    @classmethod
    def of(cls, xs, ys) -> "CorrelationReport":
        return cls(pearson(xs, ys), spearman(xs, ys), len(xs))


@dataclass(frozen=True)
class Exp1Row:
    gas: str
    kl: float
    js: float
    mape: float


@dataclass
class Exp1Result:
    rows: list[Exp1Row]
    kl_vs_mape: CorrelationReport
    js_vs_mape: CorrelationReport
    manifest: dict = field(default_factory=dict)
    model: TrainResult | None = field(default=None, repr=False)

    def row(self, gas: str) -> Exp1Row:
        return next(r for r in self.rows if r.gas == gas)


@dataclass(frozen=True)
class Exp2PointRecord:
    set: str
    true_p: float
    mc_mean: float
    mc_std: float
    mahalanobis: float
    ape_pct: float


@dataclass(frozen=True)
class Exp2SummaryRow:
    dataset: str
    pressure: DivergenceReport
    features: dict  # variable -> DivergenceReport on T, V, N
    mape: float
    exceedance: float  # fraction of points above the threshold


@dataclass
class Exp2Result:
    summary: list[Exp2SummaryRow]
    points: list[Exp2PointRecord]
    threshold: object
    mahalanobis_vs_ape: CorrelationReport
    std_vs_ape: CorrelationReport
    manifest: dict = field(default_factory=dict)
    model: TrainResult | None = field(default=None, repr=False)
    test_features: dict = field(default_factory=dict, repr=False)  # set label -> (n, 3) inputs

    def summary_row(self, dataset: str) -> Exp2SummaryRow:
        return next(r for r in self.summary if r.dataset == dataset)

    def column(self, name: str, set_label: str | None = None) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points if set_label is None or p.set == set_label])


def _holdout(dataset: Dataset, fraction: float) -> tuple[Dataset, Dataset]:
    # records are i.i.d., so the trailing block is as good as a random holdout
    n_test = int(round(fraction * dataset.size))
    if not 0 < n_test < dataset.size:
        raise ValueError(f"holdout fraction {fraction} leaves an empty split")
    cut = dataset.size - n_test
    return dataset.take(slice(0, cut)), dataset.take(slice(cut, None))


def _config_dict(net_config, train_config, binning) -> dict:
    return {"network": asdict(net_config), "training": asdict(train_config), "binning": asdict(binning)}


def run_experiment1(
    seed: int = 0,
    n: int = 10_000,
    holdout: float = 0.2,
    binning: BinningConfig = BinningConfig(),
    net_config: NetworkConfig = NetworkConfig(),
    epochs: int = 200,
) -> Exp1Result:
    table = builtin_gas_table()
    params = exp1_params()
    ideal = table.entries[0]
    data_seeds = {g.name: derive_seed(seed, f"exp1/data/{g.name}") for g in table}
    train_config = TrainConfig(epochs=epochs, seed=derive_seed(seed, "exp1/train"))

    full = generate(ideal, params, n, data_seeds[ideal.name])
    train_set, subset = _holdout(full, holdout)
    fit = train(train_set, net_config, train_config)

    def evaluate(label: str, test: Dataset) -> Exp1Row:
        report = divergence_report(train_set.pressure, test.pressure, binning)
        pred = predict_deterministic(fit.params, fit.standardizer, test.features)
        return Exp1Row(label, report.kl, report.js_distance, mape(test.pressure, pred))

    rows = [evaluate(SUBSET_LABEL, subset)]
    for gas in table.entries[1:]:
        rows.append(evaluate(gas.name, generate(gas, params, n, data_seeds[gas.name])))

    kl = [r.kl for r in rows]
    js = [r.js for r in rows]
    err = [r.mape for r in rows]
    manifest = {
        "package_version": __version__,
        "master_seed": seed,
        "n_per_dataset": n,
        "holdout_fraction": holdout,
        "sampler_params": asdict(params),
        "data_seeds": data_seeds,
        "train_seed": train_config.seed,
        "final_train_loss": fit.loss_trace[-1],
        **_config_dict(net_config, train_config, binning),
    }
    return Exp1Result(rows, CorrelationReport.of(kl, err), CorrelationReport.of(js, err), manifest, fit)


def run_experiment2(
    seed: int = 0,
    n: int = 10_000,
    holdout: float = 0.2,
    binning: BinningConfig = BinningConfig(),
    net_config: NetworkConfig = NetworkConfig(),
    epochs: int = 200,
    n_passes: int = 100,
    percentile: float = 95.0,
) -> Exp2Result:
    ideal = builtin_gas_table().entries[0]
    first, second = exp2_params()
    seeds = {
        "data_1": derive_seed(seed, "exp2/data/1"),
        "data_2": derive_seed(seed, "exp2/data/2"),
        "train": derive_seed(seed, "exp2/train"),
        "mc": derive_seed(seed, "exp2/mc"),
    }
    train_config = TrainConfig(epochs=epochs, seed=seeds["train"])

    ds1 = generate(ideal, first, n, seeds["data_1"])
    ds2 = generate(ideal, second, n, seeds["data_2"])
    train_set, in_test = _holdout(ds1, holdout)
    fit = train(train_set, net_config, train_config)

    profile = fit_profile(train_set.features)
    threshold = threshold_from_training(distances(profile, train_set), percentile)

    summary, points = [], []
    for label, set_label, test in (
        ("In distribution (subset)", IN_DIST, in_test),
        ("Out of distribution", OUT_DIST, ds2),
    ):
        pressure_report = divergence_report(train_set.pressure, test.pressure, binning)
        feature_reports = {
            name: divergence_report(train_set.data[:, j], test.data[:, j], binning)
            for j, name in enumerate(("T", "V", "N"))
        }
        det = predict_deterministic(fit.params, fit.standardizer, test.features)
        mc = mc_predict(fit.params, fit.standardizer, test.features, n_passes, seeds["mc"])
        dist = distances(profile, test)
        ape = 100.0 * np.abs(mc.mean - test.pressure) / np.abs(test.pressure)
        summary.append(
            Exp2SummaryRow(
                label,
                pressure_report,
                feature_reports,
                mape(test.pressure, det),
                float(np.mean(threshold.exceeds(dist))),
            )
        )
        points.extend(
            Exp2PointRecord(set_label, float(p), float(m), float(s), float(d), float(a))
            for p, m, s, d, a in zip(test.pressure, mc.mean, mc.std, dist, ape)
        )

    all_dist = np.array([p.mahalanobis for p in points])
    all_std = np.array([p.mc_std for p in points])
    all_ape = np.array([p.ape_pct for p in points])
    manifest = {
        "package_version": __version__,
        "master_seed": seed,
        "n_per_dataset": n,
        "holdout_fraction": holdout,
        "sampler_params": {"dataset_1": asdict(first), "dataset_2": asdict(second)},
        "seeds": seeds,
        "mc_passes": n_passes,
        "percentile": percentile,
        "final_train_loss": fit.loss_trace[-1],
        **_config_dict(net_config, train_config, binning),
    }
    return Exp2Result(
        summary,
        points,
        threshold,
        CorrelationReport.of(all_dist, all_ape),
        CorrelationReport.of(all_std, all_ape),
        manifest,
        fit,
        {IN_DIST: in_test.features, OUT_DIST: ds2.features},
    )


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _update_manifest(out: Path, key: str, manifest: dict):
    path = out / "run_manifest.json"
    doc = json.loads(path.read_text()) if path.exists() else {}
    doc[key] = manifest
    _write_json(path, doc)


def write_exp1(result: Exp1Result, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "exp1_table.csv",
        ("gas", "kl_nats", "js_distance", "mape_pct"),
        [(r.gas, repr(r.kl), repr(r.js), repr(r.mape)) for r in result.rows],
    )
    _write_json(
        out / "exp1_correlation.json",
        {"kl_vs_mape": asdict(result.kl_vs_mape), "js_vs_mape": asdict(result.js_vs_mape)},
    )
    _update_manifest(out, "exp1", result.manifest)
    return [out / "exp1_table.csv", out / "exp1_correlation.json", out / "run_manifest.json"]


EXP2_SUMMARY_HEADER = (
    "dataset", "kl_nats", "js_distance", "mape_pct", "n_a", "n_b", "n_bins", "exceedance_frac",
    "kl_T", "js_T", "kl_V", "js_V", "kl_N", "js_N",
)  # fmt: skip


def write_exp2(result: Exp2Result, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in result.summary:
        p = r.pressure
        row = [r.dataset, repr(p.kl), repr(p.js_distance), repr(r.mape), p.n_a, p.n_b, p.binning.n_bins, repr(r.exceedance)]
        for name in ("T", "V", "N"):
            row += [repr(r.features[name].kl), repr(r.features[name].js_distance)]
        rows.append(row)
    _write_csv(out / "exp2_summary.csv", EXP2_SUMMARY_HEADER, rows)
    _write_csv(
        out / "exp2_points.csv",
        ("set", "true_p", "mc_mean", "mc_std", "mahalanobis", "ape_pct"),
        [(p.set, repr(p.true_p), repr(p.mc_mean), repr(p.mc_std), repr(p.mahalanobis), repr(p.ape_pct)) for p in result.points],
    )
    _write_json(out / "exp2_threshold.json", result.threshold.to_dict())
    manifest = dict(result.manifest)
    manifest["correlations"] = {
        "mahalanobis_vs_ape": asdict(result.mahalanobis_vs_ape),
        "std_vs_ape": asdict(result.std_vs_ape),
    }
    _update_manifest(out, "exp2", manifest)
    return [out / f for f in ("exp2_summary.csv", "exp2_points.csv", "exp2_threshold.json", "run_manifest.json")]
