"""Monte Carlo ensemble training and the training-set-size study.

One network is trained per propagated trajectory, so the parameter
uncertainty carried into the synthetic data re-emerges as spread across a
population of equally plausible models.  Alongside the population builder
this module provides nonparametric summaries of the per-member metric
histograms, a convergence study of final validation error against
training-set size, and a flat-file layout for trained populations.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensemble import EnsembleDataset
from .narx import (NarxConfig, NarxDataset, build_member_dataset,
                   feature_names, fit_scalers, regressor_matrix)
from .neural import (DivergenceError, MlpModel, MlpSpec, TrainConfig, forward,
                     init, load_model, metric_mae, metric_mse, save_model,
                     train)
from .rng import stream

SPLIT_NAMES = ("train", "validation", "test")

_SUMMARY_SPLITS = ("validation", "test")
_METRIC_NAMES = ("mse", "mae")


@dataclass(frozen=True)
class MemberRecord:
    """One trained member with its source parameter row and split metrics."""

    member: int
    theta_row: int
    model: MlpModel
    mse: dict[str, float]
    mae: dict[str, float]

    @property
    def epochs(self) -> int:
        return self.model.epochs_trained


@dataclass
class EnsembleModel:
    """Population of networks trained on one Monte Carlo data ensemble.

    Members are ordered by member index regardless of training order, and
    every member shares the architecture and the scaler layout; only the
    scaler statistics differ because each member is scaled on its own
    training rows."""

    spec: MlpSpec
    target: str
    narx: NarxConfig
    members: list[MemberRecord]
    diverged: tuple[int, ...] = ()

    def __post_init__(self):
        for rec in self.members:
            if rec.model.spec != self.spec:
                raise ValueError("members must share one architecture")
            if rec.model.scalers is None or \
                    rec.model.scalers.feature_lo.shape[0] != self.spec.input_dim:
                raise ValueError("member scalers must match the input width")

    @property
    def n_members(self) -> int:
        return len(self.members)

    def models(self) -> list[MlpModel]:
        return [rec.model for rec in self.members]


def member_seed(master_seed: int, member: int) -> int:
    """Per-member training seed derived from (master seed, member index)."""
    return int(stream(master_seed, "mc-member", member).integers(2 ** 63))


def mc_training(ensemble_data: EnsembleDataset, spec: MlpSpec,
                cfg: TrainConfig, target: str, narx_cfg: NarxConfig,
                members: Sequence[int] | None = None,
                max_divergence_fraction: float = 0.05) -> EnsembleModel:
    """Train one network per trajectory under independent derived seeds.

    Each member gets its own regressor dataset, initialization, and shuffle
    stream, all derived from ``cfg.seed`` and the member index, so results
    do not depend on execution order.  Members whose loss diverges are
    dropped and reported; when more than ``max_divergence_fraction`` of the
    requested members diverge the run aborts, naming them."""
    if members is None:
        members = range(ensemble_data.n_members)
    members = [int(k) for k in members]
    if not members:
        raise ValueError("at least one member is required")

    records: list[MemberRecord] = []
    diverged: list[int] = []
    for k in members:
        dataset = build_member_dataset(ensemble_data, k, target, narx_cfg)
        seed_k = member_seed(cfg.seed, k)
        model = init(spec, stream(seed_k, "init"))
        try:
            fitted = train(model, dataset, replace(cfg, seed=seed_k))
        except DivergenceError:
            diverged.append(k)
            continue
        mse, mae = {}, {}
        for split in SPLIT_NAMES:
            X, y = dataset.rows(split)
            pred = forward(fitted, X)
            mse[split] = metric_mse(pred, y)
            mae[split] = metric_mae(pred, y)
        records.append(MemberRecord(member=k,
                                    theta_row=ensemble_data.row_indices[k],
                                    model=fitted, mse=mse, mae=mae))

    if len(diverged) > max_divergence_fraction * len(members):
        raise RuntimeError(
            f"training diverged for {len(diverged)} of {len(members)} "
            f"members: {sorted(diverged)}")
    records.sort(key=lambda rec: rec.member)
    return EnsembleModel(spec=spec, target=target, narx=narx_cfg,
                         members=records, diverged=tuple(sorted(diverged)))


# -- histogram summaries -----------------------------------------------------------


@dataclass(frozen=True)
class MetricStats:
    """Nonparametric spread of one metric across the member population."""

    min: float
    max: float
    median: float
    std: float

    def __post_init__(self):
        if not self.min <= self.median <= self.max:
            raise ValueError("median must sit between min and max")


@dataclass(frozen=True)
class MetricSummary:
    """min/max/median/std per metric on the validation and test splits."""

    stats: dict[tuple[str, str], MetricStats]
    epochs_min: int
    epochs_max: int

    def get(self, split: str, metric: str) -> MetricStats:
        return self.stats[(split, metric)]


def summarize(ensemble: EnsembleModel) -> MetricSummary:
    """Population statistics of the member metrics (std is population std)."""
    if not ensemble.members:
        raise ValueError("summary needs at least one member")
    stats = {}
    for split in _SUMMARY_SPLITS:
        for metric in _METRIC_NAMES:
            vals = np.array([getattr(rec, metric)[split]
                             for rec in ensemble.members])
            stats[(split, metric)] = MetricStats(
                min=float(vals.min()), max=float(vals.max()),
                median=float(np.median(vals)), std=float(vals.std()))
    epochs = [rec.epochs for rec in ensemble.members]
    return MetricSummary(stats=stats, epochs_min=min(epochs),
                         epochs_max=max(epochs))


def epochs_histogram(ensemble: EnsembleModel) -> dict[int, int]:
    """Member count per epochs-trained value, by ascending epoch count."""
    counts: dict[int, int] = {}
    for rec in ensemble.members:
        counts[rec.epochs] = counts.get(rec.epochs, 0) + 1
    return dict(sorted(counts.items()))


# -- training-set-size study -------------------------------------------------------


def _rank_vector(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    ranks[order] = np.arange(1.0, values.shape[0] + 1.0)
    for v in np.unique(values):
        tie = values == v
        if tie.sum() > 1:
            ranks[tie] = ranks[tie].mean()
    return ranks


def spearman_rho(a, b) -> float:
    """Rank correlation with average ranks on ties."""
    ra, rb = _rank_vector(a), _rank_vector(b)
    if ra.shape != rb.shape or ra.shape[0] < 2:
        raise ValueError("need two equally long sequences of length >= 2")
    if np.ptp(ra) == 0.0 or np.ptp(rb) == 0.0:
        raise ValueError("rank correlation is undefined for constant input")
    return float(np.corrcoef(ra, rb)[0, 1])


@dataclass(frozen=True)
class SizePoint:
    """Mean and std of final validation metrics at one training-set size."""

    size: int
    mse_mean: float
    mse_std: float
    mae_mean: float
    mae_std: float


@dataclass(frozen=True)
class DataSizeCurve:
    points: tuple[SizePoint, ...]
    repeats: int

    def spearman_mse(self) -> float:
        """Trend statistic: rank correlation of mean MSE against size."""
        return spearman_rho([p.size for p in self.points],
                            [p.mse_mean for p in self.points])


def pooled_dataset(ensemble: EnsembleDataset, target: str,
                   cfg: NarxConfig) -> NarxDataset:
    """Every member's regressor rows in one dataset with shared scalers.

    Rows keep member-major, time-minor order and inherit each target
    sample's split through its step segment, exactly as in the per-member
    datasets.  Scaling statistics come from the pooled training rows so
    subsets of different sizes stay on one scale."""
    if ensemble.split is None:
        raise ValueError("ensemble must be split before building regressors")
    block_ids = ensemble.block_ids()
    owner = {}
    for name, blocks in ensemble.split.items():
        for b in blocks:
            owner[b] = name
    xs, ts, labels = [], [], []
    for traj in ensemble.trajectories:
        series = traj.series(target)
        record = np.zeros(series.shape[0], dtype=int)
        X, t, rows = regressor_matrix(traj.inputs, series, cfg, record)
        xs.append(X)
        ts.append(t)
        labels.extend(owner[b] for b in block_ids[rows])
    X = np.vstack(xs)
    t = np.concatenate(ts)
    labels = np.array(labels)
    split_rows = {name: np.flatnonzero(labels == name)
                  for name in ensemble.split}
    if split_rows["train"].shape[0] == 0:
        raise ValueError("training split contains no regressor rows")
    scalers = fit_scalers(X[split_rows["train"]], t[split_rows["train"]])
    return NarxDataset(X=scalers.scale_features(X), y=scalers.scale_target(t),
                       scalers=scalers, split_rows=split_rows,
                       feature_names=feature_names(cfg, target),
                       target=target, config=cfg)


def data_size_study(ensemble_data: EnsembleDataset, spec: MlpSpec,
                    cfg: TrainConfig, sizes: Sequence[int], target: str,
                    narx_cfg: NarxConfig, repeats: int = 25) -> DataSizeCurve:
    """Final validation error against the number of training rows.

    For each size, ``repeats`` networks are trained on freshly drawn
    subsets of the pooled training rows while the pooled validation rows
    stay fixed, and the mean and std of the restored model's validation
    MSE/MAE are reported.  A size exceeding the available training rows is
    an error."""
    if repeats < 1:
        raise ValueError("repeats must be positive")
    pooled = pooled_dataset(ensemble_data, target, narx_cfg)
    train_rows = pooled.split_rows["train"]
    n_train = train_rows.shape[0]
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("at least one size is required")
    for s in sizes:
        if not 1 <= s <= n_train:
            raise ValueError(
                f"size {s} is outside the {n_train} available training rows")

    X_val, y_val = pooled.rows("validation")
    points = []
    for s in sizes:
        mses, maes = [], []
        for r in range(repeats):
            pick_rng = stream(cfg.seed, "datasize", s, r)
            pick = train_rows[pick_rng.choice(n_train, size=s, replace=False)]
            subset = NarxDataset(
                X=pooled.X, y=pooled.y, scalers=pooled.scalers,
                split_rows={"train": pick,
                            "validation": pooled.split_rows["validation"],
                            "test": pooled.split_rows["test"]},
                feature_names=pooled.feature_names, target=pooled.target,
                config=pooled.config)
            seed_r = int(stream(cfg.seed, "datasize-train", s, r)
                         .integers(2 ** 63))
            fitted = train(init(spec, stream(seed_r, "init")), subset,
                           replace(cfg, seed=seed_r))
            pred = forward(fitted, X_val)
            mses.append(metric_mse(pred, y_val))
            maes.append(metric_mae(pred, y_val))
        mses, maes = np.array(mses), np.array(maes)
        points.append(SizePoint(size=s,
                                mse_mean=float(mses.mean()),
                                mse_std=float(mses.std()),
                                mae_mean=float(maes.mean()),
                                mae_std=float(maes.std())))
    return DataSizeCurve(points=tuple(points), repeats=repeats)


def write_curve_csv(curve: DataSizeCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "mse_mean", "mse_std", "mae_mean", "mae_std"])
        for p in curve.points:
            writer.writerow([p.size, repr(p.mse_mean), repr(p.mse_std),
                             repr(p.mae_mean), repr(p.mae_std)])


# -- population persistence --------------------------------------------------------


def format_summary(ensemble: EnsembleModel, summary: MetricSummary) -> str:
    lines = [f"target {ensemble.target}",
             f"members {ensemble.n_members}",
             f"diverged {len(ensemble.diverged)}",
             f"epochs min {summary.epochs_min} max {summary.epochs_max}"]
    for split in _SUMMARY_SPLITS:
        for metric in _METRIC_NAMES:
            st = summary.get(split, metric)
            lines.append(f"{split} {metric} min {st.min:.6e} "
                         f"max {st.max:.6e} median {st.median:.6e} "
                         f"std {st.std:.6e}")
    return "\n".join(lines) + "\n"


def write_model_ensemble(ensemble: EnsembleModel, directory) -> None:
    """Persist as member_<k>.weights files, metrics.csv, and summary text.

    metrics.csv is the raw histogram data: one row per member and split
    with final MSE, MAE, and the trained epoch count."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rec in ensemble.members:
        save_model(rec.model, directory / f"member_{rec.member}.weights")
    with open(directory / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["member", "split", "mse", "mae", "epochs"])
        for rec in ensemble.members:
            for split in SPLIT_NAMES:
                writer.writerow([rec.member, split, repr(rec.mse[split]),
                                 repr(rec.mae[split]), rec.epochs])
    summary = summarize(ensemble)
    (directory / "summary").write_text(format_summary(ensemble, summary))
    meta = {"target": ensemble.target,
            "narx": {"input_taps": ensemble.narx.input_taps,
                     "output_taps": ensemble.narx.output_taps,
                     "include_current_input":
                         ensemble.narx.include_current_input},
            "members": [[rec.member, rec.theta_row]
                        for rec in ensemble.members],
            "diverged": list(ensemble.diverged)}
    (directory / "ensemble.json").write_text(
        json.dumps(meta, indent=1, sort_keys=True))


def read_model_ensemble(directory) -> EnsembleModel:
    directory = Path(directory)
    meta = json.loads((directory / "ensemble.json").read_text())
    if not meta["members"]:
        raise ValueError("stored ensemble has no members")
    metrics: dict[int, dict[str, dict[str, float]]] = {}
    with open(directory / "metrics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["member"])
            slot = metrics.setdefault(k, {"mse": {}, "mae": {}})
            slot["mse"][row["split"]] = float(row["mse"])
            slot["mae"][row["split"]] = float(row["mae"])
    members = []
    for k, theta_row in meta["members"]:
        model = load_model(directory / f"member_{k}.weights")
        members.append(MemberRecord(member=k, theta_row=int(theta_row),
                                    model=model, mse=metrics[k]["mse"],
                                    mae=metrics[k]["mae"]))
    return EnsembleModel(spec=members[0].model.spec, target=meta["target"],
                         narx=NarxConfig(**meta["narx"]), members=members,
                         diverged=tuple(meta["diverged"]))
