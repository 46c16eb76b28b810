"""Lag-structure selection by Lipschitz-quotient analysis and construction
of scaled NARX regressor datasets.

The Lipschitz index for a lag pair (l_u, l_y) is the geometric mean of the
largest few quotients |y_i - y_j| / ||x_i - x_j|| over strictly delayed
regressor vectors, scaled by the square root of the regressor dimension.
It stabilizes once the regressor carries enough history, which a slope
criterion on the index surface turns into a lag choice.  Regressor datasets
are built per trajectory within experiment blocks and min-max scaled to
[-1, 1] with statistics fitted on the training split only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import EnsembleDataset
from .rng import stream

__all__ = [
    "NarxConfig", "ScalerSet", "NarxDataset", "LipschitzSurface",
    "lipschitz_index", "lipschitz_surface", "select_lags",
    "regressor_matrix", "fit_scalers", "build_member_dataset",
    "ensemble_series", "feature_names", "write_surface_csv",
    "write_narx_dataset", "read_narx_dataset",
]

INPUT_NAMES = ("Qi", "Qs", "Qm", "Qc")


@dataclass(frozen=True)
class NarxConfig:
    """Lag structure of the one-step predictor.

    ``input_taps`` counts input samples per channel; with
    ``include_current_input`` they are u_k..u_{k-(taps-1)}, otherwise
    u_{k-1}..u_{k-taps}.  ``output_taps`` are always strictly delayed:
    y_{k-1}..y_{k-p}."""

    input_taps: int = 4
    output_taps: int = 2
    include_current_input: bool = True

    def __post_init__(self):
        if self.input_taps < 0:
            raise ValueError("input_taps must be >= 0")
        if self.output_taps < 1:
            raise ValueError("output_taps must be >= 1")

    def feature_dim(self, n_inputs: int = len(INPUT_NAMES)) -> int:
        return self.input_taps * n_inputs + self.output_taps

    @property
    def first_usable(self) -> int:
        """Offset of the first regressor row inside a block."""
        return max(self.input_taps, self.output_taps)


def feature_names(cfg: NarxConfig, target: str,
                  input_names: Sequence[str] = INPUT_NAMES) -> tuple[str, ...]:
    names = []
    start = 0 if cfg.include_current_input else 1
    for tap in range(start, start + cfg.input_taps):
        suffix = "[k]" if tap == 0 else f"[k-{tap}]"
        names.extend(f"{u}{suffix}" for u in input_names)
    names.extend(f"{target}[k-{tap}]" for tap in range(1, cfg.output_taps + 1))
    return tuple(names)


# -- Lipschitz analysis --------------------------------------------------------

@dataclass(frozen=True)
class LipschitzSurface:
    """Index values over the lag grid; entry [l_u, l_y] is q(l_u, l_y).

    The (0, 0) cell has no regressor and is NaN."""

    values: np.ndarray
    p_fraction: float
    seed: int

    @property
    def max_lu(self) -> int:
        return self.values.shape[0] - 1

    @property
    def max_ly(self) -> int:
        return self.values.shape[1] - 1

    def value(self, l_u: int, l_y: int) -> float:
        return float(self.values[l_u, l_y])


def _as_series_list(series):
    """Normalize input to a list of (inputs (N, nu), output (N,)) pairs."""
    if isinstance(series, tuple) and len(series) == 2 \
            and not isinstance(series[0], tuple):
        series = [series]
    out = []
    for u, y in series:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[0] == 1 and u.shape[1] > 1 and np.asarray(y).shape[0] != 1:
            u = u.T
        y = np.asarray(y, dtype=float).ravel()
        if u.shape[0] != y.shape[0]:
            raise ValueError("input and output series lengths differ")
        out.append((u, y))
    return out


def _normalized_series(series):
    """Min-max map of every channel to [-1, 1], pooled over the series.

    The quotient metric mixes input and output axes in one Euclidean
    distance, so the channels must be commensurate; a constant channel
    maps to zero."""
    u_all = np.vstack([u for u, _ in series])
    y_all = np.concatenate([y for _, y in series])
    u_lo, u_hi = u_all.min(axis=0), u_all.max(axis=0)
    y_lo, y_hi = float(y_all.min()), float(y_all.max())
    u_span = np.where(u_hi > u_lo, u_hi - u_lo, np.inf)
    y_span = y_hi - y_lo if y_hi > y_lo else math.inf
    return [((2.0 * (u - u_lo) / u_span) - np.where(np.isfinite(u_span), 1.0, 0.0),
             (2.0 * (y - y_lo) / y_span) - (1.0 if math.isfinite(y_span) else 0.0))
            for u, y in series]


def _delayed_regressors(series, l_u: int, l_y: int):
    """Strictly delayed regressor matrix pooled over the member series.

    Row k of one series: [u_{k-1}..u_{k-l_u} over the input channels,
    y_{k-1}..y_{k-l_y}], target y_k."""
    xs, ts = [], []
    lag = max(l_u, l_y)
    for u, y in series:
        n = y.shape[0]
        if n <= lag:
            continue
        rows = np.arange(lag, n)
        cols = []
        for d in range(1, l_u + 1):
            cols.append(u[rows - d])
        for d in range(1, l_y + 1):
            cols.append(y[rows - d, None])
        xs.append(np.hstack(cols))
        ts.append(y[rows])
    if not xs:
        raise ValueError("series too short for the requested lags")
    return np.vstack(xs), np.concatenate(ts)


def lipschitz_index(series, l_u: int, l_y: int, p_fraction: float = 0.02,
                    seed: int = 0, max_pairs: int = 200_000) -> float:
    """Order-detection index of He and Asada at one lag pair.

    ``series`` is one (inputs, output) pair or a list of them.  Quotient
    pairs are drawn within one series at a time; an ensemble of parameter
    draws enters by pooling the per-member quotients before the top-p cut.
    (Cross-member pairs would share identical input columns at equal times
    and so can never be separated by input lags, which biases the analysis
    toward output taps.)  Channels are min-max normalized first, so the
    index is invariant to affine channel rescaling.  All sample pairs are
    used up to a ``max_pairs`` total budget; beyond that a seeded uniform
    subsample per series keeps the cost bounded."""
    if l_u < 0 or l_y < 0 or l_u + l_y == 0:
        raise ValueError("need at least one lag")
    if not (0.0 < p_fraction <= 1.0):
        raise ValueError("p_fraction must lie in (0, 1]")
    norm_series = _normalized_series(_as_series_list(series))
    budget = max(1, max_pairs // len(norm_series))
    quotients = []
    n_all_total = 0
    for s_idx, member in enumerate(norm_series):
        try:
            X, t = _delayed_regressors([member], l_u, l_y)
        except ValueError:
            continue  # this series is too short for the lags; others may do
        n = X.shape[0]
        n_all = n * (n - 1) // 2
        n_all_total += n_all
        if n_all <= budget:
            i, j = np.triu_indices(n, k=1)
        else:
            rng = stream(seed, "lipschitz-pairs", l_u, l_y, s_idx)
            i = rng.integers(0, n, size=budget)
            j = rng.integers(0, n - 1, size=budget)
            j = j + (j >= i)
        num = np.abs(t[i] - t[j])
        den = np.linalg.norm(X[i] - X[j], axis=1)
        valid = den > 0.0
        quotients.append(num[valid] / den[valid])
    if n_all_total == 0:
        raise ValueError("series too short for the requested lags")
    if n_all_total < math.ceil(1.0 / p_fraction):
        raise ValueError(f"too few sample pairs ({n_all_total}) for "
                         f"p_fraction={p_fraction}")
    q = np.concatenate(quotients) if quotients else np.empty(0)
    if q.size == 0:
        raise ValueError("all regressor pairs are duplicates")
    p = math.ceil(p_fraction * q.shape[0])
    top = np.partition(q, -p)[-p:]
    if (top <= 0.0).any():
        return 0.0
    # sqrt of the total lag count, the He-Asada order correction; for
    # multi-input data the count stays l_u + l_y, not the regressor width
    return float(math.sqrt(l_u + l_y) * math.exp(np.mean(np.log(top))))


def lipschitz_surface(series, max_lu: int, max_ly: int,
                      p_fraction: float = 0.02, seed: int = 0,
                      max_pairs: int = 200_000) -> LipschitzSurface:
    """Index over the full lag grid l_u=0..max_lu, l_y=0..max_ly."""
    if max_lu < 1 and max_ly < 1:
        raise ValueError("surface needs at least one nonzero max lag")
    series = _as_series_list(series)
    values = np.full((max_lu + 1, max_ly + 1), math.nan)
    for l_u in range(max_lu + 1):
        for l_y in range(max_ly + 1):
            if l_u + l_y == 0:
                continue
            values[l_u, l_y] = lipschitz_index(
                series, l_u, l_y, p_fraction, seed=seed, max_pairs=max_pairs)
    return LipschitzSurface(values=values, p_fraction=p_fraction, seed=seed)


def select_lags(surface: LipschitzSurface,
                slope_threshold: float = 0.05) -> NarxConfig:
    """Smallest lag pair beyond which the index has stopped falling.

    A candidate (a, b) is accepted when every further single-lag step along
    either axis (holding the other coordinate at the candidate) lowers the
    index by less than ``slope_threshold`` relative; candidates are ordered
    by total lag count, then fewer output lags.  Saturation must be
    witnessed: a candidate sitting on the boundary of an axis that extends
    beyond it has no forward step to prove flatness and is skipped, so a
    surface still falling at the grid edge raises instead of silently
    returning the corner."""
    if not (0.0 < slope_threshold < 1.0):
        raise ValueError("slope_threshold must lie in (0, 1)")
    v = surface.values

    def rel_drop(a, b):
        if not (math.isfinite(a) and a > 0.0):
            return 0.0
        return max(0.0, (a - b) / a)

    candidates = [(lu, ly)
                  for ly in range(1, surface.max_ly + 1)
                  for lu in range(surface.max_lu + 1)]
    candidates.sort(key=lambda c: (c[0] + c[1], c[1], c[0]))
    for lu, ly in candidates:
        u_witnessed = lu < surface.max_lu or surface.max_lu == 0
        y_witnessed = ly < surface.max_ly or surface.max_ly == 1
        if not (u_witnessed and y_witnessed):
            continue
        flat_u = all(rel_drop(v[l, ly], v[l + 1, ly]) < slope_threshold
                     for l in range(lu, surface.max_lu))
        flat_y = all(rel_drop(v[lu, l], v[lu, l + 1]) < slope_threshold
                     for l in range(ly, surface.max_ly))
        if flat_u and flat_y:
            return NarxConfig(input_taps=lu, output_taps=ly)
    raise ValueError("no lag pair satisfies the slope criterion inside the "
                     "grid; recompute with larger max lags")


def ensemble_series(ensemble: EnsembleDataset, target: str,
                    members: Sequence[int] | None = None):
    """(inputs, target-series) pairs for the selected ensemble members."""
    idx = range(ensemble.n_members) if members is None else members
    return [(ensemble.trajectories[i].inputs,
             ensemble.trajectories[i].series(target)) for i in idx]


# -- regressor datasets --------------------------------------------------------

@dataclass(frozen=True)
class ScalerSet:
    """Per-feature and target min-max maps onto [-1, 1].

    Constant columns map to 0 and unscale back to their constant."""

    feature_lo: np.ndarray
    feature_hi: np.ndarray
    target_lo: float
    target_hi: float

    def _affine(self, x, lo, hi):
        span = np.asarray(hi - lo, dtype=float)
        safe = np.where(span > 0.0, span, 1.0)
        return np.where(span > 0.0, -1.0 + 2.0 * (x - lo) / safe, 0.0)

    def scale_features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._affine(X, self.feature_lo, self.feature_hi)

    def scale_target(self, y: np.ndarray) -> np.ndarray:
        return self._affine(np.asarray(y, dtype=float), self.target_lo,
                            self.target_hi)

    def unscale_target(self, ys: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        span = self.target_hi - self.target_lo
        if span <= 0.0:
            return np.full_like(ys, self.target_lo)
        return self.target_lo + 0.5 * (ys + 1.0) * span

    @property
    def target_span(self) -> float:
        return self.target_hi - self.target_lo


def fit_scalers(X: np.ndarray, y: np.ndarray) -> ScalerSet:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("cannot fit scalers on an empty split")
    return ScalerSet(feature_lo=X.min(axis=0), feature_hi=X.max(axis=0),
                     target_lo=float(y.min()), target_hi=float(y.max()))


@dataclass
class NarxDataset:
    """Scaled regressor matrix with split row indices.

    Rows are ordered by target-sample time; ``split_rows`` indexes into
    X/y and partitions the rows by the step segment of each target."""

    X: np.ndarray
    y: np.ndarray
    scalers: ScalerSet
    split_rows: dict[str, np.ndarray]
    feature_names: tuple[str, ...]
    target: str
    config: NarxConfig

    def rows(self, split_name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.split_rows[split_name]
        return self.X[idx], self.y[idx]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def regressor_matrix(u: np.ndarray, y: np.ndarray, cfg: NarxConfig,
                     record_ids: np.ndarray):
    """Unscaled regressor rows built inside each continuous record.

    ``record_ids`` marks contiguity: lag windows never reach across two
    different ids, so concatenated experiments stay independent.  Returns
    (X, targets, row_samples) where ``row_samples`` is the global sample
    index of each row's target.  The first ``cfg.first_usable`` samples of
    every record are history only."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    record_ids = np.asarray(record_ids)
    if u.shape[0] != y.shape[0] or record_ids.shape[0] != y.shape[0]:
        raise ValueError("series and record ids must share their length")
    lead = cfg.first_usable
    xs, ts, ks_all = [], [], []
    for b in np.unique(record_ids):
        rows = np.flatnonzero(record_ids == b)
        if rows.shape[0] <= lead:
            continue
        ks = rows[lead:]
        cols = []
        start = 0 if cfg.include_current_input else 1
        for tap in range(start, start + cfg.input_taps):
            cols.append(u[ks - tap])
        for tap in range(1, cfg.output_taps + 1):
            cols.append(y[ks - tap, None])
        if not cols:
            raise ValueError("configuration produces no features")
        xs.append(np.hstack(cols))
        ts.append(y[ks])
        ks_all.append(ks)
    if not xs:
        raise ValueError("no record is longer than the lag depth")
    return np.vstack(xs), np.concatenate(ts), np.concatenate(ks_all)


def build_member_dataset(ensemble: EnsembleDataset, member: int, target: str,
                         cfg: NarxConfig) -> NarxDataset:
    """Scaled NARX dataset for one ensemble member.

    Rows are built over the member's continuous record, so a lag window may
    reach back across a step boundary; the row itself belongs to the split
    of the step segment that owns its target sample, which keeps every
    predicted sample in exactly one split.  Scaling statistics come from
    the member's training rows alone."""
    if ensemble.split is None:
        raise ValueError("ensemble must be split before building regressors")
    traj = ensemble.trajectories[member]
    series = traj.series(target)
    record = np.zeros(series.shape[0], dtype=int)
    X_raw, t_raw, row_samples = regressor_matrix(
        traj.inputs, series, cfg, record)
    row_blocks = ensemble.block_ids()[row_samples]

    split_rows: dict[str, np.ndarray] = {}
    for name, blocks in ensemble.split.items():
        blocks = set(blocks)
        split_rows[name] = np.flatnonzero([b in blocks for b in row_blocks])
    if split_rows["train"].shape[0] == 0:
        raise ValueError("training split contains no regressor rows")

    scalers = fit_scalers(X_raw[split_rows["train"]], t_raw[split_rows["train"]])
    return NarxDataset(
        X=scalers.scale_features(X_raw), y=scalers.scale_target(t_raw),
        scalers=scalers, split_rows=split_rows,
        feature_names=feature_names(cfg, target), target=target, config=cfg)


# -- persistence ---------------------------------------------------------------

def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_surface_csv(surface: LipschitzSurface, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l_u", *(str(ly) for ly in range(surface.max_ly + 1))])
        for lu in range(surface.max_lu + 1):
            w.writerow([str(lu), *(_fmt(v) for v in surface.values[lu])])


def write_narx_dataset(ds: NarxDataset, directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "X.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ds.feature_names)
        for row in ds.X:
            w.writerow([_fmt(v) for v in row])
    with open(directory / "y.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([ds.target])
        for v in ds.y:
            w.writerow([_fmt(v)])
    with open(directory / "scalers.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "min", "max"])
        for name, lo, hi in zip(ds.feature_names, ds.scalers.feature_lo,
                                ds.scalers.feature_hi):
            w.writerow([name, _fmt(lo), _fmt(hi)])
        w.writerow([f"target:{ds.target}", _fmt(ds.scalers.target_lo),
                    _fmt(ds.scalers.target_hi)])
    with open(directory / "splits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["split", "rows"])
        for name, idx in ds.split_rows.items():
            w.writerow([name, " ".join(str(i) for i in idx)])


def read_narx_dataset(directory, cfg: NarxConfig) -> NarxDataset:
    from pathlib import Path

    directory = Path(directory)
    with open(directory / "X.csv", newline="") as fh:
        r = csv.reader(fh)
        names = tuple(next(r))
        X = np.array([[float(v) for v in row] for row in r])
    with open(directory / "y.csv", newline="") as fh:
        r = csv.reader(fh)
        target = next(r)[0]
        y = np.array([float(row[0]) for row in r])
    with open(directory / "scalers.csv", newline="") as fh:
        r = csv.reader(fh)
        next(r)
        rows = list(r)
    f_lo = np.array([float(row[1]) for row in rows[:-1]])
    f_hi = np.array([float(row[2]) for row in rows[:-1]])
    scalers = ScalerSet(feature_lo=f_lo, feature_hi=f_hi,
                        target_lo=float(rows[-1][1]), target_hi=float(rows[-1][2]))
    split_rows: dict[str, np.ndarray] = {}
    with open(directory / "splits.csv", newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for name, idx in r:
            split_rows[name] = np.array([int(v) for v in idx.split()] if idx else [],
                                        dtype=int)
    return NarxDataset(X=X, y=y, scalers=scalers, split_rows=split_rows,
                       feature_names=names, target=target, config=cfg)
