"""Monte Carlo data generation: resample calibrated parameters, propagate
each draw through the reactor under a shared excitation, split the result
into train/validation/test by step blocks, and add measurement noise.

One LHS step of the shared schedule is one experiment block; splits are
assigned to whole blocks so lagged regressors never straddle a split
boundary.  Noise is applied after splitting with one RNG stream per
ensemble row, so member data are reproducible independently of order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dram import Chain
from .excitation import add_noise, read_schedule_csv, write_schedule_csv
from .reactor import (
    InputSchedule, IntegrationError, ModelVariant, ReactorParameters,
    ReactorState, Trajectory, integrate, read_trajectory_csv,
    write_trajectory_csv,
)
from .rng import stream

__all__ = [
    "ParameterMatrix", "EnsembleDataset", "EnsembleError",
    "draw_parameter_matrix", "propagate_ensemble", "block_assignments",
    "largest_remainder_counts", "split_dataset", "add_ensemble_noise",
    "write_ensemble", "read_ensemble", "SPLIT_NAMES",
]

SPLIT_NAMES = ("train", "validation", "test")


class EnsembleError(RuntimeError):
    """Monte Carlo propagation failed beyond the tolerated fraction."""


@dataclass(frozen=True)
class ParameterMatrix:
    """Normalized parameter draws, one row per ensemble member."""

    values: np.ndarray          # (m, d)
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.atleast_2d(np.asarray(self.values, dtype=float)))
        if self.values.shape[1] != len(self.names):
            raise ValueError("one name per parameter column required")
        if not np.isfinite(self.values).all():
            raise ValueError("parameter draws must be finite")

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass
class EnsembleDataset:
    """Propagated Monte Carlo trajectories plus split bookkeeping.

    ``trajectories[i]`` was simulated from ``theta.values[row_indices[i]]``;
    failed rows are excluded but stay on record.  ``split`` maps split name
    to a tuple of block indices once assigned."""

    theta: ParameterMatrix
    trajectories: list[Trajectory]
    row_indices: tuple[int, ...]
    failed_rows: tuple[int, ...]
    schedule: InputSchedule
    grid: np.ndarray
    split: dict[str, tuple[int, ...]] | None = None
    noise_seed: int | None = None

    @property
    def n_members(self) -> int:
        return len(self.trajectories)

    def theta_for(self, member: int) -> np.ndarray:
        return self.theta.values[self.row_indices[member]]

    def block_ids(self) -> np.ndarray:
        return block_assignments(self.grid, self.schedule)

    def sample_indices(self, split_name: str) -> np.ndarray:
        """Grid-sample indices covered by the named split's blocks."""
        if self.split is None:
            raise ValueError("dataset has not been split")
        if split_name not in self.split:
            raise KeyError(split_name)
        blocks = set(self.split[split_name])
        ids = self.block_ids()
        return np.flatnonzero([b in blocks for b in ids])


def draw_parameter_matrix(chain: Chain, m: int, rng: np.random.Generator
                          ) -> ParameterMatrix:
    """Sample m parameter vectors uniformly with replacement from the
    post-burn-in chain."""
    if m < 1:
        raise ValueError("m must be at least 1")
    draws = chain.post_burn()
    if draws.shape[0] == 0:
        raise ValueError("chain has no post-burn-in draws")
    idx = rng.integers(0, draws.shape[0], size=m)
    return ParameterMatrix(values=draws[idx].copy(), names=chain.param_names)


def propagate_ensemble(
    theta: ParameterMatrix,
    y0: ReactorState,
    schedule: InputSchedule,
    nominal: ReactorParameters,
    variant: ModelVariant | None = None,
    grid: np.ndarray | None = None,
    rtol: float = 1.0e-8,
    atol: float = 1.0e-10,
    max_failure_fraction: float = 0.01,
    max_steps: int = 500_000,
) -> EnsembleDataset:
    """Simulate one trajectory per parameter row under the shared schedule.

    Rows whose integration fails are dropped; more than
    ``max_failure_fraction`` of them failing aborts the whole propagation."""
    variant = variant or ModelVariant()
    if grid is None:
        n = int(round(schedule.duration)) + 1
        grid = np.linspace(schedule.start_time, schedule.end_time, n)
    grid = np.asarray(grid, dtype=float)

    trajectories: list[Trajectory] = []
    rows: list[int] = []
    failed: list[int] = []
    for i in range(theta.m):
        try:
            params = nominal.scaled_by(theta.values[i])
            traj = integrate(y0, schedule, params, variant, grid,
                             rtol=rtol, atol=atol, max_steps=max_steps)
        except (ValueError, ArithmeticError, IntegrationError):
            failed.append(i)
            continue
        trajectories.append(traj)
        rows.append(i)

    if len(failed) > max_failure_fraction * theta.m:
        raise EnsembleError(
            f"{len(failed)} of {theta.m} propagations failed "
            f"(rows {failed[:10]}{'...' if len(failed) > 10 else ''}); "
            f"tolerated fraction is {max_failure_fraction}")
    return EnsembleDataset(theta=theta, trajectories=trajectories,
                           row_indices=tuple(rows), failed_rows=tuple(failed),
                           schedule=schedule, grid=grid)


def block_assignments(grid: np.ndarray, schedule: InputSchedule) -> np.ndarray:
    """Block index per grid sample; one excitation step is one block.

    The final sample (at the schedule end) belongs to the last block."""
    grid = np.asarray(grid, dtype=float)
    ids = np.floor((grid - schedule.start_time) / schedule.hold_duration)
    return np.clip(ids.astype(int), 0, schedule.n_steps - 1)


def largest_remainder_counts(n: int, fractions) -> tuple[int, ...]:
    """Integer allocation of n items proportional to fractions.

    Floors first, then hands leftovers to the largest remainders (earlier
    entries win ties); finally guarantees every share is nonempty by taking
    from the largest share."""
    fractions = [float(f) for f in fractions]
    if any(f <= 0.0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if n < len(fractions):
        raise ValueError(f"cannot split {n} items into {len(fractions)} nonempty shares")
    quotas = [n * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    for _ in range(n - sum(counts)):
        k = max(range(len(counts)), key=lambda j: (remainders[j], -j))
        counts[k] += 1
        remainders[k] = -1.0
    while min(counts) == 0:
        empty = counts.index(0)
        donor = max(range(len(counts)), key=lambda j: counts[j])
        counts[donor] -= 1
        counts[empty] += 1
    return tuple(counts)


def split_dataset(ensemble: EnsembleDataset,
                  fractions=(0.70, 0.15, 0.15),
                  rng: np.random.Generator | None = None) -> EnsembleDataset:
    """Assign whole experiment blocks to train/validation/test.

    Block membership is randomized by ``rng`` (deterministic order when
    omitted) and the counts follow the largest-remainder rule."""
    if len(fractions) != len(SPLIT_NAMES):
        raise ValueError(f"expected {len(SPLIT_NAMES)} fractions")
    n_blocks = ensemble.schedule.n_steps
    if n_blocks < 3:
        raise ValueError("need at least 3 experiment blocks to split")
    counts = largest_remainder_counts(n_blocks, fractions)
    order = np.arange(n_blocks) if rng is None else rng.permutation(n_blocks)
    split: dict[str, tuple[int, ...]] = {}
    at = 0
    for name, c in zip(SPLIT_NAMES, counts):
        split[name] = tuple(sorted(int(b) for b in order[at:at + c]))
        at += c
    return replace(ensemble, split=split)


def add_ensemble_noise(ensemble: EnsembleDataset, channels, range_fraction: float,
                       master_seed: int) -> EnsembleDataset:
    """Corrupt the named output channels of every member trajectory.

    Each member uses its own RNG stream keyed by its theta row, so the
    realization is independent of propagation order."""
    noisy = [
        add_noise(traj, channels, range_fraction,
                  stream(master_seed, "ensemble-noise", row))
        for traj, row in zip(ensemble.trajectories, ensemble.row_indices)
    ]
    return replace(ensemble, trajectories=noisy, noise_seed=int(master_seed))


# -- persistence ---------------------------------------------------------------

def write_ensemble(ensemble: EnsembleDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    with open(directory / "theta.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *ensemble.theta.names])
        for i, row in enumerate(ensemble.theta.values):
            w.writerow([str(i), *(repr(float(v)) for v in row)])

    write_schedule_csv(ensemble.schedule, directory / "schedule.csv")
    for traj, row in zip(ensemble.trajectories, ensemble.row_indices):
        write_trajectory_csv(traj, directory / f"traj_{row}.csv")

    manifest = {
        "m": ensemble.theta.m,
        "n_members": ensemble.n_members,
        "row_indices": list(ensemble.row_indices),
        "failed_rows": list(ensemble.failed_rows),
        "n_failures": len(ensemble.failed_rows),
        "split": {k: list(v) for k, v in ensemble.split.items()}
                 if ensemble.split else None,
        "noise_seed": ensemble.noise_seed,
        "parameter_names": list(ensemble.theta.names),
        "n_blocks": ensemble.schedule.n_steps,
        "grid_points": int(ensemble.grid.shape[0]),
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_ensemble(directory) -> EnsembleDataset:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)

    with open(directory / "theta.csv", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        names = tuple(header[1:])
        values = np.array([[float(v) for v in row[1:]] for row in r])
    theta = ParameterMatrix(values=values, names=names)

    schedule = read_schedule_csv(directory / "schedule.csv")
    rows = tuple(int(i) for i in manifest["row_indices"])
    trajectories = [read_trajectory_csv(directory / f"traj_{row}.csv")
                    for row in rows]
    grid = trajectories[0].times if trajectories else np.array([])
    split = manifest.get("split")
    if split is not None:
        split = {k: tuple(int(b) for b in v) for k, v in split.items()}
    return EnsembleDataset(
        theta=theta, trajectories=trajectories, row_indices=rows,
        failed_rows=tuple(int(i) for i in manifest["failed_rows"]),
        schedule=schedule, grid=np.asarray(grid, dtype=float),
        split=split, noise_seed=manifest.get("noise_seed"),
    )
