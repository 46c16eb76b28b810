"""Persistent-excitation design and synthetic measurement noise.

Input programmes are Latin-hypercube levelled step sequences: each flow
gets one level per stratum of its +/-15% band around the steady operating
point, in independently permuted order, held for a fixed duration.  White
Gaussian noise emulates field measurements; its standard deviation is a
fraction of the clean series' span (0.1, i.e. -20 dB in amplitude, for the
calibration record).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .reactor import INPUT_NAMES, InputSchedule, ReactorInputs, Trajectory

__all__ = [
    "LhsDesign", "lhs_sample", "bounds_from_steady", "correlation_matrix",
    "schedule_from_design", "add_noise", "amplitude_db",
    "write_schedule_csv", "read_schedule_csv", "write_matrix_csv",
]


@dataclass(frozen=True)
class LhsDesign:
    """Latin-hypercube sample: one row per step, one column per input."""

    samples: np.ndarray               # (n_steps, n_inputs)
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds))
        if s.ndim != 2 or s.shape[1] != len(self.bounds):
            raise ValueError("samples shape does not match bounds")

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]


def lhs_sample(n_steps: int, bounds, rng: np.random.Generator) -> LhsDesign:
    """Stratified sample: one point per stratum per column, uniform within
    its stratum, strata order independently permuted per column."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    for lo, hi in bounds:
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"degenerate bounds ({lo}, {hi})")
    cols = []
    for lo, hi in bounds:
        perm = rng.permutation(n_steps)
        jitter = rng.random(n_steps)
        unit = (perm + jitter) / n_steps
        cols.append(lo + unit * (hi - lo))
    return LhsDesign(samples=np.column_stack(cols), bounds=bounds)


def bounds_from_steady(steady: ReactorInputs, fraction: float) -> tuple[tuple[float, float], ...]:
    """Symmetric +/-fraction band per flow, ordered Qi, Qs, Qm, Qc."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    base = steady.as_array()
    return tuple((float(v * (1.0 - fraction)), float(v * (1.0 + fraction))) for v in base)


def correlation_matrix(design: LhsDesign) -> np.ndarray:
    """Pairwise Pearson correlations of the design columns."""
    s = design.samples
    if s.shape[0] < 2:
        raise ValueError("need at least two steps for correlations")
    if (s.std(axis=0) == 0.0).any():
        raise ValueError("zero-variance design column")
    return np.corrcoef(s.T)


def schedule_from_design(design: LhsDesign, hold_duration: float,
                         start_time: float = 0.0) -> InputSchedule:
    if design.samples.shape[1] != 4:
        raise ValueError("a reactor schedule needs the four flow columns")
    return InputSchedule(step_levels=design.samples.copy(),
                         hold_duration=hold_duration, start_time=start_time)


def add_noise(traj: Trajectory, output_names, range_fraction: float,
              rng: np.random.Generator) -> Trajectory:
    """Copy of ``traj`` with white Gaussian noise on the named channels.

    sigma = range_fraction * (max - min) of each clean series.  Inputs and
    times are untouched; a constant series has no range to scale and is
    rejected."""
    if not (range_fraction > 0.0 and math.isfinite(range_fraction)):
        raise ValueError("range_fraction must be positive")
    noisy = traj
    for name in output_names:
        series = noisy.series(name)
        span = float(np.max(series) - np.min(series))
        if not (span > 0.0):
            raise ValueError(f"series {name!r} is constant; cannot scale noise to its range")
        noisy = noisy.replace_series(name, series + rng.normal(0.0, range_fraction * span, series.shape[0]))
    return noisy


def amplitude_db(ratio: float) -> float:
    """Amplitude ratio expressed in decibels (20*log10)."""
    if ratio <= 0.0:
        raise ValueError("amplitude ratio must be positive")
    return 20.0 * math.log10(ratio)


# -- CSV --------------------------------------------------------------------

SCHEDULE_HEADER = ("step_index", "start_time", "Qi", "Qs", "Qm", "Qc")


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_schedule_csv(schedule: InputSchedule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCHEDULE_HEADER)
        for k in range(schedule.n_steps):
            t0 = schedule.start_time + k * schedule.hold_duration
            w.writerow([str(k), _fmt(t0), *(_fmt(v) for v in schedule.step_levels[k])])


def read_schedule_csv(path) -> InputSchedule:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != SCHEDULE_HEADER:
            raise ValueError(f"unexpected schedule header {header!r}")
        rows = [[float(v) for v in row] for row in r]
    arr = np.array(rows)
    starts = arr[:, 1]
    if len(starts) > 1:
        holds = np.diff(starts)
        if not np.allclose(holds, holds[0], rtol=1e-9, atol=1e-9):
            raise ValueError("schedule holds must be equal")
        hold = float(holds[0])
    else:
        raise ValueError("schedule must have at least two steps to infer the hold")
    return InputSchedule(step_levels=arr[:, 2:6], hold_duration=hold,
                         start_time=float(starts[0]))


def write_matrix_csv(matrix: np.ndarray, names, path) -> None:
    """Square labelled matrix (e.g. design correlations) as plot-ready CSV."""
    matrix = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["", *names])
        for name, row in zip(names, matrix):
            w.writerow([name, *(_fmt(v) for v in row)])
