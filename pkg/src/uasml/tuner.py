"""Successive-halving architecture search over a discrete network space.

Three brackets with halving factor 3 by default: an aggressive bracket
starting many cheap trials, a middle bracket, and a conservative bracket
that trains a few candidates at full budget from the start.  Promotion
retrains from scratch at the larger budget (weights are not resumed), which
keeps every trial a pure function of (seed, trial index) and makes the
whole search replayable.  The test split is touched exactly once, for the
winning spec.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .narx import NarxDataset
from .neural import (DivergenceError, MlpSpec, TrainConfig, forward, init, metric_mae,
                     metric_mse, train)
from .rng import stream

PRESET_TEMPERATURE = MlpSpec(18, (100, 90), ("tanh", "tanh"),
                             learning_rate=1.0e-3)
PRESET_VISCOSITY = MlpSpec(18, (150, 90, 150, 90, 150, 90), ("tanh",) * 6,
                           learning_rate=1.0e-3)


@dataclass(frozen=True)
class SearchSpace:
    """Candidate architecture choices; one activation repeated per net."""

    layer_counts: tuple[int, ...] = (2, 3, 4, 5, 6)
    widths: tuple[int, ...] = (30, 50, 70, 90, 100, 120, 130, 160)
    activations: tuple[str, ...] = ("relu", "tanh")
    learning_rates: tuple[float, ...] = (1.0e-4, 1.0e-3, 1.0e-1)

    def __post_init__(self):
        if not (self.layer_counts and self.widths and self.activations
                and self.learning_rates):
            raise ValueError("every search dimension needs at least one choice")
        if any(c < 1 for c in self.layer_counts) or any(w < 1 for w in self.widths):
            raise ValueError("layer counts and widths must be positive")
        for a in self.activations:
            if a not in ("relu", "tanh"):
                raise ValueError(f"unknown activation {a!r}")

    def sample(self, input_dim: int, rng: np.random.Generator) -> MlpSpec:
        depth = int(rng.choice(self.layer_counts))
        widths = tuple(int(rng.choice(self.widths)) for _ in range(depth))
        act = str(rng.choice(self.activations))
        lr = float(rng.choice(self.learning_rates))
        return MlpSpec(input_dim, widths, (act,) * depth, learning_rate=lr)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    rung: int
    budget: int
    spec: MlpSpec
    val_mse: float
    val_mae: float

    def __post_init__(self):
        if self.budget <= 0:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class TunerConfig:
    max_budget_epochs: int = 90
    eta: int = 3
    brackets: int = 3
    batch_size: int = 64
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.eta < 2:
            raise ValueError("halving factor must be at least 2")
        if (self.brackets < 1
                or self.max_budget_epochs < 2 * self.eta ** (self.brackets - 1)):
            raise ValueError("budget too small for the requested brackets; "
                             "the cheapest rung needs at least 2 epochs")


@dataclass(frozen=True)
class TunerResult:
    best_spec: MlpSpec
    records: tuple[TrialRecord, ...]
    winner_val_mse: float
    winner_test_mse: float
    winner_test_mae: float


def bracket_plan(cfg: TunerConfig) -> list[list[tuple[int, int]]]:
    """Per bracket, the (n_trials, budget) of each rung.

    Bracket s starts ceil(brackets/(s+1)) * eta**s trials at
    max_budget/eta**s epochs and keeps the best 1/eta (rounded down, at
    least one) per rung until full budget, so aggressive brackets screen
    many cheap candidates while the last bracket trains a few at full
    budget from the start."""
    plan = []
    for s in range(cfg.brackets - 1, -1, -1):
        rungs = []
        n = math.ceil(cfg.brackets / (s + 1)) * cfg.eta ** s
        budget = cfg.max_budget_epochs // (cfg.eta ** s)
        for _ in range(s + 1):
            rungs.append((n, budget))
            n = max(1, n // cfg.eta)
            budget = min(cfg.max_budget_epochs, budget * cfg.eta)
        plan.append(rungs)
    return plan


def planned_budget(cfg: TunerConfig) -> int:
    """Total allocated training epochs across all brackets and rungs."""
    return sum(n * b for rungs in bracket_plan(cfg) for n, b in rungs)


def _train_trial(spec: MlpSpec, dataset: NarxDataset, cfg: TunerConfig,
                 budget: int, trial_seed: int):
    """Validation metrics of one from-scratch training at the given budget."""
    model = init(spec, stream(trial_seed, "tuner-init"))
    tc = TrainConfig(max_epochs=budget,
                     patience=max(1, min(cfg.patience, budget - 1)),
                     batch_size=cfg.batch_size, seed=trial_seed)
    fitted = train(model, dataset, tc)
    X_val, y_val = dataset.rows("validation")
    p = forward(fitted, X_val)
    return fitted, metric_mse(p, y_val), metric_mae(p, y_val)


def hyperband_search(space: SearchSpace, dataset: NarxDataset,
                     cfg: TunerConfig) -> TunerResult:
    """Run the bracket plan and return the winner plus the full trial log.

    Ranking within a rung is by validation MSE; non-finite losses (diverged
    trials) rank last and are dropped at promotion.  The winner is the
    lowest validation MSE among full-budget trials; only the winner is
    evaluated on the test split."""
    input_dim = dataset.X.shape[1]
    records: list[TrialRecord] = []
    finalists: list[tuple[float, float, int, MlpSpec]] = []
    trial_no = 0

    for b_idx, rungs in enumerate(bracket_plan(cfg)):
        n0, _ = rungs[0]
        specs = [space.sample(input_dim, stream(cfg.seed, "tuner-sample", b_idx, i))
                 for i in range(n0)]
        ids = list(range(trial_no, trial_no + n0))
        trial_no += n0
        for rung_idx, (n, budget) in enumerate(rungs):
            specs, ids = specs[:n], ids[:n]
            scored = []
            for spec, tid in zip(specs, ids):
                try:
                    _, v_mse, v_mae = _train_trial(
                        spec, dataset, cfg, budget,
                        trial_seed=int(stream(cfg.seed, "tuner-train", tid,
                                              rung_idx).integers(2 ** 63)))
                except DivergenceError:
                    v_mse, v_mae = math.inf, math.inf
                records.append(TrialRecord(trial=tid, rung=rung_idx,
                                           budget=budget, spec=spec,
                                           val_mse=v_mse, val_mae=v_mae))
                scored.append((v_mse, v_mae, tid, spec))
            scored.sort(key=lambda r: (r[0], r[2]))
            scored = [r for r in scored if math.isfinite(r[0])]
            if rung_idx == len(rungs) - 1:
                finalists.extend(scored)
            else:
                keep = max(1, n // cfg.eta)
                specs = [r[3] for r in scored[:keep]]
                ids = [r[2] for r in scored[:keep]]
            if not specs:
                break

    if not finalists:
        raise RuntimeError("every trial diverged; the search space yields "
                           "no trainable network on this dataset")
    finalists.sort(key=lambda r: (r[0], r[2]))
    best_mse, _, best_id, best_spec = finalists[0]

    # single test evaluation, winner only: retrain deterministically at full
    # budget with the winner's final-rung seed and score the held-out split
    rung_of_best = max(r.rung for r in records if r.trial == best_id)
    fitted, _, _ = _train_trial(
        best_spec, dataset, cfg, cfg.max_budget_epochs,
        trial_seed=int(stream(cfg.seed, "tuner-train", best_id,
                              rung_of_best).integers(2 ** 63)))
    X_te, y_te = dataset.rows("test")
    p = forward(fitted, X_te)
    return TunerResult(best_spec=best_spec, records=tuple(records),
                       winner_val_mse=best_mse,
                       winner_test_mse=metric_mse(p, y_te),
                       winner_test_mae=metric_mae(p, y_te))


def write_trials_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "rung", "budget", "layers", "widths",
                    "activation", "lr", "val_mse", "val_mae"])
        for r in records:
            w.writerow([r.trial, r.rung, r.budget, len(r.spec.hidden),
                        "x".join(str(v) for v in r.spec.hidden),
                        r.spec.activations[0] if r.spec.activations else "",
                        repr(r.spec.learning_rate),
                        repr(r.val_mse), repr(r.val_mae)])
