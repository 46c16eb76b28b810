"""Jacketed solution-polymerization CSTR: balances, outputs, simulation.

Free-radical styrene polymerization in a stirred tank with initiator,
solvent and monomer feeds plus a cooling jacket.  Mole balances cover
initiator and monomer, energy balances cover reactor and jacket, and the
method of moments tracks the dead-polymer distribution, from which the
soft-sensor outputs (weight-average molecular weight, polydispersity,
viscosity) follow algebraically.  The quasi-steady-state radical balance
enters as an explicit substitution, so the DAE integrates as a plain ODE.

States   : I [mol/L], M [mol/L], T [K], Tc [K], D0 [mol/L], D1, D2 [g/L]
Inputs   : Qi, Qs, Qm, Qc [L/h]  (initiator, solvent, monomer, coolant)
Outputs  : P [mol/L], Qt [L/h], Mw [g/mol], PD [-], eta

Units: hours, litres, moles, grams, joules, kelvin.  Arrhenius activation
energies are expressed in kelvin (E/R pre-divided), so k = A*exp(-E/T).
The heat-transfer group hA is treated as a lumped J/(K*h) coefficient
consistent with the hourly flow basis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .ode import IntegrationError, solve_to

__all__ = [
    "ReactorParameters", "ReactorState", "ReactorInputs", "RateConstants",
    "AlgebraicOutputs", "ModelVariant", "InputSchedule", "Trajectory",
    "NOMINAL_PARAMETERS", "PARAMETER_NAMES", "STATE_NAMES", "INPUT_NAMES",
    "OUTPUT_NAMES", "SERIES_NAMES", "rate_constants", "reactor_rhs",
    "algebraic_outputs", "integrate", "find_steady_state",
    "steady_state_guess", "write_trajectory_csv", "read_trajectory_csv",
    "IntegrationError", "SteadyStateError",
    "VISCOSITY_COEF", "VISCOSITY_EXP",
]

VISCOSITY_COEF = 0.0012   # eta = 0.0012 * Mw**0.71
VISCOSITY_EXP = 0.71


class SteadyStateError(RuntimeError):
    """Steady-state search failed; ``residual`` holds the best norm seen."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (best residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ReactorParameters:
    """Kinetic, thermal and feed parameters; all 18 enter the calibration."""

    Ad: float     # 1/h            initiator decomposition pre-exponential
    Ed: float     # K              decomposition activation temperature
    Ap: float     # L/(mol h)      propagation pre-exponential
    Ep: float     # K
    At: float     # L/(mol h)      termination pre-exponential
    Et: float     # K
    fi: float     # -              initiator efficiency
    dHr: float    # J/mol          heat of reaction, stored positive
    hA: float     # J/(K h)        jacket heat-transfer group
    rhoCp: float  # J/(L K)        reactor-side volumetric heat capacity
    rhocCpc: float  # J/(L K)      coolant-side volumetric heat capacity
    Mm: float     # g/mol          monomer molar mass
    V: float      # L              reactor volume
    Vc: float     # L              jacket volume
    If: float     # mol/L          initiator feed concentration
    Mf: float     # mol/L          monomer feed concentration
    Tf: float     # K              feed temperature
    Tcf: float    # K              coolant feed temperature

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"parameter {f.name} must be finite and positive, got {v!r}")
        if self.fi > 1.0:
            raise ValueError(f"initiator efficiency fi must be <= 1, got {self.fi!r}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ReactorParameters":
        names = [f.name for f in fields(cls)]
        if len(values) != len(names):
            raise ValueError(f"expected {len(names)} parameter values, got {len(values)}")
        return cls(**{n: float(v) for n, v in zip(names, values)})

    def scaled_by(self, eta) -> "ReactorParameters":
        """Parameters multiplied componentwise by a nominal-relative vector."""
        return ReactorParameters.from_array(self.as_array() * np.asarray(eta, dtype=float))


PARAMETER_NAMES: tuple[str, ...] = tuple(f.name for f in fields(ReactorParameters))

NOMINAL_PARAMETERS = ReactorParameters(
    Ad=2.142e17, Ed=14897.0, Ap=3.81e10, Ep=3557.0, At=4.50e12, Et=843.0,
    fi=0.6, dHr=6.99e4, hA=1.05e6, rhoCp=1506.0, rhocCpc=4043.0, Mm=104.14,
    V=3000.0, Vc=3312.4, If=0.5888, Mf=8.6981, Tf=330.0, Tcf=295.0,
)


@dataclass(frozen=True)
class ReactorState:
    I: float
    M: float
    T: float
    Tc: float
    D0: float
    D1: float
    D2: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"state {f.name} must be finite, got {v!r}")
        if self.T <= 0.0 or self.Tc <= 0.0:
            raise ValueError("temperatures must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.I, self.M, self.T, self.Tc, self.D0, self.D1, self.D2])

    @classmethod
    def from_array(cls, values) -> "ReactorState":
        return cls(*(float(v) for v in values))


STATE_NAMES: tuple[str, ...] = ("I", "M", "T", "Tc", "D0", "D1", "D2")


@dataclass(frozen=True)
class ReactorInputs:
    Qi: float
    Qs: float
    Qm: float
    Qc: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"flow {f.name} must be finite and non-negative, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.Qi, self.Qs, self.Qm, self.Qc])

    @classmethod
    def from_array(cls, values) -> "ReactorInputs":
        return cls(*(float(v) for v in values))


INPUT_NAMES: tuple[str, ...] = ("Qi", "Qs", "Qm", "Qc")


@dataclass(frozen=True)
class RateConstants:
    kd: float
    kp: float
    kt: float


@dataclass(frozen=True)
class ModelVariant:
    """Switches for the three balance terms whose printed form is suspect.

    Defaults reproduce the equations as printed.  The ``physical`` variant
    uses the total outflow in the reactor energy balance, the coolant-side
    capacity in the jacket balance, and a dimensionless polydispersity.
    """

    energy_balance_flow: str = "as_printed_Qi"      # or "total_flow_Qt"
    jacket_capacity: str = "as_printed_rhoCpV"      # or "physical_rhocCpcVc"
    pd_mm_factor: str = "as_printed_with_Mm"        # or "without_Mm"

    _ALLOWED = {
        "energy_balance_flow": ("as_printed_Qi", "total_flow_Qt"),
        "jacket_capacity": ("as_printed_rhoCpV", "physical_rhocCpcVc"),
        "pd_mm_factor": ("as_printed_with_Mm", "without_Mm"),
    }

    def __post_init__(self):
        for name, allowed in self._ALLOWED.items():
            v = getattr(self, name)
            if v not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {v!r}")

    @classmethod
    def as_printed(cls) -> "ModelVariant":
        return cls()

    @classmethod
    def physical(cls) -> "ModelVariant":
        return cls(energy_balance_flow="total_flow_Qt",
                   jacket_capacity="physical_rhocCpcVc",
                   pd_mm_factor="without_Mm")


@dataclass(frozen=True)
class AlgebraicOutputs:
    P: float    # mol/L  quasi-steady radical concentration
    Qt: float   # L/h    total feed/outflow
    Mw: float   # g/mol  weight-average molecular weight (nan if D1 == 0)
    PD: float   # -      polydispersity (nan if D1 == 0)
    eta: float  # viscosity correlate (nan if Mw undefined)


OUTPUT_NAMES: tuple[str, ...] = ("P", "Qt", "Mw", "PD", "eta")
SERIES_NAMES: tuple[str, ...] = INPUT_NAMES + STATE_NAMES + OUTPUT_NAMES


def rate_constants(T: float, params: ReactorParameters) -> RateConstants:
    """Arrhenius rate constants at temperature T [K]."""
    if not (isinstance(T, (int, float, np.floating)) and math.isfinite(T)) or T <= 0.0:
        raise ValueError(f"temperature must be finite and positive, got {T!r}")
    return RateConstants(
        kd=params.Ad * math.exp(-params.Ed / T),
        kp=params.Ap * math.exp(-params.Ep / T),
        kt=params.At * math.exp(-params.Et / T),
    )


def _radical_conc(kd: float, kt: float, I: float, fi: float) -> float:
    # Quasi-steady radical balance; clamp transient negative initiator.
    return math.sqrt(max(2.0 * fi * kd * I, 0.0) / kt)


def _make_rhs(params: ReactorParameters, variant: ModelVariant):
    """Closure over plain floats for the integrator hot loop."""
    Ad, Ed, Ap = float(params.Ad), float(params.Ed), float(params.Ap)
    Ep, At, Et = float(params.Ep), float(params.At), float(params.Et)
    Mm = float(params.Mm)
    If_, Mf_ = float(params.If), float(params.Mf)
    Tf_, Tcf_ = float(params.Tf), float(params.Tcf)
    inv_v = 1.0 / float(params.V)
    inv_vc = 1.0 / float(params.Vc)
    two_fi = 2.0 * float(params.fi)
    heat_coef = float(params.dHr) / float(params.rhoCp)
    exch_reactor = float(params.hA) * inv_v / float(params.rhoCp)
    if variant.jacket_capacity == "physical_rhocCpcVc":
        exch_jacket = float(params.hA) * inv_vc / float(params.rhocCpc)
    else:
        exch_jacket = exch_reactor
    use_qt = variant.energy_balance_flow == "total_flow_Qt"
    exp = math.exp
    sqrt = math.sqrt

    log_Ad, log_Ap, log_At = math.log(Ad), math.log(Ap), math.log(At)

    def rhs(t, y, u):
        I, M, T, Tc, D0, D1, D2 = y
        Qi, Qs, Qm, Qc = u
        Qt = Qi + Qs + Qm
        # cap each rate constant in log space so wild trial steps yield
        # large-but-finite rates (a rejected step) instead of inf products
        # that turn into NaN derivatives; e**150 squares without overflow
        inv_t = -1.0 / T if T != 0.0 else -math.inf
        kd = exp(min(log_Ad + Ed * inv_t, 150.0))
        kp = exp(min(log_Ap + Ep * inv_t, 150.0))
        kt = exp(min(log_At + Et * inv_t, 150.0))
        if kt > 1.0e-30:
            P = sqrt(two_fi * kd * (I if I > 0.0 else 0.0) / kt)
            transfer = kp * kp / kt
        else:
            # frozen kinetics (T -> 0+ on a wild trial step): every rate
            # constant underflows together, so the radical pool is empty
            P = 0.0
            transfer = 0.0
        growth = kp * M * P
        dil = Qt * inv_v
        exch = exch_reactor * (T - Tc)
        dI = (Qi * If_) * inv_v - dil * I - kd * I
        dM = (Qm * Mf_) * inv_v - dil * M - growth
        dT = (dil if use_qt else Qi * inv_v) * (Tf_ - T) + heat_coef * growth - exch
        dTc = Qc * inv_vc * (Tcf_ - Tc) + exch_jacket * (T - Tc)
        dD0 = 0.5 * kt * P * P - dil * D0
        dD1 = Mm * growth - dil * D1
        dD2 = 5.0 * Mm * growth + Mm * transfer * M * M - dil * D2
        return (dI, dM, dT, dTc, dD0, dD1, dD2)

    return rhs


def reactor_rhs(
    t: float,
    state: ReactorState,
    inputs: ReactorInputs,
    params: ReactorParameters,
    variant: ModelVariant = ModelVariant(),
) -> np.ndarray:
    """Time derivative of the 7-component state."""
    y = state.as_array()
    u = inputs.as_array()
    if not (np.isfinite(y).all() and np.isfinite(u).all()):
        raise ValueError("state and inputs must be finite")
    rhs = _make_rhs(params, variant)
    return np.array(rhs(t, y.tolist(), u.tolist()))


def algebraic_outputs(
    state: ReactorState,
    inputs: ReactorInputs,
    params: ReactorParameters,
    variant: ModelVariant = ModelVariant(),
) -> AlgebraicOutputs:
    """Radical concentration, total flow and polymer-quality outputs.

    Mw, PD and eta are nan while no dead polymer is present (D1 == 0)."""
    k = rate_constants(state.T, params)
    P = _radical_conc(k.kd, k.kt, state.I, params.fi)
    Qt = inputs.Qi + inputs.Qs + inputs.Qm
    if state.D1 > 0.0:
        Mw = params.Mm * state.D2 / state.D1
        PD = state.D2 * state.D0 / (state.D1 * state.D1)
        if variant.pd_mm_factor == "as_printed_with_Mm":
            PD *= params.Mm
        eta = VISCOSITY_COEF * Mw ** VISCOSITY_EXP
    else:
        Mw = PD = eta = math.nan
    return AlgebraicOutputs(P=P, Qt=Qt, Mw=Mw, PD=PD, eta=eta)


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant input programme: equal holds, one level row each."""

    step_levels: np.ndarray   # (n_steps, 4) columns Qi, Qs, Qm, Qc
    hold_duration: float      # h
    start_time: float = 0.0

    def __post_init__(self):
        levels = np.asarray(self.step_levels, dtype=float)
        if levels.ndim != 2 or levels.shape[1] != 4 or levels.shape[0] < 1:
            raise ValueError("step_levels must be a (n_steps, 4) array")
        if not np.isfinite(levels).all() or (levels < 0.0).any():
            raise ValueError("step levels must be finite and non-negative")
        if not (math.isfinite(self.hold_duration) and self.hold_duration > 0.0):
            raise ValueError("hold_duration must be positive")
        object.__setattr__(self, "step_levels", levels)

    @property
    def n_steps(self) -> int:
        return self.step_levels.shape[0]

    @property
    def duration(self) -> float:
        return self.n_steps * self.hold_duration

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def step_index(self, t: float) -> int:
        idx = int(math.floor((t - self.start_time) / self.hold_duration))
        return min(max(idx, 0), self.n_steps - 1)

    def u_at(self, t: float) -> np.ndarray:
        return self.step_levels[self.step_index(t)]

    def step_times(self) -> np.ndarray:
        """Interior discontinuity times (integration restarts there)."""
        return self.start_time + self.hold_duration * np.arange(1, self.n_steps)


@dataclass
class Trajectory:
    """Sampled simulation record: inputs, states and algebraic outputs."""

    times: np.ndarray     # (N,)
    inputs: np.ndarray    # (N, 4)
    states: np.ndarray    # (N, 7)
    outputs: np.ndarray   # (N, 5)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        n = self.times.shape[0]
        if n < 2:
            raise ValueError("a trajectory needs at least two samples")
        if (np.diff(self.times) <= 0.0).any():
            raise ValueError("times must be strictly increasing")
        for name, arr, width in (("inputs", self.inputs, 4),
                                 ("states", self.states, 7),
                                 ("outputs", self.outputs, 5)):
            if arr.shape != (n, width):
                raise ValueError(f"{name} must have shape ({n}, {width})")

    def __len__(self) -> int:
        return self.times.shape[0]

    def series(self, name: str) -> np.ndarray:
        """Column by name, searched across inputs, states and outputs."""
        if name == "time":
            return self.times
        if name in INPUT_NAMES:
            return self.inputs[:, INPUT_NAMES.index(name)]
        if name in STATE_NAMES:
            return self.states[:, STATE_NAMES.index(name)]
        if name in OUTPUT_NAMES:
            return self.outputs[:, OUTPUT_NAMES.index(name)]
        raise KeyError(f"unknown series {name!r}")

    def replace_series(self, name: str, values: np.ndarray) -> "Trajectory":
        """Copy with one column replaced (times immutable)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.times.shape:
            raise ValueError("replacement series has wrong length")
        inputs, states, outputs = self.inputs.copy(), self.states.copy(), self.outputs.copy()
        if name in INPUT_NAMES:
            inputs[:, INPUT_NAMES.index(name)] = values
        elif name in STATE_NAMES:
            states[:, STATE_NAMES.index(name)] = values
        elif name in OUTPUT_NAMES:
            outputs[:, OUTPUT_NAMES.index(name)] = values
        else:
            raise KeyError(f"unknown series {name!r}")
        return Trajectory(self.times.copy(), inputs, states, outputs)


def _outputs_from_states(states: np.ndarray, inputs: np.ndarray,
                         params: ReactorParameters, variant: ModelVariant) -> np.ndarray:
    I = states[:, 0]
    T = states[:, 2]
    D0, D1, D2 = states[:, 4], states[:, 5], states[:, 6]
    kd = params.Ad * np.exp(-params.Ed / T)
    kt = params.At * np.exp(-params.Et / T)
    P = np.sqrt(np.maximum(2.0 * params.fi * kd * I, 0.0) / kt)
    Qt = inputs[:, 0] + inputs[:, 1] + inputs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        Mw = np.where(D1 > 0.0, params.Mm * D2 / D1, np.nan)
        PD = np.where(D1 > 0.0, D2 * D0 / (D1 * D1), np.nan)
        if variant.pd_mm_factor == "as_printed_with_Mm":
            PD = PD * params.Mm
        eta = np.where(np.isfinite(Mw), VISCOSITY_COEF * Mw ** VISCOSITY_EXP, np.nan)
    return np.column_stack([P, Qt, Mw, PD, eta])


def integrate(
    y0: ReactorState,
    schedule: InputSchedule,
    params: ReactorParameters,
    variant: ModelVariant = ModelVariant(),
    grid: np.ndarray | None = None,
    rtol: float = 1.0e-8,
    atol: float = 1.0e-10,
    max_steps: int = 500_000,
) -> Trajectory:
    """Simulate over a sampling grid, restarting at every input step.

    ``grid`` must be strictly increasing and lie inside the schedule span;
    the state is reported exactly at the grid times.  A sample falling on a
    step boundary carries the incoming (new) input level."""
    if grid is None:
        grid = np.arange(schedule.start_time, schedule.end_time + 1e-9, 1.0)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 2:
        raise ValueError("grid must be 1-D with at least two samples")
    if (np.diff(grid) <= 0.0).any():
        raise ValueError("grid times must be strictly increasing")
    if grid[0] < schedule.start_time - 1e-12 or grid[-1] > schedule.end_time + 1e-12:
        raise ValueError("grid must lie within the schedule span")

    rhs = _make_rhs(params, variant)
    breaks = [t for t in schedule.step_times() if grid[0] < t < grid[-1]]
    edges = [grid[0], *breaks, grid[-1]]

    states = np.empty((grid.shape[0], 7))
    y = [float(v) for v in y0.as_array()]
    states[0] = y
    gi = 1  # next grid index to fill
    for seg_start, seg_end in zip(edges[:-1], edges[1:]):
        # plain floats: the stepper works on Python scalars throughout
        u = tuple(float(v) for v in schedule.u_at(0.5 * (seg_start + seg_end)))
        f = lambda t, yy: rhs(t, yy, u)  # noqa: E731 - tight closure
        targets = []
        while gi < grid.shape[0] and grid[gi] <= seg_end:
            targets.append(grid[gi])
            gi += 1
        stop_at_edge = (not targets) or targets[-1] < seg_end
        if stop_at_edge:
            targets.append(seg_end)
        sols = solve_to(f, seg_start, y, targets, rtol=rtol, atol=atol,
                        max_steps=max_steps)
        y = sols[-1]
        n_grid = len(targets) - (1 if stop_at_edge else 0)
        for k in range(n_grid):
            states[gi - n_grid + k] = sols[k]

    inputs = np.array([schedule.u_at(t) for t in grid])
    outputs = _outputs_from_states(states, inputs, params, variant)
    return Trajectory(times=grid.copy(), inputs=inputs, states=states, outputs=outputs)


def steady_state_guess(params: ReactorParameters, inputs: ReactorInputs) -> ReactorState:
    """Coarse starting point from the linearized balances at feed temperature."""
    Qt = inputs.Qi + inputs.Qs + inputs.Qm
    if Qt <= 0.0:
        raise ValueError("total flow must be positive")
    T = params.Tf
    k = rate_constants(T, params)
    I = inputs.Qi * params.If / (Qt + k.kd * params.V)
    P = _radical_conc(k.kd, k.kt, I, params.fi)
    M = inputs.Qm * params.Mf / (Qt + k.kp * P * params.V)
    growth = k.kp * M * P
    tau = params.V / Qt
    return ReactorState(
        I=I, M=M, T=T, Tc=0.5 * (T + params.Tcf),
        D0=max(0.5 * k.kt * P * P * tau, 1e-12),
        D1=max(params.Mm * growth * tau, 1e-9),
        D2=max((5.0 * params.Mm * growth + params.Mm * k.kp ** 2 / k.kt * M * M) * tau, 1e-9),
    )


def _residual_norm(fvec: np.ndarray, y: np.ndarray) -> float:
    scale = np.maximum(np.abs(y), 1.0)
    return float(np.max(np.abs(fvec) / scale))


def find_steady_state(
    params: ReactorParameters,
    inputs: ReactorInputs,
    variant: ModelVariant = ModelVariant(),
    guess: ReactorState | None = None,
    tol: float = 1.0e-9,
    max_iter: int = 80,
) -> ReactorState:
    """Steady state by damped Newton on the balance residuals.

    The Jacobian comes from central finite differences.  If Newton stalls,
    a long constant-input integration re-seeds it (the plant is open-loop
    stable).  The scaled residual max|f_i|/max(|y_i|, 1) must fall below
    ``tol``, else SteadyStateError carries the best norm reached."""
    rhs = _make_rhs(params, variant)
    u = tuple(inputs.as_array())

    def fvec(y: np.ndarray) -> np.ndarray:
        return np.array(rhs(0.0, y.tolist(), u))

    y = (guess or steady_state_guess(params, inputs)).as_array()
    best_norm = math.inf
    fallback_used = False
    f = fvec(y)
    norm = _residual_norm(f, y)
    for _ in range(max_iter):
        if norm < tol:
            return ReactorState.from_array(y)
        best_norm = min(best_norm, norm)
        J = np.empty((7, 7))
        for j in range(7):
            h = 1.0e-7 * max(abs(y[j]), 1.0e-10)
            yp, ym = y.copy(), y.copy()
            yp[j] += h
            ym[j] -= h
            J[:, j] = (fvec(yp) - fvec(ym)) / (2.0 * h)
        try:
            step = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            step = None
        improved = False
        if step is not None:
            lam = 1.0
            for _ in range(12):
                y_new = y + lam * step
                if y_new[2] > 1.0 and y_new[3] > 1.0:  # keep temperatures physical
                    f_new = fvec(y_new)
                    norm_new = _residual_norm(f_new, y_new)
                    if math.isfinite(norm_new) and norm_new < norm:
                        y, f, norm = y_new, f_new, norm_new
                        improved = True
                        break
                lam *= 0.5
        if not improved:
            if fallback_used:
                raise SteadyStateError("Newton stalled after integration fallback",
                                       min(best_norm, norm))
            # Long integration toward the attractor, then retry Newton.
            fallback_used = True
            sched = InputSchedule(step_levels=np.array([inputs.as_array()]),
                                  hold_duration=3000.0)
            traj = integrate(ReactorState.from_array(y), sched, params, variant,
                             grid=np.array([0.0, 3000.0]), rtol=1e-10, atol=1e-12)
            y = traj.states[-1]
            f = fvec(y)
            norm = _residual_norm(f, y)
    if norm < tol:
        return ReactorState.from_array(y)
    raise SteadyStateError("steady-state iteration budget exhausted",
                           min(best_norm, norm))


# -- trajectory CSV ---------------------------------------------------------

TRAJECTORY_HEADER = ("time", "Qi", "Qs", "Qm", "Qc", "I", "M", "T", "Tc",
                     "D0", "D1", "D2", "P", "Qt", "Mw", "PD", "eta")


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write a trajectory with full-precision (round-trip) decimals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k in range(len(traj)):
            row = [traj.times[k], *traj.inputs[k], *traj.states[k], *traj.outputs[k]]
            w.writerow([_fmt(v) for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header!r}")
        data = np.array([[float(v) for v in row] for row in r])
    return Trajectory(times=data[:, 0], inputs=data[:, 1:5],
                      states=data[:, 5:12], outputs=data[:, 12:17])
