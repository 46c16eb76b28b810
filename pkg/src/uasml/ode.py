"""Embedded Runge-Kutta 4(5) integrator (Dormand-Prince pair).

Plain-Python stepper over small state vectors.  The right-hand side is
called with float lists, which keeps a 7-state reactor evaluation around a
microsecond; numpy arrays of that size would cost an order of magnitude
more in the MCMC hot loop.  Stages are unrolled for the same reason.
Fully deterministic: identical inputs give bit-identical output.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence


class IntegrationError(RuntimeError):
    """Integration failed; ``t_reached`` holds the last accepted time."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (t_reached={t_reached!r})")
        self.t_reached = t_reached


# Dormand-Prince 5(4) coefficients.  The 5th-order solution is propagated;
# the embedded 4th-order difference drives step control.  FSAL: the last
# stage is the first stage of the next step.
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
A71, A73, A74, A75, A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
# b5 - b4: weights of the embedded error estimate.
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_BLOWUP = 1.0e12


def solve_to(
    f: Callable[[float, Sequence[float]], Sequence[float]],
    t0: float,
    y0: Sequence[float],
    t_out: Sequence[float],
    rtol: float = 1.0e-8,
    atol: float = 1.0e-10,
    max_step: float = math.inf,
    first_step: float | None = None,
    max_steps: int = 500_000,
) -> list[list[float]]:
    """Integrate dy/dt = f(t, y) from t0, reporting the state exactly at each
    time in ``t_out`` (strictly increasing, all >= t0).  Returns one state
    list per output time.  The rhs is assumed smooth over the whole span;
    restart the solver at known discontinuities.  ``max_steps`` bounds the
    total number of step attempts so a stiff or thrashing problem fails
    instead of spinning."""
    # Coerce every scalar that feeds step arithmetic: one numpy float here
    # would silently promote all stage math to numpy scalars (an order of
    # magnitude slower, and overflow warns instead of raising).
    y = [float(v) for v in y0]
    t = float(t0)
    rtol, atol, max_step = float(rtol), float(atol), float(max_step)
    out: list[list[float]] = []
    targets = [float(tv) for tv in t_out]
    if any(tb <= ta for ta, tb in zip(targets, targets[1:])):
        raise ValueError("output times must be strictly increasing")
    if targets and targets[0] < t:
        raise ValueError("output times must not precede t0")

    k1 = [float(v) for v in f(t, y)]
    span = (targets[-1] - t) if targets else 0.0
    if first_step is not None:
        h = float(first_step)
    else:
        # Modest heuristic; the controller corrects it within a step or two.
        ynorm = max((abs(v) for v in y), default=0.0)
        fnorm = max((abs(v) for v in k1), default=0.0)
        h = 0.01 * (ynorm + atol) / (fnorm + 1.0e-30)
        h = min(h, 0.1 * span if span > 0.0 else 1.0, max_step)
    h = max(h, 1.0e-12)

    attempts = 0
    for t_target in targets:
        if t_target <= t:  # t_target == t0
            out.append(list(y))
            continue
        while t < t_target:
            attempts += 1
            if attempts > max_steps:
                raise IntegrationError("step budget exhausted", t)
            h = min(h, max_step)
            if t + h >= t_target:
                h_try = t_target - t
                clipped = True
            else:
                h_try = h
                clipped = False
            if h_try < 1.0e-13 * max(abs(t), 1.0):
                raise IntegrationError("step size underflow", t)

            hh = h_try
            try:
                k2 = f(t + C2 * hh, [yi + hh * (A21 * a) for yi, a in zip(y, k1)])
                k3 = f(t + C3 * hh, [yi + hh * (A31 * a + A32 * b)
                                     for yi, a, b in zip(y, k1, k2)])
                k4 = f(t + C4 * hh, [yi + hh * (A41 * a + A42 * b + A43 * c)
                                     for yi, a, b, c in zip(y, k1, k2, k3)])
                k5 = f(t + C5 * hh, [yi + hh * (A51 * a + A52 * b + A53 * c + A54 * d)
                                     for yi, a, b, c, d in zip(y, k1, k2, k3, k4)])
                k6 = f(t + hh, [yi + hh * (A61 * a + A62 * b + A63 * c + A64 * d + A65 * e)
                                for yi, a, b, c, d, e in zip(y, k1, k2, k3, k4, k5)])
                y_new = [yi + hh * (A71 * a + A73 * c + A74 * d + A75 * e + A76 * g)
                         for yi, a, c, d, e, g in zip(y, k1, k3, k4, k5, k6)]
                k7 = f(t + hh, y_new)
            except OverflowError:
                # a trial state left float range: reject the attempt exactly
                # like a non-finite result and retry with a smaller step
                y_new, k7 = y, k1
                ok = False
                err_norm = math.inf
            else:
                err_norm_sq = 0.0
                ok = True
                for yi, yn, a, c, d, e, g, q in zip(y, y_new, k1, k3, k4, k5, k6, k7):
                    if not math.isfinite(yn):
                        ok = False
                        break
                    e_i = hh * (E1 * a + E3 * c + E4 * d + E5 * e + E6 * g + E7 * q)
                    sc = atol + rtol * max(abs(yi), abs(yn))
                    r = e_i / sc
                    err_norm_sq += r * r
                err_norm = math.sqrt(err_norm_sq / len(y)) if ok else math.inf

            if ok and err_norm <= 1.0:
                t = t_target if clipped else t + h_try
                y = list(y_new)
                k1 = list(k7)
                for v in y:
                    if abs(v) > _BLOWUP:
                        raise IntegrationError("state blow-up", t)
                if err_norm == 0.0:
                    factor = _MAX_FACTOR
                else:
                    factor = min(_MAX_FACTOR,
                                 max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2))
                # A clipped step must not shrink the working step size.
                h = max(h, h_try * factor) if clipped else h_try * factor
            else:
                if not math.isfinite(err_norm):
                    factor = _MIN_FACTOR
                else:
                    factor = min(1.0, max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2))
                h = h_try * factor
                if h < 1.0e-13 * max(abs(t), 1.0):
                    raise IntegrationError("step size underflow", t)
        out.append(list(y))
    return out
