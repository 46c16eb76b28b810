"""Bayesian calibration by delayed-rejection adaptive Metropolis.

The target is the product of a uniform box prior over nominal-relative
parameters and a Gaussian likelihood whose per-channel observation
variances are themselves resampled each sweep from their conjugate
inverse-gamma conditional.  The proposal adapts to the running chain
covariance; one delayed-rejection stage with a shrunk proposal rescues
rejected sweeps.  Chain diagnostics (Geweke), summary statistics and
two-parameter coverage regions (Gaussian ellipse and a nonparametric
kernel-density highest-density region) live here too.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import reactor as _reactor
from .rng import stream

_log = logging.getLogger(__name__)

__all__ = [
    "InferenceProblem", "VarianceState", "DramConfig", "Chain",
    "CoverageRegion", "ForwardModelError", "SingularCovarianceError",
    "log_likelihood", "sample_variance_posterior", "run_dram", "geweke",
    "chain_stats", "coverage_region", "effective_sample_size",
    "reactor_inference_problem", "write_chain_csv", "read_chain_csv",
    "write_region_csv",
]


class ForwardModelError(RuntimeError):
    """The forward model could not be evaluated at a proposal."""


class SingularCovarianceError(RuntimeError):
    """Draw covariance is numerically singular; no region is defined."""


@dataclass
class InferenceProblem:
    """Likelihood ingredients: a forward model, data, and a box prior.

    ``forward_model`` maps a parameter vector to an (N, ny) prediction
    matrix aligned with ``data``; it may raise ForwardModelError (mapped to
    a -inf posterior).  Bounds are inclusive; ``initial`` defaults to the
    box centre.  For the reactor, parameters are nominal-relative factors.
    """

    forward_model: Callable[[np.ndarray], np.ndarray]
    data: np.ndarray                       # (N, ny)
    bounds: np.ndarray                     # (d, 2)
    param_names: tuple[str, ...]
    channel_names: tuple[str, ...]
    initial: np.ndarray | None = None
    fixed_variances: np.ndarray | None = None   # used when Gibbs sampling is off
    nominal: "_reactor.ReactorParameters | None" = None

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ValueError("bounds must be a (d, 2) array")
        if (self.bounds[:, 0] >= self.bounds[:, 1]).any():
            raise ValueError("each bound must satisfy lo < hi")
        if len(self.param_names) != self.bounds.shape[0]:
            raise ValueError("one name per parameter required")
        if len(self.channel_names) != self.data.shape[1]:
            raise ValueError("one name per data channel required")
        if self.initial is None:
            self.initial = self.bounds.mean(axis=1)
        self.initial = np.asarray(self.initial, dtype=float)
        if self.fixed_variances is None:
            self.fixed_variances = np.ones(self.data.shape[1])
        self.fixed_variances = np.asarray(self.fixed_variances, dtype=float)
        if (self.fixed_variances <= 0.0).any():
            raise ValueError("fixed variances must be positive")

    @property
    def n_params(self) -> int:
        return self.bounds.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def in_bounds(self, x: np.ndarray) -> bool:
        return bool((x >= self.bounds[:, 0]).all() and (x <= self.bounds[:, 1]).all())

    def sse(self, x: np.ndarray) -> np.ndarray | None:
        """Per-channel sum of squared residuals, or None on forward failure."""
        try:
            pred = np.atleast_2d(np.asarray(self.forward_model(x), dtype=float))
        except ForwardModelError:
            return None
        if pred.shape != self.data.shape or not np.isfinite(pred).all():
            return None
        r = self.data - pred
        return np.einsum("ij,ij->j", r, r)


def log_likelihood(x: np.ndarray, problem: InferenceProblem,
                   variances) -> float:
    """-(1/2) sum_j SSE_j / Phi_j; -inf when the forward model fails.

    ``variances`` is a VarianceState or a bare per-channel array.  The
    Phi-dependent normalization is constant within a sweep and is dropped,
    so this is the log-likelihood up to an additive constant."""
    phi = np.asarray(getattr(variances, "phi", variances), dtype=float)
    if (phi <= 0.0).any():
        raise ValueError("observation variances must be positive")
    sse = problem.sse(np.asarray(x, dtype=float))
    if sse is None:
        _log.warning("forward model failed at %s; log-likelihood set to -inf", x)
        return -math.inf
    return float(-0.5 * np.sum(sse / phi))


@dataclass(frozen=True)
class VarianceState:
    """Per-channel observation variance with its conjugate update bookkeeping."""

    phi: np.ndarray      # sampled variances
    n_data: np.ndarray
    sse: np.ndarray
    alpha: np.ndarray    # inverse-gamma shape, N/2
    beta: np.ndarray     # inverse-gamma scale actually used in the draw


def sample_variance_posterior(sse, n_data, rng: np.random.Generator,
                              mode: str = "conventional") -> VarianceState:
    """Draw Phi_j ~ InvGamma(alpha_j, beta_j) with alpha_j = N_j / 2.

    ``conventional`` uses the conjugate scale SSE/2 (mean SSE/(N-2) for
    N > 2).  ``as_printed`` instead plugs in 2/SSE, the reciprocal form the
    source tables print, kept for traceability."""
    sse = np.asarray(sse, dtype=float)
    n_data = np.asarray(n_data, dtype=float)
    if (sse <= 0.0).any():
        raise ValueError("sum of squared residuals must be positive")
    if (n_data <= 0.0).any():
        raise ValueError("n_data must be positive")
    if mode not in ("conventional", "as_printed"):
        raise ValueError(f"unknown variance mode {mode!r}")
    alpha = n_data / 2.0
    beta = sse / 2.0 if mode == "conventional" else 2.0 / sse
    phi = beta / rng.gamma(shape=alpha, scale=1.0, size=alpha.shape)
    return VarianceState(phi=phi, n_data=n_data, sse=sse, alpha=alpha, beta=beta)


@dataclass(frozen=True)
class DramConfig:
    n_samples: int = 5000
    burn_in: int = 1000
    initial_cov_scale: float = 0.01     # diagonal proposal sigma before adaptation
    dr_shrink: float = 0.2              # second-stage proposal scale factor
    adapt_interval: int = 100
    epsilon: float = 1.0e-10            # covariance regularization
    seed: int = 0
    sample_variance: bool = True
    variance_mode: str = "conventional"
    adapt: bool = True
    delayed_rejection: bool = True

    def __post_init__(self):
        if self.n_samples < 1 or not (0 <= self.burn_in < self.n_samples):
            raise ValueError("need n_samples >= 1 and 0 <= burn_in < n_samples")
        if not (0.0 < self.dr_shrink < 1.0):
            raise ValueError("dr_shrink must lie in (0, 1)")
        if self.adapt_interval < 1:
            raise ValueError("adapt_interval must be >= 1")
        if self.initial_cov_scale <= 0.0 or self.epsilon <= 0.0:
            raise ValueError("initial_cov_scale and epsilon must be positive")


@dataclass
class Chain:
    """MCMC record; burn-in draws stay in the arrays and are skipped by
    the post_burn accessors."""

    draws: np.ndarray            # (n, d)
    log_posteriors: np.ndarray   # (n,)
    variance_draws: np.ndarray   # (n, ny)
    accepted: np.ndarray         # (n,) bool
    stages: np.ndarray           # (n,) "first" | "delayed"
    burn_in: int
    param_names: tuple[str, ...]
    channel_names: tuple[str, ...]
    bounds: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def post_burn(self) -> np.ndarray:
        return self.draws[self.burn_in:]

    def post_burn_variances(self) -> np.ndarray:
        return self.variance_draws[self.burn_in:]

    @property
    def acceptance_fraction(self) -> float:
        acc = self.accepted[self.burn_in:]
        return float(acc.mean()) if acc.size else math.nan


def _log_uniform(rng: np.random.Generator) -> float:
    # 1 - random() lies in (0, 1], so the log never sees zero
    return math.log(1.0 - rng.random())


def run_dram(problem: InferenceProblem, config: DramConfig) -> Chain:
    """Delayed-rejection adaptive Metropolis over the problem's box prior.

    Out-of-box proposals are rejected outright (uniform prior support).
    After every sweep the observation variances are redrawn from their
    conjugate conditional at the current state, which rescales the
    posterior used by the next sweep."""
    rng = stream(config.seed, "dram")
    d = problem.n_params
    ny = problem.n_channels
    sd = 2.4 ** 2 / d
    warnings: list[str] = []

    x = problem.initial.copy()
    if not problem.in_bounds(x):
        raise ValueError("initial point lies outside the prior box")
    sse_x = problem.sse(x)
    if sse_x is None:
        raise ForwardModelError("forward model failed at the initial point")
    sse_x = np.maximum(sse_x, 1e-300)
    n_data = np.full(ny, float(problem.data.shape[0]))
    if config.sample_variance:
        phi = sse_x / n_data  # moment start; replaced by the first Gibbs draw
    else:
        phi = problem.fixed_variances.copy()
    ll_x = float(-0.5 * np.sum(sse_x / phi))

    chol = config.initial_cov_scale * np.eye(d)
    # running moments over the full history for adaptation
    hist_mean = np.zeros(d)
    hist_m2 = np.zeros((d, d))
    n_hist = 0
    n_forward_failures = 0

    draws = np.empty((config.n_samples, d))
    logps = np.empty(config.n_samples)
    phis = np.empty((config.n_samples, ny))
    accepted = np.zeros(config.n_samples, dtype=bool)
    stages = np.empty(config.n_samples, dtype=object)

    def propose_sse(y: np.ndarray):
        nonlocal n_forward_failures
        if not problem.in_bounds(y):
            return None
        s = problem.sse(y)
        if s is None:
            n_forward_failures += 1
        return s

    def loglik(s: np.ndarray | None) -> float:
        if s is None:
            return -math.inf
        return float(-0.5 * np.sum(s / phi))

    for k in range(config.n_samples):
        y1 = x + chol @ rng.standard_normal(d)
        sse_1 = propose_sse(y1)
        ll_1 = loglik(sse_1)
        log_a1 = min(0.0, ll_1 - ll_x)
        if log_a1 == 0.0 or _log_uniform(rng) < log_a1:
            x, sse_x, ll_x = y1, sse_1, ll_1
            accepted[k] = True
            stages[k] = "first"
        elif config.delayed_rejection:
            # Shrunk second-stage proposal with the two-stage acceptance rule:
            # the first-stage kernel evaluated at both endpoints reweights the
            # ratio so detailed balance holds for the composite kernel.
            chol2 = config.dr_shrink * chol
            y2 = x + chol2 @ rng.standard_normal(d)
            sse_2 = propose_sse(y2)
            ll_2 = loglik(sse_2)
            if math.isfinite(ll_2):
                z_num = np.linalg.solve(chol, y1 - y2)
                z_den = np.linalg.solve(chol, y1 - x)
                log_q_num = -0.5 * float(z_num @ z_num)
                log_q_den = -0.5 * float(z_den @ z_den)
                a1_rev = min(0.0, ll_1 - ll_2)   # alpha1(y2 -> y1)
                a1_fwd = log_a1                  # alpha1(x -> y1), < 0 here
                log_one_minus_rev = math.log1p(-math.exp(a1_rev)) if a1_rev < 0.0 else -math.inf
                log_one_minus_fwd = math.log1p(-math.exp(a1_fwd))
                log_a2 = (ll_2 + log_q_num + log_one_minus_rev) - \
                         (ll_x + log_q_den + log_one_minus_fwd)
                if _log_uniform(rng) < log_a2:
                    x, sse_x, ll_x = y2, sse_2, ll_2
                    accepted[k] = True
            stages[k] = "delayed"
        else:
            stages[k] = "first"

        if config.sample_variance:
            vs = sample_variance_posterior(np.maximum(sse_x, 1e-300), n_data, rng,
                                           mode=config.variance_mode)
            phi = vs.phi
            ll_x = float(-0.5 * np.sum(sse_x / phi))

        draws[k] = x
        logps[k] = ll_x
        phis[k] = phi

        n_hist += 1
        delta = x - hist_mean
        hist_mean += delta / n_hist
        hist_m2 += np.outer(delta, x - hist_mean)
        if config.adapt and n_hist >= max(config.adapt_interval, 2) \
                and (k + 1) % config.adapt_interval == 0:
            cov = hist_m2 / (n_hist - 1)
            c = sd * cov + config.epsilon * np.eye(d)
            try:
                chol = np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                chol = np.linalg.cholesky(c + 1e3 * config.epsilon * np.eye(d))

    if n_forward_failures:
        warnings.append(f"{n_forward_failures} forward-model failures were rejected")
    acc = float(accepted[config.burn_in:].mean())
    if acc < 0.01:
        warnings.append(f"post-burn-in acceptance fraction {acc:.4f} below 1%")
    elif acc > 0.99:
        warnings.append(f"post-burn-in acceptance fraction {acc:.4f} above 99%")

    return Chain(draws=draws, log_posteriors=logps, variance_draws=phis,
                 accepted=accepted, stages=np.array(stages, dtype=object),
                 burn_in=config.burn_in, param_names=tuple(problem.param_names),
                 channel_names=tuple(problem.channel_names),
                 bounds=problem.bounds.copy(), warnings=warnings)


# -- diagnostics --------------------------------------------------------------

def geweke(draws, first_fraction: float = 0.1, last_fraction: float = 0.5
           ) -> tuple[np.ndarray, np.ndarray]:
    """Geweke convergence z-scores and two-sided p-values per column.

    Compares the means of the leading and trailing chain segments using a
    zero-lag-window (plain variance) spectral estimate."""
    if hasattr(draws, "post_burn"):
        draws = draws.post_burn()
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 100:
        raise ValueError("need at least 100 post-burn-in draws")
    if not (0.0 < first_fraction < 1.0 and 0.0 < last_fraction < 1.0
            and first_fraction + last_fraction <= 1.0):
        raise ValueError("segment fractions must be positive and sum to at most 1")
    n1 = int(math.floor(first_fraction * n))
    n2 = int(math.floor(last_fraction * n))
    a, b = x[:n1], x[n - n2:]
    va, vb = a.var(axis=0, ddof=1), b.var(axis=0, ddof=1)
    if (va == 0.0).any() or (vb == 0.0).any():
        raise ValueError("zero-variance chain segment")
    z = (a.mean(axis=0) - b.mean(axis=0)) / np.sqrt(va / n1 + vb / n2)
    p = 2.0 * stats.norm.sf(np.abs(z))
    return z, p


def chain_stats(chain: Chain) -> dict[str, np.ndarray]:
    """Post-burn-in mean, median and sample standard deviation per parameter."""
    x = chain.post_burn()
    if x.shape[0] < 2:
        raise ValueError("need at least two post-burn-in draws")
    return {
        "mean": x.mean(axis=0),
        "median": np.median(x, axis=0),
        "std": x.std(axis=0, ddof=1),
    }


def effective_sample_size(series: np.ndarray) -> float:
    """ESS from the initial positive sequence of autocorrelations."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return float(n)
    # FFT autocorrelation, Geyer initial positive sequence on pair sums
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n].real / denom
    tau = 1.0
    for k in range(1, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return float(n / tau)


# -- coverage regions ---------------------------------------------------------

@dataclass(frozen=True)
class CoverageRegion:
    """Two-parameter credibility region: ellipse parameters and/or polygon."""

    kind: str                      # "gaussian_ellipse" | "possolo_hdr"
    level: float
    names: tuple[str, str]
    center: np.ndarray
    semi_axes: np.ndarray | None   # ellipse only
    angle: float | None            # ellipse orientation [rad]
    polygon: np.ndarray            # (k, 2) closed vertex loop


def _ellipse_polygon(center, semi_axes, angle, n=256) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * math.pi, n)
    circle = np.column_stack([semi_axes[0] * np.cos(t), semi_axes[1] * np.sin(t)])
    rot = np.array([[math.cos(angle), -math.sin(angle)],
                    [math.sin(angle), math.cos(angle)]])
    poly = circle @ rot.T + center
    poly[-1] = poly[0]
    return poly


def _check_nonsingular(cov: np.ndarray) -> None:
    eig = np.linalg.eigvalsh(cov)
    if eig[0] <= 0.0 or eig[0] < 1e-12 * max(eig[-1], 1e-300):
        raise SingularCovarianceError("draw covariance is numerically singular")


def _kde_hdr_polygon(pts: np.ndarray, level: float) -> np.ndarray:
    """Highest-density region of a Gaussian KDE (Scott bandwidth) as the
    density contour enclosing ``level`` of the sample.

    The sample is whitened so the kernel is isotropic, the density is
    evaluated by binned convolution on a fine grid, and the contour at the
    per-sample density quantile is traced by marching squares."""
    from scipy.ndimage import gaussian_filter, map_coordinates
    from skimage.measure import find_contours

    n = pts.shape[0]
    mean = pts.mean(axis=0)
    cov = np.cov(pts.T)
    _check_nonsingular(cov)
    L = np.linalg.cholesky(cov)
    w = np.linalg.solve(L, (pts - mean).T).T          # whitened, unit covariance
    sigma = n ** (-1.0 / 6.0)                         # Scott factor, d=2

    pad = 4.0 * sigma
    lo = w.min(axis=0) - pad
    hi = w.max(axis=0) + pad
    m = 512
    hx = (hi[0] - lo[0]) / (m - 1)
    hy = (hi[1] - lo[1]) / (m - 1)
    counts, _, _ = np.histogram2d(w[:, 0], w[:, 1], bins=m,
                                  range=[[lo[0] - 0.5 * hx, hi[0] + 0.5 * hx],
                                         [lo[1] - 0.5 * hy, hi[1] + 0.5 * hy]])
    dens = gaussian_filter(counts, sigma=(sigma / hx, sigma / hy), mode="constant")

    # density at the sample points by bilinear interpolation
    ix = (w[:, 0] - lo[0]) / hx
    iy = (w[:, 1] - lo[1]) / hy
    at_pts = map_coordinates(dens, np.vstack([ix, iy]), order=1, mode="nearest")
    threshold = float(np.quantile(at_pts, 1.0 - level))

    contours = find_contours(dens, threshold)
    if not contours:
        raise SingularCovarianceError("no density contour found at the requested level")

    def area(c):
        xx, yy = c[:, 0], c[:, 1]
        return 0.5 * abs(float(np.dot(xx, np.roll(yy, -1)) - np.dot(yy, np.roll(xx, -1))))

    contour = max(contours, key=area)
    wx = lo[0] + contour[:, 0] * hx
    wy = lo[1] + contour[:, 1] * hy
    poly = (np.column_stack([wx, wy]) @ L.T) + mean
    if not np.allclose(poly[0], poly[-1]):
        poly = np.vstack([poly, poly[0]])
    else:
        poly[-1] = poly[0]
    return poly


def coverage_region(chain_or_draws, i: int, j: int, level: float = 0.95,
                    kind: str = "gaussian_ellipse") -> CoverageRegion:
    """Joint credibility region for parameter pair (i, j)."""
    if hasattr(chain_or_draws, "post_burn"):
        draws = chain_or_draws.post_burn()
        names = (chain_or_draws.param_names[i], chain_or_draws.param_names[j])
    else:
        draws = np.asarray(chain_or_draws, dtype=float)
        names = (f"p{i}", f"p{j}")
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    pts = draws[:, [i, j]]
    if kind == "gaussian_ellipse":
        if pts.shape[0] < 3:
            raise ValueError("need at least three draws")
        center = pts.mean(axis=0)
        cov = np.cov(pts.T)
        _check_nonsingular(cov)
        vals, vecs = np.linalg.eigh(cov)
        r2 = stats.chi2.ppf(level, df=2)
        semi = np.sqrt(r2 * vals[::-1])              # major first
        major = vecs[:, ::-1][:, 0]
        angle = math.atan2(major[1], major[0])
        poly = _ellipse_polygon(center, semi, angle)
        return CoverageRegion(kind=kind, level=level, names=names, center=center,
                              semi_axes=semi, angle=angle, polygon=poly)
    if kind == "possolo_hdr":
        if pts.shape[0] < 200:
            raise ValueError("the density region needs at least 200 draws")
        poly = _kde_hdr_polygon(pts, level)
        return CoverageRegion(kind=kind, level=level, names=names,
                              center=pts.mean(axis=0), semi_axes=None,
                              angle=None, polygon=poly)
    raise ValueError(f"unknown region kind {kind!r}")


# -- reactor problem factory --------------------------------------------------

def reactor_inference_problem(
    nominal: "_reactor.ReactorParameters",
    y0: "_reactor.ReactorState",
    schedule: "_reactor.InputSchedule",
    grid: np.ndarray,
    data: np.ndarray,
    channels: Sequence[str] = ("T", "eta"),
    variant: "_reactor.ModelVariant | None" = None,
    bounds_fraction: float = 0.05,
    rtol: float = 1.0e-8,
    atol: float = 1.0e-10,
) -> InferenceProblem:
    """Calibration problem in nominal-relative units over a +/-fraction box."""
    variant = variant or _reactor.ModelVariant()
    if not (0.0 < bounds_fraction < 1.0):
        raise ValueError("bounds_fraction must lie in (0, 1)")
    d = len(_reactor.PARAMETER_NAMES)
    bounds = np.column_stack([np.full(d, 1.0 - bounds_fraction),
                              np.full(d, 1.0 + bounds_fraction)])
    grid = np.asarray(grid, dtype=float)

    def forward(eta: np.ndarray) -> np.ndarray:
        try:
            params = nominal.scaled_by(eta)
            traj = _reactor.integrate(y0, schedule, params, variant, grid,
                                      rtol=rtol, atol=atol)
        except (ValueError, _reactor.IntegrationError) as err:
            raise ForwardModelError(str(err)) from err
        return np.column_stack([traj.series(c) for c in channels])

    return InferenceProblem(
        forward_model=forward, data=data, bounds=bounds,
        param_names=_reactor.PARAMETER_NAMES, channel_names=tuple(channels),
        initial=np.ones(d), nominal=nominal,
    )


# -- persistence --------------------------------------------------------------

def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_chain_csv(chain: Chain, path) -> None:
    header = ["draw_index", "accepted", "stage", "log_posterior",
              *chain.param_names, *(f"phi_{c}" for c in chain.channel_names)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(chain.draws.shape[0]):
            w.writerow([str(k), "1" if chain.accepted[k] else "0", chain.stages[k],
                        _fmt(chain.log_posteriors[k]),
                        *(_fmt(v) for v in chain.draws[k]),
                        *(_fmt(v) for v in chain.variance_draws[k])])


def read_chain_csv(path, burn_in: int, bounds: np.ndarray | None = None) -> Chain:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    if header[:4] != ["draw_index", "accepted", "stage", "log_posterior"]:
        raise ValueError("unexpected chain header")
    phi_cols = [i for i, h in enumerate(header) if h.startswith("phi_")]
    if not phi_cols:
        raise ValueError("chain file lacks variance columns")
    p0, p1 = 4, phi_cols[0]
    param_names = tuple(header[p0:p1])
    channel_names = tuple(h[len("phi_"):] for h in header[p1:])
    draws = np.array([[float(v) for v in row[p0:p1]] for row in rows])
    phis = np.array([[float(v) for v in row[p1:]] for row in rows])
    accepted = np.array([row[1] == "1" for row in rows])
    stages = np.array([row[2] for row in rows], dtype=object)
    logps = np.array([float(row[3]) for row in rows])
    if bounds is None:
        lo = draws.min(axis=0)
        hi = draws.max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        bounds = np.column_stack([lo - 0.01 * span, hi + 0.01 * span])
    return Chain(draws=draws, log_posteriors=logps, variance_draws=phis,
                 accepted=accepted, stages=stages, burn_in=burn_in,
                 param_names=param_names, channel_names=channel_names,
                 bounds=np.asarray(bounds, dtype=float))


def write_region_csv(region: CoverageRegion, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([region.names[0], region.names[1]])
        for x, y in region.polygon:
            w.writerow([_fmt(x), _fmt(y)])
