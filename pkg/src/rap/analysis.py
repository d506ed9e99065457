"""Ensemble statistics, exponent fitting, and model comparisons.

The moment sums of a packing approach power laws; their exponents are read
off as logarithmic derivatives d ln M / d ln n and fitted together with the
finite-n transient as  lambda + b (ln n)^c  (c < 0).  The fractal dimension
follows either from a fitted exponent via gamma = 1 + alpha/(1 - lambda_a)
or directly from the slope of the radius survival curve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from ._util import format_alpha
from .packer import ProbeResult, SnapshotSeries

__all__ = [
    "EnsembleSeries",
    "FitResult",
    "GammaLikelihood",
    "ProbeComparison",
    "FitConvergenceError",
    "TruncationWarning",
    "log_derivative",
    "fit_asymptote",
    "gamma_likelihood",
    "radius_cdf",
    "cdf_slope_dimension",
    "compare_probe_to_model",
]

DEFAULT_FIT_WINDOW = (1000, None)  # n below the transient cut is excluded


class FitConvergenceError(RuntimeError):
    """Nonlinear fit failed; carries the best parameters and residual."""

    def __init__(self, message: str, best: np.ndarray, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


class TruncationWarning(UserWarning):
    """The gamma likelihood support crossed lambda_alpha = 1 and was truncated."""


@dataclass
class EnsembleSeries:
    """Replica-aligned checkpoint series with ensemble mean and spread."""

    ns: np.ndarray
    alphas: tuple[Fraction, ...]
    replica_M: np.ndarray      # (replicas, checkpoints, alphas)
    replica_pore: np.ndarray   # (replicas, checkpoints)
    hist: Optional[np.ndarray] = None   # (replicas, checkpoints, bins)
    hist_lo: Optional[float] = None
    hist_width: Optional[float] = None

    @classmethod
    def from_series(cls, series: Sequence[SnapshotSeries]) -> "EnsembleSeries":
        if not series:
            raise ValueError("need at least one replica")
        first = series[0]
        for s in series[1:]:
            if not np.array_equal(s.ns, first.ns):
                raise ValueError("replicas do not share the same checkpoint grid")
            if s.alphas != first.alphas:
                raise ValueError("replicas do not share the same moment orders")
        M = np.stack([s.M for s in series])
        pore = np.stack([s.pore for s in series])
        hist = None
        if all(s.hist is not None for s in series):
            hist = np.stack([s.hist for s in series])
        return cls(first.ns.copy(), first.alphas, M, pore, hist,
                   first.hist_lo, first.hist_width)

    @property
    def replica_count(self) -> int:
        return self.replica_M.shape[0]

    def moment_series(self, alpha) -> np.ndarray:
        try:
            col = self.alphas.index(Fraction(alpha))
        except ValueError:
            raise KeyError(
                f"moment order {alpha} not in ensemble; available: "
                f"{[format_alpha(a) for a in self.alphas]}") from None
        return self.replica_M[:, :, col]

    def log_derivative_stats(self, alpha=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-replica d ln y / d ln n averaged across replicas.

        alpha=None selects the pore-volume series (exponent lambda_d < 0).
        Returns (n, mean, standard error); the standard error is None-like
        (zeros) for a single replica.
        """
        ys = self.replica_pore if alpha is None else self.moment_series(alpha)
        derivs = np.stack([log_derivative(self.ns, y)[1] for y in ys])
        mean = derivs.mean(axis=0)
        if self.replica_count > 1:
            sem = derivs.std(axis=0, ddof=1) / math.sqrt(self.replica_count)
        else:
            sem = np.zeros_like(mean)
        return self.ns.copy(), mean, sem


def log_derivative(n: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d ln y / d ln n by central differences (one-sided at the ends)."""
    n = np.asarray(n, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if n.size != y.size:
        raise ValueError("n and y must have the same length")
    if n.size < 3:
        raise ValueError(f"need at least 3 points, got {n.size}")
    if np.any(np.diff(n) <= 0):
        raise ValueError("n must be strictly increasing")
    if np.any(y <= 0):
        raise ValueError("y must be positive to take logarithms")
    ln_n = np.log(n)
    ln_y = np.log(y)
    out = np.empty_like(ln_y)
    out[1:-1] = (ln_y[2:] - ln_y[:-2]) / (ln_n[2:] - ln_n[:-2])
    out[0] = (ln_y[1] - ln_y[0]) / (ln_n[1] - ln_n[0])
    out[-1] = (ln_y[-1] - ln_y[-2]) / (ln_n[-1] - ln_n[-2])
    return n.copy(), out


@dataclass(frozen=True)
class FitResult:
    """Asymptote fit g(n) = lambda + b (ln n)^c with 1-sigma on lambda."""

    lam: float
    b: float
    c: float
    sigma_lambda: float
    chi2: float
    window: tuple[int, int]
    n_points: int

    def to_dict(self, alpha=None) -> dict:
        out = {
            "lambda": self.lam,
            "sigma": self.sigma_lambda,
            "b": self.b,
            "c": self.c,
            "chi2": self.chi2,
            "window": list(self.window),
            "n_points": self.n_points,
        }
        if alpha is not None:
            out = {"alpha": format_alpha(Fraction(alpha)), **out}
        return out


def fit_asymptote(n: np.ndarray, g: np.ndarray,
                  weights: Optional[np.ndarray] = None,
                  window: tuple[Optional[int], Optional[int]] = DEFAULT_FIT_WINDOW,
                  ) -> FitResult:
    """Weighted least squares of g ~ lambda + b (ln n)^c with c < 0.

    `weights` are inverse-variance weights (e.g. 1/sem^2 from an ensemble);
    omitted weights mean an unweighted fit whose covariance is scaled by
    the reduced chi-square.  Deterministic given its inputs.
    """
    n = np.asarray(n, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    lo = window[0] if window[0] is not None else 0
    hi = window[1] if window[1] is not None else np.inf
    mask = (n >= lo) & (n <= hi) & np.isfinite(g)
    absolute_sigma = weights is not None
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        mask &= np.isfinite(w) & (w > 0)
        w = w[mask]
    n_fit, g_fit = n[mask], g[mask]
    if n_fit.size < 10:
        raise ValueError(f"need >= 10 points in the fit window, got {n_fit.size}")
    if weights is None:
        w = np.ones_like(g_fit)
    sw = np.sqrt(w)
    ln_n = np.log(n_fit)
    if np.any(ln_n <= 0):
        raise ValueError("fit window must satisfy n > 1")

    def model(params):
        lam, b, c = params
        return lam + b * ln_n**c

    def residuals(params):
        return (model(params) - g_fit) * sw

    # deterministic multi-start over a small grid of transient shapes
    lam0 = float(g_fit[-1])
    best = None
    for c0 in (-0.5, -1.0, -2.0):
        b0 = (float(g_fit[0]) - lam0) / ln_n[0] ** c0
        if not math.isfinite(b0):
            b0 = 0.0
        try:
            sol = optimize.least_squares(
                residuals, x0=[lam0, b0, c0],
                bounds=([-np.inf, -np.inf, -np.inf], [np.inf, np.inf, -1e-9]),
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        except Exception:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitConvergenceError("asymptote fit failed from every start",
                                  np.array([lam0, 0.0, -1.0]), np.inf)

    lam, b, c = best.x
    chi2 = float(2.0 * best.cost)
    dof = max(n_fit.size - 3, 1)
    jac = best.jac
    try:
        cov = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        raise FitConvergenceError("singular covariance in asymptote fit",
                                  best.x, chi2)
    if not absolute_sigma:
        cov = cov * (chi2 / dof)
    sigma = float(math.sqrt(max(cov[0, 0], 0.0)))
    if sigma == 0.0:
        sigma = 5e-16 * max(abs(lam), 1.0)  # noiseless data: machine-level floor
    win = (int(n_fit[0]), int(n_fit[-1]))
    return FitResult(float(lam), float(b), float(c), sigma, chi2, win, int(n_fit.size))


@dataclass(frozen=True)
class GammaLikelihood:
    """Summary of the fractal-dimension likelihood from one exponent fit."""

    alpha: Fraction
    mode: float
    lo68: float
    hi68: float
    truncated_mass: float

    def to_dict(self) -> dict:
        return {
            "alpha": format_alpha(self.alpha),
            "mode": self.mode,
            "lo68": self.lo68,
            "hi68": self.hi68,
            "truncated_mass": self.truncated_mass,
        }


def gamma_likelihood(fit: FitResult, alpha) -> GammaLikelihood:
    """Propagate a Gaussian lambda_alpha fit through gamma = 1 + a/(1 - lambda).

    Exact density transformation (not linearized): the returned mode solves
    the stationarity of the transformed density, and the interval holds the
    central 68.27% of the mass restricted to lambda < 1.
    """
    a = float(Fraction(alpha))
    if a <= 0:
        raise ValueError("alpha must be positive")
    lam_hat, sigma = fit.lam, fit.sigma_lambda
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if lam_hat >= 1.0:
        raise ValueError(f"fitted lambda {lam_hat} has no finite gamma (must be < 1)")
    if sigma == 0.0:
        g = 1.0 + a / (1.0 - lam_hat)
        return GammaLikelihood(Fraction(alpha), g, g, g, 0.0)

    trunc = float(stats.norm.sf(1.0, loc=lam_hat, scale=sigma))
    if trunc > 1e-12:
        warnings.warn(
            f"gamma likelihood truncated: P(lambda >= 1) = {trunc:.3g}",
            TruncationWarning, stacklevel=2)

    # mode of the transformed density: d/dgamma [log N(lambda(gamma)) - 2 log(gamma-1)] = 0
    lam_mode = 0.5 * ((1.0 + lam_hat) - math.sqrt((1.0 - lam_hat) ** 2 + 8.0 * sigma**2))
    mode = 1.0 + a / (1.0 - lam_mode)

    # central 68% of lambda | lambda < 1, mapped through the monotone transform
    p_below = float(stats.norm.cdf(1.0, loc=lam_hat, scale=sigma))
    half = 0.5 * math.erf(1.0 / math.sqrt(2.0))  # 0.3413...
    q_lo = (0.5 - half) * p_below
    q_hi = (0.5 + half) * p_below
    lam_lo = float(stats.norm.ppf(q_lo, loc=lam_hat, scale=sigma))
    lam_hi = float(stats.norm.ppf(q_hi, loc=lam_hat, scale=sigma))
    return GammaLikelihood(Fraction(alpha),
                           mode,
                           1.0 + a / (1.0 - lam_lo),
                           1.0 + a / (1.0 - lam_hi),
                           trunc)


def radius_cdf(ensemble: EnsembleSeries, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble-averaged survival counts N_n(r' > r) on the log-r bin grid.

    Returns (r, N) with r[0] = 0 so that N[0] equals the checkpoint n
    exactly; subsequent r values are the histogram bin edges.
    """
    if ensemble.hist is None:
        raise ValueError("this ensemble carries no radius histograms")
    idx = None
    pos = np.searchsorted(ensemble.ns, n)
    if pos < ensemble.ns.size and ensemble.ns[pos] == n:
        idx = int(pos)
    if idx is None:
        raise KeyError(f"no checkpoint at n={n}")
    counts = ensemble.hist[:, idx, :].astype(np.float64)   # (replicas, bins)
    # counts above each bin's lower edge, averaged over replicas
    above = counts[:, ::-1].cumsum(axis=1)[:, ::-1].mean(axis=0)
    edges = ensemble.hist_lo + ensemble.hist_width * np.arange(counts.shape[1])
    r = np.concatenate(([0.0], np.exp(edges)))
    big_n = np.concatenate(([counts.sum(axis=1).mean()], above))
    return r, big_n


def cdf_slope_dimension(r: np.ndarray, big_n: np.ndarray,
                        count_window: tuple[float, float] = (100.0, 3e4),
                        ) -> tuple[float, float]:
    """Fractal dimension from the radius survival curve: gamma = 1 - slope.

    Fits a line to (ln r, ln N) over the scaling window selected by survival
    counts in `count_window` (the transient at large r and the resolution
    floor at small r are both excluded).  Returns (gamma, slope stderr).
    """
    r = np.asarray(r, dtype=np.float64)
    big_n = np.asarray(big_n, dtype=np.float64)
    mask = (r > 0) & (big_n >= count_window[0]) & (big_n <= count_window[1])
    if mask.sum() < 5:
        raise ValueError(f"scaling window too small: {int(mask.sum())} usable bins")
    x = np.log(r[mask])
    y = np.log(big_n[mask])
    slope, _, stderr = _line_fit(x, y)
    return 1.0 - slope, stderr


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    a = np.vstack([x, np.ones_like(x)]).T
    coef, res, _, _ = np.linalg.lstsq(a, y, rcond=None)
    dof = max(x.size - 2, 1)
    s2 = (res[0] / dof) if res.size else 0.0
    cov = s2 * np.linalg.inv(a.T @ a)
    return float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[0, 0], 0.0)))


@dataclass(frozen=True)
class ProbeComparison:
    """Empirical-vs-model comparison for one probe run and one model CDF."""

    ks_distance: float
    ln_r_centers: np.ndarray
    empirical_density: np.ndarray
    model_density: np.ndarray


def compare_probe_to_model(probe: ProbeResult,
                           model_cdf: Callable[[np.ndarray], np.ndarray],
                           bins: int = 256) -> ProbeComparison:
    """Kolmogorov-Smirnov distance plus paired -dP/d ln r density tables.

    `model_cdf` maps radii to the model survival probability P(r' > r).
    The model density column is obtained by central differences of the
    model CDF on the ln-r bin grid, matching how the empirical density is
    binned.
    """
    if probe.radii.size == 0:
        raise ValueError("probe produced no accepted radii")
    sorted_r = np.sort(probe.radii)
    m = sorted_r.size
    model_at = np.asarray(model_cdf(sorted_r), dtype=np.float64)
    upper = 1.0 - np.arange(m) / m          # survival just below each point
    lower = 1.0 - np.arange(1, m + 1) / m   # survival at/above each point
    ks = float(np.max(np.maximum(np.abs(model_at - upper), np.abs(model_at - lower))))

    centers, emp_density = probe.log_histogram(bins)
    width = centers[1] - centers[0] if centers.size > 1 else 1.0
    edge_lo = np.exp(centers - 0.5 * width)
    edge_hi = np.exp(centers + 0.5 * width)
    cdf_lo = np.asarray(model_cdf(edge_lo), dtype=np.float64)
    cdf_hi = np.asarray(model_cdf(edge_hi), dtype=np.float64)
    model_density = (cdf_lo - cdf_hi) / width
    return ProbeComparison(ks, centers, emp_density, model_density)
