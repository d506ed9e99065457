"""Mean-field insertion model and the closed exponent systems.

The insertion CDF after n spheres is exp(-int_0^r S_n(r')/pore dr') with
S_n(r) a polynomial in r with possibly half-integer powers.  Two surface
models are provided: "uniform distribution" (UD) treats existing spheres as
uniformly spread; "identical twins" (IT) subtracts, for each sphere, the
hyperspherical cap shadowed by one tangent equal-radius neighbor.  A third
"affine" model keeps only the constant surface term with a hard cutoff and
is used for literature comparisons.

Postulating power laws M_alpha(n) ~ m_alpha n^(lambda_alpha) with
lambda_alpha = alpha*lambda_1 - (alpha - 1) closes each model into a small
nonlinear system for lambda_1 and the amplitude ratios (gauge m_1 = 1),
solved here by damped Newton iteration over Gauss-Kronrod quadratures.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from ._util import format_alpha
from .geometry import unit_ball_volume

__all__ = [
    "SurfaceModel",
    "ExponentPolynomial",
    "MeanFieldSolution",
    "ConvergenceError",
    "ModelValidityError",
    "ValidityError",
    "surface_coefficients",
    "scaled_exponent",
    "insertion_cdf",
    "insertion_cdf_affine",
    "moment_integral",
    "solve_exponents",
    "lambda_alpha",
    "fractal_dimension",
    "reference_gammas",
    "ud2_lambda1_analytic",
    "it3_amplitude_constraint",
]

HALF = Fraction(1, 2)


class SurfaceModel(enum.Enum):
    UNIFORM_DISTRIBUTION = "ud"
    IDENTICAL_TWINS = "it"
    AFFINE = "affine"

    @classmethod
    def parse(cls, text: str) -> "SurfaceModel":
        key = text.strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown surface model {text!r}; expected ud, it or affine")

    @property
    def label(self) -> str:
        return {"ud": "UD", "it": "IT", "affine": "AFFINE"}[self.value]


class ConvergenceError(RuntimeError):
    """Root finding did not converge; carries the best point and residual."""

    def __init__(self, message: str, best: np.ndarray, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ModelValidityError(ValueError):
    """The surface polynomial drove the CDF above 1 (negative exponent)."""


class ValidityError(RuntimeError):
    """A solved exponent landed outside its admissible range."""


@dataclass(frozen=True)
class ExponentPolynomial:
    """Sum of coeff * r^power terms with distinct rational powers."""

    terms: tuple[tuple[Fraction, float], ...]

    def __post_init__(self):
        terms = tuple(sorted(((Fraction(p), float(c)) for p, c in self.terms),
                             key=lambda t: t[0]))
        powers = [p for p, _ in terms]
        if len(set(powers)) != len(powers):
            raise ValueError(f"duplicate powers in {powers}")
        if any(not math.isfinite(c) for _, c in terms):
            raise ValueError("non-finite coefficient")
        object.__setattr__(self, "terms", terms)

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        for p, c in self.terms:
            out = out + c * r ** float(p)
        return out if out.ndim else float(out)

    @property
    def leading(self) -> tuple[Fraction, float]:
        """Highest-power term (controls divergence as r -> infinity)."""
        return self.terms[-1]

    def antiderivative(self) -> "ExponentPolynomial":
        """Term-by-term integral from 0 (requires all powers > -1)."""
        return ExponentPolynomial(tuple((p + 1, c / float(p + 1)) for p, c in self.terms))

    def scale_coeffs(self, factor: float) -> "ExponentPolynomial":
        return ExponentPolynomial(tuple((p, c * factor) for p, c in self.terms))


# -- surface models ------------------------------------------------------------


def _get_moment(moments: Mapping, order: Fraction, n: int) -> float:
    if order == 0:
        for key in (Fraction(0), 0, 0.0):
            if key in moments:
                return float(moments[key])
        return float(n)
    for key in (order, float(order)):
        if key in moments:
            return float(moments[key])
    if order.denominator == 1 and order.numerator in moments:
        return float(moments[order.numerator])
    raise ValueError(f"missing moment order {format_alpha(order)} "
                     f"(required by this surface model)")


def twin_correction_coefficient(d: int) -> float:
    """Coefficient of the tangent-neighbor cap term: (2 pi)^((d-1)/2) / Gamma((d+1)/2)."""
    return (2.0 * math.pi) ** ((d - 1) / 2.0) / math.gamma((d + 1) / 2.0)


def surface_coefficients(model: SurfaceModel, d: int, moments: Mapping, n: int) -> ExponentPolynomial:
    """Build the surface polynomial S_n(r) from moment values.

    UD:     s_k = d V_d C(d-1, k) M_{d-1-k},  k = 0..d-1.
    IT:     UD minus twin_correction_coefficient(d) * M_{(d-1)/2} at power
            (d-1)/2 (merges into the integer term when d is odd).
    AFFINE: only the constant term s_0 is kept.
    """
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    vd = unit_ball_volume(d)
    coeffs: dict[Fraction, float] = {}
    either_ud = model in (SurfaceModel.UNIFORM_DISTRIBUTION, SurfaceModel.IDENTICAL_TWINS)
    ks = range(d) if either_ud else (0,)
    for k in ks:
        order = Fraction(d - 1 - k)
        coeffs[Fraction(k)] = d * vd * math.comb(d - 1, k) * _get_moment(moments, order, n)
    if model is SurfaceModel.IDENTICAL_TWINS:
        half_order = Fraction(d - 1, 2)
        corr = twin_correction_coefficient(d) * _get_moment(moments, half_order, n)
        coeffs[half_order] = coeffs.get(half_order, 0.0) - corr
    return ExponentPolynomial(tuple(coeffs.items()))


def scaled_exponent(model: SurfaceModel, d: int, m: Mapping) -> list[tuple[Fraction, object]]:
    """Generic n-free exponent Q(x) implied by a surface model.

    Substituting the power-law postulates into the insertion CDF cancels n
    term by term and leaves exp(-Q(x)) with

        Q(x) = sum_k  d C(d-1,k) m_{d-1-k} / ((k+1) m_d) * x^(k+1)
             [ - twin term at power (d+1)/2 for IT ]

    `m` maps orders to amplitude ratios and may hold exact Fractions for the
    integer-power part (the IT twin term is evaluated in floats).  Used as a
    cross-check of the explicitly transcribed systems in `solve_exponents`.
    """
    md = m[Fraction(d)]
    out: dict[Fraction, object] = {}
    for k in range(d):
        power = Fraction(k + 1)
        out[power] = d * math.comb(d - 1, k) * m[Fraction(d - 1 - k)] / ((k + 1) * md)
    if model is SurfaceModel.IDENTICAL_TWINS:
        power = Fraction(d + 1, 2)
        vd = unit_ball_volume(d)
        coeff = -(twin_correction_coefficient(d) * float(m[Fraction(d - 1, 2)])
                  / (float(power) * float(md) * vd))
        out[power] = out.get(power, 0) + coeff
    return sorted(out.items())


# -- insertion probability -------------------------------------------------------


def _cdf_exponent(surface: ExponentPolynomial, pore: float, r):
    integral = surface.antiderivative().scale_coeffs(1.0 / pore)
    r = np.asarray(r, dtype=np.float64)
    total = np.zeros_like(r)
    scale = np.zeros_like(r)
    for p, c in integral.terms:
        term = c * r ** float(p)
        total = total + term
        scale = scale + np.abs(term)
    return total, scale


def insertion_cdf(surface: ExponentPolynomial, pore: float, r):
    """P(r' > r) = exp(-sum_beta s_beta r^(beta+1) / ((beta+1) pore)).

    Equals 1 at r = 0 and decreases wherever the surface is positive.
    Raises ModelValidityError if the exponent goes negative (CDF > 1),
    which can happen for IT surfaces at extreme moment ratios.
    """
    if not pore > 0:
        raise ValueError(f"pore volume must be positive, got {pore}")
    rr = np.asarray(r, dtype=np.float64)
    if np.any(rr < 0):
        raise ValueError("r must be >= 0")
    total, scale = _cdf_exponent(surface, pore, rr)
    bad = total < -1e-12 * scale
    if np.any(bad):
        where = rr[bad] if rr.ndim else rr
        raise ModelValidityError(
            f"surface model produces CDF > 1 (negative exponent) near r={where!r}")
    out = np.exp(-np.maximum(total, 0.0))
    return out if np.ndim(r) else float(out)


def insertion_cdf_affine(s0: float, pore: float, r):
    """Affine insertion CDF max(0, 1 - s0 r / pore) with its hard cutoff."""
    if not s0 > 0:
        raise ValueError(f"s0 must be positive, got {s0}")
    if not pore > 0:
        raise ValueError(f"pore volume must be positive, got {pore}")
    rr = np.asarray(r, dtype=np.float64)
    out = np.maximum(0.0, 1.0 - s0 * rr / pore)
    return out if np.ndim(r) else float(out)


# -- quadrature ------------------------------------------------------------------

_EXP_FLOOR = 46.0  # exp(-46) ~ 1e-20: integrand negligible beyond the cut


def _upper_cut(q: Callable[[float], float]) -> float:
    x = 1.0
    good = 0
    for _ in range(400):
        if q(x) >= _EXP_FLOOR:
            good += 1
            if good >= 3:  # insist on staying large through two more octaves
                return x
        else:
            good = 0
        x *= 2.0
    raise ValueError("exponent polynomial does not diverge fast enough to integrate")


def moment_integral(alpha, q: ExponentPolynomial) -> float:
    """alpha * int_0^inf x^(alpha-1) exp(-Q(x)) dx to ~1e-12 relative.

    The x^(alpha-1) endpoint singularity for alpha < 1 is removed by the
    substitution x = t^2.  Q must diverge to +infinity (positive leading
    coefficient); otherwise the integral does not exist.
    """
    a = float(alpha)
    if a <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    _, lead = q.leading
    if lead <= 0:
        raise ValueError("leading coefficient of Q must be positive (divergent Q)")
    terms = [(float(p), c) for p, c in q.terms]

    def qval(x: float) -> float:
        s = 0.0
        for p, c in terms:
            s += c * x**p
        return s

    xmax = _upper_cut(qval)
    if a < 1.0:
        def integrand(t: float) -> float:
            return 2.0 * a * t ** (2.0 * a - 1.0) * math.exp(-qval(t * t))
        hi = math.sqrt(xmax)
    else:
        def integrand(x: float) -> float:
            return a * x ** (a - 1.0) * math.exp(-qval(x))
        hi = xmax
    value, abserr = integrate.quad(integrand, 0.0, hi, epsabs=1e-14, epsrel=1e-13,
                                   limit=300)
    if abserr > max(1e-12, 1e-10 * abs(value)):
        raise RuntimeError(f"quadrature error {abserr:.2e} too large for value {value:.6e}")
    return value


# -- the closed systems ------------------------------------------------------------


def lambda_alpha(alpha, lambda1: float) -> float:
    """lambda_alpha = alpha * lambda_1 - (alpha - 1)."""
    a = float(alpha)
    return a * lambda1 - (a - 1.0)


def fractal_dimension(lam_alpha: float, alpha) -> float:
    """gamma = 1 + alpha / (1 - lambda_alpha), the radius-CDF slope exponent."""
    if lam_alpha >= 1.0:
        raise ValueError(f"lambda_alpha must be < 1, got {lam_alpha}")
    return 1.0 + float(alpha) / (1.0 - lam_alpha)


def ud2_lambda1_analytic() -> float:
    """Closed form for the UD d=2 exponent: (e sqrt(pi)/2) erfc(1)."""
    return 0.5 * math.e * math.sqrt(math.pi) * math.erfc(1.0)


def it3_amplitude_constraint(lambda1: float, m2: float, m1: float = 1.0) -> float:
    """m_3 implied by probability normalization for the IT d=3 model."""
    return 3.0 * m1 * m2 * (10.0 * lambda1 - 3.0) / (4.0 * (3.0 * lambda1 - 1.0))


@dataclass(frozen=True)
class _System:
    """One closed exponent system: unknown amplitude orders, equation orders,
    and the transcribed n-free exponent Q(x; m)."""

    model: SurfaceModel
    d: int
    unknown_orders: tuple[Fraction, ...]
    equation_orders: tuple[Fraction, ...]
    q_of: Callable[[Mapping[Fraction, float]], ExponentPolynomial]
    derived: Callable[[Mapping[Fraction, float], float], dict]


def _q_ud2(m):
    m1, m2 = m[Fraction(1)], m[Fraction(2)]
    return ExponentPolynomial(((Fraction(1), 2.0 * m1 / m2),
                               (Fraction(2), 1.0 / m2)))


def _q_ud3(m):
    m1, m2 = m[Fraction(1)], m[Fraction(2)]
    den = 3.0 * m1 * m2
    return ExponentPolynomial(((Fraction(1), 3.0 * m2 / den),
                               (Fraction(2), 3.0 * m1 / den),
                               (Fraction(3), 1.0 / den)))


def _q_ud4(m):
    m1, m2, m3 = m[Fraction(1)], m[Fraction(2)], m[Fraction(3)]
    den = 4.0 * m1 * m3 + 3.0 * m2 * m2
    return ExponentPolynomial(((Fraction(1), 4.0 * m3 / den),
                               (Fraction(2), 6.0 * m2 / den),
                               (Fraction(3), 4.0 * m1 / den),
                               (Fraction(4), 1.0 / den)))


def _q_it2(m):
    m1, mh, m2 = m[Fraction(1)], m[HALF], m[Fraction(2)]
    pref = m1 * m1 / m2
    twin = 4.0 * math.sqrt(2.0) / (3.0 * math.pi) * mh / math.sqrt(m1)
    return ExponentPolynomial(((Fraction(1), pref * 2.0),
                               (Fraction(3, 2), -pref * twin),
                               (Fraction(2), pref)))


def _q_it3(m):
    m1, m2, m3 = m[Fraction(1)], m[Fraction(2)], m[Fraction(3)]
    return ExponentPolynomial(((Fraction(1), 3.0 * m2 / m3),
                               (Fraction(2), 2.25 * m1 / m3),
                               (Fraction(3), 1.0 / m3)))


def _q_it4(m):
    m1, m32 = m[Fraction(1)], m[Fraction(3, 2)]
    m2, m3, m4 = m[Fraction(2)], m[Fraction(3)], m[Fraction(4)]
    twin = 32.0 * math.sqrt(2.0) / (15.0 * math.pi)
    return ExponentPolynomial(((Fraction(1), 4.0 * m3 / m4),
                               (Fraction(2), 6.0 * m2 / m4),
                               (Fraction(5, 2), -twin * m32 / m4),
                               (Fraction(3), 4.0 * m1 / m4),
                               (Fraction(4), 1.0 / m4)))


_SYSTEMS: dict[tuple[SurfaceModel, int], _System] = {
    (SurfaceModel.UNIFORM_DISTRIBUTION, 2): _System(
        SurfaceModel.UNIFORM_DISTRIBUTION, 2,
        unknown_orders=(Fraction(2),),
        equation_orders=(Fraction(1), Fraction(2)),
        q_of=_q_ud2,
        derived=lambda m, lam1: {},
    ),
    (SurfaceModel.UNIFORM_DISTRIBUTION, 3): _System(
        SurfaceModel.UNIFORM_DISTRIBUTION, 3,
        unknown_orders=(Fraction(2),),
        equation_orders=(Fraction(1), Fraction(2)),
        q_of=_q_ud3,
        derived=lambda m, lam1: {Fraction(3): 3.0 * m[Fraction(1)] * m[Fraction(2)]},
    ),
    (SurfaceModel.UNIFORM_DISTRIBUTION, 4): _System(
        SurfaceModel.UNIFORM_DISTRIBUTION, 4,
        unknown_orders=(Fraction(2), Fraction(3)),
        equation_orders=(Fraction(1), Fraction(2), Fraction(3)),
        q_of=_q_ud4,
        derived=lambda m, lam1: {
            Fraction(4): 4.0 * m[Fraction(1)] * m[Fraction(3)] + 3.0 * m[Fraction(2)] ** 2},
    ),
    (SurfaceModel.IDENTICAL_TWINS, 2): _System(
        SurfaceModel.IDENTICAL_TWINS, 2,
        unknown_orders=(HALF, Fraction(2)),
        equation_orders=(HALF, Fraction(1), Fraction(2)),
        q_of=_q_it2,
        derived=lambda m, lam1: {},
    ),
    (SurfaceModel.IDENTICAL_TWINS, 3): _System(
        SurfaceModel.IDENTICAL_TWINS, 3,
        unknown_orders=(Fraction(2), Fraction(3)),
        equation_orders=(Fraction(1), Fraction(2), Fraction(3)),
        q_of=_q_it3,
        derived=lambda m, lam1: {},
    ),
    (SurfaceModel.IDENTICAL_TWINS, 4): _System(
        SurfaceModel.IDENTICAL_TWINS, 4,
        unknown_orders=(Fraction(3, 2), Fraction(2), Fraction(3), Fraction(4)),
        equation_orders=(Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3), Fraction(4)),
        q_of=_q_it4,
        derived=lambda m, lam1: {},
    ),
}


def system_residual(model: SurfaceModel, d: int, lambda1: float,
                    m: Mapping[Fraction, float]) -> np.ndarray:
    """Residuals m_a |lambda_a| - a int x^(a-1) exp(-Q) dx of one system.

    `m` must include m_1 (not necessarily 1), so gauge rescalings can be
    checked directly: m_a -> s^a m_a multiplies residual a by s^a.
    """
    system = _SYSTEMS[(model, d)]
    q = system.q_of(m)
    out = np.empty(len(system.equation_orders), dtype=np.float64)
    for i, a in enumerate(system.equation_orders):
        lam_a = lambda_alpha(a, lambda1)
        out[i] = m[a] * abs(lam_a) - moment_integral(a, q)
    return out


def _newton(fun: Callable[[np.ndarray], np.ndarray], x0: np.ndarray,
            tol: float = 1e-12, max_iter: int = 200,
            fd_step: float = 1e-7,
            fd_dirs: Sequence[float] | None = None,
            project: Callable[[np.ndarray], np.ndarray] | None = None
            ) -> tuple[np.ndarray, float, int]:
    """Damped Newton with finite-difference Jacobian and step halving.

    `fd_dirs` sets the probe direction per coordinate (+1/-1); coordinates
    that start on a domain boundary must be probed inward or the Jacobian
    would sample the excluded region.  `project` clamps line-search
    candidates back into the admissible box, so a step that points out of
    the domain can still make progress along its interior components.
    """

    def safe_eval(x) -> np.ndarray:
        try:
            f = fun(x)
        except (ValueError, OverflowError, RuntimeError):
            return np.full(x0.size, np.inf)
        return f if np.all(np.isfinite(f)) else np.full(x0.size, np.inf)

    dirs = np.ones(x0.size) if fd_dirs is None else np.asarray(fd_dirs, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64).copy()
    if project is not None:
        x = project(x)
    f = safe_eval(x)
    res = float(np.max(np.abs(f)))
    for iteration in range(max_iter):
        if res < tol:
            return x, res, iteration
        jac = np.empty((f.size, x.size))
        for j in range(x.size):
            h = dirs[j] * fd_step * max(abs(x[j]), 1.0)
            xp = x.copy()
            xp[j] += h
            jac[:, j] = (safe_eval(xp) - f) / h
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian during Newton iteration", x, res)
        t = 1.0
        for _ in range(60):
            cand = x + t * step
            if project is not None:
                cand = project(cand)
            fc = safe_eval(cand)
            rc = float(np.max(np.abs(fc)))
            if rc < res:
                x, f, res = cand, fc, rc
                break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"Newton line search stalled at residual {res:.3e}", x, res)
    raise ConvergenceError(
        f"Newton did not reach tol={tol:.1e} in {max_iter} iterations "
        f"(residual {res:.3e})", x, res)


@dataclass(frozen=True)
class MeanFieldSolution:
    """Solved exponents and amplitude ratios for one (model, d) pair."""

    d: int
    model: SurfaceModel
    lambda1: float
    lambdas: dict
    amplitudes: dict
    gamma: float
    residual_norm: float

    def to_dict(self) -> dict:
        return {
            "model": self.model.label,
            "d": self.d,
            "lambda1": self.lambda1,
            "lambdas": {format_alpha(a): v for a, v in sorted(self.lambdas.items())},
            "amplitudes": {format_alpha(a): v for a, v in sorted(self.amplitudes.items())},
            "gamma": self.gamma,
            "residual": self.residual_norm,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def solve_exponents(model: SurfaceModel, d: int,
                    initial_amplitudes: Sequence[float] | None = None) -> MeanFieldSolution:
    """Solve the closed exponent system for (model, d), gauge m_1 = 1.

    Starts from lambda_1 = 1 - 1/d with all amplitude ratios at 1 (unless
    `initial_amplitudes` overrides them) and iterates damped Newton until
    the max residual falls below 1e-12.  The solved lambda_1 must land in
    (0, (d-1)/d) so the pore volume shrinks; anything else raises
    ValidityError.
    """
    if model is SurfaceModel.AFFINE:
        raise ValueError("the affine model has no closed exponent system to solve")
    if (model, d) not in _SYSTEMS:
        raise ValueError(f"no exponent system for model={model.value}, d={d}")
    system = _SYSTEMS[(model, d)]
    k = len(system.unknown_orders)
    if initial_amplitudes is None:
        amp0 = np.ones(k)
    else:
        amp0 = np.asarray([float(v) for v in initial_amplitudes], dtype=np.float64)
        if amp0.shape != (k,):
            raise ValueError(f"expected {k} initial amplitudes for orders "
                             f"{[format_alpha(a) for a in system.unknown_orders]}")
    x0 = np.concatenate(([1.0 - 1.0 / d], amp0))

    def unpack(x: np.ndarray) -> tuple[float, dict]:
        m = {Fraction(1): 1.0}
        for order, val in zip(system.unknown_orders, x[1:]):
            m[order] = float(val)
        return float(x[0]), m

    lam1_max = 1.0 - 1.0 / d  # pore decay requires lambda_d <= 0

    def residual(x: np.ndarray) -> np.ndarray:
        lam1, m = unpack(x)
        if not 0.0 < lam1 <= lam1_max:
            raise ValueError("lambda_1 left the admissible range")
        if any(v <= 0.0 for v in m.values()):
            raise ValueError("amplitude ratios must stay positive")
        return system_residual(model, d, lam1, m)

    def project(x: np.ndarray) -> np.ndarray:
        out = x.copy()
        out[0] = min(max(out[0], 1e-6), lam1_max)
        out[1:] = np.maximum(out[1:], 1e-6)
        return out

    # the seed sits exactly on the lambda_d = 0 boundary where |lambda_d|
    # has a kink, so the lambda_1 coordinate is probed inward
    fd_dirs = [-1.0] + [1.0] * k
    solution, res_norm, _ = _newton(residual, x0, fd_dirs=fd_dirs, project=project)
    lam1, m = unpack(solution)
    if not (0.0 < lam1 < (d - 1) / d):
        raise ValidityError(
            f"lambda_1 = {lam1:.6f} outside (0, {(d - 1) / d:.4f}) for "
            f"{model.label} d={d}")
    m.update(system.derived(m, lam1))
    m.setdefault(Fraction(0), 1.0)

    orders = sorted(set(m) | {Fraction(i) for i in range(1, d + 1)})
    lambdas = {a: lambda_alpha(a, lam1) for a in orders if a != 0}
    return MeanFieldSolution(
        d=d, model=model, lambda1=lam1, lambdas=lambdas,
        amplitudes={a: v for a, v in sorted(m.items())},
        gamma=fractal_dimension(lam1, 1), residual_norm=res_norm)


def reference_gammas(d: int) -> tuple[float, float]:
    """Literature fractal-dimension estimates (growth-dynamics ABK, affine).

    gamma_abk    = d + 1 - d exp[2 (d - 2^(d+1) + 3) / (d + 2)]
    gamma_affine = d + (d+1)/(d+2)
    """
    if d not in (2, 3, 4):
        raise ValueError(f"d must be 2, 3 or 4, got {d}")
    gamma_abk = d + 1 - d * math.exp(2.0 * (d - 2 ** (d + 1) + 3) / (d + 2))
    gamma_affine = d + (d + 1) / (d + 2)
    return gamma_abk, gamma_affine
