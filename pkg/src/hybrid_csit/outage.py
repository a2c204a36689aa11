"""Outage-rate machinery and the training/feedback resource-split optimizer.

The feedback phase is modelled as a slow-fading link whose effective SNR is
``coeff(P, T_a) * X`` with ``X ~ chi2(2M)``; rates are in bits per channel
use (base-2 logarithms throughout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammainc, gammaincc, gammainccinv, gammaincinv, gammaln

GOLDEN_TOL = 1e-6
B_GRID_STEP = 0.25
B_RANGE_QUANTILE = 0.999999


class DomainError(ValueError):
    pass


class InfeasibleSplitError(ValueError):
    pass


# --- chi-square distribution ------------------------------------------------

def _check_dof(dof: int) -> float:
    if dof <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {dof}")
    return dof / 2.0


def chi2_cdf(dof: int, x: float) -> float:
    """CDF of a chi-square variable, ``P(dof/2, x/2)``."""
    a = _check_dof(dof)
    if x < 0 or math.isnan(x):
        raise DomainError(f"chi-square CDF needs x >= 0, got {x}")
    return float(gammainc(a, x / 2.0))


def chi2_sf(dof: int, x: float) -> float:
    """Survival function ``1 - chi2_cdf`` without cancellation in the tail."""
    a = _check_dof(dof)
    if x < 0 or math.isnan(x):
        raise DomainError(f"chi-square SF needs x >= 0, got {x}")
    return float(gammaincc(a, x / 2.0))


def chi2_logpdf(dof: int, x: float) -> float:
    a = _check_dof(dof)
    return (a - 1.0) * math.log(x) - x / 2.0 - a * math.log(2.0) - gammaln(a)


def chi2_inv(dof: int, p: float) -> float:
    """Inverse CDF; upper-half quantiles go through the survival function."""
    a = _check_dof(dof)
    if not 0.0 <= p < 1.0:
        raise DomainError(f"chi-square quantile needs 0 <= p < 1, got {p}")
    if p <= 0.5:
        return float(2.0 * gammaincinv(a, p))
    return float(2.0 * gammainccinv(a, 1.0 - p))


# --- outage probability / rate --------------------------------------------

def effective_snr_coeff(P: float, t_a: float) -> float:
    """Coefficient of ``chi2(2M)`` in the feedback-phase effective SNR."""
    if P <= 0 or t_a < 1:
        raise DomainError(f"need P > 0 and T_a >= 1, got P={P}, T_a={t_a}")
    return P * P * t_a / (2.0 * (P + P * t_a + 1.0))


def outage_prob(P: float, t_a: float, b: float, m: int) -> float:
    """Probability that ``log2(1 + SNR_eff) <= b``."""
    if b < 0:
        raise DomainError(f"rate must be >= 0, got {b}")
    coeff = effective_snr_coeff(P, t_a)
    return chi2_cdf(2 * m, math.expm1(b * math.log(2.0)) / coeff)


def outage_rate(P: float, t_a: float, eps: float, m: int) -> float:
    """Rate ``b`` sustained with outage probability ``eps``."""
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"outage probability must lie in [0, 1), got {eps}")
    coeff = effective_snr_coeff(P, t_a)
    return math.log1p(coeff * chi2_inv(2 * m, eps)) / math.log(2.0)


# --- classical (training-only) reference -----------------------------------

def cdi_mse_from_error_variance(s: float, m: int) -> float:
    """Mean squared CDI error between ``h`` and a Gaussian estimate of it.

    For ``h = hhat + e`` with ``hhat ~ CN(0, (1-s) I)`` independent of
    ``e ~ CN(0, s I)``, ``E[sin^2] = (m-1) s * int_0^inf dt / ((1+ts)(1+t)^m)``.
    """
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"normalised error variance must lie in [0, 1], got {s}")
    if s == 0.0:
        return 0.0
    # substitute t = u / (1 - u) to map [0, inf) onto [0, 1)
    def integrand(u):
        t = u / (1.0 - u)
        return (1.0 - u) ** (m - 2) / (1.0 + t * s)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return (m - 1) * s * val


def classical_mse(P: float, t_fb: int, m: int) -> float:
    """MSE of CSIT when all ``t_fb`` channel uses carry pilots."""
    return cdi_mse_from_error_variance(1.0 / (P * t_fb + 1.0), m)


def error_variance_for_cdi_mse(target: float, m: int) -> float:
    """Per-coefficient perturbation variance ``v`` giving ``E[sin^2] = target``.

    The perturbed vector ``h + e`` with ``e ~ CN(0, v I)`` relates to ``h``
    through the normalised error variance ``s = v / (1 + v)``.
    """
    if not 0.0 < target < (m - 1.0) / m:
        raise DomainError(f"target CDI MSE must lie in (0, {(m - 1) / m}), got {target}")
    s = optimize.brentq(lambda s: cdi_mse_from_error_variance(s, m) - target,
                        0.0, 1.0, xtol=1e-300, rtol=1e-13)
    return s / (1.0 - s)


# --- resource split ---------------------------------------------------------

@dataclass(frozen=True)
class OutageDesign:
    """A training/feedback split and its MSE-of-CSIT bound."""

    t_a: int
    t_q: int
    b: float
    epsilon: float
    predicted_mse: float
    P: float = float("nan")
    m: int = 4
    classical_mse: float = float("nan")

    @property
    def t_fb(self) -> int:
        return self.t_a + self.t_q

    @property
    def total_bits(self) -> float:
        return self.b * self.t_q

    @property
    def prefer_hybrid(self) -> bool:
        """False below the SNR where plain training is predicted to win."""
        return not (self.classical_mse < self.predicted_mse)


def mse_bound(b: float, t_q: float, eps: float, m: int) -> float:
    return 2.0 ** (-b * t_q / (m - 1)) + eps


def predicted_mse_bound(design: OutageDesign, m: Optional[int] = None) -> float:
    """Quantization-plus-outage bound for ``design``."""
    m = design.m if m is None else m
    return mse_bound(design.b, design.t_q, design.epsilon, m)


def split_objective(P: float, t_fb: int, m: int, t_a: int, b: float) -> float:
    return mse_bound(b, t_fb - t_a, outage_prob(P, t_a, b, m), m)


def golden_section(f, lo: float, hi: float, tol: float = GOLDEN_TOL):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _best_rate(P: float, t_fb: int, m: int, t_a: int):
    coeff = effective_snr_coeff(P, t_a)
    b_max = math.log1p(coeff * chi2_inv(2 * m, B_RANGE_QUANTILE)) / math.log(2.0)
    n_grid = max(2, int(math.ceil(b_max / B_GRID_STEP)) + 1)
    grid = np.linspace(0.0, b_max, n_grid)
    obj = lambda b: split_objective(P, t_fb, m, t_a, b)
    vals = [obj(b) for b in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    b, val = golden_section(obj, lo, hi)
    if vals[k] < val:
        b, val = float(grid[k]), vals[k]
    return b, val


def optimize_split(P: float, t_fb: int, m: int, fixed_b: Optional[float] = None) -> OutageDesign:
    """Minimise the MSE bound over integer ``T_a`` in ``[1, t_fb - 1]``.

    With ``fixed_b=None`` the rate is optimised jointly (grid bracket then
    golden-section refinement); otherwise it is pinned, e.g. 2 for QPSK or
    4 for 16-QAM. Ties in ``T_a`` resolve to the smallest value.
    """
    if t_fb < 2:
        raise InfeasibleSplitError(f"need T_fb >= 2 to split, got {t_fb}")
    if P <= 0:
        raise DomainError(f"transmit power must be positive, got {P}")
    best = None
    for t_a in range(1, t_fb):
        if fixed_b is None:
            b, val = _best_rate(P, t_fb, m, t_a)
        else:
            b = float(fixed_b)
            val = split_objective(P, t_fb, m, t_a, b)
        if best is None or val < best[2]:
            best = (t_a, b, val)
    t_a, b, _ = best
    b = float(b)
    eps = outage_prob(P, t_a, b, m)
    t_q = t_fb - t_a
    return OutageDesign(
        t_a=t_a, t_q=t_q, b=b, epsilon=eps,
        predicted_mse=float(mse_bound(b, t_q, eps, m)),
        P=P, m=m, classical_mse=classical_mse(P, t_fb, m),
    )


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)
