"""Entropic risk, the cross-modified risk measure and static-versus-dynamic comparisons.

    rho_gamma(Psi) = (1/gamma) ln E exp(-gamma Psi)
    m_eta(F(X_T))  = -p = rho_k under the reweighted measure

Everything is computed in log space with the largest exponent pulled out;
that exponent is reported so conditioning can be audited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ConstantPayoff, Geometric, MarketSpec, _Payoff, derive_constants
from .pricing import (
    GeometricPricer,
    McConfig,
    dynamic_price_mc,
    dynamic_price_qhat_mc,
    log_mean_exp,
    modified_samples,
    static_price,
    terminal_samples,
)


# ---------------------------------------------------------------------------
# entropic risk


@dataclass(frozen=True)
class EntropicEstimate:
    value: float
    std_error: float
    max_exponent: float


def entropic_risk_estimate(samples, gamma: float) -> EntropicEstimate:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    lm, rel_se, umax = log_mean_exp(-gamma * np.asarray(samples, dtype=float))
    return EntropicEstimate(lm / gamma, rel_se / gamma, umax)


def entropic_risk(samples, gamma: float) -> float:
    """(1/gamma) ln mean exp(-gamma Psi)."""
    return entropic_risk_estimate(samples, gamma).value


# ---------------------------------------------------------------------------
# cross-modified risk


@dataclass(frozen=True)
class CrossRisk:
    value: float  # m_eta via the Y route
    std_error: float
    qhat_value: Optional[float]
    qhat_std_error: Optional[float]
    qhat_note: str
    agree: Optional[bool]


def _require_terminal_payoff(f):
    # the collapse of m_eta to an entropic functional is only known for
    # claims of the form F(X_T); anything else is refused rather than guessed
    if not isinstance(f, _Payoff):
        raise TypeError("cross-modified risk is only evaluated for payoffs of the form F(X_T)")


def cross_modified_risk(f, m: MarketSpec, r, cfg: McConfig, n_se=3.0) -> CrossRisk:
    """m_eta(F(X_T)) = -p by reweighting along Y, and along X when g is bounded."""
    _require_terminal_payoff(f)
    if isinstance(f, ConstantPayoff):
        return CrossRisk(-float(f.c), 0.0, -float(f.c), 0.0, "constant payoff", True)
    py = dynamic_price_mc(f, m, r, 0.0, r.x0, cfg)
    if not math.isfinite(m.drift.sup_norm):
        return CrossRisk(-py.value, py.std_error, None, None, "drift is unbounded: Novikov's condition is not guaranteed, reweighting along X disabled", None)
    pq = dynamic_price_qhat_mc(f, m, r, 0.0, r.x0, cfg)
    se = math.hypot(py.std_error, pq.std_error)
    return CrossRisk(-py.value, py.std_error, -pq.value, pq.std_error, "bounded drift", abs(py.value - pq.value) <= n_se * se)


# ---------------------------------------------------------------------------
# static versus dynamic


@dataclass(frozen=True)
class CovarianceDiagnostic:
    cov: float
    std_error: float  # jackknife over path blocks


@dataclass(frozen=True)
class RiskReport:
    static_s: float
    static_se: float
    dynamic_p: float
    dynamic_se: float
    dynamic_method: str
    gap: float
    gap_se: float
    aversion_ratio: float
    covariance_diagnostic: Optional[float]
    covariance_se: Optional[float]
    verdict: str  # risk_reduced, risk_amplified or inconclusive
    riskred_hypotheses: bool
    checks: dict


def jackknife_cov(a, b, n_blocks=50) -> CovarianceDiagnostic:
    """Sample covariance with a delete-one-block jackknife SE."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = len(a)
    cov = float(np.mean(a * b) - np.mean(a) * np.mean(b))
    blocks = np.array_split(np.arange(n), n_blocks)
    sa, sb, sab = a.sum(), b.sum(), (a * b).sum()
    reps = []
    for idx in blocks:
        m = n - len(idx)
        ra, rb, rab = sa - a[idx].sum(), sb - b[idx].sum(), sab - (a[idx] * b[idx]).sum()
        reps.append(rab / m - (ra / m) * (rb / m))
    reps = np.array(reps)
    se = math.sqrt((n_blocks - 1) / n_blocks * float(np.sum((reps - reps.mean()) ** 2)))
    return CovarianceDiagnostic(cov, se)


def drift_covariance(f, m: MarketSpec, r, cfg: McConfig, n_blocks=50) -> CovarianceDiagnostic:
    """cov(exp(-k F(Y_T)), exp(-kappa int g(Y)^2 dr)), kappa = beta2^2 / (2 beta^4).

    With beta1 = 0, Y = X and k = eta.
    """
    dc = derive_constants(m)
    yt, gsq = modified_samples(m, r, 0.0, r.x0, cfg)
    return jackknife_cov(np.exp(-dc.k * np.asarray(f(yt), dtype=float)), np.exp(-dc.killing * gsq), n_blocks)


def riskred_hypotheses(f, m: MarketSpec, r, cov: Optional[CovarianceDiagnostic]) -> bool:
    """F increasing, g >= 0, beta1 sigma / beta^2 <= 0 and the covariance condition.

    g >= 0 is checked on the drift's own representation; the covariance
    condition is taken as met when cov <= 0 is not rejected at 3 SE.
    """
    if not getattr(f, "increasing", False):
        return False
    g = m.drift
    if g.kind == "constant":
        g_nonneg = g.alpha >= 0
    elif g.kind == "affine":
        # clipping keeps the sign; on x > 0 nonnegative coefficients suffice
        pos_state = isinstance(r, Geometric)
        g_nonneg = g.bound == 0 or g.c0 >= 0 and (g.c1 == 0 or pos_state and g.c1 > 0)
    else:
        g_nonneg = bool(np.min(np.asarray(g.values, dtype=float)) >= 0)
    sig_sign = r.nu if isinstance(r, Geometric) else r.sigma0
    if not (g_nonneg and m.beta1 * sig_sign <= 0):
        return False
    return cov is not None and cov.cov <= 3.0 * cov.std_error


def jensen_gap(f, m: MarketSpec, r, cfg: McConfig):
    """p - s = ln( E[e^{-eta F}]^{1/eta} / E[e^{-k F}]^{1/k} ) on samples of X_T (g = 0 only).

    Returns (value, SE) with the SE from the delta method on the pair of means.
    """
    if m.drift.sup_norm != 0:
        raise ValueError("the Jensen form of the gap needs g = 0")
    dc = derive_constants(m)
    xt = terminal_samples(r, 0.0, r.x0, m.horizon, cfg)
    fx = np.asarray(f(xt), dtype=float)
    ue, ve = -m.eta * fx, -dc.k * fx
    e1 = np.exp(ue - ue.max())
    e2 = np.exp(ve - ve.max())
    m1, m2 = e1.mean(), e2.mean()
    val = (ue.max() + math.log(m1)) / m.eta - (ve.max() + math.log(m2)) / dc.k
    infl = (e1 / m1) / m.eta - (e2 / m2) / dc.k
    return float(val), float(np.std(infl, ddof=1) / math.sqrt(len(fx)))


def static_dynamic_gap(f, m: MarketSpec, r, cfg: McConfig, n_se=3.0, n_blocks=50) -> RiskReport:
    """s, p and p - s with a verdict; adds the covariance and Jensen checks where they apply."""
    _require_terminal_payoff(f)
    dc = derive_constants(m)
    s = static_price(f, r, 0.0, r.x0, eta=m.eta, horizon=m.horizon, cfg=cfg)
    if isinstance(r, Geometric) and m.drift.is_constant:
        p = GeometricPricer(f, m, r)(0.0, r.x0)
    else:
        p = dynamic_price_mc(f, m, r, 0.0, r.x0, cfg)
    gap = p.value - s.value
    # the two estimates share paths when both are MC; adding variances is conservative
    gap_se = math.hypot(s.std_error, p.std_error)
    checks = {}
    cov = None
    if abs(gap) <= n_se * gap_se:
        verdict = "inconclusive"
    else:
        verdict = "risk_reduced" if gap > 0 else "risk_amplified"
    if m.beta1 == 0 and not isinstance(f, ConstantPayoff):
        cov = drift_covariance(f, m, r, cfg, n_blocks)
        # p >= s iff cov <= 0; only asserted where both are resolved
        resolved = abs(cov.cov) > n_se * cov.std_error and verdict != "inconclusive"
        consistent = (gap >= 0) == (cov.cov <= 0)
        checks["drift_iff"] = {"resolved": resolved, "consistent": consistent}
    if m.drift.sup_norm == 0 and not isinstance(f, ConstantPayoff):
        jg, jse = jensen_gap(f, m, r, cfg)
        checks["jensen"] = {
            "gap_nonnegative": gap >= -n_se * gap_se,
            "formula_gap": jg,
            "formula_se": jse,
            "agree": abs(jg - gap) <= n_se * math.hypot(jse, gap_se),
        }
    if cov is None and m.beta1 != 0 and getattr(f, "increasing", False):
        cov = drift_covariance(f, m, r, cfg, n_blocks)
    hyp = riskred_hypotheses(f, m, r, cov)
    if hyp:
        checks["riskred"] = {"gap_nonnegative": gap >= -n_se * gap_se}
    return RiskReport(
        s.value, s.std_error, p.value, p.std_error, p.method, gap, gap_se, dc.aversion_ratio,
        None if cov is None else cov.cov, None if cov is None else cov.std_error, verdict, hyp, checks,
    )


__all__ = [
    "EntropicEstimate",
    "CrossRisk",
    "CovarianceDiagnostic",
    "RiskReport",
    "entropic_risk",
    "entropic_risk_estimate",
    "cross_modified_risk",
    "jackknife_cov",
    "drift_covariance",
    "riskred_hypotheses",
    "jensen_gap",
    "static_dynamic_gap",
]
