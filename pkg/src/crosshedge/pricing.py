"""Static and dynamic indifference prices.

The dynamic price is

    p(t, x) = -(1/k) ln( E[w e^{-k F(Y_T)}] / E[w] ),  w = exp(-beta2^2/(2 beta^4) int g(r, Y_r)^2 dr)

with Y the drift-modified process. Weights are handled in log space and
self-normalised, so the normalising constant never appears. In the
geometric case with constant drift the expectation reduces to a
one-dimensional Gaussian integral over ln(Y_T / x).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate

from ._parallel import map_blocks
from .model import ConstantPayoff, Geometric, LogQuad, MarketSpec, derive_constants
from .sde import Noise, TimeGrid, Walker


class ConditioningError(ArithmeticError):
    """Every exponential term vanished or overflowed."""


class QuadratureError(ArithmeticError):
    """Gauss-Hermite node doubling did not settle."""


class WeightDegeneracyWarning(UserWarning):
    pass


class NoiseFloorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    n_steps: int = 100
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("n_paths must be >= 2")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even n_paths")


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    std_error: float
    n_paths: int
    method: str  # "mc", "closed_form", "quadrature" or "pde"
    max_exponent: Optional[float] = None
    ess: Optional[float] = None


@dataclass(frozen=True)
class GeomLaw:
    """Gaussian law of ln(Y_T / x) in the geometric case."""

    a: float
    b_sq: float
    tau: float


def geom_law(m: MarketSpec, r: Geometric, t: float) -> GeomLaw:
    if not isinstance(r, Geometric):
        raise TypeError("geom_law needs a geometric risk process")
    if not m.drift.is_constant:
        raise TypeError("geom_law needs a constant asset drift")
    dc = derive_constants(m)
    tau = m.horizon - t
    if tau < 0:
        raise ValueError("t is after the horizon")
    alpha = m.drift.alpha
    a = (r.mu - r.nu * alpha * m.beta1 / dc.beta_sq - 0.5 * r.nu ** 2) * tau
    return GeomLaw(a=a, b_sq=r.nu ** 2 * tau, tau=tau)


# ---------------------------------------------------------------------------
# log-space estimators


def log_mean_exp(u):
    """ln mean(e^u) and the delta-method standard error of that log."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u) | (u == -np.inf)) or np.any(np.isnan(u)):
        raise ConditioningError("non-finite exponent in log-mean-exp")
    umax = float(np.max(u))
    if umax == -np.inf:
        raise ConditioningError("all exponential terms are zero (max exponent -inf)")
    e = np.exp(u - umax)
    mean = float(np.mean(e))
    n = len(e)
    se = float(np.std(e, ddof=1)) / math.sqrt(n) / mean if n > 1 else 0.0
    return umax + math.log(mean), se, umax


def log_ratio(log_w, log_h):
    """ln( sum w h / sum w ) from log weights and log integrands.

    Returns (value, delta-method SE, effective sample size, max exponent).
    """
    log_w = np.asarray(log_w, dtype=float)
    log_h = np.asarray(log_h, dtype=float)
    n = len(log_h)
    if np.any(np.isnan(log_w)) or np.any(np.isnan(log_h)) or np.any(log_h == np.inf):
        raise ConditioningError("non-finite exponent in weighted estimator")
    hmax = float(np.max(log_h))
    if hmax == -np.inf:
        raise ConditioningError("all exponential terms are zero (max exponent -inf)")
    w = np.exp(log_w - np.max(log_w))
    w /= np.sum(w)
    h = np.exp(log_h - hmax)
    ratio = float(np.sum(w * h))
    var = float(np.sum(w * w * (h - ratio) ** 2)) * n / (n - 1)
    ess = 1.0 / float(np.sum(w * w))
    return hmax + math.log(ratio), math.sqrt(var) / ratio, ess, hmax


# ---------------------------------------------------------------------------
# Monte Carlo pricers


def _grid(t, horizon, cfg: McConfig) -> TimeGrid:
    return TimeGrid(t, horizon, cfg.n_steps)


def terminal_samples(r, t, x, horizon, cfg: McConfig) -> np.ndarray:
    """X_T started from (t, x)."""
    grid = _grid(t, horizon, cfg)
    noise = Noise(cfg.seed, grid.dt, cfg.antithetic)

    def block(a, b):
        wk = Walker(r, grid, np.arange(a, b, dtype=np.int64), noise, None, x)
        for _ in wk:
            pass
        return wk.x

    return np.concatenate(map_blocks(block, cfg.n_paths))


def modified_samples(m: MarketSpec, r, t, x, cfg: McConfig):
    """Y_T and int_t^T g(r, Y_r)^2 dr (left-point rule) started from (t, x)."""
    grid = _grid(t, m.horizon, cfg)
    noise = Noise(cfg.seed, grid.dt, cfg.antithetic)
    g = m.drift

    def block(a, b):
        wk = Walker(r, grid, np.arange(a, b, dtype=np.int64), noise, m, x)
        acc = np.zeros(b - a)
        for _, s, _dw in wk:
            acc += g(s, wk.x) ** 2 * grid.dt
        return wk.x, acc

    parts = map_blocks(block, cfg.n_paths)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def girsanov_samples(m: MarketSpec, r, t, x, cfg: McConfig):
    """X_T, int g(X)^2 dr and int g(X) dW along X, for the reweighted route."""
    grid = _grid(t, m.horizon, cfg)
    noise = Noise(cfg.seed, grid.dt, cfg.antithetic)
    g = m.drift

    def block(a, b):
        wk = Walker(r, grid, np.arange(a, b, dtype=np.int64), noise, None, x)
        sq = np.zeros(b - a)
        sto = np.zeros(b - a)
        for _, s, dw in wk:
            gv = g(s, wk.x)
            sq += gv ** 2 * grid.dt
            sto += gv * dw
        return wk.x, sq, sto

    parts = map_blocks(block, cfg.n_paths)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def static_price(f, r, t, x, *, eta, horizon, cfg: McConfig) -> PriceEstimate:
    """s = -(1/eta) ln E exp(-eta F(X_T)), no trading."""
    if isinstance(f, ConstantPayoff):
        return PriceEstimate(float(f.c), 0.0, cfg.n_paths, "closed_form")
    xt = terminal_samples(r, t, x, horizon, cfg)
    lm, se, umax = log_mean_exp(-eta * np.asarray(f(xt), dtype=float))
    return PriceEstimate(-lm / eta, se / eta, cfg.n_paths, "mc", max_exponent=umax)


def _check_ess(ess, n):
    if ess < 0.1 * n:
        warnings.warn(f"effective sample size {ess:.0f} is below 10% of {n} paths", WeightDegeneracyWarning, stacklevel=3)


def dynamic_price_mc(f, m: MarketSpec, r, t, x, cfg: McConfig) -> PriceEstimate:
    """p(t, x) under the reweighted measure along the drift-modified process."""
    dc = derive_constants(m)
    k = dc.k
    yt, gsq = modified_samples(m, r, t, x, cfg)
    val, se, ess, hmax = log_ratio(-dc.killing * gsq, -k * np.asarray(f(yt), dtype=float))
    _check_ess(ess, cfg.n_paths)
    return PriceEstimate(-val / k, se / k, cfg.n_paths, "mc", max_exponent=hmax, ess=ess)


def dynamic_price_qhat_mc(f, m: MarketSpec, r, t, x, cfg: McConfig) -> PriceEstimate:
    """Same price from paths of X, reweighted by the Girsanov density.

    Needs a bounded drift (Novikov). Serves as the cross-check of the
    Y-route pricer.
    """
    if not math.isfinite(m.drift.sup_norm):
        raise ValueError("reweighting along X needs a bounded drift")
    dc = derive_constants(m)
    k = dc.k
    xt, gsq, gdw = girsanov_samples(m, r, t, x, cfg)
    c = dc.drift_shift
    log_w = -c * gdw - 0.5 * c * c * gsq - dc.killing * gsq
    val, se, ess, hmax = log_ratio(log_w, -k * np.asarray(f(xt), dtype=float))
    _check_ess(ess, cfg.n_paths)
    return PriceEstimate(-val / k, se / k, cfg.n_paths, "mc", max_exponent=hmax, ess=ess)


def psi_mc(f, m: MarketSpec, r, t, x, cfg: McConfig):
    """Plain estimate of E[e^{-k F(Y_T)} e^{-killing int g^2}] and its SE.

    f=None means G = 0.
    """
    dc = derive_constants(m)
    yt, gsq = modified_samples(m, r, t, x, cfg)
    u = -dc.killing * gsq
    if f is not None:
        u = u - dc.k * np.asarray(f(yt), dtype=float)
    v = np.exp(u)
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v)))


# ---------------------------------------------------------------------------
# geometric case


@lru_cache(maxsize=None)
def _gh(n):
    z, w = hermegauss(n)
    return z, w / math.sqrt(2 * math.pi)


def logquad_closed_form(c, k, law: GeomLaw, x):
    """ln I(t, x) for F = c (1 + (ln x)^2); completes the square in ln x + a."""
    lx = np.log(np.asarray(x, dtype=float))
    q = 1.0 + 2.0 * k * c * law.b_sq
    return -k * c - 0.5 * math.log(q) - k * c * (lx + law.a) ** 2 / q


def geometric_integrals(f, k, law: GeomLaw, x, nodes=64):
    """I(t, x) = E e^{-k F(x e^Z)} and x dI/dx by Gauss-Hermite, vectorised in x.

    The derivative uses the score form x dI/dx = E[e^{-kF(x e^Z)} (Z - a)] / b^2,
    so F need not be differentiable. Returns (log I, x I_x / I).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if law.b_sq == 0.0:
        fx = np.asarray(f(x * math.exp(law.a)), dtype=float)
        return -k * fx, -k * x * np.asarray(f.derivative(x * math.exp(law.a)), dtype=float) * math.exp(law.a)
    z, w = _gh(nodes)
    b = math.sqrt(law.b_sq)
    arg = x[:, None] * np.exp(law.a + b * z)[None, :]
    e = -k * np.asarray(f(arg), dtype=float)
    emax = np.max(e, axis=1, keepdims=True)
    h = np.exp(e - emax)
    I = h @ w
    score = (h * z[None, :]) @ w / b
    return emax[:, 0] + np.log(I), score / I


def _adaptive_log_I(f, k, law: GeomLaw, x, tol):
    b = math.sqrt(law.b_sq)
    out = np.empty(len(x))
    for i, xi in enumerate(x):
        shift = -k * float(f(xi * math.exp(law.a)))

        def integrand(z):
            return math.exp(-k * float(f(xi * math.exp(law.a + b * z))) - shift - 0.5 * z * z)

        val, err = integrate.quad(integrand, -40.0, 40.0, points=[0.0], epsabs=0.0, epsrel=tol, limit=500)
        if not err <= 10 * tol * abs(val):
            raise QuadratureError(f"adaptive quadrature error {err:.3g} exceeds tolerance at x={xi!r}")
        out[i] = shift + math.log(val / math.sqrt(2 * math.pi))
    return out


def geometric_log_I(f, k, law: GeomLaw, x, tol=1e-10, start=32, max_nodes=256):
    """ln I with Gauss-Hermite node doubling until successive values agree to tol.

    Payoffs with kinks rarely settle; those fall through to adaptive
    quadrature. Returns (log I, nodes used; 0 for the adaptive route).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = start
    prev = geometric_integrals(f, k, law, x, n)[0]
    while n < max_nodes:
        n *= 2
        cur = geometric_integrals(f, k, law, x, n)[0]
        if np.max(np.abs(cur - prev)) <= tol * max(1.0, float(np.max(np.abs(cur)))):
            return cur, n
        prev = cur
    return _adaptive_log_I(f, k, law, x, tol), 0


def dynamic_price_geometric(f, m: MarketSpec, geom: GeomLaw, k, x, *, tol=1e-10) -> PriceEstimate:
    """p = -(1/k) ln I(t, x); the constant-drift discount cancels against psi^0."""
    if isinstance(f, ConstantPayoff):
        return PriceEstimate(float(f.c), 0.0, 0, "closed_form")
    if isinstance(f, LogQuad):
        return PriceEstimate(float(-logquad_closed_form(f.c, k, geom, x) / k), 0.0, 0, "closed_form")
    if geom.b_sq == 0.0:
        return PriceEstimate(float(f(x * math.exp(geom.a))), 0.0, 0, "closed_form")
    logI, _ = geometric_log_I(f, k, geom, x, tol=tol)
    return PriceEstimate(float(-logI[0] / k), 0.0, 0, "quadrature")


# ---------------------------------------------------------------------------
# pricer objects and sensitivities


class GeometricPricer:
    """p(t, x) in the geometric constant-drift case."""

    kind = "closed_form"

    def __init__(self, f, m: MarketSpec, r: Geometric):
        self.f, self.m, self.r = f, m, r
        self.k = derive_constants(m).k

    def __call__(self, t, x) -> PriceEstimate:
        return dynamic_price_geometric(self.f, self.m, geom_law(self.m, self.r, t), self.k, x)


class MonteCarloPricer:
    """p(t, x) by Monte Carlo; a fixed seed gives common random numbers across calls."""

    kind = "mc"

    def __init__(self, f, m: MarketSpec, r, cfg: McConfig):
        self.f, self.m, self.r, self.cfg = f, m, r, cfg

    def __call__(self, t, x) -> PriceEstimate:
        return dynamic_price_mc(self.f, self.m, self.r, t, x, self.cfg)


def _value(est):
    return (est.value, est.std_error) if isinstance(est, PriceEstimate) else (float(est), 0.0)


def default_step(pricer, x) -> float:
    scale = max(1.0, abs(x))
    return (1e-2 if getattr(pricer, "kind", "") == "mc" else 1e-3) * scale


def price_sensitivity(pricer, t, x, h=None) -> float:
    """Central difference dp/dx. MC pricers reuse their seed on both sides."""
    if h is None:
        h = default_step(pricer, x)
    up, se_up = _value(pricer(t, x + h))
    dn, se_dn = _value(pricer(t, x - h))
    d = (up - dn) / (2 * h)
    if getattr(pricer, "kind", "") == "mc":
        # without the CRN correlation this bounds the sampling error of d
        noise = math.hypot(se_up, se_dn) / (2 * h)
        # price SEs at the rounding level (constant payoffs) are not noise
        floor = 1e-12 * max(1.0, abs(up), abs(dn)) / h
        if noise > 0.1 * abs(d) and noise > floor:
            # the price SE does not shrink with h, so the derivative noise scales as 1/h
            h_opt = h * noise / max(0.1 * abs(d), 1e-300)
            warnings.warn(
                f"finite-difference step h={h:.3g} is below the Monte Carlo noise floor; try h~{h_opt:.3g}",
                NoiseFloorWarning,
                stacklevel=2,
            )
    return d
