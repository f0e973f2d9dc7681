"""Optimal investment with and without the derivative, and the diversification pressure.

    pi_sharp = (1/beta^2) [g/eta + beta1 sigma / k * d_x ln psi^0]
    pi_star  = (1/beta^2) [g/eta + beta1 sigma / k * d_x ln psi^F]
    delta    = -beta1 sigma d_x p

Each quantity has more than one route (PDE grid, Gauss-Hermite in the
geometric case, Monte Carlo) so the decomposition pi_star = pi_sharp +
delta / beta^2 can be checked across routes rather than by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .model import ConstantPayoff, Geometric, LogQuad, MarketSpec, derive_constants
from .pde import GridFunction, interior_mask
from .pricing import (
    McConfig,
    _adaptive_log_I,
    dynamic_price_mc,
    geom_law,
    geometric_integrals,
    price_sensitivity,
)


@dataclass(frozen=True)
class StrategyFrame:
    t: float
    x: float
    pi_sharp: float
    pi_star: float
    delta: float
    price_sensitivity: float
    beta_sq: float

    @property
    def residual(self) -> float:
        return decomposition_residual(self)


def decomposition_residual(frame: StrategyFrame) -> float:
    return abs(frame.pi_star - frame.pi_sharp - frame.delta / frame.beta_sq)


# ---------------------------------------------------------------------------
# grid derivatives


def grid_derivative(values, h) -> np.ndarray:
    """d/dz along the last axis: fourth-order central inside, second-order one-sided at the edges."""
    v = np.asarray(values, dtype=float)
    d = np.empty_like(v)
    d[..., 2:-2] = (-v[..., 4:] + 8 * v[..., 3:-1] - 8 * v[..., 1:-3] + v[..., :-4]) / (12 * h)
    d[..., 1] = (v[..., 2] - v[..., 0]) / (2 * h)
    d[..., -2] = (v[..., -1] - v[..., -3]) / (2 * h)
    d[..., 0] = (-3 * v[..., 0] + 4 * v[..., 1] - v[..., 2]) / (2 * h)
    d[..., -1] = (3 * v[..., -1] - 4 * v[..., -2] + v[..., -3]) / (2 * h)
    return d


def sigma_dlog_dx(r, psi: GridFunction) -> np.ndarray:
    """sigma(t, x) * d_x ln psi on every grid node."""
    vals = psi.values
    if np.any(vals <= 0):
        raise ArithmeticError("psi is not positive on the grid; the PDE solve failed")
    z = psi.z_nodes
    h = z[1] - z[0]
    dz = grid_derivative(vals, h) / vals
    if psi.log_x:
        # sigma d_x = nu x (1/x) d_z
        return r.nu * dz
    sig = np.array([np.broadcast_to(r.sigma(t, psi.x_nodes), psi.x_nodes.shape) for t in psi.t_nodes])
    return sig * dz


def _g_grid(m: MarketSpec, psi: GridFunction) -> np.ndarray:
    return np.array([np.broadcast_to(m.drift(t, psi.x_nodes), psi.x_nodes.shape) for t in psi.t_nodes])


def _pi_from_psi(m, r, psi):
    dc = derive_constants(m)
    return (_g_grid(m, psi) / m.eta + m.beta1 / dc.k * sigma_dlog_dx(r, psi)) / dc.beta_sq


def pi_sharp_grid(m: MarketSpec, r, psi0: GridFunction) -> np.ndarray:
    return _pi_from_psi(m, r, psi0)


def pi_star_grid(m: MarketSpec, r, psiF: GridFunction) -> np.ndarray:
    return _pi_from_psi(m, r, psiF)


def delta_grid(m: MarketSpec, r, price: GridFunction) -> np.ndarray:
    """delta on every node from a cubic spline of each price row."""
    z = price.z_nodes
    out = np.empty_like(price.values)
    for i, t in enumerate(price.t_nodes):
        dz = CubicSpline(z, price.values[i])(z, 1)
        sig_dx = r.nu * dz if price.log_x else np.broadcast_to(r.sigma(t, price.x_nodes), z.shape) * dz
        out[i] = -m.beta1 * sig_dx
    return out


def frames_from_pde(m: MarketSpec, r, psi0: GridFunction, psiF: GridFunction, price: GridFunction, frac=0.8):
    """StrategyFrames on the interior nodes.

    pi_sharp and pi_star come from derivatives of psi^0 and psi^F, delta from
    the price surface, so the decomposition is a check rather than an identity.
    """
    if not (psi0.same_grid(psiF) and psi0.same_grid(price)):
        raise ValueError("surfaces live on different grids")
    dc = derive_constants(m)
    ps = pi_sharp_grid(m, r, psi0)
    pst = pi_star_grid(m, r, psiF)
    dl = delta_grid(m, r, price)
    xm = interior_mask(len(psi0.x_nodes), frac)
    # the last time row is the terminal condition itself
    tm = interior_mask(len(psi0.t_nodes) - 1, frac)
    frames = []
    for i in np.nonzero(tm)[0]:
        t = float(psi0.t_nodes[i])
        for j in np.nonzero(xm)[0]:
            x = float(psi0.x_nodes[j])
            sig = float(r.sigma(t, x))
            sens = -dl[i, j] / (m.beta1 * sig) if m.beta1 * sig != 0 else 0.0
            frames.append(StrategyFrame(t, x, float(ps[i, j]), float(pst[i, j]), float(dl[i, j]), sens, dc.beta_sq))
    return frames


# ---------------------------------------------------------------------------
# pointwise routes


def _g(m, t, x):
    return float(m.drift(t, x))


def pi_sharp(m: MarketSpec, r, t, x, psi0: Optional[GridFunction] = None) -> float:
    """Closed form for constant drift, otherwise read off a psi^0 grid."""
    dc = derive_constants(m)
    if m.drift.is_constant:
        return m.drift.alpha / (m.eta * dc.beta_sq)
    if m.beta1 == 0:
        return _g(m, t, x) / (m.eta * m.beta2 ** 2)
    if psi0 is None:
        raise ValueError("a psi^0 grid is needed for a non-constant drift")
    return _interp_grid(psi0, pi_sharp_grid(m, r, psi0), t, x)


def _interp_grid(gf: GridFunction, values, t, x) -> float:
    view = GridFunction(gf.t_nodes.copy(), gf.x_nodes.copy(), np.array(values), gf.log_x, "derived")
    return view.at(t, x)


def geometric_log_derivative(f, k, law, x, tol=1e-10, max_nodes=256) -> np.ndarray:
    """x I_x / I by the score form, doubling Gauss-Hermite nodes.

    Payoffs that defeat Gauss-Hermite fall back to a central difference of
    ln I from adaptive quadrature.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = 32
    prev = geometric_integrals(f, k, law, x, n)[1]
    while n < max_nodes:
        n *= 2
        cur = geometric_integrals(f, k, law, x, n)[1]
        if np.max(np.abs(cur - prev)) <= tol * max(1.0, float(np.max(np.abs(cur)))):
            return cur
        prev = cur
    h = 1e-4
    up = _adaptive_log_I(f, k, law, x * math.exp(h), 1e-12)
    dn = _adaptive_log_I(f, k, law, x * math.exp(-h), 1e-12)
    return (up - dn) / (2 * h)


def _require_geometric(m, r):
    if not isinstance(r, Geometric) or not m.drift.is_constant:
        raise TypeError("this route needs a geometric process and a constant drift")


def pi_star_geometric(f, m: MarketSpec, r, t, x, route="analytic", h=1e-4) -> float:
    """pi_star = alpha/(eta beta^2) + beta1 nu/(k beta^2) * x I_x / I.

    route "analytic" uses the score form of x I_x; "fd" differentiates ln I
    numerically in ln x.
    """
    _require_geometric(m, r)
    dc = derive_constants(m)
    law = geom_law(m, r, t)
    if isinstance(f, ConstantPayoff):
        score = 0.0
    elif route == "analytic":
        score = float(geometric_log_derivative(f, dc.k, law, x)[0]) if law.b_sq > 0 else float(
            geometric_integrals(f, dc.k, law, x)[1][0]
        )
    elif route == "fd":
        up = _log_I(f, dc.k, law, x * math.exp(h))
        dn = _log_I(f, dc.k, law, x * math.exp(-h))
        score = (up - dn) / (2 * h)
    else:
        raise ValueError(f"unknown route {route!r}")
    return m.drift.alpha / (m.eta * dc.beta_sq) + m.beta1 * r.nu / (dc.k * dc.beta_sq) * score


def _log_I(f, k, law, x) -> float:
    from .pricing import geometric_log_I, logquad_closed_form

    if isinstance(f, LogQuad):
        return float(logquad_closed_form(f.c, k, law, x))
    return float(geometric_log_I(f, k, law, x)[0][0])


def pi_star(m: MarketSpec, r, f, t, x, psiF: Optional[GridFunction] = None) -> float:
    if m.beta1 == 0 or isinstance(f, ConstantPayoff):
        return pi_sharp(m, r, t, x)
    if psiF is not None:
        return _interp_grid(psiF, pi_star_grid(m, r, psiF), t, x)
    return pi_star_geometric(f, m, r, t, x)


def delta_logquad(c, m: MarketSpec, r, t, x):
    """delta = -beta1 nu 2c (a + ln x) / (1 + 2 k c b^2), affine in ln x."""
    _require_geometric(m, r)
    dc = derive_constants(m)
    law = geom_law(m, r, t)
    q = 1.0 + 2.0 * dc.k * c * law.b_sq
    return -m.beta1 * r.nu * 2.0 * c * (law.a + np.log(np.asarray(x, dtype=float))) / q


def logquad_slope(c, m: MarketSpec, r, t) -> float:
    dc = derive_constants(m)
    law = geom_law(m, r, t)
    return -m.beta1 * r.nu * 2.0 * c / (1.0 + 2.0 * dc.k * c * law.b_sq)


def delta_geometric(f, m: MarketSpec, r, t, x) -> np.ndarray:
    """delta = (beta1 nu / k) x I_x / I by quadrature, vectorised in x."""
    _require_geometric(m, r)
    dc = derive_constants(m)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(f, ConstantPayoff):
        return np.zeros_like(x)
    law = geom_law(m, r, t)
    if isinstance(f, LogQuad):
        return delta_logquad(f.c, m, r, t, x)
    score = geometric_log_derivative(f, dc.k, law, x) if law.b_sq > 0 else geometric_integrals(f, dc.k, law, x)[1]
    return m.beta1 * r.nu / dc.k * score


def diversification_pressure(m: MarketSpec, r, pricer, t, x, h=None) -> float:
    """-beta1 sigma(t, x) dp/dx with dp/dx from the pricer by central difference."""
    if isinstance(getattr(pricer, "f", None), ConstantPayoff):
        return 0.0
    return -m.beta1 * float(r.sigma(t, x)) * price_sensitivity(pricer, t, x, h)


# ---------------------------------------------------------------------------
# Monte Carlo route


@dataclass(frozen=True)
class McStrategyFrame:
    frame: StrategyFrame
    se_pi_sharp: float
    se_pi_star: float
    se_delta: float
    se_residual: float


def _mc_dlog(f, m, r, t, x, h, cfg):
    """d_x ln psi by a two-point difference on common random numbers, with its SE."""
    dc = derive_constants(m)
    from .pricing import modified_samples

    def logs(xx):
        yt, gsq = modified_samples(m, r, t, xx, cfg)
        u = -dc.killing * gsq
        if f is not None:
            u = u - dc.k * np.asarray(f(yt), dtype=float)
        return np.exp(u)

    a, b = logs(x + h), logs(x - h)
    ma, mb = a.mean(), b.mean()
    d = (math.log(ma) - math.log(mb)) / (2 * h)
    # delta method on the paired samples
    infl = (a / ma - b / mb) / (2 * h)
    se = float(np.std(infl, ddof=1) / math.sqrt(len(a)))
    return d, se, infl


def mc_frame(f, m: MarketSpec, r, t, x, cfg: McConfig, h=None) -> McStrategyFrame:
    """Frame with every entry from Monte Carlo on one seed.

    pi_sharp and pi_star differentiate ln psi^0 and ln psi^F; delta
    differentiates the self-normalised price. The residual SE comes from the
    pathwise influence functions, which share the random numbers.
    """
    dc = derive_constants(m)
    if h is None:
        h = 1e-2 * max(1.0, abs(x))
    sig = float(r.sigma(t, x))
    g = _g(m, t, x)
    d0, se0, inf0 = _mc_dlog(None, m, r, t, x, h, cfg)
    dF, seF, infF = _mc_dlog(f, m, r, t, x, h, cfg)
    up = dynamic_price_mc(f, m, r, t, x + h, cfg)
    dn = dynamic_price_mc(f, m, r, t, x - h, cfg)
    sens = (up.value - dn.value) / (2 * h)
    coef = m.beta1 * sig / (dc.k * dc.beta_sq)
    ps = g / (m.eta * dc.beta_sq) + coef * d0
    pst = g / (m.eta * dc.beta_sq) + coef * dF
    delta = -m.beta1 * sig * sens
    # delta/beta^2 estimates coef*(dF - d0) through a ratio estimator; the
    # residual's spread is that of the two ratio estimators' difference
    se_delta = abs(m.beta1 * sig) * math.hypot(up.std_error, dn.std_error) / (2 * h)
    se_res = abs(coef) * float(np.std(infF - inf0, ddof=1) / math.sqrt(len(inf0))) + se_delta / dc.beta_sq
    return McStrategyFrame(
        StrategyFrame(t, x, ps, pst, delta, sens, dc.beta_sq), abs(coef) * se0, abs(coef) * seF, se_delta, se_res
    )


# ---------------------------------------------------------------------------
# bounds and shape checks


@dataclass(frozen=True)
class DeltaBoundReport:
    max_abs_delta: float
    bound: Optional[float]
    violations: int
    n_points: int
    growth_kind: str
    passed: bool
    max_score_ratio: Optional[float] = None


def delta_bound_report(f, m: MarketSpec, r, t_nodes=None, x_nodes=None) -> DeltaBoundReport:
    """max |delta| over a (t, x) grid against the bound the growth class implies.

    xFprime_bounded(M): |delta| <= |beta1| nu M.
    lipschitz_nondecreasing(M): |x I_x / I| / x <= k M e^{a + b^2/2}.
    """
    _require_geometric(m, r)
    dc = derive_constants(m)
    if t_nodes is None:
        t_nodes = np.linspace(0.0, m.horizon, 50, endpoint=False)
    if x_nodes is None:
        x_nodes = r.x0 * np.exp(np.linspace(-2.0, 2.0, 50) * r.nu * math.sqrt(m.horizon))
    x_nodes = np.asarray(x_nodes, dtype=float)
    gk = f.growth.kind
    M = f.growth.bound
    worst, viol, ratio = 0.0, 0, None
    for t in t_nodes:
        d = delta_geometric(f, m, r, float(t), x_nodes)
        worst = max(worst, float(np.max(np.abs(d))))
        if gk == "xFprime_bounded":
            viol += int(np.sum(np.abs(d) > abs(m.beta1) * r.nu * M * (1 + 1e-12)))
        elif gk == "lipschitz_nondecreasing":
            law = geom_law(m, r, float(t))
            score = geometric_log_derivative(f, dc.k, law, x_nodes) if law.b_sq > 0 else geometric_integrals(f, dc.k, law, x_nodes)[1]
            lim = dc.k * M * math.exp(law.a + 0.5 * law.b_sq)
            rat = np.abs(score) / x_nodes / lim
            ratio = max(ratio or 0.0, float(np.max(rat)))
            viol += int(np.sum(rat > 1 + 1e-12))
    if isinstance(f, ConstantPayoff):
        bound = 0.0
    elif gk == "xFprime_bounded":
        bound = abs(m.beta1) * r.nu * M
    else:
        bound = None
    n = len(t_nodes) * len(x_nodes)
    return DeltaBoundReport(worst, bound, viol, n, gk, viol == 0 and (bound is None or worst <= bound * (1 + 1e-12)), ratio)


@dataclass(frozen=True)
class AffineFit:
    slope: float
    intercept: float
    rel_residual: float


def affine_fit_log(x, delta) -> AffineFit:
    """Least-squares delta ~ A1 ln x + A2; residual relative to max |delta|."""
    lx = np.log(np.asarray(x, dtype=float))
    d = np.asarray(delta, dtype=float)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, d, rcond=None)
    res = d - A @ coef
    scale = max(float(np.max(np.abs(d))), 1e-300)
    return AffineFit(float(coef[0]), float(coef[1]), float(np.max(np.abs(res))) / scale)


def linear_growth_constant(x, delta) -> float:
    """Smallest K with |delta| <= K (1 + |x|) on the sample."""
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(delta) / (1.0 + np.abs(x))))


def sign_law_violations(frames, noise) -> int:
    """Frames where |delta| > noise but pi_star - pi_sharp has the other sign."""
    bad = 0
    for fr in frames:
        if abs(fr.delta) > noise and np.sign(fr.pi_star - fr.pi_sharp) != np.sign(fr.delta):
            bad += 1
    return bad


def psi_log_derivative_mc(f, m, r, t, x, cfg, h=None):
    """Exposed for diagnostics: (d_x ln psi, SE) from Monte Carlo."""
    if h is None:
        h = 1e-2 * max(1.0, abs(x))
    d, se, _ = _mc_dlog(f, m, r, t, x, h, cfg)
    return d, se


__all__ = [
    "StrategyFrame",
    "McStrategyFrame",
    "DeltaBoundReport",
    "AffineFit",
    "decomposition_residual",
    "grid_derivative",
    "pi_sharp",
    "pi_star",
    "pi_star_geometric",
    "pi_sharp_grid",
    "pi_star_grid",
    "delta_grid",
    "frames_from_pde",
    "delta_logquad",
    "logquad_slope",
    "delta_geometric",
    "diversification_pressure",
    "mc_frame",
    "delta_bound_report",
    "affine_fit_log",
    "linear_growth_constant",
    "sign_law_violations",
    "psi_log_derivative_mc",
]
