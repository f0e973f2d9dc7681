"""Wealth simulation under feedback strategies, expected utilities and the
empirical checks built on them (indifference equation, admissibility).

    dV = pi(t, X_t) (g dt + beta1 dW + beta2 dB),  left-point in time.

X and V share dW; that coupling is what cross hedging exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import kernels
from ._parallel import map_blocks
from .model import ConstantPayoff, Geometric, MarketSpec, derive_constants
from .pricing import GeometricPricer, McConfig, geom_law, log_mean_exp
from .sde import NumericalError, Noise, Stepper, TimeGrid

CH_BRIDGE = 3


# ---------------------------------------------------------------------------
# strategies


class ConstantStrategy:
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t, x):
        return np.full(np.shape(x), self.value)


class FunctionStrategy:
    """Wraps a vectorised callable pi(t, x)."""

    def __init__(self, fn, name="custom"):
        self.fn, self.name = fn, name

    def __call__(self, t, x):
        return np.broadcast_to(np.asarray(self.fn(t, x), dtype=float), np.shape(x))


class ShiftedStrategy:
    def __init__(self, base, shift: float):
        self.base, self.shift = base, float(shift)

    def __call__(self, t, x):
        return self.base(t, x) + self.shift


class GridStrategy:
    """pi tabulated on (t, z) with z = ln x for log grids; bilinear, flat outside."""

    def __init__(self, t_nodes, z_nodes, values, log_x=False):
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.z_nodes = np.asarray(z_nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.log_x = log_x
        if self.values.shape != (len(self.t_nodes), len(self.z_nodes)):
            raise ValueError("strategy table shape does not match its nodes")

    def __call__(self, t, x):
        z = np.log(x) if self.log_x else np.asarray(x, dtype=float)
        tn = self.t_nodes
        if len(tn) == 1:
            return np.interp(z, self.z_nodes, self.values[0])
        tc = min(max(float(t), tn[0]), tn[-1])
        i = int(np.clip(np.searchsorted(tn, tc, side="right") - 1, 0, len(tn) - 2))
        w = (tc - tn[i]) / (tn[i + 1] - tn[i])
        lo = np.interp(z, self.z_nodes, self.values[i])
        if w == 0.0:
            return lo
        return (1.0 - w) * lo + w * np.interp(z, self.z_nodes, self.values[i + 1])


def geometric_pi_star_table(f, m: MarketSpec, r: Geometric, n_t=200, n_z=401, width=6.0) -> GridStrategy:
    """pi_star on a (t, ln x) table by Gauss-Hermite, covering x0 e^{+-width nu sqrt(T)}."""
    from .strategy import geometric_log_derivative

    dc = derive_constants(m)
    half = width * r.nu * math.sqrt(m.horizon)
    z = math.log(r.x0) + np.linspace(-half, half, n_z)
    ts = np.linspace(0.0, m.horizon, n_t + 1)
    base = m.drift.alpha / (m.eta * dc.beta_sq)
    coef = m.beta1 * r.nu / (dc.k * dc.beta_sq)
    vals = np.empty((n_t + 1, n_z))
    for i, t in enumerate(ts):
        if isinstance(f, ConstantPayoff):
            vals[i] = base
            continue
        law = geom_law(m, r, float(t))
        if law.b_sq == 0.0:
            # at maturity x I_x / I = -k x F'(x)
            x = np.exp(z)
            vals[i] = base + coef * (-dc.k * x * np.asarray(f.derivative(x), dtype=float))
        else:
            vals[i] = base + coef * geometric_log_derivative(f, dc.k, law, np.exp(z))
    return GridStrategy(ts, z, vals, log_x=True)


def pde_strategy(m: MarketSpec, r, psi) -> GridStrategy:
    """Feedback strategy read off a psi grid (psi^0 gives pi_sharp, psi^F gives pi_star)."""
    from .strategy import pi_star_grid

    return GridStrategy(psi.t_nodes, psi.z_nodes, pi_star_grid(m, r, psi), log_x=psi.log_x)


# ---------------------------------------------------------------------------
# wealth simulation


@dataclass(frozen=True)
class WealthSample:
    terminal_wealth: np.ndarray
    terminal_payoff: Optional[np.ndarray]
    min_wealth: np.ndarray
    seed: int
    # crossed[i, j]: path i went below -level_j at some time in [0, T]
    crossed: Optional[np.ndarray] = None
    levels: tuple = ()

    def __post_init__(self):
        n = len(self.terminal_wealth)
        if len(self.min_wealth) != n or (self.terminal_payoff is not None and len(self.terminal_payoff) != n):
            raise ValueError("wealth sample vectors differ in length")

    @property
    def n_paths(self) -> int:
        return len(self.terminal_wealth)


def _wealth_block(strategies, m, r, grid, noise, v0, f, levels, a, b):
    paths = np.arange(a, b, dtype=np.int64)
    n = b - a
    stepper = Stepper(r, None)
    x = np.full(n, float(r.x0))
    k = len(strategies)
    v = np.full((k, n), float(v0))
    vmin = v.copy()
    crossed = np.zeros((k, n, len(levels)), dtype=bool) if levels else None
    lev = -np.asarray(levels, dtype=float)
    dt = grid.dt
    for j in range(grid.n_steps):
        t = grid.t(j)
        dW = noise.dW(paths, j)
        dB = noise.dB(paths, j)
        gv = np.asarray(m.drift(t, x), dtype=float)
        inc = gv * dt + m.beta1 * dW + m.beta2 * dB
        u = ndtr(kernels.gaussian(noise.seed, CH_BRIDGE, paths, j)) if levels else None
        for s, pi in enumerate(strategies):
            p = pi(t, x)
            vn = v[s] + p * inc
            if levels:
                # Brownian-bridge crossing between the two nodes
                var = (p * p) * (m.beta1 ** 2 + m.beta2 ** 2) * dt
                for q, L in enumerate(lev):
                    da, db = v[s] - L, vn - L
                    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                        pc = np.where((da > 0) & (db > 0) & (var > 0), np.exp(-2.0 * da * db / var), 1.0)
                    pc = np.where((da > 0) & (db > 0) & (var == 0), 0.0, pc)
                    crossed[s, :, q] |= u < pc
            v[s] = vn
            np.minimum(vmin[s], vn, out=vmin[s])
        aux = noise.aux(paths, j) if stepper.needs_aux else None
        x = stepper.step(t, dt, x, dW, aux)
    if not np.all(np.isfinite(v)):
        s, i = np.argwhere(~np.isfinite(v))[0]
        raise NumericalError(f"non-finite wealth on path {a + int(i)} (strategy {int(s)})")
    fx = np.asarray(f(x), dtype=float) if f is not None else None
    return v, vmin, fx, crossed


def simulate_wealth_many(strategies: Sequence, m: MarketSpec, r, grid: TimeGrid, n_paths: int, seed: int, v0=None, *, payoff=None, levels=(), antithetic=False):
    """WealthSamples for several strategies driven by the same random numbers."""
    v0 = m.v0 if v0 is None else v0
    noise = Noise(seed, grid.dt, antithetic)
    parts = map_blocks(lambda a, b: _wealth_block(strategies, m, r, grid, noise, v0, payoff, tuple(levels), a, b), n_paths)
    v = np.concatenate([p[0] for p in parts], axis=1)
    vmin = np.concatenate([p[1] for p in parts], axis=1)
    fx = np.concatenate([p[2] for p in parts]) if payoff is not None else None
    cr = np.concatenate([p[3] for p in parts], axis=1) if levels else None
    return [
        WealthSample(v[s], fx, vmin[s], int(seed), None if cr is None else cr[s], tuple(levels))
        for s in range(len(strategies))
    ]


def simulate_wealth(strategy, m: MarketSpec, r, grid: TimeGrid, n_paths: int, seed: int, v0=None, **kw) -> WealthSample:
    return simulate_wealth_many([strategy], m, r, grid, n_paths, seed, v0, **kw)[0]


# ---------------------------------------------------------------------------
# utilities


@dataclass(frozen=True)
class UtilityEstimate:
    mean_utility: float
    std_error: float
    certainty_equivalent: float
    max_exponent: float


def _position(w: WealthSample, payoff_included: bool, p_subtracted: float):
    pos = np.asarray(w.terminal_wealth, dtype=float)
    if payoff_included:
        if w.terminal_payoff is None:
            raise ValueError("sample carries no payoff")
        pos = pos + w.terminal_payoff
    return pos - p_subtracted


def expected_utility(w: WealthSample, eta: float, payoff_included=False, p_subtracted=0.0) -> UtilityEstimate:
    """E[-exp(-eta (V_T + F - p))] in log space."""
    pos = _position(w, payoff_included, p_subtracted)
    lm, rel_se, umax = log_mean_exp(-eta * pos)
    # the certainty equivalent stays finite even when e^{lm} overflows
    scale = math.exp(lm) if lm < 709.0 else math.inf
    return UtilityEstimate(-scale, scale * rel_se if rel_se else 0.0, -lm / eta, umax)


def utility_samples(w: WealthSample, eta, payoff_included=False, p_subtracted=0.0):
    return -np.exp(-eta * _position(w, payoff_included, p_subtracted))


# ---------------------------------------------------------------------------
# indifference equation


@dataclass(frozen=True)
class IndifferenceReport:
    price: float
    lhs: UtilityEstimate
    rhs: UtilityEstimate
    gap: float
    gap_se: float
    allowance: float
    passed: bool
    perturbation: float
    perturbed: UtilityEstimate
    control_gap: float
    control_se: float
    control_passed: bool
    dt: float
    n_paths: int


def indifference_check(f, m: MarketSpec, r, cfg: McConfig, pricer=None, *, pi_star_strategy=None, pi_sharp_strategy=None, perturb=0.1, n_se=3.0) -> IndifferenceReport:
    """E U(V^{pi*} + F - p) against E U(V^{pi#}) on common random numbers.

    Passes when the gap is within n_se paired SE plus 10 dt. The control
    runs pi* + perturb on the left side and must come out strictly worse.
    """
    grid = TimeGrid(0.0, m.horizon, cfg.n_steps)
    if pricer is None:
        pricer = GeometricPricer(f, m, r)
    price = float(pricer(0.0, r.x0).value)
    if pi_sharp_strategy is None:
        if not m.drift.is_constant:
            raise ValueError("pass pi_sharp_strategy for a non-constant drift")
        pi_sharp_strategy = ConstantStrategy(m.drift.alpha / (m.eta * derive_constants(m).beta_sq))
    if pi_star_strategy is None:
        pi_star_strategy = geometric_pi_star_table(f, m, r)
    pert = ShiftedStrategy(pi_star_strategy, perturb)
    ws = simulate_wealth_many([pi_star_strategy, pi_sharp_strategy, pert], m, r, grid, cfg.n_paths, cfg.seed, payoff=f, antithetic=cfg.antithetic)
    eta = m.eta
    lhs = expected_utility(ws[0], eta, True, price)
    rhs = expected_utility(ws[1], eta)
    per = expected_utility(ws[2], eta, True, price)
    u_l = utility_samples(ws[0], eta, True, price)
    u_r = utility_samples(ws[1], eta)
    u_p = utility_samples(ws[2], eta, True, price)
    n = cfg.n_paths
    gap = lhs.mean_utility - rhs.mean_utility
    gse = float(np.std(u_l - u_r, ddof=1)) / math.sqrt(n)
    allowance = 10.0 * grid.dt
    cgap = per.mean_utility - lhs.mean_utility
    cse = float(np.std(u_p - u_l, ddof=1)) / math.sqrt(n)
    return IndifferenceReport(
        price, lhs, rhs, gap, gse, allowance, abs(gap) <= n_se * gse + allowance,
        perturb, per, cgap, cse, cgap < -n_se * cse, grid.dt, n,
    )


# ---------------------------------------------------------------------------
# admissibility


@dataclass(frozen=True)
class LevelDiagnostic:
    level: float
    p_hat: float
    std_error: float
    upper: float  # p_hat + n_se SE + continuity correction
    scaled: float  # e^{eta n} p_hat
    bound_stated: Optional[float]
    bound_corrected: Optional[float]
    within_stated: Optional[bool]
    within_corrected: Optional[bool]


@dataclass(frozen=True)
class AdmissibilityReport:
    levels: tuple
    n_paths: int
    n_steps: int
    scaled_nonincreasing: bool
    sharp: bool  # constant-drift market with a constant strategy
    notes: tuple = field(default_factory=tuple)

    @property
    def all_within_stated(self) -> Optional[bool]:
        if not self.sharp:
            return None
        return all(l.within_stated for l in self.levels)

    @property
    def all_within_corrected(self) -> Optional[bool]:
        if not self.sharp:
            return None
        return all(l.within_corrected for l in self.levels)


def default_levels(v0: float):
    s = max(1.0, abs(v0))
    return tuple(q * s for q in (1, 2, 4, 8))


def hitting_bounds(m: MarketSpec, level: float):
    """Two exponential bounds on P(tau_n < T) for a constant classical strategy.

    The stated one is exp(-eta^2 (n+v0)^2 / (2 alpha^2 T)). Running the
    exponential-martingale argument with the wealth volatility alpha/(eta beta)
    gives exp(-eta^2 beta^2 (n+v0)^2 / (2 alpha^2 T)), which is the bound the
    process actually obeys.
    """
    dc = derive_constants(m)
    a2T = m.drift.alpha ** 2 * m.horizon
    d = level + m.v0
    if a2T == 0:
        return 0.0, 0.0
    stated = math.exp(-(m.eta ** 2) * d * d / (2.0 * a2T))
    corrected = math.exp(-(m.eta ** 2) * dc.beta_sq * d * d / (2.0 * a2T))
    return stated, corrected


def admissibility_diagnostics(strategy, m: MarketSpec, r, cfg: McConfig, levels=None, *, n_se=3.0) -> AdmissibilityReport:
    """Empirical P(tau_n < T) per level with continuous-time monitoring.

    Crossings between grid nodes are drawn from the Brownian-bridge law,
    so each path's indicator is an exact Bernoulli draw and binomial
    errors apply.
    """
    if levels is None:
        levels = default_levels(m.v0)
    grid = TimeGrid(0.0, m.horizon, cfg.n_steps)
    w = simulate_wealth(strategy, m, r, grid, cfg.n_paths, cfg.seed, levels=tuple(levels), antithetic=cfg.antithetic)
    n = w.n_paths
    sharp = m.drift.is_constant and isinstance(strategy, ConstantStrategy)
    rows = []
    for q, L in enumerate(levels):
        hits = int(np.count_nonzero(w.crossed[:, q]))
        ph = hits / n
        se = math.sqrt(ph * (1.0 - ph) / n)
        upper = ph + n_se * se + 0.5 / n
        st = co = None
        ok_s = ok_c = None
        if sharp:
            st, co = hitting_bounds(m, L)
            ok_s, ok_c = bool(ph - n_se * se - 0.5 / n <= st), bool(ph - n_se * se - 0.5 / n <= co)
        rows.append(LevelDiagnostic(float(L), ph, se, upper, math.exp(m.eta * L) * ph, st, co, ok_s, ok_c))
    scaled = [l.scaled for l in rows]
    mono = all(scaled[i + 1] <= scaled[i] for i in range(len(scaled) - 1))
    notes = ()
    if not sharp:
        notes = ("no closed-form bound for this market/strategy; trend only",)
    return AdmissibilityReport(tuple(rows), n, cfg.n_steps, mono, sharp, notes)
