"""Market, risk-process and payoff specifications.

Every spec is an immutable dataclass. Constructors only check types and
obviously broken values; the modelling assumptions (nonzero ``beta2``,
positive start for the geometric process, payoff growth classes) are
checked by :func:`validate`, which reports every violation at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np


class ValidationError(ValueError):
    """Raised when specs violate a modelling assumption."""

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(f"{v.field}: {v.message}" for v in self.violations)
        super().__init__(msg)


class DomainError(ValueError):
    """Payoff evaluated outside its domain."""


# ---------------------------------------------------------------------------
# asset drift g(t, x)


@dataclass(frozen=True)
class ConstantDrift:
    alpha: float

    kind = "constant"
    is_constant = True

    def __call__(self, t, x):
        return np.full(np.shape(x), float(self.alpha)) if np.ndim(x) else float(self.alpha)

    @property
    def sup_norm(self) -> float:
        return abs(self.alpha)


@dataclass(frozen=True)
class AffineDrift:
    """g(t, x) = c0 + c1 * x, clipped to [-bound, bound]."""

    c0: float
    c1: float
    bound: float

    kind = "affine"
    is_constant = False

    def __call__(self, t, x):
        return np.clip(self.c0 + self.c1 * np.asarray(x, dtype=float), -self.bound, self.bound)

    @property
    def sup_norm(self) -> float:
        return abs(self.bound)


@dataclass(frozen=True)
class TableDrift:
    """Bilinear interpolation of g on a (t, x) table, flat outside it."""

    t_nodes: tuple
    x_nodes: tuple
    values: tuple  # row-major, len(t_nodes) rows

    kind = "table"
    is_constant = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.t_nodes), len(self.x_nodes)):
            raise ValueError("drift table shape does not match its nodes")

    def __call__(self, t, x):
        tn = np.asarray(self.t_nodes, dtype=float)
        xn = np.asarray(self.x_nodes, dtype=float)
        v = np.asarray(self.values, dtype=float)
        xq = np.asarray(x, dtype=float)
        rows = np.array([np.interp(xq, xn, row) for row in v])
        if len(tn) == 1:
            out = rows[0]
        else:
            tc = min(max(float(t), tn[0]), tn[-1])
            i = int(np.clip(np.searchsorted(tn, tc, side="right") - 1, 0, len(tn) - 2))
            w = (tc - tn[i]) / (tn[i + 1] - tn[i])
            out = (1.0 - w) * rows[i] + w * rows[i + 1]
        return out if np.ndim(x) else float(out)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(np.asarray(self.values, dtype=float))))


DriftSpec = Union[ConstantDrift, AffineDrift, TableDrift]


@dataclass(frozen=True)
class MarketSpec:
    """Asset loadings, drift, risk aversion, initial wealth and horizon."""

    beta1: float
    beta2: float
    drift: DriftSpec
    eta: float
    v0: float = 0.0
    horizon: float = 1.0


@dataclass(frozen=True)
class DerivedConstants:
    beta_sq: float
    k: float
    aversion_ratio: float
    drift_shift: float  # beta1 / beta^2, multiplies g * sigma in the modified drift
    killing: float  # beta2^2 / (2 beta^4), multiplies g^2 in the discount weight


def derive_constants(m: MarketSpec) -> DerivedConstants:
    beta_sq = m.beta1 ** 2 + m.beta2 ** 2
    k = m.eta * m.beta2 ** 2 / beta_sq
    killing = m.beta2 ** 2 / (2.0 * beta_sq ** 2)
    # k g^2 / (2 beta^2 eta) and beta2^2 g^2 / (2 beta^4) must be the same coefficient
    assert math.isclose(k / (2.0 * beta_sq * m.eta), killing, rel_tol=1e-12)
    return DerivedConstants(
        beta_sq=beta_sq,
        k=k,
        aversion_ratio=m.beta2 ** 2 / beta_sq,
        drift_shift=m.beta1 / beta_sq,
        killing=killing,
    )


# ---------------------------------------------------------------------------
# risk process X


@dataclass(frozen=True)
class Geometric:
    """dX = mu X dt + nu X dW."""

    mu: float
    nu: float
    x0: float

    kind = "geometric"

    def b(self, t, x):
        return self.mu * np.asarray(x, dtype=float)

    def sigma(self, t, x):
        return self.nu * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class OUPeriodic:
    """dX = [-c1 (X - A) + c2 sin(2 pi t / T0)] dt + sigma0 dW."""

    c1: float
    c2: float
    A: float
    period: float
    sigma0: float
    x0: float

    kind = "ou_periodic"

    def b(self, t, x):
        return -self.c1 * (np.asarray(x, dtype=float) - self.A) + self.c2 * math.sin(2 * math.pi * t / self.period)

    def sigma(self, t, x):
        return np.full(np.shape(x), float(self.sigma0)) if np.ndim(x) else float(self.sigma0)

    @property
    def stationary_std(self) -> float:
        return self.sigma0 / math.sqrt(2.0 * self.c1)


@dataclass(frozen=True)
class DoubleWell:
    """dX = [-(X^3 - X) + c1 sin(2 pi t / T0)] dt + sigma0 dW."""

    c1: float
    period: float
    sigma0: float
    x0: float

    kind = "double_well"

    def b(self, t, x):
        x = np.asarray(x, dtype=float)
        return -(x ** 3 - x) + self.c1 * math.sin(2 * math.pi * t / self.period)

    def sigma(self, t, x):
        return np.full(np.shape(x), float(self.sigma0)) if np.ndim(x) else float(self.sigma0)


RiskProcessSpec = Union[Geometric, OUPeriodic, DoubleWell]


# ---------------------------------------------------------------------------
# payoffs


@dataclass(frozen=True)
class GrowthClass:
    """Declared growth behaviour of a payoff.

    kind is one of ``bounded`` (|F| <= bound), ``linear`` (|F| <= bound (1+|x|)),
    ``log_lower_bounded`` (F >= -bound (1 + ln x) for x >= 1),
    ``xFprime_bounded`` (|x F'(x)| <= bound) or
    ``lipschitz_nondecreasing`` (0 <= F' <= bound).
    """

    kind: str
    bound: float

    KINDS = ("bounded", "linear", "log_lower_bounded", "xFprime_bounded", "lipschitz_nondecreasing")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown growth class {self.kind!r}")


class _Payoff:
    positive_domain = False
    strict_domain = True  # x == 0 is outside the domain when positive_domain

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if not self.positive_domain:
            return x
        bad = (x <= 0) if self.strict_domain else (x < 0)
        if np.any(bad):
            raise DomainError(f"{self.kind} payoff evaluated at {x[bad].ravel()[0]!r}, outside its domain")
        return x

    def __call__(self, x):
        out = self._eval(self._check(x))
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, x):
        """F'(x); analytic where available, central difference otherwise."""
        x = self._check(x)
        h = np.maximum(1e-6, 1e-6 * np.abs(x))
        if self.positive_domain:
            h = np.minimum(h, 0.5 * x)
        return (self._eval(x + h) - self._eval(x - h)) / (2 * h)


@dataclass(frozen=True)
class ConstantPayoff(_Payoff):
    c: float
    kind = "constant"
    is_constant = True
    increasing = True

    def _eval(self, x):
        return np.full(np.shape(x), float(self.c))

    def derivative(self, x):
        return np.zeros(np.shape(x)) if np.ndim(x) else 0.0

    @property
    def growth(self):
        return GrowthClass("bounded", abs(self.c))


@dataclass(frozen=True)
class LogShift(_Payoff):
    """c * ln(1 + x) on x >= 0."""

    c: float
    kind = "log_shift"
    is_constant = False
    positive_domain = True
    strict_domain = False

    @property
    def increasing(self):
        return self.c >= 0

    def _eval(self, x):
        return self.c * np.log1p(x)

    def derivative(self, x):
        x = self._check(x)
        out = self.c / (1.0 + x)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def growth(self):
        # sup_x |x c / (1 + x)| = |c|
        return GrowthClass("xFprime_bounded", abs(self.c))


@dataclass(frozen=True)
class LogQuad(_Payoff):
    """c * (1 + (ln x)^2) on x > 0."""

    c: float
    kind = "log_quad"
    is_constant = False
    positive_domain = True
    increasing = False

    def _eval(self, x):
        return self.c * (1.0 + np.log(x) ** 2)

    def derivative(self, x):
        x = self._check(x)
        out = 2.0 * self.c * np.log(x) / x
        return float(out) if np.ndim(out) == 0 else out

    @property
    def growth(self):
        return GrowthClass("log_lower_bounded", max(0.0, -self.c))


@dataclass(frozen=True)
class HddStyle(_Payoff):
    """max(0, base - x), a heating-degree style payoff."""

    base: float
    kind = "hdd"
    is_constant = False
    increasing = False

    def _eval(self, x):
        return np.maximum(0.0, self.base - x)

    @property
    def growth(self):
        return GrowthClass("linear", max(abs(self.base), 1.0))


@dataclass(frozen=True)
class BoundedTable(_Payoff):
    """Piecewise-linear payoff through (x_nodes, values), flat outside."""

    x_nodes: tuple
    values: tuple
    kind = "table"
    is_constant = False

    def _eval(self, x):
        return np.interp(x, np.asarray(self.x_nodes, float), np.asarray(self.values, float))

    @property
    def increasing(self):
        return bool(np.all(np.diff(np.asarray(self.values, float)) >= 0))

    @property
    def growth(self):
        return GrowthClass("bounded", float(np.max(np.abs(self.values))))


@dataclass(frozen=True)
class CustomPayoff(_Payoff):
    func: Callable
    growth: GrowthClass
    positive_domain: bool = False
    increasing: bool = False
    name: str = "custom"
    kind = "custom"
    is_constant = False

    def _eval(self, x):
        return np.asarray(self.func(x), dtype=float)


PayoffSpec = Union[ConstantPayoff, LogShift, LogQuad, HddStyle, BoundedTable, CustomPayoff]


def payoff_eval(f: PayoffSpec, x):
    """Evaluate F(x); raises DomainError outside the payoff's domain."""
    return f(x)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    assumption: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_failed(self):
        if self.violations:
            raise ValidationError(self.violations)


FD_REL_SLACK = 1e-6


def _growth_grid(f) -> np.ndarray:
    pts = np.logspace(-3, 3, 1000)
    if f.positive_domain:
        return pts
    return np.concatenate([-pts[::-1][::2], pts[::2]])


def check_growth(f: PayoffSpec) -> Optional[str]:
    """Spot-check the declared growth class on a log-spaced grid.

    Returns a description of the first violation, or None.
    """
    gc = f.growth
    x = _growth_grid(f)
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        return "payoff is not finite on the check grid"
    if gc.kind == "bounded":
        bad = np.abs(fx) > gc.bound * (1 + FD_REL_SLACK)
    elif gc.kind == "linear":
        bad = np.abs(fx) > gc.bound * (1 + np.abs(x)) * (1 + FD_REL_SLACK)
    elif gc.kind == "log_lower_bounded":
        sel = x >= 1
        bad = np.zeros_like(x, dtype=bool)
        bad[sel] = fx[sel] < -gc.bound * (1 + np.log(x[sel])) - FD_REL_SLACK
    else:
        h = np.maximum(1e-6, 1e-6 * np.abs(x))
        dfx = (np.asarray(f(x + h)) - np.asarray(f(x - h))) / (2 * h)
        if gc.kind == "xFprime_bounded":
            bad = np.abs(x * dfx) > gc.bound * (1 + FD_REL_SLACK)
        else:
            bad = (dfx < -FD_REL_SLACK) | (dfx > gc.bound * (1 + FD_REL_SLACK))
    if np.any(bad):
        xb = x[np.argmax(bad)]
        return f"declared growth class {gc.kind}({gc.bound}) violated at x={xb!r}"
    return None


def validate(m: MarketSpec, r: RiskProcessSpec, f: PayoffSpec) -> ValidationReport:
    """Check every modelling assumption; collect all violations."""
    out = []

    def bad(fieldname, message, assumption):
        out.append(Violation(fieldname, message, assumption))

    if not m.beta2 or not math.isfinite(m.beta2):
        bad("market.beta2", "beta2 must be nonzero", "asset loading on the independent noise is nonzero")
    if not (m.eta > 0):
        bad("market.eta", "eta must be positive", "exponential utility with positive risk aversion")
    if not (m.horizon > 0):
        bad("market.horizon", "horizon must be positive", "maturity T > 0")
    if not math.isfinite(m.drift.sup_norm):
        bad("market.drift", "drift needs a finite sup-norm bound", "bounded drift g (Novikov condition)")

    if isinstance(r, Geometric):
        if not (r.x0 > 0):
            bad("risk_process.x0", "geometric process needs x0 > 0", "geometric case starts on the positive half line")
        if r.nu == 0:
            bad("risk_process.nu", "nu must be nonzero", "geometric volatility nu != 0")
    elif isinstance(r, OUPeriodic):
        if not (r.c1 > 0):
            bad("risk_process.c1", "c1 must be positive", "mean reversion speed c1 > 0")
        if r.c2 < 0:
            bad("risk_process.c2", "c2 must be nonnegative", "forcing amplitude c2 >= 0")
        if not (r.sigma0 > 0):
            bad("risk_process.sigma0", "sigma0 must be positive", "uniform ellipticity")
        if not (r.period > 0):
            bad("risk_process.period", "period must be positive", "forcing period T0 > 0")
    elif isinstance(r, DoubleWell):
        if not (r.c1 > 0):
            bad("risk_process.c1", "c1 must be positive", "forcing intensity c1 > 0")
        if not (r.sigma0 > 0):
            bad("risk_process.sigma0", "sigma0 must be positive", "uniform ellipticity")
        if not (r.period > 0):
            bad("risk_process.period", "period must be positive", "forcing period T0 > 0")

    if f.positive_domain and not isinstance(r, Geometric):
        bad("payoff", f"{f.kind} payoff needs a positive risk process", "payoff domain contains the state space")
    msg = check_growth(f)
    if msg:
        bad("payoff", msg, "payoff growth condition")
    return ValidationReport(tuple(out))
