"""Path simulation for the risk process X and the drift-modified process Y.

Gaussian increments come from a counter-based generator: the draw for
(seed, channel, path, step) is a pure function of those four integers, so
any subset of paths can be regenerated on its own and results do not
depend on how paths are split between workers.

Schemes: exact log-Euler for the geometric process, exact Gaussian
transition for the periodic Ornstein-Uhlenbeck process (whenever the
drift stays linear), Euler-Maruyama otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from ._parallel import map_blocks
from .model import DoubleWell, Geometric, MarketSpec, OUPeriodic, derive_constants

CH_W, CH_B, CH_AUX = 0, 1, 2


class NumericalError(RuntimeError):
    """A simulation or solver produced unusable numbers."""


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    def t(self, j: int) -> float:
        return self.t0 + j * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


class Noise:
    """Brownian increments dW, dB (variance dt) and an auxiliary normal per step.

    With ``antithetic`` the dW draws of paths 2i and 2i+1 are mirror
    images; dB and the auxiliary channel are left untouched.
    """

    def __init__(self, seed: int, dt: float, antithetic: bool = False):
        self.seed = int(seed)
        self.sqdt = math.sqrt(dt)
        self.antithetic = antithetic

    def dW(self, paths, j):
        if self.antithetic:
            z = kernels.gaussian(self.seed, CH_W, paths // 2, j)
            return self.sqdt * np.where(paths % 2 == 1, -z, z)
        return self.sqdt * kernels.gaussian(self.seed, CH_W, paths, j)

    def dB(self, paths, j):
        return self.sqdt * kernels.gaussian(self.seed, CH_B, paths, j)

    def aux(self, paths, j):
        return kernels.gaussian(self.seed, CH_AUX, paths, j)


class Stepper:
    """One time step of X (market=None) or of Y (drift b - beta1 g sigma / beta^2)."""

    def __init__(self, r, market: Optional[MarketSpec] = None):
        self.r = r
        self.g = None
        if market is not None and market.beta1 != 0:
            self.shift = derive_constants(market).drift_shift
            self.g = market.drift
        linear = self.g is None or self.g.is_constant
        self.exact = isinstance(r, Geometric) and linear or isinstance(r, OUPeriodic) and linear
        self.needs_aux = isinstance(r, OUPeriodic) and self.exact and r.sigma0 != 0

    def extra_drift(self, t, x):
        """The drift correction -beta1 g sigma / beta^2 (zero for X)."""
        if self.g is None:
            return 0.0
        return -self.shift * self.g(t, x) * self.r.sigma(t, x)

    def step(self, t, dt, x, dW, aux=None):
        r = self.r
        if isinstance(r, Geometric):
            logdrift = r.mu - 0.5 * r.nu ** 2
            if self.g is not None:
                logdrift = logdrift - self.shift * r.nu * self.g(t, x)
            return x * np.exp(logdrift * dt + r.nu * dW)
        if isinstance(r, OUPeriodic) and self.exact:
            return self._ou_exact(t, dt, x, dW, aux)
        xn = x + (r.b(t, x) + self.extra_drift(t, x)) * dt + r.sigma(t, x) * dW
        if isinstance(r, DoubleWell) and not np.all(np.isfinite(xn)):
            raise NumericalError(f"non-finite state at t={t!r}; Euler step dt={dt!r} is too coarse for the double-well drift")
        return xn

    def _ou_exact(self, t, dt, x, dW, aux):
        r = self.r
        c1, sig = r.c1, r.sigma0
        decay = math.exp(-c1 * dt)
        one_minus = -math.expm1(-c1 * dt)
        frac = one_minus / c1 if c1 else dt
        omega = 2 * math.pi / r.period
        z = complex(c1, omega)
        forcing = r.c2 * ((np.exp(1j * omega * (t + dt)) - decay * np.exp(1j * omega * t)) / z).imag
        const = 0.0
        if self.g is not None:
            const = -self.shift * self.g(t, 0.0) * sig
        out = r.A + decay * (x - r.A) + forcing + const * frac
        if sig:
            # J = int e^{-c1 (t+dt-s)} dW_s, jointly Gaussian with dW
            var_j = -math.expm1(-2 * c1 * dt) / (2 * c1) if c1 else dt
            cov = frac
            resid = math.sqrt(max(var_j - cov * cov / dt, 0.0))
            out = out + sig * (cov / dt * dW + resid * aux)
        return out


class Walker:
    """Steps a block of paths; ``x`` holds the state at the current grid time.

    Iterating yields ``(j, t, dW)`` before the step from t_j to t_{j+1}.
    """

    def __init__(self, r, grid: TimeGrid, paths, noise: Noise, market=None, x_start=None):
        self.grid = grid
        self.paths = paths
        self.noise = noise
        self.stepper = Stepper(r, market)
        start = r.x0 if x_start is None else x_start
        self.x = np.full(len(paths), float(start))

    def __iter__(self):
        dt = self.grid.dt
        for j in range(self.grid.n_steps):
            t = self.grid.t(j)
            dW = self.noise.dW(self.paths, j)
            yield j, t, dW
            aux = self.noise.aux(self.paths, j) if self.stepper.needs_aux else None
            self.x = self.stepper.step(t, dt, self.x, dW, aux)


@dataclass(frozen=True)
class PathBundle:
    grid: TimeGrid
    dW: np.ndarray
    dB: np.ndarray
    X: Optional[np.ndarray]
    Y: Optional[np.ndarray]
    seed: int
    antithetic: bool = False

    def __post_init__(self):
        for a in (self.dW, self.dB, self.X, self.Y):
            if a is not None:
                a.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]


def _simulate(r, grid, n_paths, seed, market, want_x, want_y, x_start, antithetic):
    noise = Noise(seed, grid.dt, antithetic)
    sx = Stepper(r, None)
    sy = Stepper(r, market) if want_y else None
    dt = grid.dt
    start = r.x0 if x_start is None else x_start

    def block(a, b):
        paths = np.arange(a, b, dtype=np.int64)
        n = b - a
        dW = np.empty((n, grid.n_steps))
        dB = np.empty((n, grid.n_steps))
        X = np.empty((n, grid.n_steps + 1)) if want_x else None
        Y = np.empty((n, grid.n_steps + 1)) if want_y else None
        x = np.full(n, float(start))
        y = np.full(n, float(start))
        for j in range(grid.n_steps):
            t = grid.t(j)
            if want_x:
                X[:, j] = x
            if want_y:
                Y[:, j] = y
            w = noise.dW(paths, j)
            dW[:, j] = w
            dB[:, j] = noise.dB(paths, j)
            aux = noise.aux(paths, j) if (sx.needs_aux or (sy is not None and sy.needs_aux)) else None
            if want_x:
                x = sx.step(t, dt, x, w, aux)
            if want_y:
                y = sy.step(t, dt, y, w, aux)
        if want_x:
            X[:, -1] = x
        if want_y:
            Y[:, -1] = y
        return dW, dB, X, Y

    parts = map_blocks(block, n_paths)
    stack = lambda i: np.vstack([p[i] for p in parts]) if parts[0][i] is not None else None
    return PathBundle(grid, stack(0), stack(1), stack(2), stack(3), int(seed), antithetic)


def simulate_X(r, grid: TimeGrid, n_paths: int, seed: int, *, x_start=None, antithetic=False) -> PathBundle:
    return _simulate(r, grid, n_paths, seed, None, True, False, x_start, antithetic)


def simulate_Y(r, m: MarketSpec, grid: TimeGrid, n_paths: int, seed: int, *, x_start=None, antithetic=False) -> PathBundle:
    return _simulate(r, grid, n_paths, seed, m, False, True, x_start, antithetic)


def simulate_coupled(r, m: MarketSpec, grid: TimeGrid, n_paths: int, seed: int, *, x_start=None, antithetic=False) -> PathBundle:
    """X and Y driven by the identical dW."""
    return _simulate(r, grid, n_paths, seed, m, True, True, x_start, antithetic)


def fmt17(v) -> str:
    return format(float(v), ".17g")


def write_paths_csv(bundle: PathBundle, path) -> None:
    """One row per (path, grid node); increments are those starting at the node."""
    g = bundle.grid
    times = g.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "step", "t", "X", "Y", "dW", "dB"])
        for i in range(bundle.n_paths):
            for j in range(g.n_steps + 1):
                last = j == g.n_steps
                w.writerow([
                    i,
                    j,
                    fmt17(times[j]),
                    "" if bundle.X is None else fmt17(bundle.X[i, j]),
                    "" if bundle.Y is None else fmt17(bundle.Y[i, j]),
                    "" if last else fmt17(bundle.dW[i, j]),
                    "" if last else fmt17(bundle.dB[i, j]),
                ])
