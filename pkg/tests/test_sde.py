import csv
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from crosshedge.model import ConstantDrift, DoubleWell, Geometric, OUPeriodic, derive_constants
from crosshedge.pricing import McConfig, modified_samples, terminal_samples
from crosshedge.sde import PathBundle, Stepper, TimeGrid, simulate_coupled, simulate_X, simulate_Y, write_paths_csv

from conftest import canonical_market, canonical_process


def test_time_grid():
    g = TimeGrid(0.0, 1.0, 4)
    assert g.dt == 0.25
    assert np.array_equal(g.times, [0.0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 3)


def test_degenerate_geometric_stays_put():
    b = simulate_X(Geometric(0.0, 0.0, 1.0), TimeGrid(0.0, 1.0, 10), 50, 1)
    assert np.all(b.X == 1.0)


def test_geometric_mean():
    r = Geometric(0.05, 0.3, 1.0)
    xt = terminal_samples(r, 0.0, 1.0, 1.0, McConfig(100_000, 1, 5))
    se = xt.std(ddof=1) / math.sqrt(len(xt))
    assert abs(xt.mean() - math.exp(0.05)) < 3 * se


def test_geometric_scheme_is_exact_in_law():
    # one step or fifty, ln X_T is N((mu - nu^2/2) T, nu^2 T)
    r = Geometric(0.05, 0.3, 1.0)
    for n_steps in (1, 50):
        lx = np.log(terminal_samples(r, 0.0, 1.0, 1.0, McConfig(100_000, n_steps, 9)))
        assert abs(lx.mean() - (0.05 - 0.045)) < 3 * 0.3 / math.sqrt(len(lx))
        assert abs(lx.var(ddof=1) / 0.09 - 1.0) < 3 * math.sqrt(2.0 / len(lx))


def test_ou_deterministic_relaxation():
    r = OUPeriodic(c1=1.5, c2=0.0, A=10.0, period=1.0, sigma0=0.0, x0=4.0)
    b = simulate_X(r, TimeGrid(0.0, 2.0, 7), 3, 0)
    expect = 10.0 + (4.0 - 10.0) * np.exp(-1.5 * b.grid.times)
    assert np.allclose(b.X, expect[None, :], rtol=0, atol=1e-13)


def test_ou_forced_ode_limit():
    r = OUPeriodic(c1=1.0, c2=0.5, A=10.0, period=1.0, sigma0=0.0, x0=8.0)
    b = simulate_X(r, TimeGrid(0.0, 1.5, 9), 2, 0)
    sol = solve_ivp(lambda t, x: r.b(t, x), (0.0, 1.5), [8.0], t_eval=b.grid.times, rtol=1e-12, atol=1e-12)
    assert np.allclose(b.X[0], sol.y[0], atol=1e-9)


def test_ou_exact_transition_moments():
    r = OUPeriodic(c1=1.0, c2=0.5, A=10.0, period=1.0, sigma0=2.0, x0=10.0)
    xt = terminal_samples(r, 0.0, 10.0, 1.0, McConfig(100_000, 3, 2))
    mean_ode = solve_ivp(lambda t, x: r.b(t, x), (0.0, 1.0), [10.0], rtol=1e-12, atol=1e-12).y[0, -1]
    var = 4.0 * (1 - math.exp(-2.0)) / 2.0
    assert abs(xt.mean() - mean_ode) < 3 * math.sqrt(var / len(xt))
    assert abs(xt.var(ddof=1) / var - 1.0) < 3 * math.sqrt(2.0 / len(xt))


def test_double_well_weak_order_one():
    r = DoubleWell(0.5, 1.0, 0.5, 0.5)
    T, n_fine, n = 2.0, 1280, 20_000
    rng = np.random.default_rng(0)
    dW = rng.standard_normal((n, n_fine)) * math.sqrt(T / n_fine)
    st = Stepper(r)

    def run(ns):
        agg = dW.reshape(n, ns, n_fine // ns).sum(axis=2)
        dt = T / ns
        x = np.full(n, r.x0)
        for j in range(ns):
            x = st.step(j * dt, dt, x, agg[:, j])
        return x

    ref = run(n_fine)
    errs = [abs(np.mean(run(ns) - ref)) for ns in (20, 40, 80)]
    for e0, e1 in zip(errs, errs[1:]):
        assert 2.0 / 1.5 <= e0 / e1 <= 2.0 * 1.5


def test_double_well_blowup_is_reported():
    from crosshedge.sde import NumericalError

    r = DoubleWell(0.5, 1.0, 0.5, 30.0)
    with pytest.raises(NumericalError, match="dt="):
        with np.errstate(over="ignore", invalid="ignore"):
            simulate_X(r, TimeGrid(0.0, 1.0, 10), 4, 0)


def test_no_cross_loading_gives_identical_paths():
    m = canonical_market(beta1=0.0)
    r = canonical_process()
    g = TimeGrid(0.0, 1.0, 20)
    bx = simulate_X(r, g, 500, 3)
    by = simulate_Y(r, m, g, 500, 3)
    assert np.array_equal(bx.X, by.Y)
    bc = simulate_coupled(r, m, g, 500, 3)
    assert np.array_equal(bc.X, bc.Y)


def test_modified_geometric_log_moments(market, geo):
    dc = derive_constants(market)
    a = (geo.mu - geo.nu * 0.1 * market.beta1 / dc.beta_sq - 0.5 * geo.nu ** 2) * 0.6
    b_sq = geo.nu ** 2 * 0.6
    yt, _ = modified_samples(market, geo, 0.4, 1.3, McConfig(100_000, 10, 4))
    ly = np.log(yt / 1.3)
    assert abs(ly.mean() - a) < 3 * math.sqrt(b_sq / len(ly))
    assert abs(ly.var(ddof=1) / b_sq - 1.0) < 3 * math.sqrt(2.0 / len(ly))


def test_comparison_under_coupling():
    # alpha > 0, beta1 < 0, nu > 0: the modified drift dominates
    m = canonical_market(beta1=-0.2)
    r = canonical_process()
    g = TimeGrid(0.0, 1.0, 1000)
    b = simulate_coupled(r, m, g, 10_000, 8)
    assert np.min(b.Y[:, -1] - b.X[:, -1]) >= -10 * g.dt
    assert np.all(b.Y >= b.X)


def test_zero_volatility_coupled_difference():
    m = canonical_market()
    r = Geometric(0.05, 0.0, 2.0)
    b = simulate_coupled(r, m, TimeGrid(0.0, 1.0, 10), 3, 0)
    # b_hat = b when nu = 0, so the difference is x0 (e^{mu T} - e^{mu T})
    assert np.allclose(b.Y[:, -1] - b.X[:, -1], 0.0, atol=1e-15)
    assert np.allclose(b.X[:, -1], 2.0 * math.exp(0.05), rtol=1e-14)


def test_bundle_is_adapted_and_reproducible(market, geo):
    g = TimeGrid(0.0, 1.0, 8)
    a = simulate_coupled(geo, market, g, 300, 12)
    b = simulate_coupled(geo, market, g, 300, 12)
    for u, v in ((a.dW, b.dW), (a.dB, b.dB), (a.X, b.X), (a.Y, b.Y)):
        assert np.array_equal(u, v)
    # X[:, j] only uses dW[:, < j]
    lx = np.log(a.X)
    steps = np.diff(lx, axis=1) - (geo.mu - 0.5 * geo.nu ** 2) * g.dt
    assert np.allclose(steps, geo.nu * a.dW, atol=1e-12)
    assert not a.X.flags.writeable


def test_path_subset_regenerates_identically(geo):
    g = TimeGrid(0.0, 1.0, 5)
    full = simulate_X(geo, g, 20_000, 6)
    small = simulate_X(geo, g, 100, 6)
    assert np.array_equal(full.X[:100], small.X)


def test_increment_statistics(geo):
    b = simulate_X(geo, TimeGrid(0.0, 1.0, 4), 50_000, 21)
    n = b.n_paths
    for j in range(4):
        w, z = b.dW[:, j], b.dB[:, j]
        assert abs(w.mean()) < 4 * math.sqrt(0.25 / n)
        assert abs(w.var() / 0.25 - 1) < 4 * math.sqrt(2 / n)
        assert abs(np.corrcoef(w, z)[0, 1]) < 4 / math.sqrt(n)


def test_antithetic_mirrors_dw_only(geo):
    b = simulate_X(geo, TimeGrid(0.0, 1.0, 3), 10, 2, antithetic=True)
    assert np.array_equal(b.dW[0::2], -b.dW[1::2])
    assert not np.array_equal(b.dB[0::2], -b.dB[1::2])


def test_worker_count_does_not_change_paths(tmp_path):
    code = (
        "import numpy as np, sys;"
        "from crosshedge.model import Geometric;"
        "from crosshedge.sde import simulate_X, TimeGrid;"
        "b = simulate_X(Geometric(0.05, 0.3, 1.0), TimeGrid(0.0, 1.0, 5), 30000, 4);"
        "np.save(sys.argv[1], b.X)"
    )
    outs = []
    for threads in ("1", "4"):
        f = tmp_path / f"x{threads}.npy"
        env = dict(os.environ, CROSSHEDGE_THREADS=threads)
        subprocess.run([sys.executable, "-c", code, str(f)], check=True, env=env)
        outs.append(np.load(f))
    assert np.array_equal(outs[0], outs[1])


def test_paths_csv(tmp_path, market, geo):
    b = simulate_coupled(geo, market, TimeGrid(0.0, 1.0, 2), 2, 0)
    p = tmp_path / "paths.csv"
    write_paths_csv(b, p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["path_id", "step", "t", "X", "Y", "dW", "dB"]
    assert len(rows) == 1 + 2 * 3
    assert float(rows[1][3]) == b.X[0, 0]
    assert float(rows[2][5]) == b.dW[0, 1]
    assert rows[3][5] == ""
