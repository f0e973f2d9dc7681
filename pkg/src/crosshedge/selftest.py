"""Fast oracle checks whose expected values follow from arithmetic alone."""

from __future__ import annotations

import numpy as np

from .model import ConstantDrift, ConstantPayoff, Geometric, MarketSpec, OUPeriodic, derive_constants


def _canonical():
    return MarketSpec(0.2, 0.3, ConstantDrift(0.1), 1.0, 0.0, 1.0), Geometric(0.05, 0.3, 1.0)


def _check(name, ok, detail=""):
    return {"name": name, "passed": bool(ok), "detail": detail}


def run_trivial_suite():
    from .hedging import ConstantStrategy, WealthSample, admissibility_diagnostics, expected_utility, simulate_wealth
    from .pde import psi_to_price, solve_pair, solve_psi
    from .pricing import GeometricPricer, McConfig, dynamic_price_mc, static_price
    from .risk import entropic_risk
    from .sde import TimeGrid
    from .strategy import pi_sharp

    out = []
    m, r = _canonical()
    dc = derive_constants(m)
    out.append(_check("beta_sq", abs(dc.beta_sq - 0.13) < 1e-15, repr(dc.beta_sq)))
    out.append(_check("k", abs(dc.k - 9.0 / 13.0) < 1e-15, repr(dc.k)))
    out.append(_check("aversion_ratio", abs(dc.aversion_ratio - 0.09 / 0.13) < 1e-15, repr(dc.aversion_ratio)))
    ps = pi_sharp(m, r, 0.0, 1.0)
    out.append(_check("pi_sharp", abs(ps - 0.1 / 0.13) < 1e-15, repr(ps)))

    c = 0.7
    f = ConstantPayoff(c)
    cfg = McConfig(2000, 10, 1)
    p_cf = GeometricPricer(f, m, r)(0.0, 1.0).value
    p_mc = dynamic_price_mc(f, m, r, 0.0, 1.0, cfg).value
    s_mc = static_price(f, r, 0.0, 1.0, eta=m.eta, horizon=m.horizon, cfg=cfg).value
    out.append(_check("constant payoff, closed form", abs(p_cf - c) < 1e-10, repr(p_cf)))
    out.append(_check("constant payoff, monte carlo", abs(p_mc - c) < 1e-10, repr(p_mc)))
    out.append(_check("constant payoff, static", abs(s_mc - c) < 1e-10, repr(s_mc)))
    psi0, psiF = solve_pair(m, r, f, None, 40, 40)
    price = psi_to_price(psiF, psi0, dc.k)
    err = float(np.max(np.abs(price.values - c)))
    out.append(_check("constant payoff, pde", err < 1e-10, repr(err)))

    expect = np.exp(-dc.killing * 0.01 * (1.0 - psi0.t_nodes))
    err = float(np.max(np.abs(psi0.values / expect[:, None] - 1.0)))
    # Crank-Nicolson decay factor vs exp: O(dt^2) over the horizon
    out.append(_check("psi0 with constant drift", err < 1e-6, repr(err)))
    spread = float(np.max(np.ptp(psi0.values, axis=1) / psi0.values[:, 0]))
    out.append(_check("psi0 spatially constant", spread < 1e-12, repr(spread)))
    m0 = MarketSpec(0.2, 0.3, ConstantDrift(0.0), 1.0, 0.0, 1.0)
    ones = solve_psi(m0, OUPeriodic(1.0, 0.5, 10.0, 1.0, 2.0, 10.0), None, None, 20, 20)
    err = float(np.max(np.abs(ones.values - 1.0)))
    out.append(_check("psi is one without drift", err < 1e-12, repr(err)))
    same = psi_to_price(psi0, psi0, dc.k)
    out.append(_check("equal psi gives zero price", np.all(same.values == 0.0)))

    samples = np.full(10, 0.3)
    out.append(_check("entropic risk of a constant", abs(entropic_risk(samples, 2.0) + 0.3) < 1e-15))
    z = np.zeros(4)
    u = expected_utility(WealthSample(z, None, z, 0), m.eta)
    out.append(_check("utility of zero wealth", u.mean_utility == -1.0, repr(u.mean_utility)))
    u = expected_utility(WealthSample(z, np.full(4, c), z, 0), m.eta, True, c)
    out.append(_check("utility with payoff netted by its price", u.mean_utility == -1.0, repr(u.mean_utility)))

    w = simulate_wealth(ConstantStrategy(0.0), m, r, TimeGrid(0.0, 1.0, 10), 100, 3, v0=1.5)
    out.append(_check("zero strategy keeps wealth", np.all(w.terminal_wealth == 1.5)))
    adm = admissibility_diagnostics(ConstantStrategy(0.0), m, r, McConfig(100, 10, 3))
    out.append(_check("zero strategy never hits", all(l.p_hat == 0.0 for l in adm.levels)))
    mdet = MarketSpec(0.0, 0.0, ConstantDrift(0.1), 1.0, 0.0, 1.0)
    w = simulate_wealth(ConstantStrategy(2.0), mdet, r, TimeGrid(0.0, 1.0, 8), 5, 0)
    out.append(_check("deterministic wealth", np.allclose(w.terminal_wealth, 0.2, rtol=0, atol=1e-15)))
    return out


if __name__ == "__main__":
    for res in run_trivial_suite():
        print(("ok   " if res["passed"] else "FAIL ") + res["name"], res["detail"])
