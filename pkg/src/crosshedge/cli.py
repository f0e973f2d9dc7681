"""Command line entry point.

    crosshedge <subcommand> [--config FILE] [--seed N] [--paths N] [--out DIR] [--set key=value ...]

Exit status: 0 pass, 1 invalid configuration, 2 numerical failure,
3 a check the subcommand runs did not pass.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .model import (
    AffineDrift,
    BoundedTable,
    ConstantDrift,
    ConstantPayoff,
    DoubleWell,
    Geometric,
    HddStyle,
    LogQuad,
    LogShift,
    MarketSpec,
    OUPeriodic,
    TableDrift,
    ValidationError,
    derive_constants,
    validate,
)
from .sde import NumericalError, fmt17

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3

CANONICAL = {
    "market": {
        "beta1": 0.2,
        "beta2": 0.3,
        "eta": 1.0,
        "v0": 0.0,
        "horizon": 1.0,
        "drift": {"kind": "constant", "alpha": 0.1},
    },
    "risk_process": {"kind": "geometric", "mu": 0.05, "nu": 0.3, "x0": 1.0},
    "payoff": {"kind": "log_shift", "c": 1.0},
    "pricing": {"n_paths": 100000, "n_steps": 100, "seed": 0, "antithetic": False},
    "pde": {"n_t": 400, "n_x": 400, "domain": None, "boundary": "smoothed"},
    "hedging": {"n_steps": 1000, "perturb": 0.1, "levels": None},
    "outputs": "out",
}


class ConfigError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# deterministic serialisation


def _plain(o):
    if dataclasses.is_dataclass(o) and not isinstance(o, type):
        return {f.name: _plain(getattr(o, f.name)) for f in dataclasses.fields(o)}
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    return o


def _encode(o, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if o is None:
        return "null"
    if o is True:
        return "true"
    if o is False:
        return "false"
    if isinstance(o, int):
        return str(o)
    if isinstance(o, float):
        # 17 significant digits round-trip exactly; JSON has no NaN or inf
        return fmt17(o) if math.isfinite(o) else "null"
    if isinstance(o, str):
        return json.dumps(o)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(o[k], indent, level + 1)}" for k in sorted(o)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in o) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj, indent=2) -> str:
    return _encode(_plain(obj), indent, 0) + "\n"


def config_hash(cfg: dict) -> str:
    canon = json.dumps(_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


# ---------------------------------------------------------------------------
# configuration


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("drift", "risk_process", "payoff"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _set_dotted(cfg, key, raw):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def load_config(path=None, overrides=(), seed=None, paths=None, out=None) -> dict:
    """Read a JSON scenario; sections missing from the file take the canonical defaults.

    market, risk_process and payoff must be given in full when a file is used.
    """
    if path is None:
        cfg = copy.deepcopy(CANONICAL)
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"not valid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError("<root>", str(exc)) from None
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "expected a JSON object")
        for sec in ("market", "risk_process", "payoff"):
            if sec not in raw:
                raise ConfigError(sec, "missing section")
        base = {k: v for k, v in CANONICAL.items() if k not in ("market", "risk_process", "payoff")}
        base["market"] = {"v0": 0.0, "horizon": 1.0}
        cfg = _merge(base, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        k, v = item.split("=", 1)
        _set_dotted(cfg, k.strip(), v)
    if seed is not None:
        cfg["pricing"]["seed"] = int(seed)
    if paths is not None:
        cfg["pricing"]["n_paths"] = int(paths)
    if out is not None:
        cfg["outputs"] = str(out)
    return cfg


def _num(sec, key, path, default=None, positive=False, integer=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}", "expected an integer")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}", "must be positive")
    return int(v) if integer else float(v)


def _section(cfg, key):
    sec = cfg.get(key)
    if not isinstance(sec, dict):
        raise ConfigError(key, "expected an object")
    return sec


def _tuple(sec, key, path):
    v = sec.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}.{key}", "expected a nonempty list")
    return tuple(v)


def build_drift(sec, path):
    if not isinstance(sec, dict):
        raise ConfigError(path, "expected an object")
    kind = sec.get("kind")
    if kind == "constant":
        return ConstantDrift(_num(sec, "alpha", path))
    if kind == "affine":
        return AffineDrift(_num(sec, "c0", path), _num(sec, "c1", path), _num(sec, "bound", path))
    if kind == "table":
        vals = sec.get("values")
        if not isinstance(vals, list) or not all(isinstance(r, list) for r in vals):
            raise ConfigError(f"{path}.values", "expected a list of rows")
        try:
            return TableDrift(_tuple(sec, "t_nodes", path), _tuple(sec, "x_nodes", path), tuple(tuple(r) for r in vals))
        except ValueError as exc:
            raise ConfigError(f"{path}.values", str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown drift kind {kind!r}")


def build_market(cfg) -> MarketSpec:
    sec = _section(cfg, "market")
    return MarketSpec(
        beta1=_num(sec, "beta1", "market"),
        beta2=_num(sec, "beta2", "market"),
        drift=build_drift(sec.get("drift"), "market.drift"),
        eta=_num(sec, "eta", "market"),
        v0=_num(sec, "v0", "market", 0.0),
        horizon=_num(sec, "horizon", "market", 1.0),
    )


def build_process(cfg):
    sec = _section(cfg, "risk_process")
    p = "risk_process"
    kind = sec.get("kind")
    if kind == "geometric":
        return Geometric(_num(sec, "mu", p), _num(sec, "nu", p), _num(sec, "x0", p))
    if kind == "ou_periodic":
        return OUPeriodic(
            _num(sec, "c1", p), _num(sec, "c2", p), _num(sec, "A", p),
            _num(sec, "period", p), _num(sec, "sigma0", p), _num(sec, "x0", p),
        )
    if kind == "double_well":
        return DoubleWell(_num(sec, "c1", p), _num(sec, "period", p), _num(sec, "sigma0", p), _num(sec, "x0", p))
    raise ConfigError(f"{p}.kind", f"unknown risk process kind {kind!r}")


def build_payoff(cfg):
    sec = _section(cfg, "payoff")
    p = "payoff"
    kind = sec.get("kind")
    if kind == "constant":
        return ConstantPayoff(_num(sec, "c", p))
    if kind == "log_shift":
        return LogShift(_num(sec, "c", p))
    if kind == "log_quad":
        return LogQuad(_num(sec, "c", p))
    if kind == "hdd":
        return HddStyle(_num(sec, "base", p))
    if kind == "table":
        return BoundedTable(_tuple(sec, "x_nodes", p), _tuple(sec, "values", p))
    raise ConfigError(f"{p}.kind", f"unknown payoff kind {kind!r}")


def build_mc(cfg, n_steps=None):
    from .pricing import McConfig

    sec = _section(cfg, "pricing")
    p = "pricing"
    try:
        return McConfig(
            n_paths=_num(sec, "n_paths", p, 100000, positive=True, integer=True),
            n_steps=n_steps if n_steps is not None else _num(sec, "n_steps", p, 100, positive=True, integer=True),
            seed=_num(sec, "seed", p, 0, integer=True),
            antithetic=bool(sec.get("antithetic", False)),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(p, str(exc)) from None


class Scenario:
    def __init__(self, cfg):
        self.cfg = cfg
        self.m = build_market(cfg)
        self.r = build_process(cfg)
        self.f = build_payoff(cfg)
        self.mc = build_mc(cfg)
        sec = cfg.get("pde", {}) or {}
        self.n_t = _num(sec, "n_t", "pde", 400, positive=True, integer=True)
        self.n_x = _num(sec, "n_x", "pde", 400, positive=True, integer=True)
        dom = sec.get("domain")
        if dom is not None and (not isinstance(dom, list) or len(dom) != 2):
            raise ConfigError("pde.domain", "expected [lo, hi] or null")
        self.domain = None if dom is None else (float(dom[0]), float(dom[1]))
        self.boundary = sec.get("boundary", "smoothed")
        hed = cfg.get("hedging", {}) or {}
        self.hedge_steps = _num(hed, "n_steps", "hedging", 1000, positive=True, integer=True)
        self.perturb = _num(hed, "perturb", "hedging", 0.1)
        self.levels = hed.get("levels")
        self.out = Path(cfg.get("outputs", "out"))
        self.hash = config_hash(cfg)
        validate(self.m, self.r, self.f).raise_if_failed()

    @property
    def closed_form(self) -> bool:
        return isinstance(self.r, Geometric) and self.m.drift.is_constant


# ---------------------------------------------------------------------------
# artifacts


def emit_surface(psi0, psiF, price, path, config_digest, extra=None):
    """CSV t,x,psi0,psiF,p plus a JSON sidecar with grid metadata and the config hash."""
    from .pde import write_surface_csv

    path = Path(path)
    write_surface_csv(psi0, psiF, price, path)
    meta = {
        "config_hash": config_digest,
        "n_t": len(psi0.t_nodes) - 1,
        "n_x": len(psi0.x_nodes) - 1,
        "t_range": [float(psi0.t_nodes[0]), float(psi0.t_nodes[-1])],
        "x_range": [float(psi0.x_nodes[0]), float(psi0.x_nodes[-1])],
        "log_x": psi0.log_x,
        "boundary_kind": psi0.boundary_kind,
        "columns": ["t", "x", "psi0", "psiF", "p"],
    }
    if extra:
        meta.update(extra)
    write_json(path.with_suffix(".json"), meta)
    return path


def _stamp(sc, body):
    body = dict(body)
    body["config_hash"] = sc.hash
    return body


# ---------------------------------------------------------------------------
# subcommands


def cmd_price(sc: Scenario):
    from .pricing import GeometricPricer, dynamic_price_mc, static_price

    dc = derive_constants(sc.m)
    x0 = sc.r.x0
    s = static_price(sc.f, sc.r, 0.0, x0, eta=sc.m.eta, horizon=sc.m.horizon, cfg=sc.mc)
    pm = dynamic_price_mc(sc.f, sc.m, sc.r, 0.0, x0, sc.mc)
    p = GeometricPricer(sc.f, sc.m, sc.r)(0.0, x0) if sc.closed_form else pm
    body = {
        "p": p.value,
        "std_error_p": p.std_error,
        "method": p.method,
        "p_mc": pm.value,
        "std_error_p_mc": pm.std_error,
        "ess_p_mc": pm.ess,
        "s": s.value,
        "std_error_s": s.std_error,
        "k": dc.k,
        "aversion_ratio": dc.aversion_ratio,
        "beta_sq": dc.beta_sq,
        "x0": x0,
    }
    write_json(sc.out / "price.json", _stamp(sc, body))
    return EXIT_OK


def _pde_surfaces(sc):
    from .pde import psi_to_price, solve_pair

    psi0, psiF = solve_pair(sc.m, sc.r, sc.f, sc.domain, sc.n_t, sc.n_x, boundary=sc.boundary)
    return psi0, psiF, psi_to_price(psiF, psi0, derive_constants(sc.m).k)


def cmd_strategy(sc: Scenario):
    from .strategy import frames_from_pde

    psi0, psiF, price = _pde_surfaces(sc)
    frames = frames_from_pde(sc.m, sc.r, psi0, psiF, price)
    # thin to at most 50 x 50 rows for the table
    ts = sorted({fr.t for fr in frames})
    xs = sorted({fr.x for fr in frames})
    keep_t = set(ts[:: max(1, len(ts) // 50)])
    keep_x = set(xs[:: max(1, len(xs) // 50)])
    with open(sc.out / "strategy.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "pi_sharp", "pi_star", "delta", "residual"])
        for fr in frames:
            if fr.t in keep_t and fr.x in keep_x:
                w.writerow([fmt17(fr.t), fmt17(fr.x), fmt17(fr.pi_sharp), fmt17(fr.pi_star), fmt17(fr.delta), fmt17(fr.residual)])
    worst = max(fr.residual / (1.0 + abs(fr.pi_star)) for fr in frames)
    ok = worst < 1e-4
    body = {"n_frames": len(frames), "max_scaled_residual": worst, "tolerance": 1e-4, "passed": ok}
    write_json(sc.out / "strategy.json", _stamp(sc, body))
    return EXIT_OK if ok else EXIT_CHECK


def _strategies(sc):
    """(pi_star, pi_sharp, pricer) for the wealth simulations."""
    from .hedging import ConstantStrategy, geometric_pi_star_table, pde_strategy
    from .pde import PdePricer
    from .pricing import GeometricPricer

    dc = derive_constants(sc.m)
    if sc.closed_form:
        return (
            geometric_pi_star_table(sc.f, sc.m, sc.r),
            ConstantStrategy(sc.m.drift.alpha / (sc.m.eta * dc.beta_sq)),
            GeometricPricer(sc.f, sc.m, sc.r),
        )
    psi0, psiF, price = _pde_surfaces(sc)
    return pde_strategy(sc.m, sc.r, psiF), pde_strategy(sc.m, sc.r, psi0), PdePricer(price)


def cmd_simulate(sc: Scenario, per_path=False):
    from .hedging import expected_utility, indifference_check, simulate_wealth_many
    from .sde import TimeGrid

    star, sharp, pricer = _strategies(sc)
    mc = build_mc(sc.cfg, n_steps=sc.hedge_steps)
    rep = indifference_check(sc.f, sc.m, sc.r, mc, pricer, pi_star_strategy=star, pi_sharp_strategy=sharp, perturb=sc.perturb)
    body = {"indifference": rep}
    if per_path:
        grid = TimeGrid(0.0, sc.m.horizon, mc.n_steps)
        w = simulate_wealth_many([star], sc.m, sc.r, grid, mc.n_paths, mc.seed, payoff=sc.f, antithetic=mc.antithetic)[0]
        with open(sc.out / "wealth_paths.csv", "w", newline="") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(["path_id", "V_T", "F", "min_wealth"])
            for i in range(w.n_paths):
                cw.writerow([i, fmt17(w.terminal_wealth[i]), fmt17(w.terminal_payoff[i]), fmt17(w.min_wealth[i])])
        body["pi_star_utility"] = expected_utility(w, sc.m.eta, True, rep.price)
    write_json(sc.out / "simulate.json", _stamp(sc, body))
    return EXIT_OK if rep.passed and rep.control_passed else EXIT_CHECK


def cmd_compare(sc: Scenario):
    from .risk import cross_modified_risk, static_dynamic_gap

    rep = static_dynamic_gap(sc.f, sc.m, sc.r, sc.mc)
    cross = cross_modified_risk(sc.f, sc.m, sc.r, sc.mc)
    body = {"risk_report": rep, "cross_modified_risk": cross}
    write_json(sc.out / "compare.json", _stamp(sc, body))
    ok = cross.agree is not False
    for chk in rep.checks.values():
        if chk.get("resolved", True) and chk.get("consistent", True) is False:
            ok = False
        if chk.get("gap_nonnegative", True) is False or chk.get("agree", True) is False:
            ok = False
    return EXIT_OK if ok else EXIT_CHECK


def cmd_pde_check(sc: Scenario):
    from .pde import boundary_influence, default_domain, feynman_kac_report, interior_probe_points, mc_probes

    psi0, psiF, price = _pde_surfaces(sc)
    emit_surface(psi0, psiF, price, sc.out / "surface.csv", sc.hash)
    probes = interior_probe_points(psiF)
    samples = mc_probes(sc.f, sc.m, sc.r, probes, sc.mc)
    fk = feynman_kac_report(psiF, samples)
    dom = sc.domain or default_domain(sc.m, sc.r)
    infl = boundary_influence(sc.m, sc.r, sc.f, dom, sc.n_t, sc.n_x, probes[:5])
    body = {
        "feynman_kac": fk,
        "boundary_influence": infl,
        "min_psi0": float(np.min(psi0.values)),
        "min_psiF": float(np.min(psiF.values)),
    }
    write_json(sc.out / "pde_check.json", _stamp(sc, body))
    return EXIT_OK if fk.passed else EXIT_CHECK


def cmd_admissibility(sc: Scenario):
    from .hedging import ConstantStrategy, admissibility_diagnostics

    star, sharp, _ = _strategies(sc)
    mc = sc.mc
    levels = sc.levels
    rep_sharp = admissibility_diagnostics(sharp, sc.m, sc.r, mc, levels)
    rep_star = admissibility_diagnostics(star, sc.m, sc.r, mc, levels)
    body = {"pi_sharp": rep_sharp, "pi_star": rep_star}
    if isinstance(sharp, ConstantStrategy):
        body["pi_sharp_within_stated_bound"] = rep_sharp.all_within_stated
        body["pi_sharp_within_corrected_bound"] = rep_sharp.all_within_corrected
    write_json(sc.out / "admissibility.json", _stamp(sc, body))
    return EXIT_CHECK if rep_sharp.all_within_stated is False else EXIT_OK


def cmd_selftest(sc: Scenario):
    from .selftest import run_trivial_suite

    results = run_trivial_suite()
    body = {"results": results, "passed": all(r["passed"] for r in results), "backend": kernels.BACKEND}
    write_json(sc.out / "selftest.json", _stamp(sc, body))
    return EXIT_OK if body["passed"] else EXIT_CHECK


COMMANDS = {
    "price": cmd_price,
    "strategy": cmd_strategy,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "pde-check": cmd_pde_check,
    "admissibility": cmd_admissibility,
    "selftest": cmd_selftest,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="crosshedge", description="Indifference pricing and cross hedging on an external risk process.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="scenario JSON (default: the canonical geometric scenario)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted-path override, value parsed as JSON")
    ap.add_argument("--per-path", action="store_true", help="simulate: also write the per-path wealth CSV")
    return ap


def run(command, config_path=None, overrides=(), seed=None, paths=None, out=None, per_path=False) -> int:
    try:
        cfg = load_config(config_path, overrides, seed, paths, out)
        sc = Scenario(cfg)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        for v in exc.violations:
            print(f"invalid {v.field}: {v.message} ({v.assumption})", file=sys.stderr)
        return EXIT_CONFIG
    sc.out.mkdir(parents=True, exist_ok=True)
    try:
        if command == "simulate":
            return cmd_simulate(sc, per_path)
        return COMMANDS[command](sc)
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    code = run(a.command, a.config, a.set, a.seed, a.paths, a.out, a.per_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
