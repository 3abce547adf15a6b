"""Command-line front end: validate / solve / simulate / diagnose.

Config files are flat sections of ``key = value`` lines with ``#``
comments.  Per-state keys carry a 1-based suffix (theta.1, theta.2),
intensity entries a double suffix (q.1.2).  Example:

    [model]
    variant = smmh_rho
    T = 5.0
    delta = 0.3
    rho = -0.8
    kappa = 4.0
    chi = 0.35
    d = 1.7
    r.1 = 0.03
    r.2 = 0.01
    ...

    [chain]
    q.1.1 = -1.0909
    q.1.2 = 1.0909
    ...

Exit codes: 0 success, 1 domain or validation failure, 2 usage or parse
failure.  Every CSV starts with a comment line carrying the sha256 of
the config file and the seed in effect, and all numbers are printed
with 17 significant digits so runs can be diffed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, RsHestonError
from .markov_chain import MarkovChainSpec, validate_intensity
from .models import (
    HestonRegimeParams,
    Variant,
    validate_feller,
    validate_solution_assumptions,
)
from .regime_expectation import upsilon_heston, xi_mc_table, xi_ode
from .riccati import B_separable, D_leverage, b_separable_fn, d_leverage_fn
from .simulate import (
    SimConfig,
    constant_strategy,
    expected_utility_mc,
    martingale_diagnostic,
    optimal_weight_fn,
    simulate_paths,
    terminal_wealth_histogram,
)
from .value_strategy import ValueQuery, optimal_strategy, value_mmh_general, value_smmh, value_smmh_rho

__all__ = ["RunConfig", "load_config", "shipped_config", "main", "entry"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def parse_flat_config(text: str) -> dict[str, dict[str, str]]:
    """Parse the flat section/key=value grammar, raising line-anchored errors."""
    sections: dict[str, dict[str, str]] = {}
    current: dict[str, str] | None = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(f"malformed section header {raw.strip()!r}", ln)
            name = line[1:-1].strip()
            if name in sections:
                raise ParseError(f"duplicate section [{name}]", ln)
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {raw.strip()!r}", ln)
        if current is None:
            raise ParseError("key outside any [section]", ln)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ParseError(f"empty key or value in {raw.strip()!r}", ln)
        if key in current:
            raise ParseError(f"duplicate key {key!r}", ln)
        current[key] = value
    return sections


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Fully deserialized run configuration."""

    params: HestonRegimeParams
    chain: MarkovChainSpec
    v0: float
    x0: float
    state0: int
    grid_step: float
    n_paths_xi: int
    seed: int
    n_paths: int
    steps_per_year: int
    sha256: str

    def sim_config(self, n_paths=None, steps_per_year=None, seed=None) -> SimConfig:
        return SimConfig(
            n_paths=n_paths or self.n_paths,
            steps_per_year=steps_per_year or self.steps_per_year,
            seed=self.seed if seed is None else seed,
            v0=self.v0,
            x0=self.x0,
            state0=self.state0,
        )


def _floats_by_state(sec: dict[str, str], key: str, l: int, required=True) -> np.ndarray | None:
    if key in sec:
        return np.full(l, float(sec[key]))
    vals = np.empty(l)
    found = 0
    for e in range(1, l + 1):
        k = f"{key}.{e}"
        if k in sec:
            vals[e - 1] = float(sec[k])
            found += 1
    if found == l:
        return vals
    if found == 0 and not required:
        return None
    raise ConfigError(f"[model] needs {key} as a scalar or all of {key}.1..{key}.{l}")


def load_config(path) -> RunConfig:
    """Read, parse and fully validate a config file into typed objects."""
    raw = Path(path).read_bytes()
    sections = parse_flat_config(raw.decode("utf-8"))
    for name in ("model", "chain", "initial"):
        if name not in sections:
            raise ConfigError(f"missing [{name}] section")
    chain_sec = sections["chain"]
    l = 0
    for key in chain_sec:
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "q":
            raise ConfigError(f"[chain] keys look like q.i.j, got {key!r}")
        l = max(l, int(parts[1]), int(parts[2]))
    if l == 0:
        raise ConfigError("[chain] section defines no intensity entries")
    q = np.zeros((l, l))
    for key, value in chain_sec.items():
        _, i, j = key.split(".")
        q[int(i) - 1, int(j) - 1] = float(value)
    chain = validate_intensity(q)

    model = sections["model"]
    try:
        variant = Variant(model.get("variant", ""))
    except ValueError:
        raise ConfigError("[model] variant must be one of mmh, smmh, smmh_rho") from None
    kwargs = dict(
        variant=variant,
        horizon=float(model["T"]),
        delta=float(model["delta"]),
        rho=float(model.get("rho", "0")),
        r=_floats_by_state(model, "r", l),
        nu=_floats_by_state(model, "nu", l),
        kappa=_floats_by_state(model, "kappa", l),
        theta=_floats_by_state(model, "theta", l),
        chi=_floats_by_state(model, "chi", l),
    )
    if variant is Variant.MMH:
        kwargs["lam_hat"] = _floats_by_state(model, "lambda_hat", l)
    else:
        if "d" not in model:
            raise ConfigError("[model] separable variants need the scalar slope d")
        kwargs["d"] = float(model["d"])
    params = HestonRegimeParams(**kwargs)

    initial = sections["initial"]
    solver = sections.get("solver", {})
    sim = sections.get("sim", {})
    return RunConfig(
        params=params,
        chain=chain,
        v0=float(initial["v0"]),
        x0=float(initial["x0"]),
        state0=int(initial["state0"]),
        grid_step=float(solver.get("grid_step", params.horizon / 5000.0)),
        n_paths_xi=int(solver.get("n_paths_xi", 10000)),
        seed=int(solver.get("seed", 12345)),
        n_paths=int(sim.get("n_paths", 100000)),
        steps_per_year=int(sim.get("steps_per_year", 250)),
        sha256=hashlib.sha256(raw).hexdigest(),
    )


def shipped_config(name: str) -> Path:
    """Path of a packaged example config (set1 or set2)."""
    return Path(resources.files("rsheston") / "configs" / f"{name}.cfg")


def _coeff_fn(cfg: RunConfig):
    p = cfg.params
    if p.variant is Variant.SMMH_RHO:
        return d_leverage_fn(p)
    if p.variant is Variant.SMMH:
        return b_separable_fn(p)
    return None


def _csv_writer(fh, cfg: RunConfig, columns):
    fh.write(f"# config_sha256={cfg.sha256} seed={cfg.seed}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    return writer


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    feller = validate_feller(cfg.params)
    solvable = validate_solution_assumptions(cfg.params)
    for check in feller.checks + solvable.checks:
        print(check.describe())
    ok = feller.ok and solvable.ok
    print(f"overall: {'pass' if ok else 'FAIL'} (vartheta = {_fmt(solvable.vartheta)})")
    return 0 if ok else 1


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    p = cfg.params
    validate_feller(cfg.params).raise_if_failed()
    validate_solution_assumptions(p).raise_if_failed()
    times = np.linspace(0.0, p.horizon, args.t_grid)
    coeff = _coeff_fn(cfg)
    xi = None
    if coeff is not None:
        integrand = upsilon_heston(p, coeff)
        if args.xi_method == "mc":
            xi = xi_mc_table(cfg.chain, integrand, times, cfg.n_paths_xi, cfg.seed)
        else:
            xi = xi_ode(cfg.chain, integrand, cfg.grid_step)
    util = cfg.v0**p.delta / p.delta
    with open(args.out, "w", encoding="utf-8") as fh:
        writer = _csv_writer(fh, cfg, ["t", "state", "phi", "xi", "D_or_B", "pi_mv", "pi_h", "pi_total"])
        for t in times:
            t = float(t)
            for state in range(1, p.n_states + 1):
                q = ValueQuery(t=t, v=cfg.v0, x=cfg.x0, state=state)
                if p.variant is Variant.SMMH_RHO:
                    phi = value_smmh_rho(p, q, xi)
                    coeff_val = D_leverage(p, t)
                    xi_val = xi.at(t, state)
                elif p.variant is Variant.SMMH:
                    phi = value_smmh(p, q, xi)
                    coeff_val = B_separable(p, t)
                    xi_val = xi.at(t, state)
                else:
                    phi, _ = value_mmh_general(p, cfg.chain, q, cfg.n_paths_xi, cfg.seed)
                    coeff_val = float("nan")
                    xi_val = phi / util
                sp = optimal_strategy(p, t, state)
                writer.writerow(
                    [_fmt(t), state, _fmt(phi), _fmt(xi_val), _fmt(coeff_val), _fmt(sp.pi_mv), _fmt(sp.pi_h), _fmt(sp.pi_total)]
                )
    print(f"wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    p = cfg.params
    validate_feller(cfg.params).raise_if_failed()
    validate_solution_assumptions(p).raise_if_failed()
    sim_cfg = cfg.sim_config(n_paths=args.paths, steps_per_year=args.steps_per_year, seed=args.seed)
    started = time.perf_counter()
    bundle = simulate_paths(p, cfg.chain, optimal_weight_fn(p), sim_cfg, record="terminal")
    mean, err = expected_utility_mc(bundle, p.delta)
    runtime = time.perf_counter() - started
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        writer = _csv_writer(fh, cfg, ["n_paths", "steps_per_year", "mean", "std_err", "runtime_s"])
        writer.writerow(
            [sim_cfg.n_paths, sim_cfg.steps_per_year, _fmt(mean), _fmt(err), _fmt(runtime)]
        )
    edges = np.linspace(0.0, args.overflow_at, args.bins + 1)
    hist = terminal_wealth_histogram(bundle, edges)
    hist_path = out.with_name(out.stem + "_hist" + out.suffix)
    with open(hist_path, "w", encoding="utf-8") as fh:
        writer = _csv_writer(fh, cfg, ["bin_lo", "bin_hi", "count"])
        for i in range(len(hist.counts)):
            writer.writerow([_fmt(hist.bin_edges[i]), _fmt(hist.bin_edges[i + 1]), hist.counts[i]])
        writer.writerow([_fmt(hist.bin_edges[-1]), "inf", hist.overflow])
        fh.write(f"# q05={_fmt(hist.q05)} q95={_fmt(hist.q95)}\n")
    print(f"mean={_fmt(mean)} std_err={_fmt(err)} runtime_s={_fmt(runtime)}")
    print(f"wrote {out} and {hist_path}")
    return 0


def _parse_strategy(spec_str: str, p: HestonRegimeParams):
    if spec_str == "optimal":
        return optimal_weight_fn(p)
    if spec_str.startswith("const:"):
        return constant_strategy(float(spec_str.split(":", 1)[1]))
    raise ConfigError(f"unknown strategy {spec_str!r} (use optimal or const:<w>)")


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    p = cfg.params
    validate_feller(cfg.params).raise_if_failed()
    validate_solution_assumptions(p).raise_if_failed()
    checkpoints = [float(tok) for tok in args.checkpoints.split(",") if tok.strip()]
    sim_cfg = cfg.sim_config(n_paths=args.paths, seed=args.seed)
    rows = martingale_diagnostic(
        p, cfg.chain, sim_cfg, checkpoints, strategy=_parse_strategy(args.strategy, p)
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        writer = _csv_writer(fh, cfg, ["t", "mean_phi", "std_err", "z_score"])
        for t, mean, err, z in rows:
            writer.writerow([_fmt(t), _fmt(mean), _fmt(err), _fmt(z)])
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsheston",
        description="Regime-switching Heston optimal investment: validate, solve, simulate, diagnose.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="check Feller and solvability conditions")
    sp.add_argument("config")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("solve", help="value function and strategy table as CSV")
    sp.add_argument("config")
    sp.add_argument("--t-grid", type=int, default=51)
    sp.add_argument("--out", default="solve.csv")
    sp.add_argument("--xi-method", choices=("ode", "mc"), default="ode")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("simulate", help="full Monte Carlo expected utility and histogram")
    sp.add_argument("config")
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--steps-per-year", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="simulate.csv")
    sp.add_argument("--bins", type=int, default=30)
    sp.add_argument("--overflow-at", type=float, default=150.0)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("diagnose", help="value-process flatness along simulated paths")
    sp.add_argument("config")
    sp.add_argument("--checkpoints", default="0,1,2,3,4,5")
    sp.add_argument("--strategy", default="optimal")
    sp.add_argument("--paths", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="diagnose.csv")
    sp.set_defaults(fn=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, OSError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except (RsHestonError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())
