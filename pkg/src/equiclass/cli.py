"""Command-line entry point: ``equiclass <command> [options]``.

Commands
    evaluate   equilibrium outcome of the config's ``rule``
    optimize   best threshold/two-cut rule, with a per-family comparison
    binned     solve the binned relaxation and certify its structure
    refine     binned optimum on nested partitions versus the continuum optimum
    simulate   agent-level Monte Carlo check of a rule (default: the optimum)
    reproduce  regenerate the published example tables (no config needed)
    sweep      outcomes over a grid of one parameter

Exit codes: 0 success, 2 reproduction mismatch, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .binned import build_bins, refinement_study, solve_binned
from .config import COMMANDS, FORMATS, RunConfig, parse_config
from .equilibrium import ScenarioSpec, evaluate
from .errors import EquiclassError
from .optimizer import THRESHOLD_FAMILIES, optimize
from .oracle import simulate
from .reproduce import PROFILES, density_overlay, reproduce
from .rules import NegativeThreshold, PositiveThreshold, Rule

EXIT_OK, EXIT_ERROR, EXIT_MISMATCH = 0, 1, 2

SWEEP_PARAMS = {
    "tau": "tau",
    "kappa": "kappa",
    "reward": "reward",
    "r": "reward",
    "quota": "quota",
    "q": "quota",
    "mean_noncomply": "mean_noncomply",
    "mean_0": "mean_noncomply",
    "mean_comply": "mean_comply",
    "mean_1": "mean_comply",
    "mean_cheat": "mean_cheat",
    "mean_chi": "mean_cheat",
    "cost_mean": "cost_mean",
}


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return str(float(o))
    return o


def write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, default=_json_default) + "\n")


def write_rows(path: Path, rows: list[dict[str, Any]]) -> None:
    fields: list[str] = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _flat(prefix: str, d: dict[str, Any]) -> dict[str, Any]:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(f"{key}.", v))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(_clean(list(v)), default=_json_default)
        else:
            out[key] = v
    return out


def _rule_columns(rule: Rule) -> dict[str, Any]:
    d = rule.to_dict()
    return {"variant": d["variant"], "tau": d.get("tau", ""), "tau_low": d.get("tau_low", ""),
            "tau_high": d.get("tau_high", "")}


class Context:
    def __init__(self, cfg: RunConfig | None, args: argparse.Namespace):
        self.cfg = cfg
        self.args = args
        out = args.out or (cfg.output if cfg else "out")
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.format = args.format or (cfg.format if cfg else "json")
        self.seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
        self.workers = args.workers if args.workers is not None else (cfg.workers if cfg else 1)

    def option(self, section: str, key: str, default=None):
        if self.cfg is None:
            return default
        return self.cfg.options.get(section, {}).get(key, default)

    def results(self, data: dict[str, Any], flat_rows: list[dict[str, Any]] | None = None) -> None:
        write_json(self.out / "results.json", data)
        if self.format == "csv":
            write_rows(self.out / "results.csv", flat_rows or [_flat("", data)])


def _require_rule(ctx: Context) -> Rule:
    if ctx.cfg.rule is None:
        raise EquiclassError("this command needs a 'rule' section in the config")
    return ctx.cfg.rule


def _base_record(ctx: Context) -> dict[str, Any]:
    sc = ctx.cfg.scenario
    return {"command": ctx.args.command, "scenario": sc.to_dict(), "sincere_compliance": float(sc.cost.cdf(0.0))}


def cmd_evaluate(ctx: Context) -> int:
    rule = _require_rule(ctx)
    outcome = evaluate(rule, ctx.cfg.scenario)
    data = {**_base_record(ctx), "rule": rule.to_dict(), "outcome": outcome.to_dict()}
    ctx.results(data, [{**_rule_columns(rule), **outcome.to_dict()}])
    print(f"{rule.variant}: accuracy {outcome.accuracy:.4f}, utility {outcome.utility:.6f}, "
          f"compliance {outcome.shares.comply:.4f}, cheating {outcome.shares.cheat:.4f}")
    return EXIT_OK


def cmd_optimize(ctx: Context) -> int:
    res = optimize(ctx.cfg.scenario, ctx.cfg.search)
    data = {**_base_record(ctx), **res.to_dict()}
    (ctx.out / "table.csv").write_text(res.family_table_csv())
    ctx.results(data, [{"family": f, **_rule_columns(fb.rule), "feasible": fb.feasible, **fb.outcome.to_dict()}
                       for f, fb in res.family_comparison.items()])
    print(f"best {res.best_family}: {res.best_rule.to_dict()} utility {res.outcome.utility:.6f} "
          f"accuracy {res.outcome.accuracy:.4f}")
    return EXIT_OK


def cmd_binned(ctx: Context) -> int:
    sc = ctx.cfg.scenario
    n_inner = int(ctx.option("binned", "n_inner", 32))
    interval = ctx.option("binned", "interval", None)
    interval = tuple(interval) if interval is not None else sc.signals.default_interval(4.0)
    problem = build_bins(sc, interval, n_inner)
    sol = solve_binned(problem, starts=int(ctx.option("binned", "starts", 6)))
    data = {**_base_record(ctx), "n_bins": problem.n_bins, "interval": list(interval), **sol.to_dict()}
    lo, hi = sol.rule.cell_bounds()
    rows = [{"bin": j, "lo": float(lo[j]), "hi": float(hi[j]), "p": float(p), "W": float(w)}
            for j, (p, w) in enumerate(zip(sol.probs, sol.structure.w))]
    write_rows(ctx.out / "bins.csv", rows)
    ctx.results(data)
    print(f"{problem.n_bins} bins: utility {sol.utility:.6f} ({sol.family}); {sol.structure.summary()}")
    return EXIT_OK


def cmd_refine(ctx: Context) -> int:
    levels = int(ctx.option("refine", "levels", 8))
    rep = refinement_study(ctx.cfg.scenario, levels=levels, search=ctx.cfg.search)
    (ctx.out / "refinement.csv").write_text(rep.to_csv())
    ctx.results({**_base_record(ctx), **rep.to_dict()}, [lv.__dict__ for lv in rep.levels])
    print(f"V_k: {np.round(rep.utilities, 6).tolist()}; continuum {rep.continuum_utility}; "
          f"nondecreasing {rep.nondecreasing()}; final gap {rep.final_gap}")
    return EXIT_OK


def cmd_simulate(ctx: Context) -> int:
    sc = ctx.cfg.scenario
    rule = ctx.cfg.rule or optimize(sc, ctx.cfg.search).best_rule
    n = int(ctx.option("simulate", "n_agents", 1_000_000))
    dump = ctx.out / "agents.csv" if ctx.option("simulate", "dump", False) else None
    t0 = time.perf_counter()
    rep = simulate(rule, sc, n, ctx.seed, workers=ctx.workers, dump_path=None if dump is None else str(dump))
    elapsed = time.perf_counter() - t0
    analytic = evaluate(rule, sc)
    z = rep.z_scores(analytic)
    data = {**_base_record(ctx), "rule": rule.to_dict(), "analytic": analytic.to_dict(), "simulation": rep.to_dict(),
            "z_scores": z, "max_abs_z": max(abs(v) for v in z.values()), "seconds": elapsed}
    ctx.results(data, [{"cell": c, "empirical": rep.fraction(c), "se": rep.standard_error(c), "z": z[c]} for c in z])
    print(f"{n} agents, seed {ctx.seed}: max |z| = {data['max_abs_z']:.3f} ({elapsed:.2f} s)")
    return EXIT_OK


def cmd_reproduce(ctx: Context) -> int:
    profile = ctx.args.tolerance_profile
    rep = reproduce(profile)
    for t in sorted({c.table for c in rep.cells}):
        (ctx.out / f"table{t}.csv").write_text(rep.table_csv(t))
    for ex, res in rep.examples.items():
        (ctx.out / f"densities_example{ex}.csv").write_text(density_overlay(res))
    summary = rep.summary()
    (ctx.out / "summary.txt").write_text(summary)
    write_json(ctx.out / "results.json", rep.to_dict())
    print(summary, end="")
    return EXIT_OK if rep.ok else EXIT_MISMATCH


def _scenario_with(sc: ScenarioSpec, param: str, v: float) -> ScenarioSpec:
    sig = sc.signals
    if param == "kappa":
        return sc.replace(kappa=v)
    if param == "reward":
        return sc.replace(reward=v)
    if param == "quota":
        return sc.replace(quota=v)
    if param == "cost_mean":
        return sc.replace(cost=_shift(sc.cost, v))
    key = param.removeprefix("mean_")
    dist = getattr(sig, key)
    if dist is None:
        raise EquiclassError(f"scenario has no '{key}' signal distribution to sweep")
    return sc.replace(signals=type(sig)(**{**{k: getattr(sig, k) for k in ("noncomply", "comply", "cheat")},
                                            key: _shift(dist, v)}))


def _shift(dist, v):
    field = "mean" if hasattr(dist, "mean") else "loc"
    return dataclasses.replace(dist, **{field: v})


def sweep_rows(cfg: RunConfig, param: str, lo: float, hi: float, n: int,
               families: Sequence[str] | None = None) -> list[dict[str, Any]]:
    """One record per grid value. ``tau`` sweeps threshold rules, ``quota``
    re-optimizes each row, everything else re-evaluates the config's rule."""
    if param not in SWEEP_PARAMS:
        raise EquiclassError(f"invalid sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    param = SWEEP_PARAMS[param]
    if n < 1:
        raise EquiclassError("sweep needs n >= 1")
    sc = cfg.scenario
    grid = np.linspace(lo, hi, n)
    rows = []
    if param == "tau":
        fams = list(families or THRESHOLD_FAMILIES)
        ctor = {"positive_threshold": PositiveThreshold, "negative_threshold": NegativeThreshold}
        for f in fams:
            if f not in ctor:
                raise EquiclassError(f"tau sweeps take threshold families, got {f!r}")
        for f in fams:
            for v in grid:
                rule = ctor[f](float(v))
                rows.append({"param": "tau", "value": float(v), **_rule_columns(rule), **evaluate(rule, sc).to_dict()})
        return rows
    if param == "kappa" and not sc.cheating:
        raise EquiclassError("kappa sweeps need a scenario with a cheat distribution")
    for v in grid:
        scv = _scenario_with(sc, param, float(v))
        if param == "quota":
            res = optimize(scv, cfg.search)
            rows.append({"param": param, "value": float(v), **_rule_columns(res.best_rule), "feasible": res.feasible,
                         **res.outcome.to_dict()})
        else:
            if cfg.rule is None:
                raise EquiclassError(f"sweeping {param} needs a 'rule' section in the config")
            rows.append({"param": param, "value": float(v), **_rule_columns(cfg.rule),
                         **evaluate(cfg.rule, scv).to_dict()})
    return rows


def cmd_sweep(ctx: Context) -> int:
    a = ctx.args
    param = a.param or ctx.option("sweep", "param")
    rng = a.range or ctx.option("sweep", "range")
    fams = a.family or ctx.option("sweep", "families")
    if param is None or rng is None:
        raise EquiclassError("sweep needs --param and --range LO HI N (or a 'sweep' config section)")
    lo, hi, n = float(rng[0]), float(rng[1]), int(float(rng[2]))
    rows = sweep_rows(ctx.cfg, param, lo, hi, n, fams)
    write_rows(ctx.out / "sweep.csv", rows)
    write_json(ctx.out / "results.json", {**_base_record(ctx), "param": param, "range": [lo, hi, n], "rows": rows})
    print(f"{len(rows)} rows written to {ctx.out / 'sweep.csv'}")
    return EXIT_OK


HANDLERS = {
    "evaluate": cmd_evaluate,
    "optimize": cmd_optimize,
    "binned": cmd_binned,
    "refine": cmd_refine,
    "simulate": cmd_simulate,
    "reproduce": cmd_reproduce,
    "sweep": cmd_sweep,
}


_HELP = dict(line.split(None, 1) for line in __doc__.split("Commands\n")[1].split("\n\n")[0].strip().splitlines())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file, or a bundled example name (example1, example2, example3)")
    common.add_argument("--out", help="output directory (default: the config's 'output')")
    common.add_argument("--format", choices=FORMATS, help="also write results.csv when 'csv'")
    common.add_argument("--seed", type=int, help="random seed (simulate)")
    common.add_argument("--workers", type=int, help="worker processes (simulate)")
    common.add_argument("--tolerance-profile", choices=PROFILES, default="paper",
                        help="reproduce: compare rounded ('paper') or unrounded ('strict') values")
    p = argparse.ArgumentParser(prog="equiclass", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=_HELP[name])
        if name == "sweep":
            sp.add_argument("--param", help=f"one of {sorted(SWEEP_PARAMS)}")
            sp.add_argument("--range", nargs=3, metavar=("LO", "HI", "N"))
            sp.add_argument("--family", action="append", choices=THRESHOLD_FAMILIES,
                            help="threshold family for tau sweeps (repeatable; default both)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if args.config is not None:
            cfg = parse_config(args.config)
        elif args.command != "reproduce":
            raise EquiclassError(f"'{args.command}' needs --config")
        if args.workers is not None and args.workers < 1:
            raise EquiclassError("--workers must be >= 1")
        return HANDLERS[args.command](Context(cfg, args))
    except (EquiclassError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
