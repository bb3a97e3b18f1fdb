"""Run configuration files.

Configs are YAML documents (``.cfg``/``.yaml``); JSON is accepted too. A
minimal file::

    scenario:
      reward: 4
      cost: {kind: gaussian, mean: 0.5, scale: 0.5}
      signals:
        noncomply: {kind: gaussian, mean: 0, scale: 1}
        comply: {kind: gaussian, mean: 1, scale: 1}
      objective: accuracy
    command: optimize

Schema (all keys other than ``scenario`` optional):

``scenario``
    ``reward`` (> 0), ``cost`` and ``signals.{noncomply, comply, cheat}``
    distributions, ``kappa`` in [0, 1] (required iff ``cheat`` is given),
    ``quota`` in (0, 1] (default 1), ``objective``: a preset name
    (``accuracy``, ``compliance``, ``predatory``), ``{preset: p_precision,
    p: ...}``, or explicit ``{A1, A0, B0, B1}``.
    Distributions: ``{kind: gaussian, mean, scale, scale_is: std|variance}``
    or ``{kind: logistic, loc, scale}``.
``command``, ``output``, ``format`` (json|csv), ``seed``, ``workers``
``search``
    :class:`~equiclass.optimizer.SearchConfig` overrides.
``rule``
    Rule for ``evaluate``/``simulate``/``sweep``, in ``Rule.to_dict`` form.
``simulate``, ``binned``, ``refine``, ``sweep``
    Command options (see the CLI help).

Errors name the offending field and its line.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .distributions import SignalModel, distribution_from_dict, mlrp_violations
from .equilibrium import DesignerPayoff, ScenarioSpec, objective_preset
from .errors import ConfigError, EquiclassError, ModelRejectedError
from .optimizer import SearchConfig
from .rules import Rule, rule_from_dict

COMMANDS = ("evaluate", "optimize", "binned", "refine", "simulate", "reproduce", "sweep")
FORMATS = ("json", "csv")
_TOP_KEYS = {"scenario", "command", "output", "format", "seed", "workers", "search", "rule", "simulate", "binned",
             "refine", "sweep"}
_SCENARIO_KEYS = {"reward", "cost", "signals", "kappa", "quota", "objective"}
_SIGNAL_KEYS = {"noncomply", "comply", "cheat"}
_DIST_KEYS = {"kind", "mean", "scale", "std", "scale_is", "loc"}
BUNDLED = Path(__file__).parent / "data"


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec
    command: str = "optimize"
    output: str = "out"
    format: str = "json"
    search: SearchConfig = field(default_factory=SearchConfig)
    rule: Rule | None = None
    seed: int = 0
    workers: int = 1
    options: dict[str, dict[str, Any]] = field(default_factory=dict)
    objective: Any = "accuracy"

    def to_dict(self) -> dict[str, Any]:
        sc = self.scenario
        scen: dict[str, Any] = {
            "reward": sc.reward,
            "cost": sc.cost.to_dict(),
            "signals": sc.signals.to_dict(),
            "quota": sc.quota,
            "objective": self.objective,
        }
        if sc.kappa is not None:
            scen["kappa"] = sc.kappa
        out: dict[str, Any] = {
            "scenario": scen,
            "command": self.command,
            "output": self.output,
            "format": self.format,
            "seed": self.seed,
            "workers": self.workers,
        }
        overrides = {k: v for k, v in self.search.to_dict().items() if v != getattr(SearchConfig(), k)}
        if overrides:
            out["search"] = overrides
        if self.rule is not None:
            out["rule"] = self.rule.to_dict()
        out.update({k: dict(v) for k, v in self.options.items()})
        return out


class _Lines:
    """Dotted key path -> 1-based line number, from the YAML node tree."""

    def __init__(self, text: str):
        self.map: dict[str, int] = {}
        try:
            root = yaml.compose(text)
        except yaml.YAMLError:
            root = None
        if root is not None:
            self._walk(root, "")

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                self.map[p] = k.start_mark.line + 1
                self._walk(v, p)

    def __call__(self, path: str) -> int | None:
        while path:
            if path in self.map:
                return self.map[path]
            path = path.rpartition(".")[0]
        return None


def resolve_config_path(path: str | Path) -> Path:
    """Existing file, or the name of a bundled example (``example1`` / ``example1.cfg``)."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED / p.name, BUNDLED / f"{p.name}.cfg"):
        if cand.exists():
            return cand
    raise ConfigError(f"config file not found: {path}")


def parse_config(path: str | Path) -> RunConfig:
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config_text(text, json_input=p.suffix.lower() == ".json")


def parse_config_text(text: str, json_input: bool = False) -> RunConfig:
    lines = _Lines(text)
    try:
        data = json.loads(text) if json_input else yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
    return build_config(data, lines)


def _err(msg: str, path: str, lines) -> ConfigError:
    return ConfigError(msg, field=path, line=lines(path) if lines else None)


def _mapping(obj, path, lines, allowed=None) -> dict:
    if not isinstance(obj, dict):
        raise _err(f"expected a mapping, got {type(obj).__name__}", path, lines)
    if allowed is not None:
        extra = sorted(set(obj) - allowed)
        if extra:
            raise _err(f"unknown key(s) {extra}; allowed: {sorted(allowed)}", f"{path}.{extra[0]}" if path else extra[0],
                       lines)
    return obj


def _number(obj, path, lines) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise _err(f"expected a number, got {obj!r}", path, lines)
    return float(obj)


def _distribution(obj, path, lines):
    _mapping(obj, path, lines, _DIST_KEYS)
    for k in ("mean", "scale", "std", "loc"):
        if k in obj:
            _number(obj[k], f"{path}.{k}", lines)
    try:
        return distribution_from_dict(obj)
    except EquiclassError as exc:
        raise _err(str(exc), path, lines) from exc


def _objective(obj, path, lines) -> DesignerPayoff:
    try:
        if isinstance(obj, str):
            return objective_preset(obj)
        _mapping(obj, path, lines, {"preset", "p", "A1", "A0", "B0", "B1"})
        if "preset" in obj:
            p = obj.get("p")
            return objective_preset(obj["preset"], None if p is None else _number(p, f"{path}.p", lines))
        missing = [k for k in ("A1", "A0", "B0", "B1") if k not in obj]
        if missing:
            raise _err(f"missing payoff entries {missing}", path, lines)
        return DesignerPayoff(*(_number(obj[k], f"{path}.{k}", lines) for k in ("A1", "A0", "B0", "B1")))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise _err(str(exc), path, lines) from exc


def build_scenario(data: dict, lines=None) -> tuple[ScenarioSpec, Any]:
    sc = _mapping(data, "scenario", lines, _SCENARIO_KEYS)
    for k in ("reward", "cost", "signals"):
        if k not in sc:
            raise _err(f"missing required key '{k}'", "scenario", lines)
    reward = _number(sc["reward"], "scenario.reward", lines)
    if not reward > 0:
        raise _err(f"reward must be > 0, got {reward}", "scenario.reward", lines)
    quota = _number(sc.get("quota", 1.0), "scenario.quota", lines)
    if not 0.0 < quota <= 1.0:
        raise _err(f"quota must lie in (0, 1], got {quota}", "scenario.quota", lines)
    cost = _distribution(sc["cost"], "scenario.cost", lines)
    sig = _mapping(sc["signals"], "scenario.signals", lines, _SIGNAL_KEYS)
    for k in ("noncomply", "comply"):
        if k not in sig:
            raise _err(f"missing required key '{k}'", "scenario.signals", lines)
    dists = {k: _distribution(v, f"scenario.signals.{k}", lines) for k, v in sig.items()}
    signals = SignalModel(dists["noncomply"], dists["comply"], dists.get("cheat"))
    kappa = None
    if "kappa" in sc:
        kappa = _number(sc["kappa"], "scenario.kappa", lines)
        if not 0.0 <= kappa <= 1.0:
            raise _err(f"kappa must lie in [0, 1], got {kappa}", "scenario.kappa", lines)
        if signals.cheat is None:
            raise _err("kappa given but signals.cheat is missing", "scenario.kappa", lines)
    elif signals.cheat is not None:
        raise _err("signals.cheat given but kappa is missing", "scenario.signals.cheat", lines)
    objective = sc.get("objective", "accuracy")
    payoff = _objective(objective, "scenario.objective", lines)
    bad = mlrp_violations(signals)
    if bad:
        line = lines("scenario.signals") if lines else None
        where = f"line {line}, " if line else ""
        raise ModelRejectedError(f"{where}field 'scenario.signals': monotone likelihood ratio fails for "
                                 f"{', '.join(bad)}")
    return ScenarioSpec(cost, signals, reward, payoff, quota, kappa), objective


def build_config(data: Any, lines=None) -> RunConfig:
    data = _mapping(data, "", lines, _TOP_KEYS)
    if "scenario" not in data:
        raise ConfigError("missing required key 'scenario'", field="scenario")
    scenario, objective = build_scenario(data["scenario"], lines)
    command = data.get("command", "optimize")
    if command not in COMMANDS:
        raise _err(f"command must be one of {COMMANDS}, got {command!r}", "command", lines)
    fmt = data.get("format", "json")
    if fmt not in FORMATS:
        raise _err(f"format must be one of {FORMATS}, got {fmt!r}", "format", lines)
    search_raw = _mapping(data.get("search", {}), "search", lines, set(SearchConfig.__dataclass_fields__))
    try:
        search = SearchConfig(**search_raw)
    except (TypeError, ValueError) as exc:
        raise _err(str(exc), "search", lines) from exc
    rule = None
    if "rule" in data:
        try:
            rule = rule_from_dict(_mapping(data["rule"], "rule", lines))
        except (KeyError, ValueError, TypeError) as exc:
            raise _err(f"invalid rule: {exc}", "rule", lines) from exc
    seed = data.get("seed", 0)
    workers = data.get("workers", 1)
    for name, v in (("seed", seed), ("workers", workers)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise _err(f"{name} must be an integer", name, lines)
    if workers < 1:
        raise _err("workers must be >= 1", "workers", lines)
    options = {k: dict(_mapping(data[k], k, lines)) for k in ("simulate", "binned", "refine", "sweep") if k in data}
    return RunConfig(scenario, command, str(data.get("output", "out")), fmt, search, rule, seed, workers, options,
                     objective)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return dataclasses.replace(cfg, **{k: v for k, v in changes.items() if v is not None})
