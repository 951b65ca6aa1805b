"""Seeded Monte Carlo harness comparing segmented PASS against baselines.

Frameworks:

* ``JCC-SS``, ``JCC-SA``, ``JCC-SM``: segmented waveguide, PAs placed per
  segment, solved under the named protocol.
* ``ConvPASS``: one continuous waveguide (M = 1) with its PA placed the
  same way.
* ``MIMO``: M fixed antennas at the segment feed points, free-space
  channels only, solved with M-branch receivers.

Trial t draws its UE positions from its own RNG substream (spawned from
the experiment seed), in unit coordinates scaled to the area, so every
framework and every sweep value sees the same UE layout in trial t, and
trial t does not depend on how many trials are run.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .geometry import Scenario, composite_channel, dbm_to_watts, fixed_array_channel, place_pas
from .mse_solver import SolverConfig, ao_mmse
from .protocols import ProtocolKind, effective_channel
from .wsr_solver import ao_wmmse

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FRAMEWORKS = ("MIMO", "ConvPASS", "JCC-SS", "JCC-SA", "JCC-SM")
OBJECTIVES = ("MSE", "WSR")
LOSS_CASES = {"casei": "CaseI", "casei_lossless": "CaseI", "lossless": "CaseI",
              "caseii": "CaseII", "caseii_lossy": "CaseII", "lossy": "CaseII"}
METRICS = ("mse_per_ue", "sinr_db", "wsr", "iterations")
CSV_COLUMNS = ("framework", "sweep_name", "sweep_value", "metric_name", "mean", "stderr",
               "trials", "seed")

SWEEP_ALIASES = {"length": "area_x", "segments": "num_segments", "ues": "num_ues",
                 "power_dbm": "p_max_dbm", "rate_min": "rate_min_bps_hz"}

_SCENARIO_FIELDS = {f.name for f in fields(Scenario)}
_DBM_FIELDS = {"p_max_dbm": "p_max_watts", "noise_dbm": "noise_watts"}


def normalize_loss_case(name):
    key = str(name).strip().replace("-", "_").lower()
    if key not in LOSS_CASES:
        raise ConfigError(f"unknown loss case {name!r}; expected CaseI or CaseII", "loss_case")
    return LOSS_CASES[key]


def normalize_framework(name):
    for fw in FRAMEWORKS:
        if str(name).strip().lower() == fw.lower():
            return fw
    raise ConfigError(f"unknown framework {name!r}; expected one of {', '.join(FRAMEWORKS)}",
                      "frameworks")


def scenario_from_mapping(values: dict, base: Optional[Scenario] = None) -> Scenario:
    """Scenario from config keys; ``p_max_dbm`` and ``noise_dbm`` are converted to watts."""
    kwargs = {}
    for key, value in values.items():
        if key in _DBM_FIELDS:
            target = _DBM_FIELDS[key]
            if target in values:
                raise ConfigError(f"give either {key} or {target}, not both", key)
            watts = dbm_to_watts(value)
            kwargs[target] = tuple(watts.tolist()) if watts.ndim else float(watts)
        elif key in _SCENARIO_FIELDS:
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        else:
            raise ConfigError("unknown scenario key", key)
    base = Scenario() if base is None else base
    try:
        return replace(base, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "scenario") from exc


@dataclass(frozen=True)
class ExperimentSpec:
    """What to simulate.

    ``sweep_name=None`` runs a single point (recorded as sweep "none" with
    value 0). Otherwise ``sweep_values`` are applied to the named Scenario
    field (aliases: length, segments, ues, power_dbm, rate_min); an empty
    value list runs nothing.
    """

    scenario: Scenario = field(default_factory=Scenario)
    frameworks: tuple = FRAMEWORKS
    objective: str = "MSE"
    sweep_name: Optional[str] = None
    sweep_values: tuple = ()
    trials: int = 100
    seed: int = 2024
    loss_case: str = "CaseII"
    max_iters: int = 100
    tol_rel: float = 1e-6
    n_init: int = 0
    placement_resolution: Optional[float] = None

    def __post_init__(self):
        fws = tuple(normalize_framework(f) for f in self.frameworks)
        if not fws:
            raise ConfigError("at least one framework is required", "frameworks")
        object.__setattr__(self, "frameworks", fws)
        obj = str(self.objective).upper()
        if obj not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}; expected MSE or WSR", "objective")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "loss_case", normalize_loss_case(self.loss_case))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("must be an integer >= 1", "trials")
        object.__setattr__(self, "trials", int(self.trials))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("must be an integer in [0, 2**64)", "seed")
        object.__setattr__(self, "seed", int(self.seed))
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError("must be an integer >= 1", "max_iters")
        if not self.tol_rel > 0:
            raise ConfigError("must be > 0", "tol_rel")
        if self.n_init < 0:
            raise ConfigError("must be >= 0", "n_init")
        if self.sweep_name is not None:
            name = SWEEP_ALIASES.get(self.sweep_name, self.sweep_name)
            if name not in _SCENARIO_FIELDS and name not in _DBM_FIELDS:
                raise ConfigError(f"cannot sweep unknown field {self.sweep_name!r}", "sweep.name")
            object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
            for value in self.sweep_values:
                self.scenario_at(value)

    @property
    def points(self):
        if self.sweep_name is None:
            return [("none", 0)]
        return [(self.sweep_name, v) for v in self.sweep_values]

    def scenario_at(self, value) -> Scenario:
        """Scenario for one sweep value with the loss case applied."""
        sc = self.scenario
        if self.sweep_name is not None:
            name = SWEEP_ALIASES.get(self.sweep_name, self.sweep_name)
            try:
                sc = scenario_from_mapping({name: value}, sc)
            except ConfigError as exc:
                raise ConfigError(f"invalid sweep value {value!r}: {exc}", "sweep.values") from exc
        if self.loss_case == "CaseI":
            sc = replace(sc, kappa0_db_per_m=0.0)
        return sc

    def replace(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)


@dataclass
class ExperimentResult:
    """Per-trial metrics for every (framework, sweep value).

    ``samples[(framework, sweep_value)][metric]`` is an array over trials.
    """

    spec: ExperimentSpec
    samples: dict

    def summary(self, framework, sweep_value=0):
        return {m: _aggregate(m, x) for m, x in self.samples[(framework, sweep_value)].items()}

    def rows(self):
        name = self.spec.sweep_name or "none"
        for fw in self.spec.frameworks:
            for _, value in self.spec.points:
                stats = self.summary(fw, value)
                for metric in METRICS:
                    mean, se = stats[metric]
                    yield (fw, name, value, metric, mean, se, self.spec.trials, self.spec.seed)


def _aggregate(metric, x):
    x = np.asarray(x, dtype=float)
    n = x.size
    if metric == "sinr_db":
        # 10 log10 of the mean linear SINR; stderr by the delta method
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        if mean <= 0:
            return float("-inf"), 0.0
        return 10.0 * math.log10(mean), 10.0 * se / (mean * math.log(10.0))
    mean = float(np.mean(x))
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for one trial, stable under changes to the trial count."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def trial_unit_positions(seed: int, trial: int, num_ues: int) -> np.ndarray:
    return trial_rng(seed, trial).random((num_ues, 2))


def _positions(unit, sc: Scenario):
    return np.column_stack([unit[:, 0] * sc.area_x, unit[:, 1] * 2.0 * sc.area_half_y,
                            np.zeros(len(unit))])


def framework_channel(framework: str, ues, sc: Scenario, resolution=None):
    """Effective channel a framework sees for the given UE positions."""
    if framework == "MIMO":
        ch = fixed_array_channel(ues, sc.feeds, sc)
        return effective_channel(ch, ProtocolKind.multiplexing(), sc.noise_watts)
    if framework == "ConvPASS":
        conv = replace(sc, num_segments=1, feed_x=None)
        ch = composite_channel(ues, place_pas(ues, conv, resolution), conv)
        return effective_channel(ch, ProtocolKind.selection(0), conv.noise_watts)
    protocol = ProtocolKind.parse(framework.split("-", 1)[1])
    ch = composite_channel(ues, place_pas(ues, sc, resolution), sc)
    return effective_channel(ch, protocol, sc.noise_watts)


def solve_framework(eff, sc: Scenario, objective: str, max_iters=100, tol_rel=1e-6, n_init=0):
    """Run the objective's solver on an effective channel; returns the SolverReport."""
    if objective == "MSE":
        cfg = SolverConfig(max_iters=max_iters, tol_rel=tol_rel, rate_targets=sc.rate_targets)
        return ao_mmse(eff, sc.p_max, cfg)
    cfg = SolverConfig(max_iters=max_iters, tol_rel=tol_rel)
    n = sc.num_ues + 1 if n_init == 0 else n_init
    return ao_wmmse(eff, sc.p_max, sc.theta, sc.mse_budget, cfg, n_init=n)


def run_trial(spec: ExperimentSpec, trial: int, sweep_value=0):
    """Metrics of every framework on one trial and sweep point."""
    sc = spec.scenario_at(sweep_value)
    ues = _positions(trial_unit_positions(spec.seed, trial, sc.num_ues), sc)
    out = {}
    for fw in spec.frameworks:
        eff = framework_channel(fw, ues, sc, spec.placement_resolution)
        rep = solve_framework(eff, sc, spec.objective, spec.max_iters, spec.tol_rel, spec.n_init)
        out[fw] = {
            "mse_per_ue": rep.final_mse / sc.num_ues,
            "sinr": float(np.mean(rep.final_sinr)),
            "wsr": float(np.sum(sc.theta * np.log2(1.0 + rep.final_sinr))),
            "iterations": rep.iterations_used,
        }
    return out


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run every trial at every sweep point; deterministic in (spec, seed)."""
    samples = {}
    for _, value in spec.points:
        per_fw = {fw: {m: np.empty(spec.trials) for m in METRICS} for fw in spec.frameworks}
        for t in range(spec.trials):
            res = run_trial(spec, t, value)
            for fw, rec in res.items():
                per_fw[fw]["mse_per_ue"][t] = rec["mse_per_ue"]
                per_fw[fw]["sinr_db"][t] = rec["sinr"]
                per_fw[fw]["wsr"][t] = rec["wsr"]
                per_fw[fw]["iterations"][t] = rec["iterations"]
        for fw in spec.frameworks:
            samples[(fw, value)] = per_fw[fw]
    return ExperimentResult(spec, samples)


def emit_csv(result: ExperimentResult, path):
    """Write one row per (framework, sweep value, metric); ``path="-"`` writes to stdout."""
    def write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in result.rows():
            writer.writerow([_fmt(x) for x in row])

    if str(path) == "-":
        write(sys.stdout)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write(fh)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def read_csv(path):
    """Read an emitted CSV back into a list of dicts with numeric fields parsed."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("mean", "stderr"):
            row[key] = float(row[key])
        row["trials"] = int(row["trials"])
        row["seed"] = int(row["seed"])
    return rows


# ---------------------------------------------------------------------------
# config files

_TOP_KEYS = {"seed", "trials", "objective", "frameworks", "loss_case", "scenario", "sweep", "solver"}
_SWEEP_KEYS = {"name", "values"}
_SOLVER_KEYS = {"max_iters", "tol_rel", "n_init", "placement_resolution"}


def load_config(path) -> ExperimentSpec:
    """Parse a TOML experiment file. Unknown keys raise ConfigError naming the key."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}", "config") from exc
    return spec_from_mapping(data)


def spec_from_mapping(data: dict) -> ExperimentSpec:
    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError("unknown key", key)
    scen = data.get("scenario", {})
    if not isinstance(scen, dict):
        raise ConfigError("must be a table", "scenario")
    try:
        scenario = scenario_from_mapping(scen)
    except ConfigError as exc:
        if exc.field and not str(exc.field).startswith("scenario"):
            raise ConfigError(str(exc).split(": ", 1)[-1], f"scenario.{exc.field}") from exc
        raise
    kwargs = {"scenario": scenario}
    for key in ("seed", "trials", "objective", "loss_case"):
        if key in data:
            kwargs[key] = data[key]
    if "frameworks" in data:
        kwargs["frameworks"] = tuple(data["frameworks"])
    sweep = data.get("sweep", {})
    for key in sweep:
        if key not in _SWEEP_KEYS:
            raise ConfigError("unknown key", f"sweep.{key}")
    if sweep:
        if "name" not in sweep:
            raise ConfigError("missing sweep name", "sweep.name")
        kwargs["sweep_name"] = sweep["name"]
        kwargs["sweep_values"] = tuple(sweep.get("values", ()))
    solver = data.get("solver", {})
    for key in solver:
        if key not in _SOLVER_KEYS:
            raise ConfigError("unknown key", f"solver.{key}")
    kwargs.update(solver)
    return ExperimentSpec(**kwargs)


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default.toml"
