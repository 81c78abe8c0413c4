"""
Experiment configuration for adaptive-lookahead policy iteration.

Parses the JSON experiment document into frozen specs, expands parameter
grids, builds environments and resolves the V* each planner is guided by.

Document shape:
    {
      "environment": {"kind": "maze", "width": 30, "height": 30, "gamma": 0.98},
      "planners": [
        {"kind": "hpi", "h": [1, 2, 3]},
        {"kind": "tlpi", "kappa_power": 3},
        {"kind": "qlpi", "thetas": {"2": 0.1, "4": 0.05, "8": 0.02},
         "vstar": {"source": "aggregate", "k": [2, 3]}}
      ],
      "seeds": [0, 1, 2],
      "backend": "tree",
      "out": "results/maze"
    }

Any list-valued planner parameter, including inside "vstar", is a grid axis.
"""

import copy
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple

from loguru import logger

from envs import (
    approximate_optimal_value,
    build_chain,
    build_maze,
    build_random_mdp,
    chain_down_policy,
    order_preservation_m,
    seeded_generator,
)
from errors import ConfigError
from models import (
    Environment,
    EvaluationMethod,
    LookaheadBackend,
    MazeConfig,
    PlannerResult,
    Policy,
    QuantileSchedule,
    TabularMdp,
    ValueFunction,
)
from persistence import RESULTS_DIR, load_mdp, load_value
from planner_engine import run_h_pi, run_pi, run_qlpi, run_tlpi
from systems import (
    correction_beta,
    evaluate_policy,
    exact_optimal,
    pi_iteration_bound,
    qlpi_iteration_bound,
    tlpi_iteration_bound,
)


ENVIRONMENT_KINDS = {"chain", "maze", "random", "file"}
PLANNER_KINDS = {"pi", "hpi", "tlpi", "qlpi"}
VSTAR_SOURCES = {"exact", "aggregate", "noisy", "file"}
NOISE_STREAM = 3

PLANNER_KEYS = {
    "pi": {"kind", "label"},
    "hpi": {"kind", "label", "h"},
    "tlpi": {"kind", "label", "kappa", "kappa_power", "beta", "epsilon", "vstar"},
    "qlpi": {"kind", "label", "thetas", "m", "vstar"},
}


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class VStarSpec:
    source: str = "exact"
    k: int | None = None
    epsilon: float | None = None
    path: str | None = None

    @property
    def tag(self) -> str:
        if self.source == "aggregate":
            return f"agg(k={self.k})"
        if self.source == "noisy":
            return f"noisy(eps={self.epsilon:g})"
        if self.source == "file":
            return f"file({Path(self.path).stem})"
        return ""


@dataclass(frozen=True)
class PlannerSpec:
    kind: str
    h: int | None = None
    kappa: float | None = None
    kappa_power: int | None = None
    beta: float | None = None
    epsilon: float | None = None
    thetas: Tuple[Tuple[int, float], ...] = ()
    m: int | str = 0
    vstar: VStarSpec = field(default_factory=VStarSpec)
    custom_label: str | None = None

    @property
    def label(self) -> str:
        if self.custom_label:
            return self.custom_label
        if self.kind == "pi":
            return "pi"
        if self.kind == "hpi":
            return f"hpi(h={self.h})"
        parts = []
        if self.kind == "tlpi":
            parts.append(f"kappa=gamma^{self.kappa_power}" if self.kappa_power else f"kappa={self.kappa:g}")
            if self.epsilon is not None:
                parts.append(f"eps={self.epsilon:g}")
            elif self.beta:
                parts.append(f"beta={self.beta:g}")
        else:
            parts.append(",".join(f"{d}:{t:g}" for d, t in self.thetas) or "1:1")
            if self.m:
                parts.append(f"m={self.m}")
        if self.vstar.tag:
            parts.append(f"vstar={self.vstar.tag}")
        return f"{self.kind}({';'.join(parts)})"

    def kappa_for(self, gamma: float) -> float:
        return gamma ** self.kappa_power if self.kappa_power else self.kappa

    def schedule(self) -> QuantileSchedule:
        return QuantileSchedule.from_depths(dict(self.thetas))


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentSpec
    planners: Tuple[PlannerSpec, ...]
    seeds: Tuple[int, ...] = (0,)
    backend: LookaheadBackend = LookaheadBackend.TREE
    evaluation: EvaluationMethod = EvaluationMethod.DIRECT
    out: Path = RESULTS_DIR
    max_iters: int | None = None


def parse_override(item: str) -> Tuple[str, Any]:
    """
    Split a "key=value" override; the value is parsed as JSON when possible.

    Examples:
        "backend=dp" -> ("backend", "dp")
        "seeds=[1,2]" -> ("seeds", [1, 2])
    """
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Override must look like key=value, got '{item}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(document: Dict, overrides: List[str]) -> Dict:
    """Return a copy of the document with top-level keys replaced."""
    merged = copy.deepcopy(document)
    for item in overrides:
        key, value = parse_override(item)
        merged[key] = value
    return merged


def expand_grid(raw: Mapping[str, Any]) -> List[Dict[str, Any]]:
    """
    Cross product of every list-valued entry, recursing into nested mappings.

    Keys are expanded in sorted order so the cell order is deterministic.
    """
    axes = []
    keys = sorted(raw)
    for key in keys:
        value = raw[key]
        if isinstance(value, list):
            if not value:
                raise ConfigError(f"Grid axis '{key}' is empty")
            axes.append(value)
        elif isinstance(value, Mapping) and key != "thetas":
            axes.append(expand_grid(value))
        else:
            axes.append([value])
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes)]


def _require_int(raw: Mapping, key: str, minimum: int) -> int:
    value = raw.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"'{key}' must be an integer >= {minimum}, got {value!r}")
    return value


def _optional_float(raw: Mapping, key: str, low: float, high: float) -> float | None:
    value = raw.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not low <= value <= high:
        raise ConfigError(f"'{key}' must be a number in [{low}, {high}], got {value!r}")
    return float(value)


def _parse_vstar(raw: Any) -> VStarSpec:
    if raw is None or raw == "exact":
        return VStarSpec()
    if isinstance(raw, str):
        raw = {"source": raw}
    if not isinstance(raw, Mapping) or raw.get("source") not in VSTAR_SOURCES:
        raise ConfigError(f"'vstar' source must be one of {sorted(VSTAR_SOURCES)}, got {raw!r}")
    source = raw["source"]
    if source == "aggregate":
        return VStarSpec(source=source, k=_require_int(raw, "k", 1))
    if source == "noisy":
        epsilon = _optional_float(raw, "epsilon", 0.0, math.inf)
        if epsilon is None:
            raise ConfigError("'vstar' source 'noisy' needs 'epsilon'")
        return VStarSpec(source=source, epsilon=epsilon)
    if source == "file":
        path = raw.get("path")
        if not path or not Path(path).is_file():
            raise ConfigError(f"V* file does not exist: {path!r}")
        return VStarSpec(source=source, path=str(path))
    return VStarSpec()


def _parse_thetas(raw: Any) -> Tuple[Tuple[int, float], ...]:
    if not isinstance(raw, Mapping) or not raw:
        raise ConfigError(f"'thetas' must map depths to budgets, got {raw!r}")
    budgets = {}
    for depth, theta in raw.items():
        try:
            depth = int(depth)
        except (TypeError, ValueError):
            raise ConfigError(f"QLPI depth '{depth}' is not an integer")
        if depth < 1:
            raise ConfigError(f"QLPI depths must be positive, got {depth}")
        if isinstance(theta, bool) or not isinstance(theta, (int, float)) or not 0 <= theta <= 1:
            raise ConfigError(f"theta_{depth} must lie in [0, 1], got {theta!r}")
        if depth == 1 and theta != 1:
            raise ConfigError("theta_1 must be 1")
        budgets[depth] = float(theta)
    return tuple(sorted((d, t) for d, t in budgets.items() if d != 1))


def parse_planner(raw: Mapping[str, Any]) -> PlannerSpec:
    """
    Validate one expanded planner cell.

    Raises:
        ConfigError: On unknown kinds, unknown keys or out-of-range parameters.
    """
    kind = raw.get("kind")
    if kind not in PLANNER_KINDS:
        raise ConfigError(f"Planner kind must be one of {sorted(PLANNER_KINDS)}, got {kind!r}")
    unknown = set(raw) - PLANNER_KEYS[kind]
    if unknown:
        raise ConfigError(f"Unknown keys for planner '{kind}': {', '.join(sorted(unknown))}")
    label = raw.get("label")

    if kind == "pi":
        return PlannerSpec(kind=kind, custom_label=label)
    if kind == "hpi":
        return PlannerSpec(kind=kind, h=_require_int(raw, "h", 1), custom_label=label)

    vstar = _parse_vstar(raw.get("vstar"))
    if kind == "tlpi":
        has_kappa, has_power = raw.get("kappa") is not None, raw.get("kappa_power") is not None
        if has_kappa == has_power:
            raise ConfigError("TLPI needs exactly one of 'kappa' and 'kappa_power'")
        kappa = _optional_float(raw, "kappa", 0.0, 1.0)
        if kappa is not None and not 0.0 < kappa < 1.0:
            raise ConfigError(f"'kappa' must lie strictly inside (0, 1), got {kappa}")
        power = _require_int(raw, "kappa_power", 1) if has_power else None
        beta = _optional_float(raw, "beta", 0.0, math.inf)
        epsilon = _optional_float(raw, "epsilon", 0.0, math.inf)
        if beta is not None and epsilon is not None:
            raise ConfigError("TLPI takes 'beta' or 'epsilon', not both")
        return PlannerSpec(
            kind=kind,
            kappa=kappa,
            kappa_power=power,
            beta=beta,
            epsilon=epsilon,
            vstar=vstar,
            custom_label=label,
        )

    m = raw.get("m", 0)
    if m != "auto" and (isinstance(m, bool) or not isinstance(m, int) or m < 0):
        raise ConfigError(f"'m' must be a non-negative integer or \"auto\", got {m!r}")
    return PlannerSpec(
        kind=kind, thetas=_parse_thetas(raw.get("thetas")), m=m, vstar=vstar, custom_label=label
    )


def _parse_environment(raw: Any) -> EnvironmentSpec:
    if not isinstance(raw, Mapping) or raw.get("kind") not in ENVIRONMENT_KINDS:
        raise ConfigError(f"'environment.kind' must be one of {sorted(ENVIRONMENT_KINDS)}")
    kind = raw["kind"]
    params = {k: v for k, v in raw.items() if k != "kind"}
    if kind == "chain":
        _require_int(params, "n", 1)
    elif kind == "random":
        _require_int(params, "num_states", 1)
        _require_int(params, "num_actions", 1)
    elif kind == "file":
        path = params.get("path")
        if not path or not Path(path).is_file():
            raise ConfigError(f"MDP file does not exist: {path!r}")
    elif kind == "maze":
        allowed = set(MazeConfig.__dataclass_fields__) - {"seed"}
        unknown = set(params) - allowed
        if unknown:
            raise ConfigError(f"Unknown maze keys: {', '.join(sorted(unknown))}")
    gamma = params.get("gamma")
    if gamma is not None and not (isinstance(gamma, (int, float)) and 0 < gamma < 1):
        raise ConfigError(f"'gamma' must lie strictly inside (0, 1), got {gamma!r}")
    return EnvironmentSpec(kind=kind, params=dict(params))


def parse_config(document: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate an experiment document and expand its planner grids.

    Args:
        document: Parsed JSON experiment document, overrides already applied.

    Returns:
        ExperimentConfig with one PlannerSpec per grid cell.

    Raises:
        ConfigError: If the document is malformed or inconsistent.
    """
    if not isinstance(document, Mapping):
        raise ConfigError("Experiment configuration must be a JSON object")
    environment = _parse_environment(document.get("environment"))

    raw_planners = document.get("planners", [document["planner"]] if "planner" in document else None)
    if not isinstance(raw_planners, list) or not raw_planners:
        raise ConfigError("Configuration needs a non-empty 'planners' list (or one 'planner')")
    planners = []
    for raw in raw_planners:
        if not isinstance(raw, Mapping):
            raise ConfigError(f"Planner entries must be objects, got {raw!r}")
        planners.extend(parse_planner(cell) for cell in expand_grid(raw))
    for spec in planners:
        if spec.vstar.source == "aggregate" and environment.kind != "maze":
            raise ConfigError("Aggregated V* is only available on maze environments")
    labels = [p.label for p in planners]
    if len(set(labels)) != len(labels):
        raise ConfigError("Planner cells must have distinct labels")

    seeds = document.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds or any(
        isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in seeds
    ):
        raise ConfigError(f"'seeds' must be a non-empty list of non-negative integers, got {seeds!r}")

    try:
        backend = LookaheadBackend(document.get("backend", "tree"))
        evaluation = EvaluationMethod(document.get("evaluation", "direct"))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    max_iters = document.get("max_iters")
    if max_iters is not None:
        max_iters = _require_int(document, "max_iters", 1)

    return ExperimentConfig(
        environment=environment,
        planners=tuple(planners),
        seeds=tuple(seeds),
        backend=backend,
        evaluation=evaluation,
        out=Path(document.get("out", RESULTS_DIR)),
        max_iters=max_iters,
    )


def load_config(path: Path, overrides: List[str] | None = None) -> ExperimentConfig:
    """
    Read, override and validate an experiment file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: If the file is not valid JSON or fails validation.
    """
    with open(path, "r") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration is not valid JSON: {e}") from e
    return parse_config(apply_overrides(document, overrides or []))


def build_environment(spec: EnvironmentSpec, seed: int) -> Environment:
    """
    Build the environment of one seed.

    Chain and file environments ignore the seed; maze and random MDPs use it
    as their root seed.
    """
    params = dict(spec.params)
    if spec.kind == "chain":
        n = params["n"]
        mdp = build_chain(n, params.get("gamma", 0.9))
        return Environment(name=f"chain(n={n})", mdp=mdp, initial_policy=chain_down_policy(n))
    if spec.kind == "maze":
        config = MazeConfig(seed=seed, **params)
        mdp, layout = build_maze(config)
        return Environment(
            name=f"maze({config.width}x{config.height},seed={seed})",
            mdp=mdp,
            initial_policy=Policy.constant(mdp.num_states, 0),
            layout=layout,
        )
    if spec.kind == "random":
        mdp = build_random_mdp(
            params["num_states"],
            params["num_actions"],
            seed,
            gamma=params.get("gamma", 0.9),
            branching=params.get("branching"),
        )
        return Environment(
            name=f"random(S={mdp.num_states},A={mdp.num_actions},seed={seed})",
            mdp=mdp,
            initial_policy=Policy.constant(mdp.num_states, 0),
        )
    mdp = load_mdp(Path(params["path"]))
    return Environment(
        name=f"file({Path(params['path']).stem})",
        mdp=mdp,
        initial_policy=Policy.constant(mdp.num_states, 0),
    )


def resolve_vstar(
    spec: VStarSpec,
    environment: Environment,
    exact: ValueFunction,
    backend: LookaheadBackend,
    seed: int,
) -> Tuple[ValueFunction, int]:
    """
    The value a planner is guided by, with the queries spent producing it.

    Raises:
        ConfigError: If a V* file does not match the environment.
    """
    if spec.source == "aggregate":
        return approximate_optimal_value(environment.mdp, environment.layout, spec.k, backend)
    if spec.source == "noisy":
        rng = seeded_generator(seed, NOISE_STREAM)
        noise = rng.uniform(-spec.epsilon, spec.epsilon, size=len(exact))
        return ValueFunction(values=exact.values + noise), 0
    if spec.source == "file":
        value = load_value(Path(spec.path))
        if len(value) != environment.mdp.num_states:
            raise ConfigError(
                f"V* file has {len(value)} entries, environment has {environment.mdp.num_states} states"
            )
        return value, 0
    return exact, 0


def run_planner(
    spec: PlannerSpec,
    environment: Environment,
    exact: ValueFunction,
    config: ExperimentConfig,
    seed: int,
) -> PlannerResult:
    """Run one planner cell on a built environment."""
    mdp, pi0 = environment.mdp, environment.initial_policy
    common = dict(
        backend=config.backend,
        max_iters=config.max_iters,
        reference=exact,
        evaluation=config.evaluation,
        label=spec.label,
    )
    if spec.kind == "pi":
        return run_pi(mdp, pi0, **common)
    if spec.kind == "hpi":
        return run_h_pi(mdp, pi0, spec.h, **common)

    v_star, setup_queries = resolve_vstar(spec.vstar, environment, exact, config.backend, seed)
    if spec.kind == "tlpi":
        kappa = spec.kappa_for(mdp.discount)
        beta = correction_beta(spec.epsilon, kappa) if spec.epsilon is not None else (spec.beta or 0.0)
        return run_tlpi(mdp, pi0, kappa, v_star, beta, setup_queries=setup_queries, **common)

    m = spec.m
    if m == "auto":
        m = order_preservation_m(exact, v_star, evaluate_policy(mdp, pi0))
        logger.info(f"{spec.label}: order slack m={m} at the initial policy")
    return run_qlpi(mdp, pi0, spec.schedule(), v_star, m, setup_queries=setup_queries, **common)


def prepare(config: ExperimentConfig, seed: int) -> Tuple[Environment, ValueFunction]:
    """Build the environment of a seed and its exact V* (uncharged, for tracing)."""
    environment = build_environment(config.environment, seed)
    exact, _ = exact_optimal(environment.mdp)
    return environment, exact


def iteration_bound(spec: PlannerSpec, mdp: TabularMdp, result: PlannerResult) -> int | None:
    """
    Worst-case round count of the planner family, for the run audit.

    QLPI is bounded through its observed contraction; None when that
    contraction is not below 1 (approximate guides can stall a round).
    """
    S, A, gamma = mdp.num_states, mdp.num_actions, mdp.discount
    if spec.kind == "pi":
        return pi_iteration_bound(S, A, gamma)
    if spec.kind == "hpi":
        return pi_iteration_bound(S, A, gamma, h=spec.h)
    if spec.kind == "tlpi":
        return tlpi_iteration_bound(S, A, gamma, spec.kappa_for(gamma))
    kappa = result.trace.empirical_kappa
    if kappa >= 1.0:
        return None
    return qlpi_iteration_bound(S, A, gamma, kappa)
