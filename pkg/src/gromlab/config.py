"""Experiment configuration: one JSON document, parsed strictly.

Unknown keys anywhere are rejected, every knob is type- and range-checked,
and defaults reproduce the desk-scale acceptance runs.
"""

from __future__ import annotations

import json
import math
import typing
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

import numpy as np

from .action import GroupSpec, classical_schottky, free_subgroup, full_free_group, schottky_group, trivial_group
from .space import HPoint, ModelSpace, half_plane, parse_word, tree


class ConfigError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _check_value(value: Any, hint, where: str):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], where)
    if origin is list:
        _require(isinstance(value, list), f"{where}: expected a list")
        return [_check_value(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)] if args else list(value)
    if hint is bool:
        _require(isinstance(value, bool), f"{where}: expected true or false")
        return value
    if hint is int:
        _require(isinstance(value, int) and not isinstance(value, bool), f"{where}: expected an integer")
        return value
    if hint is float:
        _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{where}: expected a number")
        _require(math.isfinite(value), f"{where}: expected a finite number")
        return float(value)
    if hint is str:
        _require(isinstance(value, str), f"{where}: expected a string")
        return value
    return value


def _build(cls, data: Any, where: str):
    _require(isinstance(data, dict), f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    _require(not unknown, f"{where}: unknown key(s) {', '.join(unknown)}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        sub = f"{where}.{f.name}"
        hint = hints[f.name]
        if isinstance(hint, type) and hasattr(hint, "__dataclass_fields__"):
            kwargs[f.name] = _build(hint, data[f.name], sub)
        else:
            kwargs[f.name] = _check_value(data[f.name], hint, sub)
    try:
        return cls(**kwargs)
    except ConfigError as err:
        raise ConfigError(f"{where}: {err}") from None
    except ValueError as err:
        raise ConfigError(f"{where}: {err}") from None


# ---------------------------------------------------------------- model and group


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "tree"
    k: int = 2
    delta: float = 1.0
    r0: float = 1.0
    P0: Optional[int] = None

    def __post_init__(self):
        _require(self.kind in ("tree", "half-plane"), "kind must be 'tree' or 'half-plane'")
        _require(2 <= self.k <= 8, "k must be in 2..8")
        _require(self.delta >= 0 and self.r0 > 0, "need delta >= 0 and r0 > 0")
        _require(self.P0 is None or self.P0 >= 1, "P0 must be >= 1")

    def build(self) -> ModelSpace:
        if self.kind == "tree":
            return tree(self.k, self.r0, self.P0)
        return half_plane(self.delta, self.r0, self.P0)


@dataclass(frozen=True)
class GroupConfig:
    kind: str = "full"
    words: list[str] = field(default_factory=list)
    matrices: list[list[list[float]]] = field(default_factory=list)
    length: Optional[float] = None
    basepoint: str = ""
    base_x: float = 0.0
    base_y: float = 1.0

    def __post_init__(self):
        kinds = ("full", "subgroup", "trivial", "schottky", "classical-schottky")
        _require(self.kind in kinds, f"group kind must be one of {', '.join(kinds)}")
        _require(self.kind != "subgroup" or self.words, "a subgroup needs generator words")
        _require(self.kind != "schottky" or self.matrices, "a Schottky group needs matrices")
        _require(self.base_y > 0, "base_y must be positive")
        _require(self.length is None or self.length > 0, "length must be positive")

    def build(self, space: ModelSpace) -> GroupSpec:
        tree_kinds = ("full", "subgroup")
        if space.is_tree:
            _require(self.kind not in ("schottky", "classical-schottky"), f"group kind {self.kind} needs the half-plane")
        else:
            _require(self.kind not in tree_kinds, f"group kind {self.kind} needs a tree")
        if self.kind == "full":
            return full_free_group(space)
        if self.kind == "subgroup":
            return free_subgroup(space, self.words)
        if self.kind == "trivial":
            return trivial_group(space)
        if self.kind == "classical-schottky":
            return classical_schottky(space) if self.length is None else classical_schottky(space, self.length)
        mats = [np.asarray(m, dtype=float) for m in self.matrices]
        _require(all(m.shape == (2, 2) for m in mats), "matrices must be 2x2")
        return schottky_group(space, mats)

    def base(self, space: ModelSpace):
        if space.is_tree:
            return parse_word(self.basepoint)
        return HPoint(self.base_x, self.base_y)


# ---------------------------------------------------------------- experiment knobs


def _window(lo: int, hi: int, name: str) -> None:
    _require(lo >= 1, f"{name} lower end must be >= 1")
    _require(hi >= lo + 3, f"{name} needs at least four scales")


@dataclass(frozen=True)
class RoblinParams:
    radius: float = 12.0
    window: int = 4
    tol: float = 0.02
    gap_tol: float = 0.02
    budget: int = 20_000_000

    def __post_init__(self):
        _require(self.window >= 2 and self.radius >= self.window, "need radius >= window >= 2")
        _require(self.tol > 0 and self.gap_tol > 0 and self.budget > 0, "tolerances and budget must be positive")


@dataclass(frozen=True)
class BishopJonesParams:
    n_min: int = 6
    n_max: int = 12
    radius: float = 12.0
    window: int = 4
    tol: float = 0.05
    ambient_margin: float = 0.3
    check_ambient: bool = True
    budget: int = 20_000_000

    def __post_init__(self):
        _window(self.n_min, self.n_max, "n")
        _require(self.window >= 2 and self.radius >= self.window, "need radius >= window >= 2")
        _require(self.tol > 0 and self.ambient_margin >= 0, "tolerances must be positive")


@dataclass(frozen=True)
class DimensionChainParams:
    taus: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0])
    limits: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.5])
    amplitudes: list[float] = field(default_factory=lambda: [0.0, 1.0])
    exponent: float = 0.5
    n_min: int = 6
    n_max: int = 12
    radius: float = 12.0
    window: int = 4
    tol: float = 0.1
    budget: int = 20_000_000

    def __post_init__(self):
        _window(self.n_min, self.n_max, "n")
        _require(self.taus and self.limits and self.amplitudes, "taus, limits and amplitudes must be non-empty")
        _require(all(t >= 0 for t in self.taus), "taus must be >= 0")
        _require(all(l > 0 for l in self.limits), "limits must be positive")
        _require(0 < self.exponent < 1, "exponent must be in (0, 1)")


@dataclass(frozen=True)
class ShadowParams:
    instances: int = 10_000
    samples: int = 20
    T_min: float = 1.0
    T_max: float = 8.0
    r_max: float = 3.0
    mutate: bool = False

    def __post_init__(self):
        _require(self.instances >= 1 and self.samples >= 1, "instances and samples must be >= 1")
        _require(0 < self.T_min <= self.T_max, "need 0 < T_min <= T_max")
        _require(self.r_max > 0, "r_max must be positive")


@dataclass(frozen=True)
class DeltaAuditParams:
    quadruples: int = 100_000
    radius: float = 8.0
    defect_bound: Optional[float] = None
    balls: int = 10
    ball_radius: float = 4.0
    cov_radii: list[float] = field(default_factory=lambda: [2.0, 3.0, 4.0])

    def __post_init__(self):
        _require(self.quadruples >= 1 and self.balls >= 1, "quadruples and balls must be >= 1")
        _require(self.radius > 0 and self.ball_radius >= 0, "radii must be positive")
        _require(self.cov_radii and all(R > 0 for R in self.cov_radii), "cov_radii must be positive")


@dataclass(frozen=True)
class FMetricParams:
    pairs: int = 1000
    beta: float = 4.0
    quotient_words: list[str] = field(default_factory=lambda: ["a a b", "b A"])
    tol: float = 1e-6

    def __post_init__(self):
        _require(self.pairs >= 1 and self.beta > 0 and self.tol > 0, "pairs, beta and tol must be positive")


@dataclass(frozen=True)
class KeyLemmaParams:
    beta: float = 4.0
    R: Optional[float] = None
    r: Optional[float] = None
    T_list: list[int] = field(default_factory=lambda: [10, 20, 30, 40])
    burn_in: int = 10
    threshold: float = 0.05
    center_origin: str = ""
    center_past: list[str] = field(default_factory=lambda: ["", "A"])
    center_future: list[str] = field(default_factory=lambda: ["", "a"])
    margin: int = 2
    budget: int = 2_000_000

    def __post_init__(self):
        _require(self.beta > 0, "beta must be positive")
        _require(self.T_list and all(T >= 1 for T in self.T_list), "T_list must hold positive integers")
        _require(list(self.T_list) == sorted(set(self.T_list)), "T_list must be strictly increasing")
        _require(len(self.center_past) == 2 and len(self.center_future) == 2, "center words are [preperiod, period] pairs")
        _require(self.margin >= 1, "margin must be >= 1")
        C = 2 / self.beta
        R = 2 * C if self.R is None else self.R
        r = C / 2 if self.r is None else self.r
        _require(R >= r > 0, "need R >= r > 0")


@dataclass(frozen=True)
class BowenParams:
    tau: float = 0.0
    beta: float = 4.0
    r: float = 0.5
    n_min: int = 6
    n_max: int = 10
    tol: float = 0.05
    compare_double: bool = True
    radius: float = 12.0
    window: int = 4
    budget: int = 2_000_000

    def __post_init__(self):
        _window(self.n_min, self.n_max, "n")
        _require(self.tau >= 0 and self.beta > 0 and self.r > 0 and self.tol > 0, "tau >= 0, beta, r, tol > 0")
        _require(self.window >= 2 and self.radius >= self.window, "need radius >= window >= 2")


@dataclass(frozen=True)
class LipTopParams:
    L: int = 0
    beta: float = 4.0
    r: float = 0.5
    T_min: int = 6
    T_max: int = 10
    tol: float = 0.05
    budget: int = 2_000_000

    def __post_init__(self):
        _window(self.T_min, self.T_max, "T")
        _require(self.L >= 0 and self.beta > 0 and self.r > 0 and self.tol > 0, "L >= 0, beta, r, tol > 0")


PARAMS = {
    "roblin": RoblinParams,
    "bishop-jones": BishopJonesParams,
    "dimension-chain": DimensionChainParams,
    "shadow-lemma": ShadowParams,
    "delta-audit": DeltaAuditParams,
    "f-metric": FMetricParams,
    "key-lemma": KeyLemmaParams,
    "bowen": BowenParams,
    "main-theorem": BowenParams,
    "lip-top": LipTopParams,
}
EXPERIMENTS = tuple(PARAMS)


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "gromlab-out"
    prefix: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelConfig = field(default_factory=ModelConfig)
    group: GroupConfig = field(default_factory=GroupConfig)
    params: Any = None
    seed: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def prefix(self) -> str:
        return self.output.prefix or self.experiment

    def to_dict(self) -> dict:
        return asdict(self)


def parse_config(data: Any) -> ExperimentConfig:
    _require(isinstance(data, dict), "config must be a JSON object")
    known = {"experiment", "model", "group", "params", "seed", "output"}
    unknown = sorted(set(data) - known)
    _require(not unknown, f"config: unknown key(s) {', '.join(unknown)}")
    _require("experiment" in data, "config: missing 'experiment'")
    name = data["experiment"]
    _require(name in PARAMS, f"config.experiment: expected one of {', '.join(EXPERIMENTS)}")
    seed = data.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0, "config.seed: expected a non-negative integer")
    return ExperimentConfig(
        experiment=name,
        model=_build(ModelConfig, data.get("model", {}), "config.model"),
        group=_build(GroupConfig, data.get("group", {}), "config.group"),
        params=_build(PARAMS[name], data.get("params", {}), "config.params"),
        seed=seed,
        output=_build(OutputConfig, data.get("output", {}), "config.output"),
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None
    return parse_config(data)
