"""Run configuration and its JSON loader.

A config file is one JSON object. Top-level keys set :class:`RunConfig`
fields; the optional ``linear`` and ``nonlinear`` blocks set scenario
fields. Any key not recognised is a :class:`ConfigError`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import CascadeFuseError
from ..filters.cascade import DEFAULT_BETA, DEFAULT_SPCI_WEIGHT
from ..scenarios.linear import LinearToyConfig
from ..scenarios.nonlinear import NonlinearConfig

ESTIMATORS = ("full", "proposed-sp", "proposed-lin", "naive", "spci")
SCENARIOS = ("linear", "nonlinear", "replay")

# the sigma-point cascade also runs on the linear toy, one trial at a time
LINEAR_ESTIMATORS = ESTIMATORS
NONLINEAR_ESTIMATORS = ("full", "proposed-sp", "naive", "spci")

DEFAULT_ESTIMATORS = {
    "linear": ("full", "proposed-lin", "naive"),
    "nonlinear": NONLINEAR_ESTIMATORS,
    "replay": ("proposed-sp", "naive", "spci"),
}


class ConfigError(CascadeFuseError, ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a Monte Carlo run.

    Attributes
    ----------
    scenario : str
        ``linear``, ``nonlinear`` or ``replay``.
    estimators : tuple of str
        Estimators to run; empty selects the scenario default.
    n_trials, seed : int
        Trial count and master seed; trial ``i`` uses ``splitmix64(seed ^ i)``.
    out_dir : str or None
        Output directory for CSV and JSON results.
    spci_weight, beta : float
        SPCI weight ``w`` and the cross-covariance deflation factor.
    cooperative : bool
        Whether the feeding filter publishes its ``psi`` matrix.
    workers : int
        Process count for nonlinear trials. Results do not depend on it.
    record_stride : int
        Keep every ``record_stride``-th evaluation step in ``errors.csv``.
    """

    scenario: str = "linear"
    estimators: tuple = ()
    n_trials: int = 1000
    seed: int = 0
    out_dir: str | None = None
    spci_weight: float = DEFAULT_SPCI_WEIGHT
    beta: float = DEFAULT_BETA
    cooperative: bool = False
    workers: int = 1
    record_stride: int = 10
    linear: LinearToyConfig = field(default_factory=LinearToyConfig)
    nonlinear: NonlinearConfig = field(default_factory=NonlinearConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        names = tuple(self.estimators) or DEFAULT_ESTIMATORS[self.scenario]
        allowed = LINEAR_ESTIMATORS if self.scenario == "linear" else NONLINEAR_ESTIMATORS
        for name in names:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
            if name not in allowed:
                raise ConfigError(f"estimator {name!r} is not available for the {self.scenario} scenario")
        if len(set(names)) != len(names):
            raise ConfigError("estimator names must be unique")
        object.__setattr__(self, "estimators", names)
        for key in ("n_trials", "seed", "workers", "record_stride"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{key} must be an integer")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.workers < 1 or self.record_stride < 1:
            raise ConfigError("workers and record_stride must be at least 1")
        if not 0.0 < self.spci_weight < 1.0:
            raise ConfigError("spci_weight must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        return d


_SCENARIO_BLOCKS = {"linear": LinearToyConfig, "nonlinear": NonlinearConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from parsed JSON, layered over ``base``."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    base = base or RunConfig()
    top = dict(data)
    blocks = {}
    for key, cls in _SCENARIO_BLOCKS.items():
        if key in top:
            merged = {**asdict(getattr(base, key)), **_checked_block(top.pop(key), cls, key)}
            blocks[key] = _build(cls, merged, key)
    if "estimators" in top:
        est = top["estimators"]
        if not isinstance(est, list) or not all(isinstance(e, str) for e in est):
            raise ConfigError("estimators must be a list of names")
        top["estimators"] = tuple(est)
    known = {f.name for f in fields(RunConfig)} - set(_SCENARIO_BLOCKS)
    unknown = sorted(set(top) - known)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    try:
        return replace(base, **top, **blocks)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _checked_block(block, cls, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(block) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return block


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read a JSON config file.

    Raises
    ------
    ConfigError
        If the file is missing, is not valid JSON, or holds unknown keys or
        invalid values.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(data, base)
