"""Run configuration shared by the command-line tools."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .independence import TestConfig
from .skeleton import SkeletonConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    alpha: float = 0.01
    method: str = "hsic"
    bandwidth: float | None = None
    permutations: int | None = None
    min_effective_n: int = 30
    exact_max_n: int = 1000
    n_features: int = 40
    regression_features: int = 72
    max_cond: int | None = 3
    max_parents: int | None = 4
    correction_sweeps: int = 10
    candidate_pairs: str = "all"
    mode: str = "statistical"

    def __post_init__(self) -> None:
        if self.mode not in ("statistical", "oracle"):
            raise ConfigError("mode must be 'statistical' or 'oracle'")
        if self.method not in ("hsic", "fisherz"):
            raise ConfigError("method must be 'hsic' or 'fisherz'")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.max_parents is not None and self.max_parents < 1:
            raise ConfigError("max_parents must be positive")
        try:
            self.skeleton_config()
            self.test_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_mapping(data)

    def override(self, **changes: Any) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def test_config(self) -> TestConfig:
        return TestConfig(
            alpha=self.alpha,
            bandwidth=self.bandwidth,
            permutations=self.permutations,
            min_effective_n=self.min_effective_n,
            method=self.method,
            exact_max_n=self.exact_max_n,
            n_features=self.n_features,
            regression_features=self.regression_features,
            seed=self.seed,
        )

    def skeleton_config(self) -> SkeletonConfig:
        return SkeletonConfig(self.max_cond, self.correction_sweeps, self.candidate_pairs)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
