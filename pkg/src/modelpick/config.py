"""Run configuration, seed discipline, and the flat key=value config format.

Precedence: CLI flag > config file > built-in default. All randomness flows
from the single run seed; each pipeline stage derives its own generator
through a fixed spawn key so adding a stage never shifts another stage's
stream.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cascade import Fallback
from .profiles import Criterion

LOG_LEVEL_ENV = "MODELPICK_LOG_LEVEL"

# Stable stage -> spawn-key mapping. Append only; never renumber.
SEED_SCHEME_VERSION = 1
_STAGE_KEYS = {
    "folds": 0,
    "synth": 1,
    "feature_selection": 2,
}


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    """Deterministic per-stage generator derived from the single run seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STAGE_KEYS[stage],)))


def stage_seed(seed: int, stage: str) -> int:
    """A derived integer seed for APIs that take one."""
    return int(stage_rng(seed, stage).integers(0, 2**31 - 1))


@dataclass
class RunConfig:
    """Pipeline knobs; defaults follow the published configuration."""

    theta: float = 0.5           # model-set selection stop threshold, percentage points
    k: int = 5                   # KNN neighbor count
    pcc_threshold: float = 0.75  # correlation-pruning cutoff
    feature_count: int = 7       # greedy-elimination stop size
    folds: int = 10
    seed: int = 0
    criterion: Criterion = Criterion.TOP1
    fallback: str = "first"      # "first" | "abstain" | "model:<id>"
    feature_subset: list[str] | None = None  # None = default behavior, or explicit names
    select_features: bool = False            # run correlation + greedy selection
    measure_time: bool = False               # wall-clock timing makes artifacts non-reproducible

    def resolve_fallback(self, first_model: str) -> Fallback:
        if self.fallback == "first":
            return Fallback.prespecified(first_model)
        if self.fallback == "abstain":
            return Fallback.abstain()
        if self.fallback.startswith("model:"):
            return Fallback.prespecified(self.fallback.split(":", 1)[1])
        raise ValueError(f"bad fallback spec {self.fallback!r}")


_FIELD_PARSERS = {
    "theta": float,
    "k": int,
    "pcc_threshold": float,
    "feature_count": int,
    "folds": int,
    "seed": int,
    "criterion": Criterion.parse,
    "fallback": str,
    "select_features": lambda s: s.lower() in ("1", "true", "yes"),
    "measure_time": lambda s: s.lower() in ("1", "true", "yes"),
    "feature_subset": lambda s: [n.strip() for n in s.split(",") if n.strip()],
}


def load_config_file(path) -> dict:
    """Flat key=value file, '#' comments and blank lines ignored."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _FIELD_PARSERS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _FIELD_PARSERS[key](raw.strip())
    return values


def build_config(file_values: dict | None = None, **cli_overrides) -> RunConfig:
    """Merge defaults <- config file <- CLI flags (None means not given)."""
    cfg = RunConfig()
    if file_values:
        cfg = replace(cfg, **file_values)
    overrides = {k: v for k, v in cli_overrides.items() if v is not None}
    return replace(cfg, **overrides)


def setup_logging() -> logging.Logger:
    level = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logger = logging.getLogger("modelpick")
    logger.setLevel(getattr(logging, level, logging.WARNING))
    return logger
