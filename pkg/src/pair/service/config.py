"""Service configuration: JSON file, overridable via the PAIR_CONFIG env var."""
from __future__ import annotations

import json
import os
from pathlib import Path

from pydantic import BaseModel, Field

CONFIG_ENV_VAR = "PAIR_CONFIG"


class ServiceConfig(BaseModel):
    checkpoint: str
    host: str = "127.0.0.1"
    port: int = 8000
    queue_depth: int = Field(default=16, ge=1)
    workers: int = Field(default=1, ge=1)
    data_dir: str = "pair-service-data"
    # sampler settings applied to every job; must match CLI flags for
    # byte-identical outputs across entry points
    steps: int = Field(default=50, ge=1)
    eta: float = Field(default=0.0, ge=0.0, le=1.0)
    combiner: str = "factorized"
    # optional dataset whose ground truth seeds the oracle segmenter
    oracle_dataset: str | None = None


def load_service_config(path: str | None = None) -> ServiceConfig:
    resolved = path or os.environ.get(CONFIG_ENV_VAR)
    if not resolved:
        raise FileNotFoundError(
            f"no service config: pass a path or set {CONFIG_ENV_VAR}"
        )
    doc = json.loads(Path(resolved).read_text(encoding="utf-8"))
    return ServiceConfig(**doc)
