"""Service configuration: a single JSON file plus environment overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


@dataclass
class ServiceConfig:
    data_dir: Path = Path("epiops-data")
    host: str = "127.0.0.1"
    port: int = 8000
    cohort_csv: Optional[Path] = None     # ingested at startup when present
    series_csv: Optional[Path] = None     # default fit dataset
    policy_log_csv: Optional[Path] = None
    ui_dir: Optional[Path] = None         # static UI bundle, served at /

    _ENV_PREFIX = "EPIOPS_"

    @classmethod
    def load(cls, config_path: Optional[Path] = None) -> "ServiceConfig":
        raw = {}
        if config_path is not None:
            raw = json.loads(Path(config_path).read_text())
        cfg = cls()
        for name in ("data_dir", "host", "cohort_csv", "series_csv",
                     "policy_log_csv", "ui_dir"):
            env = os.environ.get(cls._ENV_PREFIX + name.upper())
            value = env if env is not None else raw.get(name)
            if value is not None:
                if name == "host":
                    cfg.host = str(value)
                else:
                    setattr(cfg, name, Path(value))
        port = os.environ.get(cls._ENV_PREFIX + "PORT", raw.get("port"))
        if port is not None:
            cfg.port = int(port)
        return cfg
