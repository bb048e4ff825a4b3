"""Runtime settings read from the environment and optional key=value files."""

import logging
import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, Field, field_validator

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


class VemSettings(BaseModel):
    """Process-wide defaults; CLI flags override them per run."""
    c_eps: float = Field(1.0, gt=0, description="Proportionality constant in eps_F = c_eps * rho_F")
    solver_tol: float = Field(1e-12, gt=0, lt=1)
    max_iter: int = Field(20000, ge=1)
    threads: int = Field(1, ge=1)
    log_level: str = "INFO"
    output_dir: Path = Path("results")
    quad_extra: int = Field(4, ge=0, description="Error norms integrate with order 2k + quad_extra")
    edge_weight: str = Field("face", description="Edge term weight h_F (face) or h_e (edge)")
    original_scaling: str = Field("h", description="Multiply the DOF stabilization by h_K (h) or keep it literal (none)")

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        v = v.upper()
        if v not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ValueError(f'Unknown log level: {v}')
        return v

    @field_validator('edge_weight')
    @classmethod
    def validate_edge_weight(cls, v):
        if v not in ('face', 'edge'):
            raise ValueError('edge_weight must be face or edge')
        return v

    @field_validator('original_scaling')
    @classmethod
    def validate_original_scaling(cls, v):
        if v not in ('none', 'h'):
            raise ValueError('original_scaling must be none or h')
        return v

    @classmethod
    def from_env(cls) -> "VemSettings":
        """Build settings from VEM_* environment variables."""
        values = {}
        for name in cls.model_fields:
            raw = os.getenv(f"VEM_{name.upper()}")
            if raw is not None and raw != "":
                values[name] = raw
        return cls(**values)


_settings: Optional[VemSettings] = None


def get_settings() -> VemSettings:
    """Get or create the global settings instance."""
    global _settings
    if _settings is None:
        _settings = VemSettings.from_env()
        logger.debug(f"Loaded settings: {_settings.model_dump()}")
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None


def read_config_file(path: Path) -> Dict[str, str]:
    """
    Read a key=value run configuration file.

    Keys mirror the CLI long flags; dashes and underscores are interchangeable
    and a leading ``--`` is ignored. Empty values are dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    entries = {}
    for key, value in dotenv_values(path).items():
        if value is None or value == "":
            continue
        entries[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return entries
