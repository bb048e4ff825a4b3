"""Pydantic models for run configuration, mesh families and reports."""

from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class StabilizationVariant(str, Enum):
    """Stabilization forms available for the discrete bilinear form."""
    NEW = "new"
    ORIGINAL = "original"


class MeshFamily(str, Enum):
    """Mesh families produced by the built-in generators."""
    CUBE = "cube"
    SLIT = "slit"
    PERTURBED = "perturbed"


class EpsRule(str, Enum):
    """Coupling of the slit aperture to the mesh size h = 1/n."""
    H = "h"
    H2 = "h2"
    FIXED = "fixed"


class MeshFamilyConfig(BaseModel):
    """Parameters of a refinement family of generated meshes."""
    family: MeshFamily
    levels: List[int] = Field(..., min_length=1, description="Subdivisions per axis, one entry per level")
    eps_rule: EpsRule = EpsRule.H
    eps_scale: float = Field(0.5, gt=0, description="Factor c in eps = c * h**p")
    eps: Optional[float] = Field(None, gt=0, lt=0.5, description="Aperture for the fixed rule")
    magnitude: float = Field(0.0, ge=0, lt=0.3, description="Vertex perturbation relative to 1/n")
    seed: int = 0

    @field_validator('levels')
    @classmethod
    def validate_levels(cls, v):
        if any(n < 1 for n in v):
            raise ValueError('Refinement levels must be positive')
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError('Refinement levels must be strictly increasing')
        return v

    @model_validator(mode='after')
    def validate_aperture(self):
        if self.family != MeshFamily.SLIT:
            return self
        if self.eps_rule == EpsRule.FIXED and self.eps is None:
            raise ValueError('The fixed aperture rule requires eps')
        for n in self.levels:
            eps = self.aperture(n)
            if not 0.0 < eps < 0.5:
                raise ValueError(f'Slit aperture {eps} at n={n} is outside (0, 1/2)')
        return self

    def aperture(self, n: int) -> float:
        """Slit aperture eps(h) at h = 1/n."""
        if self.eps_rule == EpsRule.FIXED:
            return float(self.eps)
        power = 1 if self.eps_rule == EpsRule.H else 2
        return self.eps_scale * (1.0 / n) ** power


class RunConfig(BaseModel):
    """Validated configuration of one CLI command."""
    command: str
    mesh_path: Optional[Path] = None
    family: Optional[MeshFamily] = None
    n: Optional[int] = Field(None, ge=1)
    levels: List[int] = Field(default_factory=list)
    eps: Optional[float] = Field(None, gt=0, lt=0.5)
    eps_rule: EpsRule = EpsRule.H
    eps_scale: float = Field(0.5, gt=0)
    magnitude: float = Field(0.0, ge=0, lt=0.3)
    seed: int = 0
    k: int = Field(1, ge=1, le=3, description="Polynomial order")
    problem: str = "sinsinsin"
    variant: StabilizationVariant = StabilizationVariant.NEW
    c_eps: float = Field(1.0, gt=0)
    tol: float = Field(1e-12, gt=0, lt=1)
    max_iter: int = Field(20000, ge=1)
    quad_order: Optional[int] = Field(None, ge=1)
    threads: int = Field(1, ge=1)
    output: Optional[Path] = None
    output_dir: Path = Path("results")
    dump_matrix: Optional[Path] = None
    trials: int = Field(10, ge=1)
    threshold: float = Field(1e-5, gt=0)

    @field_validator('command')
    @classmethod
    def validate_command(cls, v):
        allowed_commands = ['gen-mesh', 'solve', 'verify-identity', 'study']
        if v not in allowed_commands:
            raise ValueError(f'Command must be one of: {", ".join(allowed_commands)}')
        return v

    @field_validator('problem')
    @classmethod
    def validate_problem(cls, v):
        from vem.problems import BUILTIN_PROBLEMS
        if v not in BUILTIN_PROBLEMS:
            raise ValueError(f'Problem must be one of: {", ".join(sorted(BUILTIN_PROBLEMS))}')
        return v

    @model_validator(mode='after')
    def validate_mesh_source(self):
        if self.command == 'study':
            if self.family is None:
                raise ValueError('study requires --family')
            if len(self.levels) < 3:
                raise ValueError('study requires at least 3 refinement levels')
            self.family_config()
        elif self.command == 'gen-mesh':
            if self.family is None or self.n is None:
                raise ValueError('gen-mesh requires a family and --n')
            self.family_config()
        elif self.mesh_path is None and (self.family is None or self.n is None):
            raise ValueError(f'{self.command} requires --mesh or --family with --n')
        return self

    def family_config(self) -> MeshFamilyConfig:
        """Mesh family parameters implied by this run."""
        levels = self.levels if self.command == 'study' else [self.n]
        eps_rule = self.eps_rule
        if self.command != 'study' and self.eps is not None:
            eps_rule = EpsRule.FIXED
        return MeshFamilyConfig(
            family=self.family,
            levels=levels,
            eps_rule=eps_rule,
            eps_scale=self.eps_scale,
            eps=self.eps if self.eps is not None else (0.1 if eps_rule == EpsRule.FIXED else None),
            magnitude=self.magnitude,
            seed=self.seed,
        )


class LevelRecord(BaseModel):
    """Errors and mesh statistics of one refinement level."""
    level: int
    n: int
    h_max: float = Field(..., gt=0)
    ndof: int
    energy_err: float
    h1_err: float
    l2_err: float
    min_rho_F: float
    min_rho_K: float
    cg_iters: int
    stab_seminorm: float = 0.0
    eps: Optional[float] = None
    max_faces_per_cell: int = 0


class RateFit(BaseModel):
    """Least-squares slope of log(error) against log(h)."""
    rate: Optional[float] = None
    r2: Optional[float] = None
    last_pair: Optional[float] = None
    expected: Optional[float] = Field(None, description="Theoretical order the window is centred on")
    within_window: Optional[bool] = Field(None, description="Rate inside [0.9, 1.3] times the expected order")


class ErrorReport(BaseModel):
    """Per-level records and fitted rates of a convergence study."""
    family: MeshFamilyConfig
    k: int
    problem: str
    variant: StabilizationVariant
    records: List[LevelRecord] = Field(default_factory=list)
    rates: Dict[str, RateFit] = Field(default_factory=dict)
    non_asymptotic: bool = False
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    @field_validator('records')
    @classmethod
    def validate_records(cls, v):
        if any(b.h_max >= a.h_max for a, b in zip(v, v[1:])):
            raise ValueError('Levels must be sorted by decreasing h')
        return v


class IdentityReport(BaseModel):
    """Residuals of the error-equation identity over random test vectors."""
    trials: int
    quad_order: int
    max_residual: float = Field(..., description="Largest |LHS - RHS|")
    max_relative_residual: float = Field(..., description="Largest |L - R| / (|L| + |R| + |u_I| |v|)")
    max_literal_residual: float = Field(..., description="Largest |L - R| / (|L| + |R| + machine eps)")
    max_abs_lhs: float
    max_abs_rhs: float
    residuals: List[float] = Field(default_factory=list)


class GateDecisionModel(BaseModel):
    """Acceptance gate decision."""
    decision: str = Field(..., description="Gate decision: pass, non_asymptotic, or fail")
    reason: str = Field(..., description="Explanation for the decision")
    constraints: Dict[str, Any] = Field(default_factory=dict, description="Thresholds and measured values")
    timestamp: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    @field_validator('decision')
    @classmethod
    def validate_decision(cls, v):
        allowed_decisions = ['pass', 'non_asymptotic', 'fail']
        if v not in allowed_decisions:
            raise ValueError(f'Decision must be one of: {", ".join(allowed_decisions)}')
        return v
