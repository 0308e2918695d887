"""Run configuration for the command line.

Values are merged with the precedence command-line flags > JSON config file
(a flat object whose keys are the field names below) > defaults. Unknown
keys and invalid values are usage errors.
"""

from __future__ import annotations

import json
import os
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import UsageError
from .schemas import KernelFamily, SimulationDesign, Task

SEEDED_COMMANDS = frozenset({"select", "simulate", "compare-importance"})


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: str = Field(..., description="Sub-command to run")

    # inputs
    input: Optional[str] = Field(default=None, description="Counts / abundance CSV, one sample per row")
    model: Optional[str] = Field(default=None, description="Fitted model file (model.json)")
    tree: Optional[str] = Field(default=None, description="Newick tree of the features")
    weights: Optional[str] = Field(default=None, description="Headerless p x p weight matrix CSV")
    label_column: Optional[str] = Field(default=None, description="Column holding the response / class label")
    task: Task = Field(default=Task.REGRESSION)
    transpose: bool = Field(default=False, description="Input has one feature per row")
    prevalence: Optional[float] = Field(default=None, ge=0, le=1, description="Feature filter: minimal fraction of samples with a non-zero count")
    min_median: Optional[float] = Field(default=None, ge=0, description="Feature filter: minimal median of the non-zero counts")

    # model selection
    n_outer: int = Field(default=10, ge=2, description="Outer cross-validation folds")
    n_inner: int = Field(default=5, ge=2, description="Inner cross-validation folds")
    n_lambdas: int = Field(default=40, ge=1, description="Size of the log-spaced ridge penalty grid")
    seed: Optional[int] = Field(default=None, ge=0, description="Seed of every random split and generator")
    threads: Optional[int] = Field(default=None, description="Worker threads for Gram blocks and grid tasks; default all cores")

    # explicit kernel
    kernel: KernelFamily = Field(default=KernelFamily.LINEAR, description="Kernel family for fit / kpca / summary / medoid")
    a: Optional[float] = None
    b: Optional[float] = None
    sigma2: Optional[float] = None
    c: Optional[float] = None
    t: Optional[float] = None
    lam: Optional[float] = Field(default=None, gt=0, description="Ridge penalty; chosen by inner CV when omitted")

    # interpretation / embedding
    step: float = Field(default=1e-5, gt=0, lt=1, description="Central-difference step of the CFI")
    cpd_points: int = Field(default=100, ge=2, description="Evenly spaced CPD grid points in [0.001, 0.999]")
    components: int = Field(default=2, ge=1, description="Kernel PCA components")
    pc_scale: float = Field(default=2.0, gt=0, description="Perturbation scale of the principal-component contributions")
    reference: str = Field(default="barycenter", pattern="^(barycenter|medoid)$")
    reference_label: Optional[str] = Field(default=None, description="Label value selecting the medoid subset")
    variant: str = Field(default="auto", pattern="^(auto|A|B)$", description="UniFrac weight variant; auto falls back from A to B")

    # simulation
    design: SimulationDesign = Field(default=SimulationDesign.BLOCK_TV)
    n: int = Field(default=100, ge=1)
    noise_sd: float = Field(default=1.0, ge=0)

    output_dir: str = Field(default=".", description="Directory receiving every output file")

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.command in SEEDED_COMMANDS and self.seed is None:
            raise ValueError(f"'{self.command}' needs --seed")
        if self.reference == "medoid" and self.reference_label is None:
            raise ValueError("--reference medoid needs --reference-label")
        return self

    def output_path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as err:
        raise UsageError(f"cannot read config file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise UsageError(f"config file {path} must hold a flat JSON object")
    return payload


def build_run_config(command: str, flags: Dict[str, Any], config_path: Optional[str] = None) -> RunConfig:
    merged: Dict[str, Any] = read_config_file(config_path) if config_path else {}
    merged.update({k: v for k, v in flags.items() if v is not None})
    merged["command"] = command
    try:
        cfg = RunConfig.model_validate(merged)
    except ValidationError as err:
        first = err.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or "config"
        raise UsageError(f"invalid configuration ({where}): {first.get('msg')}") from err
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
    except OSError as err:
        raise UsageError(f"cannot create output directory {cfg.output_dir}: {err}") from err
    if not os.access(cfg.output_dir, os.W_OK):
        raise UsageError(f"output directory {cfg.output_dir} is not writable")
    return cfg
