from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from .errors import DimensionMismatch, InvalidParameters, InvalidWeight, NotPSD
from ..utils.numerics import PSD_TOLERANCE, extreme_eigenvalues


class KernelFamily(str, Enum):
    LINEAR = "linear"
    RBF = "rbf"
    GENERALIZED_JS = "generalized_js"
    HILBERTIAN = "hilbertian"
    AITCHISON = "aitchison"
    AITCHISON_RBF = "aitchison_rbf"
    HEAT_DIFFUSION = "heat_diffusion"


class Task(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


_GEOMETRY = {
    KernelFamily.LINEAR: "euclidean",
    KernelFamily.RBF: "euclidean",
    KernelFamily.GENERALIZED_JS: "probability",
    KernelFamily.HILBERTIAN: "probability",
    KernelFamily.AITCHISON: "aitchison",
    KernelFamily.AITCHISON_RBF: "aitchison",
    KernelFamily.HEAT_DIFFUSION: "riemannian",
}

# families whose kernel is a coordinate sum of one scalar function k0(x^j, y^j)
SUM_FAMILIES = frozenset({KernelFamily.LINEAR, KernelFamily.GENERALIZED_JS, KernelFamily.HILBERTIAN})

# families whose kernel vanishes at the barycentre
CENTERED_FAMILIES = SUM_FAMILIES | {KernelFamily.AITCHISON}


def format_param(value: float) -> str:
    """Shortest round-trip text for a parameter; infinities spelled 'inf' / '-inf'."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


# ---------------------------------------------------------------------------
# Weight matrix
# ---------------------------------------------------------------------------

class WeightMatrix:
    """Symmetric, nonnegative, positive semi-definite p x p prior similarity.

    Entries are copied and made read-only; the PSD check can be disabled for
    matrices whose definiteness the caller has already established.
    """

    def __init__(self, entries: Any, check_psd: bool = True) -> None:
        w = np.array(entries, dtype=float, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidWeight(f"weight matrix must be square, got shape {w.shape}")
        if w.shape[0] < 1:
            raise InvalidWeight("weight matrix is empty")
        if not np.all(np.isfinite(w)):
            raise InvalidWeight("weight matrix has non-finite entries")
        if not np.array_equal(w, w.T):
            raise InvalidWeight("weight matrix is not exactly symmetric")
        if np.any(w < 0):
            raise InvalidWeight("weight matrix has negative entries")
        w.setflags(write=False)
        self._entries = w
        self.min_eigenvalue = float("nan")
        if check_psd:
            lo, hi = extreme_eigenvalues(w)
            self.min_eigenvalue = lo
            if lo < -PSD_TOLERANCE * max(1.0, hi):
                raise NotPSD(lo)

    def __repr__(self) -> str:
        return f"WeightMatrix(p={self.p})"

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def p(self) -> int:
        return int(self._entries.shape[0])

    @classmethod
    def identity(cls, p: int) -> "WeightMatrix":
        return cls(np.eye(p), check_psd=False)

    def require_dim(self, p: int) -> None:
        if self.p != p:
            raise DimensionMismatch(f"weight matrix is {self.p}x{self.p} but compositions have p={p}")


# ---------------------------------------------------------------------------
# Kernel family and parameters
# ---------------------------------------------------------------------------

class KernelSpec(BaseModel):
    """A kernel family with its parameters and an optional weight matrix.

    The serialized form is the flat record (family, a, b, sigma2, c, t,
    weights_path); the in-memory weight matrix is never serialized.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    family: KernelFamily
    a: Optional[float] = Field(default=None, description="First exponent (generalized-JS / Hilbertian), may be inf")
    b: Optional[float] = Field(default=None, description="Second exponent (generalized-JS / Hilbertian), may be -inf or inf")
    sigma2: Optional[float] = Field(default=None, description="Squared bandwidth (RBF / Aitchison-RBF)")
    c: Optional[float] = Field(default=None, description="Zero shift added before the log-ratio (Aitchison geometry)")
    t: Optional[float] = Field(default=None, description="Diffusion time (heat diffusion)")
    weights_path: Optional[str] = Field(default=None, description="CSV file holding the p x p weight matrix")
    weight: Optional[WeightMatrix] = Field(default=None, exclude=True, repr=False)

    @field_validator("a", "b", "sigma2", "c", "t", mode="before")
    @classmethod
    def _parse_number(cls, v: Any) -> Any:
        # records written by to_record() carry infinities as strings
        if v is None or v == "":
            return None
        return float(v)

    @field_serializer("a", "b", "sigma2", "c", "t")
    def _dump_number(self, v: Optional[float]) -> Any:
        if v is not None and math.isinf(v):
            return format_param(v)
        return v

    @model_validator(mode="after")
    def _check_parameters(self) -> "KernelSpec":
        fam = self.family
        if fam in (KernelFamily.RBF, KernelFamily.AITCHISON_RBF):
            _require_positive("sigma2", self.sigma2)
        if fam in (KernelFamily.AITCHISON, KernelFamily.AITCHISON_RBF):
            _require_positive("c", self.c)
        if fam == KernelFamily.HEAT_DIFFUSION:
            _require_positive("t", self.t)
        if fam == KernelFamily.GENERALIZED_JS:
            a, b = self.a, self.b
            if a is None or b is None:
                raise InvalidParameters("generalized_js needs both a and b")
            if not (a > 0):
                raise InvalidParameters(f"generalized_js needs a in (0, inf], got {a}")
            if not (0.5 <= b <= a):
                raise InvalidParameters(f"generalized_js needs b in [0.5, a], got a={a}, b={b}")
        if fam == KernelFamily.HILBERTIAN:
            a, b = self.a, self.b
            if a is None or b is None:
                raise InvalidParameters("hilbertian needs both a and b")
            if not (a > 0):
                raise InvalidParameters(f"hilbertian needs a in (0, inf], got {a}")
            if not (b < 0) or math.isnan(b):
                raise InvalidParameters(f"hilbertian needs b in [-inf, 0), got {b}")
            if math.isinf(a) and math.isinf(b):
                raise InvalidParameters("hilbertian a and b cannot both be infinite")
        return self

    # --- constructors -------------------------------------------------------

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(family=KernelFamily.LINEAR)

    @classmethod
    def rbf(cls, sigma2: float) -> "KernelSpec":
        return cls(family=KernelFamily.RBF, sigma2=sigma2)

    @classmethod
    def generalized_js(cls, a: float, b: float) -> "KernelSpec":
        return cls(family=KernelFamily.GENERALIZED_JS, a=a, b=b)

    @classmethod
    def hilbertian(cls, a: float, b: float) -> "KernelSpec":
        return cls(family=KernelFamily.HILBERTIAN, a=a, b=b)

    @classmethod
    def aitchison(cls, c: float) -> "KernelSpec":
        return cls(family=KernelFamily.AITCHISON, c=c)

    @classmethod
    def aitchison_rbf(cls, c: float, sigma2: float) -> "KernelSpec":
        return cls(family=KernelFamily.AITCHISON_RBF, c=c, sigma2=sigma2)

    @classmethod
    def heat_diffusion(cls, t: float) -> "KernelSpec":
        return cls(family=KernelFamily.HEAT_DIFFUSION, t=t)

    def with_weight(self, weight: Optional[WeightMatrix], weights_path: Optional[str] = None) -> "KernelSpec":
        return self.model_copy(update={"weight": weight, "weights_path": weights_path or self.weights_path})

    # --- descriptors --------------------------------------------------------

    @property
    def geometry(self) -> str:
        return _GEOMETRY[self.family]

    @property
    def is_weighted(self) -> bool:
        return self.weight is not None

    @property
    def label(self) -> str:
        """Stable one-token description, e.g. ``generalized_js(a=1.0,b=0.5)``."""
        parts = []
        for name in ("a", "b", "c", "sigma2", "t"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={format_param(v)}")
        if self.is_weighted:
            parts.append("weighted")
        return f"{self.family.value}({','.join(parts)})"

    def to_record(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "KernelSpec":
        return cls.model_validate(record)


def _require_positive(name: str, value: Optional[float]) -> None:
    if value is None or not (value > 0) or math.isinf(value):
        raise InvalidParameters(f"{name} must be a positive finite number, got {value}")


# ---------------------------------------------------------------------------
# Serialized records
# ---------------------------------------------------------------------------

class FittedModelRecord(BaseModel):
    """Self-describing file form of a fitted kernel ridge model."""
    format: str = Field(default="compositional-krr/1")
    task: Task
    spec: Dict[str, Any] = Field(..., description="KernelSpec.to_record()")
    lambda_: float = Field(..., alias="lambda")
    intercept: float
    alpha: List[float]
    train_X: List[List[float]]
    feature_names: List[str] = Field(default_factory=list)
    classes: Optional[List[str]] = Field(default=None, description="Original labels mapped to -1 and +1")
    weight: Optional[List[List[float]]] = Field(
        default=None,
        description="Weight matrix entries when the kernel is weighted; embedded so the file stands alone.",
    )

    model_config = ConfigDict(populate_by_name=True)


class SimulationDesign(str, Enum):
    BLOCK_TV = "blocktv"
    LOGNORMAL_IID = "lognormal"


class SimDesign(BaseModel):
    """A synthetic design; the seed fixes the whole random stream."""
    design: SimulationDesign
    n: int = Field(default=100, ge=1, description="Number of samples")
    seed: int = Field(default=0, ge=0, description="Key of the counter-based generator")
    noise_sd: float = Field(default=1.0, ge=0, description="Response noise standard deviation (block design only)")


class SelectionRow(BaseModel):
    """One (kernel, outer fold) result of the hierarchical cross-validation."""
    kernel: str
    fold: int
    score: float
    lambda_: float = Field(..., alias="lambda")

    model_config = ConfigDict(populate_by_name=True)
