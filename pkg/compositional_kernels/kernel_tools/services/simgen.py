"""Synthetic designs and the simulation harnesses built on them.

Block design (p = 9): three independent blocks of three parts, each block
LogNormal(0, SIGMA); the rows are closed to the simplex and
Y = 100 * k_tv(z, X) + noise_sd * N(0, 1). Draw order from the generator:
the three blocks, then the noise.

Lognormal design (p = 3): LogNormal(0, I_3) closed to the simplex, no response.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..core.errors import InvalidParameters
from ..core.schemas import KernelSpec, SimDesign, SimulationDesign, Task
from ..utils.rng import CounterRandom
from .compdata import closure
from .datio import Dataset
from .interpret import (
    cfi,
    cpd,
    default_cpd_grid,
    partial_dependence,
    permutation_importance,
    relative_influence,
)
from .kernels import cross_gram, gram
from .learn import cross_validate_lambda, default_lambdas, fit_krr

logger = logging.getLogger(__name__)

BLOCK_SIGMA = np.array([
    [1.0, 0.25, -0.25],
    [0.25, 1.0, 0.25],
    [-0.25, 0.25, 1.0],
])

# fixed reference point of the block design, as printed (sums to 1 + 1e-8)
Z_PRINTED = np.array([
    0.06544714, 0.08760064, 0.17203408, 0.07502236, 0.1642615,
    0.03761901, 0.18255478, 0.13099514, 0.08446536,
])
Z_POINT = closure(Z_PRINTED)

TV_SPEC = KernelSpec.generalized_js(math.inf, 1.0)
RESPONSE_SCALE = 100.0


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def block_response(X) -> np.ndarray:
    """f(x) = 100 * k_tv(z, x)."""
    return RESPONSE_SCALE * cross_gram(TV_SPEC, X, Z_POINT)[:, 0]


def gen_block_lognormal(n: int, seed: int, noise_sd: float = 1.0) -> Dataset:
    if n < 1:
        raise InvalidParameters(f"n must be at least 1, got {n}")
    rng = CounterRandom(seed)
    blocks = [rng.multivariate_normal(BLOCK_SIGMA, n) for _ in range(3)]
    X = closure(np.exp(np.hstack(blocks)))
    y = block_response(X) + noise_sd * rng.normal(n)
    return Dataset(
        X=X,
        y=y,
        feature_names=tuple(f"x{j + 1}" for j in range(9)),
        sample_ids=tuple(f"s{i + 1}" for i in range(n)),
        task=Task.REGRESSION,
        label_column="y",
    )


def gen_lognormal_iid(n: int, seed: int) -> Dataset:
    if n < 1:
        raise InvalidParameters(f"n must be at least 1, got {n}")
    X = closure(np.exp(CounterRandom(seed).normal((n, 3))))
    return Dataset(
        X=X,
        y=None,
        feature_names=("x1", "x2", "x3"),
        sample_ids=tuple(f"s{i + 1}" for i in range(n)),
    )


def simulate(design: SimDesign) -> Dataset:
    if design.design == SimulationDesign.BLOCK_TV:
        return gen_block_lognormal(design.n, design.seed, design.noise_sd)
    return gen_lognormal_iid(design.n, design.seed)


# ---------------------------------------------------------------------------
# CFI versus classical importance
# ---------------------------------------------------------------------------

def f_sum_first_two(X) -> np.ndarray:
    """f1(x) = 10 x^1 + 10 x^2."""
    arr = np.atleast_2d(np.asarray(X, dtype=float))
    return 10.0 * arr[:, 0] + 10.0 * arr[:, 1]


def f_first_share(X) -> np.ndarray:
    """f2(x) = (1 - x^2 - x^3) / (1 - x^3), i.e. x^1 / (x^1 + x^2) on the simplex."""
    arr = np.atleast_2d(np.asarray(X, dtype=float))
    return (1.0 - arr[:, 1] - arr[:, 2]) / (1.0 - arr[:, 2])


COMPARISON_FUNCTIONS = {"f1": f_sum_first_two, "f2": f_first_share}


@dataclass
class ImportanceComparison:
    table: pd.DataFrame
    curves: pd.DataFrame

    def value(self, function: str, measure: str, coordinate: int) -> float:
        row = self.table[(self.table["function"] == function) & (self.table["measure"] == measure)]
        return float(row[f"x{coordinate + 1}"].iloc[0])

    def violations(self) -> List[str]:
        """Departures from the expected pattern: only CFI attributes part 3 correctly."""
        out = []
        if not self.value("f1", "CFI", 2) < 0:
            out.append("f1: CFI of x3 is not negative")
        if self.value("f1", "RI", 2) != 0 or self.value("f1", "PI", 2) != 0:
            out.append("f1: RI or PI of x3 is not zero")
        if not abs(self.value("f2", "CFI", 2)) < 1e-6:
            out.append("f2: CFI of x3 is not zero")
        if not self.value("f2", "PI", 2) > 0:
            out.append("f2: PI of x3 is not positive")
        return out


def compare_cfi_pi_pdp(n: int = 100, seed: int = 0, n_repeats: int = 10) -> ImportanceComparison:
    """CFI, RI and PI (table) plus CPD and PDP (curves) for f1 and f2 on the lognormal design."""
    if n < 10:
        raise InvalidParameters(f"the comparison needs n >= 10, got {n}")
    X = gen_lognormal_iid(n, seed).X
    grid = default_cpd_grid()
    rows = []
    curves = []
    for name, f in COMPARISON_FUNCTIONS.items():
        measures = {
            "CFI": cfi(f, X).values,
            "RI": relative_influence(f, X),
            "PI": permutation_importance(f, X, n_repeats=n_repeats, seed=seed),
        }
        for measure, values in measures.items():
            rows.append({"function": name, "measure": measure, **{f"x{j + 1}": v for j, v in enumerate(values)}})
        for j in range(3):
            curve = cpd(f, X, j, grid)
            pdp = partial_dependence(f, X, j, grid)
            curves.append(pd.DataFrame({
                "function": name, "feature": f"x{j + 1}", "z": grid, "cpd": curve.values, "pdp": pdp.values,
            }))
    comparison = ImportanceComparison(table=pd.DataFrame(rows), curves=pd.concat(curves, ignore_index=True))
    for problem in comparison.violations():
        logger.warning("importance comparison: %s", problem)
    return comparison


# ---------------------------------------------------------------------------
# Consistency of CFI / CPD estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PopulationTargets:
    cfi: np.ndarray
    cpd: np.ndarray
    grid: np.ndarray


def population_targets(n_draws: int = 20000, seed: int = 10**6, grid: Optional[Sequence[float]] = None) -> PopulationTargets:
    """Monte-Carlo CFI and CPD of the true block-design response."""
    z = default_cpd_grid() if grid is None else np.asarray(grid, dtype=float)
    X = gen_block_lognormal(n_draws, seed, noise_sd=0.0).X
    values = cfi(block_response, X).values
    curves = np.vstack([cpd(block_response, X, j, z).values for j in range(X.shape[1])])
    return PopulationTargets(cfi=values, cpd=curves, grid=z)


def _estimate_deviation(n: int, seed: int, target: PopulationTargets, spec: KernelSpec) -> dict:
    data = gen_block_lognormal(n, seed)
    K = gram(spec, data.X, n_jobs=1).entries
    lam = cross_validate_lambda(K, data.y, default_lambdas(), seed=seed).best_lambda
    model = fit_krr(data.X, data.y, spec, lam, gram_matrix=K)
    predictor = lambda X: model.decision_function(X, n_jobs=1)
    est_cfi = cfi(predictor, data.X).values
    est_cpd = np.vstack([cpd(predictor, data.X, j, target.grid).values for j in range(data.p)])
    return {
        "n": n,
        "seed": seed,
        "lambda": lam,
        "msd_cfi": float(np.mean((est_cfi - target.cfi) ** 2)),
        "msd_cpd": float(np.mean((est_cpd - target.cpd) ** 2)),
    }


def consistency_study(
    sizes: Sequence[int] = (50, 100, 200),
    n_seeds: int = 20,
    base_seed: int = 0,
    spec: KernelSpec = TV_SPEC,
    target: Optional[PopulationTargets] = None,
    n_jobs: Optional[int] = None,
) -> pd.DataFrame:
    """Mean squared deviation of fitted-model CFI / CPD from the population values.

    One row per (n, seed); CPD deviations are averaged over all parts and
    grid points.
    """
    target = population_targets() if target is None else target
    tasks = [(n, base_seed + s) for n in sizes for s in range(n_seeds)]
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_estimate_deviation)(n, seed, target, spec) for n, seed in tasks
    )
    frame = pd.DataFrame(rows)
    summary = frame.groupby("n")[["msd_cfi", "msd_cpd"]].mean()
    for n, row in summary.iterrows():
        logger.info("n=%d: mean MSD CFI %.4g, CPD %.4g", n, row["msd_cfi"], row["msd_cpd"])
    return frame
