from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import DataError, InvalidPartition, InvalidWeight, NotPSD
from ..core.schemas import WeightMatrix
from .newick import PhyloTree

logger = logging.getLogger(__name__)

UNIFRAC_VARIANTS = ("A", "B")


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Disjoint blocks covering the coordinates 0..p-1."""
    blocks: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise InvalidPartition("partition has no blocks")
        seen: set = set()
        for b in blocks:
            if not b:
                raise InvalidPartition("partition contains an empty block")
            for i in b:
                if i in seen:
                    raise InvalidPartition(f"coordinate {i} appears in more than one block")
                seen.add(i)
        p = len(seen)
        if seen != set(range(p)):
            missing = sorted(set(range(max(seen) + 1)) - seen)
            raise InvalidPartition(f"blocks do not cover 0..{max(seen)}; missing {missing}")

    @property
    def p(self) -> int:
        return sum(len(b) for b in self.blocks)

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "Partition":
        """One block per distinct label (e.g. the phylum of each feature), in order of first appearance."""
        groups: Dict[str, List[int]] = {}
        for i, label in enumerate(labels):
            groups.setdefault(str(label), []).append(i)
        return cls(tuple(tuple(g) for g in groups.values()))


def partition_weights(part: Partition) -> WeightMatrix:
    """W_ij = 1/|P_l| when i and j share block P_l, else 0."""
    w = np.zeros((part.p, part.p))
    for block in part.blocks:
        idx = np.asarray(block)
        w[np.ix_(idx, idx)] = 1.0 / len(block)
    return WeightMatrix(w, check_psd=False)


# ---------------------------------------------------------------------------
# UniFrac
# ---------------------------------------------------------------------------

def unifrac_distance(tree: PhyloTree, i: str, j: str) -> float:
    """Unweighted UniFrac between the point masses on leaves i and j.

    unshared = length(LCA -> i) + length(LCA -> j), total = depth(LCA) + unshared.
    """
    a = tree.leaf(i)
    b = tree.leaf(j)
    if a == b:
        return 0.0
    up_a = tree.lineage(a)
    up_b = tree.lineage(b)
    on_b = set(up_b)
    lca = next(k for k in up_a if k in on_b)
    unshared = sum(tree.branch_length(k) for k in up_a[: up_a.index(lca)])
    unshared += sum(tree.branch_length(k) for k in up_b[: up_b.index(lca)])
    total = tree.depth(lca) + unshared
    if total == 0:
        return 0.0
    return unshared / total


def unifrac_distance_matrix(tree: PhyloTree, feature_names: Optional[Sequence[str]] = None) -> np.ndarray:
    names = _coordinate_leaves(tree, feature_names)
    p = len(names)
    d = np.zeros((p, p))
    for r in range(p):
        for c in range(r + 1, p):
            d[r, c] = d[c, r] = unifrac_distance(tree, names[r], names[c])
    return d


def _coordinate_leaves(tree: PhyloTree, feature_names: Optional[Sequence[str]]) -> List[str]:
    leaves = tree.leaf_names
    if feature_names is None:
        return leaves
    names = [str(n) for n in feature_names]
    for n in names:
        tree.leaf(n)
    uncovered = sorted(set(leaves) - set(names))
    if uncovered:
        raise DataError(f"tree leaves without a matching feature: {uncovered[:5]}")
    if len(set(names)) != len(names):
        raise DataError("feature names are not unique")
    return names


def unifrac_weights(
    tree: PhyloTree,
    variant: str = "A",
    feature_names: Optional[Sequence[str]] = None,
) -> WeightMatrix:
    """UniFrac prior W = D M D with D = diag(1/sqrt(M_ii)).

    Variant A: M = 1 - UniFrac, checked for positive semi-definiteness (NotPSD
    carries the smallest eigenvalue). Variant B: M = U U^T with U the UniFrac
    distance matrix, PSD by construction.
    """
    variant = variant.upper()
    if variant not in UNIFRAC_VARIANTS:
        raise InvalidWeight(f"unknown UniFrac variant {variant!r}; use A or B")
    dist = unifrac_distance_matrix(tree, feature_names)
    m = 1.0 - dist if variant == "A" else dist @ dist.T
    m = 0.5 * (m + m.T)
    diag = np.diag(m).copy()
    if np.any(diag <= 0):
        raise InvalidWeight(f"UniFrac similarity M^{variant} has a zero diagonal entry; cannot scale")
    scale = 1.0 / np.sqrt(diag)
    w = m * np.outer(scale, scale)
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 1.0)
    w = np.maximum(w, 0.0)
    try:
        weight = WeightMatrix(w)
    except NotPSD as err:
        raise NotPSD(
            err.min_eigenvalue,
            f"UniFrac M^{variant} weights are not positive semi-definite "
            f"(min eigenvalue {err.min_eigenvalue:.3e}); use variant B",
        ) from err
    logger.info("UniFrac M^%s weights: p=%d, min eigenvalue %.3e", variant, weight.p, weight.min_eigenvalue)
    return weight


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def read_weight_csv(path: str) -> WeightMatrix:
    """Headerless p x p CSV."""
    try:
        frame = pd.read_csv(path, header=None, dtype=float)
    except ValueError as err:
        raise InvalidWeight(f"cannot read weight matrix from {path}: {err}") from err
    return WeightMatrix(frame.to_numpy())


def write_weight_csv(weight: WeightMatrix, path: str) -> None:
    pd.DataFrame(weight.entries).to_csv(path, header=False, index=False, float_format="%.17g")
