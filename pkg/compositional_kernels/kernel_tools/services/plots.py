"""Static SVG charts: CFI bars and 2-D embedding scatters.

Files are reproducible: no creation date is embedded and SVG ids come from a
fixed hash salt.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SVG_STYLE = {"svg.hashsalt": "compositional-kernels", "svg.fonttype": "none"}


def _save(fig, path: str) -> None:
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)


def cfi_bar_chart(values: Sequence[float], names: Sequence[str], path: str, title: str = "CFI") -> None:
    values = np.asarray(values, dtype=float)
    with matplotlib.rc_context(_SVG_STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(values) + 2.0), 4.0))
        colors = ["#b2182b" if v < 0 else "#2166ac" for v in values]
        ax.bar(range(len(values)), values, color=colors)
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_xticks(range(len(values)))
        ax.set_xticklabels(list(names), rotation=60, ha="right")
        ax.set_ylabel("influence per unit perturbation")
        ax.set_title(title)
        _save(fig, path)


def embedding_scatter(
    Z: np.ndarray,
    path: str,
    groups: Optional[Sequence[str]] = None,
    title: str = "kernel PCA",
) -> None:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    second = Z[:, 1] if Z.shape[1] > 1 else np.zeros(Z.shape[0])
    with matplotlib.rc_context(_SVG_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 5.0))
        if groups is None:
            ax.scatter(Z[:, 0], second, s=14, alpha=0.7)
        else:
            labels = np.asarray([str(g) for g in groups])
            for g in sorted(set(labels)):
                mask = labels == g
                ax.scatter(Z[mask, 0], second[mask], s=14, alpha=0.7, label=g)
            ax.legend(loc="best", fontsize="small")
        ax.set_xlabel("PC1")
        ax.set_ylabel("PC2")
        ax.set_title(title)
        _save(fig, path)
