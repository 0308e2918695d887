"""Command-line surface of kernel_tools.

Every sub-command reads a RunConfig (flags > --config JSON > defaults),
calls the services and writes CSV / JSON / SVG files into --output-dir.
Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import parallel_config

from ..core.config import RunConfig, build_run_config
from ..core.errors import CompositionalKernelError, DimensionMismatch, NotPSD, UsageError
from ..core.schemas import KernelFamily, KernelSpec, SimDesign, Task
from ..services.datio import Dataset, load_counts_csv, write_dataset_csv, write_frame_csv
from ..services.embed import embedding_function, health_scores, kernel_medoid, kpca_fit, summary_stat
from ..services.interpret import cfi, cpd, default_cpd_grid, pc_contribution, write_cpd_csv
from ..services.kernels import gram
from ..services.learn import (
    FittedModel,
    ParamGrid,
    cross_validate_lambda,
    decision_values,
    default_grid,
    default_lambdas,
    fit_krr,
    predict,
    select_model,
)
from ..services.newick import read_newick
from ..services.plots import cfi_bar_chart, embedding_scatter
from ..services.simgen import compare_cfi_pi_pdp, simulate
from ..services.weighting import read_weight_csv, unifrac_weights, write_weight_csv

logger = logging.getLogger("kernel-tools")

CFI_SUM_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _require(value: Optional[str], flag: str) -> str:
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def _load(cfg: RunConfig, with_labels: bool = False) -> Dataset:
    """Dataset of --input; labels are parsed only for fitting commands."""
    path = _require(cfg.input, "--input")
    if with_labels and cfg.label_column is None:
        raise UsageError("--label-column is required")
    try:
        return load_counts_csv(
            path, cfg.label_column, cfg.task, cfg.transpose, cfg.prevalence, cfg.min_median, parse=with_labels,
        )
    except FileNotFoundError as err:
        raise UsageError(f"input file not found: {path}") from err


def _load_model(cfg: RunConfig) -> FittedModel:
    path = _require(cfg.model, "--model")
    try:
        return FittedModel.load(path)
    except FileNotFoundError as err:
        raise UsageError(f"model file not found: {path}") from err


def _weight(cfg: RunConfig):
    if cfg.weights is None:
        return None
    try:
        return read_weight_csv(cfg.weights)
    except FileNotFoundError as err:
        raise UsageError(f"weight file not found: {cfg.weights}") from err


def _spec(cfg: RunConfig) -> KernelSpec:
    spec = KernelSpec(family=cfg.kernel, a=cfg.a, b=cfg.b, sigma2=cfg.sigma2, c=cfg.c, t=cfg.t)
    weight = _weight(cfg)
    return spec if weight is None else spec.with_weight(weight, cfg.weights)


def _align(data: Dataset, model: FittedModel) -> np.ndarray:
    """Data columns in the order the model was trained on."""
    if not model.feature_names or tuple(model.feature_names) == data.feature_names:
        return data.X
    missing = sorted(set(model.feature_names) - set(data.feature_names))
    if missing or len(model.feature_names) != data.p:
        raise DimensionMismatch(f"data features do not match the model (missing {missing[:5]})")
    order = [data.feature_names.index(name) for name in model.feature_names]
    return data.X[:, order]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_select(cfg: RunConfig) -> None:
    data = _load(cfg, with_labels=True)
    grid = default_grid(data.X, n_lambdas=cfg.n_lambdas)
    weight = _weight(cfg)
    if weight is not None:
        grid = ParamGrid(tuple(k.with_weight(weight, cfg.weights) for k in grid.kernels), grid.lambdas)
    report, model = select_model(
        data.X, data.y, grid, cfg.n_outer, cfg.n_inner, cfg.seed, data.task,
        feature_names=data.feature_names, classes=data.classes,
    )
    report.write_csv(cfg.output_path("selection_report.csv"))
    model.save(cfg.output_path("model.json"))
    logger.info("winner %s, lambda %.6g", report.winner.label, report.lam)


def cmd_fit(cfg: RunConfig) -> None:
    data = _load(cfg, with_labels=True)
    spec = _spec(cfg)
    lam = cfg.lam
    if lam is None:
        K = gram(spec, data.X).entries
        lam = cross_validate_lambda(K, data.y, default_lambdas(cfg.n_lambdas), cfg.n_inner, cfg.seed or 0, data.task).best_lambda
        logger.info("lambda %.6g chosen by %d-fold CV", lam, cfg.n_inner)
    model = fit_krr(data.X, data.y, spec, lam, data.task, feature_names=data.feature_names, classes=data.classes)
    model.save(cfg.output_path("model.json"))


def cmd_predict(cfg: RunConfig) -> None:
    model = _load_model(cfg)
    data = _load(cfg)
    X = _align(data, model)
    frame = pd.DataFrame({"sample_id": list(data.sample_ids)})
    if model.task == Task.CLASSIFICATION:
        signs = predict(model, X)
        labels = model.classes or ("-1", "1")
        frame["prediction"] = [labels[1] if s > 0 else labels[0] for s in signs]
        frame["decision"] = decision_values(model, X)
    else:
        frame["prediction"] = predict(model, X)
    write_frame_csv(frame, cfg.output_path("predictions.csv"))


def _cfi(cfg: RunConfig, model: FittedModel, data: Dataset):
    X = _align(data, model)
    names = model.feature_names or data.feature_names
    result = cfi(model.decision_function, X, cfg.step, feature_names=names)
    result.write_csv(cfg.output_path("cfi.csv"))
    total = result.total
    if math.isfinite(total) and abs(total) > CFI_SUM_TOLERANCE * max(1.0, float(np.nanmax(np.abs(result.values)))):
        logger.warning("CFI values sum to %.3e; the model may not be differentiable along the perturbation", total)
    else:
        logger.info("CFI sum %.3e", total)
    return result


def _cpd(cfg: RunConfig, model: FittedModel, data: Dataset) -> None:
    X = _align(data, model)
    names = model.feature_names or data.feature_names
    grid = default_cpd_grid(cfg.cpd_points)
    curves = [cpd(model.decision_function, X, j, grid, feature=names[j]) for j in range(X.shape[1])]
    write_cpd_csv(curves, cfg.output_path("cpd.csv"))


def cmd_cfi(cfg: RunConfig) -> None:
    _cfi(cfg, _load_model(cfg), _load(cfg))


def cmd_cpd(cfg: RunConfig) -> None:
    _cpd(cfg, _load_model(cfg), _load(cfg))


def cmd_interpret(cfg: RunConfig) -> None:
    model = _load_model(cfg)
    data = _load(cfg)
    result = _cfi(cfg, model, data)
    _cpd(cfg, model, data)
    cfi_bar_chart(result.values, result.to_frame()["feature"].tolist(), cfg.output_path("cfi.svg"))


def cmd_kpca(cfg: RunConfig) -> None:
    data = _load(cfg)
    spec = _load_model(cfg).spec if cfg.model else _spec(cfg)
    model = kpca_fit(data.X, spec, min(cfg.components, data.n), center=True)
    write_frame_csv(model.to_frame(data.sample_ids), cfg.output_path("embedding.csv"))
    F = embedding_function(model)
    contributions = pd.DataFrame({"feature": list(data.feature_names)})
    for r in range(model.n_components):
        contributions[f"pc{r + 1}"] = pc_contribution(F, data.X, r, cfg.pc_scale)
    write_frame_csv(contributions, cfg.output_path("pc_contributions.csv"))
    embedding_scatter(model.embedding, cfg.output_path("kpca.svg"), data.raw_labels, title=f"kernel PCA, {spec.family.value}")


def _label_mask(cfg: RunConfig, data: Dataset) -> np.ndarray:
    if data.raw_labels is None:
        raise UsageError("--label-column is required to select samples by label")
    mask = np.asarray(data.raw_labels, dtype=str) == str(cfg.reference_label)
    if not mask.any():
        raise UsageError(f"no sample carries the label {cfg.reference_label!r}")
    return mask


def cmd_summary(cfg: RunConfig) -> None:
    data = _load(cfg)
    spec = _spec(cfg)
    if cfg.reference == "medoid":
        stat = health_scores(data.X, spec, _label_mask(cfg, data))
    else:
        stat = summary_stat(data.X, spec)
    write_frame_csv(stat.to_frame(data.sample_ids), cfg.output_path("summary.csv"))


def cmd_medoid(cfg: RunConfig) -> None:
    data = _load(cfg)
    spec = _spec(cfg)
    mask = _label_mask(cfg, data) if cfg.reference_label is not None else np.ones(data.n, dtype=bool)
    rows = np.flatnonzero(mask)
    idx = int(rows[kernel_medoid(data.X, spec, mask)])
    write_frame_csv(pd.DataFrame({"sample_id": [data.sample_ids[idx]], "index": [idx]}), cfg.output_path("medoid.csv"))
    logger.info("kernel medoid: %s", data.sample_ids[idx])


def cmd_unifrac(cfg: RunConfig) -> None:
    path = _require(cfg.tree, "--tree")
    try:
        tree = read_newick(path)
    except FileNotFoundError as err:
        raise UsageError(f"tree file not found: {path}") from err
    if cfg.variant == "auto":
        try:
            weight = unifrac_weights(tree, "A")
        except NotPSD as err:
            logger.warning("UniFrac variant A rejected (min eigenvalue %.3e); using variant B", err.min_eigenvalue)
            weight = unifrac_weights(tree, "B")
    else:
        weight = unifrac_weights(tree, cfg.variant)
    write_weight_csv(weight, cfg.output_path("weights.csv"))
    write_frame_csv(pd.DataFrame({"feature": tree.leaf_names}), cfg.output_path("weights_features.csv"))


def cmd_simulate(cfg: RunConfig) -> None:
    data = simulate(SimDesign(design=cfg.design, n=cfg.n, seed=cfg.seed, noise_sd=cfg.noise_sd))
    write_dataset_csv(data, cfg.output_path("simulated.csv"))


def cmd_compare_importance(cfg: RunConfig) -> None:
    comparison = compare_cfi_pi_pdp(cfg.n, cfg.seed)
    write_frame_csv(comparison.table, cfg.output_path("importance.csv"))
    write_frame_csv(comparison.curves, cfg.output_path("importance_curves.csv"))


COMMANDS: Dict[str, Callable[[RunConfig], None]] = {
    "select": cmd_select,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "cfi": cmd_cfi,
    "cpd": cmd_cpd,
    "interpret": cmd_interpret,
    "kpca": cmd_kpca,
    "summary": cmd_summary,
    "medoid": cmd_medoid,
    "unifrac-weights": cmd_unifrac,
    "simulate": cmd_simulate,
    "compare-importance": cmd_compare_importance,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--config", default=None, help="JSON file with default values for any option")
    p.add_argument("--output-dir", dest="output_dir", default=s)
    p.add_argument("--threads", type=int, default=s)
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("-q", "--quiet", action="store_true")


def _data(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--input", default=s, help="counts CSV, first column sample id")
    p.add_argument("--label-column", dest="label_column", default=s)
    p.add_argument("--task", choices=[t.value for t in Task], default=s)
    p.add_argument("--transpose", action="store_true", default=s)
    p.add_argument("--prevalence", type=float, default=s)
    p.add_argument("--min-median", dest="min_median", type=float, default=s)


def _kernel(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--kernel", choices=[f.value for f in KernelFamily], default=s)
    for name in ("a", "b", "sigma2", "c", "t"):
        p.add_argument(f"--{name}", type=float, default=s)
    p.add_argument("--weights", default=s, help="headerless p x p weight matrix CSV")


def build_parser() -> argparse.ArgumentParser:
    s = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="kernel-tools", description="Kernel methods for compositional data")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="hierarchical CV over the default kernel grid")
    _common(p)
    _data(p)
    p.add_argument("--weights", default=s)
    p.add_argument("--n-outer", dest="n_outer", type=int, default=s)
    p.add_argument("--n-inner", dest="n_inner", type=int, default=s)
    p.add_argument("--n-lambdas", dest="n_lambdas", type=int, default=s)

    p = sub.add_parser("fit", help="kernel ridge fit with an explicit kernel")
    _common(p)
    _data(p)
    _kernel(p)
    p.add_argument("--lambda", dest="lam", type=float, default=s)
    p.add_argument("--n-inner", dest="n_inner", type=int, default=s)
    p.add_argument("--n-lambdas", dest="n_lambdas", type=int, default=s)

    for name, text in (("predict", "predict with a fitted model"),
                       ("cfi", "compositional feature influence"),
                       ("cpd", "compositional feature dependence"),
                       ("interpret", "CFI, CPD and CFI chart")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _data(p)
        p.add_argument("--model", default=s)
        p.add_argument("--step", type=float, default=s)
        p.add_argument("--cpd-points", dest="cpd_points", type=int, default=s)

    p = sub.add_parser("kpca", help="kernel PCA embedding and component contributions")
    _common(p)
    _data(p)
    _kernel(p)
    p.add_argument("--model", default=s, help="take the kernel from a fitted model")
    p.add_argument("--components", type=int, default=s)
    p.add_argument("--pc-scale", dest="pc_scale", type=float, default=s)

    for name, text in (("summary", "kernel-distance closeness to a reference"),
                       ("medoid", "kernel medoid of the samples or of one label")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _data(p)
        _kernel(p)
        p.add_argument("--reference-label", dest="reference_label", default=s)
        if name == "summary":
            p.add_argument("--reference", choices=["barycenter", "medoid"], default=s)

    p = sub.add_parser("unifrac-weights", help="UniFrac weight matrix from a Newick tree")
    _common(p)
    p.add_argument("--tree", default=s)
    p.add_argument("--variant", choices=["auto", "A", "B"], default=s)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    _common(p)
    p.add_argument("--design", choices=["blocktv", "lognormal"], default=s)
    p.add_argument("--n", type=int, default=s)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=s)

    p = sub.add_parser("compare-importance", help="CFI versus relative influence and permutation importance")
    _common(p)
    p.add_argument("--n", type=int, default=s)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    flags = dict(vars(args))
    command = flags.pop("command")
    config_path = flags.pop("config", None)
    verbose = flags.pop("verbose", False)
    quiet = flags.pop("quiet", False)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO)
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO)

    try:
        cfg = build_run_config(command, flags, config_path)
        logger.info("running %s (seed=%s, threads=%s)", command, cfg.seed, cfg.threads or "all")
        with parallel_config(n_jobs=cfg.threads or -1):
            COMMANDS[command](cfg)
    except CompositionalKernelError as err:
        print(f"kernel-tools {command}: error: {err}", file=sys.stderr)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
