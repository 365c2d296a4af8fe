"""Two-stage pipeline: screen (when wide), cluster, then fit a group model.

Stage 1 discovers the group structure: for p > n the variables are first
reduced by distance-correlation screening, then hierarchically clustered with
the cluster count picked by bootstrap stability.  Stage 2 runs the requested
group-penalized model over the discovered partition with cross-validated
lambda.  Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .clustering import Dendrogram, StabilityCurve, cut_tree, stability_with_tree
from .data import Dataset, Partition, StandardizedMatrix, expand_groups, standardize
from .errors import EmptyScreenResult, InvalidSpec, OutOfRange
from .screening import DCSIS, ScreeningResult, screen
from .solvers import (
    GROUP_FAMILIES,
    LOGISTIC,
    SQUARED_ERROR,
    CvResult,
    FitResult,
    GroupPenaltySpec,
    cross_validate,
    default_lambda_grid,
    fit_group,
    lambda_max,
)


@dataclass(frozen=True)
class TwoStageConfig:
    family: str = "grlasso"
    loss: str = SQUARED_ERROR
    gamma: float | None = None
    alpha: float | None = None
    screen_threshold: int | None = None  # screen iff p > threshold; None means p > n
    screen_method: str = DCSIS
    k_factor: float | None = None  # None: 1, or 2 once p >= 1000
    j_boot: int = 50
    max_candidates: int = 30
    cv_folds: int = 10
    n_lambda: int = 100
    lambda_min_ratio: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in GROUP_FAMILIES:
            raise InvalidSpec(f"unknown group family {self.family!r}")
        if self.loss not in (SQUARED_ERROR, LOGISTIC):
            raise InvalidSpec(f"unknown loss {self.loss!r}")
        if self.cv_folds < 2:
            raise InvalidSpec("cv_folds must be >= 2")
        if self.j_boot < 1:
            raise InvalidSpec("j_boot must be >= 1")

    def penalty_spec(self) -> GroupPenaltySpec:
        gamma = self.gamma if self.family in ("grscad", "grmcp") else None
        alpha = self.alpha if self.family == "sgl" else None
        return GroupPenaltySpec(self.family, 0.0, gamma=gamma, alpha=alpha)


@dataclass(frozen=True)
class TwoStageReport:
    screened: ScreeningResult | None
    kept_variables: tuple[int, ...]  # original variable indices entering stage 2
    partition: Partition  # over kept variables
    stability: StabilityCurve | None
    dendrogram: Dendrogram | None
    fit: FitResult
    cv: CvResult
    best_lambda: float
    selected_variables: tuple[int, ...]  # original variable indices
    selected_names: tuple[str, ...]

    def to_dict(self) -> dict:
        """JSON-ready report document."""
        coef = self.fit.coefficients_at(self.best_lambda)
        doc = {
            "schema_version": 1,
            "kept_variables": list(self.kept_variables),
            "partition": {
                "assignment": self.partition.assignment.tolist(),
                "k": self.partition.k,
            },
            "best_lambda": self.best_lambda,
            "cv_curve": {
                "lambda": self.fit.lambdas.tolist(),
                "mean_loss": self.cv.cv_curve.tolist(),
            },
            "coefficients": {
                "intercept": coef.intercept,
                "beta": coef.beta.tolist(),
                "group_norms": coef.group_norms.tolist(),
            },
            "selected_variables": list(self.selected_variables),
            "selected_names": list(self.selected_names),
        }
        if self.screened is not None:
            doc["screening"] = {
                "method": self.screened.method,
                "d": self.screened.d,
                "kept": self.screened.kept.tolist(),
                "scores": self.screened.scores.tolist(),
            }
        if self.stability is not None:
            doc["stability"] = {
                "cluster_counts": list(self.stability.cluster_counts),
                "mean_ari": list(self.stability.mean_ari),
                "chosen_m": self.stability.chosen_m,
            }
        if self.dendrogram is not None:
            doc["dendrogram"] = self.dendrogram.to_records()
        return doc


@dataclass(frozen=True)
class StageOneResult:
    screened: ScreeningResult | None
    kept: tuple[int, ...]
    data: Dataset  # kept-variable dataset
    partition: Partition
    stability: StabilityCurve | None
    dendrogram: Dendrogram | None


def effective_k_factor(cfg: TwoStageConfig, p: int) -> float:
    if cfg.k_factor is not None:
        return cfg.k_factor
    return 2.0 if p >= 1000 else 1.0


def discover_groups(d: Dataset, cfg: TwoStageConfig,
                    fixed_partition: Partition | None = None) -> StageOneResult:
    """Stage 1: optional screening, then stability-selected clustering."""
    threshold = cfg.screen_threshold if cfg.screen_threshold is not None else d.n
    screened = None
    kept = tuple(range(d.p))
    data = d
    if d.p > threshold:
        z = standardize(d)
        screened = screen(z, d.y, cfg.screen_method, effective_k_factor(cfg, d.p))
        if screened.kept.size == 0:
            raise EmptyScreenResult("screening kept no variables")
        kept = tuple(int(i) for i in np.sort(screened.kept))
        data = d.subset(kept)

    if fixed_partition is not None:
        if fixed_partition.size != data.p:
            raise InvalidSpec("fixed partition does not cover the stage-2 variables")
        return StageOneResult(screened, kept, data, fixed_partition, None, None)

    curve, dend = stability_with_tree(
        data, j_boot=cfg.j_boot, seed=cfg.seed, max_candidates=cfg.max_candidates
    )
    partition = cut_tree(dend, curve.chosen_m)
    return StageOneResult(screened, kept, data, partition, curve, dend)


def fit_stage_two(data: Dataset, part: Partition, cfg: TwoStageConfig):
    """Stage 2: group-penalized path with cross-validated lambda."""
    z = standardize(data)
    part_cols = expand_groups(part, z.column_map)
    spec = cfg.penalty_spec()
    lmax = lambda_max(
        z, data.y, cfg.loss, part_cols, spec.family, alpha=spec.alpha
    )
    grid = default_lambda_grid(
        lmax, cfg.n_lambda, cfg.lambda_min_ratio, p_over_n=z.n_columns > z.n
    )
    cv = cross_validate(
        z, data.y, cfg.loss, part_cols, spec, grid, folds=cfg.cv_folds, seed=cfg.seed + 1
    )
    fit = fit_group(z, data.y, cfg.loss, part_cols, spec, grid)
    return z, fit, cv


def _selected_from_fit(z: StandardizedMatrix, fit: FitResult, best_lambda: float) -> list[int]:
    coef = fit.coefficients_at(best_lambda)
    out = []
    for j, (lo, hi) in enumerate(z.column_map):
        if np.any(coef.beta[lo:hi] != 0.0):
            out.append(j)
    return out


def run_two_stage(d: Dataset, cfg: TwoStageConfig,
                  fixed_partition: Partition | None = None) -> TwoStageReport:
    """Full pipeline; ``fixed_partition`` is a test hook that skips stage 1."""
    stage1 = discover_groups(d, cfg, fixed_partition)
    z, fit, cv = fit_stage_two(stage1.data, stage1.partition, cfg)
    selected_local = _selected_from_fit(z, fit, cv.best_lambda)
    selected = tuple(stage1.kept[j] for j in selected_local)
    names = tuple(d.variables[j].name for j in selected)
    return TwoStageReport(
        screened=stage1.screened,
        kept_variables=stage1.kept,
        partition=stage1.partition,
        stability=stage1.stability,
        dendrogram=stage1.dendrogram,
        fit=fit,
        cv=cv,
        best_lambda=cv.best_lambda,
        selected_variables=selected,
        selected_names=names,
    )


def random_equal_partition(p: int, k: int, seed: int = 0) -> Partition:
    """Random split of p variables into k groups with sizes differing by <= 1."""
    if not 1 <= k <= p:
        raise OutOfRange(f"k must be in 1..{p}, got {k}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(p)
    assignment = np.empty(p, dtype=int)
    base, extra = divmod(p, k)
    start = 0
    for label in range(1, k + 1):
        size = base + (1 if label <= extra else 0)
        assignment[perm[start:start + size]] = label
        start += size
    return Partition(assignment, k)
