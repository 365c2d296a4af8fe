"""Seeded generators for the five benchmark designs and the experiment runner.

Designs draw block-structured predictors (AR-correlated blocks, or blocks
sharing a common factor giving within-block correlation 1/2), optionally
trichotomize designated columns at the empirical 1/3 and 2/3 quantiles, and
build the response from a sparse set of active terms.  Regression noise is
calibrated so the signal-to-noise ratio Var(X beta)/sigma^2 equals the
design's target (1.8).

The runner compares a random equal-size grouping (case 1) against the
two-stage pipeline (case 2) across penalty families and correlation levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import QUALITATIVE, QUANTITATIVE, Dataset, Partition, Variable
from .errors import InvalidDesign
from .metrics import SelectionTruth, classification_metrics, rmse, selection_metrics
from .solvers import LOGISTIC, SQUARED_ERROR
from .two_stage import TwoStageConfig, discover_groups, fit_stage_two, random_equal_partition

AR = "ar"
FACTOR = "factor"

CONTINUOUS = "continuous"
DISCRETE = "discrete"
MIXED = "mixed"

TRICHOTOMY_LEVELS = ("1", "2", "3")

# six-block template shared by designs 2-5: (size, correlation structure, type)
_TEMPLATE = (
    (6, AR, CONTINUOUS),
    (7, FACTOR, DISCRETE),
    (8, AR, MIXED),
    (9, FACTOR, CONTINUOUS),
    (10, AR, DISCRETE),
    (10, FACTOR, MIXED),
)


@dataclass(frozen=True)
class BlockSpec:
    size: int
    structure: str  # AR or FACTOR
    var_type: str  # CONTINUOUS, DISCRETE, or MIXED


@dataclass(frozen=True)
class Term:
    """One active entry of the generating model.

    ``level`` is None for a quantitative term; for a trichotomized variable it
    is the 0-based category code whose indicator carries the coefficient.
    """

    var: int
    level: int | None
    value: float


@dataclass(frozen=True)
class SimDesign:
    id: int
    n: int
    p: int
    blocks: tuple[BlockSpec, ...]
    rho: float
    beta_mode: str  # "fixed", "uniform", or "signed_eta"
    beta_scale: float  # half-width for "uniform" mode
    fixed_terms: tuple[Term, ...]  # "fixed" mode only
    active_slots: tuple[tuple[int, int | None], ...]  # (var, level) for random modes
    response_kind: str
    snr: float = 1.8

    def __post_init__(self):
        if sum(b.size for b in self.blocks) != self.p:
            raise InvalidDesign("block sizes must sum to p")
        if not 0.0 < self.rho < 1.0:
            raise InvalidDesign("rho must lie in (0, 1)")
        if self.response_kind == "continuous" and self.snr <= 0:
            raise InvalidDesign("snr must be positive for regression designs")

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)


@dataclass(frozen=True)
class SimInstance:
    dataset: Dataset
    truth: SelectionTruth
    true_partition: Partition
    coefficients: tuple[Term, ...]
    active_groups: frozenset[int]
    noise_sd: float | None


_DESIGN1_TERMS = (
    # (1-based variable, value); zeros inside active groups stay listed
    (1, 0.1), (2, 0.0), (3, 8.0),
    (4, 0.4), (5, 0.3), (6, 0.2), (7, 7.0),
    (12, 4.0), (13, 5.0), (14, 6.0),
    (15, 3.0), (16, 0.0), (17, 0.5), (18, 0.0),
    (19, 0.2), (20, 0.4), (21, 0.6),
    (29, 9.0), (30, 10.0),
)

_DESIGN2_SLOTS = (
    [(v, None) for v in (1, 2, 3, 4, 5, 6)]
    + [(v, None) for v in (14, 16, 18, 20)]
    + [(v, None) for v in (23, 24, 25, 26, 27, 28)]
    + [(46, 0), (48, 1), (50, 1)]
)

_DESIGN3_SLOTS = (
    [(v, None) for v in (1, 2, 3)]
    + [(v, None) for v in (14, 16, 18)]
    + [(v, None) for v in (23, 24, 25, 26, 27, 28)]
    + [(46, 0), (48, 1), (50, 1)]
    + [(v, None) for v in (91, 93, 95)]
    + [(100, 0)]
    + [(150, 0), (150, 1)]
)

_DESIGN45_SLOTS = (
    [(v, None) for v in (1, 2, 3, 4, 5, 6)]
    + [(v, None) for v in (15, 16, 17)]
    + [(v, None) for v in (31, 32, 33)]
    + [(v, None) for v in (46, 47, 48)]
)


def _zero_based(slots) -> tuple[tuple[int, int | None], ...]:
    return tuple((v - 1, lvl) for v, lvl in slots)


def sim_design(design_id: int, rho: float, n: int | None = None, p: int | None = None) -> SimDesign:
    """Design parameters; n and p may override the published dimensions.

    For designs built from the six-block template, p must be a multiple of 50
    (the template width).
    """
    if design_id == 1:
        blocks = tuple(BlockSpec(s, AR, CONTINUOUS) for s in (3, 4, 4, 3, 4, 3, 4, 3, 2))
        return SimDesign(
            id=1, n=n or 100, p=30, blocks=blocks, rho=rho,
            beta_mode="fixed", beta_scale=0.0,
            fixed_terms=tuple(Term(v - 1, None, val) for v, val in _DESIGN1_TERMS),
            active_slots=(), response_kind="continuous",
        )
    if design_id not in (2, 3, 4, 5):
        raise InvalidDesign(f"design id must be 1..5, got {design_id}")

    defaults = {2: (100, 50), 3: (100, 150), 4: (200, 2000), 5: (200, 400)}
    n = n or defaults[design_id][0]
    p = p or defaults[design_id][1]
    if p % 50 != 0:
        raise InvalidDesign("template designs need p to be a multiple of 50")
    repeats = p // 50
    if design_id in (4, 5):
        blocks = tuple(
            BlockSpec(size, AR, CONTINUOUS) for size, _, _ in _TEMPLATE * repeats
        )
    else:
        blocks = tuple(BlockSpec(*spec) for spec in _TEMPLATE * repeats)

    if design_id == 2:
        mode, scale, slots = "uniform", 5.0, _DESIGN2_SLOTS
    elif design_id == 3:
        mode, scale, slots = "uniform", 7.0, _DESIGN3_SLOTS
    else:
        mode, scale, slots = "signed_eta", 0.0, _DESIGN45_SLOTS
    return SimDesign(
        id=design_id, n=n, p=p, blocks=blocks, rho=rho,
        beta_mode=mode, beta_scale=scale, fixed_terms=(),
        active_slots=_zero_based(slots),
        response_kind="binary" if design_id == 5 else "continuous",
    )


def _column_types(block: BlockSpec) -> list[str]:
    if block.var_type == CONTINUOUS:
        return [CONTINUOUS] * block.size
    if block.var_type == DISCRETE:
        return [DISCRETE] * block.size
    # mixed blocks alternate, starting continuous
    return [CONTINUOUS if i % 2 == 0 else DISCRETE for i in range(block.size)]


def _draw_block(rng: np.random.Generator, n: int, block: BlockSpec, rho: float) -> np.ndarray:
    s = block.size
    if block.structure == AR:
        cov = rho ** np.abs(np.subtract.outer(np.arange(s), np.arange(s)))
        return rng.standard_normal((n, s)) @ np.linalg.cholesky(cov).T
    shared = rng.standard_normal((n, 1))
    return (rng.standard_normal((n, s)) + shared) / np.sqrt(2.0)


def _trichotomize(col: np.ndarray) -> np.ndarray:
    q1, q2 = np.quantile(col, [1 / 3, 2 / 3])
    return (col >= q1).astype(int) + (col > q2).astype(int)


def _draw_terms(design: SimDesign, rng: np.random.Generator) -> tuple[Term, ...]:
    if design.beta_mode == "fixed":
        return design.fixed_terms
    if design.beta_mode == "uniform":
        vals = rng.uniform(-design.beta_scale, design.beta_scale, len(design.active_slots))
        return tuple(Term(v, lvl, float(x)) for (v, lvl), x in zip(design.active_slots, vals))
    # signed_eta: c * (-1)^W * (eta + |Z|)
    eta = 4 * math.log(design.n) / math.sqrt(design.n)
    k = len(design.active_slots)
    signs = np.where(rng.random(k) < 0.4, -1.0, 1.0)
    mags = eta + np.abs(rng.standard_normal(k))
    c = rng.uniform(0.5, 3.0, k)
    return tuple(
        Term(v, lvl, float(s * m * ci))
        for (v, lvl), s, m, ci in zip(design.active_slots, signs, mags, c)
    )


def _linear_predictor(raw: np.ndarray, types: list[str], codes: dict[int, np.ndarray],
                      terms) -> np.ndarray:
    s = np.zeros(raw.shape[0])
    for t in terms:
        if t.value == 0.0:
            continue
        if t.level is None:
            s += t.value * raw[:, t.var]
        else:
            s += t.value * (codes[t.var] == t.level)
    return s


def _signal_variance_mc(design: SimDesign, terms, rng: np.random.Generator,
                        mc_rows: int = 40000) -> float:
    """Monte Carlo Var(X beta) over the blocks that carry active terms."""
    s_mc = np.zeros(mc_rows)
    start = 0
    for block in design.blocks:
        stop = start + block.size
        block_terms = [t for t in terms if start <= t.var < stop and t.value != 0.0]
        if block_terms:
            x = _draw_block(rng, mc_rows, block, design.rho)
            for t in block_terms:
                col = x[:, t.var - start]
                if t.level is None:
                    s_mc += t.value * col
                else:
                    s_mc += t.value * (_trichotomize(col) == t.level)
        start = stop
    return float(np.var(s_mc))


def generate(design: SimDesign, seed: int = 0) -> SimInstance:
    """One seeded draw from the design: dataset, truth, and realized terms."""
    root = np.random.default_rng(seed)
    rng_x, rng_beta, rng_noise, rng_mc = root.spawn(4)

    raw = np.empty((design.n, design.p))
    types: list[str] = []
    start = 0
    block_label = np.empty(design.p, dtype=int)
    for b, block in enumerate(design.blocks, start=1):
        stop = start + block.size
        raw[:, start:stop] = _draw_block(rng_x, design.n, block, design.rho)
        types.extend(_column_types(block))
        block_label[start:stop] = b
        start = stop

    codes = {j: _trichotomize(raw[:, j]) for j in range(design.p) if types[j] == DISCRETE}
    terms = _draw_terms(design, rng_beta)
    for t in terms:
        if (t.level is None) != (types[t.var] == CONTINUOUS):
            raise InvalidDesign(f"term for variable {t.var} does not match its type")
    signal = _linear_predictor(raw, types, codes, terms)

    noise_sd = None
    if design.response_kind == "continuous":
        var_signal = _signal_variance_mc(design, terms, rng_mc)
        noise_sd = math.sqrt(var_signal / design.snr)
        y = signal + rng_noise.normal(0.0, noise_sd, design.n)
    else:
        t5 = 5.0 * signal
        g = np.exp((t5 - 2.0) - np.logaddexp(0.0, t5 - 3.0)) - 1.5
        prob = 1.0 / (1.0 + np.exp(-g))
        y = rng_noise.binomial(1, prob).astype(float)

    variables = []
    for j in range(design.p):
        name = f"x{j + 1}"
        if types[j] == CONTINUOUS:
            variables.append(Variable(name, QUANTITATIVE, raw[:, j]))
        else:
            variables.append(Variable(name, QUALITATIVE, codes[j], TRICHOTOMY_LEVELS))
    dataset = Dataset(tuple(variables), y, design.response_kind)

    active = frozenset(t.var for t in terms if t.value != 0.0)
    active_groups = frozenset(int(block_label[t.var]) for t in terms if t.value != 0.0)
    return SimInstance(
        dataset=dataset,
        truth=SelectionTruth(active, design.p),
        true_partition=Partition(block_label, len(design.blocks)),
        coefficients=terms,
        active_groups=active_groups,
        noise_sd=noise_sd,
    )


CASE_RANDOM = "random_groups"
CASE_TWO_STAGE = "two_stage"


@dataclass(frozen=True)
class ExperimentRecord:
    design: int
    family: str
    rho: float
    case: str
    replicate: int
    metric: str
    value: float


def _replicate_seed(base_seed: int, rho_index: int, replicate: int) -> int:
    seq = np.random.SeedSequence(base_seed, spawn_key=(rho_index, replicate))
    return int(seq.generate_state(1)[0])


def _pipeline_records(design, inst, data, part_vars, kept, family, case, rep, cfg):
    records = []
    cfg_f = replace(cfg, family=family)
    z, fit, cv = fit_stage_two(data, part_vars, cfg_f)
    best = fit.coefficients_at(cv.best_lambda)
    selected_local = [
        j for j, (lo, hi) in enumerate(z.column_map) if np.any(best.beta[lo:hi] != 0.0)
    ]
    selected = [kept[j] for j in selected_local]
    sens, spec = selection_metrics(inst.truth, selected)

    def rec(metric, value):
        records.append(
            ExperimentRecord(design.id, family, design.rho, case, rep, metric, float(value))
        )

    if design.response_kind == "continuous":
        rec("rmse", rmse(data.y, cv.oof_prediction))
    else:
        acc, se, sp, auc = classification_metrics(data.y, cv.oof_prediction)
        rec("accuracy", acc)
        rec("sensitivity", se)
        rec("specificity", sp)
        rec("auc", auc)
    rec("sel_sensitivity", sens)
    rec("sel_specificity", spec)
    return records


def run_replicate(design: SimDesign, families, seed: int, rep: int,
                  cfg: TwoStageConfig) -> list[ExperimentRecord]:
    """Both cases for every family on one generated instance."""
    inst = generate(design, seed)
    d = inst.dataset
    cfg_rep = replace(cfg, loss=LOGISTIC if design.response_kind == "binary" else SQUARED_ERROR,
                      seed=seed)
    stage1 = discover_groups(d, cfg_rep)
    k = stage1.partition.k
    random_part = random_equal_partition(d.p, k, seed=seed + 1)

    records = []
    for family in families:
        records.extend(
            _pipeline_records(design, inst, d, random_part, tuple(range(d.p)),
                              family, CASE_RANDOM, rep, cfg_rep)
        )
        records.extend(
            _pipeline_records(design, inst, stage1.data, stage1.partition, stage1.kept,
                              family, CASE_TWO_STAGE, rep, cfg_rep)
        )
    return records


def run_experiment(
    design_id: int,
    families=("grlasso", "grscad", "grmcp", "sgl"),
    rhos=(0.2, 0.5, 0.8),
    replicates: int = 50,
    seed: int = 0,
    n: int | None = None,
    p: int | None = None,
    cfg: TwoStageConfig | None = None,
    n_jobs: int = 1,
) -> list[ExperimentRecord]:
    """Per-replicate metric records for every (family, rho, case) cell."""
    if replicates < 1:
        raise InvalidDesign("replicates must be >= 1")
    cfg = cfg or TwoStageConfig()
    tasks = []
    for ri, rho in enumerate(rhos):
        design = sim_design(design_id, rho, n=n, p=p)
        for rep in range(replicates):
            tasks.append((design, _replicate_seed(seed, ri, rep), rep))

    if n_jobs == 1:
        chunks = [run_replicate(design, families, s, rep, cfg) for design, s, rep in tasks]
    else:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=n_jobs)(
            delayed(run_replicate)(design, families, s, rep, cfg) for design, s, rep in tasks
        )
    return [r for chunk in chunks for r in chunk]


def aggregate(records) -> list[dict]:
    """Mean/sd summary rows keyed by (design, family, rho, case, metric)."""
    cells: dict[tuple, list[float]] = {}
    order = []
    for r in records:
        key = (r.design, r.family, r.rho, r.case, r.metric)
        if key not in cells:
            cells[key] = []
            order.append(key)
        cells[key].append(r.value)
    rows = []
    for key in order:
        vals = np.asarray(cells[key], dtype=float)
        design, family, rho, case, metric = key
        rows.append(
            {
                "design": design,
                "family": family,
                "rho": rho,
                "case": case,
                "metric": metric,
                "mean": float(np.mean(vals)),
                "sd": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
                "replicates": int(vals.size),
            }
        )
    return rows
