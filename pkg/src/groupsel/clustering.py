"""Variable clustering: mixed-data factorization, agglomeration, stability.

A cluster's homogeneity is the top eigenvalue of the factorization of its
standardized/expanded columns; merging proceeds greedily on the dissimilarity
H(A) + H(B) - H(A u B).  The number of clusters is chosen by bootstrap
stability: recluster resampled rows and score the agreement (ARI) with the
initial tree at every candidate cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Partition, standardize
from .errors import (
    ConstantColumn,
    DegenerateInput,
    EmptyCategory,
    OutOfRange,
    SizeMismatch,
)


@dataclass(frozen=True)
class PcamixResult:
    """SVD of the scaled mixed-data matrix; eigenvalues are squared singulars."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class Dendrogram:
    """Merge history: leaves are 0..p-1, merge i creates node p+i.

    Each merge record is (left_node, right_node, height) where height is the
    dissimilarity of the merged pair at merge time.
    """

    merges: tuple[tuple[int, int, float], ...]
    leaf_names: tuple[str, ...]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_names)

    def to_records(self) -> list[dict]:
        return [
            {"left": int(l), "right": int(r), "height": float(h)} for l, r, h in self.merges
        ]


@dataclass(frozen=True)
class StabilityCurve:
    cluster_counts: tuple[int, ...]
    mean_ari: tuple[float, ...]
    chosen_m: int


def _scaled_matrix(d: Dataset) -> np.ndarray:
    """Standardized/expanded matrix divided by sqrt(n)."""
    try:
        sm = standardize(d)
    except (ConstantColumn, EmptyCategory) as exc:
        raise DegenerateInput(str(exc)) from exc
    return sm.z / np.sqrt(sm.n)


def pcamix(subset: Dataset) -> PcamixResult:
    """Singular value decomposition of the scaled mixed-data matrix."""
    if subset.n < 2:
        raise DegenerateInput("need at least 2 observations")
    w = _scaled_matrix(subset)
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    return PcamixResult(u=u, singular_values=s, v=vt.T, eigenvalues=s**2)


def _lambda1(gram: np.ndarray, max_dense: int = 64) -> float:
    """Top eigenvalue of a symmetric PSD matrix."""
    k = gram.shape[0]
    if k == 1:
        return float(gram[0, 0])
    if k == 2:
        a, b, c = gram[0, 0], gram[1, 1], gram[0, 1]
        return float((a + b) / 2 + np.sqrt((a - b) ** 2 / 4 + c * c))
    if k <= max_dense:
        return float(np.linalg.eigvalsh(gram)[-1])
    # power iteration; PSD so the iterate converges to the top eigenvalue
    v = np.full(k, 1.0 / np.sqrt(k))
    lam = 0.0
    for _ in range(1000):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (gram @ v))
        if abs(lam_new - lam) < 1e-9:
            return lam_new
        lam = lam_new
    return lam


class _GramContext:
    """Gram matrix of the scaled columns plus per-variable column blocks."""

    def __init__(self, d: Dataset):
        w = _scaled_matrix(d)
        self.gram = w.T @ w
        self.blocks = []
        start = 0
        for v in d.variables:
            width = v.n_expanded
            self.blocks.append(np.arange(start, start + width))
            start += width

    def homogeneity(self, members) -> float:
        cols = np.concatenate([self.blocks[int(j)] for j in members])
        return _lambda1(self.gram[np.ix_(cols, cols)])

    def lambda1_cols(self, cols: np.ndarray) -> float:
        return _lambda1(self.gram[np.ix_(cols, cols)])


def homogeneity(subset: Dataset) -> float:
    """First factorization eigenvalue of the cluster's variables."""
    return _GramContext(subset).homogeneity(range(subset.p))


def dissimilarity(d: Dataset, a, b) -> float:
    """H(a) + H(b) - H(a u b) for disjoint variable-index clusters of d."""
    a = [int(i) for i in a]
    b = [int(i) for i in b]
    if set(a) & set(b):
        raise DegenerateInput("clusters must be disjoint")
    ctx = _GramContext(d.subset(a + b))
    ia = list(range(len(a)))
    ib = list(range(len(a), len(a) + len(b)))
    raw = ctx.homogeneity(ia) + ctx.homogeneity(ib) - ctx.homogeneity(ia + ib)
    return max(raw, 0.0)


def _agglomerate(ctx: _GramContext) -> tuple[tuple[int, int, float], ...]:
    """Greedy merging on cached cluster homogeneities.

    Pairs are keyed by the smallest leaf index of each cluster; ties in the
    minimum dissimilarity break toward the lowest (left, right) key pair.
    """
    p = len(ctx.blocks)
    cols = {i: ctx.blocks[i] for i in range(p)}
    homog = {i: ctx.lambda1_cols(ctx.blocks[i]) for i in range(p)}
    node = {i: i for i in range(p)}
    active = sorted(cols)

    pair_d: dict[tuple[int, int], float] = {}
    pair_h: dict[tuple[int, int], float] = {}

    def add_pair(i: int, j: int) -> None:
        key = (i, j) if i < j else (j, i)
        union = np.concatenate((cols[key[0]], cols[key[1]]))
        lam = ctx.lambda1_cols(union)
        pair_h[key] = lam
        pair_d[key] = max(homog[key[0]] + homog[key[1]] - lam, 0.0)

    for ai in range(len(active)):
        for bi in range(ai + 1, len(active)):
            add_pair(active[ai], active[bi])

    merges = []
    for step in range(p - 1):
        best = min(pair_d, key=lambda k: (pair_d[k], k))
        i, j = best
        merges.append((node[i], node[j], pair_d[best]))
        # cluster keyed by i (the smaller leaf) absorbs j
        homog[i] = pair_h[best]
        cols[i] = np.concatenate((cols[i], cols[j]))
        node[i] = p + step
        del cols[j], homog[j], node[j]
        for key in [k for k in pair_d if i in k or j in k]:
            del pair_d[key], pair_h[key]
        for other in cols:
            if other != i:
                add_pair(i, other)
    return tuple(merges)


def hierarchical_cluster(d: Dataset) -> Dendrogram:
    """Agglomerative variable clustering; merges the least-dissimilar pair."""
    if d.p < 2:
        raise DegenerateInput("need at least 2 variables to cluster")
    merges = _agglomerate(_GramContext(d))
    return Dendrogram(merges, d.column_names)


def cut_tree(dend: Dendrogram, m: int) -> Partition:
    """Partition obtained by undoing the last m-1 merges.

    Cluster labels 1..m are assigned by order of each cluster's smallest leaf.
    """
    p = dend.n_leaves
    if not 1 <= m <= p:
        raise OutOfRange(f"m must be in 1..{p}, got {m}")
    parent = list(range(2 * p - 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(p - m):
        left, right, _ = dend.merges[step]
        new = p + step
        parent[find(left)] = new
        parent[find(right)] = new

    roots = [find(i) for i in range(p)]
    label: dict[int, int] = {}
    assignment = np.empty(p, dtype=int)
    for i, r in enumerate(roots):
        if r not in label:
            label[r] = len(label) + 1
        assignment[i] = label[r]
    return Partition(assignment, m)


def _check_same_size(a: Partition, b: Partition) -> None:
    if a.size != b.size:
        raise SizeMismatch(f"partitions cover {a.size} and {b.size} elements")


def _contingency(a: Partition, b: Partition) -> np.ndarray:
    width = b.k + 1
    codes = a.assignment * width + b.assignment
    counts = np.bincount(codes, minlength=(a.k + 1) * width)
    return counts.reshape(a.k + 1, width)[1:, 1:]


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def rand_index(a: Partition, b: Partition) -> float:
    """Fraction of element pairs on which the two partitions agree."""
    _check_same_size(a, b)
    n = a.size
    nij = _contingency(a, b)
    same_same = _comb2(nij).sum()
    total = _comb2(n)
    agreements = total + 2 * same_same - _comb2(nij.sum(axis=1)).sum() - _comb2(nij.sum(axis=0)).sum()
    return float(agreements / total)


def adjusted_rand_index(a: Partition, b: Partition) -> float:
    """Chance-corrected pair agreement via the contingency-table closed form."""
    _check_same_size(a, b)
    nij = _contingency(a, b)
    sum_ij = _comb2(nij).sum()
    sum_a = _comb2(nij.sum(axis=1)).sum()
    sum_b = _comb2(nij.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(a.size)
    denom = (sum_a + sum_b) / 2 - expected
    if denom == 0.0:
        return 1.0  # both partitions trivial (and necessarily identical)
    return float((sum_ij - expected) / denom)


def _bootstrap_context(d: Dataset, rng: np.random.Generator, max_retries: int = 10):
    """Gram context for a row resample; redraws if a column degenerates."""
    for _ in range(max_retries + 1):
        rows = rng.integers(0, d.n, size=d.n)
        try:
            return _GramContext(d.take_rows(rows))
        except (DegenerateInput, EmptyCategory, ConstantColumn):
            continue
    raise DegenerateInput(f"no valid bootstrap resample after {max_retries} retries")


def stability_with_tree(
    d: Dataset,
    j_boot: int = 50,
    seed: int = 0,
    max_candidates: int = 30,
) -> tuple[StabilityCurve, Dendrogram]:
    """Stability curve plus the initial dendrogram it was scored against."""
    if d.p < 3:
        raise DegenerateInput("stability selection needs at least 3 variables")
    if j_boot < 1:
        raise OutOfRange("j_boot must be >= 1")
    init = hierarchical_cluster(d)
    counts = list(range(2, min(d.p - 1, max_candidates) + 1))
    init_cuts = {m: cut_tree(init, m) for m in counts}

    ari_sum = np.zeros(len(counts))
    for rep in range(j_boot):
        rng = np.random.default_rng(seed + rep)
        ctx = _bootstrap_context(d, rng)
        boot = Dendrogram(_agglomerate(ctx), d.column_names)
        for mi, m in enumerate(counts):
            ari_sum[mi] += adjusted_rand_index(cut_tree(boot, m), init_cuts[m])
    mean_ari = ari_sum / j_boot
    chosen = counts[int(np.argmax(mean_ari))]  # argmax takes the first (smallest m) on ties
    curve = StabilityCurve(tuple(counts), tuple(float(x) for x in mean_ari), chosen)
    return curve, init


def stability_select(
    d: Dataset,
    j_boot: int = 50,
    seed: int = 0,
    max_candidates: int = 30,
) -> StabilityCurve:
    """Choose the cluster count by mean bootstrap ARI against the initial tree.

    For each bootstrap resample the variables are reclustered from scratch;
    both trees are cut at every candidate count m and the agreement recorded.
    Ties in the argmax break toward the smaller m.
    """
    curve, _ = stability_with_tree(d, j_boot=j_boot, seed=seed, max_candidates=max_candidates)
    return curve
