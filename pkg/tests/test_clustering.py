import itertools

import numpy as np
import pytest

from groupsel.clustering import (
    Dendrogram,
    adjusted_rand_index,
    cut_tree,
    dissimilarity,
    hierarchical_cluster,
    homogeneity,
    pcamix,
    rand_index,
    stability_select,
)
from groupsel.data import Dataset, Partition, Variable, standardize
from groupsel.errors import DegenerateInput, OutOfRange, SizeMismatch


def quant_dataset(columns, names=None):
    names = names or [f"v{i}" for i in range(len(columns))]
    variables = tuple(
        Variable(name, "quantitative", np.asarray(col, dtype=float))
        for name, col in zip(names, columns)
    )
    return Dataset(variables, np.zeros(len(columns[0])), "continuous")


def mixed_dataset(rng, n, p):
    variables = []
    for j in range(p):
        if j % 3 == 2:
            codes = rng.integers(0, 3, n)
            while len(np.unique(codes)) < 2:
                codes = rng.integers(0, 3, n)
            variables.append(Variable(f"v{j}", "qualitative", codes, ("a", "b", "c")))
        else:
            variables.append(Variable(f"v{j}", "quantitative", rng.standard_normal(n)))
    return Dataset(tuple(variables), np.zeros(n), "continuous")


class TestPcamix:
    def test_single_standardized_quantitative(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(100)
        ds = quant_dataset([(x - x.mean()) / x.std()])
        res = pcamix(ds)
        assert res.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)

    def test_two_identical_variables(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(60)
        res = pcamix(quant_dataset([x, x.copy()]))
        assert res.eigenvalues[0] == pytest.approx(2.0, abs=1e-10)
        assert res.eigenvalues[1] == pytest.approx(0.0, abs=1e-10)

    def test_eigenvalues_match_correlation_matrix(self):
        rng = np.random.default_rng(2)
        cov = np.array([[1.0, 0.6, 0.2], [0.6, 1.0, -0.3], [0.2, -0.3, 1.0]])
        x = rng.multivariate_normal(np.zeros(3), cov, size=250)
        ds = quant_dataset([x[:, 0], x[:, 1], x[:, 2]])
        res = pcamix(ds)
        z = standardize(ds).z
        corr = z.T @ z / z.shape[0]
        expected = np.sort(np.linalg.eigvalsh(corr))[::-1]
        assert res.eigenvalues == pytest.approx(expected, abs=1e-8)

    def test_reconstruction(self):
        rng = np.random.default_rng(3)
        ds = mixed_dataset(rng, 40, 4)
        res = pcamix(ds)
        w = standardize(ds).z / np.sqrt(40)
        approx = res.u @ np.diag(res.singular_values) @ res.v.T
        assert np.linalg.norm(w - approx) < 1e-8 * np.linalg.norm(w)

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            pcamix(quant_dataset([np.ones(10)]))


class TestHomogeneity:
    def test_single_variable(self):
        rng = np.random.default_rng(4)
        assert homogeneity(quant_dataset([rng.standard_normal(50)])) == pytest.approx(1.0)

    def test_duplicated_variables_attain_maximum(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(50)
        for m in (2, 3, 5):
            ds = quant_dataset([x.copy() for _ in range(m)])
            assert homogeneity(ds) == pytest.approx(float(m), abs=1e-10)

    def test_two_correlated_closed_form(self):
        rng = np.random.default_rng(6)
        for rho in (0.2, -0.5, 0.85):
            x = rng.standard_normal(300)
            y = rho * x + np.sqrt(1 - rho**2) * rng.standard_normal(300)
            ds = quant_dataset([x, y])
            z = standardize(ds).z
            r = float(z[:, 0] @ z[:, 1]) / 300
            assert homogeneity(ds) == pytest.approx(1 + abs(r), abs=1e-8)

    def test_bounded_by_cluster_size(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            ds = mixed_dataset(rng, 35, 4)
            assert homogeneity(ds) <= 4 + 1e-8


class TestDissimilarity:
    def test_identical_singletons(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(40)
        ds = quant_dataset([x, x.copy()])
        assert dissimilarity(ds, [0], [1]) == pytest.approx(0.0, abs=1e-10)

    def test_independent_population_value(self):
        rng = np.random.default_rng(9)
        n = 10000
        ds = quant_dataset([rng.standard_normal(n), rng.standard_normal(n)])
        assert dissimilarity(ds, [0], [1]) == pytest.approx(1.0, abs=0.05)

    def test_symmetry(self):
        rng = np.random.default_rng(10)
        ds = mixed_dataset(rng, 40, 5)
        for a, b in (([0], [1]), ([0, 2], [3]), ([1], [3, 4])):
            assert dissimilarity(ds, a, b) == pytest.approx(dissimilarity(ds, b, a), abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            ds = mixed_dataset(rng, 30, 5)
            assert dissimilarity(ds, [0, 1], [2, 4]) >= 0.0

    def test_overlap_rejected(self):
        rng = np.random.default_rng(12)
        ds = mixed_dataset(rng, 30, 4)
        with pytest.raises(DegenerateInput):
            dissimilarity(ds, [0, 1], [1, 2])


def brute_force_merges(d: Dataset):
    """Agglomeration oracle recomputing every pair dissimilarity per step."""
    clusters = {i: (i, [i]) for i in range(d.p)}  # id -> (node, members)
    merges = []
    next_node = d.p
    while len(clusters) > 1:
        best = None
        for i, j in itertools.combinations(sorted(clusters), 2):
            dist = dissimilarity(d, clusters[i][1], clusters[j][1])
            key = (dist, (i, j))
            if best is None or key < best[0]:
                best = (key, i, j)
        (_, _), i, j = best[0], best[1], best[2]
        dist = best[0][0]
        merges.append((clusters[i][0], clusters[j][0], dist))
        clusters[i] = (next_node, clusters[i][1] + clusters[j][1])
        del clusters[j]
        next_node += 1
    return merges


class TestHierarchicalCluster:
    def test_duplicates_merge_first(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal(50)
        ds = quant_dataset([x, x.copy(), rng.standard_normal(50)], ["x", "x_copy", "indep"])
        dend = hierarchical_cluster(ds)
        assert dend.merges[0][:2] == (0, 1)
        assert dend.merges[0][2] == pytest.approx(0.0, abs=1e-10)

    def test_matches_bruteforce_oracle_small(self):
        rng = np.random.default_rng(14)
        for trial in range(10):
            p = int(rng.integers(3, 7))
            ds = mixed_dataset(rng, 25, p)
            dend = hierarchical_cluster(ds)
            oracle = brute_force_merges(ds)
            for got, want in zip(dend.merges, oracle):
                assert got[0] == want[0] and got[1] == want[1]
                assert got[2] == pytest.approx(want[2], abs=1e-9)

    def test_permutation_isomorphism(self):
        rng = np.random.default_rng(15)
        ds = mixed_dataset(rng, 40, 6)
        perm = rng.permutation(6)
        ds_perm = ds.subset(perm)
        d1 = hierarchical_cluster(ds)
        d2 = hierarchical_cluster(ds_perm)
        h1 = sorted(h for _, _, h in d1.merges)
        h2 = sorted(h for _, _, h in d2.merges)
        assert h1 == pytest.approx(h2, abs=1e-9)
        # cut partitions agree up to the permutation at every level
        for m in range(1, 7):
            a = cut_tree(d1, m).assignment
            b = cut_tree(d2, m).assignment
            assert adjusted_rand_index(
                Partition(a[perm], m), Partition(b, m)
            ) == pytest.approx(1.0)


class TestCutTree:
    def setup_method(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal(50)
        self.ds = quant_dataset([x, x.copy(), rng.standard_normal(50)])
        self.dend = hierarchical_cluster(self.ds)

    def test_single_cluster(self):
        part = cut_tree(self.dend, 1)
        assert part.k == 1 and np.all(part.assignment == 1)

    def test_singletons(self):
        part = cut_tree(self.dend, 3)
        assert part.k == 3 and len(set(part.assignment.tolist())) == 3

    def test_two_clusters(self):
        part = cut_tree(self.dend, 2)
        assert part.assignment[0] == part.assignment[1] != part.assignment[2]

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            cut_tree(self.dend, 0)
        with pytest.raises(OutOfRange):
            cut_tree(self.dend, 4)

    def test_nested_partitions(self):
        rng = np.random.default_rng(17)
        ds = mixed_dataset(rng, 30, 7)
        dend = hierarchical_cluster(ds)
        for m in range(2, 8):
            finer = cut_tree(dend, m).assignment
            coarser = cut_tree(dend, m - 1).assignment
            # each finer cluster maps into exactly one coarser cluster
            for label in np.unique(finer):
                assert len(np.unique(coarser[finer == label])) == 1


class TestRandIndices:
    def test_identical(self):
        part = Partition(np.array([1, 1, 2, 3]), 3)
        assert rand_index(part, part) == 1.0
        assert adjusted_rand_index(part, part) == 1.0

    def test_three_element_oracle(self):
        a = Partition(np.array([1, 1, 2]), 2)
        b = Partition(np.array([1, 2, 2]), 2)
        assert rand_index(a, b) == pytest.approx(1 / 3)

    def test_singletons_vs_one_block(self):
        a = Partition(np.array([1, 2, 3, 4]), 4)
        b = Partition(np.array([1, 1, 1, 1]), 1)
        assert rand_index(a, b) == 0.0
        assert adjusted_rand_index(a, b) == 0.0

    def test_crossed_pairs(self):
        a = Partition(np.array([1, 1, 2, 2]), 2)
        b = Partition(np.array([1, 2, 1, 2]), 2)
        assert adjusted_rand_index(a, b) == pytest.approx(-0.5)

    def test_pair_counting_oracle(self):
        rng = np.random.default_rng(18)
        for _ in range(30):
            n = int(rng.integers(3, 9))
            la = rng.integers(1, 4, n)
            lb = rng.integers(1, 4, n)
            la[0] = lb[0] = 1
            a = _canonical(la)
            b = _canonical(lb)
            agree = sum(
                (la[i] == la[j]) == (lb[i] == lb[j])
                for i, j in itertools.combinations(range(n), 2)
            )
            assert rand_index(a, b) == pytest.approx(agree / (n * (n - 1) / 2))

    def test_symmetry(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            n = int(rng.integers(4, 12))
            a = _canonical(rng.integers(1, 4, n))
            b = _canonical(rng.integers(1, 4, n))
            assert rand_index(a, b) == pytest.approx(rand_index(b, a))
            assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(b, a))

    def test_random_permutation_mean_near_zero(self):
        rng = np.random.default_rng(20)
        labels = np.array([1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3])
        a = Partition(labels, 3)
        total = 0.0
        reps = 10000
        for _ in range(reps):
            b = _canonical(labels[rng.permutation(len(labels))])
            total += adjusted_rand_index(a, b)
        assert abs(total / reps) < 0.02

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            rand_index(Partition(np.array([1, 2]), 2), Partition(np.array([1, 2, 2]), 2))


def _canonical(labels):
    labels = np.asarray(labels)
    seen = {}
    out = np.empty(len(labels), dtype=int)
    for i, lab in enumerate(labels):
        if lab not in seen:
            seen[lab] = len(seen) + 1
        out[i] = seen[lab]
    return Partition(out, len(seen))


class TestStability:
    def test_duplicated_blocks_perfect(self):
        rng = np.random.default_rng(21)
        a, b = rng.standard_normal(60), rng.standard_normal(60)
        ds = quant_dataset([a, a.copy(), a.copy(), b, b.copy()])
        curve = stability_select(ds, j_boot=20, seed=5)
        assert curve.chosen_m == 2
        assert curve.mean_ari[curve.cluster_counts.index(2)] == pytest.approx(1.0)

    def test_seeded_determinism(self):
        rng = np.random.default_rng(22)
        ds = mixed_dataset(rng, 40, 6)
        c1 = stability_select(ds, j_boot=10, seed=9)
        c2 = stability_select(ds, j_boot=10, seed=9)
        assert c1.mean_ari == c2.mean_ari
        assert c1.chosen_m == c2.chosen_m

    def test_candidate_range_capped(self):
        rng = np.random.default_rng(23)
        ds = mixed_dataset(rng, 50, 8)
        curve = stability_select(ds, j_boot=3, seed=0, max_candidates=5)
        assert curve.cluster_counts == (2, 3, 4, 5)

    def test_requires_three_variables(self):
        rng = np.random.default_rng(24)
        ds = quant_dataset([rng.standard_normal(20), rng.standard_normal(20)])
        with pytest.raises(DegenerateInput):
            stability_select(ds, j_boot=2, seed=0)


def test_power_iteration_matches_dense_eigenvalue():
    # clusters wider than 64 columns switch to power iteration
    from groupsel.clustering import _lambda1

    rng = np.random.default_rng(26)
    base = rng.standard_normal((120, 80))
    gram = base.T @ base / 120
    dense = float(np.linalg.eigvalsh(gram)[-1])
    assert _lambda1(gram) == pytest.approx(dense, abs=1e-7)
    assert gram.shape[0] > 64


def test_dendrogram_export_records():
    rng = np.random.default_rng(25)
    x = rng.standard_normal(30)
    ds = quant_dataset([x, x.copy(), rng.standard_normal(30)])
    dend = hierarchical_cluster(ds)
    recs = dend.to_records()
    assert len(recs) == 2
    assert set(recs[0]) == {"left", "right", "height"}
