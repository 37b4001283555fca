import csv

import numpy as np
import pytest

from utils.graph import (
    affinity_a,
    affinity_b,
    build_neighbor_graph,
    density_sets,
    dump_graph_csv,
    expand_neighbors,
    knn_indices,
)
from utils.numerics import cosine_similarity_matrix
from utils.shared.nrc_exceptions import InvalidInputError


def _oracle_knn(bank, queries, K, exclude=None):
    sims = cosine_similarity_matrix(queries, bank)
    out = []
    for q in range(sims.shape[0]):
        cols = [j for j in range(bank.shape[0]) if exclude is None or j != exclude[q]]
        cols.sort(key=lambda j: (-sims[q, j], j))
        out.append(cols[:K])
    return np.array(out, dtype=np.int64)


def test_knn_matches_brute_force(rng):
    bank = rng.normal(size=(30, 4))
    queries = rng.normal(size=(7, 4))
    np.testing.assert_array_equal(knn_indices(bank, queries, 5), _oracle_knn(bank, queries, 5))


def test_knn_self_exclusion_matches_brute_force(rng):
    bank = rng.normal(size=(25, 3))
    rows = np.array([0, 4, 9, 24])
    got = knn_indices(bank, bank[rows], 6, exclude=rows)
    np.testing.assert_array_equal(got, _oracle_knn(bank, bank[rows], 6, exclude=rows))
    assert not np.any(got == rows[:, None])


def test_knn_breaks_ties_by_lower_index():
    bank = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    got = knn_indices(bank, np.array([[5.0, 0.0]]), 3)
    np.testing.assert_array_equal(got, [[0, 2, 3]])


def test_knn_identical_row_is_its_own_neighbor(rng):
    bank = rng.normal(size=(10, 3))
    assert knn_indices(bank, bank[4:5], 1)[0, 0] == 4


def test_knn_zero_vector_query_orders_by_index(rng):
    bank = rng.normal(size=(6, 3))
    np.testing.assert_array_equal(knn_indices(bank, np.zeros((1, 3)), 3), [[0, 1, 2]])


def test_knn_rejects_bad_k(rng):
    bank = rng.normal(size=(5, 2))
    with pytest.raises(InvalidInputError):
        knn_indices(bank, bank, 0)
    with pytest.raises(InvalidInputError):
        knn_indices(bank, bank, 5, exclude=np.arange(5))
    assert knn_indices(bank, bank, 4, exclude=np.arange(5)).shape == (5, 4)


def test_affinity_a_marks_reciprocal_pairs():
    # 0 and 1 are mutual; 2 points at 0 but 0 does not point back
    knn = np.array([[1], [0], [0]])
    reverse = np.array([[1], [0], [0]])
    weights, reciprocal = affinity_a(knn, reverse, np.array([0, 1, 2]), r=0.1)
    np.testing.assert_array_equal(reciprocal[:, 0], [True, True, False])
    np.testing.assert_allclose(weights[:, 0], [1.0, 1.0, 0.1])
    flat, _ = affinity_a(knn, reverse, np.array([0, 1, 2]), r=0.1, use_affinity=False)
    np.testing.assert_array_equal(flat, np.ones((3, 1)))


def test_affinity_a_is_one_for_every_neighbor_when_m_covers_the_bank(rng):
    bank = rng.normal(size=(8, 3))
    full = knn_indices(bank, bank, 7, exclude=np.arange(8))
    weights, reciprocal = affinity_a(full[:, :3], full, np.arange(8), r=0.1)
    assert reciprocal.all()
    np.testing.assert_array_equal(weights, 1.0)


def test_expand_neighbors_keeps_duplicates_and_drops_ego():
    knn = np.array([[1, 2]])
    reverse = np.array([[9, 9], [0, 3], [3, 0]])
    members, mask = expand_neighbors(knn, reverse, np.array([0]))
    assert members.shape == (1, 4)
    assert sorted(members[0][mask[0]].tolist()) == [3, 3]
    _, dedup_mask = expand_neighbors(knn, reverse, np.array([0]), dedupe=True)
    assert members[0][dedup_mask[0]].tolist() == [3]


def test_density_sets_invert_neighbor_lists(rng):
    bank = rng.normal(size=(12, 3))
    U = 4
    table = knn_indices(bank, bank, U, exclude=np.arange(12))
    sets = density_sets(bank, U)
    for i in range(12):
        expected = sorted(j for j in range(12) if i in table[j])
        assert sets[i].tolist() == expected
        assert i not in sets[i]
    assert sum(s.size for s in sets) == 12 * U


def test_density_sets_of_an_outlier_can_be_empty():
    bank = np.array([[1.0, 0.0], [1.0, 0.1], [1.0, -0.1], [0.9, 0.0], [-1.0, 0.0]])
    sets = density_sets(bank, 2)
    assert sets[4].size == 0


def test_density_sets_rejects_u_out_of_range(rng):
    bank = rng.normal(size=(5, 2))
    with pytest.raises(InvalidInputError):
        density_sets(bank, 5)
    with pytest.raises(InvalidInputError):
        density_sets(bank, 0)


def test_affinity_b_weights_dense_pairs():
    sets = [np.array([1, 2]), np.array([], dtype=np.int64)]
    knn_v = np.array([[2]])
    q, j, w = affinity_b(sets, knn_v, np.array([0]), r=0.1)
    assert q.tolist() == [0, 0]
    assert j.tolist() == [1, 2]
    np.testing.assert_allclose(w, [0.1, 1.0])
    q, j, w = affinity_b(sets, knn_v, np.array([1]), r=0.1)
    assert q.size == j.size == w.size == 0


def test_build_graph_invariants(rng):
    bank = rng.normal(size=(40, 5))
    rows = np.array([3, 11, 25, 39])
    K, M = 4, 3
    graph = build_neighbor_graph(bank, rows, K, M, r=0.2, r_expanded=0.1)
    assert graph.knn.shape == (4, K)
    assert not np.any(graph.knn == rows[:, None])
    assert set(np.unique(graph.affinity_a)) <= {0.2, 1.0}
    for q, i in enumerate(rows):
        multiset = graph.expanded_multiset(q)
        assert multiset.size <= K * M
        assert i not in multiset
        for k, j in enumerate(graph.knn[q]):
            reverse_j = knn_indices(bank, bank[j:j + 1], M, exclude=np.array([j]))[0]
            assert graph.reciprocal[q, k] == (i in reverse_j)
    assert graph.density_sets is None


def test_build_graph_paths_agree_on_shared_structures(rng):
    bank = rng.normal(size=(30, 4))
    rows = np.array([0, 5, 17])
    plain = build_neighbor_graph(bank, rows, 3, 2)
    dense = build_neighbor_graph(bank, rows, 3, 2, with_density=True, U=6, V=3)
    np.testing.assert_array_equal(plain.knn, dense.knn)
    np.testing.assert_array_equal(plain.affinity_a, dense.affinity_a)
    np.testing.assert_array_equal(plain.expanded[plain.expanded_mask], dense.expanded[dense.expanded_mask])
    assert dense.density_query is not None
    assert dense.density_query.size == sum(dense.density_sets[i].size for i in rows)


def test_build_graph_density_requires_u_greater_than_v(rng):
    bank = rng.normal(size=(20, 3))
    with pytest.raises(InvalidInputError):
        build_neighbor_graph(bank, np.array([0]), 3, 2, with_density=True, U=3, V=3)
    with pytest.raises(InvalidInputError):
        build_neighbor_graph(bank, np.array([0]), 3, 2, with_density=True)


def test_dump_graph_csv(rng, tmp_path):
    bank = rng.normal(size=(12, 3))
    graph = build_neighbor_graph(bank, np.array([0, 1]), 2, 2, with_density=True, U=4, V=2)
    path = dump_graph_csv(graph, tmp_path / "graph.csv")
    with path.open() as f:
        rows = list(csv.DictReader(f))
    relations = {row["relation"] for row in rows}
    assert {"knn", "expanded"} <= relations
    assert sum(1 for row in rows if row["relation"] == "knn") == 4
    expanded = sum(graph.expanded_mask[q].sum() for q in range(2))
    assert sum(1 for row in rows if row["relation"] == "expanded") == expanded
    rnn = int(graph.reciprocal.sum())
    assert sum(1 for row in rows if row["relation"] == "rnn") == rnn


@pytest.mark.parametrize("K", [1, 3, 5])
def test_knn_oracle_equivalence_on_sixteen_dimensional_points(K):
    points = np.random.default_rng(K).normal(size=(200, 16))
    np.testing.assert_array_equal(knn_indices(points, points, K, exclude=np.arange(200)),
                                  _oracle_knn(points, points, K, exclude=np.arange(200)))


def test_graph_invariants_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(12, 30))
        K = int(rng.integers(1, 5))
        M = int(rng.integers(1, 5))
        U = int(rng.integers(2, 8))
        V = int(rng.integers(1, U))
        r = float(rng.uniform(0.0, 0.5))
        bank = rng.normal(size=(n, int(rng.integers(2, 6))))
        rows = rng.choice(n, size=int(rng.integers(1, 6)), replace=False)
        graph = build_neighbor_graph(bank, rows, K, M, r, with_density=True, U=U, V=V)

        for q, i in enumerate(rows):
            ego_hits = int(np.sum(graph.expanded[q] == i))
            assert graph.expanded_multiset(q).size == K * M - ego_hits
        assert sum(s.size for s in graph.density_sets) == n * U
        assert set(np.unique(graph.affinity_a)) <= {r, 1.0}
        assert set(np.unique(graph.affinity_b)) <= {r, 1.0}

        # K = M makes reciprocity symmetric
        sym = build_neighbor_graph(bank, np.arange(n), K, K, r)
        for i in range(n):
            for k, j in enumerate(sym.knn[i]):
                back = np.nonzero(sym.knn[j] == i)[0]
                assert sym.reciprocal[i, k] == bool(back.size)
                if back.size:
                    assert sym.reciprocal[j, back[0]]


def test_knn_is_equivariant_under_bank_permutation(rng):
    bank = rng.normal(size=(40, 6))
    queries = rng.normal(size=(9, 6))
    perm = rng.permutation(40)
    original = knn_indices(bank, queries, 5)
    permuted = knn_indices(bank[perm], queries, 5)
    np.testing.assert_array_equal(perm[permuted], original)


def test_neighbor_graph_is_equivariant_under_bank_permutation(rng):
    bank = rng.normal(size=(30, 5))
    rows = np.array([2, 11, 17, 29])
    perm = rng.permutation(30)
    inverse = np.argsort(perm)
    graph = build_neighbor_graph(bank, rows, 4, 3)
    moved = build_neighbor_graph(bank[perm], inverse[rows], 4, 3)
    np.testing.assert_array_equal(perm[moved.knn], graph.knn)
    np.testing.assert_array_equal(moved.affinity_a, graph.affinity_a)
    for q in range(rows.size):
        assert sorted(perm[moved.expanded_multiset(q)]) == sorted(graph.expanded_multiset(q))
