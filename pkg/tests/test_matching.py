import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iodkit.geometry import BoundingBox
from iodkit.labels import LabeledSet, Origin, Target, one_hot, pad_to_n
from iodkit.matching import Assignment, CostMatrix, brute_force_match, build_cost, hungarian


def rand_matrix(rng, n, lo=-10.0, hi=10.0):
    return CostMatrix(rng.uniform(lo, hi, size=(n, n)))


class TestBuildCost:
    def test_all_background_rows_zero(self):
        targets = pad_to_n([], 4, n_categories=2)
        preds = LabeledSet(
            probs=np.full((4, 3), 1 / 3),
            boxes=np.full((4, 4), 0.5),
            origins=np.full(4, Origin.PREDICTION, dtype=np.int8),
        )
        cost = build_cost(targets, preds, 2.0, 5.0)
        assert np.all(cost.values == 0.0)

    def test_perfect_match_entry(self):
        b = BoundingBox(0.5, 0.5, 0.2, 0.2)
        targets = pad_to_n([one_hot(0, b, 2)], 2)
        probs = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        preds = LabeledSet(
            probs=probs,
            boxes=np.stack([b.to_array(), b.to_array()]),
            origins=np.full(2, Origin.PREDICTION, dtype=np.int8),
        )
        cost = build_cost(targets, preds, 2.0, 5.0)
        assert cost.values[0, 0] == -1.0

    def test_soft_target_inner_product(self):
        # soft pseudo target 0.7 on class index 2 (of 0..2) and 0.3 background
        b = BoundingBox(0.5, 0.5, 0.2, 0.2)
        t = Target(np.array([0.0, 0.0, 0.7, 0.3]), b, Origin.PSEUDO)
        targets = LabeledSet.from_targets([t])
        preds = LabeledSet(
            probs=np.array([[0.0, 0.0, 0.5, 0.5]]),
            boxes=b.to_array()[None],
            origins=np.array([Origin.PREDICTION], dtype=np.int8),
        )
        cost = build_cost(targets, preds, 2.0, 5.0)
        expected = -(0.7 * 0.5 + 0.3 * 0.5)
        assert abs(cost.values[0, 0] - expected) < 1e-12
        # independent recomputation over the full support
        manual = -float(np.dot(t.probs, preds.probs[0]))
        assert abs(cost.values[0, 0] - manual) < 1e-12

    def test_length_mismatch(self):
        targets = pad_to_n([], 3, n_categories=2)
        preds = pad_to_n([], 4, n_categories=2)
        with pytest.raises(ValueError, match="length mismatch"):
            build_cost(targets, preds, 2.0, 5.0)


class TestHungarian:
    def test_identity_favoring(self):
        values = np.ones((4, 4))
        np.fill_diagonal(values, 0.0)
        a = hungarian(CostMatrix(values))
        assert a.sigma.tolist() == [0, 1, 2, 3]
        assert a.total_cost == 0.0

    def test_two_by_two(self):
        a = hungarian(CostMatrix(np.array([[1.0, 2.0], [3.0, 0.0]])))
        assert a.sigma.tolist() == [0, 1]
        assert a.total_cost == 1.0

    def test_row_constant_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rand_matrix(rng, 5)
            base = hungarian(m).sigma
            shifted = m.values.copy()
            shifted[2] += 3.7
            assert hungarian(CostMatrix(shifted)).sigma.tolist() == base.tolist()

    def test_whole_matrix_constant_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            m = rand_matrix(rng, 6)
            base = hungarian(m).sigma
            assert hungarian(CostMatrix(m.values + 2.5)).sigma.tolist() == base.tolist()

    def test_zero_matrix_identity(self):
        a = hungarian(CostMatrix(np.zeros((5, 5))))
        assert a.sigma.tolist() == [0, 1, 2, 3, 4]

    def test_background_row_permutation_invariance(self):
        rng = np.random.default_rng(2)
        values = rng.uniform(-5, 5, size=(6, 6))
        values[3] = 0.0
        values[4] = 0.0
        a = hungarian(CostMatrix(values))
        swapped = values.copy()
        swapped[[3, 4]] = swapped[[4, 3]]
        b = hungarian(CostMatrix(swapped))
        assert a.sigma.tolist() == b.sigma.tolist()

    def test_lexicographic_tie_break(self):
        # both permutations cost 7; identity is lexicographically smaller
        a = hungarian(CostMatrix(np.array([[5.0, 1.0], [6.0, 2.0]])))
        assert a.sigma.tolist() == [0, 1]
        # classic equal-sum tie with distinct entries
        b = hungarian(CostMatrix(np.array([[1.0, 2.0], [3.0, 4.0]])))
        assert b.sigma.tolist() == [0, 1]

    def test_non_finite_rejected(self):
        values = np.zeros((3, 3))
        values[1, 1] = np.inf
        with pytest.raises(ValueError, match="non-finite"):
            hungarian(CostMatrix(values))

    def test_refine_ties_false_still_optimal(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            m = rand_matrix(rng, 6)
            fast = hungarian(m, refine_ties=False)
            slow = hungarian(m)
            assert fast.total_cost == slow.total_cost

    def test_assignment_validation(self):
        m = CostMatrix(np.array([[1.0, 2.0], [3.0, 0.0]]))
        a = hungarian(m)
        a.validate(m)
        bad = Assignment(np.array([0, 0]), 1.0)
        with pytest.raises(ValueError):
            bad.validate()


class TestBruteForceOracle:
    def test_one_by_one(self):
        a = brute_force_match(CostMatrix(np.array([[3.5]])))
        assert a.sigma.tolist() == [0]
        assert a.total_cost == 3.5

    def test_size_limit(self):
        with pytest.raises(ValueError):
            brute_force_match(CostMatrix(np.zeros((9, 9))))

    def test_agreement_on_random_matrices(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            m = rand_matrix(rng, n)
            h = hungarian(m)
            b = brute_force_match(m)
            assert h.total_cost == b.total_cost
            assert h.sigma.tolist() == b.sigma.tolist()

    def test_unique_optimum_sigma_equality(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            m = rand_matrix(rng, 5)
            # continuous entries: optimum unique almost surely
            assert hungarian(m).sigma.tolist() == brute_force_match(m).sigma.tolist()


@settings(max_examples=200, deadline=None)
@given(
    st.integers(min_value=1, max_value=7),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_property_hungarian_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    m = CostMatrix(rng.uniform(-10, 10, size=(n, n)))
    h = hungarian(m)
    b = brute_force_match(m)
    assert h.total_cost == b.total_cost


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_property_integer_ties_lexicographic(seed):
    # small integer matrices create real ties; result must be the
    # lexicographically smallest optimal permutation
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = CostMatrix(rng.integers(0, 3, size=(n, n)).astype(np.float64))
    h = hungarian(m)
    b = brute_force_match(m)
    assert h.total_cost == b.total_cost
    assert h.sigma.tolist() == b.sigma.tolist()
