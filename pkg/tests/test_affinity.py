import numpy as np
import pytest

from pvd import (
    AffinityMatrix,
    FeatureBlock,
    InvalidInputError,
    affinity_distill_grad,
    affinity_distill_loss,
    cosine_affinity,
    select_and_pad,
)


def affinity_loss_oracle(student, teacher):
    """Triple loop over matrices, rows, and columns."""
    k = len(student)
    n = student[0].values.shape[0]
    total = 0.0
    for r in range(k):
        for i in range(n):
            for j in range(n):
                d = student[r].values[i, j] - teacher[r].values[i, j]
                total += d * d
    return total / (k * n * n)


def random_block(rng, n, c, n_valid=None):
    n_valid = n if n_valid is None else n_valid
    feats = np.zeros((n, c))
    feats[:n_valid] = rng.normal(size=(n_valid, c))
    mask = np.zeros(n, dtype=bool)
    mask[:n_valid] = True
    return FeatureBlock(feats, mask, list(range(n_valid)))


class TestSelectAndPad:
    def test_pads_short_input(self):
        block = select_and_pad(
            np.array([[1.0, 2.0], [3.0, 4.0]]),
            np.array([0, 1]),
            np.array([False, False]),
            target=4,
            seed=0,
        )
        np.testing.assert_array_equal(block.valid_mask, [True, True, False, False])
        np.testing.assert_array_equal(
            block.features, [[1, 2], [3, 4], [0, 0], [0, 0]]
        )
        assert block.kept_indices == [0, 1]

    def test_discards_down_to_target(self):
        rng_feats = np.arange(10.0).reshape(5, 2)
        block = select_and_pad(
            rng_feats, np.zeros(5, dtype=int), np.array([False]), target=3, seed=1
        )
        assert block.valid_mask.all()
        assert len(block.kept_indices) == 3
        # every surviving row is one of the originals, in original order
        for row, idx in zip(block.features, block.kept_indices):
            np.testing.assert_array_equal(row, rng_feats[idx])
        assert block.kept_indices == sorted(block.kept_indices)

    def test_exact_fit_is_identity(self):
        feats = np.array([[1.0, 0.0], [0.0, 2.0]])
        block = select_and_pad(
            feats, np.array([0, 0]), np.array([False]), target=2, seed=9
        )
        np.testing.assert_array_equal(block.features, feats)
        assert block.kept_indices == [0, 1]

    def test_minority_rows_survive_first_round(self):
        rng = np.random.default_rng(2)
        feats = rng.normal(size=(6, 3))
        labels = np.array([0, 0, 1, 0, 1, 0])
        minority = np.array([False, True])
        for seed in range(10):
            block = select_and_pad(feats, labels, minority, target=3, seed=seed)
            assert {2, 4} <= set(block.kept_indices)

    def test_minority_dropped_only_when_unavoidable(self):
        feats = np.arange(8.0).reshape(4, 2)
        labels = np.array([1, 1, 1, 0])
        block = select_and_pad(
            feats, labels, np.array([False, True]), target=2, seed=3
        )
        # the lone majority row must have been dropped first
        assert 3 not in block.kept_indices
        assert len(block.kept_indices) == 2

    def test_labels_outside_table_count_as_majority(self):
        feats = np.arange(6.0).reshape(3, 2)
        labels = np.array([255, 1, 255])
        block = select_and_pad(
            feats, labels, np.array([False, True]), target=1, seed=4
        )
        assert block.kept_indices == [1]

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(5)
        feats = rng.normal(size=(40, 4))
        labels = rng.integers(0, 3, size=40)
        minority = np.array([False, False, True])
        a = select_and_pad(feats, labels, minority, target=10, seed=77)
        b = select_and_pad(feats, labels, minority, target=10, seed=77)
        assert a.kept_indices == b.kept_indices
        np.testing.assert_array_equal(a.features, b.features)

    def test_target_validation(self):
        with pytest.raises(InvalidInputError):
            select_and_pad(np.zeros((2, 2)), np.zeros(2, int), np.array([False]), 0, 0)
        with pytest.raises(InvalidInputError):
            select_and_pad(np.zeros((2, 2)), np.zeros(2, int), np.array([False]), 1, -5)


class TestCosineAffinity:
    def test_identical_unit_vectors(self):
        block = FeatureBlock(
            np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([True, True]), [0, 1]
        )
        np.testing.assert_array_equal(cosine_affinity(block).values, np.ones((2, 2)))

    def test_orthonormal_rows(self):
        block = FeatureBlock(np.eye(3), np.ones(3, bool), [0, 1, 2])
        np.testing.assert_array_equal(cosine_affinity(block).values, np.eye(3))

    def test_padded_row_zeroes_row_and_column(self):
        block = FeatureBlock(
            np.array([[1.0, 1.0], [2.0, 0.0], [0.0, 0.0]]),
            np.array([True, True, False]),
            [0, 1],
        )
        values = cosine_affinity(block).values
        np.testing.assert_array_equal(values[2], np.zeros(3))
        np.testing.assert_array_equal(values[:, 2], np.zeros(3))
        assert values[2, 2] == 0.0
        assert values[0, 0] == 1.0 and values[1, 1] == 1.0

    def test_row_rescaling_invariance(self):
        rng = np.random.default_rng(6)
        feats = rng.normal(size=(5, 4))
        a = cosine_affinity(FeatureBlock(feats, np.ones(5, bool), list(range(5))))
        feats2 = feats.copy()
        feats2[2] *= 37.5
        b = cosine_affinity(FeatureBlock(feats2, np.ones(5, bool), list(range(5))))
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)

    def test_symmetry_and_diagonal_contract(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            block = random_block(rng, n, 3, n_valid=int(rng.integers(1, n + 1)))
            values = cosine_affinity(block).values
            assert np.abs(values - values.T).max() <= 1e-12
            diag = np.diag(values)
            np.testing.assert_array_equal(
                diag, np.where(block.valid_mask, 1.0, 0.0)
            )
            assert values.min() >= -1.0 and values.max() <= 1.0


class TestAffinityLoss:
    def test_equal_matrices_give_zero(self):
        rng = np.random.default_rng(8)
        mats = [cosine_affinity(random_block(rng, 4, 3)) for _ in range(3)]
        assert affinity_distill_loss(mats, mats) == 0.0

    def test_unit_difference(self):
        zeros = AffinityMatrix(np.zeros((2, 2)))
        ones = AffinityMatrix(np.ones((2, 2)))
        assert affinity_distill_loss([zeros], [ones]) == 1.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(9)
        student = [cosine_affinity(random_block(rng, 5, 3, 4)) for _ in range(4)]
        teacher = [cosine_affinity(random_block(rng, 5, 3, 4)) for _ in range(4)]
        assert affinity_distill_loss(student, teacher) == pytest.approx(
            affinity_loss_oracle(student, teacher), abs=1e-12
        )

    def test_symmetric_in_arguments(self):
        rng = np.random.default_rng(10)
        s = [cosine_affinity(random_block(rng, 6, 4))]
        t = [cosine_affinity(random_block(rng, 6, 4))]
        assert affinity_distill_loss(s, t) == affinity_distill_loss(t, s)

    def test_invariant_to_shared_row_permutation(self):
        rng = np.random.default_rng(11)
        s_feats = rng.normal(size=(6, 3))
        t_feats = rng.normal(size=(6, 3))
        mask = np.array([True] * 5 + [False])
        s_feats[5] = t_feats[5] = 0.0
        idxs = list(range(5))
        base = affinity_distill_loss(
            [cosine_affinity(FeatureBlock(s_feats, mask, idxs))],
            [cosine_affinity(FeatureBlock(t_feats, mask, idxs))],
        )
        perm = rng.permutation(6)
        pm = mask[perm]
        pidx = list(range(int(pm.sum())))
        permuted = affinity_distill_loss(
            [cosine_affinity(FeatureBlock(s_feats[perm], pm, pidx))],
            [cosine_affinity(FeatureBlock(t_feats[perm], pm, pidx))],
        )
        assert permuted == pytest.approx(base, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        a = [AffinityMatrix(np.zeros((2, 2)))]
        b = [AffinityMatrix(np.zeros((3, 3)))]
        with pytest.raises(InvalidInputError):
            affinity_distill_loss(a, b)
        with pytest.raises(InvalidInputError):
            affinity_distill_loss(a, a + a)


class TestAffinityGrad:
    def test_zero_at_reproduced_teacher(self):
        rng = np.random.default_rng(12)
        block = random_block(rng, 5, 3)
        taff = cosine_affinity(block)
        grad = affinity_distill_grad([block], [taff])[0]
        np.testing.assert_array_equal(grad, np.zeros_like(block.features))

    def test_matches_central_differences(self):
        rng = np.random.default_rng(13)
        h = 1e-5
        block = random_block(rng, 4, 3)
        teacher = cosine_affinity(random_block(rng, 4, 3))
        grad = affinity_distill_grad([block], [teacher])[0]
        numeric = np.zeros_like(grad)
        for idx in np.ndindex(block.features.shape):
            plus = block.features.copy()
            minus = block.features.copy()
            plus[idx] += h
            minus[idx] -= h
            lp = affinity_distill_loss(
                [cosine_affinity(FeatureBlock(plus, block.valid_mask, block.kept_indices))],
                [teacher],
            )
            lm = affinity_distill_loss(
                [cosine_affinity(FeatureBlock(minus, block.valid_mask, block.kept_indices))],
                [teacher],
            )
            numeric[idx] = (lp - lm) / (2 * h)
        rel = np.abs(grad - numeric).max() / max(np.abs(numeric).max(), 1e-12)
        assert rel <= 1e-4

    def test_gradient_orthogonal_to_features(self):
        rng = np.random.default_rng(14)
        block = random_block(rng, 6, 4, n_valid=5)
        teacher = cosine_affinity(random_block(rng, 6, 4, n_valid=5))
        grad = affinity_distill_grad([block], [teacher])[0]
        for i in range(5):
            assert abs(np.dot(grad[i], block.features[i])) < 1e-9

    def test_zero_at_padded_rows(self):
        rng = np.random.default_rng(15)
        block = random_block(rng, 6, 3, n_valid=3)
        teacher = cosine_affinity(random_block(rng, 6, 3, n_valid=3))
        grad = affinity_distill_grad([block], [teacher])[0]
        np.testing.assert_array_equal(grad[3:], np.zeros((3, 3)))

    def test_directional_derivative(self):
        rng = np.random.default_rng(16)
        h = 1e-5
        blocks = [random_block(rng, 5, 4, n_valid=4) for _ in range(2)]
        teacher = [cosine_affinity(random_block(rng, 5, 4, n_valid=4)) for _ in range(2)]
        grads = affinity_distill_grad(blocks, teacher)
        direction = [rng.normal(size=b.features.shape) for b in blocks]
        for d, b in zip(direction, blocks):
            d[~b.valid_mask] = 0.0

        def loss_at(offset):
            mats = [
                cosine_affinity(
                    FeatureBlock(
                        b.features + offset * d, b.valid_mask, b.kept_indices
                    )
                )
                for b, d in zip(blocks, direction)
            ]
            return affinity_distill_loss(mats, teacher)

        numeric = (loss_at(h) - loss_at(-h)) / (2 * h)
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, direction))
        assert abs(numeric - analytic) <= 1e-4 * max(abs(numeric), 1e-12)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(17)
        block = random_block(rng, 4, 3)
        with pytest.raises(InvalidInputError):
            affinity_distill_grad([block], [AffinityMatrix(np.zeros((5, 5)))])


class TestBlockAndMatrixInvariants:
    def test_nonzero_padding_rejected(self):
        with pytest.raises(InvalidInputError):
            FeatureBlock(np.ones((2, 2)), np.array([True, False]), [0])

    def test_duplicate_kept_indices_rejected(self):
        with pytest.raises(InvalidInputError):
            FeatureBlock(np.ones((2, 2)), np.array([True, True]), [0, 0])

    def test_kept_count_must_match_mask(self):
        with pytest.raises(InvalidInputError):
            FeatureBlock(np.ones((2, 2)), np.array([True, True]), [0])

    def test_asymmetric_matrix_rejected(self):
        with pytest.raises(InvalidInputError):
            AffinityMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_out_of_range_matrix_rejected(self):
        with pytest.raises(InvalidInputError):
            AffinityMatrix(np.array([[1.5]]))
