import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efficient_attention.errors import DimensionError
from efficient_attention.linalg import (
    OrthonormalBasis,
    Tolerance,
    augment_ones,
    column_space_basis,
    null_space_basis,
    project_onto,
    project_rows,
    rank,
)

from oracles import kernel_of_transpose, lstsq_projection, rank_elim

M3 = np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 1.0]])


def random_low_rank(rng, rows, cols, r):
    return rng.standard_normal((rows, r)) @ rng.standard_normal((r, cols))


class TestAugmentOnes:
    def test_definition(self):
        np.testing.assert_array_equal(augment_ones([[1], [0], [0]]),
                                      [[1, 1], [0, 1], [0, 1]])

    def test_zero(self):
        np.testing.assert_array_equal(augment_ones(np.zeros((3, 2))),
                                      [[0, 0, 1], [0, 0, 1], [0, 0, 1]])

    def test_single_row(self):
        np.testing.assert_array_equal(augment_ones([[2, 3]]), [[2, 3, 1]])

    @pytest.mark.parametrize("bad", [np.zeros((0, 2)), [[np.nan]], [[np.inf, 1.0]]])
    def test_rejects_empty_or_non_finite(self, bad):
        with pytest.raises(DimensionError):
            augment_ones(bad)


class TestTolerance:
    def test_defaults(self):
        tol = Tolerance()
        assert (tol.rank_rel, tol.check_abs) == (1e-10, 1e-9)

    @pytest.mark.parametrize("kwargs", [{"rank_rel": 0.0}, {"check_abs": 0.5},
                                        {"rank_rel": -1e-9}])
    def test_bounds(self, kwargs):
        with pytest.raises(ValueError):
            Tolerance(**kwargs)

    def test_from_string(self):
        assert Tolerance.from_string("rank_rel=1e-12, check_abs=1e-8") == Tolerance(1e-12, 1e-8)
        assert Tolerance.from_string("1e-7").check_abs == 1e-7
        assert Tolerance.from_string("") == Tolerance()

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("EFFICIENT_ATTENTION_TOL", "check_abs=2e-9")
        assert Tolerance.from_env().check_abs == 2e-9


class TestColumnSpaceBasis:
    def test_example_reconstructs_columns(self):
        basis = column_space_basis(M3)
        assert len(basis) == 2
        # least-squares residual oracle: every column is in the span
        for col in M3.T:
            np.testing.assert_allclose(project_onto(col, basis), col, atol=1e-12)
        # same subspace as {(1,0,0), (0,1,1)/sqrt(2)}
        expected = np.array([[1, 0, 0], [0, 1 / np.sqrt(2), 1 / np.sqrt(2)]])
        np.testing.assert_allclose(basis.projector(), expected.T @ expected, atol=1e-12)

    def test_identity_full_rank(self):
        basis = column_space_basis(np.eye(3))
        assert len(basis) == 3
        np.testing.assert_allclose(basis.projector(), np.eye(3), atol=1e-12)

    def test_rank_one(self):
        basis = column_space_basis([[1.0, 2.0], [2.0, 4.0]])
        assert len(basis) == 1
        np.testing.assert_allclose(basis.vectors[0], np.array([1, 2]) / np.sqrt(5), atol=1e-15)
        np.testing.assert_allclose(project_onto([2.0, 4.0], basis), [2.0, 4.0], atol=1e-12)

    def test_zero_matrix_gives_empty_basis(self):
        assert len(column_space_basis(np.zeros((4, 3)))) == 0

    def test_one_by_one(self):
        assert len(column_space_basis([[3.0]])) == 1
        assert len(column_space_basis([[0.0]])) == 0

    def test_sign_convention(self):
        basis = column_space_basis(-M3)
        for v in basis:
            first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
            assert first > 0

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        m = random_low_rank(rng, 9, 6, 4)
        b1 = column_space_basis(m)
        b2 = column_space_basis(m.copy())
        assert b1.vectors.tobytes() == b2.vectors.tobytes()

    def test_rank_threshold_is_relative(self):
        m = np.array([[1.0, 0.0], [0.0, 1e-12]])
        assert rank(m) == 1
        assert rank(m, Tolerance(rank_rel=1e-13)) == 2
        assert rank(m * 1e6) == 1


class TestRank:
    def test_example(self):
        assert rank(M3) == rank_elim(M3) == 2

    @pytest.mark.parametrize("shape", [(3, 2), (5, 5), (1, 4)])
    def test_zero(self, shape):
        assert rank(np.zeros(shape)) == 0

    @pytest.mark.parametrize("n", [1, 2, 7])
    def test_identity(self, n):
        assert rank(np.eye(n)) == n

    def test_matches_elimination(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            rows, cols = rng.integers(1, 10, size=2)
            r = int(rng.integers(0, min(rows, cols) + 1))
            m = random_low_rank(rng, rows, cols, r) if r else np.zeros((rows, cols))
            assert rank(m) == rank_elim(m) == r


class TestNullSpaceBasis:
    def test_example(self):
        kernel = null_space_basis(M3)
        assert len(kernel) == 1
        oracle = kernel_of_transpose(M3)[0]
        oracle /= np.linalg.norm(oracle)
        np.testing.assert_allclose(np.abs(kernel.vectors[0]), np.abs(oracle), atol=1e-15)
        np.testing.assert_allclose(kernel.vectors[0], [0, 1 / np.sqrt(2), -1 / np.sqrt(2)],
                                   atol=1e-15)

    def test_identity_has_empty_kernel(self):
        assert len(null_space_basis(np.eye(3))) == 0

    def test_zero_matrix_has_full_kernel(self):
        kernel = null_space_basis(np.zeros((3, 2)))
        assert len(kernel) == 3
        np.testing.assert_allclose(kernel.projector(), np.eye(3), atol=1e-12)

    def test_rank_nullity_500(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            rows = int(rng.integers(2, 17))
            cols = int(rng.integers(1, 17))
            r = int(rng.integers(0, min(rows, cols) + 1))
            m = random_low_rank(rng, rows, cols, r) if r else np.zeros((rows, cols))
            kernel = null_space_basis(m)
            assert rank(m) + len(kernel) == rows
            if len(kernel):
                assert np.max(np.abs(m.T @ kernel.matrix)) <= 1e-9 * max(1, np.abs(m).max())
            # kernel and image together span R^rows
            both = column_space_basis(m).projector() + kernel.projector()
            np.testing.assert_allclose(both, np.eye(rows), atol=1e-9)

    def test_spans_oracle_kernel(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            m = random_low_rank(rng, 8, 5, 3)
            oracle = kernel_of_transpose(m)
            kernel = null_space_basis(m)
            assert len(oracle) == len(kernel)
            for x in oracle:
                np.testing.assert_allclose(project_onto(x, kernel), x, atol=1e-8)


class TestProjectOnto:
    def test_example_matches_least_squares(self):
        v = np.array([0.5, 0.3, 0.2])
        expected = lstsq_projection(M3, v)
        np.testing.assert_allclose(expected, [0.5, 0.25, 0.25], atol=1e-15)
        np.testing.assert_allclose(project_onto(v, column_space_basis(M3)), expected,
                                   atol=1e-15)

    def test_empty_basis(self):
        basis = OrthonormalBasis(3, np.empty((0, 3)))
        np.testing.assert_array_equal(project_onto([1.0, 2.0, 3.0], basis), np.zeros(3))

    def test_vector_in_span_unchanged(self):
        v = M3 @ np.array([0.7, -1.3])
        np.testing.assert_allclose(project_onto(v, column_space_basis(M3)), v, atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            project_onto([1.0, 2.0], column_space_basis(M3))
        with pytest.raises(DimensionError):
            project_rows(np.ones((2, 2)), column_space_basis(M3))

    def test_rows_match_vectors(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((6, 3))
        a = rng.standard_normal((4, 6))
        basis = column_space_basis(m)
        rows = project_rows(a, basis)
        for i in range(4):
            np.testing.assert_allclose(rows[i], project_onto(a[i], basis), atol=1e-14)

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            rows = int(rng.integers(2, 13))
            cols = int(rng.integers(1, 13))
            r = int(rng.integers(1, min(rows, cols) + 1))
            m = random_low_rank(rng, rows, cols, r)
            v = rng.standard_normal(rows)
            np.testing.assert_allclose(project_onto(v, column_space_basis(m)),
                                       lstsq_projection(m, v), atol=1e-8)


dims = st.integers(min_value=2, max_value=12)


@st.composite
def subspace_and_vector(draw):
    rows = draw(dims)
    cols = draw(st.integers(min_value=1, max_value=12))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = np.random.default_rng(seed)
    r = int(rng.integers(0, min(rows, cols) + 1))
    m = random_low_rank(rng, rows, cols, r) if r else np.zeros((rows, cols))
    return m, rng.standard_normal(rows) * draw(st.sampled_from([1e-3, 1.0, 1e3]))


@settings(max_examples=200, deadline=None)
@given(subspace_and_vector())
def test_projection_properties(case):
    m, v = case
    basis = column_space_basis(m)
    basis.check(norm_tol=1e-12, ortho_tol=1e-10)
    p = project_onto(v, basis)
    scale = max(1.0, np.linalg.norm(v))
    # idempotent
    np.testing.assert_allclose(project_onto(p, basis), p, atol=1e-10 * scale)
    # residual orthogonal to the projection
    assert abs(np.dot(p, v - p)) <= 1e-10 * scale**2
    # Pythagoras
    total = np.dot(v, v)
    assert abs(total - np.dot(p, p) - np.dot(v - p, v - p)) <= 1e-9 * total


@settings(max_examples=100, deadline=None)
@given(subspace_and_vector())
def test_null_space_is_orthonormal_complement(case):
    m, _ = case
    kernel = null_space_basis(m)
    kernel.check(norm_tol=1e-12, ortho_tol=1e-10)
    assert len(kernel) + rank(m) == m.shape[0]
