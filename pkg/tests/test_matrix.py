import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsespace import (
    DenseMatrix,
    dense_from_triplets,
    parse_matrix_market,
    random_sparse,
    serialize_matrix_market,
    spmv_oracle,
)
from sparsespace.errors import (
    DimensionMismatch,
    DuplicateEntry,
    IndexOutOfDeclaredBounds,
    MalformedHeader,
    MatrixMarketError,
    OutOfBounds,
    UnsupportedKind,
)

HEADER = "%%MatrixMarket matrix coordinate real general\n"


def test_empty_triplets_give_zero_matrix():
    a = dense_from_triplets(2, 2, [])
    assert a.shape == (2, 2)
    assert a.nnz == 0


def test_identity_from_triplets():
    a = dense_from_triplets(2, 2, [(0, 0, 1), (1, 1, 1)])
    assert np.array_equal(a.values, np.eye(2))


def test_fixture_counts(fixture4):
    assert fixture4.nnz == 8
    assert fixture4.row_lengths() == [3, 1, 2, 2]


@pytest.mark.parametrize("entries,exc", [
    ([(2, 0, 1.0)], OutOfBounds),
    ([(0, -1, 1.0)], OutOfBounds),
    ([(0, 0, 1.0), (0, 0, 2.0)], DuplicateEntry),
])
def test_triplet_errors(entries, exc):
    with pytest.raises(exc):
        dense_from_triplets(2, 2, entries)


def test_matrix_needs_a_row_and_column():
    with pytest.raises(ValueError):
        DenseMatrix(np.zeros((0, 3)))


def test_dense_matrix_is_immutable(fixture4):
    with pytest.raises(ValueError):
        fixture4.values[0, 0] = 9


class TestMatrixMarket:
    def test_single_entry(self):
        a = parse_matrix_market(HEADER + "2 2 1\n1 1 5.0\n")
        assert a[0, 0] == 5.0
        assert a.nnz == 1

    def test_zero_entries(self):
        a = parse_matrix_market(HEADER + "3 2 0\n")
        assert a.shape == (3, 2) and a.nnz == 0

    def test_comments_and_blank_lines(self):
        a = parse_matrix_market(HEADER + "% a comment\n\n2 2 1\n% another\n2 1 -3.5\n")
        assert a[1, 0] == -3.5

    @pytest.mark.parametrize("kind", ["complex general", "real symmetric", "pattern general", "integer general"])
    def test_unsupported_kinds(self, kind):
        with pytest.raises(UnsupportedKind):
            parse_matrix_market(f"%%MatrixMarket matrix coordinate {kind}\n2 2 0\n")

    @pytest.mark.parametrize("text", [
        "",
        "not a header\n2 2 0\n",
        "%%MatrixMarket matrix coordinate real\n2 2 0\n",
        HEADER,
        HEADER + "2 two 0\n",
        HEADER + "0 2 0\n",
    ])
    def test_malformed_header(self, text):
        with pytest.raises(MalformedHeader):
            parse_matrix_market(text)

    def test_out_of_declared_bounds_names_line(self):
        with pytest.raises(IndexOutOfDeclaredBounds) as err:
            parse_matrix_market(HEADER + "2 2 1\n3 1 1.0\n")
        assert err.value.line == 3

    def test_bad_entry_line(self):
        with pytest.raises(MatrixMarketError, match="line 3"):
            parse_matrix_market(HEADER + "2 2 1\n1 x 1.0\n")

    def test_count_mismatch(self):
        with pytest.raises(MatrixMarketError):
            parse_matrix_market(HEADER + "2 2 2\n1 1 1.0\n")

    def test_duplicate(self):
        with pytest.raises(DuplicateEntry):
            parse_matrix_market(HEADER + "2 2 2\n1 1 1.0\n1 1 2.0\n")

    def test_fixture_roundtrip(self, fixture4):
        assert parse_matrix_market(serialize_matrix_market(fixture4)) == fixture4


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 12), st.integers(1, 12), st.floats(0, 1), st.integers(0, 2**32 - 1), st.booleans()
)
def test_serialize_parse_identity(r, c, density, seed, integer):
    a = random_sparse(r, c, density, seed, integer=integer)
    assert parse_matrix_market(serialize_matrix_market(a)) == a


class TestRandomSparse:
    def test_density_zero(self):
        for seed in range(5):
            assert random_sparse(7, 5, 0.0, seed).nnz == 0

    def test_density_one(self):
        assert random_sparse(7, 5, 1.0, 3).nnz == 35

    def test_deterministic(self):
        assert random_sparse(20, 30, 0.2, 11) == random_sparse(20, 30, 0.2, 11)

    def test_seed_matters(self):
        assert random_sparse(20, 30, 0.5, 1) != random_sparse(20, 30, 0.5, 2)

    def test_small_integer_values(self):
        vals = random_sparse(30, 30, 0.5, 4).values
        nz = vals[vals != 0]
        assert set(np.unique(nz)) <= set(range(1, 10))

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            random_sparse(2, 2, 1.5, 0)


class TestOracle:
    def test_identity(self):
        a = dense_from_triplets(2, 2, [(0, 0, 1), (1, 1, 1)])
        assert list(spmv_oracle(a, [3, 4])) == [3, 4]

    def test_fixture_ones(self, fixture4):
        # hand addition: 1+2+3, 4, 5+6, 7+8
        assert list(spmv_oracle(fixture4, [1, 1, 1, 1])) == [6, 4, 11, 15]

    def test_zero_matrix(self):
        assert not spmv_oracle(DenseMatrix.zeros(3, 4), [1, 2, 3, 4]).any()

    def test_dimension_mismatch(self, fixture4):
        with pytest.raises(DimensionMismatch):
            spmv_oracle(fixture4, [1, 1, 1])

    def test_ascending_j_order(self):
        # 1e16 + 1 - 1e16 in ascending j gives 0 in float64, not 1
        a = dense_from_triplets(1, 3, [(0, 0, 1e16), (0, 1, 1.0), (0, 2, -1e16)])
        assert spmv_oracle(a, [1, 1, 1])[0] == ((1e16 + 1.0) + -1e16)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 16), st.integers(1, 16), st.integers(0, 1000), st.data())
    def test_linear_on_integers(self, r, c, seed, data):
        a = random_sparse(r, c, 0.3, seed)
        ints = st.lists(st.integers(-50, 50), min_size=c, max_size=c)
        x1 = np.array(data.draw(ints), dtype=float)
        x2 = np.array(data.draw(ints), dtype=float)
        assert np.array_equal(spmv_oracle(a, x1 + x2), spmv_oracle(a, x1) + spmv_oracle(a, x2))
