import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saddlekrylov.linops import (DimensionError, MatrixMarketError, MatrixStorage,
                                 apply_operator, as_storage, aslinearoperator,
                                 assemble_block_2x2, identity, read_matrix_market,
                                 read_vector, write_matrix_market, write_vector, zeros)
from saddlekrylov.problems import counterexample_system

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_identity_apply():
    assert np.array_equal(apply_operator(identity(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])


def test_counterexample_apply():
    A = counterexample_system().A
    assert np.array_equal(A.apply(np.array([0.0, 1.0, 0.0])), [-1.0, 0.0, 0.0])


def test_zero_apply():
    assert np.array_equal(zeros(2).apply(np.array([5.0, 7.0])), [0.0, 0.0])


def test_apply_wrong_length():
    with pytest.raises(DimensionError):
        identity(3).apply(np.ones(2))


def test_read_identity_array(tmp_path):
    f = tmp_path / "i.mtx"
    f.write_text("%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n")
    s = read_matrix_market(f)
    assert s.layout == "dense"
    assert np.array_equal(s.toarray(), np.eye(2))


def test_read_symmetric_coordinate(tmp_path):
    f = tmp_path / "s.mtx"
    f.write_text("%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 1\n2 1 3\n")
    s = read_matrix_market(f)
    assert s.is_symmetric
    assert s.data[2].size == 2  # only the lower triangle is stored
    assert np.array_equal(s.toarray(), [[1.0, 3.0], [3.0, 0.0]])


@pytest.mark.parametrize("text", [
    "",
    "not a header\n1 1\n1\n",
    "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
    "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n",
    "%%MatrixMarket matrix array real general\n2 1\n1\nx\n",
])
def test_read_errors(tmp_path, text):
    f = tmp_path / "bad.mtx"
    f.write_text(text)
    with pytest.raises(MatrixMarketError):
        read_matrix_market(f)


def test_error_reports_line(tmp_path):
    f = tmp_path / "bad.mtx"
    f.write_text("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 oops\n")
    with pytest.raises(MatrixMarketError) as info:
        read_matrix_market(f)
    assert info.value.line == 3


def test_assemble_tiny():
    K = assemble_block_2x2(np.eye(2), np.array([[1.0, 0.0]]), np.array([[1.0]]))
    assert np.array_equal(K.toarray(), [[1, 0, 1], [0, 1, 0], [1, 0, -1]])
    assert K.is_symmetric


def test_assemble_counterexample_zero_row():
    sys_ = counterexample_system()
    K = assemble_block_2x2(sys_.A.matrix, sys_.B, sys_.C).toarray()
    assert K.shape == (5, 5)
    assert np.all(K[1] == 0.0)


def test_assemble_dimension_error():
    with pytest.raises(DimensionError):
        assemble_block_2x2(np.eye(2), np.ones((1, 3)), np.eye(1))


def test_assemble_sparse_layout():
    K = assemble_block_2x2(sp.eye(3), sp.csc_matrix(np.ones((1, 3))), np.eye(1))
    assert K.layout == "sparse-compressed-column"
    assert np.allclose(K.toarray()[3], [1, 1, 1, -1])


def test_triplets_finalized():
    s = MatrixStorage.from_triplets(2, 2, [1, 0, 1], [0, 1, 0], [1.0, 2.0, 3.0])
    i, j, v = s.data
    assert list(zip(i, j, v)) == [(1, 0, 4.0), (0, 1, 2.0)]


def test_symmetric_triplets_reject_upper():
    with pytest.raises(ValueError):
        MatrixStorage.from_triplets(2, 2, [0], [1], [1.0], symmetric=True)


def test_storage_is_immutable():
    s = MatrixStorage.from_dense(np.eye(2))
    with pytest.raises(ValueError):
        s.data[0, 0] = 5.0


def test_aslinearoperator_detects_symmetry():
    assert aslinearoperator(np.eye(3)).symmetric
    assert not aslinearoperator(np.triu(np.ones((3, 3)))).symmetric


def test_operator_to_dense_by_probing():
    M = np.arange(9.0).reshape(3, 3)
    op = aslinearoperator(M)
    bare = type(op)(3, 3, op.matvec)
    assert np.array_equal(bare.to_dense(), M)


@st.composite
def storages(draw):
    rows = draw(st.integers(1, 6))
    cols = draw(st.integers(1, 6))
    a = draw(arrays(float, (rows, cols), elements=finite))
    layout = draw(st.sampled_from(["dense", "triplet", "csc"]))
    symmetric = draw(st.booleans()) and rows == cols
    if symmetric:
        a = np.tril(a) + np.tril(a, -1).T
    if layout == "dense":
        return MatrixStorage.from_dense(a, symmetric=symmetric)
    if layout == "csc":
        return MatrixStorage.from_sparse(sp.csc_matrix(a), symmetric=symmetric)
    low = np.tril(a) if symmetric else a
    i, j = np.nonzero(low)
    return MatrixStorage.from_triplets(rows, cols, i, j, low[i, j], symmetric=symmetric)


@settings(max_examples=60, deadline=None)
@given(storages())
def test_matrix_market_round_trip(tmp_path_factory, s):
    f = tmp_path_factory.mktemp("mm") / "m.mtx"
    write_matrix_market(f, s)
    back = read_matrix_market(f)
    assert back.shape == s.shape
    assert back.is_symmetric == s.is_symmetric
    assert np.array_equal(back.toarray(), s.toarray())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.data())
def test_block_apply_matches_blockwise(n, m, data):
    T = data.draw(arrays(float, (n, n), elements=finite))
    B = data.draw(arrays(float, (m, n), elements=finite))
    C = data.draw(arrays(float, (m, m), elements=finite))
    x = data.draw(arrays(float, n, elements=finite))
    y = data.draw(arrays(float, m, elements=finite))
    K = assemble_block_2x2(T, B, C)
    z = K.matvec(np.concatenate([x, y]))
    ref = np.concatenate([T @ x + B.T @ y, B @ x - C @ y])
    scale = (np.abs(T).sum(1).max() * np.abs(x).max() + np.abs(B).max() * np.abs(y).sum()
             + np.abs(B).max() * np.abs(x).sum() + np.abs(C).sum(1).max() * np.abs(y).max())
    assert np.all(np.abs(z - ref) <= 1e-14 * max(scale, 1e-300) * (n + m))


def test_vector_round_trip(tmp_path):
    v = np.array([0.1, -2.5e-300, 3.0, np.pi])
    write_vector(tmp_path / "v.mtx", v)
    assert np.array_equal(read_vector(tmp_path / "v.mtx"), v)


def test_read_vector_rejects_matrix(tmp_path):
    write_matrix_market(tmp_path / "m.mtx", np.eye(2))
    with pytest.raises(MatrixMarketError):
        read_vector(tmp_path / "m.mtx")


def test_as_storage_retag():
    s = as_storage(np.eye(2))
    assert not s.is_symmetric
    assert as_storage(s, symmetric=True).is_symmetric
