"""Matrix storage, linear operators and Matrix Market exchange.

Every other module talks to matrices through :class:`MatrixStorage` (explicit
matrices) or :class:`LinearOperator` (anything that can be applied to a
vector).  Both are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionError",
    "MatrixMarketError",
    "MatrixStorage",
    "LinearOperator",
    "as_storage",
    "aslinearoperator",
    "apply_operator",
    "identity",
    "zeros",
    "assemble_block_2x2",
    "read_matrix_market",
    "write_matrix_market",
    "read_vector",
    "write_vector",
]

LAYOUTS = ("dense", "sparse-triplet", "sparse-compressed-column")


class DimensionError(ValueError):
    """Raised when operand shapes are inconsistent."""


class MatrixMarketError(ValueError):
    """Raised when a Matrix Market file cannot be parsed."""

    def __init__(self, msg, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + msg)
        self.path = path
        self.line = line


@dataclass(frozen=True, eq=False)
class MatrixStorage:
    """An explicit real matrix in one of three layouts.

    Sparse layouts tagged ``symmetric`` hold the lower triangle only (the
    Matrix Market convention); the dense layout always holds the full matrix.
    Use :meth:`toarray` or :meth:`tocsc` to get the expanded matrix.
    """

    rows: int
    cols: int
    layout: str
    data: object
    symmetry: str = "general"

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.symmetry not in ("general", "symmetric"):
            raise ValueError(f"unknown symmetry tag {self.symmetry!r}")
        if self.symmetry == "symmetric" and self.rows != self.cols:
            raise DimensionError("symmetric tag requires a square matrix")

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_dense(cls, a, symmetric=False):
        a = np.array(a, dtype=float, ndmin=2)
        if a.ndim != 2:
            raise DimensionError("dense storage needs a 2-d array")
        a.setflags(write=False)
        return cls(a.shape[0], a.shape[1], "dense", a,
                   "symmetric" if symmetric else "general")

    @classmethod
    def from_triplets(cls, rows, cols, i, j, v, symmetric=False):
        """Finalized triplet storage: sorted column-major, duplicates summed."""
        i = np.asarray(i, dtype=np.int64).ravel()
        j = np.asarray(j, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=float).ravel()
        if not (i.size == j.size == v.size):
            raise DimensionError("triplet arrays differ in length")
        if i.size and (i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols):
            raise DimensionError("triplet index out of bounds")
        if symmetric and np.any(i < j):
            raise ValueError("symmetric triplet storage holds the lower triangle only")
        coo = sp.coo_matrix((v, (i, j)), shape=(rows, cols))
        coo.sum_duplicates()
        order = np.lexsort((coo.row, coo.col))
        ti, tj, tv = coo.row[order], coo.col[order], coo.data[order]
        for arr in (ti, tj, tv):
            arr.setflags(write=False)
        return cls(rows, cols, "sparse-triplet", (ti, tj, tv),
                   "symmetric" if symmetric else "general")

    @classmethod
    def from_sparse(cls, s, symmetric=False):
        s = sp.csc_matrix(s, dtype=float)
        s.sum_duplicates()
        s.sort_indices()
        if symmetric:
            s = sp.csc_matrix(sp.tril(s))
        return cls(s.shape[0], s.shape[1], "sparse-compressed-column", s,
                   "symmetric" if symmetric else "general")

    # -- views ------------------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def is_symmetric(self):
        return self.symmetry == "symmetric"

    @cached_property
    def _expanded(self):
        # dense ndarray or csc matrix holding the full (expanded) matrix
        if self.layout == "dense":
            return self.data
        if self.layout == "sparse-triplet":
            i, j, v = self.data
            s = sp.csc_matrix((v, (i, j)), shape=self.shape)
        else:
            s = self.data
        if self.is_symmetric:
            s = s + sp.tril(s, k=-1).T
        return sp.csc_matrix(s)

    def toarray(self):
        e = self._expanded
        return np.array(e) if isinstance(e, np.ndarray) else e.toarray()

    def tocsc(self):
        return sp.csc_matrix(self._expanded)

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.cols,):
            raise DimensionError(f"expected vector of length {self.cols}, got {v.shape}")
        return np.asarray(self._expanded @ v).ravel()

    def rmatvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.rows,):
            raise DimensionError(f"expected vector of length {self.rows}, got {v.shape}")
        return np.asarray(self._expanded.T @ v).ravel()

    def diagonal(self):
        e = self._expanded
        return np.array(e.diagonal(), dtype=float)

    def norm(self):
        """Frobenius norm of the expanded matrix."""
        e = self._expanded
        if isinstance(e, np.ndarray):
            return float(np.linalg.norm(e))
        return float(sp.linalg.norm(e))

    def __repr__(self):
        return (f"MatrixStorage({self.rows}x{self.cols}, layout={self.layout}, "
                f"symmetry={self.symmetry})")


def as_storage(a, symmetric=None):
    """Coerce an ndarray, scipy sparse matrix or storage to :class:`MatrixStorage`.

    With ``symmetric=None`` the tag of an existing storage is kept and raw
    arrays are tagged general.
    """
    if isinstance(a, MatrixStorage):
        if symmetric is None or symmetric == a.is_symmetric:
            return a
        if symmetric:
            return MatrixStorage.from_dense(a.toarray(), symmetric=True) if a.layout == "dense" \
                else MatrixStorage.from_sparse(a.tocsc(), symmetric=True)
        return MatrixStorage(a.rows, a.cols, "sparse-compressed-column", a.tocsc()) \
            if a.layout != "dense" else MatrixStorage.from_dense(a.toarray())
    if sp.issparse(a):
        return MatrixStorage.from_sparse(a, symmetric=bool(symmetric))
    return MatrixStorage.from_dense(a, symmetric=bool(symmetric))


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """A map ``R^cols -> R^rows`` given by callables.

    ``matrix`` is kept when the operator wraps an explicit matrix so that
    dense oracles can recover it without probing.
    """

    rows: int
    cols: int
    matvec: Callable[[np.ndarray], np.ndarray]
    rmatvec: Optional[Callable[[np.ndarray], np.ndarray]] = None
    symmetric: bool = False
    matrix: Optional[MatrixStorage] = field(default=None, repr=False)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, v):
        return apply_operator(self, v)

    def apply_transpose(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.rows,):
            raise DimensionError(f"expected vector of length {self.rows}, got {v.shape}")
        if self.rmatvec is not None:
            return np.asarray(self.rmatvec(v), dtype=float).ravel()
        if self.symmetric:
            return np.asarray(self.matvec(v), dtype=float).ravel()
        raise NotImplementedError("operator has no transpose product")

    def to_dense(self):
        """Explicit matrix; probes with unit vectors when none is attached."""
        if self.matrix is not None:
            return self.matrix.toarray()
        out = np.empty((self.rows, self.cols))
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self.apply(e)
            e[j] = 0.0
        return out


def aslinearoperator(a, symmetric=None):
    """Wrap ``a`` (operator, storage, ndarray or sparse matrix) as a LinearOperator."""
    if isinstance(a, LinearOperator):
        return a
    s = as_storage(a)
    if symmetric is None:
        if s.is_symmetric:
            symmetric = True
        elif s.rows == s.cols:
            d = s._expanded
            diff = d - d.T
            scale = max(s.norm(), 1.0)
            dn = np.linalg.norm(diff) if isinstance(diff, np.ndarray) else sp.linalg.norm(diff)
            symmetric = bool(dn <= 1e-14 * scale)
        else:
            symmetric = False
    return LinearOperator(s.rows, s.cols, s.matvec, s.rmatvec, bool(symmetric), s)


def apply_operator(op, v):
    """Return ``op @ v`` after checking the length of ``v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (op.cols,):
        raise DimensionError(f"expected vector of length {op.cols}, got {v.shape}")
    out = np.asarray(op.matvec(v), dtype=float).ravel()
    if out.shape != (op.rows,):
        raise DimensionError("operator returned a vector of the wrong length")
    return out


def identity(n):
    return aslinearoperator(MatrixStorage.from_dense(np.eye(n), symmetric=True))


def zeros(rows, cols=None):
    cols = rows if cols is None else cols
    return aslinearoperator(MatrixStorage.from_triplets(rows, cols, [], [], [],
                                                        symmetric=rows == cols))


def assemble_block_2x2(topleft, B, C):
    """Assemble ``[[topleft, B^T], [B, -C]]``.

    The result is dense when every block is dense and compressed-column
    otherwise.  It is tagged symmetric only when ``topleft`` is symmetric.
    """
    T = as_storage(topleft)
    Bs = as_storage(B)
    Cs = as_storage(C)
    n, m = T.rows, Bs.rows
    if T.cols != n:
        raise DimensionError("top-left block must be square")
    if Bs.cols != n:
        raise DimensionError(f"B has {Bs.cols} columns, top-left block is {n}x{n}")
    if Cs.shape != (m, m):
        raise DimensionError(f"C must be {m}x{m}, got {Cs.rows}x{Cs.cols}")
    sym = T.is_symmetric
    if not sym and T.layout == "dense":
        a = T.data
        sym = bool(np.allclose(a, a.T, rtol=0, atol=1e-14 * max(np.abs(a).max(initial=0.0), 1.0)))
    if all(s.layout == "dense" for s in (T, Bs, Cs)):
        b = Bs.toarray()
        K = np.block([[T.toarray(), b.T], [b, -Cs.toarray()]])
        return MatrixStorage.from_dense(K, symmetric=sym)
    K = sp.bmat([[T.tocsc(), Bs.tocsc().T], [Bs.tocsc(), -Cs.tocsc()]], format="csc")
    if sym:
        return MatrixStorage.from_sparse(K, symmetric=True)
    return MatrixStorage(n + m, n + m, "sparse-compressed-column", K)


# -- Matrix Market ------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_matrix_market(path, a, comment=None):
    """Write storage (or array) as Matrix Market.

    Dense storage is written in array format, sparse layouts in coordinate
    format.  Symmetric matrices are written with the lower triangle only.
    Values use ``repr`` so a read recovers them bit for bit.
    """
    s = as_storage(a)
    path = Path(path)
    lines = []
    if s.layout == "dense":
        sym = "symmetric" if s.is_symmetric else "general"
        lines.append(f"%%MatrixMarket matrix array real {sym}")
        if comment:
            lines.extend("%" + c for c in comment.splitlines())
        lines.append(f"{s.rows} {s.cols}")
        a = s.data
        for j in range(s.cols):
            start = j if s.is_symmetric else 0
            for i in range(start, s.rows):
                lines.append(_fmt(a[i, j]))
    else:
        sym = "symmetric" if s.is_symmetric else "general"
        if s.layout == "sparse-triplet":
            i, j, v = s.data
        else:
            coo = s.data.tocoo()
            order = np.lexsort((coo.row, coo.col))
            i, j, v = coo.row[order], coo.col[order], coo.data[order]
        lines.append(f"%%MatrixMarket matrix coordinate real {sym}")
        if comment:
            lines.extend("%" + c for c in comment.splitlines())
        lines.append(f"{s.rows} {s.cols} {len(v)}")
        for ii, jj, vv in zip(i, j, v):
            lines.append(f"{ii + 1} {jj + 1} {_fmt(vv)}")
    path.write_text("\n".join(lines) + "\n")


def read_matrix_market(path):
    """Parse a real Matrix Market file (coordinate or array format)."""
    path = Path(path)
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("empty file", path, 1)
    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket header", path, 1)
    obj, fmt, fieldtype, sym = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", path, 1)
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", path, 1)
    if fieldtype not in ("real", "integer", "double"):
        raise MatrixMarketError(f"unsupported field type {fieldtype!r}", path, 1)
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", path, 1)
    symmetric = sym == "symmetric"

    body = [(n + 1, ln.strip()) for n, ln in enumerate(lines)
            if n > 0 and ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError("missing size line", path, len(lines))
    lineno, size_line = body[0]
    try:
        dims = [int(t) for t in size_line.split()]
    except ValueError:
        raise MatrixMarketError(f"bad size line {size_line!r}", path, lineno) from None
    entries = body[1:]

    def number(tok, ln):
        try:
            return float(tok)
        except ValueError:
            raise MatrixMarketError(f"bad number {tok!r}", path, ln) from None

    if fmt == "array":
        if len(dims) != 2:
            raise MatrixMarketError("array size line needs 2 integers", path, lineno)
        rows, cols = dims
        if symmetric and rows != cols:
            raise MatrixMarketError("symmetric matrix must be square", path, lineno)
        expected = rows * (rows + 1) // 2 if symmetric else rows * cols
        if len(entries) != expected:
            ln = entries[-1][0] if entries else lineno
            raise MatrixMarketError(f"expected {expected} values, found {len(entries)}", path, ln)
        a = np.zeros((rows, cols))
        k = 0
        for j in range(cols):
            for i in range(j if symmetric else 0, rows):
                ln, tok = entries[k]
                if len(tok.split()) != 1:
                    raise MatrixMarketError("expected one value per line", path, ln)
                a[i, j] = number(tok, ln)
                k += 1
        if symmetric:
            a = np.tril(a) + np.tril(a, -1).T
        return MatrixStorage.from_dense(a, symmetric=symmetric)

    if len(dims) != 3:
        raise MatrixMarketError("coordinate size line needs 3 integers", path, lineno)
    rows, cols, nnz = dims
    if symmetric and rows != cols:
        raise MatrixMarketError("symmetric matrix must be square", path, lineno)
    if len(entries) != nnz:
        ln = entries[-1][0] if entries else lineno
        raise MatrixMarketError(f"expected {nnz} entries, found {len(entries)}", path, ln)
    ii = np.empty(nnz, dtype=np.int64)
    jj = np.empty(nnz, dtype=np.int64)
    vv = np.empty(nnz)
    for k, (ln, tok) in enumerate(entries):
        parts = tok.split()
        if len(parts) != 3:
            raise MatrixMarketError("expected 'row col value'", path, ln)
        try:
            r, c = int(parts[0]) - 1, int(parts[1]) - 1
        except ValueError:
            raise MatrixMarketError("bad index", path, ln) from None
        if not (0 <= r < rows and 0 <= c < cols):
            raise MatrixMarketError(f"index ({r + 1}, {c + 1}) out of bounds", path, ln)
        if symmetric and r < c:
            raise MatrixMarketError("upper-triangle entry in symmetric file", path, ln)
        ii[k], jj[k], vv[k] = r, c, number(parts[2], ln)
    return MatrixStorage.from_triplets(rows, cols, ii, jj, vv, symmetric=symmetric)


def write_vector(path, v, comment=None):
    v = np.asarray(v, dtype=float).reshape(-1, 1)
    write_matrix_market(path, MatrixStorage.from_dense(v), comment=comment)


def read_vector(path):
    s = read_matrix_market(path)
    if s.cols != 1:
        raise MatrixMarketError(f"expected an n x 1 vector, got {s.rows}x{s.cols}", path)
    return s.toarray().ravel()
