"""Dense ground truth: construction, Matrix Market I/O, random fixtures and
the structure-driven SpMV oracle."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateEntry,
    IndexOutOfDeclaredBounds,
    MalformedHeader,
    MatrixMarketError,
    OutOfBounds,
    UnsupportedKind,
)

# Random nonzeros are drawn uniformly from this closed integer range so that
# any summation order gives the same float result.
RANDOM_VALUE_RANGE = (1, 9)


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major 2-D storage with every entry, zero or not, held explicitly."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D grid, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"matrix needs at least one row and column, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    def __getitem__(self, ij):
        return float(self.values[ij])

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None

    def row_lengths(self) -> list[int]:
        return [int(n) for n in np.count_nonzero(self.values, axis=1)]

    def triplets(self) -> list[tuple[int, int, float]]:
        """Nonzero ``(i, j, value)`` triples in row-major order."""
        rows, cols = np.nonzero(self.values)
        return [(int(i), int(j), float(self.values[i, j])) for i, j in zip(rows, cols)]

    def is_integral(self) -> bool:
        return bool(np.all(np.mod(self.values, 1.0) == 0.0))

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> DenseMatrix:
        return cls(np.zeros((n_rows, n_cols)))


def as_vector(x, length: int | None = None) -> np.ndarray:
    """Coerce ``x`` into a 1-D float64 vector, optionally checking its length."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {vec.shape}")
    if length is not None and vec.shape[0] != length:
        raise DimensionMismatch(f"vector has length {vec.shape[0]}, expected {length}")
    return vec


def dense_from_triplets(n_rows: int, n_cols: int, entries: Iterable[tuple[int, int, float]]) -> DenseMatrix:
    grid = np.zeros((n_rows, n_cols))
    seen = set()
    for i, j, v in entries:
        if not (0 <= i < n_rows and 0 <= j < n_cols):
            raise OutOfBounds(f"entry ({i}, {j}) outside {n_rows}x{n_cols}")
        if (i, j) in seen:
            raise DuplicateEntry(f"entry ({i}, {j}) listed twice")
        seen.add((i, j))
        grid[i, j] = v
    return DenseMatrix(grid)


def random_sparse(n_rows: int, n_cols: int, density: float, seed: int, *, integer: bool = True) -> DenseMatrix:
    """Bernoulli(density) sparsity pattern over the grid.

    With ``integer=True`` (the default) nonzeros are uniform over
    ``RANDOM_VALUE_RANGE``; otherwise they are uniform floats in [0.5, 1.5).
    """
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    rng = np.random.default_rng(seed)
    mask = rng.random((n_rows, n_cols)) < density
    if integer:
        lo, hi = RANDOM_VALUE_RANGE
        vals = rng.integers(lo, hi + 1, size=(n_rows, n_cols)).astype(np.float64)
    else:
        vals = rng.uniform(0.5, 1.5, size=(n_rows, n_cols))
    return DenseMatrix(np.where(mask, vals, 0.0))


def spmv_oracle(a: DenseMatrix, x) -> np.ndarray:
    """y(i) = sum_j A(i, j) * x(j), visiting every j (zeros included) in
    ascending order.  Rows are processed together, but each row's
    accumulation order is strictly sequential over j."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != a.n_cols:
        raise DimensionMismatch(f"x has shape {x.shape}, matrix has {a.n_cols} columns")
    y = np.zeros(a.n_rows)
    for j in range(a.n_cols):
        y = y + a.values[:, j] * x[j]
    return y


# ---------------------------------------------------------------------------
# Matrix Market (coordinate real general only)

_BANNER = "%%MatrixMarket"


def parse_matrix_market(text: str | TextIO) -> DenseMatrix:
    stream = io.StringIO(text) if isinstance(text, str) else text
    lines = iter(enumerate(stream, start=1))

    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MalformedHeader("empty input", line=1) from None
    tokens = header.split()
    if len(tokens) != 5 or tokens[0] != _BANNER:
        raise MalformedHeader(f"expected '{_BANNER} matrix coordinate real general'", line=lineno)
    obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
    if obj != "matrix" or fmt not in ("coordinate", "array"):
        raise MalformedHeader(f"unrecognised object/format '{obj} {fmt}'", line=lineno)
    if (fmt, field, symmetry) != ("coordinate", "real", "general"):
        raise UnsupportedKind(f"only 'matrix coordinate real general' is supported, got '{obj} {fmt} {field} {symmetry}'", line=lineno)

    size = None
    for lineno, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        size = (lineno, stripped.split())
        break
    if size is None:
        raise MalformedHeader("missing size line", line=lineno + 1)
    lineno, parts = size
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise MalformedHeader(f"size line must hold three integers, got {' '.join(parts)!r}", line=lineno) from None
    if n_rows < 1 or n_cols < 1 or nnz < 0:
        raise MalformedHeader(f"invalid dimensions {n_rows}x{n_cols} with {nnz} entries", line=lineno)

    grid = np.zeros((n_rows, n_cols))
    seen = set()
    count = 0
    for lineno, line in lines:
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {stripped!r}", line=lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry {stripped!r}", line=lineno) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise IndexOutOfDeclaredBounds(f"entry ({i}, {j}) outside declared {n_rows}x{n_cols}", line=lineno)
        if (i, j) in seen:
            raise DuplicateEntry(f"line {lineno}: entry ({i}, {j}) listed twice")
        seen.add((i, j))
        grid[i - 1, j - 1] = v
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"declared {nnz} entries but found {count}")
    return DenseMatrix(grid)


def serialize_matrix_market(a: DenseMatrix) -> str:
    """Write the nonzeros of ``a`` in row-major order.  ``repr`` keeps every
    float64 value exact through a parse round trip."""
    trip = a.triplets()
    out = [f"{_BANNER} matrix coordinate real general", f"{a.n_rows} {a.n_cols} {len(trip)}"]
    out.extend(f"{i + 1} {j + 1} {v!r}" for i, j, v in trip)
    return "\n".join(out) + "\n"
