"""
Dense and sparse kernels shared by every reasoning engine.

Dense matrices are plain float64 ``numpy`` arrays. Boolean and witness-count
matrices wrap canonical ``scipy.sparse`` CSR matrices: coordinates are used for
construction, compressed rows for multiplication.
"""

from typing import Callable, Dict, Iterable, Iterator, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .exceptions import GradientCheckError, NonFiniteError, ParameterValidationError, ShapeError

DenseMatrix = np.ndarray
RngLike = Union[int, np.random.Generator]

NORM_EPS = 1e-12
RNG_ALGORITHM = "PCG64"
DEFAULT_SEED = 42


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for the named substream ``stream`` of ``seed``"""
    if seed < 0 or seed >= 2 ** 64:
        raise ParameterValidationError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.PCG64(sequence))


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(int(rng))


def _canonical(matrix: sp.spmatrix, dtype: type) -> sp.csr_matrix:
    csr = sp.csr_matrix(matrix, dtype=dtype)
    csr.sum_duplicates()
    csr.eliminate_zeros()
    csr.sort_indices()
    return csr


class SparseCountMatrix:
    """Sparse matrix of non-negative 64-bit witness counts"""

    def __init__(self, csr: sp.spmatrix):
        self._csr = _canonical(csr, np.int64)

    @property
    def shape(self) -> Tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    def counts(self) -> Dict[Tuple[int, int], int]:
        coo = self._csr.tocoo()
        return {(int(r), int(c)): int(v) for r, c, v in zip(coo.row, coo.col, coo.data)}

    def __repr__(self) -> str:
        return f"SparseCountMatrix(shape={self.shape}, nnz={self.nnz})"


class SparseBoolMatrix:
    """
    Sparse 0/1 matrix. Two matrices are equal iff they have the same shape and
    the same entry set, regardless of how they were built.
    """

    __hash__ = None  # type: ignore[assignment]

    def __init__(self, csr: sp.spmatrix):
        self._csr = _canonical(csr, np.bool_)

    @classmethod
    def from_pairs(cls, shape: Tuple[int, int], pairs: Iterable[Tuple[int, int]]) -> "SparseBoolMatrix":
        rows, cols = shape
        coords = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if coords.size:
            bad = (coords[:, 0] < 0) | (coords[:, 0] >= rows) | (coords[:, 1] < 0) | (coords[:, 1] >= cols)
            if bad.any():
                first = tuple(int(v) for v in coords[np.argmax(bad)])
                raise ShapeError(f"Entry {first} is out of bounds for shape {shape}")
        return cls.from_coords(shape, coords[:, 0], coords[:, 1])

    @classmethod
    def from_coords(cls, shape: Tuple[int, int], rows: np.ndarray, cols: np.ndarray) -> "SparseBoolMatrix":
        data = np.ones(len(rows), dtype=np.int64)
        return cls(sp.coo_matrix((data, (rows, cols)), shape=shape))

    @classmethod
    def empty(cls, shape: Tuple[int, int]) -> "SparseBoolMatrix":
        return cls(sp.csr_matrix(shape, dtype=np.bool_))

    @classmethod
    def identity(cls, n: int) -> "SparseBoolMatrix":
        return cls(sp.identity(n, dtype=np.bool_, format="csr"))

    @property
    def shape(self) -> Tuple[int, int]:
        return self._csr.shape

    @property
    def nnz(self) -> int:
        return int(self._csr.nnz)

    @property
    def csr(self) -> sp.csr_matrix:
        return self._csr

    def pairs(self) -> Set[Tuple[int, int]]:
        return set(self.iter_pairs())

    def iter_pairs(self) -> Iterator[Tuple[int, int]]:
        """Entries in row-major order"""
        coo = self._csr.tocoo()
        return zip(coo.row.tolist(), coo.col.tolist())

    def row(self, i: int) -> np.ndarray:
        start, stop = self._csr.indptr[i], self._csr.indptr[i + 1]
        return self._csr.indices[start:stop].copy()

    def column(self, j: int) -> np.ndarray:
        return np.flatnonzero(self._csr[:, j].toarray().ravel())

    def diagonal_entries(self) -> np.ndarray:
        return np.flatnonzero(self._csr.diagonal())

    def transpose(self) -> "SparseBoolMatrix":
        return SparseBoolMatrix(self._csr.transpose())

    @property
    def T(self) -> "SparseBoolMatrix":
        return self.transpose()

    def union(self, other: "SparseBoolMatrix") -> "SparseBoolMatrix":
        _require_same_shape(self, other)
        return SparseBoolMatrix(self._csr + other._csr)

    def difference(self, other: "SparseBoolMatrix") -> "SparseBoolMatrix":
        """Entries of ``self`` that are absent from ``other``"""
        _require_same_shape(self, other)
        return SparseBoolMatrix(self._csr > other._csr)

    def issubset(self, other: "SparseBoolMatrix") -> bool:
        return self.difference(other).nnz == 0

    def to_counts(self) -> SparseCountMatrix:
        return SparseCountMatrix(self._csr)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def __contains__(self, pair: Tuple[int, int]) -> bool:
        row, col = pair
        return bool(self._csr[row, col])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseBoolMatrix):
            return NotImplemented
        if self.shape != other.shape or self.nnz != other.nnz:
            return False
        return (self._csr != other._csr).nnz == 0

    def __repr__(self) -> str:
        return f"SparseBoolMatrix(shape={self.shape}, nnz={self.nnz})"


def _require_same_shape(a: SparseBoolMatrix, b: SparseBoolMatrix) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch: {a.shape} vs {b.shape}")


def bool_matmul_count(a: SparseBoolMatrix, b: SparseBoolMatrix) -> SparseCountMatrix:
    """Witness counts sum_y a[x, y] * b[y, z] over Boolean operands"""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot contract {a.shape} with {b.shape}: inner dimensions {a.shape[1]} != {b.shape[0]}")
    product = a.csr.astype(np.int64) @ b.csr.astype(np.int64)
    return SparseCountMatrix(product)


def heaviside(counts: SparseCountMatrix) -> SparseBoolMatrix:
    """Step function: an entry survives iff its count is positive"""
    return SparseBoolMatrix(counts.csr > 0)


def bool_matmul(a: SparseBoolMatrix, b: SparseBoolMatrix) -> SparseBoolMatrix:
    return heaviside(bool_matmul_count(a, b))


def ensure_finite(matrix: np.ndarray, what: str = "matrix") -> np.ndarray:
    finite = np.isfinite(matrix)
    if not finite.all():
        bad = int(np.flatnonzero(~finite.reshape(len(matrix), -1).all(axis=1))[0]) if matrix.ndim else 0
        raise NonFiniteError(f"Non-finite values in {what} (first offending row {bad})", index=bad)
    return matrix


def _as_dense(matrix: np.ndarray, name: str) -> np.ndarray:
    array = np.asarray(matrix, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {array.shape}")
    return array


def dense_matmul(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    a = _as_dense(a, "left operand")
    b = _as_dense(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply {a.shape} by {b.shape}")
    return ensure_finite(a @ b, "matrix product")


def batched_transform(rows: DenseMatrix, matrices: Union[np.ndarray, Sequence[np.ndarray]]) -> DenseMatrix:
    """Row i of the result is rows[i] @ matrices[i] (the 'bi,bij->bj' contraction)"""
    rows = _as_dense(rows, "rows")
    stack = np.asarray(matrices, dtype=np.float64)
    batch, width = rows.shape
    if batch == 0:
        return np.zeros((0, stack.shape[-1] if stack.ndim == 3 else width))
    if stack.ndim != 3 or stack.shape[0] != batch:
        raise ShapeError(f"Ragged batch: {batch} rows but matrix stack of shape {stack.shape}")
    if stack.shape[1] != width:
        raise ShapeError(f"Row width {width} does not match matrix shape {stack.shape[1:]}")
    return ensure_finite(np.matmul(rows[:, None, :], stack)[:, 0, :], "batched transform")


def row_normalize(matrix: DenseMatrix, eps: float = NORM_EPS) -> DenseMatrix:
    """Scale rows to unit L2 norm; rows with norm below ``eps`` are returned unchanged"""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    safe = np.where(norms < eps, 1.0, norms)
    return matrix / safe


def row_normalize_vjp(matrix: DenseMatrix, grad_out: DenseMatrix, eps: float = NORM_EPS) -> DenseMatrix:
    """Gradient with respect to ``matrix`` of <grad_out, row_normalize(matrix)>"""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    guarded = norms < eps
    safe = np.where(guarded, 1.0, norms)
    unit = matrix / safe
    radial = np.sum(unit * grad_out, axis=-1, keepdims=True)
    grad = (grad_out - unit * radial) / safe
    return np.where(guarded, grad_out, grad)


def xavier_uniform(rows: int, cols: int, rng: RngLike = DEFAULT_SEED) -> DenseMatrix:
    """Uniform samples in [-sqrt(6 / (rows + cols)), +sqrt(6 / (rows + cols))]"""
    if rows < 1 or cols < 1:
        raise ShapeError(f"Xavier initialization needs positive dimensions, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return _as_rng(rng).uniform(-bound, bound, size=(rows, cols))


def finite_diff_check(loss_fn: Callable[[Mapping[str, np.ndarray]], float],
                      params: Mapping[str, np.ndarray],
                      analytic_grads: Mapping[str, np.ndarray],
                      eps: float = 1e-5,
                      max_coords: Optional[int] = None,
                      rng: RngLike = DEFAULT_SEED) -> float:
    """
    Maximum relative error between analytic gradients and central differences.

    ``loss_fn`` receives ``params`` after one coordinate has been perturbed in
    place; every coordinate is restored afterwards. With ``max_coords`` set,
    at most that many coordinates per parameter block are sampled.
    """
    if eps <= 0:
        raise ParameterValidationError(f"eps must be positive, got {eps}")
    generator = _as_rng(rng)
    worst = 0.0
    for name in sorted(params):
        values = params[name]
        grad = np.asarray(analytic_grads[name], dtype=np.float64)
        if grad.shape != values.shape:
            raise ShapeError(f"Gradient for '{name}' has shape {grad.shape}, parameter has {values.shape}")
        coords = np.arange(values.size)
        if max_coords is not None and values.size > max_coords:
            coords = np.sort(generator.choice(values.size, size=max_coords, replace=False))
        for coord in coords:
            index = np.unravel_index(int(coord), values.shape)
            original = values[index]
            values[index] = original + eps
            plus = float(loss_fn(params))
            values[index] = original - eps
            minus = float(loss_fn(params))
            values[index] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise GradientCheckError(f"Non-finite loss while perturbing {name}[{int(coord)}]")
            numeric = (plus - minus) / (2.0 * eps)
            analytic = float(grad[index])
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
