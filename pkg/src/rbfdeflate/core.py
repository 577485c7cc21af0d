"""Shared types: the Wendland basis, interpolation problems, solution
vectors and a minimal CSR matrix."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._backend import get_backend

#: entries of a sparse matrix with smaller magnitude are not stored
DROP_TOL = 1e-14


class DegenerateInputError(ValueError):
    """Input that makes the interpolation system singular (e.g. duplicate sites)."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """A coarse basis, or the coarse matrix ``Q^T A Q``, is numerically singular."""

    def __init__(self, n_columns: int, ratio: float, what: str = "pivot ratio"):
        super().__init__(
            f"coarse space with {n_columns} columns is rank deficient ({what} {ratio:.3e})"
        )
        self.n_columns = n_columns
        self.ratio = ratio


class BasisKind(str, Enum):
    WENDLAND_C2 = "wendland_c2"


def wendland_c2(t):
    """Wendland C2 profile (1 - t)_+^4 (4t + 1), vectorized over ``t >= 0``."""
    t = np.asarray(t, dtype=np.float64)
    s = np.clip(1.0 - t, 0.0, None)
    s2 = s * s
    return s2 * s2 * (4.0 * t + 1.0)


@dataclass(frozen=True)
class RadialBasis:
    """Compactly supported radial function with support ``support_radius``."""

    support_radius: float
    kind: BasisKind = BasisKind.WENDLAND_C2

    def __post_init__(self):
        if not (self.support_radius > 0 and np.isfinite(self.support_radius)):
            raise ValueError(f"support_radius must be positive, got {self.support_radius}")
        object.__setattr__(self, "kind", BasisKind(self.kind))

    def __call__(self, r):
        """Evaluate phi at distance(s) ``r`` (array-friendly, no checks)."""
        return wendland_c2(np.asarray(r, dtype=np.float64) / self.support_radius)


def phi_eval(basis: RadialBasis, r: float) -> float:
    """Evaluate the basis function at a single distance ``r >= 0``."""
    if not r >= 0:
        raise ValueError(f"distance must be non-negative, got {r}")
    return float(basis(r))


@dataclass(frozen=True, eq=False)
class InterpolationProblem:
    """Scattered sites in [0, 1]^d with one value per site.

    The polynomial tail is always of degree one, so the system has
    ``l = d + 1`` extra unknowns.
    """

    sites: np.ndarray
    values: np.ndarray
    basis: RadialBasis
    poly_degree: int = 1

    def __post_init__(self):
        sites = np.ascontiguousarray(self.sites, dtype=np.float64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if sites.ndim != 2 or sites.shape[1] not in (2, 3):
            raise ValueError(f"sites must have shape (N, 2) or (N, 3), got {sites.shape}")
        if sites.shape[0] < 1:
            raise ValueError("at least one site is required")
        if values.shape != (sites.shape[0],):
            raise ValueError(f"expected {sites.shape[0]} values, got shape {values.shape}")
        if not np.all(np.isfinite(sites)) or sites.min() < 0.0 or sites.max() > 1.0:
            raise ValueError("site coordinates must be finite and normalized to [0, 1]")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if self.poly_degree != 1:
            raise ValueError("only degree-one polynomial tails are supported")
        sites.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "values", values)

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @property
    def n_poly(self) -> int:
        return self.dim + 1

    @property
    def size(self) -> int:
        return self.n_sites + self.n_poly

    def with_values(self, values) -> InterpolationProblem:
        return InterpolationProblem(self.sites, values, self.basis, self.poly_degree)


@dataclass(frozen=True, eq=False)
class SolutionVector:
    """RBF coefficients ``lam`` and polynomial coefficients ``c`` (ordered
    1, x_1, ..., x_d)."""

    lam: np.ndarray
    c: np.ndarray

    @classmethod
    def from_array(cls, chi, n_sites: int) -> SolutionVector:
        chi = np.asarray(chi, dtype=np.float64)
        return cls(chi[:n_sites].copy(), chi[n_sites:].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lam, self.c])

    def __len__(self):
        return self.lam.shape[0] + self.c.shape[0]


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed sparse row matrix with sorted column indices per row."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        for name, dtype in (("indptr", np.intp), ("indices", np.intp), ("data", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        rows, cols = self.shape
        object.__setattr__(self, "shape", (int(rows), int(cols)))
        if self.indptr.shape != (rows + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr must have length rows + 1 and start at 0")
        if self.indptr[-1] != self.indices.shape[0] or self.data.shape != self.indices.shape:
            raise ValueError("indptr, indices and data lengths disagree")

    @classmethod
    def from_dense(cls, dense, drop_tol: float = DROP_TOL) -> SparseMatrix:
        dense = np.asarray(dense, dtype=np.float64)
        mask = np.abs(dense) >= drop_tol
        rows, cols = np.nonzero(mask)
        indptr = np.zeros(dense.shape[0] + 1, dtype=np.intp)
        np.cumsum(mask.sum(axis=1), out=indptr[1:])
        return cls(indptr, cols, dense[rows, cols], dense.shape)

    @classmethod
    def identity(cls, n: int) -> SparseMatrix:
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def check(self) -> None:
        """Raise ``ValueError`` unless the CSR invariants hold."""
        rows, cols = self.shape
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be non-decreasing")
        if self.nnz and (self.indices.min() < 0 or self.indices.max() >= cols):
            raise ValueError("column index out of range")
        row_of = np.repeat(np.arange(rows), np.diff(self.indptr))
        same_row = row_of[1:] == row_of[:-1]
        if np.any(np.diff(self.indices)[same_row] <= 0):
            raise ValueError("column indices must be strictly increasing within a row")
        if np.any(np.abs(self.data) < DROP_TOL):
            raise ValueError("explicitly stored entries below the drop threshold")

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        out[rows, self.indices] = self.data
        return out

    def matvec(self, x, backend: str | None = None) -> np.ndarray:
        return spmv(self, x, backend=backend)

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: SparseMatrix, x, backend: str | None = None) -> np.ndarray:
    """Sparse matrix-vector product ``A @ x``.

    Rows are processed in order and each row sum accumulates in ascending
    column order, so results are bitwise reproducible for either backend.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"vector of length {x.shape} does not match matrix shape {A.shape}")
    return get_backend(backend).csr_matvec(A.indptr, A.indices, A.data, x)
