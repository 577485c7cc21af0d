"""Saddle-point system assembly with a uniform-grid neighbor search.

The block operator ``[[Phi, P], [P^T, 0]]`` is never materialized; only the
sparse ``Phi`` and the dense ``N x (d + 1)`` polynomial block are stored.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._backend import get_backend
from .core import (
    DROP_TOL,
    DegenerateInputError,
    InterpolationProblem,
    SparseMatrix,
    spmv,
    wendland_c2,
)

#: sites closer than this (normalized units) are treated as duplicates
DUPLICATE_TOL = 1e-12

_MAX_CELLS = 50_000_000


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Sites bucketed into cubic cells of edge ``cell_size``.

    ``order`` lists site indices sorted by linear cell key (stable, so
    ascending within a cell); the sites of cell ``k`` are
    ``order[starts[k]:starts[k + 1]]``.
    """

    sites: np.ndarray
    cell_size: float
    origin: np.ndarray
    shape: np.ndarray
    strides: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    offsets: np.ndarray

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    def cell_of(self, points) -> np.ndarray:
        """Integer cell coordinates of ``points`` (may lie outside the grid)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.floor((points - self.origin) / self.cell_size).astype(np.intp)

    @property
    def cells(self) -> dict[tuple[int, ...], list[int]]:
        """Occupied cells mapped to the site indices they contain."""
        coords = self.cell_of(self.sites)
        out: dict[tuple[int, ...], list[int]] = {}
        for idx in self.order:
            out.setdefault(tuple(int(c) for c in coords[idx]), []).append(int(idx))
        return out

    def _args(self):
        return (self.origin, self.cell_size, self.shape, self.strides,
                self.order, self.starts, self.offsets)

    def query(self, points, backend: str | None = None):
        """CSR triple ``(indptr, indices, dist)`` of sites strictly closer than
        ``cell_size`` to each point, indices ascending per row."""
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ValueError(f"points must have shape (M, {self.dim}), got {points.shape}")
        return get_backend(backend).radius_pairs(points, self.sites, *self._args())

    def weighted_sum(self, points, weights, backend: str | None = None) -> np.ndarray:
        """``sum_j weights[j] * phi(|x - site_j| / cell_size)`` at each point."""
        points = np.ascontiguousarray(points, dtype=np.float64)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        return get_backend(backend).rbf_eval_sum(points, self.sites, weights, *self._args())

    def pairs(self, backend: str | None = None) -> set[tuple[int, int]]:
        """All unordered neighbor pairs ``(i, j)``, ``i < j``."""
        indptr, idx, _ = self.query(self.sites, backend)
        rows = np.repeat(np.arange(self.sites.shape[0]), np.diff(indptr))
        keep = rows < idx
        return set(zip(rows[keep].tolist(), idx[keep].tolist()))


def build_grid(sites, radius: float) -> GridIndex:
    sites = np.ascontiguousarray(sites, dtype=np.float64)
    if sites.ndim != 2 or sites.shape[0] == 0:
        raise ValueError("build_grid needs a non-empty (N, d) site array")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    d = sites.shape[1]
    origin = sites.min(axis=0)
    cells = np.floor((sites - origin) / radius).astype(np.intp)
    shape = cells.max(axis=0) + 1
    if np.prod(shape.astype(np.float64)) > _MAX_CELLS:
        raise ValueError(f"radius {radius} gives too fine a grid ({shape.tolist()} cells)")
    # C-order strides; last axis fastest
    strides = np.ones(d, dtype=np.intp)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    keys = cells @ strides
    order = np.argsort(keys, kind="stable").astype(np.intp)
    ncells = int(np.prod(shape))
    starts = np.zeros(ncells + 1, dtype=np.intp)
    np.cumsum(np.bincount(keys, minlength=ncells), out=starts[1:])
    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.intp)
    return GridIndex(sites, float(radius), origin, shape.astype(np.intp), strides,
                     order, starts, offsets)


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Sparse ``Phi`` block, dense polynomial block and right-hand side."""

    phi_block: SparseMatrix
    poly_block: np.ndarray
    rhs: np.ndarray
    grid: GridIndex | None = None

    @property
    def n_sites(self) -> int:
        return self.poly_block.shape[0]

    @property
    def n_poly(self) -> int:
        return self.poly_block.shape[1]

    @property
    def size(self) -> int:
        return self.n_sites + self.n_poly

    def apply(self, x) -> np.ndarray:
        return apply_saddle(self, x)

    __call__ = apply

    def with_values(self, values) -> SaddleSystem:
        """Same operator, new data values (e.g. another color channel)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_sites,):
            raise ValueError(f"expected {self.n_sites} values, got {values.shape}")
        return SaddleSystem(self.phi_block, self.poly_block,
                            np.concatenate([values, np.zeros(self.n_poly)]), self.grid)

    def to_dense(self) -> np.ndarray:
        n, l = self.n_sites, self.n_poly
        A = np.zeros((n + l, n + l))
        A[:n, :n] = self.phi_block.toarray()
        A[:n, n:] = self.poly_block
        A[n:, :n] = self.poly_block.T
        return A


def poly_matrix(points) -> np.ndarray:
    """Monomials ``(1, x_1, ..., x_d)`` evaluated at each point."""
    points = np.asarray(points, dtype=np.float64)
    return np.hstack([np.ones((points.shape[0], 1)), points])


def assemble(problem: InterpolationProblem, backend: str | None = None) -> SaddleSystem:
    sites = problem.sites
    radius = problem.basis.support_radius
    grid = build_grid(sites, radius)
    indptr, idx, dist = grid.query(sites, backend)

    rows = np.repeat(np.arange(problem.n_sites), np.diff(indptr))
    dup = (rows != idx) & (dist < DUPLICATE_TOL)
    if dup.any():
        k = int(np.argmax(dup))
        i, j = int(rows[k]), int(idx[k])
        raise DegenerateInputError(
            f"sites {i} and {j} coincide (distance {dist[k]:.3e}): "
            f"{sites[i].tolist()} vs {sites[j].tolist()}"
        )

    vals = wendland_c2(dist / radius)
    keep = np.abs(vals) >= DROP_TOL
    if not keep.all():
        rows, idx, vals = rows[keep], idx[keep], vals[keep]
        indptr = np.zeros(problem.n_sites + 1, dtype=np.intp)
        np.cumsum(np.bincount(rows, minlength=problem.n_sites), out=indptr[1:])
    phi = SparseMatrix(indptr, idx, vals, (problem.n_sites, problem.n_sites))
    rhs = np.concatenate([problem.values, np.zeros(problem.n_poly)])
    return SaddleSystem(phi, poly_matrix(sites), rhs, grid)


def apply_saddle(system: SaddleSystem, x) -> np.ndarray:
    """Block product ``[Phi x_lam + P x_c, P^T x_lam]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (system.size,):
        raise ValueError(f"vector of shape {x.shape} does not match system size {system.size}")
    n = system.n_sites
    lam, c = x[:n], x[n:]
    top = spmv(system.phi_block, lam) + system.poly_block @ c
    return np.concatenate([top, system.poly_block.T @ lam])
