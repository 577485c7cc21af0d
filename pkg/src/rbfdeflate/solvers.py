"""GCR, coarse-space deflated GCR and a dense direct solver.

Both iterative solvers are full (non-restarted) GCR with complete
orthogonalization of the search directions in the ``<A., A.>`` inner
product. The deflated variant adds a second-level solve on the span of a
small dense matrix ``Q``, which keeps ``Q^T r_k = 0`` at every iteration.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .assembly import SaddleSystem
from .core import RankDeficiencyError

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

#: coarse Gram pivots smaller than this (relative to the largest) mean rank loss
PIVOT_RATIO_TOL = 1e-12
DIRECT_SOLVE_MAX = 5000


class BreakdownError(RuntimeError):
    """``<A w, A w> = 0`` while the residual is still nonzero."""

    def __init__(self, iteration: int):
        super().__init__(f"GCR breakdown at iteration {iteration}: A w_k = 0")
        self.iteration = iteration


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Relative residual targets (strictly decreasing) and iteration cap."""

    tols: tuple[float, ...] = (1e-3, 1e-6)
    max_iter: int = 2000
    record_history: bool = True

    def __post_init__(self):
        tols = tuple(float(t) for t in np.atleast_1d(self.tols))
        if not tols:
            raise ValueError("at least one tolerance is required")
        if any(not 0.0 < t < 1.0 for t in tols):
            raise ValueError(f"tolerances must lie in (0, 1), got {tols}")
        if any(b >= a for a, b in zip(tols, tols[1:])):
            raise ValueError(f"tolerances must be strictly decreasing, got {tols}")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be positive")
        object.__setattr__(self, "tols", tols)
        object.__setattr__(self, "max_iter", int(self.max_iter))


@dataclass
class SolverState:
    """Final iterate, residual and the stored search directions."""

    chi: np.ndarray
    r: np.ndarray
    w: np.ndarray
    Aw: np.ndarray


@dataclass
class SolveReport:
    iterations_per_tol: dict[float, int | None]
    initial_residual_ratio: float
    converged: bool
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    coarse_residual_history: list[float] = field(default_factory=list)
    true_residual_ratio: float = float("nan")
    coarse_size: int = 0
    matvecs: int = 0
    state: SolverState | None = None


class _Directions:
    """Growing store of search directions ``w_i`` and their images ``A w_i``."""

    def __init__(self, n: int, capacity: int = 32):
        self.k = 0
        self.w = np.empty((capacity, n))
        self.Aw = np.empty((capacity, n))
        self.norms = np.empty(capacity)

    def add(self, w, Aw, norm2):
        if self.k == self.w.shape[0]:
            cap = 2 * self.k
            for name in ("w", "Aw"):
                old = getattr(self, name)
                new = np.empty((cap, old.shape[1]))
                new[: self.k] = old
                setattr(self, name, new)
            norms = np.empty(cap)
            norms[: self.k] = self.norms
            self.norms = norms
        self.w[self.k] = w
        self.Aw[self.k] = Aw
        self.norms[self.k] = norm2
        self.k += 1

    def coefficients(self, v):
        """``<A w_i, v> / <A w_i, A w_i>`` for every stored direction."""
        k = self.k
        return (self.Aw[:k] @ v) / self.norms[:k]

    def combine(self, coef):
        k = self.k
        return coef @ self.w[:k], coef @ self.Aw[:k]

    def state(self, chi, r) -> SolverState:
        return SolverState(chi, r, self.w[: self.k].copy(), self.Aw[: self.k].copy())


class _Tracker:
    """Residual history and first crossing of each tolerance.

    Convergence is tested after each update, so a nonzero starting residual
    always costs at least one iteration; an exactly zero one costs none.
    """

    def __init__(self, cfg: SolverConfig, bnorm: float, record: bool):
        self.cfg = cfg
        self.bnorm = bnorm
        self.record = record
        self.history: list[float] = []
        self.crossed: dict[float, int | None] = {t: None for t in cfg.tols}
        self.last = np.inf

    def update(self, k: int, r) -> bool:
        """Record ``r_k``; True once the smallest tolerance is met."""
        ratio = float(np.linalg.norm(r)) / self.bnorm
        self.last = ratio
        if self.record:
            self.history.append(ratio)
        if k == 0 and ratio != 0.0:
            return False
        for t in self.cfg.tols:
            if self.crossed[t] is None and ratio <= t:
                self.crossed[t] = k
        return self.crossed[self.cfg.tols[-1]] is not None


def _counting(apply_A: Operator):
    calls = [0]

    def op(v):
        calls[0] += 1
        return np.asarray(apply_A(v), dtype=np.float64)

    return op, calls


def gcr_solve(apply_A: Operator, b, x0=None, cfg: SolverConfig | None = None,
              keep_state: bool = False):
    """Solve ``A x = b`` with GCR.

    Returns ``(x, report)``. ``A w_{k+1}`` is formed by the same recurrence
    as ``w_{k+1}``, so each iteration costs one product (``A r_{k+1}``).
    Not converging within ``max_iter`` gives ``report.converged = False``.
    """
    cfg = cfg or SolverConfig()
    A, calls = _counting(apply_A)
    b = np.asarray(b, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != b.shape:
        raise ValueError(f"x0 shape {x.shape} does not match b shape {b.shape}")

    r = b - A(x)
    track = _Tracker(cfg, bnorm, cfg.record_history)
    done = track.update(0, r)
    initial_ratio = track.last
    dirs = _Directions(b.shape[0])
    w = r.copy()
    Aw = A(w)
    k = 0
    while not done and k < cfg.max_iter:
        awaw = float(Aw @ Aw)
        if awaw == 0.0:
            raise BreakdownError(k)
        alpha = float(r @ Aw) / awaw
        x = x + alpha * w
        r = r - alpha * Aw
        dirs.add(w, Aw, awaw)
        k += 1
        done = track.update(k, r)
        if done or k == cfg.max_iter:
            break
        Ar = A(r)
        beta = -dirs.coefficients(Ar)
        sw, sAw = dirs.combine(beta)
        w = r + sw
        Aw = Ar + sAw

    return x, _report(track, initial_ratio, done, k, A, b, x, 0, calls, dirs, r, keep_state)


def _report(track, initial_ratio, done, k, A, b, x, m, calls, dirs, r, keep_state,
            coarse_hist=None):
    true_ratio = float(np.linalg.norm(b - A(x))) / track.bnorm
    if not done:
        logger.info("not converged after %d iterations (residual %.3e)", k, track.last)
    return SolveReport(
        iterations_per_tol=dict(track.crossed),
        initial_residual_ratio=initial_ratio,
        converged=done,
        iterations=k,
        residual_history=track.history,
        coarse_residual_history=coarse_hist or [],
        true_residual_ratio=true_ratio,
        coarse_size=m,
        matvecs=calls[0],
        state=dirs.state(x, r) if keep_state else None,
    )


@dataclass(frozen=True, eq=False)
class CoarseOperator:
    """LU-factorized ``Q^T A Q`` plus the operator it was built from."""

    apply_A: Operator
    gram: np.ndarray
    lu: tuple[np.ndarray, np.ndarray] | None
    pivot_ratio: float

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    def solve_coarse(self, v) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=np.float64))
        if self.size == 0:
            return np.zeros(0)
        return scipy.linalg.lu_solve(self.lu, v)


def _as_coarse_matrix(Q, n: int | None = None) -> np.ndarray:
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[:, None]
    if n is not None and Q.shape[0] != n:
        raise ValueError(f"Q has {Q.shape[0]} rows, expected {n}")
    return Q


def build_coarse_operator(apply_A: Operator, Q) -> CoarseOperator:
    """Form ``Q^T A Q`` with one operator application per column and
    LU-factorize it."""
    Q = _as_coarse_matrix(Q)
    n, m = Q.shape
    if m > n:
        raise ValueError(f"coarse space has {m} columns but only {n} rows")
    if m == 0:
        return CoarseOperator(apply_A, np.zeros((0, 0)), None, 1.0)
    AQ = np.column_stack([np.asarray(apply_A(Q[:, j]), dtype=np.float64) for j in range(m)])
    gram = Q.T @ AQ
    with warnings.catch_warnings():
        # singularity is judged by the pivot ratio below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(gram, check_finite=True)
    diag = np.abs(np.diag(lu))
    ratio = float(diag.min() / diag.max()) if diag.max() > 0 else 0.0
    if not ratio >= PIVOT_RATIO_TOL:
        raise RankDeficiencyError(m, ratio)
    return CoarseOperator(apply_A, gram, (lu, piv), ratio)


def project(coarse: CoarseOperator, Q, v) -> np.ndarray:
    """``P v = v - Q (Q^T A Q)^{-1} Q^T A v``; one operator application."""
    v = np.asarray(v, dtype=np.float64)
    Q = _as_coarse_matrix(Q, v.shape[0])
    if Q.shape[1] != coarse.size:
        raise ValueError(f"Q has {Q.shape[1]} columns, coarse operator has {coarse.size}")
    if coarse.size == 0:
        return v.copy()
    Av = np.asarray(coarse.apply_A(v), dtype=np.float64)
    return v - Q @ coarse.solve_coarse(Q.T @ Av)


def coarse_initial_guess(coarse: CoarseOperator, Q, b) -> np.ndarray:
    """``Q (Q^T A Q)^{-1} Q^T b``; zero for an empty coarse space."""
    b = np.asarray(b, dtype=np.float64)
    Q = _as_coarse_matrix(Q, b.shape[0])
    if coarse.size == 0:
        return np.zeros_like(b)
    return Q @ coarse.solve_coarse(Q.T @ b)


def normalize_columns(Q) -> np.ndarray:
    Q = _as_coarse_matrix(Q)
    norms = np.linalg.norm(Q, axis=0)
    if np.any(norms == 0.0):
        raise RankDeficiencyError(Q.shape[1], 0.0, "zero column norm")
    return Q / norms


def deflated_gcr_solve(apply_A: Operator, b, Q, cfg: SolverConfig | None = None,
                       keep_state: bool = False):
    """GCR with coarse-space correction.

    The start vector is the coarse solution ``chi_0 = Q (Q^T A Q)^{-1} Q^T b``
    and every new direction is projected, ``y_k = P r_k``, before being
    orthogonalized against the previous ones. Per iteration this costs one
    projection and one product ``A y_k``. ``Q`` columns are scaled to unit
    norm first (the projector does not depend on the scaling). With an empty
    ``Q`` the iterates coincide with :func:`gcr_solve` from ``x0 = 0``.

    Returns ``(chi, report)``; ``report.initial_residual_ratio`` is
    ``|b - A chi_0| / |b|``.
    """
    cfg = cfg or SolverConfig()
    A, calls = _counting(apply_A)
    b = np.asarray(b, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    Q = _as_coarse_matrix(Q, b.shape[0])
    m = Q.shape[1]
    if m:
        Q = normalize_columns(Q)
    coarse = build_coarse_operator(A, Q)

    coarse_hist: list[float] = []

    def watch(r):
        if cfg.record_history and m:
            coarse_hist.append(float(np.max(np.abs(Q.T @ r))) / bnorm)

    chi = coarse_initial_guess(coarse, Q, b)
    r = b - A(chi)
    track = _Tracker(cfg, bnorm, cfg.record_history)
    done = track.update(0, r)
    watch(r)
    initial_ratio = track.last
    dirs = _Directions(b.shape[0])
    y = project(coarse, Q, r)
    w = y
    Aw = A(w)
    k = 0
    while not done and k < cfg.max_iter:
        awaw = float(Aw @ Aw)
        if awaw == 0.0:
            raise BreakdownError(k)
        zeta = float(Aw @ r) / awaw
        chi = chi + zeta * w
        r = r - zeta * Aw
        dirs.add(w, Aw, awaw)
        k += 1
        done = track.update(k, r)
        watch(r)
        if done or k == cfg.max_iter:
            break
        y = project(coarse, Q, r)
        Ay = A(y)
        coef = dirs.coefficients(Ay)
        sw, sAw = dirs.combine(coef)
        w = y - sw
        Aw = Ay - sAw

    return chi, _report(track, initial_ratio, done, k, A, b, chi, m, calls, dirs, r,
                        keep_state, coarse_hist)


def direct_solve(system: SaddleSystem) -> np.ndarray:
    """Dense symmetric-indefinite (Bunch-Kaufman) solve; a test oracle."""
    if system.size > DIRECT_SOLVE_MAX:
        raise ValueError(
            f"direct_solve is limited to {DIRECT_SOLVE_MAX} unknowns, got {system.size}"
        )
    A = system.to_dense()
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(A, system.rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularSystemError(f"saddle system is singular: {exc}") from exc
