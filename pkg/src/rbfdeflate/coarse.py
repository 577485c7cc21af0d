"""Coarse-space bases sampled at the data sites.

Family member ``j`` uses axis ``a = j mod d`` and frequency index
``q = 1 + j // d``; ``t`` is the site coordinate on that axis and
``u = 2t - 1`` its centered version. Columns are zero over the polynomial
unknowns and have unit Euclidean norm.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .assembly import poly_matrix
from .core import RankDeficiencyError

#: argument compression keeping the tangent family away from its poles
TANGENT_KAPPA = 0.9
#: a member whose polynomial-free part is at most this fraction of its norm is skipped
POLY_SKIP_TOL = 1e-8
#: smallest admissible |R_jj| when orthonormalizing unit-norm columns
QR_RANK_TOL = 1e-10


class CoarseBasisKind(str, Enum):
    COSINE = "cosine"
    SINE = "sine"
    TANGENT = "tangent"
    SINC = "sinc"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    CHEBYSHEV = "chebyshev"


BASIS_NAMES = tuple(k.value for k in CoarseBasisKind)


def chebyshev_t(q: int, u):
    """Chebyshev polynomial of the first kind by the three-term recurrence."""
    u = np.asarray(u, dtype=np.float64)
    t_prev, t_cur = np.ones_like(u), u.copy()
    if q == 0:
        return t_prev
    for _ in range(q - 1):
        t_prev, t_cur = t_cur, 2.0 * u * t_cur - t_prev
    return t_cur


def _tangent(q, t):
    # tan(pi q (t - 1/2)) has period 1/q; wrapping the phase to [-1/2, 1/2]
    # and compressing by kappa keeps every period clear of its pole
    x = q * (t - 0.5)
    s = x - np.round(x)
    return np.tan(np.pi * TANGENT_KAPPA * s)


_GENERATORS = {
    CoarseBasisKind.COSINE: lambda q, t: np.cos(np.pi * q * t),
    CoarseBasisKind.SINE: lambda q, t: np.sin(np.pi * q * t),
    CoarseBasisKind.TANGENT: _tangent,
    CoarseBasisKind.SINC: lambda q, t: np.sinc(q * (2.0 * t - 1.0)),
    CoarseBasisKind.EXPONENTIAL: lambda q, t: np.exp(-q * t),
    CoarseBasisKind.GAUSSIAN: lambda q, t: np.exp(-((q * (2.0 * t - 1.0)) ** 2)),
    CoarseBasisKind.CHEBYSHEV: lambda q, t: chebyshev_t(q, 2.0 * t - 1.0),
}


def generator(kind, q: int, t) -> np.ndarray:
    """Raw (unnormalized) family member ``q`` at axis coordinates ``t``."""
    return _GENERATORS[CoarseBasisKind(kind)](q, np.asarray(t, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class CoarseSpace:
    Q: np.ndarray
    kind: CoarseBasisKind
    n_poly: int
    members: tuple[tuple[int, int], ...] = ()

    @property
    def m(self) -> int:
        return self.Q.shape[1]


def _members(d: int):
    j = 0
    while True:
        yield j % d, 1 + j // d
        j += 1


def build_coarse(kind, m: int, sites, n_poly: int, orthonormalize: bool = True,
                 moment_free: bool = True) -> CoarseSpace:
    """Sample the first ``m`` usable members of family ``kind`` at ``sites``.

    With ``moment_free`` the degree-one polynomial part (the span of the
    monomials at the sites) is removed from each member, so coarse
    corrections keep the moment conditions ``P^T lam = 0``; a member that is
    itself such a polynomial (Chebyshev ``T_1``) is skipped. With
    ``orthonormalize`` the block is replaced by its QR factor (``diag(R) > 0``);
    this leaves the span, and hence the projector, unchanged.
    ``members`` records the ``(axis, q)`` pair behind each column.
    """
    kind = CoarseBasisKind(kind)
    sites = np.asarray(sites, dtype=np.float64)
    n, d = sites.shape
    if m < 0 or m > n:
        raise ValueError(f"coarse size must be in [0, {n}], got {m}")
    if moment_free and n_poly != d + 1:
        raise ValueError(f"moment-free columns need n_poly = {d + 1}, got {n_poly}")
    poly_q = np.linalg.qr(poly_matrix(sites))[0] if moment_free else None

    cols, used = [], []
    for axis, q in _members(d):
        if len(cols) == m:
            break
        if len(used) >= 4 * m + 2 * d:
            raise RankDeficiencyError(m, len(cols), "usable members found")
        g = generator(kind, q, sites[:, axis])
        if poly_q is not None:
            raw = np.linalg.norm(g)
            g = g - poly_q @ (poly_q.T @ g)
            if np.linalg.norm(g) <= POLY_SKIP_TOL * raw:
                used.append(None)
                continue
        cols.append(g)
        used.append((axis, q))

    Q = np.zeros((n + n_poly, m))
    if m:
        block = np.column_stack(cols)
        if not np.all(np.isfinite(block)):
            raise ValueError(f"{kind.value} basis produced non-finite values")
        norms = np.linalg.norm(block, axis=0)
        if np.any(norms == 0):
            raise RankDeficiencyError(m, 0.0, "zero column norm")
        block = block / norms
        if orthonormalize:
            # factoring behind the monomial basis keeps the result moment-free
            # to roundoff even when the family is badly conditioned
            lead = 0 if poly_q is None else poly_q.shape[1]
            stack = block if poly_q is None else np.hstack([poly_q, block])
            qf, rf = np.linalg.qr(stack)
            diag = np.diag(rf)[lead:]
            if np.abs(diag).min() < QR_RANK_TOL:
                raise RankDeficiencyError(m, float(np.abs(diag).min()), "QR diagonal")
            block = qf[:, lead:] * np.where(diag < 0, -1.0, 1.0)
            block /= np.linalg.norm(block, axis=0)
        Q[:n] = block
    Q.setflags(write=False)
    return CoarseSpace(Q, kind, n_poly, tuple(u for u in used if u is not None))
