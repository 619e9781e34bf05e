"""Dense linear-algebra kernel: validated matrices, a one-sided Jacobi SVD
with deterministic sign canonicalization, and tolerance-based numeric rank.

Everything here is pure and reentrant; arrays returned by :func:`svd` are
freshly allocated and never aliased to the input.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EPS = float(np.finfo(np.float64).eps)

JACOBI_SWEEP_CAP = 100
JACOBI_ROTATION_TOL = 1e-12


class SvdConvergenceError(RuntimeError):
    """Jacobi sweeps hit the cap with off-diagonal mass still above tolerance."""

    def __init__(self, sweeps: int):
        super().__init__(f"one-sided Jacobi SVD failed to converge after {sweeps} sweeps")
        self.sweeps = sweeps


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Coerce to a dense row-major float64 2-D array.

    Rejects empty dimensions and non-finite entries; this is the single
    validation choke point for every matrix entering the package.
    """
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape!r}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"{name} must have positive dimensions, got {a.shape!r}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return a


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD a = left @ diag(singular) @ right, r = min(rows, cols).

    `left` has orthonormal columns, `right` orthonormal rows, `singular` is
    non-negative and non-increasing.  Signs are canonical: the first nonzero
    entry of every row of `right` is non-negative.
    """

    left: np.ndarray
    singular: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular) @ self.right


@lru_cache(maxsize=128)
def _round_robin(n: int):
    """Tournament schedule covering all column pairs in rounds of disjoint pairs."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a >= 0 and b >= 0:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.asarray(ps, dtype=np.intp), np.asarray(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _orthonormal_fill(u: np.ndarray, empty: np.ndarray) -> None:
    """Complete zero columns of `u` to an orthonormal basis, deterministically.

    Each slot takes the coordinate axis with the largest residual against the
    columns fixed so far, re-orthogonalized twice for stability.
    """
    m, _ = u.shape
    keep = [j for j in range(u.shape[1]) if j not in set(int(e) for e in empty)]
    basis = u[:, keep].copy() if keep else np.zeros((m, 0))
    for j in empty:
        mass = (basis * basis).sum(axis=1)
        k = int(np.argmin(mass))
        v = np.zeros(m)
        v[k] = 1.0
        v -= basis @ basis[k]
        v -= basis @ (basis.T @ v)
        v /= np.linalg.norm(v)
        u[:, int(j)] = v
        basis = np.concatenate([basis, v[:, None]], axis=1)


def svd(m, *, max_sweeps: int = JACOBI_SWEEP_CAP,
        rotation_tol: float = JACOBI_ROTATION_TOL) -> SvdResult:
    """One-sided Jacobi SVD of a dense real matrix.

    The shorter side's columns are orthogonalized by plane rotations applied
    round by round over disjoint pairs; a sweep visits every pair once.
    Convergence requires |<u, v>| <= rotation_tol * |u| |v| for every pair of
    columns over a full sweep.  Raises :class:`SvdConvergenceError` with the
    sweep count if `max_sweeps` is exhausted first.

    Columns whose norm falls below max(rows, cols) * eps relative to the
    largest are numerically null: their singular values are the computed
    residual norms but their directions are deterministic orthonormal
    completions, so the factors stay exactly orthonormal while the
    reconstruction error from the replacement stays far below the 1e-8 gate.
    """
    a = as_matrix(m)
    rows, cols = a.shape
    transposed = rows < cols
    work = np.array(a.T if transposed else a)  # tall copy, shape (big, n)
    n = work.shape[1]
    v = np.eye(n)

    if n > 1:
        # precondition with the Gram eigenbasis: an exact orthogonal change of
        # basis that leaves only eps-level off-diagonal mass for the sweeps to
        # clean up; the rotations below still decide convergence and restore
        # the small-singular-value accuracy the squared Gram cannot represent
        try:
            _, pre = np.linalg.eigh(work.T @ work)
        except np.linalg.LinAlgError:
            pre = None
        if pre is not None:
            pre = np.ascontiguousarray(pre[:, ::-1])
            work = work @ pre
            v = pre.copy()

        rounds = _round_robin(n)
        # pairs at or below half the rotation tolerance are screened out per
        # sweep via the Gram matrix; the margin absorbs dot-product rounding
        screen_tol = 0.5 * rotation_tol
        null_cut = max(rows, cols) * EPS
        for sweep in range(max_sweeps):
            gram = work.T @ work
            norms = np.sqrt(np.diag(gram))
            scale = np.outer(norms, norms)
            rel = np.divide(np.abs(gram), scale,
                            out=np.zeros_like(gram), where=scale > 0.0)
            np.fill_diagonal(rel, 0.0)
            # numerically null columns (norm below the dimension-scaled
            # epsilon cutoff) carry no signal; they are excluded from the
            # sweeps and replaced by exact orthonormal completions below
            dead = norms <= null_cut * norms.max()
            rel[dead, :] = 0.0
            rel[:, dead] = 0.0
            hotmat = rel > screen_tol
            if not hotmat.any():
                break
            for p_idx, q_idx in rounds:
                sel = hotmat[p_idx, q_idx]
                if not sel.any():
                    continue
                pj = p_idx[sel]
                qj = q_idx[sel]
                up = work[:, pj]
                uq = work[:, qj]
                alpha = np.einsum("ij,ij->j", up, up)
                beta = np.einsum("ij,ij->j", uq, uq)
                gamma = np.einsum("ij,ij->j", up, uq)
                # every screened pair gets rotated: re-gating on the exact dot
                # can stall when the two readings straddle the tolerance
                live = gamma != 0.0
                if not live.any():
                    continue
                if not live.all():
                    pj, qj = pj[live], qj[live]
                    up, uq = up[:, live], uq[:, live]
                    alpha, beta, gamma = alpha[live], beta[live], gamma[live]
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = np.where(zeta >= 0.0, 1.0, -1.0)
                t = sgn / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                work[:, pj] = c * up - s * uq
                work[:, qj] = s * up + c * uq
                vp = v[:, pj]
                vq = v[:, qj]
                v[:, pj] = c * vp - s * vq
                v[:, qj] = s * vp + c * vq
        else:
            raise SvdConvergenceError(max_sweeps)

    sig = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-sig, kind="stable")
    sig = sig[order]
    work = work[:, order]
    v = v[:, order]

    u = np.zeros_like(work)
    live = sig > max(rows, cols) * EPS * (sig[0] if sig.size else 0.0)
    u[:, live] = work[:, live] / sig[live]
    if not live.all():
        _orthonormal_fill(u, np.flatnonzero(~live))

    if transposed:
        left, right = v, np.ascontiguousarray(u.T)
    else:
        left, right = u, np.ascontiguousarray(v.T)

    # canonical signs: first nonzero entry of each right row made non-negative
    first = (right != 0.0).argmax(axis=1)
    flip = right[np.arange(right.shape[0]), first] < 0.0
    right[flip] *= -1.0
    left[:, flip] *= -1.0

    return SvdResult(left=left, singular=sig, right=right)


def default_rank_tol(rows: int, cols: int) -> float:
    """Dimension-scaled machine epsilon, the usual numeric-rank cutoff."""
    return max(rows, cols) * EPS


def numeric_rank(singular, tol_rel: float | None = None, *,
                 max_dim: int | None = None) -> int:
    """Count singular values above tol_rel * singular[0].

    `singular` must be non-negative and non-increasing.  When `tol_rel` is
    omitted it defaults to max_dim * eps (or len(singular) * eps if `max_dim`
    is not given).  A zero leading singular value means rank 0.
    """
    s = np.asarray(singular, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("singular values must be a 1-D vector")
    if s.size == 0:
        return 0
    if (s < 0.0).any():
        raise ValueError("singular values must be non-negative")
    if (s[1:] > s[:-1]).any():
        raise ValueError("singular values must be non-increasing")
    if tol_rel is None:
        tol_rel = (max_dim if max_dim is not None else s.size) * EPS
    if tol_rel <= 0.0:
        raise ValueError("tol_rel must be positive")
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol_rel * s[0]))
