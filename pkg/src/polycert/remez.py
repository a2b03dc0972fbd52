"""Minimax polynomial approximation by Remez exchange.

Each iteration solves the (n+2)x(n+2) linear system that forces the error to
alternate with equal magnitude E at the current reference points, then
replaces the whole reference set with extrema of the new error (multi-point
exchange).  Iteration stops when the error magnitudes at the freshly chosen
references equalize to a relative tolerance, or after a fixed iteration
budget, in which case the best iterate seen so far is returned with its
measured error.

Symmetric functions need care: at symmetric references the alternation column
coincides with a vanishing Chebyshev coefficient and the solve degenerates to
interpolation (E ~ 0).  The exchange therefore falls back from sign-change
segmentation to magnitude-ranked peaks of |error| whenever segmentation comes
up short, which recovers the expected reference count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cheb import ChebPoly, chebyshev_nodes
from .interval import Interval


class RemezError(RuntimeError):
    """Reference set degeneracy or a singular exchange system."""


@dataclass(frozen=True)
class EquioscillationCertificate:
    """Evidence returned with a minimax fit.

    points holds the n+2 reference abscissas, errors the signed residuals
    f - p at those points, and E the achieved sup-error over the references.
    """

    points: np.ndarray
    errors: np.ndarray
    E: float
    converged: bool
    iterations: int


def _solve_exchange(fx: np.ndarray, refs: np.ndarray, n: int, domain: Interval):
    span = domain.width
    t = (2.0 * refs - domain.lo - domain.hi) / span if span > 0 else np.zeros_like(refs)
    m = refs.size
    A = np.zeros((m, n + 2))
    A[:, 0] = 1.0
    if n >= 1:
        A[:, 1] = t
    for k in range(2, n + 1):
        A[:, k] = 2.0 * t * A[:, k - 1] - A[:, k - 2]
    A[:, n + 1] = (-1.0) ** np.arange(m)
    try:
        sol = np.linalg.solve(A, fx)
    except np.linalg.LinAlgError as exc:
        raise RemezError(f"singular exchange system: {exc}") from exc
    return ChebPoly(sol[: n + 1], domain), float(sol[n + 1])


def _segment_candidates(err: np.ndarray) -> np.ndarray:
    """One strongest point per sign segment; signs alternate by construction."""
    sign = np.sign(err)
    for i in range(1, sign.size):
        if sign[i] == 0.0:
            sign[i] = sign[i - 1]
    if sign[0] == 0.0:
        nz = np.nonzero(sign)[0]
        if nz.size == 0:
            return np.array([], dtype=int)
        sign[0] = sign[nz[0]]
    boundaries = np.nonzero(sign[1:] != sign[:-1])[0] + 1
    return np.array([seg[np.argmax(np.abs(err[seg]))]
                     for seg in np.split(np.arange(err.size), boundaries)])


def _peak_candidates(err: np.ndarray) -> np.ndarray:
    """Indices of local maxima of |err| including the grid endpoints."""
    a = np.abs(err)
    interior = np.nonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]))[0] + 1
    idx = np.concatenate(([0], interior, [a.size - 1]))
    # collapse runs of adjacent indices (flat plateaus)
    keep = [int(idx[0])]
    for i in idx[1:]:
        if i > keep[-1] + 1:
            keep.append(int(i))
        elif a[i] > a[keep[-1]]:
            keep[-1] = int(i)
    return np.array(keep)


def _prune_alternating(cand: np.ndarray, err: np.ndarray, count: int) -> np.ndarray:
    """Reduce an alternating candidate list to `count`, keeping strong points."""
    mags = np.abs(err[cand])
    while cand.size > count:
        if cand.size - count == 1:
            drop = 0 if mags[0] <= mags[-1] else cand.size - 1
            cand = np.delete(cand, drop)
            mags = np.delete(mags, drop)
            continue
        k = int(np.argmin(mags))
        if k == 0 or k == cand.size - 1:
            cand = np.delete(cand, k)
            mags = np.delete(mags, k)
        else:
            # dropping an interior point breaks alternation; drop the weaker
            # neighbour with it
            j = k - 1 if mags[k - 1] <= mags[k + 1] else k + 1
            keep = np.ones(cand.size, dtype=bool)
            keep[k] = False
            keep[j] = False
            cand = cand[keep]
            mags = mags[keep]
    return cand


def _next_references(grid: np.ndarray, err: np.ndarray, count: int) -> np.ndarray | None:
    cand = _segment_candidates(err)
    if cand.size >= count:
        return grid[_prune_alternating(cand, err, count)]
    peaks = _peak_candidates(err)
    if peaks.size >= count:
        order = np.argsort(np.abs(err[peaks]))[::-1][:count]
        return grid[np.sort(peaks[order])]
    return None


def remez(f, n: int, domain: Interval, rel_tol: float = 1e-8,
          max_iter: int = 50) -> tuple[ChebPoly, EquioscillationCertificate]:
    """Best degree-n approximation to f on the domain in the sup norm."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    refs = chebyshev_nodes(n + 1, domain)
    grid = chebyshev_nodes(max(4096, 32 * (n + 2)), domain)
    fgrid = np.asarray(f(grid), dtype=np.float64)
    if not np.all(np.isfinite(fgrid)):
        raise ValueError("f is not finite on the interval")
    fscale = max(1.0, float(np.max(np.abs(fgrid))))

    best: tuple[float, ChebPoly, np.ndarray] | None = None
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        if np.any(np.diff(refs) <= 0.0):
            raise RemezError(f"reference points coalesced at iteration {it}")
        fref = np.asarray(f(refs), dtype=np.float64)
        p, _ = _solve_exchange(fref, refs, n, domain)
        err_grid = fgrid - p.eval(grid)
        sup = float(np.max(np.abs(err_grid)))
        if best is None or sup < best[0]:
            best = (sup, p, refs.copy())
        if sup <= 1e-13 * fscale:
            # f is (numerically) a polynomial of degree <= n
            converged = True
            best = (sup, p, refs.copy())
            break
        new_refs = _next_references(grid, err_grid, n + 2)
        if new_refs is None:
            raise RemezError(
                f"could not locate {n + 2} error extrema at iteration {it}")
        new_err = np.asarray(f(new_refs), dtype=np.float64) - p.eval(new_refs)
        emax = float(np.max(np.abs(new_err)))
        emin = float(np.min(np.abs(new_err)))
        refs = new_refs
        if emax > 0.0 and (emax - emin) <= rel_tol * emax:
            converged = True
            best = (sup, p, new_refs.copy())
            break

    sup, p, refs = best
    ref_err = np.asarray(f(refs), dtype=np.float64) - p.eval(refs)
    cert = EquioscillationCertificate(
        points=refs,
        errors=ref_err,
        E=float(np.max(np.abs(ref_err))),
        converged=converged,
        iterations=iterations,
    )
    return p, cert
