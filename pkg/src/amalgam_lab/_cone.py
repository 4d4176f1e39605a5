"""Compiled cone reductions shared by the square functions and commutators.

For every output cell ``x`` and scale ``t`` the kernels walk the offsets
``y - x`` in a fixed order and add ``tw[t] * v(x, y, t)`` into an aperture bin
``j`` (``edges[j-1] t <= |x-y| < edges[j] t``).  ``wsum`` receives the same
terms multiplied by the g* weight ``(t / (t + |x-y|))^(lambda n)``.

The integrand is either an x-independent squared field ``asq[t, y]`` or, for
commutators, ``max_m (b[x] F[t,y,m] - G[t,y,m])^2`` (members stored last so the
inner max reads contiguous memory).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["cone_tables", "cone_pass"]


def cone_tables(shape: tuple[int, ...], h: float, ts: np.ndarray, edges: np.ndarray,
                lamn: float):
    """Bin index and g* weight per (t, |offset|).

    Offsets are clipped to the grid extent.  Bin ``-1`` marks offsets outside
    the widest aperture.
    """
    dim = len(shape)
    ax = [np.arange(s) for s in shape]
    if dim == 1:
        d = ax[0] * h
    else:
        ki, kj = np.meshgrid(ax[0], ax[1], indexing="ij")
        d = np.sqrt(ki * ki + kj * kj) * h
    jtab = np.full((len(ts),) + d.shape, -1, dtype=np.int64)
    wtab = np.zeros((len(ts),) + d.shape)
    kmax = np.zeros(len(ts), dtype=np.int64)
    for it, t in enumerate(ts):
        for j in range(len(edges) - 1, -1, -1):
            jtab[it][d < edges[j] * t] = j
        if lamn > 0:
            wtab[it] = (t / (t + d)) ** lamn
        kmax[it] = min(int(math.ceil(edges[-1] * t / h)), max(shape))
    return jtab, wtab, kmax


@njit(cache=True)
def _pass_1d(asq, F, G, b, comm, tw, jtab, wtab, kmax, ylo, yhi, nbins, weighted):
    N = b.shape[0]
    nt = tw.shape[0]
    M = F.shape[-1]
    bins = np.zeros((N, nbins))
    wsum = np.zeros(N)
    for x in range(N):
        bx = b[x]
        for it in range(nt):
            if ylo[it] > yhi[it]:
                continue
            lo = max(x - kmax[it], ylo[it])
            hi = min(x + kmax[it], yhi[it])
            tww = tw[it]
            for y in range(lo, hi + 1):
                k = abs(y - x)
                j = jtab[it, k]
                if j < 0:
                    continue
                if comm:
                    v = 0.0
                    for m in range(M):
                        u = abs(bx * F[it, y, m] - G[it, y, m])
                        if u > v:
                            v = u
                    v = v * v
                else:
                    v = asq[it, y]
                if v == 0.0:
                    continue
                bins[x, j] += tww * v
                if weighted:
                    wsum[x] += tww * wtab[it, k] * v
    return bins, wsum


@njit(cache=True)
def _pass_2d(asq, F, G, b, comm, tw, jtab, wtab, kmax, ylo, yhi, nbins, weighted):
    N0 = b.shape[0]
    N1 = b.shape[1]
    nt = tw.shape[0]
    M = F.shape[-1]
    bins = np.zeros((N0, N1, nbins))
    wsum = np.zeros((N0, N1))
    for x0 in range(N0):
        for x1 in range(N1):
            bx = b[x0, x1]
            for it in range(nt):
                if ylo[it, 0] > yhi[it, 0]:
                    continue
                lo0 = max(x0 - kmax[it], ylo[it, 0])
                hi0 = min(x0 + kmax[it], yhi[it, 0])
                lo1 = max(x1 - kmax[it], ylo[it, 1])
                hi1 = min(x1 + kmax[it], yhi[it, 1])
                tww = tw[it]
                for y0 in range(lo0, hi0 + 1):
                    k0 = abs(y0 - x0)
                    for y1 in range(lo1, hi1 + 1):
                        k1 = abs(y1 - x1)
                        j = jtab[it, k0, k1]
                        if j < 0:
                            continue
                        if comm:
                            v = 0.0
                            for m in range(M):
                                u = abs(bx * F[it, y0, y1, m] - G[it, y0, y1, m])
                                if u > v:
                                    v = u
                            v = v * v
                        else:
                            v = asq[it, y0, y1]
                        if v == 0.0:
                            continue
                        bins[x0, x1, j] += tww * v
                        if weighted:
                            wsum[x0, x1] += tww * wtab[it, k0, k1] * v
    return bins, wsum


def _support_ranges(nonzero: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-t inclusive index ranges of the nonzero integrand (empty: lo > hi)."""
    nt = nonzero.shape[0]
    dim = nonzero.ndim - 1
    ylo = np.zeros((nt, dim), dtype=np.int64)
    yhi = np.full((nt, dim), -1, dtype=np.int64)
    for it in range(nt):
        idx = np.nonzero(nonzero[it])
        if len(idx[0]):
            ylo[it] = [i.min() for i in idx]
            yhi[it] = [i.max() for i in idx]
    return ylo, yhi


def cone_pass(h: float, ts: np.ndarray, tw: np.ndarray, edges, lamn: float = 0.0,
              asq: np.ndarray | None = None, F: np.ndarray | None = None,
              G: np.ndarray | None = None, b: np.ndarray | None = None):
    """Aperture-binned cone sums; returns ``(bins, wsum)``.

    Pass ``asq`` (shape ``(n_t, *grid)``) for the plain square functions or
    ``F, G`` (shape ``(M, n_t, *grid)``) and ``b`` for commutators.
    """
    edges = np.asarray(edges, dtype=np.float64)
    comm = asq is None
    if comm:
        shape = b.shape
        nonzero = np.any((F != 0) | (G != 0), axis=0)
        F = np.moveaxis(F, 0, -1)
        G = np.moveaxis(G, 0, -1)
        asq = np.zeros((1,) * (len(shape) + 1))
    else:
        shape = asq.shape[1:]
        nonzero = asq != 0
        F = G = np.zeros((1,) * (len(shape) + 2))
        b = np.zeros(shape)
    jtab, wtab, kmax = cone_tables(shape, h, ts, edges, lamn)
    ylo, yhi = _support_ranges(nonzero)
    args = (
        np.ascontiguousarray(asq, dtype=np.float64),
        np.ascontiguousarray(F, dtype=np.float64),
        np.ascontiguousarray(G, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        comm,
        np.ascontiguousarray(tw, dtype=np.float64),
        jtab,
        wtab,
        kmax,
    )
    if len(shape) == 1:
        return _pass_1d(*args, ylo[:, 0].copy(), yhi[:, 0].copy(), len(edges), lamn > 0)
    return _pass_2d(*args, ylo, yhi, len(edges), lamn > 0)
