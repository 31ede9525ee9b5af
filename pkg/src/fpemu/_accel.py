"""Hot inner loops, each with a numba-compiled and a pure-numpy implementation.

The compiled path is used when numba imports cleanly and the environment
variable ``FPEMU_DISABLE_NUMBA`` is unset (or ``0``). Both paths are always
importable as ``<name>_numpy`` / ``<name>_numba`` so tests and the benchmark
can compare them directly.
"""

import itertools
import math
import os

import numpy as np
from scipy.spatial.distance import cdist

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FPEMU_DISABLE_NUMBA", "0") in ("", "0")

POWER_EXPONENTIAL = 0
MATERN_5_2 = 1

SQRT5 = np.sqrt(5.0)


# -- isotropic correlation matrix ------------------------------------------


def radial_correlation_numpy(X, Y, gamma, family, alpha):
    r = cdist(X, Y) / gamma
    if family == MATERN_5_2:
        s = SQRT5 * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    if alpha == 2.0:
        return np.exp(-r * r)
    return np.exp(-(r**alpha))


def _radial_correlation_kernel(X, Y, gamma, family, alpha):
    n, p = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(p):
                t = X[i, k] - Y[j, k]
                acc += t * t
            r = np.sqrt(acc) / gamma
            if family == 1:
                s = 2.23606797749979 * r
                out[i, j] = (1.0 + s + s * s / 3.0) * np.exp(-s)
            elif alpha == 2.0:
                out[i, j] = np.exp(-r * r)
            else:
                out[i, j] = np.exp(-(r**alpha))
    return out


# -- Metropolis chain for the hydrogen trial e^{-alpha r} -------------------


def hydrogen_chain_numpy(x0, alpha, delta, xi, u, burn_in, thinning, near):
    """Run the chain over pre-drawn proposals ``xi`` (T x 3) and uniforms ``u``.

    Returns (local energies of kept samples, kept radii, accepted moves,
    proposals rejected for landing within ``near`` of the nucleus).
    """
    # scalar arithmetic in the same order as the compiled kernel
    x0_, x1_, x2_ = (float(v) for v in x0)
    r = math.sqrt(x0_ * x0_ + x1_ * x1_ + x2_ * x2_)
    n_steps = xi.shape[0]
    n_keep = (n_steps - burn_in) // thinning
    energies = np.empty(n_keep)
    radii = np.empty(n_keep)
    accepted = 0
    near_hits = 0
    k = 0
    a2 = -0.5 * alpha * alpha
    for t, (d0, d1, d2) in enumerate(xi.tolist()):
        y0 = x0_ + delta * d0
        y1 = x1_ + delta * d1
        y2 = x2_ + delta * d2
        ry = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
        if ry < near:
            near_hits += 1
        elif math.log(u[t]) <= -2.0 * alpha * (ry - r):
            x0_, x1_, x2_ = y0, y1, y2
            r = ry
            accepted += 1
        if t >= burn_in and (t - burn_in) % thinning == thinning - 1:
            energies[k] = a2 + (alpha - 1.0) / r
            radii[k] = r
            k += 1
    return energies, radii, accepted, near_hits


def _hydrogen_chain_kernel(x0, alpha, delta, xi, u, burn_in, thinning, near):
    x0_ = x0[0]
    x1_ = x0[1]
    x2_ = x0[2]
    r = np.sqrt(x0_ * x0_ + x1_ * x1_ + x2_ * x2_)
    n_steps = xi.shape[0]
    n_keep = (n_steps - burn_in) // thinning
    energies = np.empty(n_keep)
    radii = np.empty(n_keep)
    accepted = 0
    near_hits = 0
    k = 0
    a2 = -0.5 * alpha * alpha
    for t in range(n_steps):
        y0 = x0_ + delta * xi[t, 0]
        y1 = x1_ + delta * xi[t, 1]
        y2 = x2_ + delta * xi[t, 2]
        ry = np.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
        if ry < near:
            near_hits += 1
        elif np.log(u[t]) <= -2.0 * alpha * (ry - r):
            x0_ = y0
            x1_ = y1
            x2_ = y2
            r = ry
            accepted += 1
        if t >= burn_in and (t - burn_in) % thinning == thinning - 1:
            energies[k] = a2 + (alpha - 1.0) / r
            radii[k] = r
            k += 1
    return energies, radii, accepted, near_hits


# -- exhaustive permutation alignment ----------------------------------------


def _perm_cost(A, B, perm):
    return float(np.sum((A[np.ix_(perm, perm)] - B) ** 2))


def exhaustive_alignment_numpy(A, B, labels_a, labels_b, tol):
    """Lexicographically first permutation minimising ||A[perm][:, perm] - B||_F^2.

    A candidate replaces the incumbent only if it is better by more than
    ``tol``; permutations mapping an atom onto a different label are skipped.
    Returns (perm, squared cost); perm is all -1 when no permutation is admissible.
    """
    n = A.shape[0]
    best = np.full(n, -1, dtype=np.int64)
    best_cost = np.inf
    for perm in itertools.permutations(range(n)):
        p = np.asarray(perm)
        if np.any(labels_a[p] != labels_b):
            continue
        c = _perm_cost(A, B, p)
        if c < best_cost - tol:
            best_cost = c
            best[:] = p
    return best, best_cost


def _exhaustive_alignment_kernel(A, B, labels_a, labels_b, tol):
    n = A.shape[0]
    perm = np.arange(n)
    best = np.full(n, -1, dtype=np.int64)
    best_cost = np.inf
    while True:
        ok = True
        for i in range(n):
            if labels_a[perm[i]] != labels_b[i]:
                ok = False
                break
        if ok:
            c = 0.0
            for i in range(n):
                for j in range(n):
                    t = A[perm[i], perm[j]] - B[i, j]
                    c += t * t
            if c < best_cost - tol:
                best_cost = c
                for i in range(n):
                    best[i] = perm[i]
        # next permutation in lexicographic order
        i = n - 2
        while i >= 0 and perm[i] >= perm[i + 1]:
            i -= 1
        if i < 0:
            break
        j = n - 1
        while perm[j] <= perm[i]:
            j -= 1
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
        lo = i + 1
        hi = n - 1
        while lo < hi:
            tmp = perm[lo]
            perm[lo] = perm[hi]
            perm[hi] = tmp
            lo += 1
            hi -= 1
    return best, best_cost


if HAVE_NUMBA:
    radial_correlation_numba = njit(cache=True)(_radial_correlation_kernel)
    hydrogen_chain_numba = njit(cache=True)(_hydrogen_chain_kernel)
    exhaustive_alignment_numba = njit(cache=True)(_exhaustive_alignment_kernel)
else:  # pragma: no cover
    radial_correlation_numba = radial_correlation_numpy
    hydrogen_chain_numba = hydrogen_chain_numpy
    exhaustive_alignment_numba = exhaustive_alignment_numpy


def radial_correlation(X, Y, gamma, family, alpha):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if USE_NUMBA:
        return radial_correlation_numba(X, Y, float(gamma), int(family), float(alpha))
    return radial_correlation_numpy(X, Y, float(gamma), int(family), float(alpha))


def hydrogen_chain(x0, alpha, delta, xi, u, burn_in, thinning, near=1e-12):
    args = (
        np.ascontiguousarray(x0, dtype=np.float64),
        float(alpha),
        float(delta),
        np.ascontiguousarray(xi, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        int(burn_in),
        int(thinning),
        float(near),
    )
    if USE_NUMBA:
        return hydrogen_chain_numba(*args)
    return hydrogen_chain_numpy(*args)


def exhaustive_alignment(A, B, labels_a, labels_b, tol):
    args = (
        np.ascontiguousarray(A, dtype=np.float64),
        np.ascontiguousarray(B, dtype=np.float64),
        np.ascontiguousarray(labels_a, dtype=np.int64),
        np.ascontiguousarray(labels_b, dtype=np.int64),
        float(tol),
    )
    if USE_NUMBA:
        return exhaustive_alignment_numba(*args)
    return exhaustive_alignment_numpy(*args)
