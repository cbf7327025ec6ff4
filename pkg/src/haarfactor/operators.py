"""Operators on SL^inf_N written in Haar coordinates.

An operator is a dense matrix ``A`` whose column ``J.index`` holds the Haar
coefficients of ``T h_J``.  Rectangular matrices (between different depths)
are allowed wherever it makes sense.  The pairing of two vectors is
``f^T W g`` with ``W = diag(|I|)``, so the operator adjoint to ``A`` with
respect to the pairing is ``W_in^{-1} A^T W_out``.

The SL^inf operator norm has no closed form.  ``opnorm_upper`` is a certified
bound: every Haar coefficient of f is at most ``||f||`` in modulus, hence

    ||T f||^2 <= max_K sum_{I containing K} (sum_J |A_IJ|)^2 ||f||^2.

``opnorm_bounds`` pairs it with a lower bound from a hill climb, attained by
an explicit witness vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicInterval, depth_of, index_levels, n_coeffs
from .haar import leaf_chains, measures, sl_inf_norm, square_profile


def depths(A) -> tuple[int, int]:
    """(output depth, input depth)."""
    A = np.asarray(A)
    return depth_of(A.shape[0]), depth_of(A.shape[1])


def identity(depth: int) -> np.ndarray:
    return np.eye(n_coeffs(depth))


def zero(depth: int) -> np.ndarray:
    return np.zeros((n_coeffs(depth), n_coeffs(depth)))


def multiplier(diagonal) -> np.ndarray:
    return np.diag(np.asarray(diagonal, dtype=float))


def level_multiplier(depth: int, values_by_level) -> np.ndarray:
    """Multiplier whose entry on level l is ``values_by_level[l]``."""
    return multiplier(np.asarray(values_by_level, dtype=float)[index_levels(depth)])


def apply(T, f) -> np.ndarray:
    return np.asarray(T) @ np.asarray(f)


def adjoint(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    n_out, n_in = depths(T)
    return (T.T * measures(n_out)[None, :]) / measures(n_in)[:, None]


def decompose(T, K: DyadicInterval) -> tuple[float, np.ndarray]:
    """T h_K = alpha_K h_K + r_K with r_K orthogonal to h_K."""
    T = np.asarray(T, dtype=float)
    alpha = float(T[K.index, K.index])
    r = T[:, K.index].copy()
    r[K.index] = 0.0
    return alpha, r


def has_large_diagonal(T, delta: float) -> bool:
    return bool(np.all(np.abs(np.diag(np.asarray(T))) >= delta))


def normalize_diagonal_signs(T) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(T D, sigma)`` with D = diag(sigma) making the diagonal >= 0.

    D is a sign change of Haar coefficients, an isometry of SL^inf, so a
    factorisation of ``T D`` is one of T after composing R with D.
    """
    T = np.asarray(T, dtype=float)
    sigma = np.where(np.diag(T) < 0, -1.0, 1.0)
    return T * sigma[None, :], sigma


def opnorm_upper(T) -> float:
    T = np.abs(np.asarray(T, dtype=float))
    n_out, _ = depths(T)
    rows = T.sum(axis=1)
    return float(np.sqrt(square_profile(rows, exact=False).max()))


@dataclass
class NormEstimate:
    lower: float
    upper: float
    witness: np.ndarray


def _ascent(T, f, chains, iterations):
    """Hill climb on ||Tf|| / ||f|| following the worst leaf's chain."""
    best = sl_inf_norm(T @ f, exact=False) / sl_inf_norm(f, exact=False)
    for _ in range(iterations):
        g = T @ f
        s = square_profile(g, exact=False)
        chain = chains[int(np.argmax(s))]
        grad = T[chain].T @ g[chain]
        gn = np.abs(grad).max()
        if gn == 0:
            break
        improved = False
        for step in (1.0, 0.3, 0.1, 0.03):
            trial = f + step * grad / gn * np.abs(f).max()
            nt = sl_inf_norm(trial, exact=False)
            if nt == 0:
                continue
            trial /= nt
            val = sl_inf_norm(T @ trial, exact=False)
            if val > best * (1 + 1e-12):
                f, best, improved = trial, val, True
                break
        if not improved:
            break
    return best, f


def opnorm_bounds(T, effort: int = 8, seed: int = 0, iterations: int = 30) -> NormEstimate:
    """Certified upper bound and witnessed lower bound for ||T||_{SL->SL}.

    ``effort`` is the number of random starting points of the ascent; the
    columns (single Haar inputs) are always tried.  ``effort=0`` skips the
    lower bound entirely (lower 0, zero witness).
    """
    T = np.asarray(T, dtype=float)
    n_out, n_in = depths(T)
    upper = opnorm_upper(T)
    witness = np.zeros(T.shape[1])
    if effort <= 0 or upper == 0:
        return NormEstimate(0.0, upper, witness)
    col_norms = np.array([np.sqrt(square_profile(T[:, j], exact=False).max()) for j in range(T.shape[1])])
    j = int(np.argmax(col_norms))
    lower = float(col_norms[j])
    witness[j] = 1.0
    chains = leaf_chains(n_out)
    rng = np.random.default_rng(seed)
    starts = [witness.copy()] + [rng.standard_normal(T.shape[1]) for _ in range(effort)]
    for f in starts:
        f = f / sl_inf_norm(f, exact=False)
        val, f = _ascent(T, f, chains, iterations)
        if val > lower:
            lower, witness = val, f
    # the witness defines the lower bound, recompute it from scratch
    lower = sl_inf_norm(T @ witness, exact=False) / sl_inf_norm(witness, exact=False)
    return NormEstimate(float(min(lower, upper)), upper, witness)


def random_operator(depth: int, kind: str = "diag_dominant", seed: int = 0,
                    delta: float = 0.5, noise: float = 0.01) -> np.ndarray:
    """Random test operators.

    ``multiplier``: diagonal, entries uniform in [-1, 1].
    ``diag_dominant``: diagonal uniform in [delta, 1]; off-diagonal entry
    (I, J) is ``noise * |J| * N(0,1)``.  Scaling by the measure of the input
    interval keeps the certified norm bound of the noise at about
    ``noise * sqrt(N)`` rather than growing with the matrix size.
    ``projection_like``: 0/1 diagonal plus the same kind of noise.
    """
    rng = np.random.default_rng(seed)
    d = n_coeffs(depth)
    if kind == "multiplier":
        return np.diag(rng.uniform(-1.0, 1.0, d))
    if kind in ("diag_dominant", "projection_like"):
        A = noise * rng.standard_normal((d, d)) * measures(depth)[None, :]
        if kind == "diag_dominant":
            diag = rng.uniform(delta, 1.0, d)
        else:
            diag = rng.integers(0, 2, d).astype(float)
        np.fill_diagonal(A, diag)
        return A
    raise ValueError(f"unknown operator kind {kind!r}")
