"""Haar coefficient vectors and the SL^inf / H^1 norms.

A vector of depth N is a 1-d array of length 2^(N+1)-1; entry ``I.index``
holds the coefficient of the L^inf-normalised Haar function h_I.  Since
h_I^2 is the indicator of I, the square function on a leaf K of level N is
``s(K) = sum_{I containing K} a_I^2`` and

    ||f||_SL = max_K sqrt(s(K)),      ||g||_H1 = sum_K |K| sqrt(s(K)).

Two arithmetic backends are available.  ``exact=True`` accumulates s(K) with
``fractions.Fraction`` (every float is a dyadic rational, so nothing is lost)
and takes one floating square root per leaf at the end.  ``exact=False`` is
plain numpy.  ``exact=None`` reads ``HAARFACTOR_ARITH`` (default ``float``).
"""
from __future__ import annotations

import math
import os
from fractions import Fraction
from typing import Mapping

import numpy as np

from .dyadic import DyadicInterval, depth_of, level_slice, n_coeffs

ARITH_ENV = "HAARFACTOR_ARITH"


def use_exact(exact: bool | None = None) -> bool:
    if exact is not None:
        return bool(exact)
    mode = os.environ.get(ARITH_ENV, "float").strip().lower()
    if mode not in ("exact", "float"):
        raise ValueError(f"{ARITH_ENV} must be 'exact' or 'float', got {mode!r}")
    return mode == "exact"


def arith_name(exact: bool | None = None) -> str:
    return "exact" if use_exact(exact) else "float"


def zeros(depth: int) -> np.ndarray:
    return np.zeros(n_coeffs(depth))


def haar_vector(depth: int, coeffs: Mapping[DyadicInterval, float] | None = None) -> np.ndarray:
    f = zeros(depth)
    for I, a in (coeffs or {}).items():
        if I.level > depth:
            raise ValueError(f"{I} is deeper than {depth}")
        f[I.index] = a
    return f


def unit(I: DyadicInterval, depth: int | None = None) -> np.ndarray:
    """The coefficient vector of h_I."""
    return haar_vector(I.level if depth is None else depth, {I: 1.0})


def depth(f) -> int:
    return depth_of(len(f))


def measures(depth: int) -> np.ndarray:
    """|I| for every index, as floats (exact: powers of two)."""
    return np.repeat(2.0 ** -np.arange(depth + 1), 1 << np.arange(depth + 1))


def pad(f, depth: int) -> np.ndarray:
    f = np.asarray(f)
    out = np.zeros(n_coeffs(depth), dtype=f.dtype)
    if len(f) > len(out):
        raise ValueError("cannot pad to a smaller depth")
    out[: len(f)] = f
    return out


def truncate(f, depth: int) -> np.ndarray:
    return np.asarray(f)[: n_coeffs(depth)].copy()


def _as_fractions(f) -> list[Fraction]:
    return [x if isinstance(x, Fraction) else Fraction(x) for x in np.asarray(f, dtype=object).tolist()]


def _common_denominator(f) -> tuple[list[int], int]:
    """Integers n_I and one denominator D with a_I = n_I / D, exactly."""
    ratios = [a.as_integer_ratio() for a in _as_fractions(f)] if np.asarray(f).dtype == object else \
        [float(a).as_integer_ratio() for a in np.asarray(f, dtype=float).tolist()]
    den = math.lcm(*(d for _, d in ratios)) if ratios else 1
    return [n * (den // d) for n, d in ratios], den


def square_profile(f, exact: bool | None = None):
    """Per-leaf values s(K), K in D_N, in leaf order.

    Float backend: ndarray.  Exact backend: list of Fractions.
    """
    N = depth_of(len(f))
    if use_exact(exact):
        nums, den = _common_denominator(f)
        sq = np.array([a * a for a in nums], dtype=object)
        s = sq[:1]
        for level in range(1, N + 1):
            s = np.repeat(s, 2) + sq[level_slice(level)]
        d2 = den * den
        return [Fraction(int(x), d2) for x in s]
    f = np.asarray(f, dtype=float)
    s = f[:1] ** 2
    for level in range(1, N + 1):
        s = np.repeat(s, 2) + f[level_slice(level)] ** 2
    return s


def sl_inf_norm(f, exact: bool | None = None) -> float:
    s = square_profile(f, exact)
    if use_exact(exact):
        return math.sqrt(max(s))
    return float(np.sqrt(s.max()))


def h1_norm(g, exact: bool | None = None) -> float:
    N = depth_of(len(g))
    s = square_profile(g, exact)
    if use_exact(exact):
        return math.fsum(math.sqrt(x) for x in s) / (1 << N)
    return float(np.sqrt(s).sum()) / (1 << N)


def pairing(f, g, exact: bool | None = None):
    """<f, g> = sum_I a_I b_I |I|; vectors of different depth are zero-padded."""
    N = max(depth_of(len(f)), depth_of(len(g)))
    f, g = pad(f, N), pad(g, N)
    if use_exact(exact):
        total = Fraction(0)
        for level in range(N + 1):
            sl = level_slice(level)
            part = sum((a * b for a, b in zip(_as_fractions(f[sl]), _as_fractions(g[sl]))), Fraction(0))
            total += part / (1 << level)
        return total
    return float(np.dot(np.asarray(f, float) * np.asarray(g, float), measures(N)))


def rademacher(n: int, depth: int) -> np.ndarray:
    """r_n = sum of h_I over the level-n intervals."""
    if not 0 <= n <= depth:
        raise ValueError("level must lie in 0..depth")
    f = zeros(depth)
    f[level_slice(n)] = 1.0
    return f


def leaf_chains(depth: int) -> np.ndarray:
    """Array (2^depth, depth+1): indices of the intervals containing each leaf."""
    leaves = np.arange(1 << depth)
    return np.stack([(1 << l) - 1 + (leaves >> (depth - l)) for l in range(depth + 1)], axis=1)
