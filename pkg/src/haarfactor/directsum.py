"""Finite direct sums (SL^inf_0 + ... + SL^inf_M)_r and the maps between
them and SL^inf.

Block n lives on the gap A_n = [1 - 2^-n, 1 - 2^-(n+1)), which is the dyadic
interval of level n+1 and position 2^(n+1) - 1.  The affine map of [0,1) onto
A_n sends the interval (l, p) to (n+1+l, (2^(n+1) - 2) 2^l + p) and carries
h_I to the Haar function of the image, so E just moves coefficients.  Gaps
are disjoint, hence ||E x|| is the max of the block norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicInterval, depth_of, index_levels, n_coeffs
from .haar import pad, sl_inf_norm, truncate


@dataclass
class DirectSumVector:
    M: int
    r: float
    blocks: list

    def __post_init__(self):
        if len(self.blocks) != self.M + 1:
            raise ValueError(f"need M+1 = {self.M + 1} blocks, got {len(self.blocks)}")
        self.blocks = [np.asarray(b, dtype=float) for b in self.blocks]
        for n, b in enumerate(self.blocks):
            if len(b) != n_coeffs(n):
                raise ValueError(f"block {n} must have {n_coeffs(n)} coefficients")
        if not (self.r >= 1):
            raise ValueError("need r >= 1")

    @classmethod
    def zeros(cls, M: int, r=math.inf) -> "DirectSumVector":
        return cls(M, r, [np.zeros(n_coeffs(n)) for n in range(M + 1)])

    def to_json(self) -> dict:
        return {"M": self.M, "r": "inf" if math.isinf(self.r) else self.r,
                "blocks": [b.tolist() for b in self.blocks]}

    @classmethod
    def from_json(cls, obj) -> "DirectSumVector":
        r = math.inf if obj["r"] == "inf" else float(obj["r"])
        return cls(obj["M"], r, obj["blocks"])


def dsum_norm(x: DirectSumVector, r=None, exact: bool | None = None) -> float:
    """(sum ||f_n||^r)^(1/r), or max ||f_n|| for r = inf.  Defaults to x.r."""
    r = x.r if r is None else r
    norms = [sl_inf_norm(b, exact=exact) for b in x.blocks]
    if math.isinf(r):
        return max(norms)
    return math.fsum(v ** r for v in norms) ** (1.0 / r)


def gap(n: int) -> DyadicInterval:
    return DyadicInterval(n + 1, (1 << (n + 1)) - 1)


def gap_index_map(n: int) -> np.ndarray:
    """Index in SL^inf_(2n+1) of the image of each interval of D^n."""
    lv = index_levels(n)
    pos = np.arange(n_coeffs(n)) - ((1 << lv) - 1) + 1
    lev = n + 1 + lv
    out_pos = ((1 << (n + 1)) - 2) * (1 << lv) + pos
    return (1 << lev) - 1 + out_pos - 1


def embed_E(x: DirectSumVector, depth: int | None = None) -> np.ndarray:
    target = 2 * x.M + 1 if depth is None else depth
    if target < 2 * x.M + 1:
        raise ValueError(f"target depth {target} below 2M+1 = {2 * x.M + 1}")
    f = np.zeros(n_coeffs(target))
    for n, b in enumerate(x.blocks):
        f[gap_index_map(n)] = b
    return f


def gap_mask(depth: int, M: int | None = None) -> np.ndarray:
    """True at intervals contained in a gap (only E's range if M is given)."""
    keep = np.zeros(n_coeffs(depth), dtype=bool)
    top = depth - 1 if M is None else min(M, depth - 1)
    for n in range(top + 1):
        if M is None:
            g = gap(n)
            for level in range(g.level, depth + 1):
                d = level - g.level
                first = (1 << level) - 1 + ((g.position - 1) << d)
                keep[first:first + (1 << d)] = True
        else:
            idx = gap_index_map(n)
            keep[idx[idx < len(keep)]] = True
    return keep


def project_P(f, M: int | None = None) -> np.ndarray:
    """Keep the coefficients on intervals inside the gaps; zero the rest."""
    f = np.asarray(f, dtype=float)
    return np.where(gap_mask(depth_of(len(f)), M), f, 0.0)


def embed_G(f, M: int | None = None, r=math.inf) -> DirectSumVector:
    """Block n is the truncation of f to D^n."""
    f = np.asarray(f, dtype=float)
    M = depth_of(len(f)) if M is None else M
    g = pad(f, M) if depth_of(len(f)) < M else f
    return DirectSumVector(M, r, [truncate(g, n).copy() for n in range(M + 1)])


def retract_Q(x: DirectSumVector) -> np.ndarray:
    """Last-coordinate functional applied coefficientwise: the last block."""
    return x.blocks[-1].copy()
