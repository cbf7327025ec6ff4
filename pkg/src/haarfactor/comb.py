"""The three combinatorial selection steps.

* ``select_level_cover``: given a weight omega on dyadic intervals, find a
  level k >= r such that the intervals K of level k inside K0 with
  ``omega(K) <= tau |K|`` cover at least ``(1 - rho)|K0|``.  If
  ``omega(K) = sum_j |<f_j,h_K>| + |<h_K,g_j>|`` with ``sum ||f_j||_SL <= 1`` and
  ``sum ||g_j||_(SL)* <= |K0|``, such a level exists below
  ``r + floor(4 / (rho tau)^2)``.
* ``find_dense_root``: in a nested family with Carleson constant above
  ``k / rho``, find a member N0 whose first k+1 generations (restricted to
  subsets of N0) each cover more than ``(1 - rho)|N0|``.
* ``prune_to_dense``: thin a nested family whose generations 0..n nearly
  coincide so that every surviving set is (1 - beta)-covered by G_n.

All coverage comparisons are done with exact rationals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import DyadicInterval, LeafSet, NestedFamily, carleson_constant, depth_of, level_slice
from .errors import DepthExhausted, InternalInconsistency
from .haar import h1_norm, measures, pad, sl_inf_norm


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass
class FrequencyWeight:
    """omega(K) stored as the density ``omega(K)/|K|`` per coefficient index."""

    depth: int
    density: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.density * measures(self.depth)

    def __call__(self, K: DyadicInterval) -> float:
        return float(self.density[K.index] * float(K.measure))


def frequency_weight(fs: Sequence, gs: Sequence, depth: int | None = None) -> FrequencyWeight:
    """omega(K) = sum_j |<f_j, h_K>| + |<h_K, g_j>|.

    Since <f, h_K> = a_K |K|, the density omega(K)/|K| is just the sum of the
    absolute coefficients.
    """
    vecs = list(fs) + list(gs)
    if depth is None:
        depth = max((depth_of(len(v)) for v in vecs), default=0)
    density = np.zeros((1 << (depth + 1)) - 1)
    for v in vecs:
        density += np.abs(pad(np.asarray(v, dtype=float), depth))
    return FrequencyWeight(depth, density)


def weight_hypotheses(fs: Sequence, gs: Sequence, K0: DyadicInterval) -> dict:
    """Report the normalisation the level-cover guarantee needs.

    The dual norm of g is replaced by its H^1 norm, which dominates it.
    """
    sf = math.fsum(sl_inf_norm(f, exact=False) for f in fs)
    sg = math.fsum(h1_norm(g, exact=False) for g in gs)
    return {"sum_f_sl": sf, "sum_g_h1": sg, "K0_measure": float(K0.measure),
            "ok": sf <= 1 + 1e-12 and sg <= float(K0.measure) * (1 + 1e-12)}


def level_bound(rho, tau, r: int) -> int:
    """r + floor(4 / (rho^2 tau^2)), computed exactly."""
    rho, tau = _frac(rho), _frac(tau)
    return r + math.floor(Fraction(4) / (rho * rho * tau * tau))


@dataclass
class LevelCover:
    k: int
    intervals: list
    coverage: Fraction
    K0: DyadicInterval
    scanned: list = field(default_factory=list)  # (level, coverage) per level tried

    @property
    def fraction(self) -> Fraction:
        return self.coverage / self.K0.measure


def good_intervals(K0: DyadicInterval, omega: FrequencyWeight, tau, level: int) -> list:
    """Level-``level`` subintervals K of K0 with omega(K) <= tau |K|."""
    d = level - K0.level
    first = (1 << level) - 1 + ((K0.position - 1) << d)
    dens = omega.density[first:first + (1 << d)]
    ok = np.flatnonzero(dens <= float(tau))
    start = (K0.position - 1) << d
    return [DyadicInterval(level, start + int(j) + 1) for j in ok]


def select_level_cover(K0: DyadicInterval, omega: FrequencyWeight, tau, rho, r: int,
                       depth_cap: int) -> LevelCover:
    """Smallest k in [r, depth_cap] whose good intervals cover (1-rho)|K0|."""
    if r < K0.level:
        raise ValueError("need 2^-r <= |K0|, i.e. r >= level(K0)")
    if not 0 < _frac(rho) <= 1 or _frac(tau) <= 0:
        raise ValueError("need 0 < rho <= 1 and tau > 0")
    target = (1 - _frac(rho)) * K0.measure
    cap = min(depth_cap, omega.depth)
    scanned = []
    for k in range(r, cap + 1):
        good = good_intervals(K0, omega, tau, k)
        cov = Fraction(len(good), 1 << k)
        scanned.append((k, cov))
        if cov >= target:
            return LevelCover(k, good, cov, K0, scanned)
    best = max(scanned, key=lambda t: t[1], default=(None, Fraction(0)))
    raise DepthExhausted(
        f"no level in [{r}, {cap}] covers (1-rho)|K0| for K0={K0}",
        K0=str(K0), r=r, depth_cap=cap, best_level=best[0], best_coverage=float(best[1] / K0.measure),
        guaranteed_level=level_bound(rho, tau, r),
    )


# dense root ------------------------------------------------------------------

def generation_coverages(X: NestedFamily, top_index: int, k: int) -> list[Fraction]:
    """|G_l({N in X : N subset X[top]})| / |X[top]| for l = 0..k.

    Generation of N below the top equals depth(N) - depth(top), and sets of
    one generation are pairwise disjoint, so measures add up.
    """
    depth = X.depths()
    top = X.sets[top_index]
    d0 = depth[top_index]
    counts = [0] * (k + 1)
    for s, d in zip(X.sets, depth):
        g = d - d0
        if 0 <= g <= k and s.mask & ~top.mask == 0:
            counts[g] += s.count
    return [Fraction(c, top.count) for c in counts]


def find_dense_root(X: NestedFamily, k: int, rho) -> LeafSet:
    """First member N0 (in family order) with all coverages > 1 - rho."""
    rho = _frac(rho)
    if not 0 < rho < 1 or k < 0:
        raise ValueError("need 0 < rho < 1 and k >= 0")
    cc = carleson_constant(X)
    if not cc > k / rho:
        raise ValueError(f"precondition fails: Carleson constant {cc} <= k/rho = {k / rho}")
    for i in range(len(X)):
        if all(c > 1 - rho for c in generation_coverages(X, i, k)):
            return X.sets[i]
    raise InternalInconsistency("no dense root although the Carleson constant is large enough")


# pruning ----------------------------------------------------------------------

@dataclass
class PruneResult:
    Y: NestedFamily
    F: list  # F_0, ..., F_n as lists of LeafSet
    F_sets: list  # point sets of F_0, ..., F_n
    core: LeafSet  # F_0 & ... & F_n
    checks: dict


def prune_threshold(n: int, beta) -> Fraction:
    """alpha must stay below 2^-(n+1) beta^(n+1)."""
    return _frac(beta) ** (n + 1) / (1 << (n + 1))


def prune_to_dense(X: NestedFamily, n: int, alpha, beta) -> PruneResult:
    """Thin X as in the monochromatic pruning lemma.

    F_0 = G_n(X); F_j = {N in G_{n-j}(X) : |N & F_0 & ... & F_{j-1}| >= (1-beta)|N|};
    Y = sets of some F_j meeting F_0 & ... & F_n.
    Conclusions checked before returning:
      (a) |G_n(Y)| > (1 - alpha 2^(n+1) / beta^(n+1)) |G_0(X)|,
      (b) |N & G_n(Y)| >= (1-beta)|N| for N in Y,
      G_n(Y) = F_0 & ... & F_n.
    """
    alpha, beta = _frac(alpha), _frac(beta)
    if not 0 < beta < 1 or not 0 < alpha < prune_threshold(n, beta):
        raise ValueError("need 0 < beta < 1 and 0 < alpha < 2^-(n+1) beta^(n+1)")
    from .dyadic import generation_set, generations
    gens = generations(X)
    G0 = generation_set(X, 0)
    Gn = generation_set(X, n)
    if not Gn.measure > (1 - alpha) * G0.measure:
        raise ValueError("precondition fails: |G_n(X)| <= (1-alpha)|G_0(X)|")
    res = X.resolution
    F = [list(gens[n].sets)]
    F_sets = [Gn]
    core = Gn.mask
    for j in range(1, n + 1):
        keep = []
        for N in gens[n - j].sets:
            if Fraction((N.mask & core).bit_count(), N.count) >= 1 - beta:
                keep.append(N)
        F.append(keep)
        mask = 0
        for N in keep:
            mask |= N.mask
        F_sets.append(LeafSet(res, mask))
        core &= mask
    Y = NestedFamily((N for Fj in F for N in Fj if N.mask & core), res, check=False)
    core_set = LeafSet(res, core)

    GnY = generation_set(Y, n) if len(Y) else LeafSet(res, 0)
    bound = 1 - alpha * (1 << (n + 1)) / beta ** (n + 1)
    checks = {
        "a": GnY.measure > bound * G0.measure,
        "b": all(Fraction((N.mask & GnY.mask).bit_count(), N.count) >= 1 - beta for N in Y),
        "core": GnY.mask == core,
    }
    if not all(checks.values()):
        raise InternalInconsistency(f"pruning conclusions failed: {checks}")
    return PruneResult(Y, F, F_sets, core_set, checks)


# random instances ----------------------------------------------------------------

def random_nested_family(resolution: int, seed=0, generations: int = 4, branching: int = 3,
                         loss: float = 0.2, rng=None) -> NestedFamily:
    """Random nested family of leaf sets at the given resolution.

    Starting from [0,1), every member of generation g < ``generations`` gets
    up to ``branching`` children: its leaves are dealt into random disjoint
    parts and each leaf is dropped with probability ``loss``.  With loss 0
    every generation covers [0,1) and the Carleson constant is the number of
    generations.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    n_leaves = 1 << resolution
    sets = [np.ones(n_leaves, dtype=bool)]
    frontier = [sets[0]]
    for _ in range(generations - 1):
        nxt = []
        for S in frontier:
            idx = np.flatnonzero(S)
            idx = idx[rng.random(len(idx)) >= loss]
            if len(idx) == 0:
                continue
            parts = rng.integers(0, branching, len(idx))
            for b in range(branching):
                sub = idx[parts == b]
                if len(sub) and len(sub) < S.sum():
                    child = np.zeros(n_leaves, dtype=bool)
                    child[sub] = True
                    nxt.append(child)
        sets.extend(nxt)
        frontier = nxt
    return NestedFamily((LeafSet.from_array(s) for s in sets), resolution, check=False)


def random_weight_instance(depth: int, K0: DyadicInterval, seed=0, n_f: int = 3, n_g: int = 3,
                           sparsity: float = 0.3, rng=None) -> tuple[list, list]:
    """Random (f_j), (g_j) normalised so that sum ||f_j||_SL = 1 and
    sum ||g_j||_H1 = |K0|, the hypotheses of the level-cover step."""
    rng = np.random.default_rng(seed) if rng is None else rng
    d = (1 << (depth + 1)) - 1

    def draw():
        v = rng.standard_normal(d) * (rng.random(d) < sparsity)
        v *= rng.uniform(0.1, 10.0, d) ** rng.choice([-1, 1])
        if not np.any(v):
            v[int(rng.integers(d))] = 1.0
        return v

    wf = rng.dirichlet(np.ones(n_f))
    wg = rng.dirichlet(np.ones(n_g)) * float(K0.measure)
    fs = [draw() for _ in range(n_f)]
    gs = [draw() for _ in range(n_g)]
    fs = [w * f / sl_inf_norm(f, exact=False) for w, f in zip(wf, fs)]
    gs = [w * g / h1_norm(g, exact=False) for w, g in zip(wg, gs)]
    return fs, gs
