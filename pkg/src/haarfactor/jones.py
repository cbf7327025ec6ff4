"""Block basis families and Jones' compatibility conditions.

A family assigns to every I in D^n a collection B_I of pairwise disjoint
dyadic intervals of D^N, plus a sign for each member.  It spans the block
vectors ``b_I = sum_{K in B_I} eps_K h_K``.  When the point sets
``B_I = union(B_I)`` mirror the dyadic tree (conditions J1-J3) and the
density condition J4 holds with constant kappa, the map ``B: h_I -> b_I`` is
an isometric-at-most embedding SL^inf_n -> SL^inf_N and its left inverse

    Q g = sum_I <g, b_I> / ||b_I||_2^2 h_I

has norm at most kappa^(1/2).

``verify_jones`` computes the smallest admissible kappa exactly.  It also
accepts families whose members are *labels* standing for arbitrary leaf sets
(pass ``member_sets``); this is how the outer family of a reiteration is
checked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .dyadic import DyadicInterval, LeafSet, intervals, n_coeffs
from .haar import measures


@dataclass
class BlockBasisFamily:
    n: int
    N: int
    collections: dict
    signs: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = intervals(self.n)
        if sorted(self.collections) != expected:
            raise ValueError("collections must be indexed by every interval of D^n")
        cols = {}
        for I in expected:
            members = tuple(sorted(set(self.collections[I])))
            for K in members:
                if K.level > self.N:
                    raise ValueError(f"member {K} deeper than N={self.N}")
            cols[I] = members
        self.collections = cols
        self.signs = {K: int(s) for K, s in self.signs.items() if int(s) != 1}
        for s in self.signs.values():
            if s != -1:
                raise ValueError("signs must be +1 or -1")

    @classmethod
    def identity(cls, n: int) -> "BlockBasisFamily":
        return cls(n, n, {I: (I,) for I in intervals(n)})

    def members(self, I: DyadicInterval) -> tuple:
        return self.collections[I]

    def all_members(self) -> list:
        return [K for I in intervals(self.n) for K in self.collections[I]]

    def sign(self, K: DyadicInterval) -> int:
        return self.signs.get(K, 1)

    def with_signs(self, signs: Mapping) -> "BlockBasisFamily":
        return BlockBasisFamily(self.n, self.N, dict(self.collections), dict(signs))

    def point_set(self, I: DyadicInterval) -> LeafSet:
        return LeafSet.from_intervals(self.collections[I], self.N)

    def point_sets(self) -> dict:
        return {I: self.point_set(I) for I in intervals(self.n)}

    def vector(self, I: DyadicInterval) -> np.ndarray:
        b = np.zeros(n_coeffs(self.N))
        for K in self.collections[I]:
            b[K.index] = self.sign(K)
        return b

    def norm2(self, I: DyadicInterval) -> Fraction:
        """||b_I||_2^2 = |B_I| (disjoint supports)."""
        return sum((K.measure for K in self.collections[I]), Fraction(0))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "collections": {str(I.order): [K.to_json() for K in self.collections[I]] for I in intervals(self.n)},
            "signs": {str(K.order): s for K, s in sorted(self.signs.items())},
        }

    @classmethod
    def from_json(cls, obj) -> "BlockBasisFamily":
        cols = {DyadicInterval.from_order(int(o)): [DyadicInterval.from_json(k) for k in ks]
                for o, ks in obj["collections"].items()}
        signs = {DyadicInterval.from_order(int(o)): int(s) for o, s in obj.get("signs", {}).items()}
        return cls(int(obj["n"]), int(obj["N"]), cols, signs)


@dataclass
class JonesReport:
    j1_ok: bool
    j2_ok: bool
    j3_ok: bool
    kappa_measured: Fraction | float
    kappa_witnesses: list
    nesting_ok: bool = True  # B_I0 subset B_I only if I0 subset I
    violations: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.j1_ok and self.j2_ok and self.j3_ok and math.isfinite(self.kappa_measured)

    def satisfies(self, kappa) -> bool:
        return self.ok and self.kappa_measured <= kappa

    def to_json(self) -> dict:
        k = self.kappa_measured
        return {
            "j1_ok": self.j1_ok, "j2_ok": self.j2_ok, "j3_ok": self.j3_ok,
            "nesting_ok": self.nesting_ok,
            "kappa_measured": float(k), "kappa_exact": str(k),
            "kappa_witnesses": [[str(a) for a in w] for w in self.kappa_witnesses],
            "violations": {key: [[str(a) for a in w] for w in ws] for key, ws in self.violations.items()},
        }


def verify_jones(F: BlockBasisFamily, member_sets: Mapping | Callable | None = None,
                 max_witnesses: int = 20) -> JonesReport:
    """Check J1-J3 and measure the J4 constant exactly.

    ``member_sets`` maps a member label to its point set; by default a member
    K stands for the interval K itself at resolution N.
    """
    if member_sets is None:
        def S(K):
            return K.point_set(F.N)
        check_j1 = False  # dyadic intervals are always nested or disjoint
    else:
        S = member_sets if callable(member_sets) else member_sets.__getitem__
        check_j1 = True

    D = intervals(F.n)
    sets = {K: S(K) for K in F.all_members()}
    res = max((s.resolution for s in sets.values()), default=F.N)
    masks = {K: s.refine(res).mask for K, s in sets.items()}
    viol = {"j1": [], "j2": [], "j3": [], "nesting": [], "j4_empty": []}

    if check_j1:
        items = list(masks.items())
        for i, (K, a) in enumerate(items):
            for L, b in items[i + 1:]:
                c = a & b
                if c and c != a and c != b:
                    viol["j1"].append((K, L))

    owner = {}
    B = {}
    for I in D:
        members = F.collections[I]
        if not members:
            viol["j2"].append((I, "empty"))
        acc = 0
        for K in members:
            if acc & masks[K]:
                viol["j2"].append((I, K))
            acc |= masks[K]
            if K in owner:
                viol["j2"].append((owner[K], I, K))
            owner[K] = I
        B[I] = acc
    if member_sets is not None:
        # distinct labels may still carry the same set
        seen = {}
        for K, m in masks.items():
            if m in seen and seen[m] != K:
                viol["j2"].append((seen[m], K))
            seen[m] = K

    for a, I0 in enumerate(D):
        for I1 in D[a + 1:]:
            if I1.contains(I0) or I0.contains(I1):
                small, big = (I0, I1) if I1.contains(I0) else (I1, I0)
                if B[small] & ~B[big]:
                    viol["j3"].append((small, big))
                if B[big] & ~B[small] == 0 and B[big]:
                    viol["nesting"].append((big, small))
            else:
                if B[I0] & B[I1]:
                    viol["j3"].append((I0, I1))
                if B[I0] and B[I0] & ~B[I1] == 0:
                    viol["nesting"].append((I0, I1))
                if B[I1] and B[I1] & ~B[I0] == 0:
                    viol["nesting"].append((I1, I0))

    kappa: Fraction | float = Fraction(0) if D else Fraction(1)
    witnesses = []
    for I in D:
        cI = B[I].bit_count()
        if cI == 0:
            continue
        for I0 in D:
            if not I.contains(I0):
                continue
            c0 = B[I0].bit_count()
            for K in F.collections[I]:
                cK = masks[K].bit_count()
                cap = (masks[K] & B[I0]).bit_count()
                if cap == 0:
                    ratio = math.inf
                    viol["j4_empty"].append((I0, I, K))
                else:
                    ratio = Fraction(c0 * cK, cI * cap)
                if ratio > kappa:
                    kappa, witnesses = ratio, [(I0, I, K)]
                elif ratio == kappa and len(witnesses) < max_witnesses:
                    witnesses.append((I0, I, K))
    violations = {k: v[:max_witnesses] for k, v in viol.items() if v}
    return JonesReport(
        j1_ok=not viol["j1"], j2_ok=not viol["j2"], j3_ok=not viol["j3"],
        kappa_measured=kappa, kappa_witnesses=witnesses,
        nesting_ok=not viol["nesting"], violations=violations,
    )


def embed_B(F: BlockBasisFamily) -> np.ndarray:
    """Matrix of B: SL^inf_n -> SL^inf_N, column I = b_I."""
    out = np.zeros((n_coeffs(F.N), n_coeffs(F.n)))
    for I in intervals(F.n):
        for K in F.collections[I]:
            out[K.index, I.index] = F.sign(K)
    return out


def project_Q(F: BlockBasisFamily, exact: bool = False) -> np.ndarray:
    """Matrix of Q: SL^inf_N -> SL^inf_n, Q g = sum_I <g,b_I>/|B_I| h_I.

    With ``exact=True`` the entries are Fractions (object array), so that
    products such as ``Q @ B`` can be checked without rounding.
    """
    if exact:
        out = np.full((n_coeffs(F.n), n_coeffs(F.N)), Fraction(0), dtype=object)
    else:
        out = np.zeros((n_coeffs(F.n), n_coeffs(F.N)))
    for I in intervals(F.n):
        total = F.norm2(I)
        for K in F.collections[I]:
            w = F.sign(K) * K.measure / total
            out[I.index, K.index] = w if exact else float(w)
    return out


def projection_P(F: BlockBasisFamily, exact: bool = False) -> np.ndarray:
    """P = B Q, the projection of SL^inf_N onto span{b_I}."""
    Bm = embed_B(F)
    if exact:
        Bm = Bm.astype(int).astype(object)
    return Bm @ project_Q(F, exact)


def sign_flip(F: BlockBasisFamily) -> np.ndarray:
    """Diagonal of the coefficient sign change g -> g^(eps) (Remark on signs)."""
    d = np.ones(n_coeffs(F.N))
    for K, s in F.signs.items():
        d[K.index] = s
    return d


def reiterate(outer: BlockBasisFamily, inner: BlockBasisFamily) -> BlockBasisFamily:
    """Compose: the outer family's members are intervals of D^{inner.n} that
    stand for the inner point sets A_K.  The result has collections
    ``C_J = union of inner.collections[K] over K in outer.collections[J]``
    and signs multiplied through."""
    if outer.N != inner.n:
        raise ValueError(f"outer members live in D^{outer.N} but the inner family is indexed by D^{inner.n}")
    cols, signs = {}, {}
    for J in intervals(outer.n):
        members = []
        for K in outer.collections[J]:
            for L in inner.collections[K]:
                members.append(L)
                s = outer.sign(K) * inner.sign(L)
                if s != 1:
                    signs[L] = s
        cols[J] = members
    return BlockBasisFamily(outer.n, inner.N, cols, signs)


def member_sets_of(inner: BlockBasisFamily) -> dict:
    """Label -> point set map to check an outer family against ``inner``."""
    return inner.point_sets()


def random_family(n: int, N: int, seed=0, extra_levels: int = 2, keep: float = 0.7,
                  signs: bool = True) -> BlockBasisFamily:
    """Random family built by Gamlen-Gaudet descent.

    B_[0,1) is a random nonempty set of intervals of one level.  For a child
    I0 of I, every member K0 of B_I contributes a random nonempty set of
    equal-level subintervals of the matching half of K0.  J1-J3 hold by
    construction; J4 holds with whatever constant the random choices give.
    """
    if N < n:
        raise ValueError("need N >= n")
    rng = np.random.default_rng(seed)

    def pick(K1: DyadicInterval, level_budget: int):
        top = min(level_budget, K1.level + extra_levels)
        L = int(rng.integers(K1.level, top + 1))
        cands = K1.descendants(L)
        chosen = [K for K in cands if rng.random() < keep]
        if not chosen:
            chosen = [cands[int(rng.integers(len(cands)))]]
        return chosen

    cols = {}
    root = DyadicInterval.root()
    cols[root] = pick(root, N - n)
    for I0 in intervals(n)[1:]:
        side = "left" if I0.is_left_child else "right"
        budget = N - (n - I0.level)
        members = []
        for K0 in cols[I0.parent]:
            members += pick(K0.child(side), budget)
        cols[I0] = members
    sg = {}
    if signs:
        for ks in cols.values():
            for K in ks:
                if rng.random() < 0.5:
                    sg[K] = -1
    return BlockBasisFamily(n, N, cols, sg)
