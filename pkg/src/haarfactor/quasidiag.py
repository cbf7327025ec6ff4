"""Block bases that almost diagonalise an operator.

The intervals of D^n are processed in linear order.  B_[0,1) = {[0,1)}; for
a later interval I0 with parent I and side s (left/right), each member K0 of
B_I contributes the intervals chosen by ``select_level_cover`` inside the
s-half K1 of K0.  The weight steering that choice is built from the vectors
already constructed,

    f_j = T b_j / (2^j 2^(m+1) Gamma),   g_j = T* b_j / (2^j 2^(m+1) Gamma),

where m bounds the levels used so far and Gamma bounds ||T||.  Intervals with
small weight carry little of the earlier T b_j, T* b_j, which makes the
cross terms <T b_j, b_i> small.  Signs are then chosen so that the diagonal
term <T b_i, b_i> is at least delta ||b_i||^2.

Two schedules are supported.  ``paper_schedule`` reproduces the closed-form
constants rho_i, tau_i, m_i; the resulting depth explodes for n >= 1, so in
practice only n = 0 runs.  ``adaptive_schedule`` takes rho_i, tau_i from the
caller, uses the operator's own depth as the cap, and every conclusion is
measured after the fact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .comb import FrequencyWeight, _frac, select_level_cover
from .dyadic import DyadicInterval, depth_of, intervals, n_coeffs
from .errors import BudgetExceeded, DepthExhausted
from .haar import h1_norm, measures, sl_inf_norm
from .jones import BlockBasisFamily, embed_B, projection_P, verify_jones
from .operators import adjoint, opnorm_upper


@dataclass
class Schedule:
    mode: str
    rho: object  # scalar or per-step sequence (index i-1 for step i)
    tau: object
    m: list | None = None
    N: int | None = None
    gamma: float | None = None
    eta: object = None
    fresh_levels: bool = True
    overflow_step: int | None = None

    def _at(self, seq, i):
        if isinstance(seq, (list, tuple)):
            return seq[i - 1]
        return seq

    def rho_at(self, i: int):
        return self._at(self.rho, i)

    def tau_at(self, i: int):
        return self._at(self.tau, i)

    def to_json(self) -> dict:
        def num(x):
            if x is None:
                return None
            if isinstance(x, (list, tuple)):
                return [num(v) for v in x]
            return float(x)
        out = {"mode": self.mode, "rho": num(self.rho), "tau": num(self.tau),
               "gamma": num(self.gamma), "eta": num(self.eta), "fresh_levels": self.fresh_levels}
        if self.mode == "paper":
            out["m"] = [str(v) if v is not None else None for v in (self.m or [])]
            out["N"] = str(self.N) if self.N is not None else None
            out["overflow_step"] = self.overflow_step
        return out


def paper_schedule(n: int, gamma, eta, max_bits: int = 1 << 22) -> Schedule:
    """rho_i = eta 2^-i, tau_{i+1} = eta 8^-(i+1) 2^-m_i / Gamma, m_1 = 0,
    m_{i+1} = m_i + 1 + floor(4 / (rho_{i+1}^2 tau_{i+1}^2)), N = m_last.

    Everything is exact.  The m_i grow doubly exponentially; once the next
    value would need more than ``max_bits`` bits the schedule stops and
    records ``overflow_step`` (N is then None).
    """
    gamma, eta = _frac(gamma), _frac(eta)
    if gamma <= 0 or eta <= 0:
        raise ValueError("need Gamma > 0 and eta > 0")
    steps = (1 << (n + 1)) - 1
    rho = [eta / (1 << i) for i in range(1, steps + 1)]
    tau: list = [None] * steps
    m: list = [0] + [None] * (steps - 1)
    overflow = None
    for i in range(1, steps):
        mi = m[i - 1]
        # 4 / (rho^2 tau^2) = 4 Gamma^2 / eta^4 * 2^(2(i+1) + 6(i+1) + 2 m_i)
        shift = 8 * (i + 1) + 2 * mi
        if shift > max_bits:
            overflow = i + 1
            break
        tau[i] = eta / Fraction(8 ** (i + 1) * (1 << mi)) / gamma
        big = Fraction(4) * gamma * gamma / eta ** 4 * (1 << shift)
        m[i] = mi + 1 + math.floor(big)
    N = m[-1] if overflow is None else None
    return Schedule("paper", rho, tau, m, N, gamma, eta, fresh_levels=True, overflow_step=overflow)


def adaptive_schedule(rho=0.1, tau=0.05, gamma=None, fresh_levels: bool = True) -> Schedule:
    """Caller-supplied tolerances (scalars or per-step sequences, step 1 first)."""
    for seq in (rho, tau):
        vals = list(seq) if isinstance(seq, (list, tuple)) else [seq]
        if any(v <= 0 for v in vals):
            raise ValueError("rho_i and tau_i must be positive")
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise ValueError("rho_i and tau_i must be non-increasing")
    if isinstance(rho, (list, tuple)):
        rho = list(rho)
    if isinstance(tau, (list, tuple)):
        tau = list(tau)
    return Schedule("adaptive", rho, tau, gamma=gamma, fresh_levels=fresh_levels)


# signs ------------------------------------------------------------------------

def sign_form(collection: Sequence[DyadicInterval], T) -> np.ndarray:
    """C with X(eps) = eps^T C eps = sum_{K0 != K1} eps_K0 eps_K1 <r_K0, h_K1>.

    <r_K0, h_K1> = A[K1, K0] |K1| for K0 != K1.
    """
    T = np.asarray(T)
    idx = np.array([K.index for K in collection], dtype=int)
    meas = np.array([float(K.measure) for K in collection])
    C = T[np.ix_(idx, idx)].T * meas[None, :]
    np.fill_diagonal(C, 0.0)
    return C


def sign_value(C: np.ndarray, eps) -> Fraction:
    """X(eps) evaluated exactly (the float entries are dyadic rationals)."""
    eps = [int(e) for e in eps]
    total = Fraction(0)
    for a, row in enumerate(C.tolist()):
        s = Fraction(0)
        for b, c in enumerate(row):
            if c:
                s += eps[b] * Fraction(c)
        total += eps[a] * s
    return total


@dataclass
class SignChoice:
    signs: dict
    value: Fraction
    method: str


def _exhaustive(C: np.ndarray) -> np.ndarray:
    m = len(C)
    S = (C + C.T) / 2
    best_val, best = -np.inf, None
    total = 1 << (m - 1)
    chunk = 1 << 15
    bits = np.arange(m - 1)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk))
        E = np.ones((len(codes), m))
        E[:, 1:] = 1 - 2 * ((codes[:, None] >> bits[None, :]) & 1)
        vals = np.einsum("ij,ij->i", E @ S, E)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best = vals[j], E[j].copy()
    return best


def _derandomized(C: np.ndarray) -> np.ndarray:
    """Fix signs one by one keeping the conditional mean of X non-negative.

    With the remaining signs random, E[X | fixed] is the form restricted to
    the fixed coordinates; adding coordinate k changes it by
    eps_k * sum_{j fixed} (C_kj + C_jk) eps_j, so pick eps_k to make that >= 0.
    The sums are done in exact arithmetic.
    """
    m = len(C)
    sym = [[Fraction(C[a, b]) + Fraction(C[b, a]) for b in range(m)] for a in range(m)]
    order = np.argsort(-np.abs(C).sum(axis=1), kind="stable")
    eps = np.zeros(m)
    fixed = []
    for k in order:
        contrib = sum((sym[k][j] * int(eps[j]) for j in fixed), Fraction(0))
        eps[k] = 1.0 if contrib >= 0 else -1.0
        fixed.append(int(k))
    return eps


def choose_signs(collection: Sequence[DyadicInterval], T, exhaustive_limit: int = 20) -> SignChoice:
    """Signs eps on ``collection`` with X(eps) >= 0.

    Up to ``exhaustive_limit`` intervals the maximiser of X is found by
    enumeration (eps_first = +1 by symmetry); beyond that the conditional
    expectation method is used.  If every cross term vanishes all signs are +1.
    """
    collection = list(collection)
    C = sign_form(collection, T)
    m = len(collection)
    if m == 0:
        return SignChoice({}, Fraction(0), "empty")
    if not np.any(C):
        return SignChoice({K: 1 for K in collection}, Fraction(0), "trivial")
    if m <= exhaustive_limit:
        eps, method = _exhaustive(C), "exhaustive"
        val = sign_value(C, eps)
        if val < 0:  # rounding picked a near-tie badly
            eps, method = _derandomized(C), "derandomized"
            val = sign_value(C, eps)
    else:
        eps, method = _derandomized(C), "derandomized"
        val = sign_value(C, eps)
    if val < 0:
        raise AssertionError("sign selection produced X < 0")
    return SignChoice({K: int(e) for K, e in zip(collection, eps)}, val, method)


def exhaustive_sign_max(collection: Sequence[DyadicInterval], T) -> Fraction:
    """Brute-force max over all sign patterns of X(eps), exact; small inputs only.

    Entries are scaled to integers over one power-of-two denominator and the
    patterns are walked in Gray-code order, so each step is one exact update.
    """
    C = sign_form(list(collection), T)
    m = len(C)
    if m == 0:
        return Fraction(0)
    ratios = [[float(c).as_integer_ratio() for c in row] for row in C.tolist()]
    den = math.lcm(*(d for row in ratios for _, d in row))
    Ci = [[n * (den // d) for n, d in row] for row in ratios]
    S = [[Ci[a][b] + Ci[b][a] for b in range(m)] for a in range(m)]
    eps = [1] * m
    val = sum(Ci[a][b] for a in range(m) for b in range(m))
    field_ = [sum(S[a][b] for b in range(m) if b != a) for a in range(m)]  # sum_b S_ab eps_b
    best = val
    for step in range(1, 1 << m):
        k = (step & -step).bit_length() - 1
        # flipping eps_k changes X by -2 eps_k sum_{b != k} C_kb eps_b + C_bk eps_b
        val -= 2 * eps[k] * field_[k]
        eps[k] = -eps[k]
        for a in range(m):
            if a != k:
                field_[a] += 2 * eps[k] * S[a][k]
        best = max(best, val)
    return Fraction(best, den)


# descent -----------------------------------------------------------------------

@dataclass
class QuasiDiagResult:
    family: BlockBasisFamily
    schedule: Schedule
    offdiag_sums: list
    diag_values: list
    norms2: list  # ||b_i||_2^2 = |B_i|
    measure_floors: list  # |B_I| / |I|
    rho_achieved: list
    eta_achieved: float
    delta_achieved: float
    kappa_measured: object
    kappa_bound: float
    jones_ok: bool
    log: list
    gamma: float
    hypotheses_ok: bool
    notes: list = field(default_factory=list)

    def inequality_a(self, eta=None, tol=1e-12) -> bool:
        eta = self.eta_achieved if eta is None else float(eta)
        return all(o <= eta * 4.0 ** -(i + 1) * w * (1 + tol) + tol * 4.0 ** -(i + 1) * w
                   for i, (o, w) in enumerate(zip(self.offdiag_sums, self.norms2)))

    def inequality_b(self, delta, tol=1e-12) -> bool:
        return all(d >= float(delta) * w - tol * w for d, w in zip(self.diag_values, self.norms2))

    def to_json(self) -> dict:
        return {
            "family": self.family.to_json(),
            "schedule": self.schedule.to_json(),
            "offdiag_sums": self.offdiag_sums,
            "diag_values": self.diag_values,
            "norms2": self.norms2,
            "measure_floors": [float(x) for x in self.measure_floors],
            "rho_achieved": [float(x) for x in self.rho_achieved],
            "eta_achieved": self.eta_achieved,
            "delta_achieved": self.delta_achieved,
            "kappa_measured": float(self.kappa_measured),
            "kappa_bound": self.kappa_bound,
            "jones_ok": self.jones_ok,
            "gamma": self.gamma,
            "hypotheses_ok": self.hypotheses_ok,
            "notes": self.notes,
            "log": self.log,
        }


def _descend(N: int, n: int, schedule: Schedule, density_for: Callable, signs_for: Callable,
             on_block: Callable, log: list, select_root: bool = False) -> tuple[dict, dict, list]:
    """Generic Gamlen-Gaudet descent; returns collections, signs and per-step
    achieved rho.

    The first collection is {[0,1)} unless ``select_root`` is set, in which
    case it is chosen by the level cover like every later one (needed when
    the weight is known before the first step)."""
    D = intervals(n)
    root = D[0]
    signs = {}
    if select_root:
        omega = FrequencyWeight(N, density_for(1, -1))
        cover = select_level_cover(root, omega, schedule.tau_at(1), schedule.rho_at(1), 0, N)
        first, rho_ach, used = cover.intervals, [1 - cover.fraction], cover.k
    else:
        first, rho_ach, used = [root], [Fraction(0)], 0  # used: deepest level so far
    cols = {root: first}
    on_block(1, root, first, {K: 1 for K in first})
    log.append({"i0": 1, "interval": str(root), "k": [used], "coverage": float(1 - rho_ach[0]),
                "size": len(first)})
    for i0 in range(2, len(D) + 1):
        I0 = D[i0 - 1]
        side = "left" if I0.is_left_child else "right"
        if schedule.mode == "paper":
            m_prev, cap = schedule.m[i0 - 2], schedule.m[i0 - 1]
        else:
            m_prev, cap = used, N
        dens = density_for(i0, m_prev)
        omega = FrequencyWeight(N, dens)
        rho, tau = schedule.rho_at(i0), schedule.tau_at(i0)
        chosen, ks, worst = [], [], Fraction(1)
        for K0 in cols[I0.parent]:
            K1 = K0.child(side)
            r = m_prev + 1 if schedule.fresh_levels else K1.level
            cover = select_level_cover(K1, omega, tau, rho, r, cap)
            chosen += cover.intervals
            ks.append(cover.k)
            worst = min(worst, cover.fraction)
        choice = signs_for(chosen)
        cols[I0] = chosen
        signs.update({K: s for K, s in choice.signs.items() if s != 1})
        rho_ach.append(1 - worst)
        used = max(used, max(ks))
        entry = {"i0": i0, "interval": str(I0), "k": ks, "coverage": float(worst),
                 "size": len(chosen), "X": float(choice.value), "sign_method": choice.method}
        entry.update(on_block(i0, I0, chosen, choice.signs))
        log.append(entry)
    return cols, signs, rho_ach


def quasi_diagonalize(T, n: int, schedule: Schedule | None = None, delta: float = 0.0,
                      exhaustive_limit: int = 20) -> QuasiDiagResult:
    """Build (b_I) for I in D^n inside the depth of T.

    With delta > 0 the diagonal of T must be >= delta (apply
    ``operators.normalize_diagonal_signs`` first if only |A_KK| >= delta).
    """
    A = np.asarray(T, dtype=float)
    N = depth_of(A.shape[0])
    if schedule is None:
        schedule = adaptive_schedule()
    if schedule.mode == "paper":
        if schedule.N is None or schedule.N > N or len(schedule.m) != (1 << (n + 1)) - 1:
            raise DepthExhausted(
                "paper schedule needs a deeper operator",
                required_N=str(schedule.N) if schedule.N is not None else f"overflow at step {schedule.overflow_step}",
                available_N=N,
            )
    if delta > 0 and np.min(np.diag(A)) < delta:
        raise ValueError("diagonal below delta; normalise signs first")
    Astar = adjoint(A)
    gamma = float(schedule.gamma) if schedule.gamma is not None else opnorm_upper(A)
    if gamma <= 0:
        gamma = 1.0
    Tb, Tsb, blocks = [], [], []
    offdiag, diag, norms2 = [], [], []
    hyp_ok = [True]
    wmeas = measures(N)

    def density_for(i0, m_prev):
        dens = np.zeros(n_coeffs(N))
        scale0 = 1.0 / (2.0 ** (m_prev + 1) * gamma)
        sf = sg = 0.0
        for j, (u, v) in enumerate(zip(Tb, Tsb), start=1):
            c = scale0 / 2.0 ** j
            dens += c * (np.abs(u) + np.abs(v))
            sf += c * sl_inf_norm(u, exact=False)
            sg += c * h1_norm(v, exact=False)
        # hypotheses of the level cover: sum ||f_j|| <= 1, sum ||g_j||_* <= |K1|
        if sf > 1 + 1e-12 or sg > 2.0 ** -(m_prev + 1) * (1 + 1e-12):
            hyp_ok[0] = False
        return dens

    def signs_for(chosen):
        if delta == 0:
            return SignChoice({K: 1 for K in chosen}, _cross_value(chosen, A), "all-plus")
        return choose_signs(chosen, A, exhaustive_limit)

    def on_block(i0, I0, chosen, sg):
        b = np.zeros(n_coeffs(N))
        for K in chosen:
            b[K.index] = sg.get(K, 1)
        u, v = A @ b, Astar @ b
        w = b * wmeas
        off = 0.0
        for uj, vj in zip(Tb, Tsb):
            off += abs(float(uj @ w)) + abs(float(w @ vj))
        blocks.append(b)
        Tb.append(u)
        Tsb.append(v)
        nb = float(sum(K.measure for K in chosen))
        offdiag.append(off)
        diag.append(float(u @ w))
        norms2.append(nb)
        return {"offdiag": off, "diag": diag[-1]}

    log: list = []
    cols, signs, rho_ach = _descend(N, n, schedule, density_for, signs_for, on_block, log)
    family = BlockBasisFamily(n, N, cols, signs)
    return _finish(family, schedule, offdiag, diag, norms2, rho_ach, log, gamma, hyp_ok[0])


def _cross_value(chosen, A) -> Fraction:
    # informational only (no sign choice is made when delta = 0)
    return Fraction(float(sign_form(chosen, A).sum())) if chosen else Fraction(0)


def _finish(family, schedule, offdiag, diag, norms2, rho_ach, log, gamma, hyp_ok) -> QuasiDiagResult:
    rep = verify_jones(family)
    floors = [family.norm2(I) / I.measure for I in intervals(family.n)]
    eta_ach = max((4.0 ** (i + 1) * o / w for i, (o, w) in enumerate(zip(offdiag, norms2))), default=0.0)
    delta_ach = min(d / w for d, w in zip(diag, norms2))
    srho = sum(rho_ach, Fraction(0))
    kappa_bound = float(1 / (1 - srho)) if srho < 1 else math.inf
    notes = []
    if not rep.kappa_measured <= kappa_bound * (1 + 1e-12):
        notes.append("measured kappa exceeds 1/(1 - sum of achieved rho)")
    if schedule.mode == "paper" and schedule.eta is not None and schedule.eta < 1:
        nominal = 1 / (1 - Fraction(schedule.eta))
        if rep.kappa_measured > nominal:
            notes.append(f"measured kappa {float(rep.kappa_measured)} above the nominal 1/(1-eta) = {float(nominal)}")
    return QuasiDiagResult(
        family=family, schedule=schedule, offdiag_sums=offdiag, diag_values=diag, norms2=norms2,
        measure_floors=floors, rho_achieved=rho_ach, eta_achieved=eta_ach, delta_achieved=delta_ach,
        kappa_measured=rep.kappa_measured, kappa_bound=kappa_bound, jones_ok=rep.ok, log=log,
        gamma=gamma, hypotheses_ok=hyp_ok, notes=notes,
    )


# annihilating variant -----------------------------------------------------------

def unit_sphere_net(F_basis: Sequence, eta: float, budget: int = 200_000) -> list:
    """An eta/2-net of the SL^inf unit sphere of span(F_basis).

    Coefficient vectors c are taken on a grid of spacing h; since
    ||sum dc_i v_i|| <= sum |dc_i| ||v_i||, moving to the nearest grid point
    costs at most h/2 * sum ||v_i||, and renormalising at most doubles it.
    Unit vectors have |c_i| <= ||c||_2 <= 1 / sigma_min where sigma_min is the
    smallest singular value of the L^2-isometric coordinates (L^2 <= SL^inf).
    """
    V = [np.asarray(v, dtype=float) for v in F_basis]
    V = [v for v in V if np.any(v)]
    if not V:
        return []
    depth = depth_of(len(V[0]))
    M = np.stack(V, axis=1) * np.sqrt(measures(depth))[:, None]
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= 1e-14:
        raise ValueError("F_basis is linearly dependent")
    R = 1.0 / sv[-1]
    norms = [sl_inf_norm(v, exact=False) for v in V]
    if len(V) == 1:
        v = V[0] / norms[0]
        return [v, -v]
    h = eta / (2 * sum(norms))
    per_axis = 2 * math.ceil(R / h) + 1
    required = per_axis ** len(V)
    if required > budget:
        raise BudgetExceeded("net too large for the budget", required=required, budget=budget)
    grid = np.arange(-math.ceil(R / h), math.ceil(R / h) + 1) * h
    B = np.stack(V, axis=1)
    err = h / 2 * sum(norms)
    net = []
    for c in itertools.product(grid, repeat=len(V)):
        f = B @ np.array(c)
        nf = sl_inf_norm(f, exact=False)
        if nf > 0 and abs(nf - 1) <= err:
            net.append(f / nf)
    return net


@dataclass
class AnnihilatingResult:
    family: BlockBasisFamily
    P: np.ndarray
    net: list
    net_max_ratio: float
    kappa_measured: object
    jones_ok: bool
    log: list
    rho_achieved: list


def annihilating_basis(N: int, n: int, F_basis: Sequence, eta: float, schedule: Schedule | None = None,
                       budget: int = 200_000) -> AnnihilatingResult:
    """Block basis whose projection P nearly kills span(F_basis).

    The weight is omega(K) = sum_k |<f_k, h_K>| over an eta/2-net (f_k) of the
    unit sphere of F, used at every step.  Defaults: tau_i = eta/sqrt(n+1),
    which gives ||P f|| <= eta on the net because the block coefficients of
    P f are at most tau and a chain meets at most n+1 blocks; rho_i splits
    1 - (1+eta)^-2 evenly, which keeps kappa^(1/2) <= 1 + eta.
    """
    steps = (1 << (n + 1)) - 1
    if schedule is None:
        schedule = adaptive_schedule(rho=(1 - (1 + eta) ** -2) / steps, tau=eta / math.sqrt(n + 1))
    net = unit_sphere_net(F_basis, eta, budget)
    dens = np.zeros(n_coeffs(N))
    for f in net:
        dens += np.abs(f[: n_coeffs(N)])

    def density_for(i0, m_prev):
        return dens

    def signs_for(chosen):
        return SignChoice({K: 1 for K in chosen}, Fraction(0), "all-plus")

    def on_block(i0, I0, chosen, sg):
        return {}

    log: list = []
    cols, signs, rho_ach = _descend(N, n, schedule, density_for, signs_for, on_block, log, select_root=True)
    family = BlockBasisFamily(n, N, cols, signs)
    P = projection_P(family)
    ratio = max((sl_inf_norm(P @ f, exact=False) for f in net), default=0.0)
    rep = verify_jones(family)
    return AnnihilatingResult(family, P, net, ratio, rep.kappa_measured, rep.ok, log, rho_ach)
