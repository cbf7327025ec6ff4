import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from haarfactor.dyadic import DyadicInterval as D, intervals
from haarfactor.errors import BudgetExceeded, DepthExhausted
from haarfactor.haar import rademacher, sl_inf_norm, unit
from haarfactor.jones import embed_B
from haarfactor.operators import identity, level_multiplier, random_operator
from haarfactor.quasidiag import (adaptive_schedule, annihilating_basis, choose_signs, exhaustive_sign_max,
                                  paper_schedule, quasi_diagonalize, sign_form, sign_value, unit_sphere_net)


def test_paper_schedule_n0():
    s = paper_schedule(0, 1.0, 0.5)
    assert s.N == 0 and s.m == [0]


def test_paper_schedule_n1_second_depth():
    s = paper_schedule(1, 1, 1)
    # rho_2 = 1/4, tau_2 = 1/64: 1 + floor(4 / ((1/4)^2 (1/64)^2))
    assert s.m[1] == 1 + 262144
    assert s.rho_at(3) / s.rho_at(2) == Fraction(1, 2)


def test_paper_schedule_recursion_from_definition():
    gamma, eta = Fraction(2), Fraction(1, 2)
    s = paper_schedule(1, gamma, eta)
    m = [0]
    rho = eta / 4
    tau = eta / 8 ** 2 / 2 ** m[-1] / gamma
    m.append(m[-1] + 1 + math.floor(4 / (rho ** 2 * tau ** 2)))
    assert s.m[:2] == m
    # the third depth has about 2 m_2 bits: reported as an overflow, not computed
    assert s.N is None and s.overflow_step == 3


def test_paper_mode_infeasible_for_n1():
    with pytest.raises(DepthExhausted):
        quasi_diagonalize(identity(6), 1, paper_schedule(1, 1.0, 0.5), 1.0)


def test_identity_quasidiag():
    res = quasi_diagonalize(identity(8), 2, adaptive_schedule(0.1, 0.05), 1.0)
    assert res.jones_ok
    assert all(o == 0 for o in res.offdiag_sums)
    assert res.diag_values == pytest.approx(res.norms2)


def test_multiplier_quasidiag():
    T = level_multiplier(8, np.linspace(0.3, 1.0, 9))
    res = quasi_diagonalize(T, 2, adaptive_schedule(0.1, 0.05), 0.3)
    assert all(o == 0 for o in res.offdiag_sums)
    assert res.inequality_b(0.3)
    assert res.kappa_measured <= res.kappa_bound * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_diag_dominant_run(seed):
    T = random_operator(10, "diag_dominant", seed, 0.5, 0.02)
    res = quasi_diagonalize(T, 2, adaptive_schedule(0.1, 0.05), 0.5)
    assert res.jones_ok and res.inequality_a() and res.inequality_b(0.5)
    # levels of later steps start strictly below earlier ones
    mins = [min(K.level for K in res.family.collections[I]) for I in intervals(2)]
    assert all(b > a for a, b in zip(mins, mins[1:]))
    for I, fl in zip(intervals(2), res.measure_floors):
        assert 1 - sum(res.rho_achieved) <= fl <= 1


def test_diag_below_delta_rejected():
    T = random_operator(6, "diag_dominant", 0, 0.5, 0.02)
    with pytest.raises(ValueError):
        quasi_diagonalize(T, 1, adaptive_schedule(0.1, 0.05), 0.9)


def test_adaptive_schedule_validation():
    with pytest.raises(ValueError):
        adaptive_schedule(rho=[0.1, 0.2])
    with pytest.raises(ValueError):
        adaptive_schedule(tau=0)


def test_two_interval_sign_example():
    # <r_K0, h_K1> = c > 0 and <r_K1, h_K0> = 0
    K0, K1 = D(2, 1), D(2, 3)
    A = np.eye(7)
    A[K1.index, K0.index] = 1.0  # T h_K0 has a component 1 along h_K1
    C = sign_form([K0, K1], A)
    assert C[0, 1] == 0.25 and C[1, 0] == 0
    ch = choose_signs([K0, K1], A)
    assert ch.signs == {K0: 1, K1: 1} and ch.value == Fraction(1, 4)


def test_multiplier_signs_are_plus():
    ch = choose_signs([D(3, 1), D(3, 5)], level_multiplier(3, [1, 2, 3, 4]))
    assert ch.method == "trivial" and set(ch.signs.values()) == {1}


@pytest.mark.parametrize("m", [1, 3, 6])
def test_exhaustive_oracle_against_itertools(m):
    rng = np.random.default_rng(m)
    mem = [D(4, int(p)) for p in sorted(rng.choice(16, m, replace=False) + 1)]
    A = rng.standard_normal((31, 31))
    C = sign_form(mem, A)
    ref = max(sign_value(C, e) for e in itertools.product((1, -1), repeat=m))
    assert exhaustive_sign_max(mem, A) == ref
    assert choose_signs(mem, A).value == ref


def test_derandomized_signs_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(5):
        mem = [D(7, int(p)) for p in sorted(rng.choice(128, 30, replace=False) + 1)]
        A = rng.standard_normal((255, 255))
        ch = choose_signs(mem, A, exhaustive_limit=10)
        assert ch.method == "derandomized" and ch.value >= 0
        assert ch.value == sign_value(sign_form(mem, A), [ch.signs[K] for K in mem])


def test_net_for_one_dimension():
    net = unit_sphere_net([rademacher(2, 4) * 3], 0.25)
    assert len(net) == 2 and all(sl_inf_norm(f) == pytest.approx(1) for f in net)


def test_net_budget():
    with pytest.raises(BudgetExceeded):
        unit_sphere_net([unit(D(0, 1), 3), unit(D(1, 1), 3), unit(D(2, 1), 3)], 0.01, budget=100)


def test_net_covers_sphere_two_dims():
    V = [unit(D(0, 1), 3), rademacher(2, 3)]
    net = unit_sphere_net(V, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = rng.standard_normal(2)
        f = c[0] * V[0] + c[1] * V[1]
        f /= sl_inf_norm(f)
        assert min(sl_inf_norm(f - g) for g in net) <= 0.25 + 1e-12


def test_annihilating_root_function():
    res = annihilating_basis(6, 0, [unit(D(0, 1), 6)], 0.25)
    assert res.jones_ok
    assert sl_inf_norm(res.P @ unit(D(0, 1), 6)) <= 0.25
