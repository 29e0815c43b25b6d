import random
from fractions import Fraction as Fr

import pytest
from hypothesis import given, settings, strategies as st

from mclpsep.errors import ConfigError
from mclpsep.poly_oracle import (QI, ZETA, MclpFilterSet, PhaseScene, Poly, shared_direct_matrix,
                                 phase_law_check, check_mint, k_minors_gcd, poly_det,
                                 poly_gcd, random_poly, remove_row, solve_equalizer,
                                 solve_linear, solve_mint, suite_single_source, suite_multi_source,
                                 suite_minor_gcd, verify_constant_identity)

P = Poly
HALF = Fr(1, 2)


def test_qi_arithmetic():
    z = ZETA
    assert abs(complex(z)) == pytest.approx(1.0)
    assert z * z.inverse() == 1
    assert (z ** 3) * (z ** -3) == 1
    assert QI(Fr(3, 5), Fr(4, 5)) == ZETA
    assert ZETA ** 8 != 1          # not a root of unity


def test_gcd_examples():
    p = P([1, 2, 3])
    assert poly_gcd(p, 1) == P([1])
    assert poly_gcd(P([1, HALF]), P([1, -HALF])) == P([1])
    a = P([1, 1])
    assert poly_gcd(a * P([1, -2]), a) == a
    with pytest.raises(ConfigError):
        poly_gcd(P(), P())


@given(st.integers(0, 10_000))
@settings(max_examples=40)
def test_gcd_divides_and_cofactors_coprime(seed):
    rng = random.Random(seed)
    common = random_poly(rng, rng.randint(0, 2), 3)
    p = common * random_poly(rng, rng.randint(0, 3), 3)
    q = common * random_poly(rng, rng.randint(0, 3), 3)
    g = poly_gcd(p, q)
    assert g.divides(p) and g.divides(q)
    assert common.monic().divides(g) or common.is_constant()
    cp, cq = p.divmod(g)[0], q.divmod(g)[0]
    assert poly_gcd(cp, cq).is_constant()


def test_k_minors_examples():
    eye = [[P([1]), P([0])], [P([0]), P([1])], [P([0]), P([0])]]
    assert k_minors_gcd(eye, 2) == P([1])
    col = [[P([1, HALF])], [P([1, -HALF])], [P([2])]]
    assert k_minors_gcd(col, 1) == P([1])
    f = P([1, 1])
    shared = [[f * P([1, 2])], [f * P([3])], [f * P([1, -1, 1])]]
    g = k_minors_gcd(shared, 1)
    assert g == f and not g.is_constant()
    with pytest.raises(ConfigError):
        k_minors_gcd(col, 2)


def test_det_2x2():
    M = [[P([1, 1]), P([2])], [P([0, 1]), P([3, 0, 1])]]
    assert poly_det(M) == P([1, 1]) * P([3, 0, 1]) - P([0, 2])


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_k_minors_invariant_under_row_operations(seed):
    rng = random.Random(seed)
    H = [[random_poly(rng, 2, 3, False) for _ in range(2)] for _ in range(3)]
    g0 = None if all(x.is_zero() for row in H for x in row) else k_minors_gcd(H, 2)
    for _ in range(4):
        i, j = rng.sample(range(3), 2)
        f = random_poly(rng, rng.randint(0, 2), 3, False)
        H = [[H[a][b] + f * H[j][b] if a == i else H[a][b] for b in range(2)]
             for a in range(3)]
        if rng.random() < 0.5:
            H[i], H[j] = H[j], H[i]
    if g0 is None or g0.is_zero():
        return
    assert k_minors_gcd(H, 2) == g0


def test_solve_linear():
    x = solve_linear([[Fr(2), Fr(1)], [Fr(1), Fr(-1)]], [Fr(3), Fr(0)])
    assert x == [1, 1]
    assert solve_linear([[Fr(1)], [Fr(1)]], [Fr(1), Fr(2)]) is None
    both = solve_linear([[Fr(1), Fr(0)], [Fr(0), Fr(2)]], [[1, 0], [0, 4]])
    assert both == [[1, 0], [0, 2]]


def test_single_source_equalizer():
    H = [[P([1, HALF])], [P([1, -HALF])], [P([2])]]
    res = solve_equalizer(H, 0, d=1)
    assert res.found and res.c == [1]
    chk = verify_constant_identity(res.filters, H)
    assert chk.ok and chk.c == [1]
    assert res.filters.G[0].at_infinity() == 1
    assert all(g.at_infinity() == 0 for g in res.filters.G[1:])


def test_common_factor_infeasible():
    f = P([1, 1])
    H = [[f * P([1, 2])], [f * P([3])], [f]]
    for order in (2, 4, 8):
        res = solve_equalizer(H, 0, d=1, max_order=order)
        assert not res.found
        assert res.status == f"not found up to order {order}"


def test_two_source_equalizer():
    rng = random.Random(3)
    while True:
        H = [[random_poly(rng, 2, 3) for _ in range(2)] for _ in range(4)]
        if k_minors_gcd(remove_row(H, 1), 2).is_constant():
            break
    res = solve_equalizer(H, 1, d=1)
    assert res.found and res.c == [H[1][0].at_infinity(), H[1][1].at_infinity()]
    assert verify_constant_identity(res.filters, H).ok


def test_identity_failures_and_degenerate():
    H = [[P([1, 2])], [P([1])]]
    chk = verify_constant_identity([P([1]), P()], H)
    assert not chk.ok and "degree" in chk.reason
    zero = [[P()], [P()]]
    ok = verify_constant_identity(MclpFilterSet([P([1]), P([2])], 0, 1), zero)
    assert ok.ok and ok.c == [0]
    with pytest.raises(ConfigError):
        verify_constant_identity([P([1])], H)


def test_filter_set_validation():
    with pytest.raises(ConfigError):
        MclpFilterSet([P([1])], 0, 0)
    with pytest.raises(ConfigError):
        solve_equalizer([[P([1])]], 2)


def test_phase_law_two_sources():
    rng = random.Random(5)
    while True:
        scene = shared_direct_matrix(rng, 4, 2)
        if all(k_minors_gcd(remove_row(scene.H, r), 2).is_constant() for r in range(4)):
            break
    rep = phase_law_check(scene)
    assert rep.consistent and not rep.skipped
    for r, c in rep.c.items():
        for k in range(2):
            assert c[k] == scene.direct[k] * ZETA ** scene.m[r][k]


def test_origin_mic_has_zero_phase():
    rng = random.Random(9)
    while True:
        scene = shared_direct_matrix(rng, 3, 1)
        # microphone 0 at the array centre: exponent 0, no phase factor
        scene.m[0] = [0]
        scene.H[0] = [P([scene.direct[0], rng.randint(-3, 3), rng.randint(-3, 3)])]
        if all(k_minors_gcd(remove_row(scene.H, r), 1).is_constant() for r in range(3)):
            break
    rep = phase_law_check(scene)
    assert rep.consistent
    assert rep.c[0] == [scene.direct[0]]      # real and positive: phase 0


def test_perturbed_lag0_breaks_phase_law():
    rng = random.Random(11)
    while True:
        scene = shared_direct_matrix(rng, 4, 2, perturb=(2, 0, 3))
        if all(k_minors_gcd(remove_row(scene.H, r), 2).is_constant() for r in range(4)):
            break
    assert not phase_law_check(scene).consistent


def test_mint_examples():
    H = [[P([1]), P([0])], [P([0, 1]), P([1])], [P([2]), P([1, 1])]]
    G = solve_mint(H)
    assert G is not None and check_mint(G, H)
    f = P([1, 1])
    Hb = [[f * x for x in row] for row in H]
    assert not k_minors_gcd(Hb, 2).is_constant()
    assert solve_mint(Hb) is None


def test_suites_small():
    a = suite_single_source(seed=1, trials=10)
    assert a["passed"] and "d2_found" in a
    assert suite_multi_source(seed=1, trials=3)["passed"]
    assert suite_minor_gcd(seed=1, trials=10)["passed"]
