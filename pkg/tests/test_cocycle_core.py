import math
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from oselab.cocycle_core import (
    NEG_INF,
    ConstantSlopeRequired,
    MapCocycle,
    MatrixCocycle,
    charpoly,
    essential_bound,
    exact_eigenvalues,
    exceptional_exponents,
    gram_decomposition,
    gram_root,
    group_log_values,
    lyapunov_spectrum,
    periodic_exponents,
    product,
    scaled_product,
    spectrum,
)
from oselab.interval_maps import PiecewiseAffineMap, UniformPartition, paper_map, pf_matrix, rotation_pf
from oselab.reproduction import cancellation_errors, rotation_pairing_ok, thm1_maps
from oselab.symbolic_drivers import THETA_E, ExplicitDriver, PeriodicDriver

THIRD = 1 / 3
R2, R11 = math.sqrt(2), math.sqrt(11)


def moduli(P):
    return sorted((abs(z) for z in spectrum(P).eigenvalues), reverse=True)


def sympy_roots(P):
    """Eigenvalues from sympy's exact root finder, with multiplicity."""
    M = sympy.Matrix([[sympy.Rational(p.numerator, p.denominator) for p in row] for row in P.entries])
    x = sympy.Symbol("x")
    roots = sympy.roots(sympy.Poly(M.charpoly(x), x))
    assert sum(roots.values()) == M.rows
    return [complex(sympy.N(r, 30)) for r, m in roots.items() for _ in range(m)]


def random_cocycle(seed, d=4, K=3, stochastic=False):
    rng = np.random.default_rng(seed)
    gens = {}
    for k in range(1, K + 1):
        G = rng.uniform(0, 1, (d, d)) if stochastic else rng.normal(size=(d, d))
        if stochastic:
            G /= G.sum(axis=0)
        gens[k] = G
    word = tuple(int(s) for s in rng.integers(1, K + 1, size=40))
    return MatrixCocycle(gens, ExplicitDriver(word, origin=0))


# --- exact spectra ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["T1", "T2", "T3", "S", "S4"])
def test_charpoly_matches_sympy(name):
    P = pf_matrix(paper_map(name))
    M = sympy.Matrix([[sympy.Rational(p.numerator, p.denominator) for p in row] for row in P.entries])
    x = sympy.Symbol("x")
    want = [Fraction(int(c.p), int(c.q)) for c in sympy.Poly(M.charpoly(x), x).all_coeffs()]
    assert charpoly(P.as_object()) == want


@pytest.mark.parametrize("name", ["T1", "T3", "S"])
def test_exact_eigenvalues_match_sympy_roots(name):
    P = pf_matrix(paper_map(name))
    ours = sorted(exact_eigenvalues(P.as_object()), key=lambda z: (-abs(z), z.imag))
    ref = sorted(sympy_roots(P), key=lambda z: (-abs(z), z.imag))
    assert np.allclose(ours, ref, atol=1e-12)


def test_spectrum_p1():
    assert np.allclose(moduli(pf_matrix(paper_map("T1"))), [1, THIRD, THIRD] + [0] * 6, atol=1e-9)


def test_spectrum_p2():
    assert np.allclose(moduli(pf_matrix(paper_map("T2"))), [1, THIRD] + [0] * 7, atol=1e-9)


def test_spectrum_p3_with_complex_pair():
    P3 = pf_matrix(paper_map("T3"))
    assert np.allclose(moduli(P3), [1, THIRD, THIRD, THIRD] + [0] * 5, atol=1e-9)
    ev = spectrum(P3).eigenvalues
    for z in (complex(-1 / 6, math.sqrt(3) / 6), complex(-1 / 6, -math.sqrt(3) / 6), -THIRD):
        assert min(abs(w - z) for w in ev) < 1e-9


def test_spectrum_ps():
    assert np.allclose(moduli(pf_matrix(paper_map("S"))), [1, (1 + R2) / 3, (R2 - 1) / 3] + [0] * 6, atol=1e-9)


def test_spectrum_report_json():
    rep = spectrum(pf_matrix(paper_map("T2")))
    d = rep.to_json_dict()
    assert len(d["eigenvalues"]) == 9 and set(d["eigenvalues"][0]) == {"re", "im"}
    assert d["exponents"][0] == pytest.approx(0.0, abs=1e-12)
    assert d["exponents"][1] == pytest.approx(math.log(THIRD))
    assert sum(d["multiplicities"]) == 9


def test_thm1_product_spectrum_closed_form(thm1_cocycle):
    per = periodic_exponents(thm1_cocycle)
    nonzero = sorted((z.real for z in per.eigenvalues if abs(z) > 1e-12), reverse=True)
    assert np.allclose(nonzero, [1, (8 + 2 * R11) / 27, (8 - 2 * R11) / 27], atol=1e-12)
    # the other closed form quoted alongside misses by far more than rounding
    assert abs(nonzero[1] - 2 / 27 * (4 + 2 * R11)) > 0.1


def test_thm1_periodic_roots(thm1_cocycle):
    per = periodic_exponents(thm1_cocycle)
    exc = exceptional_exponents(per, math.log(THIRD))
    assert [round(math.exp(x), 4) for x in exc] == [0.8153, 0.3699]


def test_periodic_p2_exponents():
    c = MapCocycle({1: paper_map("T2")}, PeriodicDriver((1,))).matrix_cocycle()
    per = periodic_exponents(c)
    finite = [x for x in per.exponents if x != NEG_INF]
    assert finite == pytest.approx([0.0, math.log(THIRD)], abs=1e-12)
    assert per.multiplicities[-1] == 7 and per.exponents[-1] == NEG_INF


@given(seed=st.integers(0, 10_000))
def test_periodic_exponents_autonomous_equal_log_moduli(seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(4, 4))
    per = periodic_exponents(MatrixCocycle({1: G}, PeriodicDriver((1,))))
    logs = sorted(np.log(np.abs(np.linalg.eigvals(G))), reverse=True)
    got = list(per.exponents)
    assert sum(per.multiplicities) == 4
    assert np.allclose(got, logs, atol=1e-9)


# --- products -----------------------------------------------------------------------

def test_empty_product_is_identity(thm1_cocycle):
    assert np.array_equal(product(thm1_cocycle, 0, 5), np.eye(9))


def test_period_product(thm1_cocycle):
    P = {i: pf_matrix(paper_map(f"T{i}")).as_float() for i in (1, 2, 3)}
    assert np.allclose(product(thm1_cocycle, 3, 0), P[3] @ P[2] @ P[1], atol=1e-15)


@given(seed=st.integers(0, 10_000), m=st.integers(0, 12), n=st.integers(0, 12), base=st.integers(0, 10))
def test_cocycle_property(seed, m, n, base):
    c = random_cocycle(seed)
    lhs = product(c, m + n, base)
    rhs = product(c, m, base + n) @ product(c, n, base)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(lhs).max()))


@given(seed=st.integers(0, 10_000), n=st.integers(1, 30))
def test_stochastic_columns(seed, n):
    c = random_cocycle(seed, stochastic=True)
    assert np.allclose(product(c, n, 0).sum(axis=0), 1.0, atol=1e-12)


def birkhoff(rng, d, terms=4):
    """Random doubly stochastic matrix as a convex combination of permutations."""
    w = rng.dirichlet(np.ones(terms))
    return sum(wk * np.eye(d)[rng.permutation(d)] for wk in w)


@given(seed=st.integers(0, 1000))
def test_stochastic_top_exponent_zero(seed):
    rng = np.random.default_rng(seed)
    gens = {k: birkhoff(rng, 4) for k in (1, 2)}
    word = tuple(int(s) for s in rng.integers(1, 3, size=40))
    est = lyapunov_spectrum(MatrixCocycle(gens, ExplicitDriver(word)), 40)
    assert abs(est.exponents[0]) < 1e-3


@given(word=st.lists(st.integers(1, 6), min_size=40, max_size=40))
def test_paper_pf_top_exponent_zero(word):
    maps = {i: paper_map(f"T{i}") for i in range(1, 7)}
    c = MapCocycle(maps, ExplicitDriver(tuple(word))).matrix_cocycle()
    assert np.allclose(product(c, 40, 0).sum(axis=0), 1.0, atol=1e-12)
    assert abs(lyapunov_spectrum(c, 40).exponents[0]) < 1e-3


def test_scaled_product_matches_plain(thm1_cocycle):
    B, s = scaled_product(thm1_cocycle, 30, 1, every=4)
    assert np.allclose(math.exp(s) * B, product(thm1_cocycle, 30, 1), atol=1e-14)


def test_cancellation_identity():
    assert rotation_pairing_ok()
    assert max(cancellation_errors(words=50, max_len=20, seed=3)) <= 1e-12


def test_rotation_pf_is_three_cell_shift():
    R = rotation_pf(1).as_float()
    assert all(R[i, j] == (1 if (i - j) % 9 == 3 else 0) for i in range(9) for j in range(9))


def test_theta_e_used_by_cancellation_is_nonempty():
    assert THETA_E.sum() == 12


# --- Gram roots and exponents ---------------------------------------------------------

def test_gram_root_depth_one_symmetric_stochastic():
    G = np.array([[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]])
    c = MatrixCocycle({1: G}, PeriodicDriver((1,)))
    w, V = np.linalg.eigh(G)
    absG = (V * np.abs(w)) @ V.T
    assert np.allclose(gram_root(c, 1), absG, atol=1e-12)


@pytest.mark.parametrize("depth", [1, 7, 250])
def test_identity_cocycle(depth):
    c = MatrixCocycle({1: np.eye(5)}, PeriodicDriver((1,)))
    assert np.allclose(gram_root(c, depth), np.eye(5))
    est = lyapunov_spectrum(c, depth)
    assert est.exponents == (0.0,) and est.multiplicities == (5,)


def test_deep_gram_uses_rescaling():
    c = MatrixCocycle({1: np.diag([0.5, 0.495])}, PeriodicDriver((1,)))
    g = gram_decomposition(c, 1500)
    assert np.allclose(g.log_values, [math.log(0.5), math.log(0.495)])


def test_zero_product_gives_bottom():
    c = MatrixCocycle({1: np.zeros((2, 2))}, PeriodicDriver((1,)))
    assert lyapunov_spectrum(c, 3).exponents == (NEG_INF,)


def test_group_log_values():
    assert group_log_values([0.0, -0.1, -0.1 - 1e-9, NEG_INF, NEG_INF]) == [[0], [1, 2], [3, 4]]
    assert group_log_values([0.0, -1e-3], gap_tol=1e-2) == [[0, 1]]


def test_ps_autonomous_exponents():
    c = MapCocycle({1: paper_map("S")}, PeriodicDriver((1,))).matrix_cocycle()
    per = periodic_exponents(c)
    assert per.exponents[:2] == pytest.approx([0.0, math.log((1 + R2) / 3)], abs=1e-12)


def test_sec7_second_exponent_near_log_081(sec7_cocycle):
    est = lyapunov_spectrum(sec7_cocycle, 40)
    assert abs(est.exponents[1] - math.log(0.81)) < 0.03


def test_thm1_lyapunov_depths_converge(thm1_cocycle):
    # top three exponents at M = 10, 20, 40; high precision keeps the third finite
    ests = [lyapunov_spectrum(thm1_cocycle, M, dps=60) for M in (10, 20, 40)]
    tops = [e.exponents[:3] for e in ests]
    diffs = [max(abs(a - b) for a, b in zip(x, y)) for x, y in zip(tops, tops[1:])]
    assert all(d < 1e-3 for d in diffs), f"successive differences {diffs}"


# --- essential bound and exceptional exponents -----------------------------------------

def test_essential_bound_paper_families(thm1_cocycle):
    assert essential_bound(MapCocycle(thm1_maps(), PeriodicDriver((1, 2, 3))), 7) == pytest.approx(math.log(THIRD))
    s_maps = {i: paper_map(f"S{i}") for i in range(1, 7)}
    assert essential_bound(MapCocycle(s_maps, PeriodicDriver((1, 5, 1))), 5) == pytest.approx(math.log(THIRD))


def test_essential_bound_slope_two():
    part = UniformPartition(4)
    f = PiecewiseAffineMap(part, (2,) * 4, (0,) * 4)
    g = PiecewiseAffineMap(part, (-2,) * 4, (0,) * 4)
    assert essential_bound(MapCocycle({1: f, 2: g}, PeriodicDriver((1, 2, 2))), 11) == pytest.approx(-math.log(2))


def test_essential_bound_needs_constant_slope():
    part = UniformPartition(2)
    f = PiecewiseAffineMap(part, (2, 3), (0, Fraction(1, 2)))
    with pytest.raises(ConstantSlopeRequired):
        essential_bound(MapCocycle({1: f}, PeriodicDriver((1,))), 1)


def test_exceptional_thm2_unique():
    exc = exceptional_exponents(spectrum(pf_matrix(paper_map("S"))), math.log(THIRD))
    assert exc == pytest.approx([math.log((1 + R2) / 3)])


def test_exceptional_p1_empty():
    assert exceptional_exponents(spectrum(pf_matrix(paper_map("T1"))), math.log(THIRD)) == []
