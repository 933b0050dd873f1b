import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from oselab.interval_maps import UniformPartition, paper_map
from oselab.reproduction import SEC7_J, THM1_W2
from oselab.stepfn_analysis import (
    NoPositivePart,
    NotARefinement,
    NotInF,
    RefinementTooCoarse,
    StepFunction,
    bv_norm,
    coherent_overlap,
    decay_check,
    interval_cells,
    j_family,
    l1_norm,
    pf_step,
    project_Q,
    variation,
)
from oselab.symbolic_drivers import ExplicitDriver, PeriodicDriver, omega_star

NINTHS = UniformPartition(9)
FAMILIES = {
    "thm1": {i: paper_map(f"T{i}") for i in (1, 2, 3)},
    "thm2": {i: paper_map(f"S{i}") for i in range(1, 7)},
    "sec7": {i: paper_map(f"T{i}") for i in range(1, 7)},
}
fracs = st.fractions(min_value=-3, max_value=3, max_denominator=12)


def indicator(cells, n=9):
    return StepFunction.from_values([Fraction(int(k + 1 in cells)) for k in range(n)])


def random_zero_mean(rng, cells, per):
    """Step function on cells*per with every coarse cell mean equal to zero."""
    vals = []
    for _ in range(cells):
        block = [Fraction(rng.randint(-20, 20), rng.randint(1, 6)) for _ in range(per)]
        mean = sum(block) / per
        vals += [v - mean for v in block]
    return StepFunction.from_values(vals)


def transfer_at(f, g, x):
    """Transfer operator of f on step function g at x, by enumerating preimages."""
    total = Fraction(0)
    for j in range(f.cells):
        a, c = f.slopes[j], f.offsets[j]
        lo, hi = Fraction(j, f.cells), Fraction(j + 1, f.cells)
        for k in range(-4, 5):
            y = (x + k - c) / a
            if lo <= y < hi:
                total += g.values[int(y * g.cells)] / abs(a)
    return total


# --- norms ---------------------------------------------------------------------------

def test_constant_norms():
    f = StepFunction.from_values([Fraction(-2)] * 9)
    assert variation(f) == 0 and l1_norm(f) == 2


def test_single_cell_indicator():
    f = indicator({4})
    assert variation(f) == 2 and l1_norm(f) == Fraction(1, 9)
    assert bv_norm(f) == 2


def test_interval_mode_drops_wrap_jump():
    f = StepFunction(UniformPartition(9, circle=False), (Fraction(1),) + (Fraction(0),) * 8)
    assert variation(f) == 1


def test_thm1_w2_l1():
    assert l1_norm(StepFunction.from_values(list(THM1_W2))) == pytest.approx(0.1109, abs=1e-4)


# --- projection Q -------------------------------------------------------------------------

def test_q_idempotent_on_base():
    f = StepFunction.from_values([Fraction(k, 7) for k in range(9)])
    assert project_Q(f, NINTHS) == f


def test_q_left_half_indicator():
    f = StepFunction.from_values([Fraction(1)] + [Fraction(0)] * 17)
    assert project_Q(f, NINTHS).values == (Fraction(1, 2),) + (Fraction(0),) * 8


def test_q_needs_refinement():
    with pytest.raises(NotARefinement):
        project_Q(StepFunction.from_values([Fraction(0)] * 10), NINTHS)


@given(vals=st.lists(fracs, min_size=27, max_size=27))
def test_residual_has_zero_cell_means(vals):
    f = StepFunction.from_values(vals)
    r = f - project_Q(f, NINTHS).refine(3)
    assert all(v == 0 for v in project_Q(r, NINTHS).values)


@given(vals=st.lists(fracs, min_size=27, max_size=27))
def test_residual_variation_dominates_l1(vals):
    f = StepFunction.from_values(vals)
    r = f - project_Q(f, NINTHS).refine(3)
    assert variation(r) >= l1_norm(r)


# --- transfer operator on step functions ----------------------------------------------------

@given(name=st.sampled_from(["T1", "T5", "S", "S3"]),
       vals=st.lists(st.fractions(min_value=0, max_value=5, max_denominator=9), min_size=27, max_size=27))
def test_pf_step_preserves_mass_of_densities(name, vals):
    g = StepFunction.from_values(vals)
    assert l1_norm(pf_step(paper_map(name), g)) == l1_norm(g)


@given(name=st.sampled_from(["T2", "T4", "S6"]), vals=st.lists(fracs, min_size=27, max_size=27))
def test_pf_step_matches_preimage_sum(name, vals):
    f, g = paper_map(name), StepFunction.from_values(vals)
    h = pf_step(f, g)
    for k in range(0, h.cells, 5):
        x = Fraction(2 * k + 1, 2 * h.cells)
        assert h.values[k] == transfer_at(f, g, x)


# --- decay check ---------------------------------------------------------------------------

def test_decay_n1_bound_is_var():
    rng = random.Random(1)
    f = random_zero_mean(rng, 9, 3)
    measured, bound = decay_check(f, FAMILIES["thm1"], PeriodicDriver((1, 2, 3)), 1)
    assert bound == variation(f) and measured <= bound


def test_decay_n5():
    rng = random.Random(2)
    f = random_zero_mean(rng, 9, 3 ** 5)
    measured, bound = decay_check(f, FAMILIES["sec7"], omega_star(), 5)
    assert bound == Fraction(1, 81) * variation(f) and measured <= bound


def test_decay_zero_function():
    f = StepFunction.from_values([Fraction(0)] * 27)
    assert decay_check(f, FAMILIES["thm1"], PeriodicDriver((1, 2, 3)), 1) == (0, 0)


def test_decay_matches_pointwise_oracle():
    rng = random.Random(3)
    f = random_zero_mean(rng, 9, 27)
    driver = PeriodicDriver((2, 1, 3))
    maps = FAMILIES["thm1"]
    g = f
    for k in range(3):
        m = maps[driver.symbol_at(k)]
        g = StepFunction.from_values([transfer_at(m, g, Fraction(2 * i + 1, 2 * g.cells)) for i in range(g.cells)])
    measured, _ = decay_check(f, maps, driver, 3)
    assert measured == variation(g)


def test_decay_rejects_nonzero_mean():
    f = StepFunction.from_values([Fraction(1)] * 27)
    with pytest.raises(NotInF):
        decay_check(f, FAMILIES["thm1"], PeriodicDriver((1, 2, 3)), 1)


def test_decay_rejects_coarse_grid():
    f = random_zero_mean(random.Random(4), 9, 3)
    with pytest.raises(RefinementTooCoarse):
        decay_check(f, FAMILIES["thm1"], PeriodicDriver((1, 2, 3)), 2)


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_decay_random_functions(family):
    rng = random.Random(family)
    maps = FAMILIES[family]
    K = len(maps)
    for trial in range(10):
        n = rng.randint(1, 5)
        f = random_zero_mean(rng, 9, 3 ** n)
        driver = ExplicitDriver(tuple(rng.randint(1, K) for _ in range(n)))
        measured, bound = decay_check(f, maps, driver, n)
        assert measured <= bound


# --- coherence ----------------------------------------------------------------------------

def test_thm1_w2_overlap():
    assert coherent_overlap(StepFunction.from_values(list(THM1_W2)), interval_cells(1)) == pytest.approx(0.984, abs=1e-3)


def test_indicator_overlaps():
    J1, J2 = interval_cells(1), interval_cells(2)
    assert coherent_overlap(indicator(J1), J1) == 1
    assert coherent_overlap(indicator(J2), J1) == 0


def test_overlap_needs_positive_part():
    with pytest.raises(NoPositivePart):
        coherent_overlap(StepFunction.from_values([-1.0] * 9), {1})


def test_j_family_examples():
    assert j_family("thm2_sec7", 5) == {4, 5, 6}
    assert j_family("thm1", 1) == {1, 2, 3}
    with pytest.raises(ValueError):
        j_family("thm1", 4)
    with pytest.raises(ValueError):
        j_family("nope")


def test_sec7_j_sequence():
    fam = j_family("thm2_sec7")
    got = fam.along(omega_star(), 0, 8)
    assert got == [interval_cells(i) for i in SEC7_J]
    assert SEC7_J == (1, 2, 1, 2, 1, 3, 2, 3)
