import numpy as np
import pytest

from velint import (ExactSegment, LinearSegment, a_term_study, free, global_error_order, identity_limit,
                    local_error_order, make_family, symmetry_residual)
from velint.analysis import mismatched_local_order, sample_states, steps_for
from velint.fitting import geometric_grid

from conftest import tv

H7 = geometric_grid(0.1, 7)


def test_local_order_examples(osc):
    v0 = tv(1.0, 0.5)
    lr = local_error_order(make_family(osc, LinearSegment(0.0), "left_rectangle", a=2.0), v0, H7)
    assert lr.within(2.0, 0.2)
    mid = local_error_order(make_family(osc, LinearSegment(0.5), "midpoint"), v0, H7)
    assert mid.within(3.0, 0.2)


def test_exact_family_local_errors_sit_at_floor(osc):
    dl = make_family(osc, ExactSegment(osc, 1e-10), "exact", tol=1e-10)
    rep = local_error_order(dl, tv(1.0, 0.5), geometric_grid(0.1, 5))
    assert rep.degenerate
    assert np.max(rep.errors) < 1e-8


def test_global_order_examples(osc):
    v0 = tv(1.0, 0.5)
    lr = global_error_order(make_family(osc, LinearSegment(0.0), "left_rectangle"), v0, 1.0, H7)
    assert lr.within(1.0, 0.15)
    mid = global_error_order(make_family(osc, LinearSegment(0.5), "midpoint"), v0, 1.0, H7)
    assert mid.within(2.0, 0.2)
    trap = global_error_order(make_family(free(), LinearSegment(0.0), "trapezoid"), v0, 1.0, H7)
    assert trap.degenerate
    assert np.max(trap.errors) < 1e-12


@pytest.mark.parametrize("family, b", [("left_rectangle", 0.0), ("midpoint", 0.0), ("trapezoid", 0.5),
                                       ("midpoint", 0.5)])
def test_global_slope_is_local_minus_one(curved, family, b):
    dl = make_family(curved, LinearSegment(b), family)
    v0 = tv(0.5, 1.0)
    local = local_error_order(dl, v0, H7)
    glob = global_error_order(dl, v0, 1.0, H7)
    assert abs(glob.slope - (local.slope - 1)) <= 0.3
    assert abs(local.slope - (dl.claimed_contact_order + 1)) <= 0.25


def test_steps_for_requires_integer_ratio():
    assert steps_for(1.0, 0.1) == 10
    with pytest.raises(ValueError):
        steps_for(1.0, 0.3)


def test_a_term_examples(osc):
    dl = make_family(osc, LinearSegment(0.0), "left_rectangle")
    states = sample_states(1, 50, seed=3)
    rep = a_term_study(dl, [0.0, 5.0], states, 0.1)
    assert rep.step_deviation[0] == 0.0 and rep.legendre_shift[0] == 0.0
    assert rep.step_deviation[1] < 1e-10
    assert rep.legendre_shift[1] == pytest.approx(0.5, abs=1e-12)
    assert rep.max_legendre_deviation < 1e-12


def test_a_term_rejects_other_families(osc):
    with pytest.raises(ValueError):
        a_term_study(make_family(osc, LinearSegment(), "midpoint"), [1.0], [tv(0, 1)], 0.1)


def test_mismatched_pairing_loses_an_order(osc):
    dl = make_family(osc, LinearSegment(0.0), "left_rectangle")
    rep = mismatched_local_order(dl, 5.0, 0.0, tv(1.0, 0.5), H7)
    assert rep.within(1.0, 0.2)
    matched = mismatched_local_order(dl, 5.0, 5.0, tv(1.0, 0.5), H7)
    assert matched.within(2.0, 0.2)


@pytest.mark.parametrize("family, a", [("left_rectangle", 3.0), ("midpoint", 0.0), ("trapezoid", 0.0)])
def test_symmetry_residual_is_second_order(osc, family, a):
    rep = symmetry_residual(make_family(osc, LinearSegment(0.0), family, a=a), [tv(1.0, 1.0)])
    assert rep.slope >= 1.8
    assert rep.residual_at_zero == 0.0


def test_identity_limit(curved):
    rep = identity_limit(make_family(curved, LinearSegment(0.0), "midpoint"), sample_states(1, 5, 11))
    assert rep.order.slope >= 0.9
    assert np.all(rep.order.errors <= rep.constant * rep.order.h_grid * (1 + 1e-12))


def test_sample_states_reproducible():
    a, b = sample_states(2, 4, 99), sample_states(2, 4, 99)
    assert all(np.array_equal(x.state, y.state) for x, y in zip(a, b))
    assert all(np.all(np.abs(x.state) <= 1.0) for x in a)


def test_parallel_matches_sequential(curved):
    dl = make_family(curved, LinearSegment(0.5), "trapezoid")
    seq = local_error_order(dl, tv(0.5, 1.0), H7, parallel=False)
    par = local_error_order(dl, tv(0.5, 1.0), H7, parallel=True)
    assert np.array_equal(seq.errors, par.errors)
