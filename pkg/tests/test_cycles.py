import numpy as np
import pytest

import cases
from iccdoubling.cycles import (
    Aperiodic,
    Cycle,
    CycleKind,
    assign_roles,
    attractor_cycle,
    check_assumptions,
    is_saddle,
    make_cycle,
    minimal_period,
    newton_cycle,
    same_cycle,
    signature_of,
    third_eigenvalue_sign,
)
from iccdoubling.errors import AmbiguousDirections, Divergence, SingularNewtonStep
from iccdoubling.linalg3 import eig3
from iccdoubling.maps import MIRA

MIRA_MULT = (-0.99767964, 0.86129688, 0.53415424)
KA_MULT = (-0.95979, 0.85489, 3.58612e-6)
KB_MULT = (-0.99501, 0.72672, -0.06028)

RESONANT = ["mira_resonant", "kamiyama_a_resonant", "kamiyama_b_resonant",
            "kamiyama_b_saddle_focus"]


def sorted_real(c):
    return sorted(l.real for l in c.eigenvalues)


def test_trivial_fixed_point():
    f = MIRA.bind(a=-2.5, b=-0.85578, c=-2.45869)
    c = newton_cycle(f, 1, [1e-3, -1e-3, 2e-3])
    assert c.period == 1
    assert np.linalg.norm(c.points[0]) < 1e-12


@pytest.mark.parametrize("name,expected", [
    ("mira_resonant", MIRA_MULT),
    ("kamiyama_a_resonant", KA_MULT),
    ("kamiyama_b_resonant", KB_MULT),
])
def test_reference_multipliers(name, expected):
    c = cases.node(name)
    assert c.period == 5 and c.signature == "sss"
    assert sorted_real(c) == pytest.approx(sorted(expected), abs=1e-4)


def test_kamiyama_a_small_multiplier_absolute():
    lam = min(cases.node("kamiyama_a_resonant").eigenvalues, key=lambda l: abs(l))
    assert abs(lam - 3.58612e-6) < 1e-5


def test_saddle_focus_node():
    c = cases.node("kamiyama_b_saddle_focus")
    assert c.kind is CycleKind.STABLE_FOCUS
    real = [l for l in c.eigenvalues if not isinstance(l, complex)]
    assert len(real) == 1 and real[0] == pytest.approx(-0.99501, abs=1e-3)
    assert third_eigenvalue_sign(c) == "complex"


@pytest.mark.parametrize("name", RESONANT)
def test_cycle_invariants(name):
    f = cases.fmap(name)
    for c in (cases.node(name), cases.saddle(name)):
        p = c.period
        images = f.mapdef.step(f.params, c.points)
        assert np.max(np.linalg.norm(images - np.roll(c.points, -1, axis=0), axis=1)) < 1e-9
        assert np.max(np.linalg.norm(f.power(c.points, p) - c.points, axis=1)) < 1e-11
        assert minimal_period(f, c.points[0], p) == p
        moduli = sorted((abs(l) for l in c.eigenvalues), reverse=True)
        assert c.signature == "".join("u" if m > 1 else "s" for m in moduli)
        # similarity across base points
        ref = np.sort_complex(np.array(c.eigenvalues, dtype=complex))
        for i in range(p):
            ev = np.sort_complex(np.array(c.spectrum_at(f, i).eigenvalues, dtype=complex))
            assert np.max(np.abs(ev - ref)) < 1e-8


@pytest.mark.parametrize("name", RESONANT)
def test_saddle_is_distinct_uss(name):
    s, n = cases.saddle(name), cases.node(name)
    assert is_saddle(s) and s.signature == "uss"
    assert s.period == n.period
    assert not same_cycle(s, n)


def test_attractor_periods():
    assert cases.node("kamiyama_b_resonant").period == 5
    assert isinstance(attractor_cycle(cases.fmap("mira_quasi")), Aperiodic)


def test_attractor_divergence():
    f = MIRA.bind(a=5.0, b=5.0, c=5.0)
    with pytest.raises(Divergence):
        attractor_cycle(f)


def test_seeding_at_node_returns_node():
    f = cases.fmap("mira_resonant")
    n = cases.node("mira_resonant")
    again = newton_cycle(f, 5, n.points[2])
    assert same_cycle(again, n)


def test_same_cycle_is_rotation_invariant():
    n = cases.node("mira_resonant")
    f = cases.fmap("mira_resonant")
    rotated = make_cycle(f, n.points[3], 5)
    assert same_cycle(n, rotated)


@pytest.mark.parametrize("name,sign", [
    ("mira_resonant", "+"), ("kamiyama_b_resonant", "-"), ("kamiyama_a_resonant", "+"),
])
def test_third_eigenvalue_sign(name, sign):
    assert third_eigenvalue_sign(cases.node(name)) == sign


@pytest.mark.parametrize("name", ["mira_resonant", "kamiyama_a_resonant"])
def test_assumptions_hold(name):
    assert check_assumptions(cases.node(name), cases.saddle(name)) == \
        {"A1": True, "A2": True, "A3": True}


def test_kamiyama_b_counterexample_breaks_radial_assumption():
    a = check_assumptions(cases.node("kamiyama_b_resonant"), cases.saddle("kamiyama_b_resonant"))
    assert a == {"A1": False, "A2": True, "A3": True}


def test_roles_on_synthetic_spectrum():
    c = Cycle(1, np.zeros((1, 3)), eig3(np.diag([-0.9, 0.8, 0.3])))
    r = assign_roles(c)
    assert (r.doubling, r.tangential, r.third) == pytest.approx((-0.9, 0.8, 0.3))
    with pytest.raises(AmbiguousDirections):
        assign_roles(Cycle(1, np.zeros((1, 3)), eig3(np.diag([0.9, 0.8, 0.3]))))


def test_signature_and_kind():
    s = eig3(np.diag([1.5, 0.5, -0.2]))
    assert signature_of(s) == "uss"


def test_singular_newton_step_is_reported():
    # a translation has J - I = 0 everywhere and no fixed point
    from iccdoubling.maps import user_map

    shift = user_map("shift", [], lambda params, s: np.asarray(s, dtype=float) + [1.0, 0, 0],
                     jac=lambda params, s: np.broadcast_to(np.eye(3), np.shape(s)[:-1] + (3, 3)))
    with pytest.raises(SingularNewtonStep):
        newton_cycle(shift.bind(), 1, [0.3, 0.2, 0.1])
