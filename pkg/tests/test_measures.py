import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from comink.coconvex.cfull import build, support_value
from comink.cone.cone import make_cone
from comink.errors import AtomOutsideOmega, MissingValue, NonpositiveMass, NonUnitAtom, TooManyAtoms
from comink.measures.measure import (
    AtomFunction,
    bl_norm,
    empty_measure,
    make_measure,
    pairing_gap,
    restrict_margin,
)
from comink.measures.prokhorov import lp_distance, lp_distance_oracle

SQRT2 = math.sqrt(2.0)


def circle_point(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def random_pair_measures(seed, max_atoms=6, dim=2):
    """Atoms drawn from a small grid so that coincidences and ties occur."""
    rng = np.random.default_rng(seed)
    angles = np.linspace(0.0, math.pi / 2.0, 9)

    def draw():
        count = int(rng.integers(0, max_atoms + 1))
        picks = rng.choice(len(angles), size=count, replace=False)
        masses = rng.choice([0.1, 0.2, 0.25, 0.5, 1.0], size=count)
        return make_measure([(circle_point(angles[i]), m) for i, m in zip(picks, masses)], dim)

    return draw(), draw()


def test_make_measure():
    assert empty_measure(2).total == 0.0
    assert len(make_measure([])) == 0

    u = [0.0, -1.0]
    merged = make_measure([(u, 1.0), (u, 2.0)])
    assert len(merged) == 1
    assert merged.masses[0] == 3.0

    v = [-1.0, 0.0]
    assert make_measure([(u, 0.5), (v, 0.3)]).total == pytest.approx(0.8, abs=1e-15)


def test_make_measure_errors():
    with pytest.raises(NonpositiveMass):
        make_measure([([0.0, -1.0], 0.0)])
    with pytest.raises(NonpositiveMass):
        make_measure([([0.0, -1.0], -1.0)])
    with pytest.raises(NonUnitAtom):
        make_measure([([0.0, -1.1], 1.0)])


def test_lp_distance_examples():
    u1 = np.array([-1.0, 0.0])
    mu = make_measure([(u1, 0.5)])
    assert lp_distance(mu, mu) == 0.0

    angle = 2.0 * math.asin(0.1)
    v = circle_point(math.pi + angle)
    assert np.linalg.norm(v - u1) == pytest.approx(0.2, abs=1e-15)
    nu = make_measure([(v, 0.5)])
    assert lp_distance(mu, nu) == pytest.approx(0.2, abs=1e-15)

    far = make_measure([(circle_point(math.pi + 2.0 * math.asin(0.4)), 0.5)])
    assert lp_distance(mu, far) == 0.5

    u2 = circle_point(math.pi + 2.0 * math.asin(SQRT2 / 10.0))
    assert np.linalg.norm(u2 - u1) == pytest.approx(SQRT2 / 5.0, abs=1e-15)
    nu = make_measure([(u1, 0.5), (u2, 0.3)])
    assert lp_distance(mu, nu) == pytest.approx(0.3, abs=1e-15)
    assert lp_distance_oracle(mu, nu) == pytest.approx(0.3, abs=1e-15)


def test_lp_distance_empty():
    nu = make_measure([([0.0, -1.0], 0.2)])
    assert lp_distance(empty_measure(2), nu) == pytest.approx(0.2)
    assert lp_distance_oracle(empty_measure(2), nu) == pytest.approx(0.2)
    assert lp_distance(nu, empty_measure(2)) == pytest.approx(0.2)
    assert lp_distance(empty_measure(2), empty_measure(2)) == 0.0


def test_oracle_limit():
    atoms = [(circle_point(k * 0.05), 1.0) for k in range(9)]
    mu = make_measure(atoms)
    with pytest.raises(TooManyAtoms):
        lp_distance_oracle(mu, mu)


@settings(max_examples=500, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_lp_distance_matches_oracle(seed):
    mu, nu = random_pair_measures(seed)
    assert lp_distance(mu, nu) == pytest.approx(lp_distance_oracle(mu, nu), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_lp_distance_metric(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_pair_measures(seed)
    rho, _ = random_pair_measures(int(rng.integers(0, 2**32 - 1)))
    d_mn = lp_distance(mu, nu)
    assert d_mn == lp_distance(nu, mu)
    assert d_mn >= 0.0
    assert lp_distance(mu, mu) == 0.0
    if d_mn == 0.0:
        assert len(mu) == len(nu)
        assert all(nu.mass_at(u) == pytest.approx(m, abs=1e-15) for u, m in mu)
    assert lp_distance(mu, rho) <= d_mn + lp_distance(nu, rho) + 1e-12


def test_bl_norm():
    omega = [[-0.6, -0.8], [-0.8, -0.6]]
    constant = AtomFunction.from_pairs([(u, -0.84) for u in omega])
    assert bl_norm(constant, omega) == pytest.approx((0.0, 0.84, 0.84))
    zero = AtomFunction.from_pairs([(u, 0.0) for u in omega])
    assert bl_norm(zero, omega) == (0.0, 0.0, 0.0)

    u, v = circle_point(math.pi), circle_point(math.pi + 2.0 * math.asin(0.25))
    f = AtomFunction.from_pairs([(u, 0.0), (v, 1.0)])
    assert bl_norm(f, [u, v]) == pytest.approx((2.0, 1.0, 3.0), abs=1e-12)


def test_pairing_gap(quadrant, two_atom_phi):
    f = AtomFunction.from_pairs([(u, 1.0) for u, _ in two_atom_phi])
    assert pairing_gap(f, two_atom_phi, two_atom_phi) == 0.0
    half = make_measure([(two_atom_phi.points[0], 0.5)])
    single = make_measure([(two_atom_phi.points[0], 1.0)])
    assert pairing_gap(f, single, half) == pytest.approx(0.5)

    K = build(quadrant, two_atom_phi.points, [-0.84, -0.84])
    h = AtomFunction.from_callable(lambda u: support_value(K, u), two_atom_phi.points)
    bumped = make_measure([(u, m + 0.01) for u, m in two_atom_phi])
    assert pairing_gap(h, two_atom_phi, bumped) == pytest.approx(0.0168, abs=1e-12)

    stranger = make_measure([([0.0, -1.0], 1.0)])
    with pytest.raises(MissingValue):
        pairing_gap(f, two_atom_phi, stranger)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_pairing_gap_bound(seed):
    quadrant = make_cone(2, np.eye(2))
    first, second = random_pair_measures(seed)
    # mirrored grid atoms lie in the closure of Omega_C
    mu = make_measure([(-u, m) for u, m in first], 2)
    nu = make_measure([(-u, m) for u, m in second], 2)
    union = [u for u, _ in mu] + [u for u, _ in nu]
    if not union:
        return

    rng = np.random.default_rng(seed)
    normals = [u for u in union if np.all(quadrant.generators @ u < 0.0)] or [-np.ones(2) / SQRT2]
    K = build(quadrant, normals, -rng.uniform(0.2, 2.0, size=len(normals)))
    f = AtomFunction.from_callable(lambda u: support_value(K, u), union)
    c0 = 1.0 + max(mu.total, nu.total) + abs(mu.total - nu.total)
    _, _, bl = bl_norm(f, union)
    assert pairing_gap(f, mu, nu) <= c0 * bl * lp_distance(mu, nu) + 1e-12


def test_restrict_margin(quadrant):
    a = circle_point(math.pi + 0.3)
    b = circle_point(3.0 * math.pi / 2.0 - 0.1)
    mu = make_measure([(a, 1.0), (b, 2.0)])
    assert len(restrict_margin(mu, quadrant, 0.0)) == 2
    kept = restrict_margin(mu, quadrant, 0.2)
    assert len(kept) == 1 and np.allclose(kept.points[0], a)
    assert len(restrict_margin(mu, quadrant, 1.0)) == 0
    with pytest.raises(AtomOutsideOmega):
        restrict_margin(make_measure([([1.0, 0.0], 1.0)]), quadrant, 0.1)


def test_restrict_margin_converges(quadrant, random_measure):
    mu = random_measure(quadrant, 11, 8, min_margin=0.01)
    previous = math.inf
    for delta in [0.7, 0.5, 0.3, 0.1, 0.05, 0.01, 0.005]:
        distance = lp_distance(restrict_margin(mu, quadrant, delta), mu)
        assert distance <= previous + 1e-15
        previous = distance
    assert previous == 0.0
