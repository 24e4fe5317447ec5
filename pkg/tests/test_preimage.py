import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_params
from degenlab.errors import CriticalPointError, NewtonDivergenceError
from degenlab.family import FamilyParams, HenonBase, PointC2, evaluate, jacobian, rescale
from degenlab.preimage import (henon_inverse, newton_refine, preimages, sheet_order,
                               solve_fibers)

finite = st.floats(-10, 10, allow_nan=False)
cplx = st.builds(complex, finite, finite)


def test_henon_inverse_examples():
    base = HenonBase(0.5)
    p = henon_inverse(base, (1.1, 1.5))
    assert p.z == pytest.approx(0.58) and p.w == pytest.approx(1.1)
    base2 = HenonBase(0.7, 0.3, 2.0 - 1j)
    assert henon_inverse(base2, (0, base2.c2)) == PointC2(0j, 0j)


@given(cplx, cplx)
def test_henon_inverse_roundtrip(u, v):
    base = HenonBase(0.5 - 0.2j, 0.3, -1 + 0.5j)
    p0 = FamilyParams(base, 0)
    back = evaluate(p0, henon_inverse(base, (u, v)))
    assert abs(back.z - u) < 1e-12 * (1 + abs(u)) and abs(back.w - v) < 1e-12 * (1 + abs(v) + abs(u) ** 2)


def test_preimage_example_contains_known_point():
    ps = preimages(FamilyParams.reference(t=0.1), (1.1, 1.5))
    assert ps.total_multiplicity == 4 and ps.degree_defect == 0
    assert min(abs(s.point.z - 1) + abs(s.point.w - 1) for s in ps.solutions) < 1e-10


def test_forward_consistency(rng):
    # every forward image has its source among the computed preimages
    for _ in range(300):
        p = random_params(rng, t=complex(*rng.normal(0, 0.2, 2)))
        p0 = (complex(*rng.normal(0, 2, 2)), complex(*rng.normal(0, 2, 2)))
        q = evaluate(p, p0)
        ps = preimages(p, q)
        tnorm = math.hypot(abs(q.z), abs(q.w))
        assert all(s.residual <= 1e-9 * (1 + tnorm) for s in ps.solutions)
        dist = min(math.hypot(abs(s.point.z - p0[0]), abs(s.point.w - p0[1])) for s in ps.solutions)
        assert dist < 1e-8 * (1 + math.hypot(abs(p0[0]), abs(p0[1])))
        assert ps.total_multiplicity + ps.degree_defect == 4


def test_bezout_count_many_start_newton():
    # many-start Newton finds no solution that the elimination misses, and finds all four
    rng = np.random.default_rng(7)
    for _ in range(10):
        p = random_params(rng, t=complex(*rng.normal(0, 0.3, 2)))
        target = (complex(*rng.normal(0, 1, 2)), complex(*rng.normal(0, 1, 2)))
        ps = preimages(p, target)
        assert ps.total_multiplicity == 4
        scale = max(abs(s.point.z) + abs(s.point.w) for s in ps.solutions)
        found = []
        for _ in range(1000):
            guess = (complex(*rng.normal(0, scale, 2)), complex(*rng.normal(0, scale, 2)))
            try:
                r = newton_refine(p, target, guess, max_iter=60)
            except (NewtonDivergenceError, CriticalPointError):
                continue
            found.append(r.point)
        assert found
        sols = [s.point for s in ps.solutions]
        hit = set()
        for q in found:
            d = [abs(q.z - s.z) + abs(q.w - s.w) for s in sols]
            j = int(np.argmin(d))
            assert d[j] < 1e-6 * (1 + scale)
            hit.add(j)
        assert len(hit) == len(sols)


def test_small_t_sheets():
    # one sheet tends to the Henon inverse, the others run off to infinity
    base = HenonBase(0.5, 0.2, -0.3)
    target = (0.7 + 0.1j, -0.4 + 0.2j)
    hinv = henon_inverse(base, target)
    prev_far = 0.0
    for t in (1e-2, 1e-3, 1e-4, 1e-5):
        p = FamilyParams.reference(c=0.5, c1=0.2, c2=-0.3, t=t)
        sols = preimages(p, target).points()
        d = [abs(s.z - hinv.z) + abs(s.w - hinv.w) for s in sols]
        assert min(d) < 50 * t
        far = min(x for x in d if x != min(d))
        # the other sheets escape like |t|^(-1/2)
        assert far > 2.5 * prev_far
        prev_far = far
    assert prev_far > 1e3


def test_rescale_commutes(rng):
    # solving in the original chart and rescaling equals solving the conjugated system
    for _ in range(20):
        p = random_params(rng, t=complex(*rng.normal(0, 1e-2, 2)))
        P0 = (complex(*rng.normal(0, 1, 2)), complex(*rng.normal(0, 1, 2)))
        target = evaluate(p, P0)
        sols = [rescale(p, s) for s in preimages(p, target).points()]
        img = [rescale(p, evaluate(p, (s.z / (p.G * p.t), s.w / p.t))) for s in sols]
        T = rescale(p, target)
        for q in img:
            assert abs(q.z - T.z) + abs(q.w - T.w) < 1e-8 * (1 + abs(T.z) + abs(T.w))


def test_output_is_sorted_and_reproducible(ref_params):
    a = preimages(ref_params, (3 + 1j, 2 - 1j))
    b = preimages(ref_params, (3 + 1j, 2 - 1j))
    assert a.to_csv() == b.to_csv()
    keys = [(s.point.z.real, s.point.z.imag, s.point.w.real, s.point.w.imag) for s in a.solutions]
    assert keys == sorted(keys)
    assert a.to_csv().splitlines()[0] == "z_re,z_im,w_re,w_im,mult,residual"


def test_double_root_multiplicity():
    # target = f(critical point) gives a fibre with a double root
    p = FamilyParams.reference(t=0.05)
    # det Df = 4 t z w - c vanishes on z w = c / (4t)
    z = 1.3 + 0.4j
    w = p.base.c / (4 * p.t * z)
    ps = preimages(p, evaluate(p, (z, w)))
    assert ps.total_multiplicity + ps.degree_defect == 4
    assert any(abs(s.point.z - z) < 1e-4 * abs(z) for s in ps.solutions)


def test_preconditions():
    with pytest.raises(ValueError):
        preimages(FamilyParams.reference(t=0), (1, 1))


def test_newton_refine_examples(rng):
    p = FamilyParams.reference(t=0.1)
    r = newton_refine(p, (1.1, 1.5), (1, 1))
    assert r.iterations == 0 and r.point == PointC2(1 + 0j, 1 + 0j)
    for _ in range(50):
        q = random_params(rng, t=complex(*rng.normal(0, 0.3, 2)))
        p0 = (complex(*rng.normal(0, 1, 2)), complex(*rng.normal(0, 1, 2)))
        if abs(jacobian(q, p0).det()) < 1e-2:
            continue
        target = evaluate(q, p0)
        r = newton_refine(q, target, (p0[0] + 1e-3, p0[1] - 1e-3j))
        assert r.iterations <= 6
    # start exactly on the critical curve z w = c / (4 t)
    z = 2.0
    w = p.base.c / (4 * p.t * z)
    with pytest.raises(CriticalPointError, match="critical fiber point"):
        newton_refine(p, (5, 5), (z, w))


def test_sheet_order_is_a_permutation(rng):
    p = FamilyParams.reference(t=1e-3)
    u = rng.normal(0, 30, 200) + 1j * rng.normal(0, 30, 200)
    v = rng.normal(0, 30, 200) + 1j * rng.normal(0, 30, 200)
    z, w, res = solve_fibers(p.coeffs(), u, v)
    perm = sheet_order(z, w)
    assert np.all(np.sort(perm, axis=1) == np.arange(4))


def test_sheet_labels_continuous_in_parameters():
    # preimages along a small path in H keep their label
    base = FamilyParams.reference(t=1e-3, H=1.0)
    target = (1000 + 50j, 20 - 3j)
    prev = None
    for H in np.linspace(1.0, 1.05, 11):
        k = base.with_H(H).coeffs()
        z, w, _ = solve_fibers(k, np.array([target[0]]), np.array([target[1]]))
        perm = sheet_order(z, w)
        z = np.take_along_axis(z, perm, 1)[0]
        if prev is not None:
            assert np.all(np.abs(z - prev) < 0.05 * np.abs(prev))
        prev = z
