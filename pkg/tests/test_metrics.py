import numpy as np
import pytest

from phaserec.errors import DegenerateMeasurementError
from phaserec.metrics import metrics, sample_grid, tumour_volume
from phaserec.splines import Field, SplineSpace
from phaserec.synthetic import tanh_ellipse

L = 1000.0


@pytest.fixture(scope="module")
def space():
    return SplineSpace(32, L)


def disc(space, centre, r, steepness=10.0):
    return tanh_ellipse(space, centre, r, r, steepness, zero_trace=False)


def test_full_domain_volume(space):
    assert tumour_volume(Field.constant(space, 1.0)) == pytest.approx(L * L, rel=1e-12)


def test_empty_volume(space):
    assert tumour_volume(Field.zeros(space)) == 0.0


def test_disc_area():
    space = SplineSpace(128, L)
    r = 300.0
    f = disc(space, (L / 2, L / 2), r)
    assert tumour_volume(f) == pytest.approx(np.pi * r * r, rel=0.02)


def test_identical_fields(space):
    f = disc(space, (L / 2, L / 2), 250.0)
    rep = metrics(f, f)
    assert rep.e_V == 0.0
    assert rep.dsc == 1.0
    assert rep.e_L2 == 0.0
    assert rep.ccc == pytest.approx(1.0, abs=1e-12)


def test_disjoint_equal_discs(space):
    a = disc(space, (250.0, 250.0), 100.0)
    b = disc(space, (750.0, 750.0), 100.0)
    rep = metrics(a, b)
    assert rep.dsc == 0.0
    assert abs(rep.e_V) < 0.02


def test_dsc_symmetry(space):
    a = disc(space, (400.0, 500.0), 180.0)
    b = disc(space, (520.0, 500.0), 150.0)
    assert metrics(a, b).dsc == pytest.approx(metrics(b, a).dsc, abs=1e-12)


def test_e_l2_asymmetric(space):
    # relative L2 error normalises by the reference field only
    a = disc(space, (500.0, 500.0), 200.0)
    b = disc(space, (500.0, 500.0), 120.0)
    assert metrics(a, b).e_L2 != pytest.approx(metrics(b, a).e_L2, rel=1e-3)


def test_empty_reference_rejected(space):
    with pytest.raises(DegenerateMeasurementError):
        metrics(Field.zeros(space), disc(space, (500.0, 500.0), 100.0))


def test_half_overlap_dsc_against_monte_carlo(space, rng):
    r = 200.0
    a = disc(space, (450.0, 500.0), r)
    b = disc(space, (650.0, 500.0), r)
    rep = metrics(a, b)
    pts = rng.uniform(0, L, size=(400000, 2))
    va = space.evaluate_points(a.coeffs, pts) > 0.5
    vb = space.evaluate_points(b.coeffs, pts) > 0.5
    dsc_mc = 2 * np.sum(va & vb) / (np.sum(va) + np.sum(vb))
    assert rep.dsc == pytest.approx(dsc_mc, abs=0.01)


def test_translation_invariance(space):
    # translating both fields by whole elements leaves the panel unchanged
    h = L / 32
    a1 = disc(space, (400.0, 400.0), 150.0)
    b1 = disc(space, (450.0, 420.0), 130.0)
    a2 = disc(space, (400.0 + 2 * h, 400.0 + h), 150.0)
    b2 = disc(space, (450.0 + 2 * h, 420.0 + h), 130.0)
    r1 = metrics(a1, b1)
    r2 = metrics(a2, b2)
    assert r1.e_V == pytest.approx(r2.e_V, abs=1e-3)
    assert r1.dsc == pytest.approx(r2.dsc, abs=1e-3)
    assert r1.e_L2 == pytest.approx(r2.e_L2, abs=1e-3)
    assert r1.ccc == pytest.approx(r2.ccc, abs=1e-3)


def test_ccc_not_exceeding_pearson(space, rng):
    a = disc(space, (480.0, 500.0), 220.0)
    b = disc(space, (520.0, 500.0), 200.0)
    grid = sample_grid(space)
    va = space.evaluate_grid(a.coeffs, grid.x, grid.y).ravel()
    vb = space.evaluate_grid(b.coeffs, grid.x, grid.y).ravel()
    w = grid.weights.ravel()
    sel = (va > 0.5) | (vb > 0.5)
    va, vb, w = va[sel], vb[sel], w[sel]
    ma = np.average(va, weights=w)
    mb = np.average(vb, weights=w)
    cov = np.average((va - ma) * (vb - mb), weights=w)
    pearson = cov / np.sqrt(np.average((va - ma) ** 2, weights=w)
                            * np.average((vb - mb) ** 2, weights=w))
    rep = metrics(a, b)
    assert abs(rep.ccc) <= abs(pearson) + 1e-12


def test_ccc_region_option(space):
    a = disc(space, (450.0, 500.0), 180.0)
    b = disc(space, (550.0, 500.0), 180.0)
    r_union = metrics(a, b, ccc_region="union")
    r_inter = metrics(a, b, ccc_region="intersection")
    assert r_union.ccc != pytest.approx(r_inter.ccc, abs=1e-6)


def test_cross_space_metrics(space):
    fine = SplineSpace(64, L)
    a = disc(fine, (500.0, 500.0), 220.0)
    b = disc(space, (500.0, 500.0), 220.0)
    rep = metrics(a, b)
    assert rep.dsc > 0.99
    assert abs(rep.e_V) < 0.01
