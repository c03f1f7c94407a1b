import math

import numpy as np
import pytest

from phaserec.errors import DegenerateMeasurementError, StepSizeSingularityError
from phaserec.integrator import NewtonConfig, TimeConfig, solve
from phaserec.linalg import GmresConfig
from phaserec.metrics import metrics
from phaserec.model import initial_laws
from phaserec.reconstruction import (CSV_COLUMNS, ReconConfig, ReconRecord,
                                     ReferenceFields, adaptive_gd,
                                     agd_initial_step, agd_step_size,
                                     check_convergence, initial_guess,
                                     landweber_sd, truncate_phi0)
from phaserec.splines import Field, SplineSpace, evaluate
from phaserec.synthetic import tanh_ellipse, transfer
from phaserec.systems import Assembler, StateTriple, SystemKind

L = 1000.0


@pytest.fixture(scope="module")
def small_problem(params):
    """16x16 working instance with a same-space synthetic measurement."""
    space = SplineSpace(16, L)
    tcfg = TimeConfig(dt=0.1, t_end=0.5)
    # clamp the projected profile so the truth is admissible as-is
    truth = truncate_phi0(tanh_ellipse(space, (L / 2, L / 2), 180.0, 230.0))
    sig0, p0 = initial_laws(params, truth)
    asm = Assembler(space, params)
    traj = solve(asm, SystemKind.forward(), StateTriple(truth, sig0, p0), tcfg)
    meas = Field(space, np.asarray(traj.states[-1][0]).copy())
    return space, tcfg, truth, meas


# -- pure helpers -----------------------------------------------------------

def test_truncation():
    space = SplineSpace(4, L)
    f = Field(space, np.linspace(-0.2, 1.3, space.n_f))
    t = truncate_phi0(f)
    assert t.coeffs.min() == 0.0
    assert t.coeffs.max() == 1.0
    mid = (f.coeffs >= 0) & (f.coeffs <= 1)
    assert np.array_equal(t.coeffs[mid], f.coeffs[mid])


def test_truncation_identity_and_idempotent(rng):
    space = SplineSpace(4, L)
    f = Field(space, rng.uniform(0, 1, space.n_f))
    once = truncate_phi0(f)
    assert np.array_equal(once.coeffs, f.coeffs)
    twice = truncate_phi0(once)
    assert np.array_equal(twice.coeffs, once.coeffs)


def test_agd_seed_step():
    q = np.array([-0.5, 0.1, 0.25])
    assert agd_initial_step(q) == pytest.approx(0.2 / 0.5)
    with pytest.raises(StepSizeSingularityError):
        agd_initial_step(np.zeros(3))


def test_agd_step_branches():
    # theta = inf: only the secant branch is active
    assert agd_step_size(2.0, math.inf, 3.0, 1.0) == pytest.approx(1.5)
    # small theta: growth-capped branch wins
    assert agd_step_size(1.0, 0.0, 100.0, 1.0) == pytest.approx(1.0)
    # vanishing gradient difference: growth branch wins
    assert agd_step_size(2.0, 3.0, 5.0, 0.0) == pytest.approx(4.0)
    with pytest.raises(StepSizeSingularityError):
        agd_step_size(2.0, math.inf, 5.0, 0.0)


def test_agd_step_hand_oracle_histories():
    # three synthetic histories checked against the written-out rule
    histories = [
        (0.5, 1.0, 2.0, 4.0),
        (1e-3, 0.25, 0.1, 40.0),
        (2.0, 8.0, 12.0, 0.5),
    ]
    for mu_prev, theta_prev, dphi, dq in histories:
        expect = min(math.sqrt(1.0 + theta_prev) * mu_prev, dphi / (2.0 * dq))
        assert agd_step_size(mu_prev, theta_prev, dphi, dq) == pytest.approx(expect)


def _rec(j, J, grad):
    return ReconRecord(j=j, mu=0.1, theta=math.nan, J=J, grad_norm=grad)


def test_convergence_both_zero():
    assert check_convergence([_rec(0, 0.0, 0.0)], 1e-4)


def test_convergence_needs_both_criteria():
    # gradient halved, J unchanged: criterion 1 fails at eps = 1e-4
    hist = [_rec(0, 10.0, 1.0), _rec(1, 10.0, math.sqrt(0.5))]
    # grad diff is large, so neither branch of criterion 1 holds
    assert not check_convergence(hist, 1e-4, grad_diff_sq=0.3)


def test_convergence_stagnation():
    hist = [_rec(0, 10.0, 1.0), _rec(1, 10.0, 1.0)]
    assert check_convergence(hist, 1e-4, grad_diff_sq=0.0)


def test_convergence_absolute_branches():
    hist = [_rec(0, 10.0, 1.0), _rec(1, 10.0 * 1e-5, 1e-3)]
    assert check_convergence(hist, 1e-4, grad_diff_sq=1.0)


# -- initial guess ----------------------------------------------------------

def test_initial_guess_centre_of_mass_symmetric():
    # 64 elements resolve the r=100 disc (r > 6h); coarser meshes ring
    space = SplineSpace(64, L)
    meas = tanh_ellipse(space, (L / 2, L / 2), 200.0, 200.0)
    g = initial_guess(meas, a=100.0)
    val_c = evaluate(g, np.array([L / 2, L / 2]))
    assert val_c > 0.95
    # radius ~100: profile drops through 0.5 at that distance
    assert evaluate(g, np.array([L / 2 + 100.0, L / 2])) == pytest.approx(0.5, abs=0.05)


def test_initial_guess_translation_covariance():
    space = SplineSpace(32, L)
    d = 125.0
    m1 = tanh_ellipse(space, (L / 2, L / 2), 150.0, 150.0)
    m2 = tanh_ellipse(space, (L / 2 + d, L / 2), 150.0, 150.0)
    g1 = initial_guess(m1, a=80.0)
    g2 = initial_guess(m2, a=80.0)
    # compare the two guesses on a shifted probe line
    for dx in (-60.0, 0.0, 45.0):
        p1 = evaluate(g1, np.array([L / 2 + dx, L / 2]))
        p2 = evaluate(g2, np.array([L / 2 + d + dx, L / 2]))
        assert p1 == pytest.approx(p2, abs=2e-2)


def test_initial_guess_coefficients_bounded():
    # projection overshoot envelope, measured at meshes resolving the disc
    # at r/h ~ 9 (the production working-mesh ratio) and frozen
    space = SplineSpace(96, L)
    meas = tanh_ellipse(space, (L / 2, L / 2), 200.0, 250.0)
    g = initial_guess(meas, a=100.0)
    assert g.coeffs.min() > -0.05
    assert g.coeffs.max() < 1.05


def test_initial_guess_degenerate_measurement():
    space = SplineSpace(8, L)
    with pytest.raises(DegenerateMeasurementError):
        initial_guess(Field.zeros(space), a=100.0)


# -- full iterations on tiny instances ---------------------------------------

def test_exact_guess_stops_immediately(params, small_problem):
    space, tcfg, truth, meas = small_problem
    res = landweber_sd(meas, truth, params, ReconConfig(max_iters=50), tcfg)
    assert res.converged
    assert res.iterations == 1
    assert res.history[0].J < 1e-12 * (L * L)
    assert np.array_equal(res.phi0.coeffs, truth.coeffs)


def test_zero_max_iters_echoes_guess(params, small_problem):
    space, tcfg, truth, meas = small_problem
    guess = initial_guess(meas, a=100.0)
    res = landweber_sd(meas, guess, params, ReconConfig(max_iters=0), tcfg)
    assert not res.converged
    assert res.iterations == 0
    # the guess is echoed after admissible-set truncation
    assert np.array_equal(res.phi0.coeffs, truncate_phi0(guess).coeffs)


def test_landweber_descends_and_truncates(params, small_problem):
    space, tcfg, truth, meas = small_problem
    guess = initial_guess(meas, a=120.0)
    res = landweber_sd(meas, guess, params,
                       ReconConfig(max_iters=8, eps_sd=1e-12), tcfg)
    Js = [r.J for r in res.history]
    assert all(Js[i + 1] <= Js[i] for i in range(len(Js) - 1))
    assert res.phi0.coeffs.min() >= 0.0
    assert res.phi0.coeffs.max() <= 1.0
    assert Js[-1] < 0.2 * Js[0]


def test_steepest_descent_step_optimal(params, small_problem):
    """mu from the step rule minimises the quadratic model
    mu -> 0.5 |R - mu Y(T)|^2 along the gradient direction."""
    space, tcfg, truth, meas = small_problem
    guess = initial_guess(meas, a=120.0)
    asm = Assembler(space, params)
    sig0, p0 = initial_laws(params, guess)
    fwd = solve(asm, SystemKind.forward(), StateTriple(guess, sig0, p0), tcfg)
    resid = np.asarray(fwd.states[-1][0]) - meas.coeffs
    adj = solve(asm, SystemKind.adjoint(fwd),
                StateTriple(Field(space, resid), Field.zeros(space),
                            Field.zeros(space), time=tcfg.t_end),
                TimeConfig(dt=-tcfg.dt, t_end=tcfg.t_end))
    q0, z0, r0 = (np.asarray(adj.states[0][i]) for i in range(3))
    lin = solve(asm, SystemKind.linearised(fwd),
                StateTriple(Field(space, q0), Field(space, z0), Field(space, r0)),
                tcfg)
    YT = np.asarray(lin.states[-1][0])
    m = space.mass_matrix
    mu_rule = (q0 @ (m @ q0)) / (YT @ (m @ YT))
    # golden-section search on the quadratic model
    def model(mu):
        d = resid - mu * YT
        return 0.5 * d @ (m @ d)
    lo, hi = 0.0, 10.0 * mu_rule
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    for _ in range(200):
        if model(c) < model(d):
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    mu_gs = 0.5 * (a + b)
    assert mu_rule == pytest.approx(mu_gs, rel=0.01)


def test_agd_runs_and_records_theta(params, small_problem):
    space, tcfg, truth, meas = small_problem
    guess = initial_guess(meas, a=130.0)
    res = adaptive_gd(meas, guess, params,
                      ReconConfig(method="adaptive_gd", max_iters=6,
                                  eps_sd=1e-12), tcfg)
    assert res.history[0].theta == math.inf
    assert all(np.isfinite(r.theta) for r in res.history[1:])
    assert all(r.mu > 0 for r in res.history)
    assert res.history[-1].J <= res.history[0].J


def test_history_csv_schema(params, small_problem, tmp_path):
    space, tcfg, truth, meas = small_problem
    guess = initial_guess(meas, a=120.0)
    ref = ReferenceFields(phi0=truth, phiT=meas)
    path = tmp_path / "history.csv"
    landweber_sd(meas, guess, params, ReconConfig(max_iters=3, eps_sd=1e-12),
                 tcfg, reference=ref, history_path=path, config_hash="cafe")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=cafe"
    assert lines[1].split(",") == CSV_COLUMNS
    assert len(lines) == 2 + 3
    row = lines[2].split(",")
    assert int(row[0]) == 0
    assert float(row[3]) > 0         # J
    assert row[2] == ""              # theta empty for steepest descent
    assert all(cell != "" for cell in row[5:])


def test_metrics_omitted_without_reference(params, small_problem, tmp_path):
    space, tcfg, truth, meas = small_problem
    guess = initial_guess(meas, a=120.0)
    path = tmp_path / "blind.csv"
    res = landweber_sd(meas, guess, params, ReconConfig(max_iters=2, eps_sd=1e-12),
                       tcfg, history_path=path)
    assert res.history[0].metrics0 is None
    row = path.read_text().splitlines()[2].split(",")
    assert all(cell == "" for cell in row[5:])
