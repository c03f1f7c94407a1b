"""Iterative identification of the initial tumour phase field.

Two schemes recover phi_0 from a terminal measurement phi_meas:

  landweber_sd   steepest-descent step size mu_j = |q_j(0)|^2 / |Y_j(T)|^2,
                 where q solves the adjoint system backwards from the
                 terminal mismatch and Y solves the linearised system
                 seeded with the adjoint initial values.
  adaptive_gd    no linearised solve; the step follows the adaptive rule
                 mu_j = min( sqrt(1+theta_{j-1}) mu_{j-1},
                             |phi0_j - phi0_{j-1}| / (2 |q0_j - q0_{j-1}|) ),
                 seeded with mu_0 = 0.2 / q_M from the extreme control
                 variables of the first gradient.

Each iteration: derive (sigma_0, p_0) from phi_0 through the affine laws,
run the forward system, run the adjoint system from the terminal mismatch,
step along -q(0), and truncate the control variables to [0, 1].  The loop
stops when both convergence criteria hold (each an OR of an absolute and a
stagnation test) or at the iteration cap.  The per-iteration history is
appended to a CSV file as it is produced, so partial runs survive crashes.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMeasurementError, StepSizeSingularityError
from .integrator import NewtonConfig, TimeConfig, solve
from .linalg import GmresConfig
from .metrics import MetricsReport, metrics
from .model import initial_laws
from .splines import Field, l2_norm
from .synthetic import tanh_ellipse
from .systems import Assembler, StateTriple, SystemKind

LANDWEBER_SD = "landweber_sd"
ADAPTIVE_GD = "adaptive_gd"
LANDWEBER_FIXED = "landweber_fixed"    # constant step; convergence studies only


@dataclass(frozen=True)
class ReconConfig:
    method: str = LANDWEBER_SD
    eps_sd: float = 1e-4
    max_iters: int = 500
    kappa: tuple = (1.0, 0.0, 0.0)
    clamp: tuple = (0.0, 1.0)
    fixed_mu: float | None = None      # required by the landweber_fixed method

    def __post_init__(self):
        if self.method not in (LANDWEBER_SD, ADAPTIVE_GD, LANDWEBER_FIXED):
            raise ValueError(f"unknown reconstruction method {self.method!r}")
        if self.method == LANDWEBER_FIXED and not (self.fixed_mu or 0) > 0:
            raise ValueError("landweber_fixed needs a positive fixed_mu")
        if not self.eps_sd > 0:
            raise ValueError("eps_sd must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        k = np.asarray(self.kappa, dtype=float)
        if k.shape != (3,) or np.any(k < 0) or not np.any(k > 0):
            raise ValueError("kappa must be three nonnegative weights, not all zero")


@dataclass
class ReconRecord:
    j: int
    mu: float                 # nan on the degenerate zero-gradient row
    theta: float              # nan for steepest descent
    J: float
    grad_norm: float
    metrics0: MetricsReport | None = None
    metricsT: MetricsReport | None = None


@dataclass
class ReconResult:
    phi0: Field
    phiT: Field
    history: list
    converged: bool
    iterations: int


@dataclass(frozen=True)
class ReferenceFields:
    """Ground-truth fields for per-iteration metric logging (optional)."""

    phi0: Field
    phiT: Field


CSV_COLUMNS = ["j", "mu", "theta", "J", "grad_norm",
               "eV0", "dsc0", "eL2_0", "ccc0",
               "eVT", "dscT", "eL2_T", "cccT"]


def truncate_phi0(phi0, clamp=(0.0, 1.0)):
    """Clamp control variables into the admissible interval."""
    return Field(phi0.space, np.clip(phi0.coeffs, clamp[0], clamp[1]))


def agd_initial_step(q0_coeffs):
    """mu_0 = 0.2 / q_M with q_M = max(max_A q_A, |min_A q_A|)."""
    q_m = max(float(np.max(q0_coeffs)), abs(float(np.min(q0_coeffs))))
    if q_m == 0.0:
        raise StepSizeSingularityError("first gradient vanishes; nothing to seed")
    return 0.2 / q_m


def agd_step_size(mu_prev, theta_prev, dphi_norm, dgrad_norm):
    """Adaptive step: min of the growth-capped branch and the secant branch.

    theta_prev = +inf makes the first branch inactive; a vanishing gradient
    difference makes the second branch inactive.
    """
    first = math.sqrt(1.0 + theta_prev) * mu_prev if math.isfinite(theta_prev) \
        else math.inf
    second = dphi_norm / (2.0 * dgrad_norm) if dgrad_norm > 0.0 else math.inf
    mu = min(first, second)
    if not math.isfinite(mu):
        raise StepSizeSingularityError(
            "both adaptive step branches are infinite (stagnated gradient)")
    return mu


def check_convergence(history, eps_sd, grad_diff_sq=None):
    """Both stopping criteria of the iteration, each an OR of two tests.

    Criterion 1 (gradient): |q0_j|^2 <= eps |q0_0|^2, or the squared norm
    of the gradient change is <= eps |q0_{j-1}|^2.
    Criterion 2 (objective): J_j <= eps J_0, or J_j - J_{j-1} <= eps J_{j-1}.

    `history` is the record list up to and including iteration j;
    `grad_diff_sq` is |q0_j - q0_{j-1}|^2 (None when j = 0).
    """
    cur = history[-1]
    first = history[0]
    c1 = cur.grad_norm ** 2 <= eps_sd * first.grad_norm ** 2
    c2 = cur.J <= eps_sd * first.J
    if len(history) >= 2:
        prev = history[-2]
        if grad_diff_sq is not None:
            c1 = c1 or grad_diff_sq <= eps_sd * prev.grad_norm ** 2
        c2 = c2 or (cur.J - prev.J) <= eps_sd * prev.J
    return c1 and c2


def initial_guess(phi_meas, a=100.0, b=None):
    """Tanh disc/ellipse centred at the measurement's centre of mass.

    With only `a` given, the guess is a disc of that radius; `b` selects an
    ellipse with distinct semi-axes.
    """
    b = a if b is None else b
    space = phi_meas.space
    grid = space.gauss_1d
    nodes, _, _, w1 = grid
    xg = nodes.ravel()
    wts = np.tile(w1, space.elements_per_side)
    vals = space.evaluate_grid(phi_meas.coeffs, xg, xg)
    w2 = np.outer(wts, wts)
    mass = float(np.sum(w2 * vals))
    if mass <= 0.0:
        raise DegenerateMeasurementError(
            "measurement has nonpositive total mass; centre of mass undefined")
    xc = float(np.sum(w2 * vals * xg[:, None])) / mass
    yc = float(np.sum(w2 * vals * xg[None, :])) / mass
    return tanh_ellipse(space, (xc, yc), a, b)


class _HistoryWriter:
    """Crash-safe CSV append, one row per iteration."""

    def __init__(self, path, config_hash=None):
        self.path = path
        if path is not None:
            with open(path, "w", newline="") as fh:
                if config_hash is not None:
                    fh.write(f"# config_hash={config_hash}\n")
                csv.writer(fh).writerow(CSV_COLUMNS)

    @staticmethod
    def _fmt(x):
        if x is None or (isinstance(x, float) and math.isnan(x)):
            return ""
        return repr(float(x))

    def append(self, rec):
        if self.path is None:
            return
        m0 = rec.metrics0.as_tuple() if rec.metrics0 else (None,) * 4
        mt = rec.metricsT.as_tuple() if rec.metricsT else (None,) * 4
        row = ([str(rec.j), self._fmt(rec.mu), self._fmt(rec.theta),
                self._fmt(rec.J), self._fmt(rec.grad_norm)]
               + [self._fmt(v) for v in m0] + [self._fmt(v) for v in mt])
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(row)


def _weighted_norm_sq(space, stacked, kappa):
    m = space.mass_matrix
    return sum(float(k) * float(c @ (m @ c))
               for k, c in zip(kappa, stacked) if k > 0.0)


def _reconstruct(method, phi_meas, phi0_guess, params, cfg, tcfg, ncfg, gcfg,
                 reference=None, sigma_meas=None, p_meas=None,
                 history_path=None, config_hash=None, dump_fn=None):
    space = phi_meas.space
    if phi0_guess.space is not space:
        raise ValueError("guess and measurement must live on the working space")
    k1, k2, k3 = cfg.kappa
    if (k2 > 0 and sigma_meas is None) or (k3 > 0 and p_meas is None):
        raise ValueError("kappa weights on sigma/p require those measurements")

    assembler = Assembler(space, params)
    mass = space.mass_matrix
    meas = np.zeros((3, space.n_f))
    meas[0] = phi_meas.coeffs
    if sigma_meas is not None:
        meas[1] = sigma_meas.coeffs
    if p_meas is not None:
        meas[2] = p_meas.coeffs

    dt_fwd = abs(tcfg.dt)
    fwd_cfg = TimeConfig(dt=dt_fwd, t_end=tcfg.t_end, rho_inf=tcfg.rho_inf)
    adj_cfg = TimeConfig(dt=-dt_fwd, t_end=tcfg.t_end, rho_inf=tcfg.rho_inf)

    writer = _HistoryWriter(history_path, config_hash)
    history = []
    phi0 = truncate_phi0(phi0_guess, cfg.clamp).coeffs
    prev_phi0 = None
    prev_q0 = None
    mu_prev = None
    theta_prev = None
    phiT = None
    converged = False
    j = 0

    for j in range(cfg.max_iters):
        sigma0, p0 = initial_laws(params, Field(space, phi0))
        state0 = StateTriple(Field(space, phi0), sigma0, p0)
        fwd = solve(assembler, SystemKind.forward(), state0, fwd_cfg, ncfg, gcfg)
        phiT = np.asarray(fwd.states[-1][0]).copy()

        mismatch = np.asarray(fwd.states[-1]) - meas
        J = 0.5 * _weighted_norm_sq(space, mismatch, cfg.kappa)

        terminal = StateTriple(Field(space, k1 * mismatch[0]),
                               Field(space, k2 * mismatch[1]),
                               Field(space, k3 * mismatch[2]), time=tcfg.t_end)
        adj = solve(assembler, SystemKind.adjoint(fwd), terminal, adj_cfg,
                    ncfg, gcfg)
        q0, z0, r0 = (np.asarray(adj.states[0][i]).copy() for i in range(3))
        grad_sq = float(q0 @ (mass @ q0))
        grad_norm = math.sqrt(max(grad_sq, 0.0))

        rec = ReconRecord(j, math.nan, math.nan, J, grad_norm)
        if reference is not None:
            rec.metrics0 = metrics(reference.phi0, Field(space, phi0))
            rec.metricsT = metrics(reference.phiT, Field(space, phiT))

        if grad_norm == 0.0:
            history.append(rec)
            writer.append(rec)
            converged = True
            break

        if method == LANDWEBER_FIXED:
            mu = cfg.fixed_mu
            theta = math.nan
        elif method == LANDWEBER_SD:
            lin0 = StateTriple(Field(space, q0), Field(space, z0),
                               Field(space, r0))
            lin = solve(assembler, SystemKind.linearised(fwd), lin0, fwd_cfg,
                        ncfg, gcfg)
            img_sq = _weighted_norm_sq(space, np.asarray(lin.states[-1]),
                                       cfg.kappa)
            num_sq = _weighted_norm_sq(
                space, np.stack([q0, z0, r0]), cfg.kappa) if (k2 or k3) \
                else grad_sq
            if img_sq == 0.0:
                raise StepSizeSingularityError(
                    "linearised image of the gradient vanishes at T "
                    "while the gradient is nonzero")
            mu = num_sq / img_sq
            theta = math.nan
        else:
            if j == 0:
                mu = agd_initial_step(q0)
                theta = math.inf
            else:
                dphi = phi0 - prev_phi0
                dgrad = q0 - prev_q0
                dphi_norm = math.sqrt(max(float(dphi @ (mass @ dphi)), 0.0))
                dgrad_norm = math.sqrt(max(float(dgrad @ (mass @ dgrad)), 0.0))
                mu = agd_step_size(mu_prev, theta_prev, dphi_norm, dgrad_norm)
                theta = mu / mu_prev

        rec.mu = mu
        rec.theta = theta
        history.append(rec)
        writer.append(rec)
        if dump_fn is not None:
            dump_fn(j, {"phi0": Field(space, phi0.copy()),
                        "q0": Field(space, q0.copy()),
                        "phiT": Field(space, phiT.copy())})

        grad_diff_sq = None
        if prev_q0 is not None:
            d = q0 - prev_q0
            grad_diff_sq = float(d @ (mass @ d))
        if check_convergence(history, cfg.eps_sd, grad_diff_sq):
            converged = True
            break
        if j == cfg.max_iters - 1:
            # cap reached: keep the evaluated iterate so the returned field
            # matches the recorded J/metrics/phiT
            break

        new_phi0 = np.clip(phi0 - mu * q0, cfg.clamp[0], cfg.clamp[1])
        prev_phi0, prev_q0 = phi0, q0
        mu_prev, theta_prev = mu, theta
        phi0 = new_phi0

    if phiT is None:
        # zero-iteration run: echo the guess; its forward image is unknown
        sigma0, p0 = initial_laws(params, Field(space, phi0))
        fwd = solve(assembler, SystemKind.forward(),
                    StateTriple(Field(space, phi0), sigma0, p0), fwd_cfg,
                    ncfg, gcfg)
        phiT = np.asarray(fwd.states[-1][0]).copy()

    return ReconResult(Field(space, phi0), Field(space, phiT), history,
                       converged, len(history))


def landweber_sd(phi_meas, phi0_guess, params, cfg=ReconConfig(),
                 tcfg=TimeConfig(), ncfg=NewtonConfig(), gcfg=GmresConfig(),
                 **kw):
    """Steepest-descent scheme; see the module docstring for the loop."""
    return _reconstruct(LANDWEBER_SD, phi_meas, phi0_guess, params, cfg,
                        tcfg, ncfg, gcfg, **kw)


def adaptive_gd(phi_meas, phi0_guess, params, cfg=ReconConfig(method=ADAPTIVE_GD),
                tcfg=TimeConfig(), ncfg=NewtonConfig(), gcfg=GmresConfig(),
                **kw):
    """Adaptive-step scheme for long horizons; no linearised solves."""
    return _reconstruct(ADAPTIVE_GD, phi_meas, phi0_guess, params, cfg,
                        tcfg, ncfg, gcfg, **kw)


def landweber_fixed(phi_meas, phi0_guess, params, cfg, tcfg=TimeConfig(),
                    ncfg=NewtonConfig(), gcfg=GmresConfig(), **kw):
    """Constant-step variant, kept for convergence-rate studies only."""
    return _reconstruct(LANDWEBER_FIXED, phi_meas, phi0_guess, params, cfg,
                        tcfg, ncfg, gcfg, **kw)
