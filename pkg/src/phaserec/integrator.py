"""Generalized-alpha time stepping with Newton-Raphson corrections.

One step advances (U_n, Udot_n) to (U_{n+1}, Udot_{n+1}) by enforcing the
stage residual Res(Udot_{n+alpha_m}, U_{n+alpha_f}) = 0 together with

    U_{n+1}        = U_n + dt Udot_n + gamma dt (Udot_{n+1} - Udot_n)
    Udot_{n+am}    = Udot_n + alpha_m (Udot_{n+1} - Udot_n)
    U_{n+af}       = U_n + alpha_f (U_{n+1} - U_n)

The same recursions with a negative dt realise the backwards march of the
adjoint system from t = T down to 0.  Newton iterations solve for
Udot_{n+1}; each correction comes from one preconditioned GMRES solve of
the stage tangent.  Convergence is per residual block: each of the three
field residuals must drop below eps_NR of its own initial norm (a block
that starts at exactly zero counts as converged).
"""

from dataclasses import dataclass

import numpy as np

from .errors import StepError
from .linalg import GmresConfig, gmres_solve
from .systems import StateTriple


@dataclass(frozen=True)
class TimeConfig:
    """Step size (negative for the adjoint), horizon, and spectral radius."""

    dt: float = 0.1
    t_end: float = 15.0
    rho_inf: float = 0.5

    def __post_init__(self):
        if self.dt == 0.0:
            raise ValueError("time step must be nonzero")
        if self.t_end <= 0.0:
            raise ValueError("time horizon must be positive")
        if not 0.0 <= self.rho_inf <= 1.0:
            raise ValueError("rho_inf must lie in [0, 1]")
        steps = self.t_end / abs(self.dt)
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(
                f"t_end={self.t_end} is not an integer multiple of |dt|={abs(self.dt)}")

    @property
    def n_steps(self):
        return round(self.t_end / abs(self.dt))

    @property
    def alpha_m(self):
        return 0.5 * (3.0 - self.rho_inf) / (1.0 + self.rho_inf)

    @property
    def alpha_f(self):
        return 1.0 / (1.0 + self.rho_inf)

    @property
    def gamma(self):
        return 0.5 + self.alpha_m - self.alpha_f


@dataclass(frozen=True)
class NewtonConfig:
    """Per-block relative reduction tolerance plus an absolute noise floor.

    abs_floor is interpreted per unit domain area: a block whose residual
    norm is below abs_floor * L^2 is treated as assembly roundoff and
    accepted (stationary states produce exactly this situation).
    """

    tol: float = 1e-3
    max_newton: int = 10
    abs_floor: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError("Newton tolerance must lie in (0, 1)")
        if self.max_newton < 1:
            raise ValueError("need at least one Newton iteration")


class Trajectory:
    """Equally spaced snapshots {(t_n, U_n, Udot_n)} in forward time order.

    Provides linear-in-time interpolation of the stacked coefficients,
    used to evaluate frozen backgrounds at generalized-alpha stage times.
    Arrays may live in memory (default) or in a numpy memmap on disk.
    """

    def __init__(self, times, states, rates):
        self.times = np.asarray(times, dtype=float)
        self.states = states       # (n+1, 3, n_f)
        self.rates = rates
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory time stamps must increase strictly")

    @classmethod
    def allocate(cls, n_steps, n_f, store=None):
        shape = (n_steps + 1, 3, n_f)
        if store is None:
            states = np.zeros(shape)
            rates = np.zeros(shape)
        else:
            states = np.lib.format.open_memmap(
                f"{store}.states.npy", mode="w+", dtype=np.float64, shape=shape)
            rates = np.lib.format.open_memmap(
                f"{store}.rates.npy", mode="w+", dtype=np.float64, shape=shape)
        traj = cls.__new__(cls)
        traj.times = np.zeros(n_steps + 1)
        traj.states = states
        traj.rates = rates
        return traj

    @property
    def t_start(self):
        return float(self.times[0])

    @property
    def t_end(self):
        return float(self.times[-1])

    def __len__(self):
        return len(self.times)

    def interp(self, t):
        """Stacked coefficients (3, n_f) at time t, linear between snapshots."""
        t = float(np.clip(t, self.times[0], self.times[-1]))
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = min(max(idx, 0), len(self.times) - 2)
        t0, t1 = self.times[idx], self.times[idx + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.states[idx] + w * self.states[idx + 1]

    def state_triple(self, index, space):
        return StateTriple.from_stack(space, np.asarray(self.states[index]),
                                      float(self.times[index]))


def consistent_rate(assembler, kind, U, t, gcfg=None):
    """Initial Udot such that the residual vanishes at the starting time.

    The residual is affine in Udot, so one mass-type solve suffices:
    sign*M Udot = -G(U) with G the rate-free residual.
    """
    rhs = -assembler.residual(kind, U, np.zeros_like(U), t)
    mask = assembler.space.dirichlet_mask
    rhs[:assembler.space.n_f][mask] = 0.0
    mat = assembler.rate_matrix(kind)
    base_tol = gcfg.tol if gcfg is not None else 1e-10
    cfg = GmresConfig(tol=min(base_tol, 1e-10), max_iters=2000)
    res = gmres_solve(mat, rhs, cfg)
    if not res.converged:
        raise StepError("consistent initial rate solve did not converge", time=t)
    return res.x.reshape(3, -1)


def step(assembler, kind, U_a, Udot_a, t_a, dt, tcfg, ncfg, gcfg):
    """One generalized-alpha step from t_a to t_a + dt (dt may be negative).

    Returns (U_b, Udot_b, newton_iterations).
    """
    am, af, gm = tcfg.alpha_m, tcfg.alpha_f, tcfg.gamma
    x = (gm - 1.0) / gm * Udot_a          # same-state predictor
    init_norms = None
    n_f = assembler.space.n_f
    floor = ncfg.abs_floor * assembler.space.domain_side ** 2

    for it in range(ncfg.max_newton + 1):
        U_b = U_a + dt * Udot_a + gm * dt * (x - Udot_a)
        Udot_s = Udot_a + am * (x - Udot_a)
        U_s = U_a + af * (U_b - U_a)
        t_s = t_a + af * dt
        R = assembler.residual(kind, U_s, Udot_s, t_s)
        norms = assembler.block_norms(R)
        if init_norms is None:
            init_norms = norms.copy()
        done = np.all((norms <= ncfg.tol * init_norms)
                      | (init_norms == 0.0)
                      | (norms <= floor))
        if done:
            return U_b, x, it
        if it == ncfg.max_newton:
            raise StepError(
                f"Newton did not converge in {ncfg.max_newton} iterations at "
                f"t={t_a + dt:.6g} (block residuals {norms}, initial {init_norms})",
                time=t_a + dt, residuals=norms)
        shift = am / (af * gm * dt)
        J = assembler.tangent(kind, U_s, Udot_s, t_s, shift)
        sol = gmres_solve(J, R, gcfg)
        if not sol.converged:
            raise StepError(
                f"GMRES stalled at relative residual {sol.residual:.3e} "
                f"({sol.iterations} iterations) inside the Newton loop at "
                f"t={t_a + dt:.6g}", time=t_a + dt)
        x = x - sol.x.reshape(3, n_f) / (af * gm * dt)


def solve(assembler, kind, initial, tcfg, ncfg=NewtonConfig(),
          gcfg=GmresConfig(), store=None):
    """March the system over [0, T]; returns a forward-ordered Trajectory.

    ``initial`` is the StateTriple at t=0 for the forward/linearised
    systems (dt > 0) or the terminal condition at t=T for the adjoint
    (dt < 0).  The consistent starting rate is computed internally.
    """
    dt = tcfg.dt
    backward = dt < 0
    t0 = tcfg.t_end if backward else 0.0
    n_steps = tcfg.n_steps
    space = assembler.space

    U = initial.stack()
    Udot = consistent_rate(assembler, kind, U, t0, gcfg)

    traj = Trajectory.allocate(n_steps, space.n_f, store=store)
    write = (lambda k: n_steps - k) if backward else (lambda k: k)
    traj.times[write(0)] = t0
    traj.states[write(0)] = U
    traj.rates[write(0)] = Udot

    t = t0
    for k in range(n_steps):
        U, Udot, _ = step(assembler, kind, U, Udot, t, dt, tcfg, ncfg, gcfg)
        t = t0 + (k + 1) * dt
        traj.times[write(k + 1)] = t
        traj.states[write(k + 1)] = U
        traj.rates[write(k + 1)] = Udot
    # snap rounding noise: the march must land on the endpoints exactly
    traj.times[0] = 0.0
    traj.times[-1] = tcfg.t_end
    return traj
