"""Ground-truth generation, mesh transfer, and the measurement noise model.

The reference simulation runs on a finer mesh than the working mesh used
by the reconstruction algorithms (an integer refinement, typically 2x per
direction).  The initial condition is the L2 projection of a steep
hyperbolic-tangent ellipse profile; the nutrient and PSA initial fields
follow from the affine laws of the model module.
"""

from dataclasses import dataclass

import numpy as np

from .integrator import NewtonConfig, solve
from .linalg import GmresConfig
from .model import initial_laws
from .splines import Field, SplineSpace, _solve_spd, l2_project
from .systems import Assembler, StateTriple, SystemKind


@dataclass(frozen=True)
class GroundTruthSpec:
    """Reference-run description: fine mesh, ellipse geometry, noise seed."""

    fine_elements_per_side: int
    a: float = 150.0            # semi-axis along x, um
    b: float = 200.0            # semi-axis along y, um
    centre: tuple | None = None  # defaults to the domain centre
    steepness: float = 10.0
    noise_level: float = 0.10
    seed: int = 0


def tanh_ellipse(space, centre, a, b, steepness=10.0, zero_trace=True):
    """L2 projection of the steep tanh ellipse profile onto the space."""
    xc, yc = centre

    def profile(x, y):
        r = np.sqrt(((x - xc) / a) ** 2 + ((y - yc) / b) ** 2)
        return 0.5 - 0.5 * np.tanh(steepness * (r - 1.0))

    return l2_project(profile, space, zero_trace=zero_trace)


def make_ground_truth(spec, params, tcfg, ncfg=None, gcfg=None, *,
                      domain_side, store=None):
    """Reference forward run on the fine mesh.

    Returns (phi0_ref, trajectory_ref, phi_meas) where phi_meas is the
    tumour field at t = T on the fine mesh (noise not applied here).
    """
    ncfg = ncfg or NewtonConfig()
    gcfg = gcfg or GmresConfig()
    space = SplineSpace(spec.fine_elements_per_side, domain_side)
    centre = spec.centre or (domain_side / 2.0, domain_side / 2.0)
    phi0 = tanh_ellipse(space, centre, spec.a, spec.b, spec.steepness)
    sigma0, p0 = initial_laws(params, phi0)
    assembler = Assembler(space, params)
    traj = solve(assembler, SystemKind.forward(),
                 StateTriple(phi0, sigma0, p0), tcfg, ncfg, gcfg, store=store)
    phi_meas = Field(space, np.asarray(traj.states[-1][0]).copy())
    return phi0, traj, phi_meas


def add_noise(phi_meas, level, seed, mode="multiplicative", threshold=1e-3,
              clamp=(0.0, 1.05)):
    """Perturb control variables above the support threshold.

    Multiplicative mode: c -> c * (1 + level * xi) with xi ~ N(0,1).
    Additive mode: c -> c + level * max(c) * xi on the same support set.
    Only perturbed entries are clamped; coefficients at or below the
    threshold stay bit-identical.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    coeffs = phi_meas.coeffs.copy()
    if level == 0.0:
        return Field(phi_meas.space, coeffs)
    rng = np.random.default_rng(seed)
    mask = coeffs > threshold
    xi = rng.standard_normal(int(mask.sum()))
    if mode == "multiplicative":
        noisy = coeffs[mask] * (1.0 + level * xi)
    elif mode == "additive":
        noisy = coeffs[mask] + level * coeffs.max() * xi
    else:
        raise ValueError("noise mode must be 'multiplicative' or 'additive'")
    coeffs[mask] = np.clip(noisy, clamp[0], clamp[1])
    return Field(phi_meas.space, coeffs)


def transfer(field, target):
    """L2 projection of a field onto another space on the same domain.

    Exact when the source mesh is an integer refinement of the target
    (the source Gauss grid integrates the product of the two quadratic
    bases exactly); otherwise it is the quadrature approximation on the
    finer of the two grids.
    """
    src = field.space
    if src is target:
        return field.copy()
    if abs(src.domain_side - target.domain_side) > 1e-9 * target.domain_side:
        raise ValueError("source and target spaces cover different domains")
    fine = src if src.elements_per_side >= target.elements_per_side else target
    nodes, _, _, w1 = fine.gauss_1d
    xg = nodes.ravel()
    wts = np.tile(w1, fine.elements_per_side)
    vals = src.evaluate_grid(field.coeffs, xg, xg)
    bx = target.design_matrix_1d(xg)
    rhs = (bx.T @ (vals * np.outer(wts, wts)) @ bx).ravel()
    coeffs = _solve_spd(target.mass_matrix, rhs)
    return Field(target, coeffs)
