"""Model parameters and the nonlinear constitutive functions.

The three coupled fields are the tumour phase field phi (0 healthy,
1 tumour), a generic nutrient concentration sigma, and the tissue PSA p.
The phase-field dynamics combine a double-well potential F with an
interpolation function h tilted by the nutrient-dependent net
proliferation rate m(sigma).
"""

from dataclasses import dataclass, field

import numpy as np

from .splines import Field


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters.  Rates are per day, lengths in micrometres.

    lambda_ (tumour cell diffusivity) is derived as M * ell^2 and not set
    directly.  The c0/c1 coefficients are the affine laws producing the
    nutrient and PSA initial conditions from the tumour initial condition;
    they have no defaults because no certified values exist.
    """

    M: float                  # mobility scale in F and h, 1/day
    ell: float                # interface length scale, um
    eta: float                # nutrient diffusivity, um^2/day
    D: float                  # tissue PSA diffusivity, um^2/day
    gamma_h: float            # nutrient uptake, healthy tissue, 1/day
    gamma_c: float            # nutrient uptake, tumour tissue, 1/day
    S_h: float                # nutrient supply, healthy tissue
    S_c: float                # nutrient supply, tumour tissue
    gamma_p: float            # PSA decay rate, 1/day
    alpha_h: float            # PSA production, healthy tissue
    alpha_c: float            # PSA production, tumour tissue
    m_ref: float              # proliferation scaling factor, 1/day
    rho: float                # non-dimensional proliferation index
    A: float                  # non-dimensional death index
    sigma_l: float            # nutrient reference level in m(sigma)
    sigma_r: float            # nutrient threshold width in m(sigma)
    c0_sigma: float           # sigma_0 = c0_sigma + c1_sigma * phi_0
    c1_sigma: float
    c0_p: float               # p_0 = c0_p + c1_p * phi_0
    c1_p: float
    # The arctan prefactor of m(sigma): "pi" gives exact asymptotes
    # m_ref*rho / m_ref*A; "half" is the 1/2-prefactor variant.
    m_variant: str = "pi"

    def __post_init__(self):
        positive = ["M", "ell", "eta", "D", "gamma_h", "gamma_c", "S_h",
                    "S_c", "gamma_p", "alpha_h", "alpha_c", "m_ref", "rho",
                    "A", "sigma_l", "sigma_r"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"model parameter {name} must be positive")
        if self.m_variant not in ("pi", "half"):
            raise ValueError("m_variant must be 'pi' or 'half'")

    @property
    def lam(self):
        """Phase-field diffusivity lambda = M * ell^2, um^2/day."""
        return self.M * self.ell ** 2

    @property
    def gamma_ch(self):
        return self.gamma_c - self.gamma_h

    @property
    def S_ch(self):
        return self.S_c - self.S_h

    @property
    def alpha_ch(self):
        return self.alpha_c - self.alpha_h

    # -- double-well potential F(s) = M s^2 (1-s)^2 -------------------------

    def potential_F(self, phi):
        return self.M * phi ** 2 * (1.0 - phi) ** 2

    def dF(self, phi):
        return 2.0 * self.M * phi * (1.0 - phi) * (1.0 - 2.0 * phi)

    def d2F(self, phi):
        return self.M * (2.0 - 12.0 * phi + 12.0 * phi ** 2)

    # -- interpolation function h(s) = M s^2 (3 - 2s) -----------------------

    def interp_h(self, phi):
        return self.M * phi ** 2 * (3.0 - 2.0 * phi)

    def dh(self, phi):
        return 6.0 * self.M * phi * (1.0 - phi)

    def d2h(self, phi):
        return 6.0 * self.M * (1.0 - 2.0 * phi)

    # -- nutrient tilting function m(sigma) ---------------------------------

    def _m_scale(self):
        return np.pi if self.m_variant == "pi" else 2.0

    def tilt_m(self, sigma):
        s = (np.asarray(sigma, dtype=float) - self.sigma_l) / self.sigma_r
        out = self.m_ref * (0.5 * (self.rho + self.A)
                            + (self.rho - self.A) / self._m_scale() * np.arctan(s))
        return out if out.ndim else float(out)

    def dm(self, sigma):
        s = (np.asarray(sigma, dtype=float) - self.sigma_l) / self.sigma_r
        out = (self.m_ref * (self.rho - self.A)
               / (self._m_scale() * self.sigma_r) / (1.0 + s ** 2))
        return out if out.ndim else float(out)


def initial_laws(params, phi0):
    """Nutrient and PSA initial fields from the tumour initial field.

    Affine maps act exactly on control variables because the basis
    reproduces constants (partition of unity).
    """
    sigma0 = Field(phi0.space, params.c0_sigma + params.c1_sigma * phi0.coeffs)
    p0 = Field(phi0.space, params.c0_p + params.c1_p * phi0.coeffs)
    return sigma0, p0
