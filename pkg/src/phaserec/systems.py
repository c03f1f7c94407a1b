"""Galerkin residual and tangent assembly for the coupled three-field system.

Three families of weak forms share one assembly engine:

  forward     the nonlinear tumour/nutrient/PSA system (phi, sigma, p)
  linearised  its Frechet derivative (Y, Z, P) around a frozen background
  adjoint     the dual system (q, z, r), which runs backwards in time

Unknowns are stacked field-major: x = [u1, u2, u3] with u1 carrying the
homogeneous Dirichlet constraint.  Constrained rows of the residual are
replaced by the constraint residual (coefficient value minus zero) and the
corresponding tangent rows by identity rows.

Assembly is vectorised over elements: basis tables at Gauss points are
gathered once per space, local blocks are formed with batched matrix
products, and scattered into a fixed CSR pattern with bincount.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .splines import Field

FORWARD = "forward"
LINEARISED = "linearised"
ADJOINT = "adjoint"


@dataclass
class StateTriple:
    """Coefficient bundle of the three scalar unknowns at one time level."""

    u1: Field
    u2: Field
    u3: Field
    time: float = 0.0

    def __post_init__(self):
        if not (self.u1.space is self.u2.space is self.u3.space):
            raise ValueError("all three fields must share one spline space")

    @property
    def space(self):
        return self.u1.space

    def stack(self):
        return np.stack([self.u1.coeffs, self.u2.coeffs, self.u3.coeffs])

    @classmethod
    def from_stack(cls, space, arr, time=0.0):
        return cls(Field(space, arr[0].copy()), Field(space, arr[1].copy()),
                   Field(space, arr[2].copy()), time)

    @classmethod
    def zeros(cls, space, time=0.0):
        return cls.from_stack(space, np.zeros((3, space.n_f)), time)


class SystemKind:
    """Which weak-form family to assemble, plus the data it needs.

    Linearised and adjoint assemblies require a frozen background
    trajectory (any object with an ``interp(t) -> (3, n_f)`` method and a
    ``t_start``/``t_end`` range).  The forward system optionally carries a
    nutrient source term ``sigma_source(t, x, y)`` used by manufactured
    solution tests.
    """

    def __init__(self, name, background=None, sigma_source=None):
        if name not in (FORWARD, LINEARISED, ADJOINT):
            raise ValueError(f"unknown system kind {name!r}")
        if name in (LINEARISED, ADJOINT) and background is None:
            raise ValueError(f"{name} system requires a background trajectory")
        self.name = name
        self.background = background
        self.sigma_source = sigma_source

    @classmethod
    def forward(cls, sigma_source=None):
        return cls(FORWARD, sigma_source=sigma_source)

    @classmethod
    def linearised(cls, background):
        return cls(LINEARISED, background=background)

    @classmethod
    def adjoint(cls, background):
        return cls(ADJOINT, background=background)

    @property
    def rate_sign(self):
        """Sign of the time-derivative term in the weak forms."""
        return -1.0 if self.name == ADJOINT else 1.0


class Assembler:
    """Residual/tangent assembly engine bound to one space and parameter set."""

    def __init__(self, space, params):
        self.space = space
        self.params = params
        self._pattern_cache = {}
        self._rate_cache = {}
        self._gauss_xy = None

    # -- gauss-point helpers ------------------------------------------------

    def _coords(self):
        if self._gauss_xy is None:
            nodes, _, _, _ = self.space.gauss_1d
            nel = self.space.elements_per_side
            q = self.space.quadrature.points_per_direction
            gx = np.broadcast_to(nodes[:, None, :, None], (nel, nel, q, q))
            gy = np.broadcast_to(nodes[None, :, None, :], (nel, nel, q, q))
            shape = (nel * nel, q * q)
            self._gauss_xy = (gx.reshape(shape), gy.reshape(shape))
        return self._gauss_xy

    def _values(self, coeffs):
        """Field values at Gauss points for stacked coefficients (k, n_f)."""
        val, _, _, _ = self.space.tables_2d
        local = coeffs[:, self.space.elem_dofs]           # (k, nelem, nloc)
        return np.einsum("egl,kel->keg", val, local)

    def _gradients(self, coeffs):
        _, dx, dy, _ = self.space.tables_2d
        local = coeffs[:, self.space.elem_dofs]
        return (np.einsum("egl,kel->keg", dx, local),
                np.einsum("egl,kel->keg", dy, local))

    def _background_values(self, kind, t):
        traj = kind.background
        lo, hi = traj.t_start, traj.t_end
        if t < min(lo, hi) - 1e-9 or t > max(lo, hi) + 1e-9:
            raise ValueError(f"background trajectory does not cover t={t}")
        coeffs = traj.interp(t)
        vals = self._values(coeffs[:2])
        return vals[0], vals[1]

    # -- residual -------------------------------------------------------------

    def residual(self, kind, U, Udot, t):
        """Stacked residual (3*n_f,) with Dirichlet rows replaced.

        U and Udot are stacked coefficient arrays (3, n_f).
        """
        p = self.params
        u = self._values(U)
        ud = self._values(Udot)
        gx, gy = self._gradients(U)

        if kind.name == FORWARD:
            phi, sig, pp = u
            mass = np.empty_like(u)
            mass[0] = ud[0] + p.dF(phi) - p.tilt_m(sig) * p.dh(phi)
            mass[1] = (ud[1] + p.gamma_h * sig + p.gamma_ch * sig * phi
                       - p.S_h - p.S_ch * phi)
            mass[2] = ud[2] + p.gamma_p * pp - p.alpha_h - p.alpha_ch * phi
            if kind.sigma_source is not None:
                xg, yg = self._coords()
                mass[1] -= kind.sigma_source(t, xg, yg)
        elif kind.name == LINEARISED:
            phib, sigb = self._background_values(kind, t)
            Y, Z, P = u
            mass = np.empty_like(u)
            mass[0] = (ud[0] + (p.d2F(phib) - p.tilt_m(sigb) * p.d2h(phib)) * Y
                       - p.dm(sigb) * p.dh(phib) * Z)
            mass[1] = (ud[1] + p.gamma_h * Z + p.gamma_ch * (sigb * Y + phib * Z)
                       - p.S_ch * Y)
            mass[2] = ud[2] + p.gamma_p * P - p.alpha_ch * Y
        else:
            phib, sigb = self._background_values(kind, t)
            q, z, r = u
            mass = np.empty_like(u)
            mass[0] = (-ud[0] + (p.d2F(phib) - p.tilt_m(sigb) * p.d2h(phib)) * q
                       + (p.gamma_ch * sigb - p.S_ch) * z - p.alpha_ch * r)
            mass[1] = (-ud[1] + (p.gamma_h + p.gamma_ch * phib) * z
                       - p.dm(sigb) * p.dh(phib) * q)
            mass[2] = -ud[2] + p.gamma_p * r

        val, dxt, dyt, w2 = self.space.tables_2d
        diff = (p.lam, p.eta, p.D)
        out = np.empty(3 * self.space.n_f)
        dofs = self.space.elem_dofs.ravel()
        for f in range(3):
            loc = np.einsum("eg,egl->el", mass[f] * w2, val)
            loc += diff[f] * (np.einsum("eg,egl->el", gx[f] * w2, dxt)
                              + np.einsum("eg,egl->el", gy[f] * w2, dyt))
            out[f * self.space.n_f:(f + 1) * self.space.n_f] = np.bincount(
                dofs, weights=loc.ravel(), minlength=self.space.n_f)

        mask = self.space.dirichlet_mask
        out[:self.space.n_f][mask] = U[0][mask]
        return out

    # -- tangent ----------------------------------------------------------------

    def _blocks(self, kind, u_values, t, shift):
        """Per-block (mass coefficient, stiffness scalar) description.

        The mass coefficient is either a scalar or a (nelem, q^2) array; the
        time-derivative contribution shift * d(udot)/du is folded into the
        diagonal blocks with the rate sign of the system.
        """
        p = self.params
        s = kind.rate_sign * shift
        if kind.name in (FORWARD, LINEARISED):
            if kind.name == FORWARD:
                phi, sig = u_values[0], u_values[1]
            else:
                phi, sig = self._background_values(kind, t)
            return {
                (0, 0): (s + p.d2F(phi) - p.tilt_m(sig) * p.d2h(phi), p.lam),
                (0, 1): (-p.dm(sig) * p.dh(phi), 0.0),
                (1, 0): (p.gamma_ch * sig - p.S_ch, 0.0),
                (1, 1): (s + p.gamma_h + p.gamma_ch * phi, p.eta),
                (2, 0): (-p.alpha_ch, 0.0),
                (2, 2): (s + p.gamma_p, p.D),
            }
        phib, sigb = self._background_values(kind, t)
        return {
            (0, 0): (s + p.d2F(phib) - p.tilt_m(sigb) * p.d2h(phib), p.lam),
            (0, 1): (p.gamma_ch * sigb - p.S_ch, 0.0),
            (0, 2): (-p.alpha_ch, 0.0),
            (1, 0): (-p.dm(sigb) * p.dh(phib), 0.0),
            (1, 1): (s + p.gamma_h + p.gamma_ch * phib, p.eta),
            (2, 2): (s + p.gamma_p, p.D),
        }

    def _pattern(self, block_keys):
        key = tuple(sorted(block_keys))
        if key in self._pattern_cache:
            return self._pattern_cache[key]
        space = self.space
        n_f = space.n_f
        base = space.mass_matrix.tocoo()
        rows = np.concatenate([fr * n_f + base.row for fr, _ in key])
        cols = np.concatenate([fc * n_f + base.col for _, fc in key])
        pat = sp.csr_matrix((np.zeros(rows.size), (rows, cols)),
                            shape=(3 * n_f, 3 * n_f))
        pat.sum_duplicates()
        pat.sort_indices()
        nnz_rows = np.repeat(np.arange(3 * n_f), np.diff(pat.indptr))
        keys_sorted = nnz_rows.astype(np.int64) * (3 * n_f) + pat.indices

        dofs = space.elem_dofs
        positions = {}
        for fr, fc in key:
            r = (fr * n_f + dofs)[:, :, None].astype(np.int64)
            c = (fc * n_f + dofs)[:, None, :].astype(np.int64)
            qk = (r * (3 * n_f) + c).ravel()
            positions[(fr, fc)] = np.searchsorted(keys_sorted, qk)

        mask = np.flatnonzero(space.dirichlet_mask)
        row_spans = [np.arange(pat.indptr[r], pat.indptr[r + 1]) for r in mask]
        constrained = np.concatenate(row_spans) if row_spans else np.array([], int)
        diag_keys = mask.astype(np.int64) * (3 * n_f) + mask
        diag_pos = np.searchsorted(keys_sorted, diag_keys)

        entry = (pat, positions, constrained, diag_pos)
        self._pattern_cache[key] = entry
        return entry

    def tangent(self, kind, U, Udot, t, shift):
        """CSR matrix J with J @ dU ~ directional derivative of the residual
        under the coupled variation (dU, shift * dU)."""
        u = self._values(U)
        blocks = self._blocks(kind, u, t, shift)
        pat, positions, constrained, diag_pos = self._pattern(blocks.keys())

        space = self.space
        val, _, _, w2 = space.tables_2d
        data = np.zeros(pat.nnz)
        for bk, (c_mass, k_stiff) in blocks.items():
            if np.isscalar(c_mass) or np.ndim(c_mass) == 0:
                loc = float(c_mass) * space.local_mass
            else:
                loc = np.matmul(val.transpose(0, 2, 1),
                                val * (c_mass * w2[None, :])[:, :, None])
            if k_stiff:
                loc = loc + k_stiff * space.local_stiffness
            data += np.bincount(positions[bk], weights=loc.ravel(),
                                minlength=pat.nnz)

        data[constrained] = 0.0
        data[diag_pos] = 1.0
        out = sp.csr_matrix((data, pat.indices.copy(), pat.indptr.copy()),
                            shape=pat.shape)
        return out

    def rate_matrix(self, kind):
        """Block-diagonal d(residual)/d(udot): sign * mass, Dirichlet rows id."""
        sign = kind.rate_sign
        if sign in self._rate_cache:
            return self._rate_cache[sign]
        m = self.space.mass_matrix
        big = sp.block_diag([sign * m] * 3, format="lil")
        mask = np.flatnonzero(self.space.dirichlet_mask)
        for r in mask:
            big.rows[r] = [int(r)]
            big.data[r] = [1.0]
        out = big.tocsr()
        self._rate_cache[sign] = out
        return out

    def block_norms(self, residual):
        n_f = self.space.n_f
        return np.array([np.linalg.norm(residual[f * n_f:(f + 1) * n_f])
                         for f in range(3)])


def assemble_residual(assembler, kind, U, Udot, t=None):
    """StateTriple-level wrapper around Assembler.residual."""
    t = U.time if t is None else t
    return assembler.residual(kind, U.stack(), Udot.stack(), t)


def assemble_tangent(assembler, kind, U, Udot, t=None, shift=0.0):
    t = U.time if t is None else t
    return assembler.tangent(kind, U.stack(), Udot.stack(), t, shift)
