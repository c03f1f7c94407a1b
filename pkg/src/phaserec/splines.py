"""Tensor-product C1 quadratic B-spline spaces on a square patch.

The computational domain is the square [0, L] x [0, L] discretised by an
open uniform knot vector in each direction.  Scalar unknowns are expanded
as u(x) = sum_A c_A N_A(x) where the N_A are tensor products of univariate
B-splines and the coefficients c_A are the control variables.  Basis
indices are flattened row-major: A = ix * n1d + iy.

Zero-trace (homogeneous Dirichlet) constraints are imposed by zeroing the
control variables of the first/last basis function in each direction; with
open knots these are the only functions with a nonzero boundary value, so
the constrained span is exactly the zero-trace subspace.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SpaceMismatchError


def open_uniform_knots(n_elements, degree, length):
    """Open uniform knot vector on [0, length] with repeated end knots."""
    interior = np.linspace(0.0, length, n_elements + 1)
    return np.concatenate([
        np.full(degree, 0.0), interior, np.full(degree, length),
    ])


def gauss_legendre_01(n_points):
    """Gauss-Legendre nodes/weights mapped to the unit interval [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (x + 1.0), 0.5 * w


def _find_span(knots, degree, x):
    """Knot span index such that knots[s] <= x < knots[s+1], end-clamped."""
    n = len(knots) - degree - 1
    s = np.searchsorted(knots, x, side="right") - 1
    return np.clip(s, degree, n - 1)


def _basis_row(knots, degree, span, x):
    """Values of the degree+1 nonzero basis functions at x (Cox-de Boor).

    `span` and `x` are broadcastable arrays; returns shape x.shape+(degree+1,).
    Entry k is N_{span-degree+k, degree}(x).
    """
    x = np.asarray(x, dtype=float)
    vals = np.zeros(x.shape + (degree + 1,))
    left = np.zeros_like(vals)
    right = np.zeros_like(vals)
    vals[..., 0] = 1.0
    for j in range(1, degree + 1):
        left[..., j] = x - knots[span + 1 - j]
        right[..., j] = knots[span + j] - x
        saved = np.zeros(x.shape)
        for r in range(j):
            tmp = vals[..., r] / (right[..., r + 1] + left[..., j - r])
            vals[..., r] = saved + right[..., r + 1] * tmp
            saved = left[..., j - r] * tmp
        vals[..., j] = saved
    return vals


def _basis_row_derivs(knots, degree, span, x):
    """Values and first derivatives of the nonzero basis functions at x."""
    vals = _basis_row(knots, degree, span, x)
    low = _basis_row(knots, degree - 1, span, x)
    ders = np.zeros_like(vals)
    for k in range(degree + 1):
        term = np.zeros(np.shape(x))
        if k > 0:
            term = term + low[..., k - 1] / (knots[span + k] - knots[span - degree + k])
        if k < degree:
            term = term - low[..., k] / (knots[span + k + 1] - knots[span - degree + k + 1])
        ders[..., k] = degree * term
    return vals, ders


@dataclass(frozen=True)
class QuadratureRule:
    """Element-local Gauss rule, exact for degree <= 2n-1 per direction."""

    points_per_direction: int = 3

    def __post_init__(self):
        if self.points_per_direction < 1:
            raise ValueError("quadrature needs at least one point per direction")


class SplineSpace:
    """C1-continuous quadratic B-spline space on [0, L]^2.

    Heavy per-element tables (basis values at Gauss points, local mass and
    stiffness blocks) are built lazily and cached; the space is immutable
    after construction and safe to share read-only.
    """

    def __init__(self, elements_per_side, domain_side, degree=2,
                 quadrature=QuadratureRule()):
        if degree != 2:
            raise ValueError("only quadratic (degree 2) spaces are supported")
        if elements_per_side < 2:
            raise ValueError("need at least 2 elements per side")
        if domain_side <= 0:
            raise ValueError("domain side length must be positive")
        self.degree = degree
        self.elements_per_side = int(elements_per_side)
        self.domain_side = float(domain_side)
        self.quadrature = quadrature
        self.knots = open_uniform_knots(self.elements_per_side, degree,
                                        self.domain_side)
        self.n1d = self.elements_per_side + degree
        self.n_f = self.n1d ** 2
        self.h = self.domain_side / self.elements_per_side

        i = np.arange(self.n1d)
        edge = (i == 0) | (i == self.n1d - 1)
        self.dirichlet_mask = (edge[:, None] | edge[None, :]).ravel()

        self._cache = {}

    # -- lazy caches ------------------------------------------------------

    def _cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def gauss_1d(self):
        """(nodes (nel, q), basis values (nel, q, p+1), derivs, weights (q,)).

        Weights include the element Jacobian h/2 ... i.e. they integrate over
        one element directly.
        """
        def build():
            q = self.quadrature.points_per_direction
            xg, wg = gauss_legendre_01(q)
            lo = np.arange(self.elements_per_side) * self.h
            nodes = lo[:, None] + xg[None, :] * self.h
            spans = _find_span(self.knots, self.degree, nodes)
            vals, ders = _basis_row_derivs(self.knots, self.degree, spans, nodes)
            return nodes, vals, ders, wg * self.h
        return self._cached("gauss_1d", build)

    @property
    def elem_dofs(self):
        """Global basis indices of the (p+1)^2 local functions, (nel^2, nloc)."""
        def build():
            p = self.degree
            nel = self.elements_per_side
            ex, ey = np.meshgrid(np.arange(nel), np.arange(nel), indexing="ij")
            di, dj = np.meshgrid(np.arange(p + 1), np.arange(p + 1), indexing="ij")
            gi = ex.ravel()[:, None] + di.ravel()[None, :]
            gj = ey.ravel()[:, None] + dj.ravel()[None, :]
            return gi * self.n1d + gj
        return self._cached("elem_dofs", build)

    @property
    def tables_2d(self):
        """Per-element Gauss tables (val, dx, dy, w2).

        val/dx/dy have shape (nel^2, q^2, (p+1)^2); w2 is the (q^2,) weight
        vector shared by all elements (uniform mesh, identity geometry map).
        """
        def build():
            _, bv, bd, w1 = self.gauss_1d
            val = np.einsum("xgi,yhj->xyghij", bv, bv)
            dx = np.einsum("xgi,yhj->xyghij", bd, bv)
            dy = np.einsum("xgi,yhj->xyghij", bv, bd)
            nel = self.elements_per_side
            q = self.quadrature.points_per_direction
            nloc = (self.degree + 1) ** 2
            shape = (nel * nel, q * q, nloc)
            w2 = np.outer(w1, w1).ravel()
            return (np.ascontiguousarray(val.reshape(shape)),
                    np.ascontiguousarray(dx.reshape(shape)),
                    np.ascontiguousarray(dy.reshape(shape)),
                    w2)
        return self._cached("tables_2d", build)

    @property
    def local_mass(self):
        """Per-element mass blocks sum_g w N_i N_j, (nel^2, nloc, nloc)."""
        def build():
            val, _, _, w2 = self.tables_2d
            return np.matmul(val.transpose(0, 2, 1), val * w2[None, :, None])
        return self._cached("local_mass", build)

    @property
    def local_stiffness(self):
        """Per-element stiffness blocks sum_g w grad(N_i).grad(N_j)."""
        def build():
            _, dx, dy, w2 = self.tables_2d
            return (np.matmul(dx.transpose(0, 2, 1), dx * w2[None, :, None])
                    + np.matmul(dy.transpose(0, 2, 1), dy * w2[None, :, None]))
        return self._cached("local_stiffness", build)

    def _matrix_1d(self, deriv):
        _, bv, bd, w1 = self.gauss_1d
        tab = bd if deriv else bv
        nel, q, nn = tab.shape
        loc = np.einsum("egi,egj,g->eij", tab, tab, w1)
        rows = (np.arange(nel)[:, None, None] + np.arange(nn)[None, :, None])
        cols = (np.arange(nel)[:, None, None] + np.arange(nn)[None, None, :])
        rows, cols = np.broadcast_arrays(rows, cols)
        mat = sp.coo_matrix((loc.ravel(), (rows.ravel(), cols.ravel())),
                            shape=(self.n1d, self.n1d)).tocsr()
        mat.sum_duplicates()
        return mat

    @property
    def mass_matrix_1d(self):
        return self._cached("mass_1d", lambda: self._matrix_1d(False))

    @property
    def stiffness_matrix_1d(self):
        return self._cached("stiff_1d", lambda: self._matrix_1d(True))

    @property
    def mass_matrix(self):
        """Scalar-field Gram matrix, assembled as a Kronecker product."""
        def build():
            m1 = self.mass_matrix_1d
            return sp.kron(m1, m1, format="csr")
        return self._cached("mass_2d", build)

    @property
    def stiffness_matrix(self):
        def build():
            m1, k1 = self.mass_matrix_1d, self.stiffness_matrix_1d
            return (sp.kron(k1, m1) + sp.kron(m1, k1)).tocsr()
        return self._cached("stiff_2d", build)

    # -- evaluation -------------------------------------------------------

    def _check_inside(self, pts):
        if np.any(pts < -1e-12) or np.any(pts > self.domain_side * (1 + 1e-15) + 1e-12):
            raise DomainError("evaluation point outside [0, L]^2")

    def design_matrix_1d(self, x, deriv=False):
        """Sparse (len(x), n1d) matrix of basis values (or d/dx) at points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_inside(x)
        spans = _find_span(self.knots, self.degree, x)
        vals, ders = _basis_row_derivs(self.knots, self.degree, spans, x)
        tab = ders if deriv else vals
        p = self.degree
        rows = np.repeat(np.arange(x.size), p + 1)
        cols = (spans[:, None] - p + np.arange(p + 1)[None, :]).ravel()
        return sp.csr_matrix((tab.ravel(), (rows, cols)),
                             shape=(x.size, self.n1d))

    def evaluate_points(self, coeffs, points):
        """Field values at arbitrary points, shape (npts, 2) -> (npts,)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_inside(pts)
        sx = _find_span(self.knots, self.degree, pts[:, 0])
        sy = _find_span(self.knots, self.degree, pts[:, 1])
        bx = _basis_row(self.knots, self.degree, sx, pts[:, 0])
        by = _basis_row(self.knots, self.degree, sy, pts[:, 1])
        return self._combine(coeffs, sx, sy, bx, by)

    def evaluate_gradient_points(self, coeffs, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_inside(pts)
        sx = _find_span(self.knots, self.degree, pts[:, 0])
        sy = _find_span(self.knots, self.degree, pts[:, 1])
        bx, dx = _basis_row_derivs(self.knots, self.degree, sx, pts[:, 0])
        by, dy = _basis_row_derivs(self.knots, self.degree, sy, pts[:, 1])
        gx = self._combine(coeffs, sx, sy, dx, by)
        gy = self._combine(coeffs, sx, sy, bx, dy)
        return np.stack([gx, gy], axis=-1)

    def _combine(self, coeffs, sx, sy, bx, by):
        p = self.degree
        c = np.asarray(coeffs).reshape(self.n1d, self.n1d)
        ix = sx[:, None] - p + np.arange(p + 1)[None, :]
        iy = sy[:, None] - p + np.arange(p + 1)[None, :]
        local = c[ix[:, :, None], iy[:, None, :]]
        return np.einsum("nij,ni,nj->n", local, bx, by)

    def evaluate_grid(self, coeffs, x, y):
        """Field values on the tensor grid x (nx,) otimes y (ny,) -> (nx, ny)."""
        bx = self.design_matrix_1d(x)
        by = self.design_matrix_1d(y)
        c = np.asarray(coeffs).reshape(self.n1d, self.n1d)
        return bx @ c @ by.T


@dataclass
class Field:
    """One scalar unknown: a coefficient (control-variable) vector in a space."""

    space: SplineSpace
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_f,):
            raise ValueError(
                f"coefficient vector has length {self.coeffs.shape}, "
                f"space expects ({self.space.n_f},)")

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros(space.n_f))

    @classmethod
    def constant(cls, space, value):
        return cls(space, np.full(space.n_f, float(value)))

    def copy(self):
        return Field(self.space, self.coeffs.copy())


def evaluate(field, x):
    """Value of the spline expansion at a single point or (npts, 2) array."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    out = field.space.evaluate_points(field.coeffs, pts)
    return float(out[0]) if single else out


def evaluate_gradient(field, x):
    """Analytic gradient of the spline expansion at x."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    out = field.space.evaluate_gradient_points(field.coeffs, pts)
    return out[0] if single else out


def _solve_spd(mat, rhs, rtol=1e-12):
    """CG solve of an SPD system to a tight relative residual.

    Used for Gram (mass) systems only; raises if the 1e-10 projection
    accuracy contract cannot be met.
    """
    rhs = np.asarray(rhs, dtype=float)
    if not np.any(rhs):
        return np.zeros_like(rhs)
    diag = mat.diagonal()
    precon = spla.LinearOperator(mat.shape, matvec=lambda v: v / diag)
    x, info = spla.cg(mat, rhs, rtol=rtol, atol=0.0, M=precon, maxiter=2000)
    rel = np.linalg.norm(rhs - mat @ x) / np.linalg.norm(rhs)
    if rel > 1e-10:
        raise RuntimeError(f"mass system solve stalled at relative residual {rel:.2e}")
    return x


def l2_project(f, space, zero_trace=False):
    """L2 projection of a callable f(x, y) onto the space.

    f must accept numpy meshgrid arrays.  With zero_trace the minimisation
    runs over the Dirichlet-constrained subspace (boundary control variables
    pinned to zero).
    """
    nodes, bv, _, w1 = space.gauss_1d
    xg = nodes.ravel()
    fx = np.asarray(f(xg[:, None], xg[None, :]), dtype=float)
    if fx.shape != (xg.size, xg.size):
        fx = np.broadcast_to(fx, (xg.size, xg.size))
    wts = np.tile(w1, space.elements_per_side)
    bx = space.design_matrix_1d(xg)
    rhs = (bx.T @ (fx * np.outer(wts, wts)) @ bx).ravel()
    mass = space.mass_matrix
    if zero_trace:
        free = ~space.dirichlet_mask
        coeffs = np.zeros(space.n_f)
        m_ff = mass[free][:, free].tocsr()
        coeffs[free] = _solve_spd(m_ff, rhs[free])
    else:
        coeffs = _solve_spd(mass, rhs)
    return Field(space, coeffs)


def l2_inner_product(u, v):
    """Mass-matrix inner product int_Omega u v dx."""
    if u.space is not v.space:
        raise SpaceMismatchError("fields live in different spline spaces")
    return float(u.coeffs @ (u.space.mass_matrix @ v.coeffs))


def l2_norm(u):
    return float(np.sqrt(max(l2_inner_product(u, u), 0.0)))
