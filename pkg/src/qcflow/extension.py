"""The good extension of a quasiconformal boundary map.

For f fixing infinity the extension sends (x, s) to the Gaussian average
of f at scale s, with vertical part s sqrt(avg energy / (n-1)):

    ( int f(x + s y) phi(y) dy ,
      s/sqrt(n-1) * sqrt( int e(f)(x + s y) phi(y) dy ) )

with phi the standard Gaussian on R^{n-1}.  Extensions anchored at a
finite boundary point are obtained by conjugating with an isometry that
carries the anchor to infinity; partial conformal naturality makes the
result independent of that choice.
"""

import numpy as np

from . import boundary as bd
from . import tension as tn
from .geometry import (
    INFINITY,
    Mobius,
    boundary_antipode,
    dist,
    general_isometry,
    is_infinity,
)

__all__ = [
    "QuadratureRule",
    "GoodExtension",
    "good_extension_infty",
    "good_extension_at",
    "anchoring_isometry",
    "check_partial_conformal_naturality",
    "quasi_isometry_constants",
    "tension_sup_estimate",
]

DEFAULT_ORDER = 21
CHUNK = 4096         # points per plain-evaluation chunk
TENSION_CHUNK = 512  # tension stencils carry a (stencil x node) grid per point
DEEP_HEIGHT = 1e-4   # below this, tension uses the local-model evaluation
DEEP_GUARD = 2e-3    # keep the local model away from catalog singular points
TENSION_ENERGY_STEP = 3e-4  # energy-derivative step inside tension stencils:
# the 1e-5 step of the boundary module, divided by the squared tension step,
# leaves ~1e-3 of rounding noise in |tau|, drowning the harmonicity of
# linear-map extensions; 3e-4 trades invisible truncation for a ~30x lower floor


class QuadratureRule:
    """Tensor-product Gauss-Hermite rule for the weight (2pi)^{-m/2} e^{-|y|^2/2}.

    Normalised so the constant 1 integrates to 1; odd monomials and
    off-diagonal second moments integrate to 0 by symmetry of the nodes.
    """

    def __init__(self, dim, order=DEFAULT_ORDER):
        t, w = np.polynomial.hermite.hermgauss(order)
        # substitute y = sqrt(2) t so that sum w_i f(y_i)/sqrt(pi) = E[f(Y)]
        y1 = np.sqrt(2.0) * t
        w1 = w / np.sqrt(np.pi)
        grids = np.meshgrid(*([y1] * dim), indexing="ij")
        self.nodes = np.stack([g.ravel() for g in grids], axis=-1)  # (Q, dim)
        wgrids = np.meshgrid(*([w1] * dim), indexing="ij")
        self.weights = np.prod(np.stack([g.ravel() for g in wgrids]), axis=0)
        self.dim = dim
        self.order = order

    def integrate(self, vals):
        """Integrate values sampled at the nodes; vals has shape (..., Q[, m])."""
        vals = np.asarray(vals)
        if vals.ndim >= 2 and vals.shape[-1] != self.weights.shape[0]:
            return np.einsum("...qm,q->...m", vals, self.weights)
        return vals @ self.weights


def _chunked(n_pts, size=CHUNK):
    for start in range(0, n_pts, size):
        yield slice(start, min(start + size, n_pts))


class GoodExtension:
    """Good extension of a boundary map, anchored at a boundary point.

    Callable on coordinate arrays (..., n) -> (..., n).  When the anchor
    is a finite point a, evaluation routes through the canonical isometry
    M with M(a) = infinity: M^{-1} o G_infinity(M f M^{-1}) o M.
    """

    def __init__(self, f, anchor=INFINITY, order=DEFAULT_ORDER):
        self.f = f
        self.anchor = anchor
        self.order = order
        self.n = f.dim + 1
        self.quad = QuadratureRule(f.dim, order)
        if is_infinity(anchor):
            if not f.fixes_infinity:
                raise ValueError("anchor is infinity but f does not fix infinity")
            self.mob = None
            self.f_inf = f
        else:
            a = np.asarray(anchor, dtype=float)
            if np.max(np.abs(f(a) - a)) > 1e-8 * max(1.0, float(np.max(np.abs(a)))):
                raise ValueError("f does not fix the requested anchor")
            self.mob = anchoring_isometry(anchor, self.n)
            # M f M^{-1} fixes M(anchor) = infinity by construction
            self.f_inf = bd.conjugate_boundary(f, self.mob, self.mob, fixed_point=INFINITY)
        self.name = f"G[{f.name}]@{anchor!r}"

    # -- plain evaluation ---------------------------------------------------

    def _eval_inf(self, pts, recentre=None):
        """G_infinity(f_inf) on (..., n) arrays; optional recentring offset."""
        pts = np.asarray(pts, dtype=float)
        f = self.f_inf
        y = self.quad.nodes
        w = self.quad.weights
        x = pts[..., :-1]
        s = pts[..., -1]
        args = x[..., None, :] + s[..., None, None] * y  # (..., Q, m)
        fv = f(args)
        if recentre is not None:
            fv = fv - recentre[..., None, :]
        horiz = np.einsum("...qm,q->...m", fv, w)
        e = bd.boundary_energy_density(f, args)          # (..., Q)
        avg_e = e @ w
        vert = s * np.sqrt(avg_e / (self.n - 1))
        return np.concatenate([horiz, vert[..., None]], axis=-1)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.mob is None:
            return self._eval_chunked(pts)
        inner = self.mob.apply(pts)
        out = self._eval_chunked(inner)
        return self.mob.inverse().apply(out)

    def _eval_chunked(self, pts):
        flat = pts.reshape(-1, pts.shape[-1])
        out = np.empty_like(flat)
        for sl in _chunked(flat.shape[0]):
            out[sl] = self._eval_inf(flat[sl])
        return out.reshape(pts.shape)

    # -- conjugation-stabilised tension --------------------------------------

    def tension_norm(self, pts):
        """|tau| at pts, stable arbitrarily close to the boundary.

        Conjugates each base point to (0, 1) with similarities on both
        sides (tension is isometry invariant), so the finite-difference
        stencil and the Gaussian averages are evaluated at unit scale.
        """
        return self.tension_vector(pts)[1]

    def tension_vector(self, pts):
        """(tau, |tau|) with |tau| in the target metric.

        For finite anchors the vector components live in the conjugated
        (infinity-anchored) frame at the mapped points; the norms are
        anchor-invariant, which is all downstream consumers use.
        """
        pts = np.asarray(pts, dtype=float)
        flat = np.atleast_2d(pts.reshape(-1, pts.shape[-1]))
        if self.mob is not None:
            flat = self.mob.apply(flat)
        taus = np.empty(flat.shape)
        norms = np.empty(flat.shape[0])
        for sl in _chunked(flat.shape[0], TENSION_CHUNK):
            taus[sl], norms[sl] = self._tension_conjugated(flat[sl])
        shape = pts.shape[:-1]
        return taus.reshape(shape + (flat.shape[-1],)), norms.reshape(shape)

    def _stencil_geometry(self):
        """Stencil around (0, 1) and the (stencil, node) argument grid eta."""
        n = self.n
        h = tn.FD_REL_STEP
        q = np.zeros((2 * n + 1, n))
        q[:, -1] = 1.0
        for i in range(n):
            q[1 + 2 * i, i] += h
            q[2 + 2 * i, i] -= h
        qx = q[:, :-1]
        qs = q[:, -1]
        # eta[p, k, :] = qx_p + qs_p * y_k, the scaled quadrature arguments
        eta = qx[:, None, :] + qs[:, None, None] * self.quad.nodes[None, :, :]
        return q, qx, qs, eta, h

    def _stencil_vals_direct(self, x0, s0, y0, S0, qs, eta):
        """Conjugated stencil values with f evaluated at physical points."""
        f = self.f_inf
        m = self.n - 1
        w = self.quad.weights
        args = x0[:, None, None, :] + s0[:, None, None, None] * eta[None, :, :, :]
        fv = f(args) - y0[:, None, None, :]            # recentre before summing
        horiz = np.einsum("bpqm,q->bpm", fv, w) / S0[:, None, None]
        e = bd.boundary_energy_density(f, args, h_rel=TENSION_ENERGY_STEP)
        avg_e = np.einsum("bpq,q->bp", e, w)
        vert = qs[None, :] * (s0 / S0)[:, None] * np.sqrt(avg_e / m)
        return np.concatenate([horiz, vert[:, :, None]], axis=-1)

    def _stencil_vals_deep(self, x0, s0, y0, S0, qs, eta):
        """Conjugated stencil values from a local quadratic model of f.

        Below DEEP_HEIGHT the quadrature window has radius ~9 s, far under
        the float64 resolution of f's outputs; evaluating the fitted
        2-jet of f in scaled coordinates removes that rounding wall (the
        model error is a smooth O(s^2 |D^3 f|) perturbation).
        """
        f = self.f_inf
        m = self.n - 1
        B = x0.shape[0]
        P = eta.shape[0]
        w = self.quad.weights
        yf = f(x0)
        A = bd.boundary_jacobian(f, x0)                # (B, m, m)
        Qt = bd.boundary_hessian(f, x0)                # (B, m, m, m)

        e2 = eta.reshape(-1, m)                        # (P*Q, m)
        lin = np.matmul(e2[None, :, :], np.swapaxes(A, -1, -2))      # (B, PQ, m)
        # Q[., eta] as a PQ-batch of m x m matrices contracted with eta
        Qe = np.matmul(e2[None, :, :], Qt.reshape(B, m * m, m).swapaxes(-1, -2))
        Qe = Qe.reshape(B, -1, m, m)                   # (B, PQ, m, m) = Q[i, j, eta]
        quad_term = 0.5 * np.einsum("bpij,pj->bpi", Qe, e2)
        base_shift = (yf - y0) / S0[:, None]
        scale = (s0 / S0)[:, None, None]
        fv = base_shift[:, None, :] + scale * (lin + s0[:, None, None] * quad_term)
        horiz = np.einsum("bpqm,q->bpm", fv.reshape(B, P, -1, m), w)
        # model Jacobian Df(x0 + s eta) = A + s Q[., eta]; energy is its
        # squared Frobenius norm, no finite differences needed
        Jmod = A[:, None, :, :] + s0[:, None, None, None] * Qe
        e = np.sum(Jmod**2, axis=(-2, -1)).reshape(B, P, -1)
        avg_e = np.einsum("bpq,q->bp", e, w)
        vert = qs[None, :] * (s0 / S0)[:, None] * np.sqrt(avg_e / m)
        return np.concatenate([horiz, vert[:, :, None]], axis=-1)

    def _tension_conjugated(self, pts):
        """Tension of G_infinity(f_inf) at pts via per-point conjugation."""
        B = pts.shape[0]
        x0 = pts[:, :-1]
        s0 = pts[:, -1]
        base = self._eval_inf(pts)
        y0 = base[:, :-1]
        S0 = base[:, -1]

        q, qx, qs, eta, h = self._stencil_geometry()
        deep = s0 < DEEP_HEIGHT
        for sp in self.f_inf.singular_points:
            d_sing = np.linalg.norm(x0 - np.asarray(sp, dtype=float), axis=-1)
            deep &= d_sing > np.maximum(30.0 * s0, DEEP_GUARD)
        vals = np.empty((B, q.shape[0], self.n))
        if np.any(~deep):
            idx = ~deep
            vals[idx] = self._stencil_vals_direct(
                x0[idx], s0[idx], y0[idx], S0[idx], qs, eta
            )
        if np.any(deep):
            vals[deep] = self._stencil_vals_deep(
                x0[deep], s0[deep], y0[deep], S0[deep], qs, eta
            )

        val = vals[:, 0, :]
        plus = vals[:, 1::2, :]                        # (B, n, n): F(q + h e_i)
        minus = vals[:, 2::2, :]
        jac = np.swapaxes((plus - minus) / (2.0 * h), -1, -2)
        lap = np.swapaxes((plus - 2.0 * val[:, None, :] + minus) / h**2, -1, -2)
        return tn.tension_from_jet(val, jac, lap, np.ones(B))


def good_extension_infty(f, p, order=DEFAULT_ORDER):
    """Evaluate the infinity-anchored good extension of f at p."""
    ext = GoodExtension(f, INFINITY, order)
    pc = np.asarray(p.coords if hasattr(p, "coords") else p, dtype=float)
    return ext(pc)


def anchoring_isometry(a, n=3):
    """Canonical isometry sending the boundary point a to infinity.

    Determined by carrying (a, antipode(a), reference) to (infinity, 0, e1),
    where the reference point is the stereographic image of a sphere point
    orthogonal to the lift of a.
    """
    if is_infinity(a):
        return Mobius.identity(n)
    a = np.asarray(a, dtype=float)
    xi = _lift_to_sphere(a)
    # unit vector orthogonal to xi, picked stably among the coordinate axes
    k = int(np.argmin(np.abs(xi)))
    ek = np.zeros(n)
    ek[k] = 1.0
    v = ek - (ek @ xi) * xi
    v = v / np.linalg.norm(v)
    third = _project_to_boundary(v)
    return general_isometry(
        [a, boundary_antipode(a, n), third],
        [INFINITY, np.zeros(n - 1), _e1(n - 1)],
        n,
    )


def _e1(m):
    e = np.zeros(m)
    e[0] = 1.0
    return e


def _lift_to_sphere(x):
    """Inverse stereographic projection R^{n-1} -> S^{n-1} (north pole = infinity)."""
    nn = float(np.sum(x**2))
    return np.concatenate([2.0 * x, [nn - 1.0]]) / (nn + 1.0)


def _project_to_boundary(xi):
    """Stereographic projection; the north pole goes to INFINITY."""
    if xi[-1] > 1.0 - 1e-14:
        return INFINITY
    return xi[:-1] / (1.0 - xi[-1])


def good_extension_at(a, f, p, order=DEFAULT_ORDER):
    """Evaluate the extension anchored at a (must be fixed by f) at p."""
    ext = GoodExtension(f, a, order)
    pc = np.asarray(p.coords if hasattr(p, "coords") else p, dtype=float)
    return ext(pc)


def check_partial_conformal_naturality(f, I, J, a, b, pts, order=DEFAULT_ORDER):
    """Max deviation of I o G_b(f) o J^{-1} from G_a(I o f o J^{-1}) over pts.

    Requires I(b) = J(b) = a for the anchors involved; returns the max
    hyperbolic distance between the two sides.
    """
    for iso in (I, J):
        img = iso.boundary(b)
        if is_infinity(img) != is_infinity(a):
            raise ValueError("isometry does not map anchor b to anchor a")
        if not is_infinity(a) and np.max(np.abs(np.asarray(img) - np.asarray(a))) > 1e-9:
            raise ValueError("isometry does not map anchor b to anchor a")

    ext_b = GoodExtension(f, b, order)
    f_conj = bd.conjugate_boundary(f, I, J, fixed_point=a)
    ext_a = GoodExtension(f_conj, a, order)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lhs = I.apply(ext_b(J.inverse().apply(pts)))
    rhs = ext_a(pts)
    return float(np.max(dist(lhs, rhs)))


def quasi_isometry_constants(F, pairs, a_grid=None):
    """Smallest empirical (L, A) on sampled pairs.

    Scans additive constants on a grid and, for each, takes the least
    multiplicative constant satisfying both quasi-isometry inequalities on
    every pair; returns the (L, A) with minimal L, breaking ties toward
    small A.  This is a lower bound on the true constants.
    """
    if a_grid is None:
        a_grid = np.linspace(0.0, 2.0, 41)
    p, q = pairs
    d_dom = dist(p, q)
    d_img = dist(F(p), F(q))
    keep = d_dom > 1e-9
    d_dom, d_img = d_dom[keep], d_img[keep]
    best = None
    for A in a_grid:
        with np.errstate(divide="ignore"):
            L_upper = np.max((d_dom - A) / d_img) if np.all(d_img > 0) else np.inf
            L_lower = np.max(d_img / (d_dom + A))
        L = max(1.0, L_upper, L_lower)
        if best is None or L < best[0] - 1e-12:
            best = (float(L), float(A))
    return best


def tension_sup_estimate(F, sampler, n_samples, seed=0):
    """Max |tau(F)| over sampled points; nondecreasing in n_samples.

    sampler(rng, k) must return k points (k, n) and be prefix-stable for
    a fixed seed so that larger sample counts extend smaller ones.
    """
    rng = np.random.default_rng(seed)
    pts = sampler(rng, n_samples)
    return float(np.max(tn.tension_norm(F, pts)))
