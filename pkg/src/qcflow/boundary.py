"""Quasiconformal boundary maps of R^{n-1} u {infinity} and their measurements.

A BoundaryMap wraps a vectorised evaluator together with its declared
fixed point and a claimed distortion bound.  Energy density and
distortion are measured by central finite differences of the evaluator.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import INFINITY, is_infinity

__all__ = [
    "BoundaryMap",
    "boundary_energy_density",
    "boundary_jacobian",
    "distortion_estimate",
    "conjugate_boundary",
    "make_boundary_map",
    "CATALOG",
]

FD_REL_STEP = 1e-5  # h_fd = 1e-5 * max(1, |x|), central differences
ORIGIN_NUDGE = 1e-8


@dataclass
class BoundaryMap:
    """Evaluable boundary map with declared fixed point and distortion bound.

    evaluator acts on arrays of shape (..., n-1) and is vectorised.
    singular_points lists finite boundary points where the map fails to be
    smooth (local models must keep away from them).
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    fixed_point: object  # array or INFINITY
    declared_K: float = 1.0
    name: str = ""
    dim: int = 2  # boundary dimension n-1
    singular_points: tuple = ()

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    @property
    def fixes_infinity(self):
        return is_infinity(self.fixed_point)

    def check_fixed_point(self, tol=1e-10):
        if self.fixes_infinity:
            return True
        fp = np.asarray(self.fixed_point, dtype=float)
        return np.max(np.abs(self(fp) - fp)) <= tol * max(1.0, np.max(np.abs(fp)))


def _fd_steps(x, h_rel):
    return h_rel * np.maximum(1.0, np.linalg.norm(x, axis=-1))


def boundary_jacobian(f, x, h_rel=FD_REL_STEP):
    """Finite-difference Jacobian of f at x, shape (..., m, m).

    Points within ORIGIN_NUDGE of the origin are nudged off it; catalog
    maps may be non-differentiable there (measure zero).
    """
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    x = np.where((r < ORIGIN_NUDGE)[..., None], x + ORIGIN_NUDGE, x)
    h = _fd_steps(x, h_rel)
    J = np.empty(x.shape[:-1] + (m, m))
    for j in range(m):
        dx = np.zeros(m)
        dx[j] = 1.0
        step = h[..., None] * dx
        J[..., :, j] = (f(x + step) - f(x - step)) / (2.0 * h[..., None])
    return J


def boundary_hessian(f, x, h_rel=1.2e-4):
    """Finite-difference second-derivative tensor of f at x.

    Returns H with H[..., i, j, k] = d^2 f_i / dx_j dx_k, symmetric in
    (j, k).  Used to build local quadratic models of the boundary map.
    """
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    h = h_rel * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    f0 = f(x)
    H = np.empty(x.shape[:-1] + (m, m, m))
    for j in range(m):
        ej = np.zeros(m)
        ej[j] = 1.0
        sj = h[..., None] * ej
        H[..., :, j, j] = (f(x + sj) - 2.0 * f0 + f(x - sj)) / (h**2)[..., None]
        for k in range(j + 1, m):
            ek = np.zeros(m)
            ek[k] = 1.0
            sk = h[..., None] * ek
            mixed = (
                f(x + sj + sk) - f(x + sj - sk) - f(x - sj + sk) + f(x - sj - sk)
            ) / (4.0 * h**2)[..., None]
            H[..., :, j, k] = mixed
            H[..., :, k, j] = mixed
    return H


def boundary_energy_density(f, x, h_rel=FD_REL_STEP):
    """Squared Frobenius norm of the Jacobian of f at x.

    Normalised so the identity has energy n-1; non-finite differences are
    returned as nan for the caller to flag.
    """
    J = boundary_jacobian(f, x, h_rel)
    return np.sum(J**2, axis=(-2, -1))


def distortion_estimate(f, x):
    """Ratio of extreme singular values of the Jacobian of f at x.

    Equals the displacement-ratio distortion for differentiable f.  A
    singular Jacobian gives inf.
    """
    J = boundary_jacobian(f, x)
    sv = np.linalg.svd(J, compute_uv=False)
    smin = sv[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(smin > 0.0, sv[..., 0] / np.where(smin > 0, smin, 1.0), np.inf)
    return K


def conjugate_boundary(f, I, J, fixed_point=None):
    """Boundary map I o f o J^{-1} for isometries I, J (boundary traces).

    Distortion is unchanged since isometries act conformally on the
    boundary.  The conjugate fixes I(b) for every fixed point b of f with
    I(b) = J(b); pass fixed_point to select which one to record when f
    fixes several (e.g. the radial stretch fixes both 0 and infinity).
    """
    Jinv = J.inverse()

    def ev(x):
        return I.boundary_array(f(Jinv.boundary_array(x)))

    fp = I.boundary(f.fixed_point) if fixed_point is None else fixed_point
    sing = []
    for s in f.singular_points:
        img = J.boundary(np.asarray(s, dtype=float))
        if not is_infinity(img):
            sing.append(np.asarray(img, dtype=float))
    pole = J.boundary(INFINITY)  # J^{-1} blows up there
    if not is_infinity(pole):
        sing.append(np.asarray(pole, dtype=float))
    return BoundaryMap(
        ev, fp, declared_K=f.declared_K, name=f"conj({f.name})", dim=f.dim,
        singular_points=tuple(sing),
    )


# ---------------------------------------------------------------------------
# catalog

def _identity(dim):
    return BoundaryMap(lambda x: np.array(x, copy=True), INFINITY, 1.0, "identity", dim)


def _linear(matrix):
    A = np.asarray(matrix, dtype=float)
    sv = np.linalg.svd(A, compute_uv=False)
    K = sv[0] / sv[-1]
    return BoundaryMap(
        lambda x: x @ A.T, INFINITY, float(K), "linear", A.shape[0]
    )


def _radial_stretch(K, dim):
    """f(x) = |x|^{K-1} x; fixes 0 and infinity, distortion K."""
    expo = K - 1.0

    def ev(x):
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(r > 0.0, r**expo, 0.0)
        return fac * x

    return BoundaryMap(
        ev, INFINITY, float(K), f"radial_stretch[{K}]", dim,
        singular_points=(np.zeros(dim),),
    )


def _shear(c, dim):
    """(x1 + c tanh(x2), x2, ...): smooth bounded shear fixing infinity."""

    def ev(x):
        out = np.array(x, copy=True)
        out[..., 0] = out[..., 0] + c * np.tanh(x[..., 1])
        return out

    q = abs(c)  # sup |g'| = 1
    K = ((q + np.sqrt(4.0 + q * q)) / 2.0) ** 2
    return BoundaryMap(ev, INFINITY, float(K), f"shear[{c}]", dim)


def make_boundary_map(name, dim=2, **params):
    """Catalog constructor addressable by name, e.g. from CLI config."""
    if name == "identity":
        return _identity(dim)
    if name == "linear":
        return _linear(params["matrix"])
    if name == "radial_stretch":
        return _radial_stretch(float(params.get("K", 1.5)), dim)
    if name == "shear":
        return _shear(float(params.get("c", 0.5)), dim)
    raise KeyError(f"unknown boundary map {name!r}")


CATALOG = ("identity", "linear", "radial_stretch", "shear")
