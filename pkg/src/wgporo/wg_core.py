"""Local weak Galerkin operators on one axis-aligned element.

The local vector space is the lowest-order Arbogast-Correa space (2D) or
Arbogast-Tao space (3D).  On an axis-aligned box the Piola map is a diagonal
scaling, so the curl-type generators are multiples of ``(X, -Y)`` and
``(0, Y, -Z)`` with ``X = x - x_E`` etc.  Weak gradients and the weak
divergence are obtained from small Gram solves; nothing is hard-coded.

Local scalar dof ordering is ``[interior, facet_0, ..., facet_{2d-1}]`` with
facets ordered ``(x-low, x-high, y-low, y-high, ...)``; vector dofs repeat
each scalar dof ``d`` times (component minor).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GAUSS_POINTS, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)


def tensor_gauss(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """3-point-per-axis Gauss rule on ``[-1, 1]^dim``."""
    grids = np.meshgrid(*([GAUSS_POINTS] * dim), indexing="ij")
    wgrids = np.meshgrid(*([GAUSS_WEIGHTS] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    return pts, wts


@dataclass(frozen=True)
class LocalBasis:
    dim: int
    h: float
    gram: np.ndarray

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    @property
    def volume(self) -> float:
        return self.h ** self.dim

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Basis values at centroid-relative points ``X`` (npts, dim) -> (npts, m, dim)."""
        return _basis_values(self.dim, self.h, np.atleast_2d(X))

    def divergence(self) -> np.ndarray:
        """Divergence of each basis vector (constant on the element)."""
        div = np.zeros(self.size)
        div[self.dim] = self.dim / self.h
        return div


def _basis_values(dim: int, h: float, X: np.ndarray) -> np.ndarray:
    npts = X.shape[0]
    m = 4 if dim == 2 else 6
    vals = np.zeros((npts, m, dim))
    for k in range(dim):
        vals[:, k, k] = 1.0
    # generators involving coordinates are scaled by 1/h so every Gram
    # entry is O(h^dim)
    vals[:, dim, :] = X / h
    if dim == 2:
        vals[:, 3, 0] = X[:, 0] / h
        vals[:, 3, 1] = -X[:, 1] / h
    else:
        vals[:, 4, 0] = X[:, 0] / h
        vals[:, 4, 1] = -X[:, 1] / h
        vals[:, 5, 1] = X[:, 1] / h
        vals[:, 5, 2] = -X[:, 2] / h
    return vals


def local_basis(h: float, dim: int) -> LocalBasis:
    if h <= 0:
        raise ValueError("element size must be positive")
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim!r}")
    ref, w = tensor_gauss(dim)
    X = 0.5 * h * ref
    jac = (0.5 * h) ** dim
    vals = _basis_values(dim, h, X)
    gram = np.einsum("q,qki,qli->kl", w * jac, vals, vals)
    return LocalBasis(dim, h, gram)


def facet_quadrature(dim: int, h: float, local_facet: int):
    """Gauss points (centroid-relative) and weights on a local facet."""
    axis, side = divmod(local_facet, 2)
    if dim == 2:
        ref = GAUSS_POINTS[:, None]
        w = GAUSS_WEIGHTS
    else:
        ref, w = tensor_gauss(2)
    others = [a for a in range(dim) if a != axis]
    X = np.zeros((w.size, dim))
    X[:, axis] = (0.5 * h) * (1 if side else -1)
    X[:, others] = 0.5 * h * ref
    return X, w * (0.5 * h) ** (dim - 1)


def _gradient_rhs(basis: LocalBasis) -> np.ndarray:
    """R with (R p)_k = <p_facet, w_k . n>_dE - (p_interior, div w_k)_E."""
    dim, h = basis.dim, basis.h
    nf = 2 * dim
    R = np.zeros((basis.size, 1 + nf))
    R[:, 0] = -basis.divergence() * basis.volume
    for f in range(nf):
        axis, side = divmod(f, 2)
        sign = 1.0 if side else -1.0
        X, w = facet_quadrature(dim, h, f)
        vals = basis.evaluate(X)
        R[:, 1 + f] = sign * np.einsum("q,qk->k", w, vals[:, :, axis])
    return R


def weak_gradient_scalar(basis: LocalBasis) -> np.ndarray:
    """(m, 1 + 2d) matrix mapping local scalar dofs to basis coefficients."""
    return np.linalg.solve(basis.gram, _gradient_rhs(basis))


def weak_gradient_vector(basis: LocalBasis) -> np.ndarray:
    """(d*m, d*(1 + 2d)) matrix; row block ``c`` holds the weak gradient of component ``c``.

    Output coefficients are ordered component major: ``c*m + k``.
    """
    Gs = weak_gradient_scalar(basis)
    d = basis.dim
    nloc = Gs.shape[1]
    Gv = np.zeros((d * basis.size, d * nloc))
    for c in range(d):
        Gv[c * basis.size:(c + 1) * basis.size, c::d] = Gs
    return Gv


def weak_divergence(basis: LocalBasis) -> np.ndarray:
    """Row mapping local vector dofs to the P0 weak divergence value."""
    d, h = basis.dim, basis.h
    nf = 2 * d
    row = np.zeros(d * (1 + nf))
    face = h ** (d - 1) / basis.volume
    for f in range(nf):
        axis, side = divmod(f, 2)
        row[d * (1 + f) + axis] = face * (1.0 if side else -1.0)
    return row


@dataclass(frozen=True)
class LocalWeakOps:
    basis: LocalBasis
    Gs: np.ndarray
    Gv: np.ndarray
    Dv: np.ndarray

    @property
    def scalar_stiffness(self) -> np.ndarray:
        """Local ``(grad_w p, grad_w q)_E``, symmetrized to the last bit."""
        K = self.Gs.T @ self.basis.gram @ self.Gs
        return 0.5 * (K + K.T)

    @property
    def vector_stiffness(self) -> np.ndarray:
        d = self.basis.dim
        G = np.kron(np.eye(d), self.basis.gram)
        K = self.Gv.T @ G @ self.Gv
        return 0.5 * (K + K.T)

    @property
    def divdiv(self) -> np.ndarray:
        """Local ``(div_w u, div_w v)_E``."""
        return self.basis.volume * np.outer(self.Dv, self.Dv)


@lru_cache(maxsize=None)
def local_weak_ops(h: float, dim: int) -> LocalWeakOps:
    basis = local_basis(h, dim)
    return LocalWeakOps(basis, weak_gradient_scalar(basis),
                        weak_gradient_vector(basis), weak_divergence(basis))
