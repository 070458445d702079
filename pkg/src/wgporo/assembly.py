"""Global WG matrices, right-hand sides, Dirichlet elimination and the scaled systems.

Notation follows the discrete Biot system

    [ mu A1 + (lam+mu) A0    alpha B^T ] [u]   [b1]
    [ alpha B                -D        ] [p] = [b2]

with ``B = [Bc; 0]`` (only interior pressure rows), ``A0 = Bc^T Mp^{-1} Bc``
and ``D = c0 [Mp 0; 0 0] + kappa dt Ap``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import DofMap, Mesh
from .problems import ProblemInstance, ProblemParams
from .sparsela import CsrMatrix
from .wg_core import GAUSS_POINTS, facet_quadrature, local_weak_ops, tensor_gauss


def _assemble(local: np.ndarray, dofs: np.ndarray, n: int) -> sp.csr_matrix:
    nel, nloc = dofs.shape
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    vals = np.tile(local.ravel(), nel)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


@dataclass
class FullOperators:
    """Matrices over the full numbering, kept for boundary lifting (scipy CSR)."""

    A1: sp.csr_matrix
    A0: sp.csr_matrix
    Bc: sp.csr_matrix
    Ap: sp.csr_matrix


@dataclass
class AssembledBlocks:
    mesh: Mesh
    dofs: DofMap
    params: ProblemParams
    A1: CsrMatrix
    Bc: CsrMatrix          # (n_elements, n_u) interior-pressure x displacement
    BcT: CsrMatrix
    Mp: np.ndarray         # diagonal of the interior pressure mass matrix
    Ap: CsrMatrix          # pressure weak Laplacian on free dofs
    D: CsrMatrix
    Dtt: CsrMatrix         # D + (alpha^2 eps / mu) [Mp 0; 0 0]
    A0_direct: CsrMatrix   # assembled from (div_w u, div_w v)
    full: FullOperators = field(repr=False)

    @property
    def n_u(self) -> int:
        return self.A1.shape[0]

    @property
    def n_p(self) -> int:
        return self.Ap.shape[0]

    @property
    def n_pi(self) -> int:
        return self.Mp.size

    @property
    def B(self) -> CsrMatrix:
        Bs = sp.vstack([self.Bc.to_scipy(),
                        sp.csr_matrix((self.n_p - self.n_pi, self.n_u))]).tocsr()
        return CsrMatrix.from_scipy(Bs)

    def apply_A0(self, u: np.ndarray) -> np.ndarray:
        return self.BcT.matvec(self.Bc.matvec(u) / self.Mp)

    def A0_identity(self) -> sp.csr_matrix:
        Bc = self.Bc.to_scipy()
        return (Bc.T @ sp.diags(1.0 / self.Mp) @ Bc).tocsr()

    def Ap_blocks(self):
        """``(Ap_oo, Ap_od, Ap_do, Ap_dd)`` split at the interior/facet boundary (scipy)."""
        A = self.Ap.to_scipy()
        k = self.n_pi
        return A[:k, :k], A[:k, k:], A[k:, :k], A[k:, k:]

    def mass_padded(self) -> np.ndarray:
        """Diagonal of ``[Mp 0; 0 0]`` over all free pressure dofs."""
        out = np.zeros(self.n_p)
        out[: self.n_pi] = self.Mp
        return out

    def get(self, tag: str) -> CsrMatrix:
        tags = {"A1": self.A1, "Bc": self.Bc, "B": self.B, "Ap": self.Ap, "D": self.D,
                "Dtt": self.Dtt, "A0": self.A0_direct,
                "Mp": CsrMatrix.from_scipy(sp.diags(self.Mp).tocsr())}
        if tag not in tags:
            raise KeyError(f"unknown block {tag!r}; expected one of {sorted(tags)}")
        return tags[tag]


def assemble_blocks(mesh: Mesh, dofs: DofMap, params: ProblemParams) -> AssembledBlocks:
    ops = local_weak_ops(mesh.h, mesh.dim)
    vol = mesh.element_volume
    nel = mesh.n_elements

    sl = dofs.scalar_local()
    vl = dofs.vector_local()
    Ap_full = _assemble(ops.scalar_stiffness, sl, dofs.n_scalar_full)
    A1_full = _assemble(ops.vector_stiffness, vl, dofs.n_vector_full)
    A0_full = _assemble(ops.divdiv, vl, dofs.n_vector_full)
    # q^T B u = -sum_E (div_w u, q)_E
    Bc_full = sp.coo_matrix(
        (np.tile(-vol * ops.Dv, nel), (np.repeat(np.arange(nel), vl.shape[1]), vl.ravel())),
        shape=(nel, dofs.n_vector_full)).tocsr()
    Bc_full.sum_duplicates()
    Bc_full.eliminate_zeros()

    fu = dofs.vector_free()
    fp = dofs.scalar_free()
    A1 = A1_full[fu][:, fu]
    A0 = A0_full[fu][:, fu]
    Bc = Bc_full[:, fu]
    Ap = Ap_full[fp][:, fp]
    Mp = np.full(nel, vol)

    blocks = AssembledBlocks(
        mesh=mesh, dofs=dofs, params=params,
        A1=CsrMatrix.from_scipy(A1), Bc=CsrMatrix.from_scipy(Bc),
        BcT=CsrMatrix.from_scipy(Bc.T.tocsr()), Mp=Mp, Ap=CsrMatrix.from_scipy(Ap),
        D=None, Dtt=None, A0_direct=CsrMatrix.from_scipy(A0),
        full=FullOperators(A1_full, A0_full, Bc_full, Ap_full))
    return with_params(blocks, params)


def with_params(blocks: AssembledBlocks, params: ProblemParams) -> AssembledBlocks:
    """Rebuild the parameter-dependent blocks ``D`` and ``Dtt``; geometry blocks are shared."""
    Ap = blocks.Ap.to_scipy()
    Mpad = sp.diags(blocks.mass_padded())
    D = params.c0 * Mpad + params.kappa * params.dt * Ap
    Dtt = D + (params.alpha**2 * params.eps / params.mu) * Mpad
    out = AssembledBlocks(**{**blocks.__dict__, "params": params,
                             "D": CsrMatrix.from_scipy(D), "Dtt": CsrMatrix.from_scipy(Dtt)})
    return out


# --------------------------------------------------------------------------- #
# right-hand sides and boundary data
# --------------------------------------------------------------------------- #
def element_integrals(mesh: Mesh, fn, t: float) -> np.ndarray:
    """3-point tensor Gauss integral of ``fn(*coords, t)`` over each element.

    Returns ``(n_elements,)`` for scalar fields or ``(n_elements, k)`` for
    vector fields.
    """
    ref, w = tensor_gauss(mesh.dim)
    h = mesh.h
    pts = mesh.centroids[:, None, :] + 0.5 * h * ref[None, :, :]
    vals = np.asarray(fn(*np.moveaxis(pts, -1, 0), t))
    wq = w * (0.5 * h) ** mesh.dim
    if vals.ndim == 2:
        return vals @ wq
    return np.moveaxis(vals @ wq, 0, -1)


def facet_averages(mesh: Mesh, fn, t: float, facets: np.ndarray) -> np.ndarray:
    """Facet means (3-point Gauss per axis) of ``fn`` on the given facets."""
    dim, h = mesh.dim, mesh.h
    if dim == 2:
        ref = GAUSS_POINTS[:, None]
        w = 0.5 * np.asarray(
            np.polynomial.legendre.leggauss(3)[1])
    else:
        ref, w = tensor_gauss(2)
        w = w / 4.0
    mids = mesh.facet_midpoints[facets]
    axes = mesh.facet_axis[facets]
    pts = np.repeat(mids[:, None, :], w.size, axis=1)
    for a in range(dim):
        sel = axes == a
        others = [b for b in range(dim) if b != a]
        for j, b in enumerate(others):
            pts[sel, :, b] += 0.5 * h * ref[None, :, j]
    vals = np.asarray(fn(*np.moveaxis(pts, -1, 0), t))
    if vals.ndim == 2:
        return vals @ w
    return np.moveaxis(vals @ w, 0, -1)


@dataclass
class State:
    """Full-numbering displacement and interior pressure from the previous step."""

    u: np.ndarray
    p_interior: np.ndarray

    @classmethod
    def zero(cls, dofs: DofMap) -> "State":
        return cls(np.zeros(dofs.n_vector_full), np.zeros(dofs.n_interior))


def assemble_rhs(mesh: Mesh, dofs: DofMap, problem: ProblemInstance,
                 params: ProblemParams, t: float, prev: Optional[State] = None,
                 blocks: Optional[AssembledBlocks] = None):
    """Full-numbering load vectors ``(b1, b2)`` before boundary elimination."""
    d = mesh.dim
    b1 = np.zeros(dofs.n_vector_full)
    b1[: d * mesh.n_elements] = element_integrals(mesh, problem.force, t).ravel()
    b2 = np.zeros(dofs.n_scalar_full)
    if problem.has_pressure:
        b2i = -params.dt * element_integrals(mesh, problem.source, t)
        if prev is not None:
            if blocks is None:
                raise ValueError("previous state requires assembled blocks")
            # -alpha (div_w u_prev, q) = alpha (Bc u_prev) . q
            b2i = (b2i + params.alpha * (blocks.full.Bc @ prev.u)
                   - params.c0 * blocks.Mp * prev.p_interior)
        b2[: mesh.n_elements] = b2i
    return b1, b2


@dataclass
class ReducedSystem:
    b1: np.ndarray             # free displacement dofs
    b2: np.ndarray             # free pressure dofs
    u_boundary: np.ndarray     # values on constrained displacement dofs
    p_boundary: np.ndarray

    def expand_u(self, dofs: DofMap, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(dofs.n_vector_full)
        u[dofs.vector_free()] = u_free
        u[dofs.vector_constrained()] = self.u_boundary
        return u


def dirichlet_values(dofs: DofMap, problem: ProblemInstance, t: float):
    m = dofs.mesh
    bf = np.flatnonzero(m.boundary)
    ub = facet_averages(m, problem.u_dirichlet, t, bf).ravel()
    pb = facet_averages(m, problem.p_dirichlet, t, bf)
    return ub, pb


def apply_dirichlet(blocks: AssembledBlocks, rhs, problem: ProblemInstance,
                    t: float) -> ReducedSystem:
    """Eliminate boundary-facet dofs; their facet-averaged data moves to the right-hand side."""
    dofs = blocks.dofs
    prm = blocks.params
    b1_full, b2_full = rhs
    fu, cu = dofs.vector_free(), dofs.vector_constrained()
    fp, cp = dofs.scalar_free(), dofs.scalar_constrained()
    ub, pb = dirichlet_values(dofs, problem, t)
    F = blocks.full
    b1 = b1_full[fu].copy()
    b2 = b2_full[fp].copy()
    if np.any(ub):
        K = prm.mu * F.A1 + (prm.lam + prm.mu) * F.A0
        b1 -= K[fu][:, cu] @ ub
        if problem.has_pressure:
            b2[: dofs.n_interior] -= prm.alpha * (F.Bc[:, cu] @ ub)
    if np.any(pb) and problem.has_pressure:
        # B^T has no facet-pressure columns, so p_D only enters through D
        b2 += prm.kappa * prm.dt * (F.Ap[fp][:, cp] @ pb)
    return ReducedSystem(b1, b2, ub, pb)


# --------------------------------------------------------------------------- #
# scaled two- and three-field systems
# --------------------------------------------------------------------------- #
@dataclass
class TwoFieldSystem:
    """``[eps A1 + A0, (a eps/mu) B^T; (a eps/mu) B, -(eps/mu) D]`` acting on ``(u, p)``."""

    blocks: AssembledBlocks

    @property
    def sizes(self):
        return self.blocks.n_u, self.blocks.n_p

    @property
    def shape(self):
        n = sum(self.sizes)
        return n, n

    def split(self, x):
        nu = self.blocks.n_u
        return x[:nu], x[nu:]

    def apply_leading(self, u):
        b = self.blocks
        return b.params.eps * b.A1.matvec(u) + b.apply_A0(u)

    def apply(self, x):
        b = self.blocks
        prm = b.params
        eps, mu, al = prm.eps, prm.mu, prm.alpha
        u, p = self.split(x)
        c = al * eps / mu
        top = self.apply_leading(u) + c * b.BcT.matvec(p[: b.n_pi])
        bot = -(eps / mu) * b.D.matvec(p)
        bot[: b.n_pi] += c * b.Bc.matvec(u)
        return np.concatenate([top, bot])

    __call__ = apply

    def rhs(self, b1, b2):
        prm = self.blocks.params
        return (prm.eps / prm.mu) * np.concatenate([b1, b2])


def build_two_field(blocks: AssembledBlocks, params: Optional[ProblemParams] = None) -> TwoFieldSystem:
    if params is not None and params != blocks.params:
        blocks = with_params(blocks, params)
    return TwoFieldSystem(blocks)


@dataclass
class ThreeFieldSystem:
    """Three-field operator on ``(u, (a/mu) p, w/eps - (a/mu) p_interior)``.

    Blocks::

        [ A1    0                 -Bc^T          ]
        [ 0     -(mu/a^2) Dtt     -eps [Mp; 0]   ]
        [ -Bc   -eps [Mp 0]       -eps Mp        ]
    """

    blocks: AssembledBlocks

    @property
    def sizes(self):
        b = self.blocks
        return b.n_u, b.n_p, b.n_pi

    @property
    def shape(self):
        n = sum(self.sizes)
        return n, n

    def split(self, x):
        nu, np_, _ = self.sizes
        return x[:nu], x[nu:nu + np_], x[nu + np_:]

    def apply(self, x):
        b = self.blocks
        prm = b.params
        eps = prm.eps
        u, q, z = self.split(x)
        k = b.n_pi
        r1 = b.A1.matvec(u) - b.BcT.matvec(z)
        r2 = -(prm.mu / prm.alpha**2) * b.Dtt.matvec(q)
        r2[:k] -= eps * b.Mp * z
        r3 = -b.Bc.matvec(u) - eps * b.Mp * q[:k] - eps * b.Mp * z
        return np.concatenate([r1, r2, r3])

    __call__ = apply

    def rhs(self, b1, b2):
        prm = self.blocks.params
        return np.concatenate([b1 / prm.mu, b2 / prm.alpha, np.zeros(self.blocks.n_pi)])

    def to_two_field(self, x):
        """Recover ``(u, p)`` from a three-field vector."""
        prm = self.blocks.params
        u, q, _ = self.split(x)
        return u, (prm.mu / prm.alpha) * q

    def from_two_field(self, u, p):
        b = self.blocks
        prm = b.params
        w = -b.Bc.matvec(u) / b.Mp
        q = (prm.alpha / prm.mu) * p
        return np.concatenate([u, q, w / prm.eps - q[: b.n_pi]])


def build_three_field(blocks: AssembledBlocks, params: Optional[ProblemParams] = None) -> ThreeFieldSystem:
    if params is not None and params != blocks.params:
        blocks = with_params(blocks, params)
    return ThreeFieldSystem(blocks)
