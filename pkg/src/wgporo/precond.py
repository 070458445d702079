"""Block upper triangular Schur complement preconditioners and solve drivers.

Every preconditioner here is an instance of the generic form

    P = [ A   Bt ]        P^{-1} r:  y2 = -Shat^{-1} r2
        [ 0  -Shat ]                 y1 =  A^{-1} (r1 - Bt y2)

with different choices of the leading-block solve and of ``Shat``.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .assembly import AssembledBlocks, ThreeFieldSystem, TwoFieldSystem
from .sparsela import (CsrMatrix, IcFactor, KrylovResult, SolverConfig, _as_operator,
                       gmres, ichol_with_shift, pcg)

DROPTOL = 1e-3
INNER_TOL = 1e-10
PRECOND_TAGS = ("p2", "p2dlu", "p2e", "p3", "p3dlu")

# 2D: preconditioned-residual stopping with a true-residual safeguard at 10 tol.
# 3D: preconditioned residual measured against ||b||.
PROFILE_2D = SolverConfig(tol=1e-6, restart=30, residual="preconditioned", true_cap=1e-5)
PROFILE_3D = SolverConfig(tol=1e-3, restart=28, residual="preconditioned_rhs")


def profile_for(dim: int) -> SolverConfig:
    return PROFILE_3D if dim == 3 else PROFILE_2D


class PreconditionerFailure(RuntimeError):
    pass


@dataclass
class InnerStats:
    calls: int = 0
    iterations: int = 0
    failures: int = 0
    tol: float = INNER_TOL

    def record(self, res: KrylovResult):
        self.calls += 1
        self.iterations += res.iterations
        if not res.converged:
            self.failures += 1


def _stats_of(solve) -> InnerStats:
    # plain callables (e.g. exact dense solves) carry no statistics
    return getattr(solve, "stats", None) or InnerStats(tol=0.0)


class PcgSolve:
    """Approximate ``A^{-1}`` by IC(droptol)-preconditioned CG to a fixed tolerance."""

    def __init__(self, A: CsrMatrix, tol: float = INNER_TOL, droptol: float = DROPTOL,
                 factor: Optional[IcFactor] = None, maxiter: int = 5000):
        self.A = A
        self.factor = factor if factor is not None else ichol_with_shift(A, droptol)
        self.config = SolverConfig(tol=tol, maxiter=maxiter)
        self.stats = InnerStats(tol=tol)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        res = pcg(self.A, self.factor, r, self.config)
        self.stats.record(res)
        return res.x


class BlockTriangularPrecond:
    """Apply ``[A Bt; 0 -Shat]^{-1}`` by back-substitution."""

    def __init__(self, apply_Ainv: Callable, Bt, apply_Shatinv: Callable, n1: int):
        self.apply_Ainv = apply_Ainv
        self.Bt = _as_operator(Bt)
        self.apply_Shatinv = apply_Shatinv
        self.n1 = n1

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r1, r2 = r[: self.n1], r[self.n1:]
        y2 = -self.apply_Shatinv(r2)
        y1 = self.apply_Ainv(r1 - self.Bt(y2))
        return np.concatenate([y1, y2])


def make_block_triangular(apply_Ainv, Bt, apply_Shatinv, n1: int) -> BlockTriangularPrecond:
    return BlockTriangularPrecond(apply_Ainv, Bt, apply_Shatinv, n1)


@dataclass
class SolveReport:
    precond: str
    dim: int
    n: int
    lam: float
    mu: float
    eps: float
    c0: float
    dt: float
    kappa: float
    iterations: int
    converged: bool
    relres: float
    restarts: int = 0
    inner: dict = field(default_factory=dict)
    wall_ms: float = 0.0
    note: str = ""

    def as_row(self) -> dict:
        return asdict(self)


def _relres(op, x, rhs) -> float:
    bn = np.linalg.norm(rhs)
    return float(np.linalg.norm(rhs - op(x)) / bn) if bn > 0 else 0.0


def _report(tag, blocks: AssembledBlocks, res: KrylovResult, relres, inner, t0, note=""):
    prm = blocks.params
    return SolveReport(
        precond=tag, dim=blocks.mesh.dim, n=blocks.mesh.n, lam=prm.lam, mu=prm.mu,
        eps=prm.eps, c0=prm.c0, dt=prm.dt, kappa=prm.kappa, iterations=res.iterations,
        converged=bool(res.converged), relres=float(relres),
        restarts=res.restarts,
        inner={k: asdict(v) for k, v in inner.items()},
        wall_ms=1e3 * (time.perf_counter() - t0),
        note=";".join(x for x in (note, "safeguarded" if res.safeguarded else "") if x))


# --------------------------------------------------------------------------- #
# elasticity: (eps A1 + A0) u = b  <=>  A2e [eps u; w] = [b; 0]
# --------------------------------------------------------------------------- #
class ElasticitySaddle:
    """``[A1, -Bc^T; -Bc, -eps Mp]`` acting on ``(eps u, w)``."""

    def __init__(self, blocks: AssembledBlocks):
        self.blocks = blocks

    @property
    def shape(self):
        n = self.blocks.n_u + self.blocks.n_pi
        return n, n

    def __call__(self, x):
        b = self.blocks
        v, w = x[: b.n_u], x[b.n_u:]
        return np.concatenate([b.A1.matvec(v) - b.BcT.matvec(w),
                               -b.Bc.matvec(v) - b.params.eps * b.Mp * w])


def p2e_precond(blocks: AssembledBlocks, A1_solve: Optional[PcgSolve] = None):
    """``[A1, -Bc^T; 0, -Mp]^{-1}``; the A1 solve is PCG+IC to 1e-10."""
    A1_solve = A1_solve if A1_solve is not None else PcgSolve(blocks.A1)
    Mp = blocks.Mp
    BtT = blocks.BcT
    P = make_block_triangular(A1_solve, lambda y: -BtT.matvec(y), lambda r: r / Mp,
                              blocks.n_u)
    P.inner = {"A1": _stats_of(A1_solve)}
    P.A1_solve = A1_solve
    return P


class ElasticitySolver:
    """Solve ``(eps A1 + A0) u = b`` through the saddle reformulation with P2e.

    Residual control is on the saddle system.  Mapping back to ``u`` divides by
    ``eps``, so a saddle residual of size ``tol`` can leave a reduced residual
    of order ``tol / eps``; ``refine`` extra correction passes on the reduced
    residual recover full accuracy when the solve is used as an inner inverse.
    """

    def __init__(self, blocks: AssembledBlocks, config: SolverConfig,
                 A1_solve: Optional[PcgSolve] = None, refine: int = 0):
        self.blocks = blocks
        self.config = config
        self.refine = refine
        self.op = ElasticitySaddle(blocks)
        self.P = p2e_precond(blocks, A1_solve)
        self.stats = InnerStats(tol=config.tol)
        self.last: Optional[KrylovResult] = None

    def _solve_once(self, b: np.ndarray) -> np.ndarray:
        rhs = np.concatenate([b, np.zeros(self.blocks.n_pi)])
        res = gmres(self.op, self.P, rhs, self.config)
        self.stats.record(res)
        self.last = res
        return res.x[: self.blocks.n_u] / self.blocks.params.eps

    def reduced_apply(self, v: np.ndarray) -> np.ndarray:
        return self.blocks.params.eps * self.blocks.A1.matvec(v) + self.blocks.apply_A0(v)

    def solve(self, b: np.ndarray) -> np.ndarray:
        u = self._solve_once(b)
        bn = np.linalg.norm(b)
        for _ in range(self.refine):
            r = b - self.reduced_apply(u)
            if np.linalg.norm(r) <= self.config.tol * bn:
                break
            u = u + self._solve_once(r)
        return u

    __call__ = solve


ELASTICITY_REFINE = 6


def solve_elasticity(blocks: AssembledBlocks, b: np.ndarray,
                     config: Optional[SolverConfig] = None):
    """P2e-GMRES on the saddle system, then reduced-residual correction.

    ``iterations`` is the count of the headline saddle solve at ``config.tol``.
    Correction passes at the inner tolerance then bring the reduced residual of
    ``(eps A1 + A0) u = b`` below ``config.tol`` (at most ``ELASTICITY_REFINE``
    passes); ``relres`` is that reduced residual.
    """
    t0 = time.perf_counter()
    config = config or profile_for(blocks.mesh.dim)
    solver = ElasticitySolver(blocks, config)
    u = solver.solve(b)
    head = solver.last
    rhs = np.concatenate([b, np.zeros(blocks.n_pi)])
    bn = np.linalg.norm(b)
    saddle = np.linalg.norm(rhs - solver.op(head.x)) / bn if bn > 0 else 0.0

    fix = ElasticitySolver(blocks, replace(config, tol=INNER_TOL, true_cap=None,
                                           maxiter=max(config.maxiter, 3000)),
                           A1_solve=solver.P.A1_solve)
    red = _relres(solver.reduced_apply, u, b)
    for _ in range(ELASTICITY_REFINE):
        if red <= config.tol:
            break
        u = u + fix._solve_once(b - solver.reduced_apply(u))
        red = _relres(solver.reduced_apply, u, b)
    rep = _report("p2e", blocks, head, red, {"A1": solver.P.inner["A1"], "refine": fix.stats},
                  t0, note=f"saddle_relres={saddle:.3e}")
    return u, rep


# --------------------------------------------------------------------------- #
# two-field poroelasticity
# --------------------------------------------------------------------------- #
LEAD_REFINE = 3


def _two_field_precond(blocks: AssembledBlocks, D_solve, inner_config: SolverConfig):
    prm = blocks.params
    eps, mu, al = prm.eps, prm.mu, prm.alpha
    lead = ElasticitySolver(blocks, inner_config, refine=LEAD_REFINE)
    k = blocks.n_pi
    BcT = blocks.BcT
    c = al * eps / mu

    def Bt(y):
        return c * BcT.matvec(y[:k])

    P = make_block_triangular(lead, Bt, lambda r: (mu / eps) * D_solve(r), blocks.n_u)
    P.inner = {"leading": lead.stats, "A1": lead.P.inner["A1"]}
    return P


def p2_precond(blocks: AssembledBlocks, inner_config: Optional[SolverConfig] = None):
    """``[eps A1 + A0, (a eps/mu) B^T; 0, -(eps/mu) D]^{-1}``, D solved by PCG+IC to 1e-10."""
    inner_config = inner_config or SolverConfig(tol=INNER_TOL, restart=30, maxiter=3000)
    Dsolve = PcgSolve(blocks.D)
    P = _two_field_precond(blocks, Dsolve, inner_config)
    P.inner["D"] = Dsolve.stats
    return P


def p2dlu_precond(blocks: AssembledBlocks, inner_config: Optional[SolverConfig] = None):
    """As :func:`p2_precond` with ``D^{-1}`` replaced by one IC(1e-3) solve."""
    inner_config = inner_config or SolverConfig(tol=INNER_TOL, restart=30, maxiter=3000)
    fac = ichol_with_shift(blocks.D, DROPTOL)
    P = _two_field_precond(blocks, fac.solve, inner_config)
    P.ic_shift = fac.shift
    return P


def solve_two_field(blocks: AssembledBlocks, b1: np.ndarray, b2: np.ndarray, tag: str = "p2",
                    config: Optional[SolverConfig] = None,
                    inner_config: Optional[SolverConfig] = None):
    """Solve the scaled two-field system; returns ``(u, p, report)``."""
    t0 = time.perf_counter()
    config = config or profile_for(blocks.mesh.dim)
    system = TwoFieldSystem(blocks)
    builders = {"p2": p2_precond, "p2dlu": p2dlu_precond}
    if tag not in builders:
        raise ValueError(f"unknown two-field preconditioner {tag!r}")
    P = builders[tag](blocks, inner_config)
    rhs = system.rhs(b1, b2)
    res = gmres(system, P, rhs, config)
    relres = _relres(system, res.x, rhs)
    note = f"ic_shift={P.ic_shift}" if getattr(P, "ic_shift", 0.0) else ""
    u, p = system.split(res.x)
    return u, p, _report(tag, blocks, res, relres, P.inner, t0, note)


# --------------------------------------------------------------------------- #
# three-field poroelasticity
# --------------------------------------------------------------------------- #
def _three_field_precond(blocks: AssembledBlocks, Dtt_solve, A1_solve: PcgSolve):
    prm = blocks.params
    scale = prm.alpha**2 / prm.mu
    n_p, k = blocks.n_p, blocks.n_pi
    Mp = blocks.Mp
    BcT = blocks.BcT

    def Shat_inv(r):
        # blockdiag((mu/a^2) Dtt, Mp)^{-1}
        return np.concatenate([scale * Dtt_solve(r[:n_p]), r[n_p:] / Mp])

    def Bt(y):
        # [0, -Bc^T] acting on (q, z)
        return -BcT.matvec(y[n_p:])

    P = make_block_triangular(A1_solve, Bt, Shat_inv, blocks.n_u)
    P.inner = {"A1": _stats_of(A1_solve)}
    assert k == Mp.size
    return P


def p3_precond(blocks: AssembledBlocks):
    A1s = PcgSolve(blocks.A1)
    Ds = PcgSolve(blocks.Dtt)
    P = _three_field_precond(blocks, Ds, A1s)
    P.inner["Dtt"] = Ds.stats
    return P


def p3dlu_precond(blocks: AssembledBlocks):
    A1s = PcgSolve(blocks.A1)
    fac = ichol_with_shift(blocks.Dtt, DROPTOL)
    P = _three_field_precond(blocks, fac.solve, A1s)
    P.ic_shift = fac.shift
    return P


def solve_three_field(blocks: AssembledBlocks, b1: np.ndarray, b2: np.ndarray, tag: str = "p3",
                      config: Optional[SolverConfig] = None):
    """Solve the three-field system; returns ``(u, p, report)`` in original variables."""
    t0 = time.perf_counter()
    config = config or profile_for(blocks.mesh.dim)
    system = ThreeFieldSystem(blocks)
    builders = {"p3": p3_precond, "p3dlu": p3dlu_precond}
    if tag not in builders:
        raise ValueError(f"unknown three-field preconditioner {tag!r}")
    P = builders[tag](blocks)
    rhs = system.rhs(b1, b2)
    res = gmres(system, P, rhs, config)
    relres = _relres(system, res.x, rhs)
    note = f"ic_shift={P.ic_shift}" if getattr(P, "ic_shift", 0.0) else ""
    u, p = system.to_two_field(res.x)
    return u, p, _report(tag, blocks, res, relres, P.inner, t0, note)
