"""Dense spectral checks at small mesh sizes.

Each block triangular preconditioner ``[A Bt; 0 -Shat]`` applied to a saddle
matrix with Schur complement ``S`` has spectrum ``{1} U eig(Shat^{-1} S)``, so
the interesting part of every preconditioned spectrum is a symmetric
generalized eigenproblem ``S x = t Shat x`` that LAPACK solves reliably.
Working with the nonsymmetric preconditioned matrix directly would put a
Jordan block at 1 and lose half the digits there.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .assembly import AssembledBlocks
from .problems import ProblemParams

CHECK_TOL = 1e-8
NULL_THRESHOLD = 1e-8
SPECTRUM_CSV_FIELDS = ("tag", "n", "lambda", "c0", "dt", "min_eig", "max_eig",
                       "check", "value", "bound", "pass")


class StructuralFailure(RuntimeError):
    """The discrete inf-sup structure is not what the theory requires."""


@dataclass
class BoundCheck:
    name: str
    value: float
    bound: float
    passed: bool


@dataclass
class SpectralReport:
    tag: str
    n: int
    params: ProblemParams
    eigenvalues: np.ndarray
    checks: list = field(default_factory=list)
    beta: Optional[float] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def _add(self, name, value, bound, passed):
        self.checks.append(BoundCheck(name, float(value), float(bound), bool(passed)))

    def rows(self) -> list[dict]:
        ev = self.eigenvalues
        base = {"tag": self.tag, "n": self.n, "lambda": self.params.lam,
                "c0": self.params.c0, "dt": self.params.dt,
                "min_eig": float(ev.min()) if ev.size else float("nan"),
                "max_eig": float(ev.max()) if ev.size else float("nan")}
        return [{**base, "check": c.name, "value": c.value, "bound": c.bound,
                 "pass": c.passed} for c in self.checks]


# --------------------------------------------------------------------------- #
# dense building blocks
# --------------------------------------------------------------------------- #
def _dense(M) -> np.ndarray:
    return M.toarray() if hasattr(M, "toarray") else np.asarray(M)


def reduced_pressure_laplacian(blocks: AssembledBlocks) -> np.ndarray:
    """``Ap_oo - Ap_od Ap_dd^{-1} Ap_do`` (facet pressures eliminated)."""
    oo, od, do, dd = (_dense(b) for b in blocks.Ap_blocks())
    return oo - od @ np.linalg.solve(dd, do)


def d_tilde(blocks: AssembledBlocks, params: Optional[ProblemParams] = None) -> np.ndarray:
    prm = params or blocks.params
    return prm.c0 * np.diag(blocks.Mp) + prm.kappa * prm.dt * reduced_pressure_laplacian(blocks)


def _bc_a1inv_bct(blocks: AssembledBlocks) -> np.ndarray:
    A1 = _dense(blocks.A1)
    Bc = _dense(blocks.Bc)
    c = sla.cho_factor(A1)
    S = Bc @ sla.cho_solve(c, Bc.T)
    return 0.5 * (S + S.T)


def _geig(S: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``S x = t T x`` with ``S`` symmetric and ``T`` SPD."""
    return sla.eigh(0.5 * (S + S.T), 0.5 * (T + T.T), eigvals_only=True)


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


# --------------------------------------------------------------------------- #
# inf-sup constant
# --------------------------------------------------------------------------- #
@dataclass
class InfSupResult:
    beta: float
    singular_values: np.ndarray
    null_dim: int


def infsup_singular_values(blocks: AssembledBlocks) -> InfSupResult:
    """Singular values of ``Mp^{-1/2} Bc A1^{-1/2}`` (descending).

    With ``A1 = L L^T`` the matrix ``Mp^{-1/2} Bc L^{-T}`` has the same singular
    values, since ``L^{-T}`` and ``A1^{-1/2}`` differ by an orthogonal factor.
    """
    L = np.linalg.cholesky(_dense(blocks.A1))
    Bc = _dense(blocks.Bc)
    X = sla.solve_triangular(L, Bc.T, lower=True).T / np.sqrt(blocks.Mp)[:, None]
    s = sla.svdvals(X)
    null_dim = int(np.sum(s < NULL_THRESHOLD * s[0]))
    beta = float(s[-2]) if s.size >= 2 else float("nan")
    return InfSupResult(beta, s, null_dim)


def compute_infsup_beta(blocks: AssembledBlocks) -> float:
    """Second-smallest singular value; the smallest spans the constant-pressure mode."""
    res = infsup_singular_values(blocks)
    if res.null_dim != 1:
        raise StructuralFailure(
            f"expected a one-dimensional null space, found {res.null_dim} near-zero singular values")
    return res.beta


# --------------------------------------------------------------------------- #
# two-field Schur complement
# --------------------------------------------------------------------------- #
def two_field_factor(blocks: AssembledBlocks, params: Optional[ProblemParams] = None) -> float:
    """Upper spectral factor of ``S2~`` relative to ``(eps/mu) D~``."""
    prm = params or blocks.params
    eps, mu, al = prm.eps, prm.mu, prm.alpha
    if prm.c0 > 0:
        return 1.0 + al**2 * eps / (mu * prm.c0)
    lam_min = np.linalg.eigvalsh(reduced_pressure_laplacian(blocks))[0]
    return 1.0 + al**2 * eps * blocks.Mp.max() / (mu * prm.kappa * prm.dt * lam_min)


def dense_schur_two_field(blocks: AssembledBlocks, params: Optional[ProblemParams] = None,
                          tol: float = CHECK_TOL) -> SpectralReport:
    """Generalized eigenvalues of ``(S2~, (eps/mu) D~)``; these plus the value 1
    form the spectrum of the preconditioned two-field operator."""
    prm = params or blocks.params
    eps, mu, al = prm.eps, prm.mu, prm.alpha
    Dt = d_tilde(blocks, prm)
    A1 = _dense(blocks.A1)
    A0 = _dense(blocks.A0_direct)
    Bc = _dense(blocks.Bc)
    K = eps * A1 + A0
    S2 = (eps / mu) * Dt + (al * eps / mu) ** 2 * (Bc @ np.linalg.solve(K, Bc.T))
    ev = _geig(S2, (eps / mu) * Dt)
    factor = two_field_factor(blocks, prm)
    rep = SpectralReport("S2", blocks.mesh.n, prm, ev)
    rep._add("lower", ev[0], 1.0, ev[0] >= 1.0 - tol)
    rep._add("upper", ev[-1], factor, ev[-1] <= factor * (1.0 + tol))
    return rep


# --------------------------------------------------------------------------- #
# elasticity
# --------------------------------------------------------------------------- #
def dense_schur_elasticity(blocks: AssembledBlocks, params: Optional[ProblemParams] = None,
                           tol: float = CHECK_TOL) -> SpectralReport:
    """Spectrum of the P2e-preconditioned elasticity saddle operator.

    It equals ``{1}`` together with ``eps + eig(Mp^{-1} Bc A1^{-1} Bc^T)``.
    """
    prm = params or blocks.params
    eps, d = prm.eps, blocks.mesh.dim
    sigma = _geig(_bc_a1inv_bct(blocks), np.diag(blocks.Mp))
    schur = eps + sigma
    ev = np.sort(np.concatenate([np.ones(blocks.n_u), schur]))
    inf = infsup_singular_values(blocks)
    beta = inf.beta
    rep = SpectralReport("S2e", blocks.mesh.n, prm, ev, beta=beta)
    rep._add("min_is_eps", abs(ev[0] - eps) / eps, tol, abs(ev[0] - eps) <= tol * eps)
    below = int(np.sum(ev < 0.5 * (eps + beta**2)))
    rep._add("count_below_half_gap", below, 1, below == 1)
    rep._add("cluster_floor", schur[1], eps + beta**2, schur[1] >= eps + beta**2 - tol)
    rep._add("upper", ev[-1], d + eps, ev[-1] <= d + eps + tol)
    rep._add("null_dim", inf.null_dim, 1, inf.null_dim == 1)
    return rep


# --------------------------------------------------------------------------- #
# three-field Schur complement
# --------------------------------------------------------------------------- #
def three_field_matrices(blocks: AssembledBlocks, params: Optional[ProblemParams] = None):
    """Dense ``(S3~, lower, upper, S3hat)`` on the (interior pressure, w) unknowns."""
    prm = params or blocks.params
    eps, mu, al, d = prm.eps, prm.mu, prm.alpha, blocks.mesh.dim
    Dt = (mu / al**2) * d_tilde(blocks, prm)
    Mp = np.diag(blocks.Mp)
    S = _bc_a1inv_bct(blocks)
    Z = np.zeros_like(Mp)
    S3 = np.block([[Dt + eps * Mp, eps * Mp], [eps * Mp, eps * Mp + S]])
    lower = np.block([[Dt, Z], [Z, Z]])
    upper = np.block([[2 * (Dt + eps * Mp), Z], [Z, (2 * eps + d) * Mp]])
    S3hat = np.block([[Dt + eps * Mp, Z], [Z, Mp]])
    return S3, lower, upper, S3hat


def dense_schur_three_field(blocks: AssembledBlocks, params: Optional[ProblemParams] = None,
                            tol: float = CHECK_TOL, cluster_eps: float = 1e-6,
                            cluster_tol: float = 1e-4) -> SpectralReport:
    """Semidefinite two-sided bounds on ``S3~`` and the spectrum of ``S3hat^{-1} S3~``.

    When ``eps <= cluster_eps`` the spectrum is also compared with its
    ``eps -> 0`` limit ``{1} U eig(Mp^{-1} Bc A1^{-1} Bc^T)``.
    """
    prm = params or blocks.params
    S3, lower, upper, S3hat = three_field_matrices(blocks, prm)
    scale = max(1.0, np.linalg.norm(S3, 2))
    ev = _geig(S3, S3hat)
    rep = SpectralReport("S3", blocks.mesh.n, prm, ev)
    lo = _min_eig(S3 - lower)
    up = _min_eig(upper - S3)
    rep._add("S3_minus_lower_psd", lo, -tol * scale, lo >= -tol * scale)
    rep._add("upper_minus_S3_psd", up, -tol * scale, up >= -tol * scale)
    if prm.eps <= cluster_eps:
        k = blocks.n_pi
        limit = np.sort(np.concatenate([np.ones(k), _geig(_bc_a1inv_bct(blocks), np.diag(blocks.Mp))]))
        err = float(np.max(np.abs(limit - ev)))
        rep._add("eps_limit_spectrum", err, cluster_tol, err <= cluster_tol)
    return rep


# --------------------------------------------------------------------------- #
# generic saddle-point lemma on random matrices
# --------------------------------------------------------------------------- #
@dataclass
class LemmaSuiteResult:
    seed: int
    trials: int
    multiset_err: float
    ideal_err: float
    c_zero_err: float
    general_err: float
    sup_identity_err: float
    tol_multiset: float = 1e-8
    tol_ideal: float = 1e-10
    tol_c_zero: float = 1e-8

    @property
    def passed(self) -> bool:
        return (self.multiset_err <= self.tol_multiset and self.ideal_err <= self.tol_ideal
                and self.c_zero_err <= self.tol_c_zero and self.general_err <= self.tol_c_zero
                and self.sup_identity_err <= self.tol_multiset)


def _spd(rng, k, lo=1.0, hi=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return (Q * rng.uniform(lo, hi, k)) @ Q.T


def block_triangular_product(A, Bt, C, D, Shat):
    """``P^{-1} calA`` for ``calA = [A Bt; C -D]`` and ``P = [A Bt; 0 -Shat]``."""
    n, k = A.shape[0], D.shape[0]
    calA = np.block([[A, Bt], [C, -D]])
    P = np.block([[A, Bt], [np.zeros((k, n)), -Shat]])
    return np.linalg.solve(P, calA)


def _poly_residual(M, roots, extra_one=1, power=1):
    """``||((M - I)^extra_one prod (M - r I))^power||``."""
    I = np.eye(M.shape[0])
    Q = np.linalg.matrix_power(M - I, extra_one).astype(complex)
    for r in roots:
        Q = Q @ (M - r * I)
    return float(np.linalg.norm(np.linalg.matrix_power(Q, power), 2))


def _well_separated(vals, gap=0.05):
    if np.min(np.abs(vals - 1.0)) < gap:
        return False
    diff = np.abs(vals[:, None] - vals[None, :]) + np.eye(vals.size) * 1e9
    return diff.min() >= gap


def lemma_a1_suite(seed: int = 0, trials: int = 50, max_size: int = 12) -> LemmaSuiteResult:
    """Check the block triangular eigenvalue lemma on random dense saddle systems."""
    rng = np.random.default_rng(seed)
    multiset = ideal = c_zero = general = sup_id = 0.0
    done = 0
    while done < trials:
        n = int(rng.integers(2, max_size - 1))
        k = int(rng.integers(1, min(4, max_size - n) + 1))
        A = _spd(rng, n)
        Bt = rng.standard_normal((n, k)) / np.sqrt(n)
        C = rng.standard_normal((k, n)) / np.sqrt(n)
        G = rng.standard_normal((k, k))
        D = 0.5 * G @ G.T / k
        Shat = _spd(rng, k, 0.5, 2.0)
        S = D + C @ np.linalg.solve(A, Bt)
        mu_vals = np.linalg.eigvals(np.linalg.solve(Shat, S))
        if not _well_separated(mu_vals) or abs(np.linalg.det(S)) < 1e-3:
            continue

        # spectrum is {1}^n together with eig(Shat^{-1} S)
        M = block_triangular_product(A, Bt, C, D, Shat)
        got = np.linalg.eigvals(M)
        want = np.concatenate([np.ones(n), mu_vals])
        cost = np.abs(got[:, None] - want[None, :])
        r, c = linear_sum_assignment(cost)
        multiset = max(multiset, float(cost[r, c].max()) / max(1.0, np.abs(want).max()))

        # (lambda-1)^2 p^2 annihilates M for general C
        general = max(general, _poly_residual(M, mu_vals, power=2))

        # Shat = S: (M - I)^2 = 0
        M_ideal = block_triangular_product(A, Bt, C, D, S)
        ideal = max(ideal, float(np.linalg.norm(
            (M_ideal - np.eye(n + k)) @ (M_ideal - np.eye(n + k)), 2)))

        # C = 0: (lambda-1) p annihilates M
        Dz = D + 0.5 * np.eye(k)
        mz = np.linalg.eigvals(np.linalg.solve(Shat, Dz))
        Mz = block_triangular_product(A, Bt, np.zeros_like(C), Dz, Shat)
        c_zero = max(c_zero, _poly_residual(Mz, mz))

        # ||C A^{-1} C^T||_2 equals max_x (x^T C^T C x) / (x^T A x)
        lhs = np.linalg.norm(C @ np.linalg.solve(A, C.T), 2)
        rhs = sla.eigh(C.T @ C, A, eigvals_only=True)[-1]
        sup_id = max(sup_id, abs(lhs - rhs) / max(1.0, lhs))
        done += 1
    return LemmaSuiteResult(seed, trials, multiset, ideal, c_zero, general, sup_id)
