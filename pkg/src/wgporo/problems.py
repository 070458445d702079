"""Material parameters and the manufactured test problems."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

PROBLEM_KINDS = ("elasticity2d", "poro2d", "poro3d")


def lame_from_E_lambda(E: float, lam: float) -> tuple[float, float, float]:
    """Return ``(mu, nu, eps)`` from Young's modulus and the first Lame constant.

    ``nu`` is the positive root of ``2 lam nu^2 + (E + lam) nu - lam = 0``.
    """
    if not (E > 0 and lam > 0):
        raise ValueError("E and lambda must be positive")
    a, b, c = 2.0 * lam, E + lam, -lam
    # numerically stable positive root
    nu = 2.0 * (-c) / (b + math.sqrt(b * b - 4.0 * a * c))
    mu = E / (2.0 * (1.0 + nu))
    return mu, nu, mu / (lam + mu)


@dataclass(frozen=True)
class ProblemParams:
    E: float
    lam: float
    mu: float
    nu: float
    alpha: float = 1.0
    c0: float = 0.0
    kappa: float = 1.0
    dt: float = 1e-3
    dim: int = 2

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise ValueError("Lame constants must be positive")
        if self.c0 < 0:
            raise ValueError("storage coefficient c0 must be nonnegative")
        if not (self.kappa > 0 and self.dt > 0):
            raise ValueError("kappa and dt must be positive")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        # lam (1 - 2 nu)(1 + nu) = nu E, in the cancellation-free quadratic form
        quad = 2 * self.lam * self.nu**2 + (self.E + self.lam) * self.nu - self.lam
        mu = self.E / (2 * (1 + self.nu))
        if abs(quad) > 1e-10 * max(self.lam, self.E) or abs(mu - self.mu) > 1e-10 * self.mu:
            raise ValueError("inconsistent (E, nu) and Lame constants")

    @classmethod
    def from_lambda(cls, lam: float, E: float = 1.0, **kw) -> "ProblemParams":
        mu, nu, _ = lame_from_E_lambda(E, lam)
        return cls(E=E, lam=lam, mu=mu, nu=nu, **kw)

    @property
    def eps(self) -> float:
        return self.mu / (self.lam + self.mu)

    def with_(self, **kw) -> "ProblemParams":
        return replace(self, **kw)


Field = Callable[..., np.ndarray]


@dataclass(frozen=True)
class ProblemInstance:
    """Exact fields and data; callables take coordinate arrays ``x, y[, z]`` and time ``t``.

    Vector callables return an array of shape ``(dim, *x.shape)``.
    """

    kind: str
    params: ProblemParams
    force: Field
    source: Field
    u_exact: Optional[Field]
    p_exact: Optional[Field]
    u_dirichlet: Field
    p_dirichlet: Field
    has_pressure: bool = True


def _zero_vec(dim):
    def f(*args):
        *xs, _t = args
        return np.zeros((dim,) + np.shape(xs[0]))
    return f


def _zero_scalar(*args):
    *xs, _t = args
    return np.zeros(np.shape(xs[0]))


def _elasticity2d(prm: ProblemParams) -> ProblemInstance:
    lam, mu = prm.lam, prm.mu

    def u(x, y, t=0.0):
        return np.stack([np.sin(x) * np.sin(y) + x / lam,
                         np.cos(x) * np.cos(y) + y / lam])

    def f(x, y, t=0.0):
        return np.stack([2 * mu * np.sin(x) * np.sin(y),
                         2 * mu * np.cos(x) * np.cos(y)])

    return ProblemInstance("elasticity2d", prm, f, _zero_scalar, u, None, u,
                           _zero_scalar, has_pressure=False)


def _poro2d(prm: ProblemParams) -> ProblemInstance:
    lam, mu, al, c0 = prm.lam, prm.mu, prm.alpha, prm.c0
    pi = np.pi
    lm = lam + mu

    def u(x, y, t):
        sxy = np.sin(pi * x) * np.sin(pi * y) / lm
        return t * np.stack([
            (-1 + np.cos(2 * pi * x)) * np.sin(2 * pi * y) + sxy,
            np.sin(2 * pi * x) * (1 - np.cos(2 * pi * y)) + sxy])

    def p(x, y, t):
        return -t * np.sin(pi * x) * np.sin(pi * y)

    def f(x, y, t):
        s = np.sin(pi * x) * np.sin(pi * y)
        cxy = np.cos(pi * x + pi * y)
        fx = (-8 * pi**2 * mu * np.cos(2 * pi * x) * np.sin(2 * pi * y)
              - 2 * pi**2 * mu / lm * s
              + 4 * pi**2 * mu * np.sin(2 * pi * y)
              + pi**2 * cxy
              + al * pi * np.cos(pi * x) * np.sin(pi * y))
        fy = (8 * pi**2 * mu * np.sin(2 * pi * x) * np.cos(2 * pi * y)
              - 2 * pi**2 * mu / lm * s
              - 4 * pi**2 * mu * np.sin(2 * pi * x)
              + pi**2 * cxy
              + al * pi * np.sin(pi * x) * np.cos(pi * y))
        return -t * np.stack([fx, fy])

    def s(x, y, t):
        sxy = np.sin(pi * x) * np.sin(pi * y)
        return (-c0 * sxy + pi * al / lm * np.sin(pi * x + pi * y)
                + t * (2 * pi**2 * sxy))

    return ProblemInstance("poro2d", prm, f, s, u, p, _zero_vec(2), _zero_scalar)


def _poro3d(prm: ProblemParams) -> ProblemInstance:
    lam, mu, al, c0 = prm.lam, prm.mu, prm.alpha, prm.c0
    pi = np.pi
    r = (4 * mu + lam) / (mu + lam)

    def f(x, y, z, t):
        sx, sy, sz = np.sin(pi * x), np.sin(pi * y), np.sin(pi * z)
        cx, cy, cz = np.cos(pi * x), np.cos(pi * y), np.cos(pi * z)
        s2x, s2y, s2z = np.sin(2 * pi * x), np.sin(2 * pi * y), np.sin(2 * pi * z)
        c2x, c2y, c2z = np.cos(2 * pi * x), np.cos(2 * pi * y), np.cos(2 * pi * z)
        sss = sx * sy * sz
        f1 = (4 * mu * c2x * s2y * s2z * pi**2 + r * sss * pi**2
              - cx * cy * sz * pi**2 - cx * sy * cz * pi**2
              + 8 * pi**2 * mu * (-1 + c2x) * s2y * s2z + al * pi * cx * sy * sz)
        f2 = (-pi**2 * cx * cy * sz + r * sss * pi**2
              - sx * cy * cz * pi**2 + 16 * pi**2 * mu * s2x * (1 - c2y) * s2z
              - 8 * pi**2 * mu * s2x * c2y * s2z + al * pi * sx * cy * sz)
        f3 = (r * sss * pi**2 + 4 * pi**2 * mu * s2x * s2y * c2z
              - cx * sy * cz * pi**2 - sx * cy * cz * pi**2
              + 8 * pi**2 * mu * (-1 + c2z) * s2x * s2y + al * pi * sx * sy * cz)
        return t * np.stack([f1, f2, f3])

    def s(x, y, z, t):
        sx, sy, sz = np.sin(pi * x), np.sin(pi * y), np.sin(pi * z)
        cx, cy, cz = np.cos(pi * x), np.cos(pi * y), np.cos(pi * z)
        return (al * pi / (mu + lam) * (cx * sy * sz + sx * cy * sz + sx * sy * cz)
                + (3 * pi**2 * t + c0) * sx * sy * sz)

    return ProblemInstance("poro3d", prm, f, s, None, None, _zero_vec(3), _zero_scalar)


def make_problem(kind: str, params: ProblemParams, t: float = 0.0) -> ProblemInstance:
    """Build a manufactured problem. ``t`` is accepted for symmetry; the callables take ``t``."""
    builders = {"elasticity2d": _elasticity2d, "poro2d": _poro2d, "poro3d": _poro3d}
    if kind not in builders:
        raise ValueError(f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}")
    expected_dim = 3 if kind == "poro3d" else 2
    if params.dim != expected_dim:
        params = params.with_(dim=expected_dim)
    return builders[kind](params)
