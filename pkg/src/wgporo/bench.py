"""Parameter sweeps over the manufactured problems and table output."""
from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .assembly import (AssembledBlocks, State, apply_dirichlet, assemble_blocks, assemble_rhs,
                       element_integrals, with_params)
from .mesh import build_dof_maps, build_mesh
from .precond import (PRECOND_TAGS, SolveReport, profile_for, solve_elasticity,
                      solve_three_field, solve_two_field)
from .problems import ProblemInstance, ProblemParams, make_problem
from .sparsela import SolverConfig, ichol_t, pcg

KINDS = {"elasticity": ("elasticity2d", 2, ("p2e",)),
         "poro2": ("poro2d", 2, ("p2", "p2dlu", "p3", "p3dlu")),
         "poro3": ("poro3d", 3, ("p3", "p3dlu"))}
CSV_FIELDS = ("dim", "n", "lambda", "mu", "eps", "c0", "dt", "kappa", "precond", "iters",
              "converged", "relres", "wall_ms")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: tuple = (8,)
    lam: tuple = (1.4286, 1.6667e3, 1.6667e6)
    c0: tuple = (1.0, 0.0)
    dt: tuple = (1e-3, 1e-6)
    kappa: tuple = (1.0,)
    precond: Optional[tuple] = None
    tol: Optional[float] = None
    restart: Optional[int] = None
    residual: Optional[str] = None
    format: str = "csv"
    out: Optional[str] = None
    seed: int = 0
    jobs: int = 1
    E: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown problem kind {self.kind!r}; expected one of {sorted(KINDS)}")
        for name in ("n", "lam", "c0", "dt", "kappa"):
            vals = getattr(self, name)
            if len(vals) == 0:
                raise ConfigError(f"{name} list must be nonempty")
        if self.precond is not None:
            if len(self.precond) == 0:
                raise ConfigError("preconditioner list must be nonempty")
            allowed = KINDS[self.kind][2]
            for tag in self.precond:
                if tag not in PRECOND_TAGS:
                    raise ConfigError(f"unknown preconditioner {tag!r}")
                if tag not in allowed:
                    raise ConfigError(f"preconditioner {tag!r} does not apply to {self.kind}")
        if any(int(n) < 1 for n in self.n):
            raise ConfigError("n must be positive")
        if self.format not in ("csv", "markdown"):
            raise ConfigError("format must be csv or markdown")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def problem_kind(self) -> str:
        return KINDS[self.kind][0]

    @property
    def dim(self) -> int:
        return KINDS[self.kind][1]

    @property
    def tags(self) -> tuple:
        return tuple(self.precond) if self.precond is not None else KINDS[self.kind][2]

    def solver_config(self) -> SolverConfig:
        base = profile_for(self.dim)
        kw = {}
        if self.tol is not None:
            kw["tol"] = self.tol
            if base.true_cap is not None:
                kw["true_cap"] = 10 * self.tol
        if self.restart is not None:
            kw["restart"] = self.restart
        if self.residual is not None:
            kw["residual"] = self.residual
        return replace(base, **kw)

    def grid(self) -> list[tuple]:
        """Grid points ``(n, lam, c0, dt, kappa, tag)`` in output order."""
        if self.kind == "elasticity":
            pts = itertools.product(self.n, self.lam, (0.0,), (1.0,), (1.0,), self.tags)
        else:
            pts = itertools.product(self.n, self.lam, self.c0, self.dt, self.kappa, self.tags)
        return [(int(n), float(l), float(c), float(d), float(k), t) for n, l, c, d, k, t in pts]


# --------------------------------------------------------------------------- #
# single solves
# --------------------------------------------------------------------------- #
@lru_cache(maxsize=8)
def _geometry(n: int, dim: int) -> AssembledBlocks:
    mesh = build_mesh(n, dim)
    return assemble_blocks(mesh, build_dof_maps(mesh), ProblemParams.from_lambda(1.0, dim=dim))


def blocks_for(n: int, dim: int, params: ProblemParams) -> AssembledBlocks:
    return with_params(_geometry(n, dim), params)


def solve_point(blocks: AssembledBlocks, reduced, tag: str, config: SolverConfig):
    """Solve one reduced system; returns ``(u_free, p_free_or_None, report)``."""
    prm = blocks.params
    if tag == "p2e":
        u, rep = solve_elasticity(blocks, (prm.eps / prm.mu) * reduced.b1, config)
        return u, None, rep
    if tag in ("p2", "p2dlu"):
        return solve_two_field(blocks, reduced.b1, reduced.b2, tag, config)
    if tag in ("p3", "p3dlu"):
        return solve_three_field(blocks, reduced.b1, reduced.b2, tag, config)
    raise ValueError(f"unknown preconditioner {tag!r}")


def step_implicit_euler(state: State, blocks: AssembledBlocks, problem: ProblemInstance,
                        params: Optional[ProblemParams] = None, *, t: float,
                        precond: str = "p3", config: Optional[SolverConfig] = None):
    """Advance one implicit Euler step to time ``t``; returns ``(State, SolveReport)``."""
    if params is not None and params != blocks.params:
        blocks = with_params(blocks, params)
    prm = blocks.params
    config = config or profile_for(blocks.mesh.dim)
    rhs = assemble_rhs(blocks.mesh, blocks.dofs, problem, prm, t, prev=state, blocks=blocks)
    red = apply_dirichlet(blocks, rhs, problem, t)
    u, p, rep = solve_point(blocks, red, precond, config)
    p_int = p[: blocks.n_pi] if p is not None else np.zeros(blocks.n_pi)
    return State(red.expand_u(blocks.dofs, u), np.array(p_int)), rep


def interior_l2_error(blocks: AssembledBlocks, u_full: np.ndarray, u_exact, t: float = 0.0) -> float:
    """``||Q0 u - u_interior||`` with ``Q0`` the elementwise mean."""
    mesh = blocks.mesh
    avg = element_integrals(mesh, u_exact, t) / mesh.element_volume
    ui = u_full[: mesh.dim * mesh.n_elements].reshape(mesh.n_elements, mesh.dim)
    return float(np.sqrt(mesh.element_volume * np.sum((ui - avg) ** 2)))


def a1_pcg_counts(n: int, tol: float = 1e-6, droptol: float = 1e-3, maxiter: int = 100000):
    """CG iterations on ``A1 u = b1`` (elasticity load) with and without IC(droptol)."""
    prm = ProblemParams.from_lambda(1.4286)
    blocks = blocks_for(n, 2, prm)
    problem = make_problem("elasticity2d", prm)
    red = apply_dirichlet(blocks, assemble_rhs(blocks.mesh, blocks.dofs, problem, prm, 0.0),
                          problem, 0.0)
    cfg = SolverConfig(tol=tol, maxiter=maxiter)
    with_ic = pcg(blocks.A1, ichol_t(blocks.A1, droptol), red.b1, cfg)
    plain = pcg(blocks.A1, None, red.b1, cfg)
    return with_ic, plain


def format_a1_pcg(ns: Sequence[int], fmt: str = "csv") -> tuple[str, bool]:
    rows = [(n, *a1_pcg_counts(n)) for n in ns]
    ok = all(a.converged and b.converged for _, a, b in rows)
    if fmt == "markdown":
        head = "| 1/h | " + " | ".join(str(n) for n, _, _ in rows) + " |"
        sep = "|---" * (len(rows) + 1) + "|"
        ic = "| with IC | " + " | ".join(str(a.iterations) for _, a, _ in rows) + " |"
        no = "| without | " + " | ".join(str(b.iterations) for _, _, b in rows) + " |"
        return "\n".join([head, sep, ic, no]) + "\n", ok
    lines = ["n,with_ic,without"] + [f"{n},{a.iterations},{b.iterations}" for n, a, b in rows]
    return "\n".join(lines) + "\n", ok


def run_point(kind: str, n: int, lam: float, c0: float, dt: float, kappa: float, tag: str,
              config: SolverConfig, E: float = 1.0):
    """One grid point from a zero state at ``t = dt``; returns ``(report, u_full)``."""
    pkind, dim, _ = KINDS[kind]
    prm = ProblemParams.from_lambda(lam, E=E, c0=c0, dt=dt, kappa=kappa, dim=dim)
    blocks = blocks_for(n, dim, prm)
    problem = make_problem(pkind, prm)
    t = 0.0 if kind == "elasticity" else dt
    state, rep = step_implicit_euler(State.zero(blocks.dofs), blocks, problem, t=t,
                                     precond=tag, config=config)
    return rep, state.u


def _failed_report(kind, n, lam, c0, dt, kappa, tag, exc, E=1.0) -> SolveReport:
    dim = KINDS[kind][1]
    prm = ProblemParams.from_lambda(lam, E=E, c0=c0, dt=dt, kappa=kappa, dim=dim)
    return SolveReport(precond=tag, dim=dim, n=n, lam=lam, mu=prm.mu, eps=prm.eps, c0=c0,
                       dt=dt, kappa=kappa, iterations=0, converged=False, relres=float("nan"),
                       note=f"error: {exc}")


def _worker(args):
    kind, point, config, E = args
    try:
        return run_point(kind, *point, config=config, E=E)[0]
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        return _failed_report(kind, *point, exc, E=E)


def run_experiment(config: ExperimentConfig) -> list[SolveReport]:
    """One report per grid point, in grid order; failures become non-converged rows."""
    solver = config.solver_config()
    jobs = [(config.kind, p, solver, config.E) for p in config.grid()]
    if config.jobs == 1:
        return [_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.jobs) as ex:
        return list(ex.map(_worker, jobs))


# --------------------------------------------------------------------------- #
# tables
# --------------------------------------------------------------------------- #
def report_row(rep: SolveReport) -> dict:
    return {"dim": rep.dim, "n": rep.n, "lambda": rep.lam, "mu": rep.mu, "eps": rep.eps,
            "c0": rep.c0, "dt": rep.dt, "kappa": rep.kappa, "precond": rep.precond,
            "iters": rep.iterations, "converged": bool(rep.converged), "relres": rep.relres,
            "wall_ms": rep.wall_ms}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_csv(reports: Iterable[SolveReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for rep in reports:
        row = report_row(rep)
        w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


_PARSERS = {"dim": int, "n": int, "iters": int, "precond": str,
            "converged": lambda s: s == "true"}


def parse_csv(text: str) -> list[dict]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({k: _PARSERS.get(k, float)(v) for k, v in rec.items()})
    return rows


def _cell(rep: SolveReport) -> str:
    return str(rep.iterations) if rep.converged else f"{rep.iterations}*"


def _g(x: float) -> str:
    return f"{x:.5g}"


def format_markdown(reports: Sequence[SolveReport]) -> str:
    """Iteration tables; ``*`` marks a point that did not converge."""
    if not reports:
        return ""
    lines = []
    if all(r.precond == "p2e" for r in reports):
        ns = sorted({r.n for r in reports})
        lams = list(dict.fromkeys(r.lam for r in reports))
        by = {(r.lam, r.n): r for r in reports}
        lines.append("| lambda \\ 1/h | " + " | ".join(str(n) for n in ns) + " |")
        lines.append("|---" * (len(ns) + 1) + "|")
        for lam in lams:
            cells = [_cell(by[(lam, n)]) if (lam, n) in by else "" for n in ns]
            lines.append(f"| {_g(lam)} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    c0s = list(dict.fromkeys(r.c0 for r in reports))
    tags = list(dict.fromkeys(r.precond for r in reports))
    dts = list(dict.fromkeys(r.dt for r in reports))
    kappas = list(dict.fromkeys(r.kappa for r in reports))
    cols = list(itertools.product(c0s, tags, dts))
    by = {(r.n, r.kappa, r.lam, r.c0, r.precond, r.dt): r for r in reports}
    head = "| 1/h | lambda | " + " | ".join(
        f"c0={_g(c)} {t} dt={_g(d)}" for c, t, d in cols) + " |"
    lines.append(head)
    lines.append("|---" * (len(cols) + 2) + "|")
    for n in dict.fromkeys(r.n for r in reports):
        for kap in kappas:
            label = str(n) if len(kappas) == 1 else f"{n} (kappa={_g(kap)})"
            for i, lam in enumerate(dict.fromkeys(r.lam for r in reports if r.n == n)):
                cells = []
                for c, t, d in cols:
                    rep = by.get((n, kap, lam, c, t, d))
                    cells.append(_cell(rep) if rep else "")
                lines.append(f"| {label if i == 0 else ''} | {_g(lam)} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_table(reports: Sequence[SolveReport], fmt: str = "csv", path: Optional[str] = None) -> str:
    text = format_csv(reports) if fmt == "csv" else format_markdown(reports)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def all_converged(reports: Iterable[SolveReport]) -> bool:
    return all(r.converged and math.isfinite(r.relres) for r in reports)
