"""Command-line driver: ``wgporo {elasticity,poro2,poro3,spectrum,export} [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from typing import Optional, Sequence

from . import bench
from .mmio import EXPORT_TAGS, export_matrix_market
from .problems import ProblemParams

LIST_KEYS = {"n": int, "lambda": float, "c0": float, "dt": float, "kappa": float, "precond": str}
SCALAR_KEYS = {"tol": float, "restart": int, "residual": str, "jobs": int, "format": str,
               "out": str, "seed": int, "dim": int, "block": str, "E": float}


def _split(text: str, conv):
    return tuple(conv(v) for v in text.replace(" ", "").split(",") if v != "")


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; list values are comma separated."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise bench.ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key in LIST_KEYS:
                out[key] = _split(val, LIST_KEYS[key])
            elif key in SCALAR_KEYS:
                out[key] = SCALAR_KEYS[key](val)
            else:
                raise bench.ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def _add_common(p: argparse.ArgumentParser, lists=("n", "lambda", "c0", "dt", "kappa")):
    for key in lists:
        p.add_argument(f"--{key}", dest=key, default=None,
                       type=lambda s, c=LIST_KEYS[key]: _split(s, c),
                       help=f"comma-separated list of {key} values")
    p.add_argument("--config", default=None, help="key=value file; command-line flags win")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgporo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("elasticity", "P2e-preconditioned linear elasticity sweep"),
                        ("poro2", "2D poroelasticity sweep (p2, p2dlu, p3, p3dlu)"),
                        ("poro3", "3D poroelasticity sweep (p3, p3dlu)")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--precond", type=lambda s: _split(s, str), default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--restart", type=int, default=None)
        p.add_argument("--residual", choices=("preconditioned", "preconditioned_rhs", "true"), default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--format", choices=("csv", "markdown"), default=None)
        if name == "elasticity":
            p.add_argument("--a1-pcg", dest="a1_pcg", action="store_true", default=None,
                           help="CG iteration counts on A1 with and without IC instead of a sweep")
    p = sub.add_parser("spectrum", help="dense eigenvalue checks at small n")
    _add_common(p)
    p = sub.add_parser("export", help="write one assembled block in MatrixMarket format")
    _add_common(p)
    p.add_argument("--block", choices=EXPORT_TAGS, default=None)
    p.add_argument("--dim", type=int, choices=(2, 3), default=None)
    return parser


def _merged(args: argparse.Namespace) -> dict:
    opts = read_config_file(args.config) if args.config else {}
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        opts[k] = v
    return opts


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _experiment_config(kind: str, opts: dict) -> bench.ExperimentConfig:
    kw = {"kind": kind}
    rename = {"lambda": "lam"}
    for k in ("n", "lambda", "c0", "dt", "kappa", "precond", "tol", "restart", "residual",
              "format", "out", "seed", "jobs", "E"):
        if k in opts:
            kw[rename.get(k, k)] = opts[k]
    if kind == "poro3" and "n" not in opts:
        kw["n"] = (8,)
    return bench.ExperimentConfig(**kw)


def cmd_a1_pcg(opts: dict) -> int:
    text, ok = bench.format_a1_pcg(opts.get("n", (8, 16, 32, 64)), opts.get("format", "csv"))
    _write(text, opts.get("out"))
    return 0 if ok else 1


def cmd_sweep(kind: str, opts: dict) -> int:
    cfg = _experiment_config(kind, opts)
    reports = bench.run_experiment(cfg)
    text = bench.emit_table(reports, cfg.format)
    _write(text, cfg.out)
    return 0 if bench.all_converged(reports) else 1


def cmd_spectrum(opts: dict) -> int:
    from . import spectrum as spc

    ns = opts.get("n", (4, 8))
    lams = opts.get("lambda", (1.4286, 1.6667e3, 1.6667e6))
    c0s = opts.get("c0", (1.0, 0.0))
    dts = opts.get("dt", (1e-3, 1e-6))
    kappas = opts.get("kappa", (1.0,))
    seed = opts.get("seed", 0)
    rows = []
    for n in ns:
        if n > 16:
            raise bench.ConfigError("dense spectral checks are limited to n <= 16")
        for lam in lams:
            prm = ProblemParams.from_lambda(lam)
            rows += spc.dense_schur_elasticity(bench.blocks_for(n, 2, prm)).rows()
            for c0 in c0s:
                for dt in dts:
                    for kap in kappas:
                        b = bench.blocks_for(n, 2, prm.with_(c0=c0, dt=dt, kappa=kap))
                        rows += spc.dense_schur_two_field(b).rows()
                        rows += spc.dense_schur_three_field(b).rows()
    lemma = spc.lemma_a1_suite(seed)
    for name, val, tol in (("multiset", lemma.multiset_err, lemma.tol_multiset),
                           ("ideal_annihilation", lemma.ideal_err, lemma.tol_ideal),
                           ("c_zero_annihilation", lemma.c_zero_err, lemma.tol_c_zero),
                           ("general_annihilation", lemma.general_err, lemma.tol_c_zero),
                           ("sup_identity", lemma.sup_identity_err, lemma.tol_multiset)):
        rows.append({"tag": "lemma", "n": 0, "lambda": float("nan"), "c0": float("nan"),
                     "dt": float("nan"), "min_eig": float("nan"), "max_eig": float("nan"),
                     "check": f"{name}(seed={seed})", "value": val, "bound": tol,
                     "pass": val <= tol})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(spc.SPECTRUM_CSV_FIELDS)
    for r in rows:
        w.writerow([bench._fmt(r[k]) for k in spc.SPECTRUM_CSV_FIELDS])
    _write(buf.getvalue(), opts.get("out"))
    return 0 if all(r["pass"] for r in rows) else 1


def cmd_export(opts: dict) -> int:
    tag = opts.get("block")
    if tag is None:
        raise bench.ConfigError("export needs --block")
    if opts.get("out") is None:
        raise bench.ConfigError("export needs --out")
    dim = opts.get("dim", 2)
    first = lambda k, d: opts.get(k, (d,))[0]
    prm = ProblemParams.from_lambda(first("lambda", 1.4286), c0=first("c0", 1.0),
                                    dt=first("dt", 1e-3), kappa=first("kappa", 1.0), dim=dim)
    blocks = bench.blocks_for(first("n", 8), dim, prm)
    export_matrix_market(blocks, tag, opts["out"])
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merged(args)
        if opts.pop("a1_pcg", False):
            return cmd_a1_pcg(opts)
        if args.command in bench.KINDS:
            return cmd_sweep(args.command, opts)
        if args.command == "spectrum":
            return cmd_spectrum(opts)
        return cmd_export(opts)
    except bench.ConfigError as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"wgporo: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
