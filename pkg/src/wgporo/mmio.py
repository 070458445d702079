"""MatrixMarket export of assembled blocks.

scipy writes floats in shortest round-trip form, so a read-back reproduces the
stored doubles exactly.
"""
from __future__ import annotations

import scipy.io as sio
import scipy.sparse as sp

from .assembly import AssembledBlocks
from .sparsela import CsrMatrix

SYMMETRIC_TAGS = frozenset({"A1", "A0", "Ap", "D", "Dtt", "Mp"})
EXPORT_TAGS = tuple(sorted(SYMMETRIC_TAGS | {"Bc", "B"}))


def write_matrix_market(path, A, symmetric: bool = False, comment: str = "") -> None:
    S = A.to_scipy() if isinstance(A, CsrMatrix) else sp.csr_matrix(A)
    sio.mmwrite(path, S.tocoo(), comment=comment or None,
                symmetry="symmetric" if symmetric else "general")


def read_matrix_market(path) -> CsrMatrix:
    return CsrMatrix.from_scipy(sp.csr_matrix(sio.mmread(path)))


def export_matrix_market(blocks: AssembledBlocks, tag: str, path) -> None:
    """Write one assembled block; ``tag`` is one of :data:`EXPORT_TAGS`."""
    if tag not in EXPORT_TAGS:
        raise KeyError(f"unknown block {tag!r}; expected one of {EXPORT_TAGS}")
    prm = blocks.params
    comment = (f" {tag} n={blocks.mesh.n} dim={blocks.mesh.dim} lambda={prm.lam!r}"
               f" c0={prm.c0!r} dt={prm.dt!r} kappa={prm.kappa!r}")
    write_matrix_market(path, blocks.get(tag), symmetric=tag in SYMMETRIC_TAGS, comment=comment)
