"""Seven-point finite-difference Laplacian with zero-flux boundaries.

Ghost cells copy the adjacent boundary cell, so a face contributes
``(u_neighbour - u) / h**2`` and axes with a single cell contribute nothing.
"""

from __future__ import annotations

import numpy as np

from .errors import AliasedOutput, MeshMismatch
from .mesh import Field, Mesh


class LaplacianOp:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.inv_h2 = tuple(1.0 / h ** 2 for h in mesh.spacing)
        if not all(np.isfinite(self.inv_h2)):
            raise ValueError(f"mesh spacing too small for a finite stencil: {mesh.spacing}")

    def apply(self, u: Field, out: Field) -> None:
        laplacian_apply(self, u, out)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Laplacian of a raw ``(nz, ny, nx, c)`` array."""
        lap = np.zeros_like(u)
        # grid axes are (z, y, x); inv_h2 is ordered (x, y, z)
        for axis, w in zip((2, 1, 0), self.inv_h2):
            if u.shape[axis] == 1:
                continue
            padded = np.concatenate(
                [np.take(u, [0], axis=axis), u, np.take(u, [-1], axis=axis)], axis=axis
            )
            n = u.shape[axis]
            up = np.take(padded, np.arange(2, n + 2), axis=axis)
            down = np.take(padded, np.arange(0, n), axis=axis)
            lap += (up - 2.0 * u + down) * w
        return lap


def laplacian_apply(op: LaplacianOp, u: Field, out: Field) -> None:
    if u is out or np.shares_memory(u.data, out.data):
        raise AliasedOutput(f"laplacian output {out.name!r} aliases its input")
    if u.mesh != op.mesh or out.mesh != op.mesh:
        raise MeshMismatch("laplacian input/output must live on the operator's mesh")
    if u.rank != out.rank:
        raise MeshMismatch(f"rank mismatch: {u.name!r} is rank {u.rank}, {out.name!r} is rank {out.rank}")
    out.grid()[...] = op(u.grid())
