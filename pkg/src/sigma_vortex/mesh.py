"""Discretization substrates: log-graded radial finite volumes and a planar grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


def log_tail_nodes(r_start: float, order: int = 64, s_cap: float = 300.0,
                   truncate: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Radii and log-weights for integrals of 2 pi r f(r) over r > r_start.

    Gauss-Legendre in u = 1/ln r; the log-weights include the Jacobian
    2 pi r^2 / u^2. Nodes beyond ln r = s_cap are evaluated at the cap,
    where the transformed integrand has already settled to its limit. With
    ``truncate`` the rule covers only r_start < r < e^s_cap instead.
    """
    if r_start <= 1.0:
        raise ValueError("tail must start beyond r = 1")
    ue = 1.0 / math.log(r_start)
    u0 = min(1.0 / s_cap, ue) if truncate else 0.0
    x, w = np.polynomial.legendre.leggauss(order)
    u = u0 + 0.5 * (ue - u0) * (x + 1.0)
    logw = np.log(0.5 * (ue - u0) * w * 2 * math.pi)
    uc = np.maximum(u, 1.0 / s_cap)
    r = np.exp(1.0 / uc)
    return r, logw + 2.0 / uc - 2.0 * np.log(uc)


@dataclass(frozen=True)
class RadialMesh:
    """Cell-centred log-graded radial mesh r_i = r_min * exp(i h).

    The first ``n_core`` nodes span [r_min, r_max]; the remaining nodes form a
    buffer zone with the same spacing. Cell faces sit at geometric means, the
    innermost face at 0 and the outermost at r_last * exp(h/2).
    """

    r: np.ndarray
    n_core: int
    h: float
    faces: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)
    cond: np.ndarray = field(repr=False)

    @classmethod
    def log_graded(cls, r_min: float, r_max: float, nodes: int,
                   buffer_decades: float = 8.0) -> "RadialMesh":
        if nodes < 3 or not (0 < r_min < r_max):
            raise ValueError("need nodes >= 3 and 0 < r_min < r_max")
        h = math.log(r_max / r_min) / (nodes - 1)
        extra = int(math.ceil(buffer_decades * math.log(10.0) / h))
        r = r_min * np.exp(h * np.arange(nodes + extra))
        faces = np.empty(len(r) + 1)
        faces[0] = 0.0
        faces[1:-1] = np.sqrt(r[:-1] * r[1:])
        faces[-1] = r[-1] * math.exp(h / 2)
        areas = math.pi * np.diff(faces**2)
        cond = 2 * math.pi * faces[1:-1] / np.diff(r)
        return cls(r=r, n_core=nodes, h=h, faces=faces, areas=areas, cond=cond)

    @property
    def size(self) -> int:
        return len(self.r)

    @property
    def r_outer(self) -> float:
        return float(self.faces[-1])

    @property
    def core(self) -> slice:
        return slice(0, self.n_core)

    def points(self) -> np.ndarray:
        return np.stack([self.r, np.zeros_like(self.r)], axis=-1)

    def apply_laplacian(self, v: np.ndarray) -> np.ndarray:
        """Finite-volume -Laplacian integrated over cells, no flux through the outer face."""
        flow = self.cond * np.diff(v)
        out = np.zeros_like(v)
        out[:-1] -= flow
        out[1:] += flow
        return out

    def banded(self, diag_shift: np.ndarray) -> np.ndarray:
        """(L + diag(shift)) in scipy.linalg.solve_banded (1, 1) layout."""
        ab = np.zeros((3, self.size))
        ab[0, 1:] = -self.cond
        ab[2, :-1] = -self.cond
        ab[1, :] = diag_shift
        ab[1, :-1] += self.cond
        ab[1, 1:] += self.cond
        return ab

    def tail_nodes(self, order: int = 64, s_cap: float = 300.0) -> tuple[np.ndarray, np.ndarray]:
        """Tail quadrature beyond the outer face; see ``log_tail_nodes``."""
        return log_tail_nodes(self.r_outer, order, s_cap)


@dataclass(frozen=True)
class PlanarGrid:
    """Uniform grid on [-L, L]^2; unknowns are the nodes strictly inside B_R."""

    L: float
    h: float
    R: float

    @property
    def n(self) -> int:
        return int(round(2 * self.L / self.h)) + 1

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def interior_mask(self) -> np.ndarray:
        X, Y = self.coords()
        return np.hypot(X, Y) < self.R

    def laplacian(self) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
        """(A, B, idx): -Delta_h on interior unknowns, the coupling to boundary
        nodes, and the flat indices of the interior nodes.

        For interior values v and boundary data b (on all grid nodes),
        -Delta_h v = A v - B b[boundary-coupled].
        """
        mask = self.interior_mask()
        n = self.n
        idx = np.flatnonzero(mask.ravel())
        pos = -np.ones(n * n, dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        i, j = np.unravel_index(idx, (n, n))
        rows, cols, vals = [np.arange(len(idx))], [np.arange(len(idx))], [np.full(len(idx), 4.0)]
        brow, bcol = [], []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            k = np.ravel_multi_index((i + di, j + dj), (n, n))
            inside = pos[k] >= 0
            rows.append(np.flatnonzero(inside))
            cols.append(pos[k[inside]])
            vals.append(-np.ones(int(inside.sum())))
            brow.append(np.flatnonzero(~inside))
            bcol.append(k[~inside])
        inv = 1.0 / self.h**2
        A = sp.csr_matrix((np.concatenate(vals) * inv, (np.concatenate(rows), np.concatenate(cols))),
                          shape=(len(idx), len(idx)))
        br, bc = np.concatenate(brow), np.concatenate(bcol)
        B = sp.csr_matrix((np.full(len(br), inv), (br, bc)), shape=(len(idx), n * n))
        return A, B, idx
