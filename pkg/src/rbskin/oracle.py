"""Reference 2D bounded-biharmonic weights on a regular grid.

Independent of the kernel field: a cell-centred 5-point Laplacian with
mirrored ghost cells at the mask boundary, the summed squared Laplacian as
objective, and accelerated projected gradient with a per-cell simplex
projection. Test support only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator


class OracleError(RuntimeError):
    pass


@dataclass
class GridProblem:
    """``mask[row, col]`` marks interior cells; ``handle_cells[k]`` lists the
    ``(row, col)`` cells pinned to handle ``k``.

    Cell ``(row, col)`` has centre ``origin + spacing * (col + 0.5, row + 0.5)``.
    """

    mask: np.ndarray
    handle_cells: list
    spacing: float = 1.0
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.handle_cells = [np.atleast_2d(np.asarray(c, dtype=np.int64)) for c in self.handle_cells]
        if self.mask.ndim != 2 or not self.mask.any():
            raise ValueError("mask must be a non-empty 2D array")
        if max(self.mask.shape) > 256:
            raise ValueError("grid oracle is limited to 256 cells per side")
        if not self.handle_cells:
            raise ValueError("need at least one handle")
        for k, cells in enumerate(self.handle_cells):
            if not self.mask[cells[:, 0], cells[:, 1]].all():
                raise ValueError(f"handle {k} has cells outside the mask")

    @property
    def n_handles(self) -> int:
        return len(self.handle_cells)

    def connected(self) -> bool:
        return ndimage.label(self.mask)[1] == 1

    def centres(self):
        rows, cols = np.nonzero(self.mask)
        ox, oy = self.origin
        return np.stack([ox + self.spacing * (cols + 0.5), oy + self.spacing * (rows + 0.5)], axis=1)

    @classmethod
    def from_polygon(cls, inside, nx, ny, lo, hi, handles):
        """Rasterize with the predicate ``inside(points) -> bool`` over ``[lo, hi]``.

        ``handles`` is a list of ``(m, 2)`` point arrays; each point pins the
        cell containing it.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        cell = (hi - lo) / np.array([nx, ny])
        if not np.isclose(cell[0], cell[1]):
            raise ValueError("cells must be square")
        cols, rows = np.meshgrid(np.arange(nx), np.arange(ny))
        pts = np.stack([lo[0] + (cols.ravel() + 0.5) * cell[0],
                        lo[1] + (rows.ravel() + 0.5) * cell[1]], axis=1)
        mask = np.asarray(inside(pts), dtype=bool).reshape(ny, nx)
        hc = []
        for pts_k in handles:
            pts_k = np.atleast_2d(np.asarray(pts_k, dtype=float))
            ij = np.floor((pts_k - lo) / cell).astype(np.int64)
            ij = np.clip(ij, 0, [nx - 1, ny - 1])
            hc.append(np.unique(ij[:, ::-1], axis=0))
        return cls(mask, hc, float(cell[0]), tuple(lo))


def grid_laplacian(mask) -> sp.csr_matrix:
    """5-point Laplacian over mask cells; neighbours outside mirror the cell (zero flux)."""
    mask = np.asarray(mask, dtype=bool)
    ny, nx = mask.shape
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(mask.sum())
    rows, cols, vals = [], [], []
    r, c = np.nonzero(mask)
    me = index[r, c]
    deg = np.zeros(len(me))
    for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        rr, cc = r + dr, c + dc
        ok = (rr >= 0) & (rr < ny) & (cc >= 0) & (cc < nx)
        ok[ok] = mask[rr[ok], cc[ok]]
        rows.append(me[ok])
        cols.append(index[rr[ok], cc[ok]])
        vals.append(np.ones(ok.sum()))
        deg += ok
    rows.append(me)
    cols.append(me)
    vals.append(-deg)
    n = len(me)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def project_simplex(u):
    """Euclidean projection of each row onto the probability simplex."""
    u = np.atleast_2d(u)
    k = u.shape[1]
    s = -np.sort(-u, axis=1)
    css = np.cumsum(s, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = s - css / ind > 0
    rho = k - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(u)), rho - 1] / rho
    return np.maximum(u - theta[:, None], 0.0)


@dataclass
class OracleSolution:
    problem: GridProblem
    weights: np.ndarray     # (n_cells, K) in mask order
    objective: list         # at checkpoints

    def grid(self, k: int) -> np.ndarray:
        out = np.full(self.problem.mask.shape, np.nan)
        out[self.problem.mask] = self.weights[:, k]
        return out

    def interpolate(self, pts):
        """Bilinear interpolation of all channels at ``pts`` (clamped to cell centres).

        Cells outside the mask are filled by nearest interior cell first.
        """
        p = self.problem
        ny, nx = p.mask.shape
        ox, oy = p.origin
        xs = ox + p.spacing * (np.arange(nx) + 0.5)
        ys = oy + p.spacing * (np.arange(ny) + 0.5)
        _, (ri, ci) = ndimage.distance_transform_edt(~p.mask, return_indices=True)
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = np.stack([np.clip(pts[:, 1], ys[0], ys[-1]), np.clip(pts[:, 0], xs[0], xs[-1])], axis=1)
        out = np.empty((len(pts), self.weights.shape[1]))
        for k in range(self.weights.shape[1]):
            g = self.grid(k)[ri, ci]
            out[:, k] = RegularGridInterpolator((ys, xs), g)(q)
        return out


def _dirichlet(problem: GridProblem):
    index = -np.ones(problem.mask.shape, dtype=np.int64)
    index[problem.mask] = np.arange(problem.mask.sum())
    fixed = np.zeros(problem.mask.sum(), dtype=bool)
    onehot = np.zeros((problem.mask.sum(), problem.n_handles))
    for k, cells in enumerate(problem.handle_cells):
        ids = index[cells[:, 0], cells[:, 1]]
        if fixed[ids].any():
            raise ValueError("a cell is pinned to two handles")
        fixed[ids] = True
        onehot[ids, k] = 1.0
    return fixed, onehot


def grid_bbw(problem: GridProblem, iters: int = 20000, check_every: int = 500, tol=0.0):
    """Minimize ``sum_k |L w_k|^2`` over the simplex with pinned handle cells.

    FISTA with a monotone fallback: whenever the accelerated step raises the
    objective, momentum is reset and a plain projected-gradient step is taken.
    That step cannot raise the objective in exact arithmetic, so a rise beyond
    roundoff is kept and caught at the next checkpoint.
    The objective is recorded every ``check_every`` iterations; an increase
    between checkpoints raises ``OracleError``.
    """
    L = grid_laplacian(problem.mask)
    fixed, onehot = _dirichlet(problem)
    n, k = onehot.shape
    step = 1.0 / 64.0  # |L| <= 8 for the 5-point stencil

    def f(u):
        lu = L @ u
        return 0.5 * float(np.sum(lu * lu))

    def prox(u):
        u = project_simplex(u)
        u[fixed] = onehot[fixed]
        return u

    x = prox(np.full((n, k), 1.0 / k))
    y = x.copy()
    fx = f(x)
    t = 1.0
    history = [fx]
    for it in range(1, iters + 1):
        z = prox(y - step * (L @ (L @ y)))
        fz = f(z)
        if fz > fx:
            z = prox(x - step * (L @ (L @ x)))
            fz = f(z)
            if fx < fz <= fx * (1 + 1e-12):  # converged to roundoff
                z, fz = x, fx
            y = z
            t = 1.0
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = z + ((t - 1.0) / t_new) * (z - x)
            t = t_new
        x, fx = z, fz
        if it % check_every == 0:
            if fx > history[-1] * (1 + 1e-12) + 1e-300:
                raise OracleError(f"objective rose from {history[-1]:.6g} to {fx:.6g} at iteration {it}")
            history.append(fx)
            if tol and history[-2] - fx <= tol * max(history[-2], 1e-300):
                break
    return OracleSolution(problem, x, history)


def dense_strip_solution(problem: GridProblem):
    """Unconstrained minimizer with only the pinned cells, by a dense direct solve.

    Equals the bounded solution whenever the result already lies in ``[0, 1]``.
    """
    L = grid_laplacian(problem.mask).toarray()
    a = L.T @ L
    fixed, onehot = _dirichlet(problem)
    free = ~fixed
    u = onehot.copy()
    u[free] = np.linalg.solve(a[np.ix_(free, free)], -a[np.ix_(free, fixed)] @ onehot[fixed])
    return u
