'''
Norms and seminorms of discrete fields

The dual norm ‖w‖_{H⁻¹} is computed through the Dirichlet Poisson problem: solve
−Δφ = w with φ = 0 on ∂Ω and take ‖∇φ‖_{L²}. On the grid the same identity holds
exactly, ‖∇φ‖² = ∫ w·φ, because face_weights turn the discrete integration by parts
into an equality. A NormWorkspace holds the factorized operator so that the many
H⁻¹ evaluations on one grid share a single setup.

Masks may be given as analysis.CellMask objects or as boolean arrays of grid.shape.
'''
import functools

import numpy as np
import scipy.sparse as sp

from collections import namedtuple
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import cg, factorized

from django.conf import settings

from .grid import ScalarField, gradient, vector_l2_norm, cell_centers, cell_gradient_magnitude
from .model import power_difference

from Site.logutils import log


class NormError(ValueError):
    '''
    Raised for invalid norm arguments and for Poisson solves that miss their
    tolerance. residual holds the relative residual of a failed solve.
    '''

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


# Norms of the difference of two solutions u₁ − u₂ = (W, v) at one time.
#   h_minus1_W   ‖W‖_{H⁻¹}
#   l2_v         ‖v‖_{L²}
#   x_combined   (h_minus1_W² + l2_v²)^½, the phase-space distance
#   y_sublevel   the Y-norm accumulated from the start of the window up to this time
#   z_parabolic  the Z-norm accumulated likewise
#   pairing      ∫(M₁^{α+1} − M₂^{α+1})(M₁ − M₂), the dissipation of the degenerate diffusion
DiffNorms = namedtuple("DiffNorms", ("h_minus1_W", "l2_v", "x_combined", "y_sublevel", "z_parabolic", "pairing"),
                       defaults=(0.0, 0.0, 0.0))


def _axis_operator(n, h):
    '''
    −d²/dx² on n cells with ghost-mirrored zero Dirichlet ends (3/h² on the end cells).
    '''
    main = np.full(n, 2.0)
    main[0] = main[-1] = 3.0
    off = np.full(n - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def dirichlet_operator(grid):
    '''
    The matrix of −laplacian_dirichlet on fields with zero trace, rows in row-major cell
    order. Symmetric positive definite.
    '''
    ops = [_axis_operator(n, h) for n, h in zip(grid.cells, grid.spacing)]
    if grid.dim == 1:
        return ops[0].tocsc()
    nx, ny = grid.cells
    return (sp.kron(ops[0], sp.identity(ny)) + sp.kron(sp.identity(nx), ops[1])).tocsc()


class NormWorkspace:
    '''
    The factorized Dirichlet Laplacian of one grid.

    1D grids use a direct sparse factorization, 2D grids the conjugate-gradient method
    with relative tolerance rtol. Both are read-only after construction so one
    workspace may serve many threads.
    '''

    def __init__(self, grid, rtol=None):
        self.grid = grid
        self.rtol = settings.LAB_HMINUS1_RTOL if rtol is None else rtol
        self.operator = dirichlet_operator(grid)
        self._solve = factorized(self.operator) if grid.dim == 1 else None
        log.debug(f"Norm workspace for {grid!r}: {'direct' if self._solve else 'cg'} solves")

    def solve(self, w):
        '''
        φ with −Δφ = w and φ = 0 on ∂Ω.
        '''
        if w.grid != self.grid:
            raise NormError(f"field on {w.grid!r} given to workspace of {self.grid!r}")

        rhs = np.ascontiguousarray(w.values).ravel()
        if not np.any(rhs):
            return ScalarField(self.grid, np.zeros(self.grid.shape), 0.0)

        if self._solve is not None:
            phi = self._solve(rhs)
        else:
            phi, info = cg(self.operator, rhs, rtol=self.rtol, atol=0.0, maxiter=20 * self.grid.size)
            if info != 0:
                residual = float(np.linalg.norm(self.operator @ phi - rhs) / np.linalg.norm(rhs))
                raise NormError(f"Poisson solve did not converge (info={info}), relative residual {residual:.3e}", residual)

        return ScalarField(self.grid, phi.reshape(self.grid.shape), 0.0)

    def residual(self, w, phi):
        '''
        Relative residual of −Δφ = w.
        '''
        rhs = w.values.ravel()
        norm = np.linalg.norm(rhs)
        return float(np.linalg.norm(self.operator @ phi.values.ravel() - rhs) / norm) if norm else 0.0


@functools.lru_cache(maxsize=16)
def workspace_for(grid):
    return NormWorkspace(grid)


def _mask_array(mask, grid):
    cells = getattr(mask, "cells", mask)
    cells = np.asarray(cells, dtype=bool)
    if cells.shape != grid.shape:
        raise NormError(f"mask of shape {cells.shape} on grid of shape {grid.shape}")
    return cells


def lp_norm(f, p=2):
    '''
    (∫|f|^p)^{1/p} by midpoint quadrature, max|f| for p = ∞.
    '''
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if not p >= 1:
        raise NormError(f"L^p norms need p >= 1, got {p}")
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1.0 / p))


def h1_seminorm(f):
    '''
    ‖∇f‖_{L²}, using the field's own boundary trace.
    '''
    return vector_l2_norm(gradient(f))


def hminus1_norm(ws, w):
    '''
    ‖w‖_{H⁻¹} = ‖∇φ‖_{L²} with −Δφ = w, φ = 0 on ∂Ω.
    '''
    return h1_seminorm(ws.solve(w))


def hminus1_duality(ws, w):
    '''
    Both sides of ‖∇φ‖² = ∫ w·φ, as a pair.
    '''
    phi = ws.solve(w)
    return h1_seminorm(phi) ** 2, float(np.sum(w.values * phi.values) * w.grid.cell_volume)


def x_norm(ws, W, v):
    '''
    The H⁻¹ × L² norm of a pair (W, v).
    '''
    if W.grid != v.grid or W.grid != ws.grid:
        raise NormError("x_norm needs W, v and the workspace on one grid")
    return float(np.hypot(hminus1_norm(ws, W), lp_norm(v, 2)))


def w1inf_norm(f):
    '''
    max(max|f|, max|∇f|) with the gradient taken on faces.
    '''
    return max(lp_norm(f, np.inf), gradient(f).max_abs())


def state_norm(state):
    '''
    ‖M‖_{L^∞} + ‖ρ‖_{W^{1,∞}}, the phase-space norm of the dissipative estimate.
    '''
    return lp_norm(state.M, np.inf) + w1inf_norm(state.rho)


def holder_seminorm(f, theta, chunk=None):
    '''
    max |f(x) − f(y)| / |x − y|^θ over pairs of cell centers at least one (smallest)
    spacing apart. Pairs are visited in row blocks to bound memory.
    '''
    if not 0 < theta <= 1:
        raise NormError(f"Hölder exponent must lie in (0, 1], got {theta}")

    points = np.stack([c.ravel() for c in cell_centers(f.grid)], axis=1)
    values = f.values.ravel()
    chunk = chunk or max(1, 1_000_000 // len(values))
    floor = f.grid.min_spacing * (1.0 - 1e-12)

    best = 0.0
    for start in range(0, len(values), chunk):
        block = points[start:start + chunk]
        delta = block[:, None, :] - points[None, :, :]
        dist = np.sqrt(np.sum(delta * delta, axis=2))
        diff = np.abs(values[start:start + chunk, None] - values[None, :])
        keep = dist >= floor
        if np.any(keep):
            best = max(best, float(np.max(diff[keep] / dist[keep] ** theta)))
    return best


def sublevel_l2_norm(f, mask, time_weights=None):
    '''
    L² norm restricted to the masked cells.

    f may be one ScalarField, or a sequence of them with one time weight each, in which
    case the result is (Σ_t w_t·‖f_t‖²_{L²(mask)})^½. An empty mask gives 0 and a warning.
    '''
    fields = [f] if isinstance(f, ScalarField) else list(f)
    if time_weights is None:
        time_weights = [1.0] * len(fields)
    if len(time_weights) != len(fields):
        raise NormError(f"{len(fields)} fields but {len(time_weights)} time weights")

    cells = _mask_array(mask, fields[0].grid)
    if not np.any(cells):
        log.warning("sublevel L² norm over an empty mask, returning 0")
        return 0.0

    total = sum(w * np.sum(g.values[cells] ** 2) for w, g in zip(time_weights, fields))
    return float(np.sqrt(total * fields[0].grid.cell_volume))


def sublevel_gradient_norm(f, mask, time_weights=None):
    '''
    The L² norm of the cell-averaged gradient magnitude on the masked cells, optionally
    accumulated over time like sublevel_l2_norm.
    '''
    fields = [f] if isinstance(f, ScalarField) else list(f)
    if time_weights is None:
        time_weights = [1.0] * len(fields)

    cells = _mask_array(mask, fields[0].grid)
    if not np.any(cells):
        return 0.0

    total = sum(w * np.sum(cell_gradient_magnitude(g)[cells] ** 2) for w, g in zip(time_weights, fields))
    return float(np.sqrt(total * fields[0].grid.cell_volume))


def mask_interior(cells):
    '''
    Cells of the mask whose neighbours (diagonals included in 2D) are all in the grid
    and in the mask, the cells where second differences are taken.
    '''
    interior = np.zeros_like(cells)
    if cells.ndim == 1:
        interior[1:-1] = cells[1:-1] & cells[:-2] & cells[2:]
    else:
        core = cells[1:-1, 1:-1].copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                core &= cells[1 + di:cells.shape[0] - 1 + di, 1 + dj:cells.shape[1] - 1 + dj]
        interior[1:-1, 1:-1] = core
    return interior


def second_differences_squared(f):
    '''
    Squared Frobenius norm of the discrete Hessian on the cells away from the edge of
    the grid, returned on the full grid shape (zero on edge cells).
    '''
    u = f.values
    h = f.grid.spacing
    out = np.zeros(f.grid.shape)
    if f.grid.dim == 1:
        out[1:-1] = ((u[2:] - 2.0 * u[1:-1] + u[:-2]) / h[0] ** 2) ** 2
        return out

    uxx = (u[2:, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / h[0] ** 2
    uyy = (u[1:-1, 2:] - 2.0 * u[1:-1, 1:-1] + u[1:-1, :-2]) / h[1] ** 2
    uxy = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4.0 * h[0] * h[1])
    out[1:-1, 1:-1] = uxx ** 2 + uyy ** 2 + 2.0 * uxy ** 2
    return out


def parabolic_z_norm(traj_slice, mask, dt):
    '''
    The discrete parabolic Sobolev norm of a uniformly spaced sequence u⁰ … u^K on a mask:

        ( Σ_{k=1..K} dt·[ ‖D²u^k‖²_{mask interior} + ‖(u^k − u^{k−1})/dt‖²_{mask} + ‖u^k‖²_{mask} ] )^½

    Items of traj_slice may be ScalarFields or States (whose M is taken).
    '''
    fields = [getattr(u, "M", u) for u in traj_slice]
    if len(fields) < 2:
        raise NormError(f"parabolic norm needs at least 2 snapshots, got {len(fields)}")
    if not dt > 0:
        raise NormError(f"snapshot spacing must be positive, got {dt}")

    cells = _mask_array(mask, fields[0].grid)
    interior = mask_interior(cells)

    total = 0.0
    for prev, u in zip(fields[:-1], fields[1:]):
        total += parabolic_increment(prev, u, cells, interior, dt)
    return float(np.sqrt(total))


def parabolic_increment(prev, u, cells, interior, dt):
    '''
    One summand of the squared parabolic norm, for the interval ending at u.
    '''
    hessian = np.sum(second_differences_squared(u)[interior])
    rate = np.sum(((u.values - prev.values) / dt)[cells] ** 2)
    zeroth = np.sum(u.values[cells] ** 2)
    return float(dt * u.grid.cell_volume * (hessian + rate + zeroth))


def difference_z_norm(W_slice, v_slice, mask, dt):
    '''
    The Z-norm of a difference (W, v) of two solutions: the parabolic norms of both
    components on the mask, combined in quadrature.
    '''
    return float(np.hypot(parabolic_z_norm(W_slice, mask, dt), parabolic_z_norm(v_slice, mask, dt)))


def degenerate_pairing(M1, M2, alpha):
    '''
    ∫ (M₁^{α+1} − M₂^{α+1})(M₁ − M₂), nonnegative.
    '''
    integrand = power_difference(M1.values, M2.values, alpha + 1.0) * (M1.values - M2.values)
    return float(np.sum(integrand) * M1.grid.cell_volume)


def interpolation_ratio(ws, w, theta, theta1):
    '''
    ‖w‖_∞ / (‖w‖_{C^θ}^{1−θ₁}·‖w‖_{H⁻¹}^{θ₁}) with ‖w‖_{C^θ} = ‖w‖_∞ + |w|_{C^θ}. The
    Sobolev interpolation inequality says this stays bounded for some θ₁ ∈ (0, 1).
    '''
    sup = lp_norm(w, np.inf)
    if sup == 0:
        raise NormError("interpolation ratio of a zero field")
    c_theta = sup + holder_seminorm(w, theta)
    return sup / (c_theta ** (1.0 - theta1) * hminus1_norm(ws, w) ** theta1)


def fit_interpolation_exponent(ws, fields, theta):
    '''
    The θ₁ ∈ (0, 1) for which the interpolation ratios of fields spread least (smallest
    range of log-ratios), together with the ratios at that θ₁.
    '''
    fields = [w for w in fields if lp_norm(w, np.inf) > 0]
    if len(fields) < 2:
        raise NormError("need at least two nonzero fields to fit an interpolation exponent")

    sup = np.array([lp_norm(w, np.inf) for w in fields])
    c_theta = sup + np.array([holder_seminorm(w, theta) for w in fields])
    hm1 = np.array([hminus1_norm(ws, w) for w in fields])

    def log_ratios(theta1):
        return np.log(sup) - (1.0 - theta1) * np.log(c_theta) - theta1 * np.log(hm1)

    best = minimize_scalar(lambda t: np.ptp(log_ratios(t)), bounds=(1e-6, 1.0 - 1e-6), method="bounded")
    theta1 = float(best.x)
    return theta1, np.exp(log_ratios(theta1))
