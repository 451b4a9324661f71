'''
Level sets, cutoffs, support and fits

The diagnostics here read trajectories, they never step one. They measure how level
sets of an initial biomass M₀ sit relative to each other, build the cutoff functions
that live on those sets, follow the support of M in time and reduce measured series
to a few fitted constants.

Naming conventions used herein:

delta     a level of M₀; the sublevel set of delta is {M₀ > delta} (the region where the
          diffusion stays nondegenerate)
d         distance from a cell center to the set {M₀ ≤ delta0}
width     the smallest d over {M₀ > delta1}, the room a cutoff has to climb from 0 to 1
C_phi     the measured constant in |D^k φ| ≤ C_phi·φ^{1−ω}, k = 1, 2

Distances are between cell centers, so every geometric quantity here carries a one cell
error bar.
'''
import math

import numpy as np

from collections import namedtuple
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from django.conf import settings

from .grid import ScalarField, cell_points
from .norms import holder_seminorm

from Site.logutils import log


class AnalysisError(ValueError):
    '''
    Raised when a diagnostic is asked for outside its contract.
    '''


class CellMask:
    '''
    A boolean selection of cells together with the predicate that produced it and the
    hash of the field it was evaluated on.
    '''

    def __init__(self, grid, cells, predicate="", delta=None, field_hash=None):
        cells = np.asarray(cells, dtype=bool)
        if cells.shape != grid.shape:
            raise AnalysisError(f"mask of shape {cells.shape} on grid of shape {grid.shape}")
        self.grid = grid
        self.cells = cells
        self.predicate = predicate
        self.delta = delta
        self.field_hash = field_hash

    def __repr__(self):
        return f"CellMask({self.predicate or 'custom'}, {self.count} of {self.grid.size} cells)"

    @property
    def count(self):
        return int(np.count_nonzero(self.cells))

    @property
    def empty(self):
        return self.count == 0

    def complement(self):
        predicate = f"not ({self.predicate})" if self.predicate else ""
        return CellMask(self.grid, ~self.cells, predicate, self.delta, self.field_hash)

    def describes(self, field):
        '''
        True if this mask was evaluated on field (or records no field at all).
        '''
        return self.field_hash is None or self.field_hash == field.digest()


def sublevel_mask(M0, delta):
    return CellMask(M0.grid, M0.values > delta, f"M0 > {delta!r}", delta, M0.digest())


# Distance between {M₀ ≤ δ} and {M₀ ≥ 2δ} against its Hölder lower bound.
#   distance   smallest cell-center distance between the two sets (inf if one is empty)
#   bound      δ^{1/θ}·|M₀|_{C^θ}^{−1/θ} with the measured seminorm
#   seminorm   the measured |M₀|_{C^θ}
#   empty      True when either set has no cells
#   holds      distance ≥ bound − one cell spacing
LevelsetDistance = namedtuple("LevelsetDistance", ("distance", "bound", "seminorm", "empty", "holds"))


def levelset_distance(M0, delta, theta=1.0):
    low = M0.values <= delta
    high = M0.values >= 2.0 * delta
    seminorm = holder_seminorm(M0, theta)
    bound = delta ** (1.0 / theta) * seminorm ** (-1.0 / theta) if seminorm > 0 else math.inf

    if not np.any(low) or not np.any(high):
        log.debug(f"level sets at delta={delta} are not both populated")
        return LevelsetDistance(math.inf, bound, seminorm, True, True)

    points = cell_points(M0.grid)
    distances, _ = cKDTree(points[high.ravel()]).query(points[low.ravel()])
    distance = float(np.min(distances))
    return LevelsetDistance(distance, bound, seminorm, False, distance >= bound - M0.grid.min_spacing)


def distance_to(grid, cells):
    '''
    Distance from every cell center to the nearest center of the given cells, inf
    everywhere if there are none.
    '''
    if not np.any(cells):
        return np.full(grid.shape, math.inf)
    points = cell_points(grid)
    distances, _ = cKDTree(points[cells.ravel()]).query(points)
    return distances.reshape(grid.shape)


def smoothstep(r, omega):
    '''
    exp(1 − 1/r)^{1/ω} on (0, 1], 0 at r = 0. Flat to all orders at 0 and equal to 1 at 1.
    '''
    r = np.clip(r, 0.0, 1.0)
    out = np.zeros_like(r)
    positive = r > 0
    out[positive] = np.exp((1.0 - 1.0 / r[positive]) / omega)
    return out


# How well a built cutoff φ conforms to |D^k φ| ≤ C·φ^{1−ω}.
#   C_phi                max(C_first, C_second)
#   C_first, C_second    max |Dφ|/φ^{1−ω} and max |D²φ|/φ^{1−ω} over cells with φ > 0
#   plateau_violations   cells of {M₀ < δ0} with φ ≠ 0 plus cells of {M₀ > δ1} with φ ≠ 1
#   width                distance over which φ climbs from 0 to 1
CutoffReport = namedtuple("CutoffReport", ("C_phi", "C_first", "C_second", "plateau_violations", "width", "omega"))


def _derivatives(phi, grid):
    '''
    Magnitudes of the first and second cell-center derivatives of phi.
    '''
    first = np.gradient(phi, *grid.spacing) if grid.dim > 1 else [np.gradient(phi, grid.spacing[0])]
    first_sq = sum(g * g for g in first)
    second_sq = np.zeros(grid.shape)
    for g in first:
        again = np.gradient(g, *grid.spacing) if grid.dim > 1 else [np.gradient(g, grid.spacing[0])]
        second_sq += sum(a * a for a in again)
    return np.sqrt(first_sq), np.sqrt(second_sq)


def build_cutoff(M0, delta0, delta1, omega):
    '''
    The cutoff φ = s(d/width) with s the smoothstep, and its conformance report.

    φ vanishes on {M₀ ≤ δ0} and equals 1 on {M₀ > δ1}. Where the upper set is empty
    the climb runs over the whole distance field.
    '''
    if not 0 < delta0 < delta1:
        raise AnalysisError(f"need 0 < delta0 < delta1, got {delta0} and {delta1}")
    if not 0 < omega < 1:
        raise AnalysisError(f"omega must lie in (0, 1), got {omega}")

    grid = M0.grid
    lower = M0.values <= delta0
    upper = M0.values > delta1
    d = distance_to(grid, lower)

    if not np.any(lower):
        phi = np.ones(grid.shape)
        width = math.inf
    else:
        width = float(np.min(d[upper])) if np.any(upper) else float(np.max(d))
        phi = smoothstep(d / width, omega) if width > 0 else np.zeros(grid.shape)
        phi[upper] = 1.0

    violations = int(np.count_nonzero(phi[M0.values < delta0] != 0.0) + np.count_nonzero(phi[upper] != 1.0))
    violations += int(np.count_nonzero((phi < 0) | (phi > 1)))

    first, second = _derivatives(phi, grid)
    # Subnormal φ would turn the ratio into rounding noise.
    positive = phi > np.finfo(np.float64).tiny
    if np.any(positive):
        scale = phi[positive] ** (1.0 - omega)
        c_first = float(np.max(first[positive] / scale))
        c_second = float(np.max(second[positive] / scale))
    else:
        c_first = c_second = 0.0

    report = CutoffReport(max(c_first, c_second), c_first, c_second, violations, width, omega)
    if violations:
        log.warning(f"cutoff for delta0={delta0}, delta1={delta1}: {violations} plateau violations")
    return ScalarField(grid, phi, 0.0), report


# Minimum of M over the masked cells, per snapshot.
SublevelMinimum = namedtuple("SublevelMinimum", ("times", "minima", "infimum", "empty"))


def min_on_sublevel(traj, mask):
    if not mask.describes(traj.initial.M):
        raise AnalysisError(f"{mask!r} was not built from this trajectory's initial M")
    if mask.empty:
        log.warning(f"minimum over an empty mask {mask!r}")
        return SublevelMinimum(traj.times, [], math.nan, True)

    minima = [float(np.min(s.M.values[mask.cells])) for s in traj]
    return SublevelMinimum(traj.times, minima, min(minima), False)


def support_measure(M, tol=None):
    '''
    (measure, radius) of {M > tol}: the total cell volume and the largest distance of a
    supported cell center from the centroid of the supported centers.
    '''
    tol = settings.LAB_SUPPORT_TOL if tol is None else tol
    if not tol > 0:
        raise AnalysisError(f"support tolerance must be positive, got {tol}")

    supported = (M.values > tol).ravel()
    if not np.any(supported):
        return 0.0, 0.0

    points = cell_points(M.grid)[supported]
    centroid = points.mean(axis=0)
    radius = float(np.max(np.linalg.norm(points - centroid, axis=1)))
    return float(np.count_nonzero(supported) * M.grid.cell_volume), radius


def sublevel_supremum(traj_a, traj_b, mask, until=None):
    '''
    max of M₁ and M₂ over the snapshots up to until and the cells outside mask, mask
    being {M₀ > δ}. This is the size of the biomass where the diffusion may degenerate.
    '''
    outside = ~mask.cells
    if not np.any(outside):
        return 0.0

    best = 0.0
    for traj in (traj_a, traj_b):
        for s in traj:
            if until is not None and s.time > until:
                break
            best = max(best, float(np.max(s.M.values[outside])))
    return best


# Box counting result: the fitted slope, the RMS residual of the log-log fit and the
# occupied box counts per radius.
BoxCount = namedtuple("BoxCount", ("dimension", "residual", "radii", "counts"))


def box_counting_dimension(points, radii):
    '''
    Least-squares slope of log N_r against log(1/r), N_r the number of cubes of side r,
    anchored at the low corner of the bounding box, that hold at least one point.
    '''
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    radii = np.sort(np.asarray(radii, dtype=np.float64))

    if len(points) < 10:
        raise AnalysisError(f"box counting needs at least 10 points, got {len(points)}")
    if len(radii) < 4:
        raise AnalysisError(f"box counting needs at least 4 radii, got {len(radii)}")
    if not radii[0] > 0:
        raise AnalysisError("box counting radii must be positive")
    if radii[-1] / radii[0] < 10.0:
        raise AnalysisError(f"radii span {radii[-1] / radii[0]:.3g}, less than a decade")

    shifted = points - points.min(axis=0)
    counts = np.array([len(np.unique(np.floor(shifted / r).astype(np.int64), axis=0)) for r in radii])

    x = np.log(1.0 / radii)
    y = np.log(counts)
    coeffs = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((np.polyval(coeffs, x) - y) ** 2)))
    return BoxCount(float(coeffs[0]) + 0.0, residual, radii.tolist(), counts.tolist())


# Fit of value(t) ≈ C·e^{−ωt} + D.
#   converged   False if the optimizer gave up, in which case residual is inf
DecayFit = namedtuple("DecayFit", ("C_fit", "omega_fit", "D_fit", "residual", "converged"))


def _decay_guess(t, v):
    tail = max(1, len(v) // 4)
    D = float(np.mean(v[-tail:]))
    C = float(v[0] - D)
    above = v - D > 0
    if C > 0 and np.count_nonzero(above) >= 2:
        slope = np.polyfit(t[above], np.log(v[above] - D), 1)[0]
        return C, float(-slope), D

    # Growing or flat series: start from a slow growth through the first sample.
    span = float(t[-1] - t[0])
    C = float(np.ptp(v)) or 1.0
    return C, -1.0 / span, float(v[0]) - C


def fit_dissipative(times, values):
    '''
    Nonlinear least squares for C·e^{−ωt} + D with C ≥ 0. A fit whose amplitude C
    vanishes carries no rate, and reports ω = 0.
    '''
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if len(t) != len(v):
        raise AnalysisError(f"{len(t)} times but {len(v)} values")
    if len(t) < 8:
        raise AnalysisError(f"decay fit needs at least 8 samples, got {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise AnalysisError("decay fit needs strictly increasing times")

    scale = float(np.max(np.abs(v))) or 1.0
    if np.ptp(v) <= 1e-14 * scale:
        return DecayFit(0.0, 0.0, float(np.mean(v)), 0.0, True)

    t0 = t[0]

    def residuals(p):
        C, omega, D = p
        return C * np.exp(-omega * (t - t0)) + D - v

    try:
        result = least_squares(residuals, _decay_guess(t, v), bounds=([0.0, -np.inf, -np.inf], np.inf),
                               xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    except (ValueError, FloatingPointError) as e:
        log.warning(f"decay fit failed: {e}")
        return DecayFit(math.nan, math.nan, math.nan, math.inf, False)

    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        log.warning(f"decay fit did not converge: {result.message}")
        return DecayFit(*(float(p) for p in result.x), math.inf, False)

    C, omega, D = (float(p) for p in result.x)
    # The fit runs in time since the first sample; move the amplitude back to t = 0.
    if t0:
        C *= math.exp(omega * t0)
    if C <= 1e-12 * scale:
        C, omega = 0.0, 0.0
    residual = float(np.sqrt(np.mean(result.fun ** 2)))
    return DecayFit(C, omega, D, residual, True)


def fit_power_law(xs, ys):
    '''
    (exponent, prefactor) of y ≈ prefactor·x^exponent by a log-log least-squares line,
    using only the pairs where both are positive.
    '''
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if np.count_nonzero(keep) < 2 or np.ptp(x[keep]) == 0:
        raise AnalysisError("a power law fit needs two distinct positive samples")
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(np.exp(intercept))


def _block_means(values, block):
    out = values
    for axis, n in enumerate(values.shape):
        starts = np.arange(0, n, block)
        sizes = np.diff(np.append(starts, n))
        shape = [1] * values.ndim
        shape[axis] = len(sizes)
        out = np.add.reduceat(out, starts, axis=axis) / sizes.reshape(shape)
    return out.ravel()


def coarse_features(state, block=16):
    '''
    Block averages of M and ρ over block cells per axis (the last block may be short),
    concatenated into one feature vector.
    '''
    if block < 1:
        raise AnalysisError(f"block must be positive, got {block}")
    return np.concatenate((_block_means(state.M.values, block), _block_means(state.rho.values, block)))
