'''
Time integration of the regularized system

For a regularization index n (ε = 1/n) the solver advances

    ∂t M = ∇·((M + ε)^α ∇M) − ∇·(M·(M + ε)^{γ−1} ∇ρ) − f(M, ρ)
    ∂t ρ = Δρ − g(M, ρ)

with M = 0 and ρ = 1 on ∂Ω. Writing the taxis flux as M times a velocity
v = (M + ε)^{γ−1}∇ρ lets it be upwinded on M, which keeps regions with M = 0 at
M = 0 exactly.

One step of length dt:

  ρ-step  implicit diffusion (I − dt·Δ)ρ* = ρ^k, then the consumption g(M^k, ρ*)
          applied per cell in Patankar form ρ = (ρ* + dt·g⁻)/(1 + dt·g⁺/ρ*).
  M-step  explicit conservative transport with ρ^{k+1} frozen, then the reaction:
          the linear part L·M exactly, f̃ again in Patankar form.

The explicit transport is written as an exchange between neighbouring cells,

    M_i ← M_i·(1 − τ·out_i) + τ·in_i

where out_i and in_i collect the (nonnegative) diffusive conductances and upwind
velocities of the faces of cell i. With τ·out_i ≤ 1 both terms are nonnegative, so
M ≥ 0 holds to the last bit. A step sub-cycles τ internally whenever the exchange
rates demand it, so any dt up to stable_dt keeps M nonnegative.

Naming conventions used herein:

eps       1/n, the regularization
G         diffusive conductance of a face, (M̄ + ε)^α/h² (doubled on boundary faces,
          where the cell center is only h/2 from the trace)
ap, am    upwind rates max(v, 0)/h and max(−v, 0)/h of a face
M̄         arithmetic face mean of M, with the trace 0 standing in past the boundary
'''
import numpy as np
import scipy.sparse as sp

from collections import namedtuple, deque
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu
from sortedcontainers import SortedDict

from .enums import Schemes
from .grid import ScalarField, gradient, laplacian_dirichlet, integrate, cell_gradient_magnitude
from .model import diffusion_exponent, linear_coefficient, eval_g, model_hash
from .norms import (DiffNorms, dirichlet_operator, workspace_for, hminus1_norm, lp_norm, degenerate_pairing,
                    mask_interior, parabolic_increment)
from .util import canonical_json, sha256_of

from Site.logutils import log


class SolverError(RuntimeError):
    '''
    The time stepper could not continue. state is the last valid State.
    '''

    def __init__(self, message, state=None, reason=None):
        super().__init__(message)
        self.state = state
        self.reason = reason or message


class TimeStepError(SolverError):
    '''
    A step was asked for with dt beyond stable_dt.
    '''


class SolverConfigError(ValueError):
    pass


class StateError(ValueError):
    pass


# Exchange rates above this many sub-cycles per step signal a blow up, not stiffness.
MAX_SUBSTEPS = 100000

# Fraction of the positivity limit τ·out ≤ 1 that sub-cycles use.
SUBSTEP_SAFETY = 0.95


class State:
    '''
    Biomass M (trace 0) and nutrient ρ (trace 1) at one time.
    '''

    def __init__(self, M, rho, time=0.0):
        if M.grid != rho.grid:
            raise StateError("M and rho must share one grid")
        if M.boundary_value != 0.0 or rho.boundary_value != 1.0:
            raise StateError(f"M needs trace 0 and rho trace 1, got {M.boundary_value} and {rho.boundary_value}")
        if np.any(M.values < 0) or np.any(rho.values < 0):
            raise StateError("M and rho must be nonnegative")
        if not time >= 0:
            raise StateError(f"time must be nonnegative, got {time}")

        self.M = M
        self.rho = rho
        self.time = float(time)

    def __repr__(self):
        return f"State(t={self.time:.6g}, max M={self.M.values.max():.6g}, min rho={self.rho.values.min():.6g})"

    @property
    def grid(self):
        return self.M.grid

    def at_time(self, time):
        return State(self.M, self.rho, time)

    def digest(self):
        return sha256_of(self.M.digest() + self.rho.digest() + repr(self.time))


def make_state(grid, M, rho=None, time=0.0):
    '''
    A State from raw cell values, ρ ≡ 1 when not given.
    '''
    rho = np.ones(grid.shape) if rho is None else rho
    return State(ScalarField(grid, M, 0.0), ScalarField(grid, rho, 1.0), time)


# Where the mass of M went during one step: out through the boundary, and removed by
# the reaction f (negative when f produces).
MassBudget = namedtuple("MassBudget", ("outflow", "consumed"))

SolverConfig = namedtuple("SolverConfig", ("reg_n", "dt_max", "cfl_safety", "t_end", "snapshot_every", "scheme"),
                          defaults=(10, 0.01, 0.9, 1.0, 0.1, "imex_upwind"))


def make_solver_config(**kwargs):
    '''
    SolverConfig with its contract checked.
    '''
    unknown = set(kwargs) - set(SolverConfig._fields)
    if unknown:
        raise SolverConfigError(f"unknown solver settings: {sorted(unknown)}")

    config = SolverConfig(**kwargs)
    if not (isinstance(config.reg_n, (int, np.integer)) and config.reg_n >= 1):
        raise SolverConfigError(f"reg_n must be an integer >= 1, got {config.reg_n}")
    if not config.dt_max > 0:
        raise SolverConfigError(f"dt_max must be positive, got {config.dt_max}")
    if not 0 < config.cfl_safety <= 1:
        raise SolverConfigError(f"cfl_safety must lie in (0, 1], got {config.cfl_safety}")
    if not config.t_end >= 0:
        raise SolverConfigError(f"t_end must be nonnegative, got {config.t_end}")
    if not config.snapshot_every > 0:
        raise SolverConfigError(f"snapshot_every must be positive, got {config.snapshot_every}")
    if config.scheme not in Schemes:
        raise SolverConfigError(f"unknown scheme '{config.scheme}', expected one of {list(Schemes)}")
    return config


def config_hash(config):
    return sha256_of(canonical_json(config._asdict()))


def _padded(values, b, axis):
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.pad(values, pad, constant_values=b)


def _take(a, axis, start, stop):
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    return a[tuple(index)]


def _lo_hi(a, axis):
    return _take(a, axis, 0, -1), _take(a, axis, 1, None)


def _boundary_faces(shape, axis):
    edge = np.zeros(shape, dtype=bool)
    first = [slice(None)] * len(shape)
    last = [slice(None)] * len(shape)
    first[axis] = 0
    last[axis] = -1
    edge[tuple(first)] = True
    edge[tuple(last)] = True
    return edge


def face_coefficients(M, rho_gradient, params, config, grid):
    '''
    Per axis, the face arrays (G, ap, am) plus the face diffusivity D and velocity v
    they were built from.
    '''
    eps = 1.0 / config.reg_n
    alpha = diffusion_exponent(params)
    coefficients = []
    for k in range(grid.dim):
        h = grid.spacing[k]
        left, right = _lo_hi(_padded(M, 0.0, k), k)
        base = 0.5 * (left + right) + eps
        D = base ** alpha
        v = base ** (params.gamma - 1.0) * rho_gradient[k]
        G = D / (h * h)
        G = np.where(_boundary_faces(G.shape, k), 2.0 * G, G)
        coefficients.append((G, np.maximum(v, 0.0) / h, np.maximum(-v, 0.0) / h, D, v))
    return coefficients


def exchange_rates(M, coefficients):
    '''
    out and in of the exchange form, summed over axes. Boundary neighbours hold the
    trace 0 and so contribute nothing to in.
    '''
    out = np.zeros(M.shape)
    inn = np.zeros(M.shape)
    for k, (G, ap, am, _, _) in enumerate(coefficients):
        # Faces to the low (l) and high (r) side of each cell, and the neighbours across them.
        Gl, Gr = _lo_hi(G, k)
        apl, apr = _lo_hi(ap, k)
        aml, amr = _lo_hi(am, k)
        Mp = _padded(M, 0.0, k)
        Ml = _take(Mp, k, 0, -2)
        Mr = _take(Mp, k, 2, None)
        out += Gl + Gr + apr + aml
        inn += (Gl + apl) * Ml + (Gr + amr) * Mr
    return out, inn


def stable_dt(state, params, config):
    '''
    cfl_safety·min(h²/(2N·max D), h/(2·max|v|), dt_max) with D and v taken on faces,
    h the smallest spacing and N the dimension.
    '''
    grid = state.grid
    grad = gradient(state.rho).components
    coefficients = face_coefficients(state.M.values, grad, params, config, grid)
    h = grid.min_spacing
    max_D = max(float(np.max(c[3])) for c in coefficients)
    max_v = max(float(np.max(np.abs(c[4]))) for c in coefficients)

    bounds = [config.dt_max, h * h / (2.0 * grid.dim * max_D)]
    if max_v > 0:
        bounds.append(h / (2.0 * max_v))
    return config.cfl_safety * min(bounds)


def _implicit_diffusion(rho, dt):
    '''
    ρ* with (I − dt·Δ)ρ* = ρ, the trace entering through the ghost rule. The matrix is
    an M-matrix and is factored without pivoting, so ρ* ≥ 0 whenever ρ ≥ 0.
    '''
    grid = rho.grid
    boundary = laplacian_dirichlet(ScalarField(grid, np.zeros(grid.shape), rho.boundary_value)).values
    rhs = (rho.values + dt * boundary).ravel()

    if grid.dim == 1:
        n = grid.cells[0]
        r = dt / grid.spacing[0] ** 2
        ab = np.zeros((3, n))
        ab[0, 1:] = -r
        ab[1, :] = 1.0 + 2.0 * r
        ab[1, 0] = ab[1, -1] = 1.0 + 3.0 * r
        ab[2, :-1] = -r
        solution = solve_banded((1, 1), ab, rhs, check_finite=False)
    else:
        system = (sp.identity(grid.size, format="csc") + dt * dirichlet_operator(grid)).tocsc()
        lu = splu(system, permc_spec="NATURAL", diag_pivot_thresh=0.0)
        solution = lu.solve(rhs)

    return solution.reshape(grid.shape)


def _patankar(value, destruction, production, dt):
    '''
    (u + dt·production)/(1 + dt·destruction/u), the destruction rate only where u > 0.
    '''
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(value > 0, destruction / np.where(value > 0, value, 1.0), 0.0)
    return (value + dt * production) / (1.0 + dt * rate)


def _consume(rho_star, M, params, dt):
    g = np.asarray(eval_g(params, M, rho_star), dtype=np.float64)
    return _patankar(rho_star, np.maximum(g, 0.0), np.maximum(-g, 0.0), dt)


def _react(M, rho, params, dt):
    spec = params.spec
    L = linear_coefficient(params)
    if spec.f_override is not None:
        f_tilde = spec.f_override(M, rho) - L * M
    else:
        f_tilde = spec.f_tilde(M ** params.beta, rho)
    f_tilde = np.asarray(f_tilde, dtype=np.float64)
    return np.exp(-L * dt) * _patankar(M, np.maximum(f_tilde, 0.0), np.maximum(-f_tilde, 0.0), dt)


def _transport(M, rho_gradient, params, config, grid, dt, state):
    '''
    Sub-cycled explicit transport of M over dt. Returns (M, substeps, outflow), outflow
    being the mass that left through the boundary.
    '''
    remaining = dt
    substeps = 0
    outflow = 0.0
    while remaining > 0:
        coefficients = face_coefficients(M, rho_gradient, params, config, grid)
        out, inn = exchange_rates(M, coefficients)
        rate = float(np.max(out))
        if rate * remaining <= SUBSTEP_SAFETY:
            tau = remaining
            remaining = 0.0
        else:
            tau = SUBSTEP_SAFETY / rate
            remaining -= tau

        outflow += tau * _boundary_outflow(M, coefficients, grid) * grid.cell_volume
        M = M * (1.0 - tau * out) + tau * inn
        substeps += 1
        if substeps > MAX_SUBSTEPS:
            raise SolverError(f"transport needed more than {MAX_SUBSTEPS} sub-cycles", state, "substeps")
    return M, substeps, outflow


def step(state, params, config, dt):
    '''
    One IMEX step of length dt ≤ stable_dt. Returns the new State.
    '''
    return step_with_budget(state, params, config, dt)[0]


def step_with_budget(state, params, config, dt):
    '''
    step, also returning the MassBudget of the step: ∫M changes by exactly
    −(outflow + consumed), up to rounding.
    '''
    limit = stable_dt(state, params, config)
    if not 0 < dt <= limit * (1.0 + 1e-12):
        raise TimeStepError(f"dt={dt:.6g} outside (0, {limit:.6g}]", state, "dt")

    grid = state.grid

    rho_star = _implicit_diffusion(state.rho, dt)
    if np.any(rho_star < 0):
        raise SolverError("implicit diffusion produced negative rho", state, "negative rho")
    rho_new = _consume(rho_star, state.M.values, params, dt)
    if not np.all(np.isfinite(rho_new)):
        raise SolverError(f"non-finite rho at t={state.time:.6g}", state, "nan")
    if np.any(rho_new < 0):
        raise SolverError(f"negative rho at t={state.time:.6g}", state, "negative")

    rho_gradient = gradient(ScalarField(grid, rho_new, 1.0)).components
    M_star, substeps, outflow = _transport(state.M.values, rho_gradient, params, config, grid, dt, state)
    M_new = _react(M_star, rho_new, params, dt)

    if not np.all(np.isfinite(M_new)):
        raise SolverError(f"non-finite M at t={state.time:.6g}", state, "nan")
    if np.any(M_new < 0):
        raise SolverError(f"negative M at t={state.time:.6g}", state, "negative")

    if substeps > 1:
        log.debug(f"t={state.time:.6g}: transport sub-cycled {substeps} times")

    consumed = float(np.sum(M_star - M_new) * grid.cell_volume)
    new = State(ScalarField(grid, M_new, 0.0), ScalarField(grid, rho_new, 1.0), state.time + dt)
    return new, MassBudget(outflow, consumed)


def _boundary_outflow(M, coefficients, grid):
    '''
    Rate at which M leaves through the boundary faces, per unit cell volume.
    '''
    total = 0.0
    for k, (G, ap, am, _, _) in enumerate(coefficients):
        first = [slice(None)] * grid.dim
        last = [slice(None)] * grid.dim
        first[k] = 0
        last[k] = -1
        first, last = tuple(first), tuple(last)
        total += np.sum((G[first] + am[first]) * M[first])
        total += np.sum((G[last] + ap[last]) * M[last])
    return float(total)


def boundary_flux(state, params, config):
    '''
    Rate of change of ∫M due to transport across ∂Ω, negative for outflow. Nothing
    flows in since the trace of M is 0.
    '''
    grid = state.grid
    rho_gradient = gradient(state.rho).components
    coefficients = face_coefficients(state.M.values, rho_gradient, params, config, grid)
    return -_boundary_outflow(state.M.values, coefficients, grid) * grid.cell_volume


def interpolate_states(a, b, time):
    '''
    Linear interpolation in time between two states.
    '''
    if time == b.time:
        return b
    if time == a.time:
        return a
    lam = (time - a.time) / (b.time - a.time)
    M = (1.0 - lam) * a.M.values + lam * b.M.values
    rho = (1.0 - lam) * a.rho.values + lam * b.rho.values
    return State(ScalarField(a.grid, M, 0.0), ScalarField(a.grid, rho, 1.0), time)


class Trajectory:
    '''
    Snapshots keyed by time, the first being the initial state.

    provenance records the hashes of the configuration and model that produced it.
    '''

    def __init__(self, provenance=None):
        self.snapshots = SortedDict()
        self.provenance = dict(provenance or {})

    def add(self, state):
        if self.snapshots and state.time <= self.snapshots.peekitem(-1)[0]:
            raise SolverError(f"snapshot at t={state.time} does not follow t={self.snapshots.peekitem(-1)[0]}")
        self.snapshots[state.time] = state

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots.values())

    def __getitem__(self, index):
        return self.snapshots.peekitem(index)[1]

    @property
    def times(self):
        return list(self.snapshots.keys())

    @property
    def states(self):
        return list(self.snapshots.values())

    @property
    def initial(self):
        return self[0]

    @property
    def final(self):
        return self[-1]

    def at(self, time):
        '''
        The snapshot at time, or the linear interpolation of the two around it.
        '''
        if time in self.snapshots:
            return self.snapshots[time]
        i = self.snapshots.bisect_left(time)
        if i == 0 or i == len(self.snapshots):
            raise SolverError(f"t={time} outside [{self.times[0]}, {self.times[-1]}]")
        return interpolate_states(self[i - 1], self[i], time)

    def window(self, start, end):
        return [s for t, s in self.snapshots.items() if start <= t <= end]


def snapshot_times(start, config):
    '''
    start, start + every, … up to and including start + t_end.
    '''
    end = start + config.t_end
    times = [start]
    k = 1
    while start + k * config.snapshot_every < end - 1e-12 * max(1.0, abs(end)):
        times.append(start + k * config.snapshot_every)
        k += 1
    if config.t_end > 0:
        times.append(end)
    return times


def provenance(params, config, *states):
    return {"config_hash": config_hash(config),
            "model_hash": model_hash(params),
            "initial_hashes": [s.digest() for s in states]}


def _advance(states, params, config, end):
    '''
    One lockstep step of every state, sharing the smallest stable dt. Lands exactly on end.
    '''
    remaining = end - states[0].time
    dt = min([stable_dt(s, params, config) for s in states] + [remaining])
    final = dt >= remaining
    stepped = []
    for s in states:
        new = step(s, params, config, dt)
        stepped.append(new.at_time(end) if final else new)
    return stepped


def evolve(state0, params, config, log_every=2000):
    '''
    Steps state0 to state0.time + t_end with adaptive dt, recording snapshots every
    snapshot_every by linear interpolation between the steps that bracket them.
    '''
    times = snapshot_times(state0.time, config)
    traj = Trajectory(provenance(params, config, state0))
    traj.add(state0)

    pending = deque(times[1:])
    state = state0
    end = times[-1]
    steps = 0
    while pending:
        new, = _advance([state], params, config, end)
        while pending and pending[0] <= new.time:
            traj.add(interpolate_states(state, new, pending.popleft()))
        state = new
        steps += 1
        if steps % log_every == 0:
            log.debug(f"step {steps}: {state!r}")

    log.debug(f"evolve: {steps} steps to t={state.time:.6g}, {len(traj)} snapshots")
    return traj


# Lockstep runs of two initial states. diffs maps snapshot time to DiffNorms.
PairedTrajectory = namedtuple("PairedTrajectory", ("first", "second", "diffs"))


def difference(a, b):
    return a.M - b.M, a.rho - b.rho


def evolve_pair(state_a, state_b, params, config, delta=None, ws=None):
    '''
    Evolves two states with one shared dt sequence and records DiffNorms at every
    snapshot.

    The Y and Z norms accumulate from time 0 on sublevel masks of the first initial M:
    {M₀ > δ} for Y and {M₀ > δ/2} for Z. Without delta both masks are the whole grid.
    '''
    if state_a.grid != state_b.grid:
        raise SolverConfigError("paired states must share one grid")

    grid = state_a.grid
    ws = ws or workspace_for(grid)
    if delta is None:
        y_cells = z_cells = np.ones(grid.shape, dtype=bool)
    else:
        y_cells = state_a.M.values > delta
        z_cells = state_a.M.values > delta / 2.0
    z_interior = mask_interior(z_cells)

    times = snapshot_times(state_a.time, config)
    first = Trajectory(provenance(params, config, state_a, state_b))
    second = Trajectory(first.provenance)
    diffs = SortedDict()

    y_total = 0.0
    z_total = 0.0
    previous = None

    def record(a, b):
        nonlocal y_total, z_total, previous
        W, v = difference(a, b)
        if previous is not None:
            span = a.time - previous[0]
            y_total += span * grid.cell_volume * (np.sum(W.values[y_cells] ** 2)
                                                  + np.sum(v.values[y_cells] ** 2)
                                                  + np.sum(cell_gradient_magnitude(v)[y_cells] ** 2))
            z_total += (parabolic_increment(previous[1], W, z_cells, z_interior, span)
                        + parabolic_increment(previous[2], v, z_cells, z_interior, span))
        previous = (a.time, W, v)

        h = hminus1_norm(ws, W)
        l2 = lp_norm(v, 2)
        diffs[a.time] = DiffNorms(h, l2, float(np.hypot(h, l2)), float(np.sqrt(y_total)), float(np.sqrt(z_total)),
                                  degenerate_pairing(a.M, b.M, diffusion_exponent(params)))
        first.add(a)
        second.add(b)

    record(state_a, state_b)
    pending = deque(times[1:])
    pair = [state_a, state_b]
    end = times[-1]
    while pending:
        new = _advance(pair, params, config, end)
        while pending and pending[0] <= new[0].time:
            t = pending.popleft()
            record(interpolate_states(pair[0], new[0], t), interpolate_states(pair[1], new[1], t))
        pair = new

    return PairedTrajectory(first, second, diffs)


def mass(state):
    return integrate(state.M)
