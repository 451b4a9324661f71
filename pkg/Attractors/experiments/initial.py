'''
Initial data for the studies

Every family is nonnegative with zero trace, so each one is an admissible M₀. ρ₀ is the
constant config value initial.rho (the trace stays 1). Random draws come from numpy
Generators seeded from the config seed, one child seed per ensemble member, so an
ensemble does not change when it is evaluated in parallel.
'''
import numpy as np

from ..numerics.grid import cell_centers
from ..numerics.solver import make_state


def _unit_coordinates(grid):
    return [c / L for c, L in zip(cell_centers(grid), grid.lengths)]


def _center(grid, center):
    return list(center) * grid.dim if len(center) == 1 else list(center)


def _radial(grid, center):
    x = _unit_coordinates(grid)
    c = _center(grid, center)
    return np.sqrt(sum((xk - ck) ** 2 for xk, ck in zip(x, c)))


def bump(grid, amplitude, center, radius):
    '''
    amplitude·cos²(πr/2R) inside r < R, 0 outside, r measured in domain units.
    '''
    r = _radial(grid, center)
    return np.where(r < radius, amplitude * np.cos(0.5 * np.pi * r / radius) ** 2, 0.0)


def plateau(grid, amplitude, center, radius):
    '''
    Flat at amplitude out to R/2, cos² shoulders down to 0 at R.
    '''
    r = _radial(grid, center)
    shoulder = np.cos(np.pi * (r - 0.5 * radius) / radius) ** 2
    return amplitude * np.where(r <= 0.5 * radius, 1.0, np.where(r < radius, shoulder, 0.0))


def sine_profile(grid):
    '''
    Π_k sin(π x_k / L_k), the first Dirichlet eigenfunction, positive inside with zero trace.
    '''
    profile = np.ones(grid.shape)
    for x in _unit_coordinates(grid):
        profile = profile * np.sin(np.pi * x)
    return profile


def trig(grid, amplitude, modes, rng):
    '''
    The square of a random sine series with the given number of modes per axis, scaled to
    a maximum of amplitude.
    '''
    x = _unit_coordinates(grid)
    series = np.zeros(grid.shape)
    for index in np.ndindex(*([modes] * grid.dim)):
        term = rng.normal() / (1.0 + sum(index))
        for k, xk in zip(index, x):
            term = term * np.sin((k + 1) * np.pi * xk)
        series = series + term
    square = series ** 2
    top = np.max(square)
    return amplitude * square / top if top > 0 else square


def initial_M(grid, initial, rng=None, amplitude=None, center=None):
    '''
    M₀ of the configured family. amplitude and center override the config values.
    '''
    amplitude = initial["amplitude"] if amplitude is None else amplitude
    center = initial["center"] if center is None else center
    family = initial["family"]

    if family == "bump":
        return bump(grid, amplitude, center, initial["radius"])
    if family == "plateau":
        return plateau(grid, amplitude, center, initial["radius"])
    if family == "trig":
        return trig(grid, amplitude, initial["modes"], rng or np.random.default_rng(0))
    return np.zeros(grid.shape)


def initial_state(grid, initial, rng=None, amplitude=None, center=None):
    return make_state(grid, initial_M(grid, initial, rng, amplitude, center), np.full(grid.shape, float(initial["rho"])))


def member_rngs(seed, count):
    '''
    One independent Generator per ensemble member, all derived from seed.
    '''
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def ensemble(grid, initial, seed, count, spread):
    '''
    count initial states. Bumps and plateaus get their centers jittered by up to spread
    (in domain units), trig sums get their own random coefficients.
    '''
    states = []
    base = _center(grid, initial["center"])
    for rng in member_rngs(seed, count):
        jitter = rng.uniform(-spread, spread, size=grid.dim)
        center = [c + j for c, j in zip(base, jitter)]
        states.append(initial_state(grid, initial, rng, center=center))
    return states


def perturb(state, epsilon, which, profile=None, rng=None):
    '''
    state with ε·profile added to ρ, M or both. The default profile is the sine
    eigenfunction. Perturbations of M are one-signed so M stays nonnegative.
    '''
    grid = state.grid
    profile = sine_profile(grid) if profile is None else profile
    M = state.M.values.copy()
    rho = state.rho.values.copy()
    if which in ("M", "both"):
        M = M + epsilon * np.abs(profile)
    if which in ("rho", "both"):
        rho = np.maximum(rho + epsilon * profile, 0.0)
    return make_state(grid, M, rho, state.time)
