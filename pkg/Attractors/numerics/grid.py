'''
Grids and discrete fields

Space is an axis-aligned box Ω = (0, L₀) × (0, L₁) in one or two dimensions, cut into
a structured cell-centered mesh. Everything else in the library consumes the operators
defined here.

Naming conventions used herein:

h         grid spacing along an axis (length / cells)
b         a field's Dirichlet boundary value (its trace on ∂Ω)
ghost     the value mirrored outside the boundary, 2·b − interior, so that the mean of
          the last interior cell and its ghost sits exactly on b at the boundary face
face      cell interfaces along one axis; axis k has cells[k] + 1 of them, the first
          and last lying on ∂Ω

Scalar fields live on cells, vector fields on faces (component k on the faces normal
to axis k). gradient maps cells to faces, divergence maps faces back to cells, and
laplacian_dirichlet is literally their composition so the two agree bitwise.

Arrays are indexed [i] in 1D and [i, j] in 2D with i along x (axis 0) and j along y.
'''
import hashlib

import numpy as np

from functools import reduce
from django.utils.functional import cached_property


class GridError(ValueError):
    '''
    Raised when a grid or field is built in violation of its contract.
    '''


class Grid:
    '''
    A structured cell-centered mesh on a box.

    Grids compare equal when their dimension, lengths and cell counts agree, which is
    what "the same grid" means to every operator here.
    '''

    def __init__(self, dim, lengths, cells):
        self.dim = int(dim)
        self.lengths = tuple(float(L) for L in lengths)
        self.cells = tuple(int(n) for n in cells)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Grid(dim={self.dim}, lengths={list(self.lengths)}, cells={list(self.cells)})"

    @property
    def key(self):
        return (self.dim, self.lengths, self.cells)

    @cached_property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @cached_property
    def shape(self):
        return self.cells

    @cached_property
    def size(self):
        return reduce(lambda a, b: a * b, self.cells, 1)

    @cached_property
    def cell_volume(self):
        return reduce(lambda a, b: a * b, self.spacing, 1.0)

    @cached_property
    def min_spacing(self):
        return min(self.spacing)

    @cached_property
    def diameter(self):
        return float(np.sqrt(sum(L * L for L in self.lengths)))

    @cached_property
    def measure(self):
        return reduce(lambda a, b: a * b, self.lengths, 1.0)

    def face_shape(self, axis):
        shape = list(self.cells)
        shape[axis] += 1
        return tuple(shape)

    def describe(self):
        '''
        A JSON friendly description, the same keys make_grid accepts.
        '''
        return {"dim": self.dim, "lengths": list(self.lengths), "cells": list(self.cells)}


def make_grid(dim, lengths, cells):
    '''
    Builds a Grid after checking its contract.

    :param dim: 1 or 2
    :param lengths: one positive length per axis
    :param cells: one cell count (≥ 3) per axis
    '''
    if dim not in (1, 2):
        raise GridError(f"unsupported dimension: {dim}")

    lengths = list(np.atleast_1d(lengths))
    cells = list(np.atleast_1d(cells))

    if len(lengths) != dim or len(cells) != dim:
        raise GridError(f"need {dim} lengths and {dim} cell counts, got {len(lengths)} and {len(cells)}")
    if not all(np.isfinite(L) and L > 0 for L in lengths):
        raise GridError(f"lengths must be positive: {lengths}")
    if not all(int(n) == n and n >= 3 for n in cells):
        raise GridError(f"need at least 3 cells per axis: {cells}")

    return Grid(dim, lengths, cells)


def grid_from_config(conf):
    return make_grid(conf["dim"], conf["lengths"], conf["cells"])


def cell_centers(grid):
    '''
    Coordinates of the cell centers, one array of grid.shape per axis.
    '''
    axes = [(np.arange(n) + 0.5) * h for n, h in zip(grid.cells, grid.spacing)]
    return tuple(np.meshgrid(*axes, indexing="ij"))


def cell_points(grid):
    '''
    Cell centers as an (N, dim) array in row-major cell order.
    '''
    return np.stack([c.ravel() for c in cell_centers(grid)], axis=1)


def face_weights(grid, axis):
    '''
    Quadrature weights for data on the faces normal to axis.

    Boundary faces carry half a cell volume, interior faces a full one. With these
    weights, integrate(φ·(−Lφ)) equals the squared L² norm of gradient(φ) exactly for
    any φ with zero trace, which is the discrete form of integrating by parts.
    '''
    w = np.full(grid.face_shape(axis), grid.cell_volume)
    first = [slice(None)] * grid.dim
    last = [slice(None)] * grid.dim
    first[axis] = 0
    last[axis] = -1
    w[tuple(first)] *= 0.5
    w[tuple(last)] *= 0.5
    return w


class ScalarField:
    '''
    Cell values on a grid together with a Dirichlet boundary value.

    Values are stored read-only, a ScalarField is never modified after construction.
    Arithmetic between fields acts on values and boundary values alike, so the
    difference of two states carries the difference of their traces.
    '''

    def __init__(self, grid, values, boundary_value=0.0):
        values = np.array(values, dtype=np.float64)
        if values.size != grid.size:
            raise GridError(f"field has {values.size} values, grid has {grid.size} cells")
        values = values.reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        if not np.isfinite(boundary_value):
            raise GridError("boundary value must be finite")

        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.boundary_value = float(boundary_value)

    def __repr__(self):
        return f"ScalarField({self.grid!r}, min={self.values.min():.6g}, max={self.values.max():.6g}, b={self.boundary_value:g})"

    def _check(self, other):
        if not isinstance(other, ScalarField):
            return False
        if other.grid != self.grid:
            raise GridError("fields live on different grids")
        return True

    def __add__(self, other):
        if self._check(other):
            return ScalarField(self.grid, self.values + other.values, self.boundary_value + other.boundary_value)
        return ScalarField(self.grid, self.values + other, self.boundary_value + other)

    def __sub__(self, other):
        if self._check(other):
            return ScalarField(self.grid, self.values - other.values, self.boundary_value - other.boundary_value)
        return ScalarField(self.grid, self.values - other, self.boundary_value - other)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * scalar, self.boundary_value * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def with_values(self, values):
        return ScalarField(self.grid, values, self.boundary_value)

    def digest(self):
        '''
        sha256 of the grid, boundary value and raw values. Identifies a field in masks
        and provenance records.
        '''
        sha = hashlib.sha256()
        sha.update(repr(self.grid.key).encode())
        sha.update(np.float64(self.boundary_value).tobytes())
        sha.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return sha.hexdigest()


class VectorField:
    '''
    Face-centered data, component k on the faces normal to axis k.
    '''

    def __init__(self, grid, components):
        components = tuple(np.asarray(c, dtype=np.float64) for c in components)
        if len(components) != grid.dim:
            raise GridError(f"need {grid.dim} components, got {len(components)}")
        for k, c in enumerate(components):
            if c.shape != grid.face_shape(k):
                raise GridError(f"component {k} has shape {c.shape}, faces need {grid.face_shape(k)}")

        self.grid = grid
        self.components = components

    def max_abs(self):
        return max(float(np.max(np.abs(c))) for c in self.components)


def sample(grid, fn, boundary_value=0.0):
    '''
    A ScalarField holding fn evaluated at the cell centers. fn takes one coordinate
    array per axis.
    '''
    return ScalarField(grid, fn(*cell_centers(grid)), boundary_value)


def constant(grid, value, boundary_value=None):
    return ScalarField(grid, np.full(grid.shape, float(value)), value if boundary_value is None else boundary_value)


def _with_ghosts(values, b, axis):
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(0, 1)
    hi[axis] = slice(-1, None)
    return np.concatenate((2.0 * b - values[tuple(lo)], values, 2.0 * b - values[tuple(hi)]), axis=axis)


def gradient(f):
    '''
    Face-centered differences of a cell field. Boundary faces use the ghost value
    2b − interior, which is a one-sided difference onto the trace.
    '''
    h = f.grid.spacing
    return VectorField(f.grid, [np.diff(_with_ghosts(f.values, f.boundary_value, k), axis=k) / h[k]
                                for k in range(f.grid.dim)])


def divergence(F, boundary_value=0.0):
    '''
    Cell-centered divergence of a face field (difference of the two bounding faces
    over the spacing, summed over axes).
    '''
    h = F.grid.spacing
    total = np.diff(F.components[0], axis=0) / h[0]
    for k in range(1, F.grid.dim):
        total = total + np.diff(F.components[k], axis=k) / h[k]
    return ScalarField(F.grid, total, boundary_value)


def laplacian_dirichlet(f):
    '''
    The 3-point (1D) or 5-point (2D) Dirichlet Laplacian, built as divergence of the
    gradient so that the two routes agree to the last bit.
    '''
    return divergence(gradient(f))


def integrate(f):
    '''
    Midpoint quadrature: the sum of cell values times the cell volume.
    '''
    return float(np.sum(f.values) * f.grid.cell_volume)


def vector_l2_norm(F):
    '''
    L² norm of a face field using face_weights.
    '''
    return float(np.sqrt(sum(np.sum(face_weights(F.grid, k) * c * c) for k, c in enumerate(F.components))))


def cell_gradient_magnitude(f):
    '''
    |∇f| per cell, averaging the two bounding faces on each axis. Used where a gradient
    has to be restricted to a cell mask.
    '''
    total = np.zeros(f.grid.shape)
    for k, c in enumerate(gradient(f).components):
        lo = [slice(None)] * f.grid.dim
        hi = [slice(None)] * f.grid.dim
        lo[k] = slice(0, -1)
        hi[k] = slice(1, None)
        mean = 0.5 * (c[tuple(lo)] + c[tuple(hi)])
        total += mean * mean
    return np.sqrt(total)
