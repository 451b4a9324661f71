'''
Persistence of fields and trajectories

A field file (.fld) is one line of JSON,

    {"dim": 1, "lengths": [1.0], "cells": [64], "boundary_value": 0.0, "dtype": "f64-le"}

then a newline, then the cell values as raw little-endian 64-bit floats in row-major
order. A trajectory directory holds manifest.json and one M_####.fld, rho_####.fld pair
per snapshot, numbered from 0 in time order.
'''
import json
import os

import numpy as np

from django.conf import settings

from .grid import GridError, ScalarField, grid_from_config
from .solver import State, Trajectory
from .util import canonical_json, sha256_of

from Site.logutils import log

DTYPE = "f64-le"


def field_bytes(f):
    header = dict(f.grid.describe(), boundary_value=f.boundary_value, dtype=DTYPE)
    return (json.dumps(header, sort_keys=True) + "\n").encode("utf-8") + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def save_field(f, path):
    '''
    Writes f to path and returns the sha256 of the bytes written.
    '''
    data = field_bytes(f)
    with open(path, "wb") as fh:
        fh.write(data)
    return sha256_of(data)


def load_field(path):
    with open(path, "rb") as fh:
        data = fh.read()

    newline = data.find(b"\n")
    if newline < 0:
        raise GridError(f"{path}: no header line")
    header = json.loads(data[:newline].decode("utf-8"))
    if header.get("dtype") != DTYPE:
        raise GridError(f"{path}: unsupported dtype {header.get('dtype')}")

    grid = grid_from_config(header)
    values = np.frombuffer(data[newline + 1:], dtype="<f8")
    if values.size != grid.size:
        raise GridError(f"{path}: {values.size} values for {grid.size} cells")
    return ScalarField(grid, values.reshape(grid.shape).astype(np.float64), header["boundary_value"])


def snapshot_name(stem, index):
    return f"{stem}_{index:0{settings.LAB_SNAPSHOT_DIGITS}d}.fld"


def save_trajectory(traj, directory, config=None, model=None):
    '''
    Writes a trajectory directory. config and model are the JSON documents the run was
    made from and go into the manifest verbatim. Returns the manifest as written.
    '''
    os.makedirs(directory, exist_ok=True)

    snapshots = []
    for index, state in enumerate(traj.states):
        m_name = snapshot_name("M", index)
        r_name = snapshot_name("rho", index)
        snapshots.append({"index": index,
                          "time": state.time,
                          "M": m_name,
                          "rho": r_name,
                          "M_sha256": save_field(state.M, os.path.join(directory, m_name)),
                          "rho_sha256": save_field(state.rho, os.path.join(directory, r_name))})

    manifest = {"config": config,
                "model": model,
                "grid": traj.initial.grid.describe(),
                "snapshot_times": [s["time"] for s in snapshots],
                "snapshots": snapshots,
                "provenance": traj.provenance}

    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        fh.write(canonical_json(manifest, indent=1))

    log.info(f"Wrote {len(snapshots)} snapshots to {directory}")
    return manifest


def load_trajectory(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)

    traj = Trajectory(manifest.get("provenance", {}))
    for s in manifest["snapshots"]:
        M = load_field(os.path.join(directory, s["M"]))
        rho = load_field(os.path.join(directory, s["rho"]))
        traj.add(State(M, rho, s["time"]))
    return traj


def save_state(state, directory, stem="diagnostic"):
    '''
    Writes the two fields of a single state, used for the snapshot left behind by an
    aborted run. Returns the directory.
    '''
    os.makedirs(directory, exist_ok=True)
    save_field(state.M, os.path.join(directory, f"{stem}_M.fld"))
    save_field(state.rho, os.path.join(directory, f"{stem}_rho.fld"))
    with open(os.path.join(directory, f"{stem}.json"), "w") as fh:
        fh.write(canonical_json({"time": state.time, "grid": state.grid.describe()}, indent=1))
    return directory
