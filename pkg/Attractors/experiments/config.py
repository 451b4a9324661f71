'''
Experiment configuration

An experiment config is one JSON document. DEFAULT_CONFIG holds every key the harness
knows. A user file is deep-merged over the defaults, then any --set overrides are
applied by dotted path, then the whole document is validated. Keys the defaults do not
have are rejected, except inside model.constants whose keys make_params checks itself.

Every tolerance a study judges a verdict by lives under studies.<name>, so a report can
always name the config key it used.
'''
import json
import os

from django.conf import settings

from ..numerics.enums import InitialFamilies
from ..numerics.grid import GridError, grid_from_config
from ..numerics.model import ModelError, params_from_config
from ..numerics.solver import SolverConfigError, make_solver_config
from ..numerics.util import deep_merge, unknown_keys, set_dotted, parse_literal


class ConfigError(ValueError):
    '''
    An experiment config could not be read or did not validate.
    '''


DEFAULT_CONFIG = {
    "grid": {"dim": 1, "lengths": [1.0], "cells": [64]},
    "model": {"alpha": 4.0,
              "gamma": 3.5,
              "beta": 3.5,
              "spec": "example2_corrected",
              "constants": {},
              "nondegenerate": False},
    "solver": {"reg_n": 10,
               "dt_max": 0.01,
               "cfl_safety": 0.9,
               "t_end": 1.0,
               "snapshot_every": 0.1,
               "scheme": "imex_upwind"},
    # Initial data. center and radius are in units of the domain lengths.
    "initial": {"family": "bump",
                "amplitude": 1.0,
                "center": [0.5],
                "radius": 0.25,
                "rho": 1.0,
                "modes": 4},
    "ensemble": {"count": 4, "spread": 0.1},
    "seed": None,
    "threads": None,
    "output": {"save_trajectories": False},
    "studies": {
        "dissipative": {"amplitudes": [1.0, 5.0, 25.0],
                        "t_end": 10.0,
                        "snapshot_every": 0.25,
                        "min_omega": 0.0,
                        "norm_ratio": 2.0,
                        "counterexample": {"enabled": True,
                                           "amplitude": 0.01,
                                           "t_end": 5.0,
                                           "max_omega": 0.0}},
        "pair": {"epsilons": [1e-2, 1e-3, 1e-4],
                 "perturb": "rho",
                 "t_end": 5.0,
                 "snapshot_every": 0.25,
                 "thetas": [1.0, 0.75, 0.5, 0.25],
                 "holder_growth": 10.0,
                 "stability_tol": 0.2,
                 "max_L0": 1e6,
                 "max_failed_pairs": 0},
        "smoothing": {"deltas": [0.05, 0.1, 0.2],
                      "horizons": [0.5, 1.0, 2.0],
                      "t1_fraction": 0.5,
                      "epsilon": 1e-3,
                      "pairs": 20,
                      "localized_pairs": 2,
                      "localized_factor": 0.25,
                      "snapshot_every": 0.05,
                      "contraction_tol": 0.1,
                      "violation_tol": 1e-12,
                      "max_constant": 1e12,
                      "closer_tol": 0.0},
        "regularization": {"ladder": [10, 20, 40, 80],
                           "decrease_tol": 0.0,
                           "t_end": 1.0},
        "propagation": {"t_end": 1.0,
                        "snapshot_every": 0.05,
                        "reg_n": 1000,
                        "front_fraction": 0.5,
                        "support_tol": 1e-12},
        "dimension": {"t_end": 50.0,
                      "transient": 10.0,
                      "snapshot_every": 0.5,
                      "block": 16,
                      "radii": [1e-3, 2e-3, 5e-3, 1e-2, 2e-2],
                      "min_snapshots": 10,
                      "counterexample": {"enabled": True,
                                         "amplitude": 0.01,
                                         "t_end": 5.0,
                                         "transient": 0.0}},
    },
}

PERTURBATIONS = ("rho", "M", "both")


def load_config(path):
    '''
    Reads a JSON config file, reporting the parse position of malformed JSON.
    '''
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        conf = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    if not isinstance(conf, dict):
        raise ConfigError(f"{path}: a config must be a JSON object")
    return conf


def parse_override(text):
    '''
    "a.b.c=value" as (dotted key, parsed value).
    '''
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    return key.strip(), parse_literal(value.strip())


def build_config(overrides=None, base=None):
    '''
    The validated config: defaults, then base deep-merged over them, then overrides.

    :param overrides: {dotted.key: value} or a list of "dotted.key=value" strings
    :param base: a (partial) config document, typically read with load_config
    '''
    base = base or {}
    unknown = unknown_keys(DEFAULT_CONFIG, base)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    conf = deep_merge(DEFAULT_CONFIG, base)

    if isinstance(overrides, (list, tuple)):
        overrides = dict(parse_override(o) for o in overrides)
    for key, value in (overrides or {}).items():
        path, _, leaf = key.rpartition(".")
        parent = _lookup(conf, path) if path else conf
        if not isinstance(parent, dict) or (leaf not in parent and path != "model.constants"):
            raise ConfigError(f"unknown config key: {key}")
        set_dotted(conf, key, value)

    validate_config(conf)
    return conf


def _lookup(conf, dotted):
    node = conf
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            return None
        node = node[k]
    return node


def _positive(conf, key, integer=False):
    value = _lookup(conf, key)
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind) or not value > 0:
        raise ConfigError(f"{key} must be a positive {'integer' if integer else 'number'}, got {value!r}")


def _nonnegative(conf, key):
    value = _lookup(conf, key)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value >= 0:
        raise ConfigError(f"{key} must be a nonnegative number, got {value!r}")


def _number_list(conf, key, minimum=1, positive=True):
    values = _lookup(conf, key)
    if not isinstance(values, list) or len(values) < minimum:
        raise ConfigError(f"{key} must be a list of at least {minimum} numbers, got {values!r}")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 if positive else v >= 0):
            raise ConfigError(f"{key} holds {v!r}, expected {'positive' if positive else 'nonnegative'} numbers")


def validate_config(conf):
    '''
    Checks conf in place, raising ConfigError on the first problem found.
    '''
    try:
        grid = grid_from_config(conf["grid"])
        params_from_config(conf["model"])
        make_solver_config(**conf["solver"])
    except (GridError, ModelError, SolverConfigError) as e:
        raise ConfigError(str(e))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed config: {e}")

    initial = conf["initial"]
    if initial["family"] not in InitialFamilies:
        raise ConfigError(f"unknown initial family '{initial['family']}', expected one of {list(InitialFamilies)}")
    _nonnegative(conf, "initial.amplitude")
    _positive(conf, "initial.radius")
    _positive(conf, "initial.modes", integer=True)
    _nonnegative(conf, "initial.rho")
    if not isinstance(initial["center"], list) or len(initial["center"]) not in (1, grid.dim):
        raise ConfigError(f"initial.center needs 1 or {grid.dim} coordinates, got {initial['center']!r}")

    _positive(conf, "ensemble.count", integer=True)
    _nonnegative(conf, "ensemble.spread")

    for key in ("seed", "threads"):
        value = conf[key]
        if value is not None and (isinstance(value, bool) or not isinstance(value, int) or value < (1 if key == "threads" else 0)):
            raise ConfigError(f"{key} must be {'a positive' if key == 'threads' else 'a nonnegative'} integer or null, got {value!r}")

    s = "studies."
    _number_list(conf, s + "dissipative.amplitudes", positive=False)
    for key in ("dissipative.t_end", "dissipative.counterexample.t_end", "pair.t_end", "regularization.t_end",
                "propagation.t_end", "dimension.t_end", "dimension.transient",
                "dimension.counterexample.t_end", "dimension.counterexample.transient",
                "smoothing.closer_tol", "regularization.decrease_tol"):
        _nonnegative(conf, s + key)
    for key in ("dissipative.snapshot_every", "dissipative.norm_ratio", "dissipative.counterexample.amplitude",
                "pair.snapshot_every", "pair.holder_growth", "pair.stability_tol", "pair.max_L0",
                "smoothing.t1_fraction", "smoothing.epsilon", "smoothing.localized_factor",
                "smoothing.snapshot_every", "smoothing.contraction_tol", "smoothing.violation_tol",
                "smoothing.max_constant",
                "propagation.snapshot_every", "propagation.front_fraction", "propagation.support_tol",
                "dimension.snapshot_every", "dimension.counterexample.amplitude"):
        _positive(conf, s + key)
    for key in ("smoothing.pairs", "propagation.reg_n", "dimension.block", "dimension.min_snapshots"):
        _positive(conf, s + key, integer=True)
    if not isinstance(_lookup(conf, s + "smoothing.localized_pairs"), int) or conf["studies"]["smoothing"]["localized_pairs"] < 0:
        raise ConfigError("studies.smoothing.localized_pairs must be a nonnegative integer")
    failures = _lookup(conf, s + "pair.max_failed_pairs")
    if isinstance(failures, bool) or not isinstance(failures, int) or failures < 0:
        raise ConfigError("studies.pair.max_failed_pairs must be a nonnegative integer")
    if not _lookup(conf, s + "smoothing.t1_fraction") < 1:
        raise ConfigError("studies.smoothing.t1_fraction must lie in (0, 1)")
    if not _lookup(conf, s + "regularization.decrease_tol") < 1:
        raise ConfigError("studies.regularization.decrease_tol must lie in [0, 1)")

    _number_list(conf, s + "pair.epsilons", positive=False)
    _number_list(conf, s + "pair.thetas")
    if any(t > 1 for t in conf["studies"]["pair"]["thetas"]):
        raise ConfigError("studies.pair.thetas must lie in (0, 1]")
    if conf["studies"]["pair"]["perturb"] not in PERTURBATIONS:
        raise ConfigError(f"studies.pair.perturb must be one of {PERTURBATIONS}")
    _number_list(conf, s + "smoothing.deltas")
    _number_list(conf, s + "smoothing.horizons")
    _number_list(conf, s + "regularization.ladder")
    if any(isinstance(n, float) for n in conf["studies"]["regularization"]["ladder"]):
        raise ConfigError("studies.regularization.ladder must hold integers")
    _number_list(conf, s + "dimension.radii", minimum=4)

    for key in ("output.save_trajectories", "studies.dissipative.counterexample.enabled",
                "studies.dimension.counterexample.enabled"):
        if not isinstance(_lookup(conf, key), bool):
            raise ConfigError(f"{key} must be true or false")
    return conf


def seed_of(conf):
    return settings.LAB_SEED if conf.get("seed") is None else conf["seed"]


def threads_of(conf):
    return settings.LAB_THREADS if conf.get("threads") is None else conf["threads"]
