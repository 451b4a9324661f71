'''
Plumbing shared by the studies: turning a config into model, grid, solver settings and
initial data, fanning runs out over a thread pool and catching solver failures per run.
'''
from concurrent.futures import ThreadPoolExecutor

from ..numerics.grid import grid_from_config
from ..numerics.model import model_hash, params_from_config
from ..numerics.solver import SolverError, config_hash, evolve, make_solver_config
from ..numerics.util import canonical_json, sha256_of
from .config import seed_of, threads_of

from Site.logutils import log, run_label


def grid_of(conf):
    return grid_from_config(conf["grid"])


def params_of(conf, **changes):
    model = dict(conf["model"], **changes)
    return params_from_config(model)


def solver_of(conf, **changes):
    return make_solver_config(**dict(conf["solver"], **changes))


def study_provenance(conf, params, solver):
    return {"config_hash": sha256_of(canonical_json(conf)),
            "model_hash": model_hash(params),
            "solver_hash": config_hash(solver),
            "seed": seed_of(conf)}


def fan_out(fn, items, conf):
    '''
    [fn(item) for item in items], evaluated on a pool of the configured number of
    threads. Results come back in the order of items whatever order the threads
    finish in.
    '''
    items = list(items)
    threads = threads_of(conf)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def safe_evolve(state0, params, solver, label):
    '''
    (trajectory, None) or, when the solver gives up, (None, failure record).
    '''
    try:
        with run_label(label):
            return evolve(state0, params, solver), None
    except SolverError as e:
        log.warning(f"{label}: solver failed: {e}")
        failed_at = e.state.time if e.state is not None else None
        return None, {"label": label, "reason": e.reason, "message": str(e), "failed_at": failed_at}
