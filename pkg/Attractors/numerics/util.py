'''
Small helpers shared by the numerics and experiments packages.
'''
import hashlib
import json
import math

from copy import deepcopy

import numpy as np


def plain(o):
    '''
    Converts numpy scalars and arrays, tuples and namedtuples in a nested structure to
    plain JSON types. Non-finite floats become the strings "inf", "-inf" and "nan" so
    that reports stay strict JSON.
    '''
    if isinstance(o, dict):
        return {str(k): plain(v) for k, v in o.items()}
    if hasattr(o, "_asdict"):
        return plain(o._asdict())
    if isinstance(o, (list, tuple)):
        return [plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [plain(v) for v in o.tolist()]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        x = float(o)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return o


def canonical_json(o, indent=None):
    '''
    Deterministic JSON text: sorted keys, plain types, repr-exact floats.
    '''
    return json.dumps(plain(o), sort_keys=True, indent=indent, ensure_ascii=False, allow_nan=False)


def sha256_of(text):
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def parse_literal(text):
    '''
    An override value from the command line: JSON literals (numbers, booleans, null,
    lists, objects) are parsed, anything else is kept as a string.
    '''
    try:
        return json.loads(text)
    except ValueError:
        return text


def deep_merge(base, overlay):
    '''
    A copy of base with overlay merged in, recursing into dicts.
    '''
    merged = deepcopy(base)
    for k, v in overlay.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = deep_merge(merged[k], v)
        else:
            merged[k] = deepcopy(v)
    return merged


def unknown_keys(base, candidate, prefix=""):
    '''
    Dotted paths in candidate that base does not have. Dicts in base that are empty
    accept any keys.
    '''
    found = []
    for k, v in candidate.items():
        path = f"{prefix}{k}"
        if k not in base:
            found.append(path)
        elif isinstance(v, dict) and isinstance(base[k], dict) and base[k]:
            found.extend(unknown_keys(base[k], v, path + "."))
    return found


def set_dotted(conf, dotted, value):
    '''
    Sets conf[a][b][c] = value for dotted == "a.b.c", creating no new levels.
    Returns False if an intermediate level is missing or not a dict.
    '''
    keys = dotted.split(".")
    node = conf
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node or not isinstance(node[k], dict):
            return False
        node = node[k]
    node[keys[-1]] = value
    return True
