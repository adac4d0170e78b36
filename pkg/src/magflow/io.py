"""Machine-readable outputs: deterministic JSON, loop files and CSV tables.

Floats are always written with 17 significant digits so that identical
runs produce byte-identical files and values round-trip exactly.
"""

import csv
import json
import math

import numpy as np

from .dynamics import PhasePoint
from .loopspace import DiscreteLoop


def _fmt(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".eEn"):
        s += ".0"
    return s


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def loop_to_dict(surface_tag, loop):
    return {"surface": surface_tag, "T": loop.T, "samples": loop.samples.tolist()}


def loop_from_dict(data):
    return data["surface"], DiscreteLoop(np.asarray(data["samples"], dtype=float), data["T"])


def write_loop(path, surface_tag, loop, extra=None):
    data = loop_to_dict(surface_tag, loop)
    if extra:
        data.update(extra)
    write_json(path, data)


def read_loop(path):
    return loop_from_dict(read_json(path))


def phase_to_dict(z):
    return {"q": np.asarray(z.q).tolist(), "p": np.asarray(z.p).tolist()}


def phase_from_dict(data):
    return PhasePoint(np.asarray(data["q"], dtype=float), np.asarray(data["p"], dtype=float))


def write_trajectory_csv(path, traj):
    d = traj.q.shape[1]
    header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["H"]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for t, q, p, H in zip(traj.times, traj.q, traj.p, traj.energy):
            out.writerow([format(float(v), ".17g") for v in (t, *q, *p, H)])


def read_trajectory_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)
