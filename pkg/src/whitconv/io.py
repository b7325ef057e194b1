"""CSV and JSON formats for measures, tables and path ensembles.

CSV files start with a single '#'-prefixed version line, then a header row.
JSON objects are emitted in a fixed key order. Floats use repr, which round
trips exactly.
"""

import csv
import io
import json
import os
import tempfile
from contextlib import contextmanager

import numpy as np

from .errors import DomainError
from .spectral import DiscreteMeasure, GridDensity

FORMAT_VERSION = 1


def version_line():
    from . import __version__
    return f"# whitconv {__version__} format {FORMAT_VERSION}"


def _num(v):
    return repr(float(v))


def table_csv(header, columns):
    """CSV text for equal-length columns, version line first."""
    cols = [np.asarray(c) for c in columns]
    n = {c.size for c in cols}
    if len(n) > 1:
        raise DomainError("columns must have equal length")
    buf = io.StringIO()
    buf.write(version_line() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def read_table(text):
    """(header, rows) from CSV text; '#' lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise DomainError("empty table")
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


def dumps(obj):
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------- measures

def measure_to_json(mu):
    if isinstance(mu, GridDensity):
        return {"kind": "density", "grid": [float(v) for v in mu.grid], "values": [float(v) for v in mu.values],
                "atom_at_zero": float(mu.atom_at_zero),
                "atoms": [{"x": float(x), "w": float(w)} for x, w in zip(mu.atoms.locations, mu.atoms.weights)]}
    if isinstance(mu, DiscreteMeasure):
        pos = mu.locations > 0
        zero = float(mu.weights[~pos].sum())
        return {"kind": "discrete", "grid": [float(v) for v in mu.locations[pos]],
                "values": [float(v) for v in mu.weights[pos]], "atom_at_zero": zero, "atoms": []}
    raise DomainError(f"cannot serialise {type(mu).__name__}")


def measure_from_json(obj):
    """DiscreteMeasure or GridDensity. Without a 'kind' key the grid holds atoms."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind", "discrete")
    grid = np.asarray(obj.get("grid", []), dtype=float)
    values = np.asarray(obj.get("values", []), dtype=float)
    a0 = float(obj.get("atom_at_zero", 0.0))
    if kind == "density":
        atoms = obj.get("atoms", [])
        am = DiscreteMeasure([a["x"] for a in atoms], [a["w"] for a in atoms]) if atoms else DiscreteMeasure.empty()
        return GridDensity(grid, values, a0, am)
    if kind != "discrete":
        raise DomainError(f"unknown measure kind {kind!r}")
    locs = list(grid)
    wts = list(values)
    if a0 > 0:
        locs.insert(0, 0.0)
        wts.insert(0, a0)
    if not locs:
        return DiscreteMeasure.empty()
    return DiscreteMeasure(locs, wts)


def measure_to_csv(mu):
    """Columns x, value. The atom at 0 is the row with x = 0."""
    if isinstance(mu, GridDensity):
        if len(mu.atoms):
            raise DomainError("a density with positive atoms needs the JSON format")
        xs = np.concatenate([[0.0], mu.grid]) if mu.atom_at_zero else mu.grid
        vs = np.concatenate([[mu.atom_at_zero], mu.values]) if mu.atom_at_zero else mu.values
        return table_csv(["x", "value"], [xs, vs])
    return table_csv(["x", "value"], [mu.locations, mu.weights])


def measure_from_csv(text, kind="discrete"):
    header, rows = read_table(text)
    if [h.strip() for h in header[:2]] != ["x", "value"]:
        raise DomainError("measure CSV needs columns x, value")
    arr = np.asarray(rows, dtype=float).reshape(-1, 2)
    if kind == "discrete":
        return DiscreteMeasure(arr[:, 0], arr[:, 1])
    zero = arr[:, 0] == 0
    return GridDensity(arr[~zero, 0], arr[~zero, 1], float(arr[zero, 1].sum()))


def read_measure(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return measure_from_json(text)
    return measure_from_csv(text)


# -------------------------------------------------------------- ensembles

def ensemble_csv(ens):
    """Long format: path_id, t, value."""
    n, m = ens.values.shape
    pid = np.repeat(np.arange(n), m)
    tt = np.tile(ens.times, n)
    return table_csv(["path_id", "t", "value"], [pid, tt.astype(float), ens.values.ravel().astype(float)])


def ensemble_manifest(ens, extra=None):
    out = {"params": {"alpha": float(ens.params.alpha)},
           "exponent": ens.exponent.to_json() if ens.exponent is not None else None,
           "seed": int(ens.seed), "scheme": ens.scheme,
           "n_paths": int(ens.values.shape[0]), "times": [float(t) for t in ens.times]}
    if extra:
        out.update(extra)
    return out


# ------------------------------------------------------------ safe writes

class OutputSet:
    """Files written atomically; on failure everything written so far is removed."""

    def __init__(self):
        self.written = []

    def write(self, path, text):
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".whitconv-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(path)

    def rollback(self):
        for path in self.written:
            try:
                os.unlink(path)
            except FileNotFoundError:
                pass
        self.written.clear()


@contextmanager
def output_set():
    out = OutputSet()
    try:
        yield out
    except BaseException:
        out.rollback()
        raise
