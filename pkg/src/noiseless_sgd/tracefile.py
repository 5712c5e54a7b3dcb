"""Trace files: one ``#``-prefixed JSON header line followed by a CSV body."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import numpy as np

from . import __version__
from .rng import PRNG_ID

BASE_COLUMNS = ("recon_sq", "risk", "min_risk")


def column_names(mean, extra_columns=()) -> list:
    cols = ["step"]
    if mean.t_rescaled is not None:
        cols.append("t_rescaled")
    names = list(BASE_COLUMNS) + [c for c in mean.columns if c.startswith("phi_")]
    for name in names:
        cols += [f"{name}_mean", f"{name}_stderr"] if mean.replicates > 1 else [name]
    return cols + list(extra_columns)


def _fmt(v) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def render(header: dict, mean, extra_columns=None) -> str:
    extra_columns = extra_columns or {}
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(column_names(mean, extra_columns))
    names = list(BASE_COLUMNS) + [c for c in mean.columns if c.startswith("phi_")]
    for i, step in enumerate(mean.steps):
        row = [str(int(step))]
        if mean.t_rescaled is not None:
            row.append(_fmt(mean.t_rescaled[i]))
        for name in names:
            row.append(_fmt(mean.mean(name)[i]))
            if mean.replicates > 1:
                row.append(_fmt(mean.stderr(name)[i]))
        row += [_fmt(col[i]) for col in extra_columns.values()]
        w.writerow(row)
    return buf.getvalue()


def make_header(config: dict, **more) -> dict:
    h = {"config": config, "prng": PRNG_ID, "software": f"noiseless_sgd {__version__}"}
    h.update(more)
    return h


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read(path):
    """Return ``(header dict, column names, body as float array)``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[1:])
        rows = list(csv.reader(fh))
    cols = rows[0]
    body = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.empty((0, len(cols)))
    return header, cols, body


def body_text(path) -> str:
    with open(path) as fh:
        fh.readline()
        return fh.read()
