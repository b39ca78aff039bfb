"""File formats: CSV time series, JSON models and summaries.

CSV files are comma separated with one header row and floats written with
17 significant digits, so a write/read round trip is exact.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .linear import LinearEncoderDecoder
from .neural import TaeModel

FLOAT_FMT = "%.17g"


def dim_header(n):
    return [f"dim_{i}" for i in range(n)]


def write_csv(path, data, header=None):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    header = header or dim_header(data.shape[1])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def read_csv(path):
    """Read a headed numeric CSV into a ``(T, N)`` float array."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"could not parse {path}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"{path} contains no data rows")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path} contains non-finite values")
    return data


def write_states(path, states):
    states = np.asarray(states, dtype=np.int64).ravel()
    with open(path, "w", newline="") as fh:
        fh.write("state\n")
        np.savetxt(fh, states, fmt="%d")


def read_states(path):
    data = read_csv(path)
    if data.shape[1] != 1:
        raise DataError(f"{path} must have a single 'state' column")
    states = data[:, 0]
    if np.any(states != np.round(states)) or np.any(states < 0):
        raise DataError(f"{path} contains non-integer or negative states")
    return states.astype(np.int64)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(canonical_json(obj))


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def save_model(path, model):
    write_json(path, model.to_dict())


def load_model(path):
    d = read_json(path)
    kind = d.get("model")
    if kind == "linear":
        return LinearEncoderDecoder.from_dict(d)
    if kind == "tae":
        return TaeModel.from_dict(d)
    raise DataError(f"{path} is not a model file (model = {kind!r})")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def its_table_rows(table):
    n = table.timescales.shape[1]
    header = ["lag"] + [f"t_{i + 1}" for i in range(n)] + [f"valid_{i + 1}" for i in range(n)]
    rows = [[lag, *ts.tolist(), *ok.tolist()] for lag, ts, ok in table.rows()]
    return header, rows


def write_its_table(path, table):
    write_rows(path, *its_table_rows(table))


def read_its_table(path):
    """Inverse of :func:`write_its_table`: ``(lags, timescales, valid)``."""
    header, rows = read_rows(path)
    n = (len(header) - 1) // 2
    lags = [int(r[0]) for r in rows]
    ts = np.array([[float(v) for v in r[1:1 + n]] for r in rows]).reshape(len(rows), n)
    valid = np.array([[v == "true" for v in r[1 + n:]] for r in rows]).reshape(len(rows), n)
    return lags, ts, valid
