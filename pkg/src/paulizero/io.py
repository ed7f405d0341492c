"""Artifact writers: JSON and CSV with 17-significant-digit floats.

Every artifact carries ``schema_version`` and the resolved run config.
Output is deterministic: keys are sorted and no timestamps are written.
"""

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
_FLOAT_FMT = ".17g"


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, _FLOAT_FMT)
    # keep floats recognisable as floats when read back
    return text if any(c in text for c in ".en") else text + ".0"


def _plain(obj):
    """Map numpy scalars/arrays, Fractions and tuples onto JSON-able types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        return format_float(obj)
    return json.dumps(obj)


def dumps(obj, indent=2):
    """JSON text with sorted keys and every float written with 17 significant digits."""
    return _encode(_plain(obj), indent, 0) + "\n"


def with_header(payload, config, command):
    out = dict(payload)
    out["schema_version"] = SCHEMA_VERSION
    out["command"] = command
    out["config"] = config
    return out


def write_json(path, payload, config, command):
    path = Path(path)
    path.write_text(dumps(with_header(payload, config, command)))
    return path


def write_csv(path, columns, rows, config, command):
    """CSV preceded by ``#`` comment lines holding the schema version and config."""
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write(f"# command: {command}\n")
    buf.write("# config: " + dumps(config, indent=0).replace("\n", "") + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def read_csv(path):
    """Inverse of ``write_csv``: ``(header_comments, columns, rows)``."""
    lines = Path(path).read_text().splitlines()
    comments = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    reader = csv.reader(body)
    columns = next(reader)
    return comments, columns, list(reader)


_MAGIC = b"PZMIN1\n"


def save_minimizer(path, array, meta):
    """Raw little-endian complex128 data after a JSON header.

    Layout: magic ``PZMIN1\\n``, 8-byte little-endian header length, UTF-8
    JSON header (``meta`` plus ``shape`` and ``dtype``), then the data.
    Written without timestamps, so repeated runs give identical bytes.
    """
    arr = np.ascontiguousarray(array, dtype="<c16")
    header = dumps({**meta, "shape": list(arr.shape), "dtype": "<c16"}).encode()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(arr.tobytes())
    return path


def load_minimizer(path):
    """Return ``(array, header_dict)`` from a ``save_minimizer`` file."""
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError("not a minimizer dump")
    k = len(_MAGIC)
    n = int.from_bytes(raw[k:k + 8], "little")
    header = json.loads(raw[k + 8:k + 8 + n])
    arr = np.frombuffer(raw[k + 8 + n:], dtype="<c16").reshape(header["shape"])
    return arr, header
