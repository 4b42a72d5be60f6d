"""Output files stamped with a manifest hash.

CSV files start with a ``# manifest_sha256=<hash>`` comment line; JSON files
carry a ``manifest_sha256`` key.  The hash covers the canonical JSON of the
run configuration, so equal configurations give byte-identical outputs.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def manifest_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_plain)
    return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows, digest, fmt="csv"):
    """Write ``rows`` under ``header`` as CSV or as a JSON list of records."""
    path = Path(path)
    if fmt == "json":
        path = path.with_suffix(".json")
        recs = [dict(zip(header, r)) for r in rows]
        write_json(path, {"columns": list(header), "records": recs}, digest)
        return path
    path = path.with_suffix(".csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest_sha256={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_json(path, doc, digest):
    doc = dict(doc)
    doc["manifest_sha256"] = digest
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_plain, allow_nan=True)
        fh.write("\n")
    return Path(path)


def read_table(path):
    """Read a CSV written by :func:`write_table`: ``(header, rows, digest)``."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        digest = first.split("=", 1)[1] if first.startswith("# manifest_sha256=") else None
        rows = list(csv.reader(fh))
    return rows[0], rows[1:], digest
