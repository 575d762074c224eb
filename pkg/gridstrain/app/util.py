"""
Artifact writers shared by the domain modules and the orchestrator.

Every record written through here carries the manifest id and the decision flags, and JSON output
is deterministic (sorted keys, no timestamps) so reruns produce byte-identical files.
"""
import csv
import json
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from gridstrain.constants import DECISION_FLAGS

#: Columns that lead every CSV artifact.
STAMP_FIELDS = ("manifest_id",) + tuple(DECISION_FLAGS)


def stamp(record, manifest_id=""):
    """
    A copy of ``record`` with the manifest id and the decision flags in front.
    """
    stamped = {"manifest_id": manifest_id}
    stamped.update(DECISION_FLAGS)
    stamped.update(record)
    return stamped


def plain(value):
    """
    Convert numpy values to builtins and non-finite floats to ``None`` so the output is strict
    JSON.
    """
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps(value):
    return json.dumps(plain(value), sort_keys=True, allow_nan=False)


@contextmanager
def atomic_open(path, mode="w"):
    """
    Write to a temporary file next to ``path`` and move it into place on success.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(dir=path.parent, prefix=".{}.".format(path.name))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as handle:
            yield handle
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def write_json(path, value, manifest_id=None):
    if manifest_id is not None:
        value = stamp(value, manifest_id)
    with atomic_open(path) as handle:
        handle.write(json.dumps(plain(value), sort_keys=True, indent=2, allow_nan=False))
        handle.write("\n")


def read_json(path):
    with open(path) as handle:
        return json.load(handle)


def write_jsonl(path, records, manifest_id=None):
    with atomic_open(path) as handle:
        for record in records:
            if manifest_id is not None:
                record = stamp(record, manifest_id)
            handle.write(dumps(record))
            handle.write("\n")


def read_jsonl(path):
    """Records of a JSONL file; a missing file reads as empty."""
    path = Path(path)
    if not path.exists():
        return []
    with open(path) as handle:
        return [json.loads(line) for line in handle if line.strip()]


def _cell(value):
    value = plain(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path, fieldnames, rows, manifest_id=""):
    """
    Write rows (dicts) as CSV with the stamp columns first. Floats are written with ``repr`` so
    they read back exactly.
    """
    columns = list(STAMP_FIELDS) + [name for name in fieldnames if name not in STAMP_FIELDS]
    with atomic_open(path) as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in stamp(row, manifest_id).items()})
