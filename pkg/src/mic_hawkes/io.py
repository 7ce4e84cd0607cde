"""File formats: event logs, edge lists, parameter/report documents and run manifests.

Event log (CSV, header ``user,cascade,timestamp``)::

    user,cascade,timestamp
    0,0,0.5
    1,0,1.0

Edge list (CSV, header ``src,dst[,weight]``): one directed edge ``src -> dst``
per row, meaning ``src`` influences ``dst``.  Without a weight column the
graph is adjacency-only.

Parameter document (JSON)::

    {"schema": "mic-hawkes/params", "version": 1,
     "n_users": N, "n_cascades": C,
     "M": [[...] * C] * N, "Sigma": [[...] * C] * C,
     "W": {"shape": [N, N], "triplets": [[src, dst, weight], ...]},
     "kernel": {"kind": "exponential", "tau": tau},
     "mixing": {"kind": "boltzmann" | "linear", "beta": beta}}

Reals are written with ``repr`` so every file round-trips exactly.  Other
documents (metrics, moments, layout, tables) carry ``schema`` and
``version`` fields the same way.  All writes go to a temporary file in the
target directory and are renamed into place.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .model import EventLog, KernelSpec, MixingSpec, ModelError, ModelParams, UserGraph

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Malformed input file."""


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path, doc: dict, schema: str | None = None) -> None:
    if schema is not None:
        doc = {"schema": schema, "version": SCHEMA_VERSION, **doc}
    atomic_write_text(path, json.dumps(_to_jsonable(doc), indent=2, sort_keys=False) + "\n")


def read_json(path, schema: str | None = None) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if schema is not None and doc.get("schema") != schema:
        raise DataError(f"{path}: expected schema {schema!r}, found {doc.get('schema')!r}")
    return doc


# ---------------------------------------------------------------------------
# event logs


def read_event_log(path, T: float | None = None, n_users: int | None = None,
                   n_cascades: int | None = None, delimiter: str = ",") -> EventLog:
    """Parse a ``user,cascade,timestamp`` file; output is sorted by (time, user, cascade).

    ``T`` defaults to the largest timestamp and must be given for an empty log.
    """
    users, cascades, times = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header line")
        header = [h.strip().lower() for h in header]
        if header[:3] != ["user", "cascade", "timestamp"]:
            raise DataError(f"{path}:1: header must be 'user,cascade,timestamp', got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) < 3:
                raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            for col, (name, cast) in enumerate((("user", int), ("cascade", int), ("timestamp", float))):
                try:
                    val = cast(row[col])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {col + 1} ({name}): cannot parse {row[col]!r}") from None
                if name == "timestamp":
                    if not math.isfinite(val) or val < 0:
                        raise DataError(f"{path}:{lineno}: column 3 (timestamp): must be finite and >= 0, got {row[col]!r}")
                    times.append(val)
                else:
                    bound = n_users if name == "user" else n_cascades
                    if val < 0 or (bound is not None and val >= bound):
                        raise DataError(f"{path}:{lineno}: column {col + 1} ({name}): id {val} out of range")
                    (users if name == "user" else cascades).append(val)
    if T is None:
        if not times:
            raise DataError(f"{path}: empty event log needs an explicit horizon")
        T = max(times)
        if T <= 0:
            T = 1.0
    elif times and max(times) > T:
        raise DataError(f"{path}: timestamp {max(times)} exceeds horizon {T}")
    return EventLog(np.array(users, dtype=np.int64), np.array(cascades, dtype=np.int64),
                    np.array(times, dtype=float), T)


def event_log_text(log: EventLog) -> str:
    buf = _io.StringIO()
    buf.write("user,cascade,timestamp\n")
    for u, c, t in log:
        buf.write(f"{u},{c},{t!r}\n")
    return buf.getvalue()


def write_event_log(path, log: EventLog) -> None:
    atomic_write_text(path, event_log_text(log))


# ---------------------------------------------------------------------------
# graphs


def read_graph(path, n_users: int | None = None, delimiter: str = ",") -> UserGraph:
    """Parse a ``src,dst[,weight]`` edge list."""
    edges = []
    has_weight = False
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header line")
        header = [h.strip().lower() for h in header]
        if header[:2] != ["src", "dst"]:
            raise DataError(f"{path}:1: header must be 'src,dst[,weight]'")
        has_weight = len(header) >= 3 and header[2] == "weight"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            try:
                src, dst = int(row[0]), int(row[1])
                w = float(row[2]) if has_weight and len(row) > 2 and row[2].strip() else None
            except (ValueError, IndexError):
                raise DataError(f"{path}:{lineno}: malformed edge row {row!r}") from None
            if src < 0 or dst < 0:
                raise DataError(f"{path}:{lineno}: negative node id")
            if w is not None and (not math.isfinite(w) or w < 0):
                raise DataError(f"{path}:{lineno}: column 3 (weight): must be finite and >= 0, got {row[2]!r}")
            edges.append((src, dst, w, lineno))
    top = max((max(s, d) for s, d, _, _ in edges), default=-1) + 1
    if n_users is None:
        n_users = max(top, 1)
    for s, d, _, lineno in edges:
        if s >= n_users or d >= n_users:
            raise DataError(f"{path}:{lineno}: dangling node id (graph has {n_users} users)")
    adj = np.zeros((n_users, n_users), dtype=bool)
    W = np.zeros((n_users, n_users))
    for s, d, w, _ in edges:
        adj[s, d] = True
        if w is not None:
            W[s, d] = w
    return UserGraph(adj, W)


def graph_text(graph: UserGraph, weights: bool = True) -> str:
    buf = _io.StringIO()
    buf.write("src,dst,weight\n" if weights else "src,dst\n")
    for s, d in zip(*np.nonzero(graph.adjacency)):
        if weights:
            buf.write(f"{s},{d},{float(graph.weights[s, d])!r}\n")
        else:
            buf.write(f"{s},{d}\n")
    return buf.getvalue()


def write_graph(path, graph: UserGraph, weights: bool = True) -> None:
    atomic_write_text(path, graph_text(graph, weights))


# ---------------------------------------------------------------------------
# parameters


def params_to_dict(params: ModelParams) -> dict:
    src, dst = np.nonzero(params.W)
    return {
        "schema": "mic-hawkes/params",
        "version": SCHEMA_VERSION,
        "n_users": params.n_users,
        "n_cascades": params.n_cascades,
        "M": params.M.tolist(),
        "Sigma": params.Sigma.tolist(),
        "W": {
            "shape": [params.n_users, params.n_users],
            "triplets": [[int(s), int(d), float(params.W[s, d])] for s, d in zip(src, dst)],
        },
        "kernel": {"kind": params.kernel.kind, "tau": params.tau},
        "mixing": {"kind": params.mixing.kind, "beta": params.beta},
    }


def params_from_dict(doc: dict) -> ModelParams:
    if doc.get("schema") != "mic-hawkes/params":
        raise DataError(f"not a parameter document (schema={doc.get('schema')!r})")
    try:
        n = int(doc["n_users"])
        W = np.zeros((n, n))
        for s, d, w in doc["W"]["triplets"]:
            if not (0 <= s < n and 0 <= d < n):
                raise DataError(f"W triplet ({s}, {d}) out of range")
            W[s, d] = w
        return ModelParams(
            np.array(doc["M"], dtype=float),
            np.array(doc["Sigma"], dtype=float),
            W,
            KernelSpec(float(doc["kernel"]["tau"]), doc["kernel"].get("kind", "exponential")),
            MixingSpec(doc["mixing"]["kind"], float(doc["mixing"]["beta"])),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed parameter document: {exc}") from exc
    except ModelError as exc:
        raise DataError(f"invalid parameters: {exc}") from exc


def write_params(path, params: ModelParams) -> None:
    write_json(path, params_to_dict(params))


def read_params(path) -> ModelParams:
    return params_from_dict(read_json(path))


def read_sigma(spec: str, n_cascades: int) -> np.ndarray:
    """``identity`` or a JSON file holding a matrix (or ``{"Sigma": matrix}``)."""
    if spec == "identity":
        return np.eye(n_cascades)
    doc = read_json(spec)
    S = np.array(doc["Sigma"] if isinstance(doc, dict) else doc, dtype=float)
    if S.shape != (n_cascades, n_cascades):
        raise DataError(f"{spec}: Sigma must be {n_cascades}x{n_cascades}, got {S.shape}")
    return S


# ---------------------------------------------------------------------------
# manifests


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, argv, inputs, outputs, seed=None, extra=None) -> None:
    from . import __version__

    doc = {
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "package_version": __version__,
        "inputs": {str(p): file_digest(p) for p in inputs if p and os.path.exists(p)},
        "outputs": {str(p): file_digest(p) for p in outputs if p and os.path.exists(p)},
    }
    if extra:
        doc.update(extra)
    write_json(path, doc, schema="mic-hawkes/manifest")
