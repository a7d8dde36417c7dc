"""File formats: data/matrix CSV, cohort manifests, JSON reports and graph exports.

* Data files: headerless CSV, one row per sample, one column per variable.
  An optional sidecar label file holds one variable name per line.
* Matrix files: headerless CSV, ``p`` rows of ``p`` values, written with 17
  significant digits so a read reproduces every value exactly.
* Manifests and reports: JSON objects with sorted keys and two-space indent
  (see README for the schemas).
* Graph exports: ``node_i<TAB>node_j<TAB>weight`` edge lists, DOT text, and
  ``node<TAB>community_id`` partitions.

Every writer goes through a temporary file in the target directory and an
atomic rename.
"""
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import DimensionMismatch, InvalidInput

MANIFEST_FORMAT = "covsel-cohort/1"
REPORT_FORMAT = "covsel-report/1"


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _format_row(row):
    return ",".join(format(float(v), ".17g") for v in row)


def write_matrix(path, m):
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    atomic_write_text(path, "".join(_format_row(r) + "\n" for r in m))


write_data = write_matrix


def _read_csv(path):
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (ValueError, OSError) as exc:
        raise InvalidInput(f"cannot parse {path}: {exc}") from exc
    if arr.size == 0:
        raise InvalidInput(f"{path} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{path} contains non-finite values")
    return arr


def read_data(path):
    return _read_csv(path)


def read_matrix(path):
    m = _read_csv(path)
    if m.shape[0] != m.shape[1]:
        raise InvalidInput(f"{path} holds a {m.shape[0]}x{m.shape[1]} matrix, expected square")
    return m


def read_labels(path, expected=None):
    names = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    names = [n for n in names if n]
    if expected is not None and len(names) != expected:
        raise DimensionMismatch(f"{path} has {len(names)} labels for {expected} variables")
    return names


def to_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj):
    atomic_write_text(path, to_json(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot parse {path}: {exc}") from exc


def make_report(command, config, inputs, results, seed=None):
    """Report envelope: echoed config, input digests, version and seed."""
    return {
        "format": REPORT_FORMAT,
        "command": command,
        "covsel_version": __version__,
        "seed": seed,
        "config": config,
        "inputs": [{"path": str(p), "sha256": file_digest(p)} for p in inputs],
        "results": results,
    }


# -- cohort manifests ----------------------------------------------------------

def write_manifest(path, subjects, variables, samples_per_session, seed, spec=None):
    """``subjects`` is a list of dicts with ``id``, ``sessions`` (two paths) and
    optionally ``truth``; paths are stored relative to the manifest."""
    write_json(path, {
        "format": MANIFEST_FORMAT,
        "variables": variables,
        "samples_per_session": samples_per_session,
        "n_subjects": len(subjects),
        "seed": seed,
        "spec": spec,
        "subjects": subjects,
    })


def read_manifest(path):
    """Return ``(manifest dict, list of (session_a, session_b) arrays)``."""
    path = Path(path)
    man = read_json(path)
    if not isinstance(man, dict) or "subjects" not in man:
        raise InvalidInput(f"{path} is not a cohort manifest")
    base = path.parent
    cohort = []
    p = None
    for entry in man["subjects"]:
        sessions = entry.get("sessions", [])
        if len(sessions) != 2:
            raise InvalidInput(f"subject {entry.get('id')} must list exactly two sessions")
        pair = tuple(read_data(base / s) for s in sessions)
        for x in pair:
            if p is None:
                p = x.shape[1]
            if x.shape[1] != p:
                raise DimensionMismatch(
                    f"subject {entry.get('id')} has {x.shape[1]} variables, expected {p}"
                )
        cohort.append(pair)
    if not cohort:
        raise InvalidInput(f"{path} lists no subjects")
    return man, cohort


def manifest_inputs(path):
    path = Path(path)
    man = read_json(path)
    return [path] + [path.parent / s for e in man["subjects"] for s in e["sessions"]]


# -- graph exports ---------------------------------------------------------------

def edge_list_text(graph):
    return "".join(
        f"{graph.node_label(i)}\t{graph.node_label(j)}\t{format(w, '.17g')}\n"
        for i, j, w in graph.edges
    )


def dot_text(graph, name="G", partition=None):
    lines = [f"graph {name} {{"]
    for i in range(graph.n_nodes):
        attr = f" [community={int(partition.labels[i])}]" if partition is not None else ""
        lines.append(f'  "{graph.node_label(i)}"{attr};')
    for i, j, w in graph.edges:
        lines.append(f'  "{graph.node_label(i)}" -- "{graph.node_label(j)}" [weight={format(w, ".17g")}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def partition_text(partition, labels=None):
    names = labels if labels is not None else [str(i) for i in range(partition.labels.size)]
    return "".join(f"{n}\t{int(c)}\n" for n, c in zip(names, partition.labels))


def read_partition(path, expected=None, labels=None):
    """Community ids from a ``node<TAB>community_id`` file, in node order.

    Node names are matched against ``labels`` when given, else must be the
    integers ``0..p-1``.
    """
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InvalidInput(f"{path}: expected 'node<TAB>community', got {line!r}")
        try:
            rows.append((parts[0], int(parts[1])))
        except ValueError as exc:
            raise InvalidInput(f"{path}: bad community id in {line!r}") from exc
    if expected is not None and len(rows) != expected:
        raise DimensionMismatch(f"{path} assigns {len(rows)} nodes, precision has {expected}")
    index = {name: i for i, name in enumerate(labels)} if labels is not None else None
    out = np.full(len(rows), -1, dtype=int)
    for name, c in rows:
        try:
            i = index[name] if index is not None else int(name)
        except (KeyError, ValueError) as exc:
            raise InvalidInput(f"{path}: unknown node {name!r}") from exc
        if not 0 <= i < len(rows) or out[i] != -1:
            raise InvalidInput(f"{path}: node {name!r} out of range or repeated")
        out[i] = c
    return out


def integration_graph_text(ig):
    """Node lines ``community<TAB>integration`` then edge lines ``c1<TAB>c2<TAB>mi``."""
    lines = ["# node\tintegration"]
    lines += [f"{c}\t{format(v, '.17g')}" for c, v in sorted(ig.node_values.items())]
    lines.append("# node_i\tnode_j\tmutual_information")
    lines += [f"{a}\t{b}\t{format(v, '.17g')}" for (a, b), v in sorted(ig.edge_values.items())]
    return "\n".join(lines) + "\n"


def integration_dot_text(ig):
    lines = ["graph integration {"]
    lines += [f'  "{c}" [integration={format(v, ".17g")}];' for c, v in sorted(ig.node_values.items())]
    lines += [
        f'  "{a}" -- "{b}" [mutual_information={format(v, ".17g")}];'
        for (a, b), v in sorted(ig.edge_values.items())
    ]
    lines.append("}")
    return "\n".join(lines) + "\n"
