"""Reading and writing network data as CSV.

Edge files have a header ``id_a,id_b``; node files have a header
``id,exposure,mediator,outcome,c1,...,cp``. Node ids are arbitrary integers
and are mapped to positions ``0..N-1`` in increasing id order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Network, NetworkError
from .model import Dataset

EDGE_HEADER = ("id_a", "id_b")
NODE_FIXED = ("id", "exposure", "mediator", "outcome")
TRANSFORM_OPS = ("log1p", "zscore")


class IngestError(ValueError):
    """Raised when edge or node files are malformed or inconsistent."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


def read_edges(path) -> list[tuple[int, int]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestError(f"{path}: empty edge file")
    start = 0
    if tuple(c.strip() for c in rows[0]) == EDGE_HEADER:
        start = 1
    edges = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise IngestError(f"{path}:{lineno}: expected two ids, got {row}")
        try:
            edges.append((int(row[0]), int(row[1])))
        except ValueError:
            raise IngestError(f"{path}:{lineno}: non-integer id in {row}") from None
    return edges


@dataclass
class NodeTable:
    ids: np.ndarray
    exposure: np.ndarray
    mediator: np.ndarray
    outcome: np.ndarray
    confounders: np.ndarray
    confounder_names: list[str]


def read_nodes(path) -> NodeTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty node file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if tuple(header[:4]) != NODE_FIXED or len(header) < 5:
        raise IngestError(f"{path}: header must be id,exposure,mediator,outcome,c1..cp; got {header}")
    try:
        arr = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise IngestError(f"{path}: non-numeric value ({exc})") from None
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise IngestError(f"{path}: rows do not all have {len(header)} columns")
    ids = arr[:, 0]
    if not np.all(ids == np.round(ids)):
        raise IngestError(f"{path}: node ids must be integers")
    ids = ids.astype(np.int64)
    uniq, counts = np.unique(ids, return_counts=True)
    if np.any(counts > 1):
        raise IngestError(f"{path}: duplicate node ids", {"duplicates": uniq[counts > 1].tolist()})
    a = arr[:, 1]
    bad = ids[(a != 0.0) & (a != 1.0)]
    if bad.size:
        raise IngestError(f"{path}: exposure must be 0 or 1", {"non_binary_ids": bad.tolist()})
    return NodeTable(ids, a, arr[:, 2], arr[:, 3], arr[:, 4:], header[4:])


def apply_transform(x: np.ndarray, ops) -> np.ndarray:
    """Apply ``log1p`` then ``zscore`` (whichever are requested)."""
    ops = list(ops)
    unknown = set(ops) - set(TRANSFORM_OPS)
    if unknown:
        raise ValueError(f"unknown transform(s) {sorted(unknown)}; known: {TRANSFORM_OPS}")
    x = np.asarray(x, dtype=float)
    if "log1p" in ops:
        if np.any(x <= -1.0):
            raise ValueError("log1p needs values above -1")
        x = np.log1p(x)
    if "zscore" in ops:
        sd = x.std()
        if sd == 0.0:
            raise ValueError("cannot standardise a constant column")
        x = (x - x.mean()) / sd
    return x


def parse_transforms(spec: str | None) -> dict[str, list[str]]:
    """Parse ``"outcome=log1p+zscore,mediator=zscore"`` into a dict."""
    out: dict[str, list[str]] = {}
    if not spec:
        return out
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        col, _, ops = item.partition("=")
        if not ops:
            raise ValueError(f"transform {item!r} must look like column=op[+op]")
        out[col.strip()] = [o.strip() for o in ops.split("+") if o.strip()]
    return out


def ingest(edge_path, nodes_path, transforms: dict | None = None) -> tuple[Network, Dataset]:
    """Build the network from the edge list and join node attributes.

    Parameters
    ----------
    edge_path, nodes_path : path-like
        CSV files in the layouts described in the module docstring.
    transforms : dict, optional
        Column name (``mediator``, ``outcome``, a confounder name, or
        ``confounders`` for all of them) to a list of operations from
        ``("log1p", "zscore")``.

    Raises
    ------
    IngestError
        If an edge names an unknown node, a node has no edges, or the
        node table is malformed.
    """
    transforms = dict(transforms or {})
    edges = read_edges(edge_path)
    nodes = read_nodes(nodes_path)
    order = np.argsort(nodes.ids)
    pos = {int(nodes.ids[k]): r for r, k in enumerate(order)}
    missing = sorted({i for e in edges for i in e if i not in pos})
    if missing:
        raise IngestError("edge list references nodes absent from the node table", {"missing_ids": missing})
    n = len(pos)
    try:
        net = Network.from_edges(n, [(pos[a], pos[b]) for a, b in edges])
    except NetworkError as exc:
        if "isolated" in str(exc):
            iso = sorted(int(nodes.ids[order[k]]) for k in np.flatnonzero(_degrees(n, edges, pos) == 0))
            raise IngestError("nodes without any edge", {"isolated_ids": iso}) from None
        raise IngestError(str(exc)) from None
    cols = {"mediator": nodes.mediator[order], "outcome": nodes.outcome[order]}
    for j, name in enumerate(nodes.confounder_names):
        cols[name] = nodes.confounders[order, j]
    if "confounders" in transforms:
        ops = transforms.pop("confounders")
        for name in nodes.confounder_names:
            transforms.setdefault(name, list(ops))
    unknown = set(transforms) - set(cols)
    if unknown:
        raise IngestError(f"transforms name unknown columns {sorted(unknown)}")
    for name, ops in transforms.items():
        cols[name] = apply_transform(cols[name], ops)
    c = np.column_stack([cols[name] for name in nodes.confounder_names])
    meta = {
        "ids": nodes.ids[order].tolist(),
        "confounder_names": list(nodes.confounder_names),
        "transforms": {k: list(v) for k, v in transforms.items()},
        "source": {"edges": str(edge_path), "nodes": str(nodes_path)},
    }
    data = Dataset(net, nodes.exposure[order], cols["mediator"], cols["outcome"], c, meta)
    return net, data


def _degrees(n, edges, pos) -> np.ndarray:
    deg = np.zeros(n, dtype=int)
    for a, b in {(min(pos[a], pos[b]), max(pos[a], pos[b])) for a, b in edges if a != b}:
        deg[a] += 1
        deg[b] += 1
    return deg


def write_edges(path, net: Network, ids=None) -> None:
    ids = list(range(net.n_nodes)) if ids is None else list(ids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        for i, j in net.edges():
            w.writerow([ids[i], ids[j]])


def write_nodes(path, data: Dataset, ids=None) -> None:
    ids = data.metadata.get("ids", list(range(data.n))) if ids is None else list(ids)
    names = data.metadata.get("confounder_names") or [f"c{k + 1}" for k in range(data.p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(NODE_FIXED) + list(names))
        for k in range(data.n):
            row = [ids[k], int(data.a[k]), repr(float(data.m[k])), repr(float(data.y[k]))]
            row += [repr(float(v)) for v in data.c[k]]
            w.writerow(row)


def write_dataset(directory, data: Dataset) -> tuple[Path, Path]:
    """Write ``edges.csv`` and ``nodes.csv`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    ids = data.metadata.get("ids")
    write_edges(d / "edges.csv", data.net, ids)
    write_nodes(d / "nodes.csv", data, ids)
    return d / "edges.csv", d / "nodes.csv"


def read_network(edge_path) -> Network:
    """Network from an edge file alone; ids are ranked as in :func:`ingest`."""
    edges = read_edges(edge_path)
    ids = sorted({i for e in edges for i in e})
    pos = {i: k for k, i in enumerate(ids)}
    return Network.from_edges(len(ids), [(pos[a], pos[b]) for a, b in edges])


__all__ = [
    "IngestError",
    "NodeTable",
    "apply_transform",
    "ingest",
    "parse_transforms",
    "read_edges",
    "read_network",
    "read_nodes",
    "write_dataset",
    "write_edges",
    "write_nodes",
]
