"""Network representation and neighbourhood operators.

A :class:`Network` stores a symmetric binary adjacency matrix with unit
diagonal together with the per-node first-degree neighbour lists. All
derived quantities (row-normalised adjacency, second-degree neighbour
masks, eigendecomposition of ``E E^T``) are computed lazily and cached, so
a single network can be shared across many simulation replications.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np


class NetworkError(ValueError):
    """Raised when an adjacency structure violates the network invariants."""


@dataclass(frozen=True)
class NetworkDeltas:
    """Topology summaries that scale the network estimands."""

    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict:
        return {"delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3}


class Network:
    """Undirected, unweighted network with implicit self-loops.

    Parameters
    ----------
    adjacency : array_like
        ``N x N`` binary symmetric matrix. The diagonal is forced to one.

    Raises
    ------
    NetworkError
        If the matrix is not square, not binary, not symmetric, or some
        node has no neighbour other than itself.
    """

    def __init__(self, adjacency):
        e = np.array(adjacency, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise NetworkError(f"adjacency must be square, got shape {e.shape}")
        if e.shape[0] < 2:
            raise NetworkError("a network needs at least two nodes")
        if not np.all((e == 0.0) | (e == 1.0)):
            raise NetworkError("adjacency must be binary")
        if not np.array_equal(e, e.T):
            raise NetworkError("adjacency must be symmetric")
        np.fill_diagonal(e, 1.0)
        degrees = e.sum(axis=1).astype(int) - 1
        isolated = np.flatnonzero(degrees == 0)
        if isolated.size:
            raise NetworkError(f"isolated nodes (degree 0): {isolated.tolist()}")
        e.setflags(write=False)
        degrees.setflags(write=False)
        self._e = e
        self._degrees = degrees

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[tuple[int, int]]) -> "Network":
        """Build a network on nodes ``0..n_nodes-1`` from undirected edges.

        Self-loops are ignored and duplicate edges collapse to one.
        """
        e = np.zeros((n_nodes, n_nodes))
        for a, b in edges:
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise NetworkError(f"edge ({a}, {b}) outside 0..{n_nodes - 1}")
            if a != b:
                e[a, b] = e[b, a] = 1.0
        return cls(e)

    @property
    def n_nodes(self) -> int:
        return self._e.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        """Read-only adjacency matrix ``E`` (unit diagonal)."""
        return self._e

    @property
    def degrees(self) -> np.ndarray:
        """Number of neighbours of each node, excluding itself."""
        return self._degrees

    @cached_property
    def neighbor_lists(self) -> tuple[tuple[int, ...], ...]:
        off = self._off_diagonal
        return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in off)

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges ``(i, j)`` with ``i < j`` in lexicographic order."""
        ii, jj = np.nonzero(np.triu(self._off_diagonal, k=1))
        return list(zip(ii.tolist(), jj.tolist()))

    @property
    def n_edges(self) -> int:
        return int(self._degrees.sum() // 2)

    @cached_property
    def _off_diagonal(self) -> np.ndarray:
        off = self._e.copy()
        np.fill_diagonal(off, 0.0)
        off.setflags(write=False)
        return off

    @cached_property
    def row_normalized(self) -> np.ndarray:
        """Row-normalised adjacency with zero diagonal (rows sum to one)."""
        w = self._off_diagonal / self._degrees[:, None]
        w.setflags(write=False)
        return w

    @cached_property
    def second_degree_mask(self) -> np.ndarray:
        """Boolean ``N x N`` mask; ``[i, k]`` is True when ``k`` is a second-degree neighbour of ``i``.

        ``k`` qualifies when it is reachable through some first-degree
        neighbour of ``i`` while being neither ``i`` nor a first-degree
        neighbour itself.
        """
        off = self._off_diagonal
        reach = (off @ off) > 0
        mask = reach & (off == 0)
        np.fill_diagonal(mask, False)
        mask.setflags(write=False)
        return mask

    @cached_property
    def _two_step_weights(self) -> np.ndarray:
        # entry [i, k] = sum_{j != i, j != k} E_ij E_jk / (n_i n_j)
        w = self.row_normalized
        two = w @ w
        two.setflags(write=False)
        return two

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and orthonormal eigenvectors of ``E E^T``.

        ``E`` is symmetric so ``E E^T = E^2`` shares eigenvectors with ``E``
        and has the squared eigenvalues; this avoids forming the product.
        """
        mu, u = np.linalg.eigh(self._e)
        lam = mu**2
        lam.setflags(write=False)
        u.setflags(write=False)
        return lam, u

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return np.array_equal(self._e, other._e)

    def __hash__(self):
        return hash(self._e.tobytes())

    def __repr__(self) -> str:
        return f"Network(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


def _check_length(net: Network, v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != net.n_nodes:
        raise ValueError(f"{name} has length {v.shape[0]}, network has {net.n_nodes} nodes")
    return v


def s1_apply(net: Network, v) -> np.ndarray:
    """Average of ``v`` over each node's first-degree neighbours.

    Works column-wise when ``v`` is a matrix.
    """
    v = _check_length(net, v, "v")
    return net.row_normalized @ v


def s2_s3_apply(net: Network, a) -> tuple[np.ndarray, np.ndarray]:
    """Doubly-normalised exposure aggregates split by source node.

    Returns ``(s2, s3)`` where ``s2`` collects two-step paths ``i -> j -> k``
    ending at a first-degree neighbour ``k`` of ``i`` and ``s3`` those ending
    at a second-degree neighbour. Paths returning to ``i`` belong to
    neither.
    """
    a = _check_length(net, a, "a")
    two = net._two_step_weights
    first = net._off_diagonal > 0
    s2 = (two * first) @ a
    s3 = (two * net.second_degree_mask) @ a
    return s2, s3


def own_return_weight(net: Network) -> np.ndarray:
    """Per-node weight of two-step paths that return to the node itself.

    Equals ``sum_{j != i} E_ij / (n_i n_j)``; averaging it over nodes gives
    ``delta1``.
    """
    return np.diag(net._two_step_weights).copy()


def _round_half_away(x):
    # tolerate binary representation error so that e.g. 0.15 * 10 counts as a tie
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5 + 1e-9)


def plausible_share(net: Network, i: int, s: float) -> float:
    """Nearest neighbour-treated share that node ``i`` can actually realise.

    The target share ``s`` is mapped to ``[s * n_i] / n_i`` with ties rounded
    away from zero.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"share must lie in [0, 1], got {s}")
    n_i = int(net.degrees[i])
    return float(_round_half_away(s * n_i)) / n_i


def plausible_shares(net: Network, s: float) -> np.ndarray:
    """Vectorised :func:`plausible_share` over all nodes."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"share must lie in [0, 1], got {s}")
    n = net.degrees.astype(float)
    return _round_half_away(s * n) / n


def network_deltas(net: Network, shift) -> NetworkDeltas:
    """Compute the three topology summaries for an exposure shift.

    ``shift`` needs ``s_from`` and ``s_to`` attributes (see
    :class:`rensem.model.ExposureShift`).
    """
    diff = plausible_shares(net, shift.s_to) - plausible_shares(net, shift.s_from)
    two = net._two_step_weights
    first = net._off_diagonal > 0
    delta1 = float(np.mean(own_return_weight(net)))
    delta2 = float(np.mean(diff))
    delta3 = float(np.mean((two * first).sum(axis=1) * diff))
    return NetworkDeltas(delta1, delta2, delta3)


def gen_ring(n: int) -> Network:
    """Closed ring lattice: node ``i`` linked to ``i - 1`` and ``i + 1`` modulo ``n``."""
    if n < 3:
        raise ValueError(f"a ring needs at least 3 nodes, got {n}")
    idx = np.arange(n)
    e = np.zeros((n, n))
    e[idx, (idx + 1) % n] = 1.0
    e[(idx + 1) % n, idx] = 1.0
    return Network(e)


def gen_erdos_renyi(n: int, target_avg_degree: float, seed=None) -> Network:
    """Erdos-Renyi graph with edge probability ``target_avg_degree / (n - 1)``.

    Nodes left isolated after sampling are each joined to one uniformly
    chosen other node, visiting nodes in index order.
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    if not 0.0 < target_avg_degree <= n - 1:
        raise ValueError(f"target degree {target_avg_degree} infeasible for {n} nodes")
    rng = np.random.default_rng(seed)
    p = target_avg_degree / (n - 1)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    e = (upper | upper.T).astype(float)
    for i in range(n):
        if e[i].sum() == 0.0:
            j = int(rng.integers(n - 1))
            j += j >= i
            e[i, j] = e[j, i] = 1.0
    return Network(e)


def deltas_within_unit(deltas: NetworkDeltas) -> bool:
    """True when all three summaries lie in ``[-1, 1]`` (up to rounding)."""
    tol = 1e-12
    return all(abs(d) <= 1.0 + tol for d in (deltas.delta1, deltas.delta2, deltas.delta3))


def degree_summary(net: Network) -> dict:
    d = net.degrees
    return {
        "n_nodes": net.n_nodes,
        "n_edges": net.n_edges,
        "mean_degree": float(d.mean()),
        "min_degree": int(d.min()),
        "max_degree": int(d.max()),
    }


__all__ = [
    "Network",
    "NetworkDeltas",
    "NetworkError",
    "degree_summary",
    "gen_erdos_renyi",
    "gen_ring",
    "deltas_within_unit",
    "network_deltas",
    "own_return_weight",
    "plausible_share",
    "plausible_shares",
    "s1_apply",
    "s2_s3_apply",
]

