"""Finite graphs with a boundary set, and cluster labelling over open bonds."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from numba import njit


# ----------------------------------------------------------------------
# union-find on flat arrays (shared with the compiled sampling code)
# ----------------------------------------------------------------------


@njit(cache=True)
def uf_find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@njit(cache=True)
def uf_union(parent, rank, a, b):
    """Merge the sets of ``a`` and ``b``; returns True when they were distinct."""
    ra = uf_find(parent, a)
    rb = uf_find(parent, b)
    if ra == rb:
        return False
    if rank[ra] < rank[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    if rank[ra] == rank[rb]:
        rank[ra] += 1
    return True


@njit(cache=True)
def label_clusters(n, edges, open_mask, boundary):
    """Cluster labels (smallest vertex of each cluster) and boundary contact.

    Boundary vertices are merged into a super-node with index ``n`` before
    any bond is read, so boundary vertices always share one cluster.
    """
    parent = np.arange(n + 1)
    rank = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        if boundary[v]:
            uf_union(parent, rank, v, n)
    for e in range(edges.shape[0]):
        if open_mask[e]:
            uf_union(parent, rank, edges[e, 0], edges[e, 1])
    smallest = np.full(n + 1, n, dtype=np.int64)
    for v in range(n):
        r = uf_find(parent, v)
        if v < smallest[r]:
            smallest[r] = v
    labels = np.empty(n, dtype=np.int64)
    touches = np.zeros(n, dtype=np.bool_)
    super_root = uf_find(parent, n)
    for v in range(n):
        r = uf_find(parent, v)
        labels[v] = smallest[r]
        touches[v] = r == super_root
    return labels, touches


class UnionFind:
    """Disjoint sets over ``0..n-1`` plus an optional boundary super-node ``n``.

    >>> uf = UnionFind(4)
    >>> uf.union(0, 1), uf.union(1, 0)
    (True, False)
    >>> uf.find(1) == uf.find(0), uf.count
    (True, 4)
    """

    def __init__(self, n: int):
        self.n = n
        self.parent = np.arange(n + 1)
        self.rank = np.zeros(n + 1, dtype=np.int64)
        self.count = n + 1

    @property
    def boundary(self) -> int:
        return self.n

    def find(self, a: int) -> int:
        return int(uf_find(self.parent, a))

    def union(self, a: int, b: int) -> bool:
        merged = bool(uf_union(self.parent, self.rank, a, b))
        self.count -= merged
        return merged

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


# ----------------------------------------------------------------------
# graphs
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable graph with per-edge time parameters and a boundary set.

    ``edges`` is an ``(E, 2)`` integer array in construction order; that
    order fixes how bond sampling consumes random numbers.
    """

    n: int
    edges: np.ndarray
    t: np.ndarray
    boundary: np.ndarray
    topology: str = "explicit"
    bc: str = "wired"
    shape: tuple = ()
    nbr_ptr: np.ndarray = field(init=False, repr=False)
    nbr_idx: np.ndarray = field(init=False, repr=False)
    nbr_edge: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.ascontiguousarray(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        t = np.ascontiguousarray(np.broadcast_to(np.asarray(self.t, dtype=float), (len(edges),)).copy())
        boundary = np.zeros(self.n, dtype=bool)
        b = np.asarray(self.boundary)
        if b.dtype == bool:
            if b.shape != (self.n,):
                raise ValueError("boolean boundary mask must have one entry per vertex")
            boundary[:] = b
        elif b.size:
            if b.min() < 0 or b.max() >= self.n:
                raise ValueError("boundary vertex out of range")
            boundary[b.astype(int)] = True
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "boundary", boundary)
        self._validate()
        order = np.argsort(np.concatenate([edges[:, 0], edges[:, 1]]), kind="stable")
        ends = np.concatenate([edges[:, 1], edges[:, 0]])[order]
        eids = np.concatenate([np.arange(len(edges)), np.arange(len(edges))])[order]
        deg = np.bincount(edges.ravel(), minlength=self.n)
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(deg, out=ptr[1:])
        object.__setattr__(self, "nbr_ptr", ptr)
        object.__setattr__(self, "nbr_idx", ends.astype(np.int64))
        object.__setattr__(self, "nbr_edge", eids.astype(np.int64))
        for arr in (self.edges, self.t, self.boundary, ptr, self.nbr_idx, self.nbr_edge):
            arr.flags.writeable = False

    def _validate(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        e = self.edges
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        key = np.sort(e, axis=1)
        if len(np.unique(key, axis=0)) != len(e):
            raise ValueError("duplicate edges are not allowed")
        if np.any(self.t <= 0):
            raise ValueError("edge times must be positive")
        if self.bc == "wired" and not self.boundary.any():
            raise ValueError("wired graph needs a non-empty boundary")
        labels, _ = label_clusters(self.n, e, np.ones(len(e), dtype=np.bool_), np.zeros(self.n, dtype=np.bool_))
        if np.any(labels != 0):
            raise ValueError("graph must be connected")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.nbr_ptr)

    def neighbors(self, v: int) -> np.ndarray:
        return self.nbr_idx[self.nbr_ptr[v] : self.nbr_ptr[v + 1]]

    def index(self, *coords) -> int:
        """Vertex index of lattice coordinates (boxes only)."""
        return int(np.ravel_multi_index(coords, self.shape))

    @classmethod
    def from_edges(cls, n, edges, t=1.0, boundary=(), bc=None):
        b = np.asarray(boundary)
        if bc is None:
            bc = "wired" if b.size and (b.dtype != bool or b.any()) else "free"
        return cls(n=n, edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2), t=t, boundary=b, bc=bc)

    # -- text serialization -------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.n} {self.n_edges} {int(self.boundary.sum())} {self.topology} {self.bc}"]
        lines.append(" ".join(str(v) for v in np.flatnonzero(self.boundary)))
        lines += [f"{u} {v} {t!r}" for (u, v), t in zip(self.edges.tolist(), self.t.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        lines = text.splitlines()
        n, m, nb, topology, bc = lines[0].split()
        boundary = np.array([int(v) for v in lines[1].split()], dtype=int)
        if len(boundary) != int(nb):
            raise ValueError("boundary count mismatch")
        rows = [ln.split() for ln in lines[2 : 2 + int(m)]]
        if len(rows) != int(m):
            raise ValueError("edge count mismatch")
        edges = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
        t = np.array([float(r[2]) for r in rows])
        return cls(n=int(n), edges=edges, t=t, boundary=boundary, topology=topology, bc=bc)

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_text(Path(path).read_text())


def build_box(d: int, side: int, t: float = 1.0, bc: str = "wired") -> Graph:
    """Box ``{0..side-1}^d`` with wired, free or periodic boundary.

    Vertices are numbered in C order of their coordinates; edges are listed
    vertex by vertex, one per axis in the positive direction.  On a torus of
    side 2 the wrap-around edge coincides with the direct one and is kept once.
    """
    if d not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if side < 2:
        raise ValueError("side must be at least 2")
    if bc not in ("wired", "free", "torus"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    shape = (side,) * d
    n = side**d
    edges = []
    seen = set()
    for coords in product(range(side), repeat=d):
        v = int(np.ravel_multi_index(coords, shape))
        for axis in range(d):
            c = list(coords)
            if coords[axis] + 1 < side:
                c[axis] += 1
            elif bc == "torus":
                c[axis] = 0
            else:
                continue
            w = int(np.ravel_multi_index(c, shape))
            key = (min(v, w), max(v, w))
            if key not in seen:
                seen.add(key)
                edges.append((v, w))
    boundary = np.zeros(n, dtype=bool)
    if bc == "wired":
        grid = np.indices(shape).reshape(d, -1).T
        boundary = np.any((grid == 0) | (grid == side - 1), axis=1)
    topology = "torus" if bc == "torus" else "box"
    return Graph(n=n, edges=np.array(edges, dtype=np.int64), t=t, boundary=boundary, topology=topology, bc=bc, shape=shape)


# ----------------------------------------------------------------------
# clusters
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterPartition:
    """Clusters of a bond configuration.

    ``labels[v]`` is the smallest vertex in the cluster of ``v``;
    ``touches[v]`` says whether that cluster meets the boundary.
    """

    labels: np.ndarray
    touches: np.ndarray

    def cluster_of(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.labels == self.labels[x])

    def clusters(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == lab) for lab in np.unique(self.labels)]

    def touches_boundary(self, x: int) -> bool:
        return bool(self.touches[x])

    def connected(self, x: int, y: int) -> bool:
        return bool(self.labels[x] == self.labels[y])


def components(g: Graph, open_bonds) -> ClusterPartition:
    open_bonds = np.asarray(open_bonds, dtype=bool)
    if open_bonds.shape != (g.n_edges,):
        raise ValueError(f"expected {g.n_edges} bond bits, got shape {open_bonds.shape}")
    labels, touches = label_clusters(g.n, g.edges, open_bonds, g.boundary)
    return ClusterPartition(labels, touches)


def connected_to_boundary(partition: ClusterPartition, x: int) -> bool:
    return partition.touches_boundary(x)
