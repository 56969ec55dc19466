"""Range-limited connectivity graphs and hop statistics."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .geometry import _as_points, euclidean_mst, make_rng

UNREACHABLE = None


@dataclass(frozen=True)
class RangeGraph:
    n: int
    r: float
    adjacency: tuple  # tuple of sorted int tuples
    points: np.ndarray

    def neighbors(self, u: int) -> tuple:
        return self.adjacency[u]

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def edges(self):
        for u, nbrs in enumerate(self.adjacency):
            for v in nbrs:
                if u < v:
                    yield u, v

    def csr(self) -> sparse.csr_matrix:
        rows = [u for u, nbrs in enumerate(self.adjacency) for _ in nbrs]
        cols = [v for nbrs in self.adjacency for v in nbrs]
        data = np.ones(len(rows), dtype=np.int8)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def to_csv(self) -> str:
        lines = ["u,v,length"]
        for u, v in self.edges():
            d = float(np.hypot(*(self.points[u] - self.points[v])))
            lines.append(f"{u},{v},{d!r}")
        return "\n".join(lines) + "\n"


def pairs_within(points, r: float) -> np.ndarray:
    """All index pairs ``u < v`` with ``|p_u - p_v| <= r`` as an ``(m, 2)`` array."""
    pts = _as_points(points)
    if len(pts) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    # widen the search slightly, then apply the closed rule on exact distances
    pairs = cKDTree(pts).query_pairs(r * (1 + 1e-9) + 1e-15, output_type="ndarray")
    if len(pairs) == 0:
        return pairs.reshape(0, 2).astype(np.int64)
    d = np.hypot(*(pts[pairs[:, 0]] - pts[pairs[:, 1]]).T)
    pairs = pairs[d <= r]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order].astype(np.int64)


def build_range_graph(placement, r: float) -> RangeGraph:
    if not r > 0:
        raise ValueError("range r must be positive")
    pts = _as_points(placement)
    n = len(pts)
    adj = [[] for _ in range(n)]
    for u, v in pairs_within(pts, r):
        adj[u].append(int(v))
        adj[v].append(int(u))
    return RangeGraph(n=n, r=float(r), adjacency=tuple(tuple(sorted(a)) for a in adj), points=pts)


def min_connectivity_range(placement) -> float:
    """Smallest ``r`` that connects the range graph: the longest EMST edge."""
    pts = _as_points(placement)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    return float(euclidean_mst(pts).lengths.max())


def bfs_hops(graph: RangeGraph, src: int, dst: int):
    """Hop distance from ``src`` to ``dst``, or ``UNREACHABLE`` (None)."""
    if src == dst:
        return 0
    seen = {src}
    frontier = deque([(src, 0)])
    while frontier:
        u, d = frontier.popleft()
        for v in graph.adjacency[u]:
            if v == dst:
                return d + 1
            if v not in seen:
                seen.add(v)
                frontier.append((v, d + 1))
    return UNREACHABLE


def hop_matrix(graph: RangeGraph, sources) -> np.ndarray:
    """Unweighted shortest-path hop counts from each of ``sources`` (inf when unreachable)."""
    return csgraph.shortest_path(graph.csr(), method="D", unweighted=True, indices=np.asarray(sources))


@dataclass(frozen=True)
class HopStats:
    mean: float
    pairs: int
    excluded_fraction: float

    def __float__(self):
        return self.mean


def avg_hop_count(graph: RangeGraph, sample_size: int | None = None, seed: int = 0) -> HopStats:
    """Mean BFS hop count over ordered pairs ``src != dst``.

    ``sample_size`` uniformly sampled pairs (default ``10 n``); ``sample_size=0``
    averages over all ordered pairs exactly.  Unreachable pairs are dropped and
    reported via ``excluded_fraction``.
    """
    n = graph.n
    if n < 2:
        raise ValueError("need at least two nodes")
    if sample_size == 0:
        hops = hop_matrix(graph, np.arange(n))
        mask = ~np.eye(n, dtype=bool)
        vals = hops[mask]
    else:
        m = 10 * n if sample_size is None else int(sample_size)
        rng = make_rng(seed, 11)
        src = rng.integers(0, n, size=m)
        dst = (src + rng.integers(1, n, size=m)) % n
        uniq, inv = np.unique(src, return_inverse=True)
        hops = hop_matrix(graph, uniq)
        vals = hops[inv, dst]
    ok = np.isfinite(vals)
    if not ok.any():
        raise ValueError("every sampled pair is unreachable")
    return HopStats(mean=float(vals[ok].mean()), pairs=int(ok.sum()),
                    excluded_fraction=float(1.0 - ok.mean()))


def component_labels(graph: RangeGraph) -> np.ndarray:
    _, labels = csgraph.connected_components(graph.csr(), directed=False)
    return labels


def giant_component(graph: RangeGraph) -> list:
    """Connected-component sizes, largest first."""
    if graph.n == 0:
        return []
    sizes = np.bincount(component_labels(graph))
    return sorted((int(s) for s in sizes), reverse=True)


def is_connected(graph: RangeGraph) -> bool:
    return graph.n <= 1 or len(giant_component(graph)) == 1
