"""Node placement on the unit square, nearest-node queries and Euclidean MSTs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Placement:
    """Node positions on [0,1]^2.

    ``points`` is an ``(n, 2)`` float array; row ``i`` is node ``i``.
    """

    points: np.ndarray
    law: str = "uniform"
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("placement coordinates must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points)

    def point(self, i: int) -> Point:
        return Point(float(self.points[i, 0]), float(self.points[i, 1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(self.points):
            w.writerow([i, repr(float(x)), repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, law: str = "uniform", seed: int | None = None) -> "Placement":
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda row: int(row["id"]))
        pts = np.array([[float(row["x"]), float(row["y"])] for row in rows], dtype=float)
        return cls(pts.reshape(-1, 2), law=law, seed=seed)


@dataclass(frozen=True)
class EuclideanTree:
    edges: list = field(default_factory=list)  # (u, v, length) with u the tree parent
    total_length: float = 0.0

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e[2] for e in self.edges], dtype=float)


def make_rng(seed, *stream) -> np.random.Generator:
    """PCG64 generator for ``seed`` and an optional integer sub-stream key."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def place_uniform(n: int, seed: int) -> Placement:
    if n < 0:
        raise ValueError("n must be non-negative")
    pts = make_rng(seed).random((n, 2))
    return Placement(pts, law="uniform", seed=int(seed))


def place_grid(n: int) -> Placement:
    """Cell-centered ``sqrt(n) x sqrt(n)`` lattice with spacing ``1/sqrt(n)``."""
    side = math.isqrt(n) if n >= 1 else 0
    if n < 1 or side * side != n:
        raise ValueError(f"grid placement needs a positive perfect square, got n={n}")
    coords = (2.0 * np.arange(side) + 1.0) / (2.0 * side)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return Placement(pts, law="grid", seed=None)


def place_rect_grid(m: int) -> Placement:
    """Cell-centered rows x cols lattice using the most square factorization of ``m``."""
    if m < 1:
        raise ValueError("m must be positive")
    rows = max(d for d in range(1, math.isqrt(m) + 1) if m % d == 0)
    cols = m // rows
    xs = (2.0 * np.arange(cols) + 1.0) / (2.0 * cols)
    ys = (2.0 * np.arange(rows) + 1.0) / (2.0 * rows)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    return Placement(np.column_stack([xx.ravel(), yy.ravel()]), law="grid", seed=None)


def _as_points(points) -> np.ndarray:
    if isinstance(points, Placement):
        return points.points
    return np.asarray(points, dtype=float).reshape(-1, 2)


def euclidean_mst(points) -> EuclideanTree:
    """Prim's algorithm on the complete Euclidean graph, rooted at point 0.

    O(n^2) time and O(n) memory; coincident points are joined by zero-length edges.
    """
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        raise ValueError("euclidean_mst needs at least one point")
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    in_tree[0] = True
    d0 = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
    best[~in_tree] = d0[~in_tree]
    parent[:] = 0
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        edges.append((int(parent[v]), v, float(best[v])))
        in_tree[v] = True
        d = np.hypot(pts[:, 0] - pts[v, 0], pts[:, 1] - pts[v, 1])
        closer = (~in_tree) & (d < best)
        best[closer] = d[closer]
        parent[closer] = v
    return EuclideanTree(edges=edges, total_length=float(sum(e[2] for e in edges)))


def nearest_node(p, placement: Placement) -> int:
    """Index of the node closest to ``p``; ties go to the lowest index."""
    pts = _as_points(placement)
    if len(pts) == 0:
        raise ValueError("placement is empty")
    d2 = (pts[:, 0] - p[0]) ** 2 + (pts[:, 1] - p[1]) ** 2
    return int(np.argmin(d2))


def nearest_nodes(queries, placement: Placement, tree: cKDTree | None = None) -> np.ndarray:
    """Vectorised :func:`nearest_node` for many query points.

    The k-d tree answer is re-checked against the lowest-index tie rule.
    """
    pts = _as_points(placement)
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("placement is empty")
    if len(q) == 0:
        return np.zeros(0, dtype=np.int64)
    tree = tree if tree is not None else cKDTree(pts)
    k = min(2, len(pts))
    dist, idx = tree.query(q, k=k)
    if k == 1:
        return np.asarray(idx, dtype=np.int64).reshape(-1)
    out = idx[:, 0].astype(np.int64)
    tied = np.nonzero(dist[:, 1] <= dist[:, 0])[0]
    for i in tied:
        out[i] = nearest_node(q[i], pts)
    return out


def nn_distances(placement) -> np.ndarray:
    """Distance from every node to its nearest other node."""
    pts = _as_points(placement)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return dist[:, 1]


def mean_nn_distance(placement) -> float:
    return float(nn_distances(placement).mean())
