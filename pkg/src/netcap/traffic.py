"""Traffic generation and route construction for the four scenarios."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from .geometry import Placement, _as_points, euclidean_mst, make_rng, nearest_nodes, place_rect_grid
from .interference import Link, RadioModel
from .topology import RangeGraph, build_range_graph, component_labels

UNICAST = "unicast"
MULTICAST = "multicast"
FULL_MESH = "full-mesh-member"


@dataclass(frozen=True)
class FlowSpec:
    src: int
    dsts: tuple
    kind: str = UNICAST

    def __post_init__(self):
        dsts = tuple(sorted({int(d) for d in self.dsts}))
        object.__setattr__(self, "dsts", dsts)
        if not dsts:
            raise ValueError("a flow needs at least one destination")
        if self.src in dsts:
            raise ValueError("a flow cannot target its own source")
        if self.kind == UNICAST and len(dsts) != 1:
            raise ValueError("unicast flows have exactly one destination")
        if self.kind not in (UNICAST, MULTICAST, FULL_MESH):
            raise ValueError(f"unknown flow kind {self.kind!r}")

    @property
    def dst(self) -> int:
        return self.dsts[0]


def flows_to_csv(flows) -> str:
    return "src,dsts\n" + "".join(f"{f.src},{';'.join(map(str, f.dsts))}\n" for f in flows)


def flows_from_csv(text: str, kind: str = UNICAST) -> list:
    out = []
    for line in text.strip().splitlines()[1:]:
        src, dsts = line.split(",", 1)
        out.append(FlowSpec(int(src), tuple(int(d) for d in dsts.split(";")), kind))
    return out


def gen_unicast_pairs(n: int, seed: int) -> list:
    """One flow per node to a destination drawn uniformly from the other ``n - 1`` nodes."""
    if n < 2:
        raise ValueError("unicast traffic needs n >= 2")
    offs = make_rng(seed, 21).integers(1, n, size=n)
    return [FlowSpec(i, ((i + int(o)) % n,)) for i, o in enumerate(offs)]


@dataclass(frozen=True)
class MulticastGroup:
    src: int
    dsts: tuple
    l: int

    @property
    def members(self) -> tuple:
        return (self.src, *self.dsts)


def gen_multicast_groups(placement, l: int, seed: int) -> list:
    """Per source, ``l - 1`` uniform points mapped to their nearest nodes.

    The source itself is dropped from its destination set and duplicates merge,
    so a group may end up with fewer than ``l - 1`` destinations.
    """
    pts = _as_points(placement)
    n = len(pts)
    if l < 2:
        raise ValueError("multicast group size l must be >= 2")
    if l > n:
        raise ValueError("multicast group size l cannot exceed n")
    rng = make_rng(seed, 31)
    targets = rng.random((n, l - 1, 2))
    nearest = nearest_nodes(targets.reshape(-1, 2), pts).reshape(n, l - 1)
    groups = []
    for s in range(n):
        d = tuple(sorted(set(nearest[s].tolist()) - {s}))
        groups.append(MulticastGroup(s, d, l))
    return groups


@dataclass(frozen=True)
class Route:
    """Hop list ``(tx, rx)``; ``backbone[i]`` marks wired backbone hops."""

    hops: tuple
    backbone: tuple = ()

    def __post_init__(self):
        if not self.backbone:
            object.__setattr__(self, "backbone", (False,) * len(self.hops))

    @property
    def wireless_hops(self) -> int:
        return sum(1 for b in self.backbone if not b)

    @property
    def backbone_hops(self) -> int:
        return sum(1 for b in self.backbone if b)

    @property
    def nodes(self) -> tuple:
        if not self.hops:
            return ()
        return (self.hops[0][0], *(rx for _, rx in self.hops))

    @classmethod
    def from_path(cls, path, backbone=None) -> "Route":
        hops = tuple(zip(path[:-1], path[1:]))
        return cls(hops, tuple(backbone) if backbone is not None else ())


def bfs_path(graph: RangeGraph, src: int, dst: int):
    """A shortest ``src -> dst`` node path (lowest-index parents), or None."""
    if src == dst:
        return [src]
    parent = {src: -1}
    frontier = deque([src])
    while frontier:
        u = frontier.popleft()
        for v in graph.adjacency[u]:
            if v not in parent:
                parent[v] = u
                if v == dst:
                    path = [v]
                    while path[-1] != src:
                        path.append(parent[path[-1]])
                    return path[::-1]
                frontier.append(v)
    return None


def route_static(graph: RangeGraph, flow: FlowSpec) -> Route:
    if flow.kind != UNICAST:
        raise ValueError("static routing handles unicast flows only")
    path = bfs_path(graph, flow.src, flow.dst)
    if path is None:
        raise ValueError(f"flow {flow.src}->{flow.dst} is unreachable")
    return Route.from_path(path)


def _path_from_predecessors(pred_row, root: int, target: int):
    """Path root -> target from a csgraph predecessor row rooted at ``root``."""
    path = [target]
    while path[-1] != root:
        p = int(pred_row[path[-1]])
        if p < 0:
            return None
        path.append(p)
    return path[::-1]


def static_routes(graph: RangeGraph, flows, seed: int | None = None) -> list:
    """Shortest-path routes for many unicast flows with one BFS per destination.

    With ``seed`` set, each hop picks uniformly among the neighbours one hop
    closer to the destination; otherwise the BFS predecessor tree is followed.
    """
    dsts = sorted({f.dst for f in flows})
    if not dsts:
        return []
    dist, pred = csgraph.shortest_path(graph.csr(), method="D", unweighted=True,
                                       indices=dsts, return_predecessors=True)
    row = {d: i for i, d in enumerate(dsts)}
    rng = make_rng(seed, 51) if seed is not None else None
    routes = []
    for f in flows:
        i = row[f.dst]
        if not np.isfinite(dist[i, f.src]):
            raise ValueError(f"flow {f.src}->{f.dst} is unreachable")
        if rng is None:
            path = _path_from_predecessors(pred[i], f.dst, f.src)[::-1]
        else:
            path = _random_shortest_path(graph, dist[i], f.src, f.dst, rng)
        routes.append(Route.from_path(path))
    return routes


def _random_shortest_path(graph: RangeGraph, dist_to_dst, src: int, dst: int, rng) -> list:
    path = [src]
    u = src
    while u != dst:
        want = dist_to_dst[u] - 1
        nxt = [v for v in graph.adjacency[u] if dist_to_dst[v] == want]
        u = nxt[int(rng.integers(len(nxt)))] if len(nxt) > 1 else nxt[0]
        path.append(u)
    return path


def multicast_cap(r: float, kappa: float = 1.0) -> int:
    return int(math.ceil(kappa / (r * r) - 1e-9))


def tree_transmissions(points, r: float) -> int:
    """Sum over EMST edges of the hops needed to span each edge at range ``r``."""
    pts = _as_points(points)
    if len(pts) < 2:
        return 0
    lengths = euclidean_mst(pts).lengths
    return int(np.maximum(np.ceil(lengths / r - 1e-9), 1).sum())


def route_multicast(placement, radio: RadioModel, group: MulticastGroup,
                    kappa: float = 1.0, labels=None) -> int:
    """Transmissions needed to reach every destination of ``group``.

    EMST over the group, each edge costing ``ceil(length / r)`` hops, capped at
    the ``ceil(kappa / r^2)`` transmissions that cover the whole square.
    """
    if not group.dsts:
        raise ValueError("multicast group has no destinations")
    pts = _as_points(placement)
    if labels is None:
        labels = component_labels(build_range_graph(pts, radio.r))
    members = np.array(group.members)
    if len(set(np.asarray(labels)[members].tolist())) != 1:
        raise ValueError(f"multicast group of source {group.src} is disconnected at r={radio.r}")
    cap = multicast_cap(radio.r, kappa)
    if len(members) - 1 >= cap:
        return cap  # every tree edge costs at least one transmission
    return min(tree_transmissions(pts[members], radio.r), cap)


@dataclass(frozen=True)
class HybridConfig:
    """``M`` relay-only infrastructure nodes on a grid, joined by a free backbone."""

    M: int
    infra_range: float | None = None
    reduced_range: bool = False
    beta: float = 1.0

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one infrastructure node")

    def placement(self) -> Placement:
        return place_rect_grid(self.M)

    def radio_range(self, r: float) -> float:
        """Range used by ordinary nodes: ``r`` or ``beta / sqrt(M)`` in reduced mode."""
        return self.beta / math.sqrt(self.M) if self.reduced_range else r


def hybrid_graph(placement, infra: HybridConfig, r: float) -> RangeGraph:
    """Range graph over ordinary nodes ``0..n-1`` followed by infrastructure nodes."""
    pts = np.vstack([_as_points(placement), infra.placement().points])
    n = len(_as_points(placement))
    r_ord = infra.radio_range(r)
    r_inf = infra.infra_range if infra.infra_range is not None else r_ord
    big = build_range_graph(pts, max(r_ord, r_inf))
    if r_ord == r_inf:
        return RangeGraph(n=big.n, r=r_ord, adjacency=big.adjacency, points=pts)
    adj = []
    for u, nbrs in enumerate(big.adjacency):
        keep = []
        for v in nbrs:
            lim = r_ord if (u < n and v < n) else r_inf
            if np.hypot(*(pts[u] - pts[v])) <= lim:
                keep.append(v)
        adj.append(tuple(keep))
    return RangeGraph(n=big.n, r=r_ord, adjacency=tuple(adj), points=pts)


class HybridRouter:
    """Direct versus infrastructure routing over a hybrid range graph.

    Infrastructure nodes are the last ``M`` nodes of ``graph``.
    """

    def __init__(self, graph: RangeGraph, infra: HybridConfig):
        self.graph = graph
        self.M = infra.M
        self.n = graph.n - infra.M
        self.infra = np.arange(self.n, graph.n)
        csr = graph.csr()
        dist, pred = csgraph.shortest_path(csr, method="D", unweighted=True,
                                           indices=self.infra, return_predecessors=True)
        self._infra_dist = dist
        self._infra_pred = pred
        # hop-nearest infrastructure node per node, ties to the lowest index
        self.access = np.argmin(dist, axis=0)
        self.access_hops = dist[self.access, np.arange(graph.n)]
        self._csr = csr

    def route(self, flow: FlowSpec, direct_hops=None, direct_path=None) -> Route:
        s, d = flow.src, flow.dst
        direct = direct_path if direct_path is not None else bfs_path(self.graph, s, d)
        direct_len = len(direct) - 1 if direct is not None else math.inf
        a, b = int(self.access[s]), int(self.access[d])
        via_len = self.access_hops[s] + self.access_hops[d]
        if a == b or not np.isfinite(via_len) or via_len >= direct_len:
            if direct is None:
                raise ValueError(f"flow {s}->{d} has no direct or infrastructure route")
            return Route.from_path(direct)
        up = _path_from_predecessors(self._infra_pred[a], self.n + a, s)[::-1]
        down = _path_from_predecessors(self._infra_pred[b], self.n + b, d)
        path = up + down
        flags = [False] * (len(up) - 1) + [True] + [False] * (len(down) - 1)
        return Route.from_path(path, flags)

    def routes(self, flows) -> list:
        dsts = sorted({f.dst for f in flows})
        _, pred = csgraph.shortest_path(self._csr, method="D", unweighted=True,
                                        indices=dsts, return_predecessors=True)
        row = {d: i for i, d in enumerate(dsts)}
        out = []
        for f in flows:
            back = _path_from_predecessors(pred[row[f.dst]], f.dst, f.src)
            out.append(self.route(f, direct_path=back[::-1] if back is not None else None))
        return out


def hybrid_route(graph: RangeGraph, infra: HybridConfig, flow: FlowSpec) -> Route:
    """Fewer wireless hops of the direct path and the backbone detour; ties keep direct."""
    if flow.kind != UNICAST:
        raise ValueError("hybrid routing handles unicast flows only")
    return HybridRouter(graph, infra).route(flow)


@dataclass
class MobileState:
    """Per-slot view used by the two-hop relay policy.

    ``holdings[u]`` maps destination -> deque of relayed packet ids at ``u``;
    ``fresh[u]`` is the destination of source ``u``'s waiting fresh packets or None.
    """

    positions: np.ndarray
    holdings: list
    fresh: list
    r_m: float
    relay_cap: int = 1
    neighbors: list = field(default_factory=list)  # per node, nodes within r_m sorted by distance
    nearest: np.ndarray | None = None


def two_hop_policy(state: MobileState, u: int):
    """Candidate link for node ``u`` under two-hop relaying, or None.

    Deliveries (relay -> destination, or source -> destination) come first; otherwise a
    source with fresh packets hands one to its nearest neighbour if it has room.
    """
    pts = state.positions
    nbrs = state.neighbors[u] if state.neighbors else _within(pts, u, state.r_m)
    held = state.holdings[u]
    fresh = state.fresh[u]
    for v in nbrs:
        if (held and held.get(v)) or fresh == v:
            return Link(u, v, float(np.hypot(*(pts[u] - pts[v]))))
    if fresh is None:
        return None
    v = int(state.nearest[u]) if state.nearest is not None else _nearest(pts, u)
    length = float(np.hypot(*(pts[u] - pts[v])))
    if length > state.r_m:
        return None
    q = state.holdings[v].get(fresh)
    if q is not None and len(q) >= state.relay_cap:
        return None
    return Link(u, v, length)


def _within(pts, u, r):
    d = np.hypot(pts[:, 0] - pts[u, 0], pts[:, 1] - pts[u, 1])
    d[u] = np.inf
    idx = np.nonzero(d <= r)[0]
    return [int(i) for i in idx[np.lexsort((idx, d[idx]))]]


def _nearest(pts, u):
    d = np.hypot(pts[:, 0] - pts[u, 0], pts[:, 1] - pts[u, 1])
    d[u] = np.inf
    return int(np.argmin(d))
