"""Protocol interference model, greedy slot scheduling and the packing bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import _as_points

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


@dataclass(frozen=True)
class RadioModel:
    r: float
    W: float = 1.0
    C: float = 2.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("range r must be positive")
        if not self.W > 0:
            raise ValueError("link rate W must be positive")
        if not self.C > 1:
            raise ValueError("guard factor C must exceed 1")

    @property
    def slot(self) -> float:
        """Slot duration: one packet per link at rate W."""
        return 1.0 / self.W

    @property
    def guard(self) -> float:
        return self.C * self.r


@dataclass(frozen=True)
class Link:
    tx: int
    rx: int
    length: float = float("nan")

    def __post_init__(self):
        if self.tx == self.rx:
            raise ValueError("a link needs two distinct endpoints")


def make_link(tx: int, rx: int, placement) -> Link:
    pts = _as_points(placement)
    return Link(int(tx), int(rx), float(np.hypot(*(pts[tx] - pts[rx]))))


@dataclass(frozen=True)
class Slot:
    links: tuple = ()

    def __len__(self):
        return len(self.links)

    def nodes(self) -> set:
        return {x for link in self.links for x in (link.tx, link.rx)}


def conflict(a: Link, b: Link, radio: RadioModel, placement) -> bool:
    """Two links conflict if they share a node or their transmitters are closer than C*r."""
    if {a.tx, a.rx} & {b.tx, b.rx}:
        return True
    pts = _as_points(placement)
    d = math.hypot(pts[a.tx, 0] - pts[b.tx, 0], pts[a.tx, 1] - pts[b.tx, 1])
    return d < radio.guard


def greedy_indices(tx, rx, pts: np.ndarray, guard: float) -> list:
    """Indices of candidates accepted by an in-order greedy scan.

    ``tx``/``rx`` are sequences of node indices in priority order.
    """
    if _greedy_kernel is None or len(tx) == 0:
        return greedy_indices_py(tx, rx, pts, guard)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    acc = _greedy_kernel(np.asarray(tx, dtype=np.int64), np.asarray(rx, dtype=np.int64),
                         pts[:, 0].copy(), pts[:, 1].copy(), float(guard))
    return acc.tolist()


def _greedy_kernel_impl(tx, rx, xs, ys, guard):
    n_nodes = xs.shape[0]
    busy = np.zeros(n_nodes, dtype=np.bool_)
    side = min(int(1.0 / guard) + 1, 512)
    cell = max(guard, 1.0 / (side - 1)) if side > 1 else 2.0
    side = int(1.0 / cell) + 2
    head = np.full(side * side, -1, dtype=np.int64)
    nxt = np.full(tx.shape[0], -1, dtype=np.int64)
    acc = np.empty(tx.shape[0], dtype=np.int64)
    na = 0
    g2 = guard * guard
    for i in range(tx.shape[0]):
        t = tx[i]
        r = rx[i]
        if busy[t] or busy[r]:
            continue
        x = xs[t]
        y = ys[t]
        cx = int(x / cell)
        cy = int(y / cell)
        ok = True
        for ix in range(max(cx - 1, 0), min(cx + 2, side)):
            for iy in range(max(cy - 1, 0), min(cy + 2, side)):
                k = head[ix * side + iy]
                while k >= 0:
                    dx = x - xs[tx[k]]
                    dy = y - ys[tx[k]]
                    if dx * dx + dy * dy < g2:
                        ok = False
                        break
                    k = nxt[k]
                if not ok:
                    break
            if not ok:
                break
        if not ok:
            continue
        acc[na] = i
        na += 1
        busy[t] = True
        busy[r] = True
        c = cx * side + cy
        nxt[i] = head[c]
        head[c] = i
    return acc[:na]


_greedy_kernel = njit(cache=True)(_greedy_kernel_impl) if njit is not None else None


def greedy_indices_py(tx, rx, pts: np.ndarray, guard: float) -> list:
    """Pure-Python reference for :func:`greedy_indices`.

    ``tx``/``rx`` are sequences of node indices in priority order.  Accepted
    transmitters are bucketed in a ``guard``-sized grid so each test only looks
    at the 3x3 neighbourhood.
    """
    accepted = []
    busy = set()
    cells = {}
    g2 = guard * guard
    inv = 1.0 / guard
    xs = pts[:, 0].tolist()
    ys = pts[:, 1].tolist()
    for i, (t, r) in enumerate(zip(tx, rx)):
        if t in busy or r in busy:
            continue
        x = xs[t]
        y = ys[t]
        cx = int(x * inv)
        cy = int(y * inv)
        ok = True
        for ix in (cx - 1, cx, cx + 1):
            for iy in (cy - 1, cy, cy + 1):
                for ox, oy in cells.get((ix, iy), ()):
                    dx = x - ox
                    dy = y - oy
                    if dx * dx + dy * dy < g2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if not ok:
            continue
        accepted.append(i)
        busy.add(t)
        busy.add(r)
        cells.setdefault((cx, cy), []).append((x, y))
    return accepted


def greedy_slot(candidates, radio: RadioModel, placement) -> Slot:
    """Maximal conflict-free subset of ``candidates``, scanned in the given order."""
    candidates = list(candidates)
    if not candidates:
        return Slot(())
    pts = _as_points(placement)
    for link in candidates:
        if link.length == link.length and link.length > radio.r * (1 + 1e-12):
            raise ValueError(f"link {link.tx}->{link.rx} longer than the range")
    keep = greedy_indices([int(c.tx) for c in candidates], [int(c.rx) for c in candidates], pts, radio.guard)
    return Slot(tuple(candidates[i] for i in keep))


def packing_upper_bound(radio: RadioModel) -> int:
    """Upper bound on simultaneous transmitters in the unit square.

    Disks of radius C*r/2 around transmitters are disjoint and fit inside the
    square grown by C*r/2 on each side.
    """
    g = radio.guard
    if not g > 0:
        raise ValueError("guard distance must be positive")
    return int(math.floor((1.0 + g) ** 2 / (math.pi * (g / 2.0) ** 2)))


def packing_bound(guard: float) -> int:
    return int(math.floor((1.0 + guard) ** 2 / (math.pi * (guard / 2.0) ** 2)))


def slot_trace_csv(trace) -> str:
    """``t,tx,rx`` rows from an iterable of ``(t, tx, rx)``."""
    return "t,tx,rx\n" + "".join(f"{t},{a},{b}\n" for t, a, b in trace)
