"""Finite subsets of Z^d: vertices, nearest-neighbour edges, couplings and
the directed-cone routing used to connect two distant points."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class BoundarySpec:
    mode: str = "free"
    vertices: tuple = ()

    def __post_init__(self):
        if self.mode not in ("free", "dirichlet"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if self.mode == "dirichlet" and len(self.vertices) == 0:
            raise ValueError("dirichlet boundary needs a nonempty vertex set")
        object.__setattr__(self, "vertices", tuple(tuple(int(c) for c in v) for v in self.vertices))


@dataclass(frozen=True, eq=False)
class Lattice:
    """Finite vertex set in Z^d with nearest-neighbour adjacency.

    Vertices are integer tuples kept in lexicographic order; vertex ``k`` of
    ``coords`` has index ``k``. Each unoriented edge is stored once as
    ``(i, j)`` with ``coords[i] < coords[j]`` lexicographically, which for
    Z^d means ``coords[j] = coords[i] + e_axis``.
    """

    dim: int
    coords: np.ndarray
    couplings: np.ndarray | None = None
    extents: tuple | None = None
    origin: tuple | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, self.dim)
        order = np.lexsort(coords.T[::-1])
        coords = coords[order]
        if len(coords) > 1 and np.any(np.all(coords[1:] == coords[:-1], axis=1)):
            raise ValueError("duplicate vertices")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "_index", {tuple(c): k for k, c in enumerate(coords.tolist())})
        if self.couplings is None:
            J = np.ones(len(self.edges))
        else:
            J = np.asarray(self.couplings, dtype=float)
            if J.shape != (len(self.edges),):
                raise ValueError("coupling table does not match the edge set")
            if np.any(J <= 0):
                raise ValueError("couplings must be strictly positive")
        J.setflags(write=False)
        object.__setattr__(self, "couplings", J)

    @property
    def num_vertices(self) -> int:
        return len(self.coords)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def index(self, vertex) -> int:
        try:
            return self._index[tuple(int(c) for c in vertex)]
        except KeyError:
            raise KeyError(f"{tuple(vertex)} is not a vertex of the lattice") from None

    def indices(self, points) -> np.ndarray:
        """Vectorised vertex lookup; -1 marks points outside the lattice."""
        pts = np.asarray(points, dtype=np.int64)
        flat = pts.reshape(-1, self.dim)
        if self.extents is not None:
            rel = flat - np.asarray(self.origin)
            ext = np.asarray(self.extents)
            inside = np.all((rel >= 0) & (rel < ext), axis=1)
            out = np.full(len(flat), -1, dtype=np.int64)
            if inside.any():
                out[inside] = np.ravel_multi_index(tuple(rel[inside].T), ext)
        else:
            out = np.array([self._index.get(tuple(p), -1) for p in flat.tolist()], dtype=np.int64)
        return out.reshape(pts.shape[:-1])

    def __contains__(self, vertex) -> bool:
        return tuple(int(c) for c in vertex) in self._index

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) array of canonical vertex-index pairs, sorted by (tail, axis)."""
        pairs = []
        for axis in range(self.dim):
            shifted = self.coords.copy()
            shifted[:, axis] += 1
            heads = self.indices(shifted)
            tails = np.nonzero(heads >= 0)[0]
            pairs.append(np.stack([tails, heads[tails], np.full(len(tails), axis)], axis=1))
        pairs = np.concatenate(pairs) if pairs else np.zeros((0, 3), dtype=np.int64)
        pairs = pairs[np.lexsort((pairs[:, 2], pairs[:, 0]))]
        out = np.ascontiguousarray(pairs[:, :2])
        out.setflags(write=False)
        return out

    @cached_property
    def edge_axes(self) -> np.ndarray:
        d = self.coords[self.edges[:, 1]] - self.coords[self.edges[:, 0]]
        return np.argmax(d, axis=1)

    @cached_property
    def _edge_lookup(self) -> dict:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}

    def edge_index(self, i: int, j: int) -> tuple[int, int]:
        """Index of the unoriented edge {i, j} and +1/-1 for whether (i, j)
        is its canonical orientation."""
        if (i, j) in self._edge_lookup:
            return self._edge_lookup[(i, j)], 1
        if (j, i) in self._edge_lookup:
            return self._edge_lookup[(j, i)], -1
        raise KeyError(f"({i}, {j}) is not an edge")

    def oriented_edges(self) -> list[tuple[tuple, tuple]]:
        out = []
        for i, j in self.edges.tolist():
            a, b = tuple(self.coords[i].tolist()), tuple(self.coords[j].tolist())
            out.append((a, b))
            out.append((b, a))
        return out

    @cached_property
    def neighbors(self):
        """Padded neighbour table ``(nbr, edge, sign, J)``, each (N, 2d).

        ``sign`` is +1 when (v, nbr) is the canonical orientation of the edge
        and -1 otherwise; padded slots have ``J == 0`` and point at ``v``.
        """
        N, K = self.num_vertices, 2 * self.dim
        nbr = np.tile(np.arange(N)[:, None], (1, K))
        edge = np.zeros((N, K), dtype=np.int64)
        sign = np.zeros((N, K), dtype=np.int64)
        J = np.zeros((N, K))
        fill = np.zeros(N, dtype=np.int64)
        for k, (i, j) in enumerate(self.edges.tolist()):
            for v, u, s in ((i, j, 1), (j, i, -1)):
                slot = fill[v]
                nbr[v, slot], edge[v, slot], sign[v, slot], J[v, slot] = u, k, s, self.couplings[k]
                fill[v] += 1
        for a in (nbr, edge, sign, J):
            a.setflags(write=False)
        return nbr, edge, sign, J

    @cached_property
    def parity(self) -> np.ndarray:
        return self.coords.sum(axis=1) % 2

    def with_couplings(self, couplings) -> "Lattice":
        return Lattice(self.dim, self.coords, couplings, self.extents, self.origin)

    def interior_boundary(self) -> tuple:
        """Vertices with fewer than 2d neighbours (the classical inner boundary)."""
        deg = np.bincount(self.edges.ravel(), minlength=self.num_vertices)
        return tuple(tuple(c) for c in self.coords[deg < 2 * self.dim].tolist())

    def contains_ball(self, center, radius: float) -> bool:
        """True when every integer point of the closed ball is a vertex."""
        c = np.asarray(center, dtype=float)
        lo = np.ceil(c - radius - 1e-12).astype(int)
        hi = np.floor(c + radius + 1e-12).astype(int)
        grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        pts = pts[np.sum((pts - c) ** 2, axis=1) <= radius**2 + 1e-9]
        return bool(np.all(self.indices(pts) >= 0))

    def to_dict(self) -> dict:
        out = {"dimension": self.dim}
        if self.extents is not None:
            out["extents"] = list(self.extents)
            out["origin"] = list(self.origin)
        else:
            out["vertices"] = self.coords.tolist()
        if np.any(self.couplings != 1.0):
            out["couplings"] = {
                json.dumps([self.coords[i].tolist(), self.coords[j].tolist()]): float(J)
                for (i, j), J in zip(self.edges.tolist(), self.couplings)
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Lattice":
        if "extents" in data:
            lat = build_box(data["extents"], data.get("origin"))
        else:
            lat = cls(int(data["dimension"]), np.asarray(data["vertices"]))
        if "couplings" in data:
            J = np.ones(lat.num_edges)
            for key, val in data["couplings"].items():
                a, b = json.loads(key) if isinstance(key, str) else key
                k, _ = lat.edge_index(lat.index(a), lat.index(b))
                J[k] = val
            lat = lat.with_couplings(J)
        return lat


def build_box(dims, origin=None) -> Lattice:
    dims = tuple(int(n) for n in dims)
    if len(dims) == 0 or any(n < 1 for n in dims):
        raise ValueError(f"box extents must be positive, got {dims}")
    origin = tuple(int(o) for o in origin) if origin is not None else (0,) * len(dims)
    if len(origin) != len(dims):
        raise ValueError("origin and extents differ in dimension")
    grids = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1) + np.asarray(origin)
    return Lattice(len(dims), coords, extents=dims, origin=origin)


def centered_box(n: int, d: int = 3) -> Lattice:
    """{-n, ..., n}^d."""
    return build_box([2 * n + 1] * d, [-n] * d)


def oriented_edges(lat: Lattice):
    return lat.oriented_edges()


# --------------------------------------------------------------------------
# Directed-cone routing in Z^3


@dataclass(frozen=True)
class ConeSegment:
    """A monotone stretch: ``length`` units of time in the cone spanned by
    ``directions`` (three signed unit vectors), i.e. 3*length lattice steps
    with net displacement ``length * sum(directions)``, followed by the
    deterministic straight ``tail`` steps that reach the next corner."""

    start: tuple
    directions: tuple
    length: int
    tail: tuple = ()

    @property
    def displacement(self) -> np.ndarray:
        disp = self.length * np.sum(np.asarray(self.directions), axis=0)
        for step in self.tail:
            disp = disp + np.asarray(step)
        return disp


@dataclass(frozen=True)
class ConeRoute:
    start: tuple
    end: tuple
    prefix: tuple
    segments: tuple

    def corners(self) -> list:
        out = [np.asarray(self.start) + np.sum(np.asarray(self.prefix).reshape(-1, len(self.start)), axis=0)]
        for seg in self.segments:
            out.append(out[-1] + seg.displacement)
        return out


def _unit(axis: int, sign: int, d: int = 3) -> tuple:
    v = [0] * d
    v[axis] = sign
    return tuple(v)


def cone_decomposition(x, y) -> ConeRoute:
    """Route from x to y through at most four directed cones.

    After translating x to 0, reflecting axes so y - x >= 0 and sorting the
    coordinates as a <= b <= c, the corners are (a+t,)*3, (a, b, b),
    (a+s, b+s, b+s) and (a, b, c) with t = (b-a)/2 and s = (c-b)/2. The
    interval lengths are a+t, t-1, s-1, s-1 (clamped at 0); whatever a cone
    does not cover is walked by straight tail steps. If b-a or c-b is odd,
    one or two forced steps at the start fix the parity.
    """
    x = tuple(int(v) for v in x)
    y = tuple(int(v) for v in y)
    if len(x) != 3 or len(y) != 3:
        raise ValueError("the four-cone routing is defined in dimension 3 only")
    if x == y:
        raise ValueError("cone decomposition needs x != y")
    delta = np.subtract(y, x)
    signs = np.where(delta < 0, -1, 1)
    perm = np.argsort(np.abs(delta), kind="stable")
    a, b, c = (int(v) for v in np.abs(delta)[perm])

    def lift(v):
        out = [0, 0, 0]
        for k in range(3):
            out[perm[k]] = int(v[k] * signs[perm[k]])
        return tuple(out)

    prefix = []
    if (b - a) % 2 == 1 and (c - b) % 2 == 1:
        prefix.append(1)
    elif (b - a) % 2 == 1:
        if a > 0:
            prefix.append(0)
        else:
            prefix += [1, 2]
    elif (c - b) % 2 == 1:
        prefix.append(2)
    for k in prefix:
        if k == 0:
            a -= 1
        elif k == 1:
            b -= 1
        else:
            c -= 1
    prefix_steps = tuple(lift(_unit(k, 1)) for k in prefix)

    t, s = (b - a) // 2, (c - b) // 2
    base = np.asarray(x) + np.sum(np.asarray(prefix_steps).reshape(-1, 3), axis=0)
    plan = [
        ((1, 1, 1), a + t, (a + t, a + t, a + t)),
        ((-1, 1, 1), t - 1, (a, b, b)),
        ((1, 1, 1), s - 1, (a + s, b + s, b + s)),
        ((-1, -1, 1), s - 1, (a, b, c)),
    ]
    segments = []
    here = np.zeros(3, dtype=int)
    for dvec, length, corner in plan:
        length = max(int(length), 0)
        dirs = tuple(_unit(k, dvec[k]) for k in range(3))
        reached = here + length * np.asarray(dvec)
        rest = np.asarray(corner) - reached
        # negative moves first, so a tail never walks back along its own cone
        order = sorted(range(3), key=lambda k: (rest[k] > 0, k))
        tail = []
        for k in order:
            step = 1 if rest[k] > 0 else -1
            tail += [_unit(k, step)] * abs(int(rest[k]))
        start = tuple(int(v) for v in base + np.asarray(lift(here)))
        segments.append(
            ConeSegment(start, tuple(lift(v) for v in dirs), length, tuple(lift(v) for v in tail))
        )
        here = np.asarray(corner)
    return ConeRoute(x, y, prefix_steps, tuple(segments))
