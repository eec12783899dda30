"""Directed lattice path measures, bridges, cone routes and EIT tails.

Steps are stored as integer codes ``2 * axis + (sign < 0)``; a batch of P
paths of common length L is a ``(P, L)`` code array plus a start vertex.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice, cone_decomposition

MAX_COORD_BITS = 12


def step_code(axis, sign):
    return 2 * np.asarray(axis) + (np.asarray(sign) < 0)


def code_vectors(codes, d):
    """(..., d) signed unit vectors for step codes."""
    codes = np.asarray(codes)
    out = np.zeros(codes.shape + (d,), dtype=np.int64)
    np.put_along_axis(out, (codes // 2)[..., None], np.where(codes % 2 == 0, 1, -1)[..., None], axis=-1)
    return out


def _vector_code(v):
    v = np.asarray(v)
    axis = int(np.flatnonzero(v)[0])
    return int(step_code(axis, v[axis]))


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True, eq=False)
class LatticePath:
    """An ordered vertex list; edge t joins vertices t and t+1."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64)
        if v.ndim != 2 or len(v) == 0:
            raise ValueError("a path needs at least one vertex")
        if len(v) > 1 and np.any(np.abs(np.diff(v, axis=0)).sum(axis=1) != 1):
            raise ValueError("consecutive vertices must be lattice neighbours")
        object.__setattr__(self, "vertices", v)

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def __len__(self):
        return self.length

    @property
    def start(self):
        return tuple(self.vertices[0].tolist())

    @property
    def end(self):
        return tuple(self.vertices[-1].tolist())

    @property
    def edges(self):
        """Oriented edges as pairs of coordinate tuples."""
        vs = [tuple(v) for v in self.vertices.tolist()]
        return list(zip(vs[:-1], vs[1:]))

    @property
    def codes(self):
        diff = np.diff(self.vertices, axis=0)
        axis = np.argmax(np.abs(diff), axis=1)
        return step_code(axis, diff[np.arange(len(diff)), axis])

    def edge_keys(self):
        return edge_keys(self.vertices[0], self.codes[None])[0]

    def is_simple(self) -> bool:
        keys = self.edge_keys()
        return len(np.unique(keys)) == len(keys)

    def is_increasing(self) -> bool:
        return bool(np.all(np.diff(self.vertices, axis=0) >= 0))


def edge_keys(start, codes):
    """Integer key of each unoriented edge: lower endpoint and axis."""
    codes = np.asarray(codes)
    d = len(start)
    steps = code_vectors(codes, d)
    pos = np.asarray(start) + np.cumsum(steps, axis=-2) - steps
    axis = codes // 2
    lower = pos - np.where(codes % 2 == 1, 1, 0)[..., None] * np.eye(d, dtype=np.int64)[axis]
    off = 1 << (MAX_COORD_BITS - 1)
    if np.any(np.abs(lower) >= off):
        raise ValueError("path coordinates exceed the key range")
    key = np.zeros(codes.shape, dtype=np.int64)
    for k in range(d):
        key = (key << MAX_COORD_BITS) + (lower[..., k] + off)
    return key * d + axis


@dataclass(frozen=True, eq=False)
class PathBatch:
    """P paths of common length from a common start."""

    start: tuple
    codes: np.ndarray
    sampler: str = ""

    @property
    def dim(self):
        return len(self.start)

    @property
    def size(self):
        return self.codes.shape[0]

    @property
    def length(self):
        return self.codes.shape[1]

    def vertices(self):
        steps = code_vectors(self.codes, self.dim)
        zero = np.zeros((self.size, 1, self.dim), dtype=np.int64)
        return np.asarray(self.start) + np.concatenate([zero, np.cumsum(steps, axis=1)], axis=1)

    def path(self, i) -> LatticePath:
        steps = code_vectors(self.codes[i], self.dim)
        return LatticePath(np.vstack([self.start, np.asarray(self.start) + np.cumsum(steps, axis=0)]))

    def paths(self):
        return [self.path(i) for i in range(self.size)]

    def ends(self):
        return np.asarray(self.start) + code_vectors(self.codes, self.dim).sum(axis=1)

    def simple_mask(self):
        if self.length < 2:
            return np.ones(self.size, dtype=bool)
        keys = np.sort(edge_keys(self.start, self.codes), axis=1)
        return ~np.any(keys[:, 1:] == keys[:, :-1], axis=1)

    def __getitem__(self, idx):
        return PathBatch(self.start, self.codes[idx], self.sampler)


def concat_batches(batches):
    start = batches[0].start
    return PathBatch(start, np.concatenate([b.codes for b in batches]), batches[0].sampler)


# --------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class PathMeasure:
    """Law of the direction sequence of an increasing path.

    ``uniform_iid``: i.i.d. uniform directions.
    ``markov_mixing``: a direction chain that keeps its previous direction
    with probability ``rho`` and otherwise redraws uniformly; rho = 0 is
    ``uniform_iid``.
    """

    tag: str
    dim: int
    rho: float = 0.0

    def __post_init__(self):
        if self.tag not in ("uniform_iid", "markov_mixing"):
            raise ValueError(f"unknown path measure {self.tag!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1) so every step keeps positive probability")
        if self.tag == "uniform_iid" and self.rho != 0.0:
            raise ValueError("uniform_iid has no memory parameter")

    @property
    def label(self):
        return self.tag if self.tag == "uniform_iid" else f"markov_mixing(rho={self.rho:g})"

    def transition(self):
        """(d, d) step-to-step transition matrix."""
        d = self.dim
        return self.rho * np.eye(d) + (1.0 - self.rho) / d

    def sample_directions(self, rng, size, length):
        """(size, length) frame directions in 0..d-1."""
        d = self.dim
        if self.tag == "uniform_iid" or length == 0:
            return rng.integers(0, d, size=(size, length))
        out = np.empty((size, length), dtype=np.int64)
        out[:, 0] = rng.integers(0, d, size=size)
        for t in range(1, length):
            redraw = rng.random(size) >= self.rho
            out[:, t] = np.where(redraw, rng.integers(0, d, size=size), out[:, t - 1])
        return out

    def log_prob(self, directions):
        """Exact log-probability of each direction sequence."""
        dirs = np.atleast_2d(directions)
        d = self.dim
        lp = np.full(dirs.shape[0], 0.0 if dirs.shape[1] == 0 else -np.log(d))
        if dirs.shape[1] > 1:
            P = self.transition()
            lp = lp + np.log(P[dirs[:, :-1], dirs[:, 1:]]).sum(axis=1)
        return lp

    def sample(self, start, length, rng) -> LatticePath:
        return sample_increasing(self, start, length, rng)


def uniform_iid(dim=3) -> PathMeasure:
    return PathMeasure("uniform_iid", dim)


def markov_mixing(dim=3, rho=0.5) -> PathMeasure:
    return PathMeasure("markov_mixing", dim, rho)


def standard_frame(d):
    return tuple(tuple(int(i == k) for i in range(d)) for k in range(d))


def sample_increasing_batch(measure: PathMeasure, start, length, rng, size, frame=None) -> PathBatch:
    if length < 0:
        raise ValueError("length must be nonnegative")
    frame = frame or standard_frame(measure.dim)
    fcodes = np.array([_vector_code(v) for v in frame])
    dirs = measure.sample_directions(rng, size, length)
    return PathBatch(tuple(int(c) for c in start), fcodes[dirs], measure.label)


def sample_increasing(measure: PathMeasure, start, length, rng) -> LatticePath:
    """One increasing path of exactly ``length`` steps."""
    if len(start) != measure.dim:
        raise ValueError("start point and measure differ in dimension")
    return sample_increasing_batch(measure, start, length, rng, 1).path(0)


# --------------------------------------------------------------------------
# bridges


class BridgeSampler:
    """Increasing paths from x to y.

    A forward path of floor(s/2) steps from x and a backward path of the
    remaining steps from y are drawn independently from ``measure``; the
    pair is kept when they meet. For uniform_iid, when the retry cap runs
    out the remaining draws come from the exact conditional bridge, which
    for i.i.d. uniform steps is a uniform shuffle of the step multiset.
    """

    def __init__(self, measure: PathMeasure, x, y, frame=None, retry_cap=2000, batch=4096):
        self.measure = measure
        self.x = tuple(int(c) for c in x)
        self.y = tuple(int(c) for c in y)
        d = measure.dim
        if len(self.x) != d or len(self.y) != d:
            raise ValueError("endpoints and measure differ in dimension")
        self.frame = tuple(tuple(v) for v in (frame or standard_frame(d)))
        F = np.asarray(self.frame)
        # counts n_k with y - x = sum_k n_k frame_k
        counts = np.linalg.solve(F.T.astype(float), np.subtract(self.y, self.x).astype(float))
        self.counts = np.rint(counts).astype(np.int64)
        if np.any(self.counts < 0) or np.any(np.abs(counts - self.counts) > 1e-9):
            raise ValueError("y - x is not a nonnegative combination of the frame directions")
        self.fcodes = np.array([_vector_code(v) for v in self.frame])
        self.s = int(self.counts.sum())
        self.m = self.s // 2
        self.retry_cap = retry_cap
        self.batch = batch
        self.attempts = 0
        self.accepted = 0
        self.fallback_draws = 0

    @property
    def length(self):
        return self.s

    @property
    def label(self):
        return f"bridge[{self.measure.label}]"

    def _counts(self, dirs):
        d = self.measure.dim
        return np.stack([(dirs == k).sum(axis=1) for k in range(d)], axis=1)

    def sample_directions(self, rng, size):
        need = size
        out = []
        tries = 0
        while need > 0 and tries < self.retry_cap:
            B = max(self.batch, 2 * need)
            fwd = self.measure.sample_directions(rng, B, self.m)
            bwd = self.measure.sample_directions(rng, B, self.s - self.m)
            ok = np.all(self._counts(fwd) + self._counts(bwd) == self.counts, axis=1)
            self.attempts += B
            idx = np.flatnonzero(ok)[:need]
            if idx.size:
                out.append(np.concatenate([fwd[idx], bwd[idx, ::-1]], axis=1))
                need -= idx.size
                self.accepted += idx.size
            tries += 1
        if need > 0:
            if self.measure.tag != "uniform_iid":
                raise RuntimeError(
                    f"bridge rejection exhausted {self.retry_cap} batches; exact bridging is only available for uniform_iid"
                )
            base = np.repeat(np.arange(self.measure.dim), self.counts)
            out.append(rng.permuted(np.tile(base, (need, 1)), axis=1))
            self.fallback_draws += need
        return np.concatenate(out) if out else np.zeros((0, self.s), dtype=np.int64)

    def sample(self, rng, size=1) -> PathBatch:
        dirs = self.sample_directions(rng, size)
        batch = PathBatch(self.x, self.fcodes[dirs], self.label)
        if not np.all(batch.ends() == self.y):
            raise AssertionError("bridge produced a path with the wrong endpoint")
        return batch


def bridge_sampler(measure: PathMeasure, x, y, **kw) -> BridgeSampler:
    return BridgeSampler(measure, x, y, **kw)


class ConeSampler:
    """mu_{x,y}: bridged paths through the four cones of the route from x to y,
    joined by the deterministic parity and tail steps. Concatenations that
    reuse an edge are rejected, so every returned path is simple."""

    def __init__(self, x, y, measure: PathMeasure | None = None, lattice: Lattice | None = None, retry_cap=200):
        self.x = tuple(int(c) for c in x)
        self.y = tuple(int(c) for c in y)
        if len(self.x) != 3:
            raise ValueError("cone routing is defined in dimension 3 only")
        self.measure = measure or uniform_iid(3)
        if self.measure.dim != 3:
            raise ValueError("cone segments need a three-dimensional path measure")
        center = (np.asarray(self.x) + np.asarray(self.y)) / 2.0
        self.radius = 2.0 * float(np.linalg.norm(np.subtract(self.y, self.x)))
        self.center = center
        if lattice is not None and not lattice.contains_ball(center, self.radius):
            raise ValueError("the ball B((x+y)/2, 2|x-y|) is not contained in the lattice")
        self.route = cone_decomposition(self.x, self.y)
        self.parts = []
        here = np.asarray(self.x) + np.sum(np.asarray(self.route.prefix).reshape(-1, 3), axis=0)
        if self.route.prefix:
            self.parts.append(np.array([_vector_code(v) for v in self.route.prefix]))
        for seg in self.route.segments:
            if seg.length > 0:
                end = np.asarray(seg.start) + seg.length * np.sum(seg.directions, axis=0)
                self.parts.append(BridgeSampler(self.measure, seg.start, end, frame=seg.directions))
            if seg.tail:
                self.parts.append(np.array([_vector_code(v) for v in seg.tail]))
        self.retry_cap = retry_cap
        self.rejected = 0
        del here

    @property
    def label(self):
        return f"cone[{self.measure.label}]"

    @property
    def length(self):
        return sum(p.length if isinstance(p, BridgeSampler) else len(p) for p in self.parts)

    def _draw(self, rng, size):
        cols = []
        for part in self.parts:
            if isinstance(part, BridgeSampler):
                cols.append(part.sample(rng, size).codes)
            else:
                cols.append(np.tile(part, (size, 1)))
        codes = np.concatenate(cols, axis=1) if cols else np.zeros((size, 0), dtype=np.int64)
        return PathBatch(self.x, codes, self.label)

    def sample(self, rng, size=1) -> PathBatch:
        out, need = [], size
        for _ in range(self.retry_cap):
            batch = self._draw(rng, max(need, 16))
            ok = batch.simple_mask()
            self.rejected += int((~ok).sum())
            keep = batch[np.flatnonzero(ok)[:need]]
            if keep.size:
                out.append(keep)
                need -= keep.size
            if need == 0:
                break
        if need > 0:
            raise RuntimeError("could not draw enough simple cone paths")
        batch = concat_batches(out)
        if not np.all(batch.ends() == self.y):
            raise AssertionError("cone path missed its endpoint")
        return batch


def cone_sampler(x, y, measure=None, lattice=None) -> ConeSampler:
    return ConeSampler(x, y, measure, lattice)


class FixedPathSampler:
    """The point mass on one path."""

    def __init__(self, path: LatticePath):
        self.path = path
        self.label = "fixed"

    @property
    def length(self):
        return self.path.length

    def sample(self, rng, size=1) -> PathBatch:
        return PathBatch(self.path.start, np.tile(self.path.codes, (size, 1)), self.label)


class ForwardSampler:
    """Unbridged increasing paths of fixed length from ``start``."""

    def __init__(self, measure: PathMeasure, start, length):
        self.measure = measure
        self.start = tuple(int(c) for c in start)
        self.length = int(length)
        self.label = measure.label

    def sample(self, rng, size=1) -> PathBatch:
        return sample_increasing_batch(self.measure, self.start, self.length, rng, size)


# --------------------------------------------------------------------------
# intersections


def intersection_count(p1: LatticePath, p2: LatticePath) -> int:
    """Number of unoriented edges the two paths share."""
    return int(np.intersect1d(p1.edge_keys(), p2.edge_keys()).size)


def batch_intersections(b1: PathBatch, b2: PathBatch, aligned=None):
    """Shared-edge counts of the pairs (b1[i], b2[i]).

    Increasing paths in the standard frame from a common start can only
    share an edge at the same time index, which gives a vectorised count;
    other batches fall back to sorted key intersection per pair.
    """
    if b1.size != b2.size:
        raise ValueError("batches must pair up")
    if aligned is None:
        aligned = b1.start == b2.start and np.all(b1.codes % 2 == 0) and np.all(b2.codes % 2 == 0)
    if aligned and b1.length == b2.length:
        if b1.length == 0:
            return np.zeros(b1.size, dtype=np.int64)
        d = b1.dim
        diff = np.cumsum(code_vectors(b1.codes, d) - code_vectors(b2.codes, d), axis=1)
        same_pos = np.ones(b1.codes.shape, dtype=bool)
        same_pos[:, 1:] = np.all(diff[:, :-1] == 0, axis=-1)
        return np.sum(same_pos & (b1.codes == b2.codes), axis=1)
    k1 = edge_keys(b1.start, b1.codes)
    k2 = edge_keys(b2.start, b2.codes)
    return np.array([np.intersect1d(a, b).size for a, b in zip(k1, k2)], dtype=np.int64)


# --------------------------------------------------------------------------
# EIT tails


@dataclass
class EITResult:
    sampler: str
    n: int
    pairs: int
    k: np.ndarray
    counts: np.ndarray
    tail: np.ndarray
    C: float
    alpha: float
    r2: float
    alpha_se: float
    fit_range: tuple
    degenerate: bool = False
    histogram: np.ndarray = field(default=None, repr=False)

    def rows(self):
        return [
            {"k": int(k), "count": int(c), "probability": float(p), "C": self.C, "alpha": self.alpha}
            for k, c, p in zip(self.k, self.counts, self.tail)
        ]


def _fit_tail(hist, min_count):
    """Log-linear fit of P[X >= k] over k >= 1 while at least ``min_count``
    pairs remain in the tail."""
    total = hist.sum()
    at_least = np.cumsum(hist[::-1])[::-1]
    ks = np.arange(1, len(hist))
    ks = ks[at_least[1:] >= min_count]
    if ks.size < 2:
        return np.nan, np.nan, np.nan, (0, 0)
    y = np.log(at_least[ks] / total)
    slope, intercept = np.polyfit(ks, y, 1)
    resid = y - (slope * ks + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(intercept)), float(-slope), float(r2), (int(ks[0]), int(ks[-1]))


def estimate_eit_tail(sampler, n, num_pairs, rng, min_count=20, bootstrap=200, batch=20000) -> EITResult:
    """Empirical P[|p1 ∩ p2| >= k] for independent pairs, with a fitted
    C exp(-alpha k) and a bootstrap standard error for alpha.

    ``sampler`` is a PathMeasure (forward paths of d*n steps from the
    origin) or any object with ``sample(rng, size) -> PathBatch``.
    """
    if num_pairs < 10_000:
        raise ValueError("need at least 10^4 pairs for a tail estimate")
    if isinstance(sampler, PathMeasure):
        sampler = ForwardSampler(sampler, (0,) * sampler.dim, sampler.dim * n)
    counts = []
    done = 0
    while done < num_pairs:
        m = min(batch, num_pairs - done)
        b1, b2 = sampler.sample(rng, m), sampler.sample(rng, m)
        counts.append(batch_intersections(b1, b2))
        done += m
    counts = np.concatenate(counts)
    hist = np.bincount(counts)
    at_least = np.cumsum(hist[::-1])[::-1]
    k = np.arange(len(hist))
    label = getattr(sampler, "label", type(sampler).__name__)
    if counts.max() == 0:
        return EITResult(label, n, num_pairs, k, at_least, at_least / num_pairs, 0.0, np.inf, np.nan, np.nan, (0, 0), True, hist)
    C, alpha, r2, rng_fit = _fit_tail(hist, min_count)
    boots = []
    for _ in range(bootstrap):
        h = rng.multinomial(num_pairs, hist / num_pairs)
        boots.append(_fit_tail(h, min_count)[1])
    boots = np.asarray(boots)
    se = float(np.nanstd(boots, ddof=1)) if np.isfinite(boots).sum() > 1 else np.nan
    return EITResult(label, n, num_pairs, k, at_least, at_least / num_pairs, C, alpha, r2, se, rng_fit, False, hist)


def write_eit_csv(result: EITResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["k", "count", "probability", "C", "alpha"])
        w.writeheader()
        w.writerows(result.rows())


@dataclass
class EITCertificate:
    measure: str
    results: list
    r2_min: float
    spread_max: float
    passed: bool

    @property
    def alphas(self):
        return [r.alpha for r in self.results]


def certify_eit(measure: PathMeasure, rng, ns=(8, 16, 32), num_pairs=20_000, r2_min=0.95, spread_max=0.10):
    """Accept a path measure when its tails fit an exponential (R^2 >= r2_min)
    at every n and the fitted alpha varies by at most ``spread_max`` relative
    to its mean across n."""
    results = [estimate_eit_tail(measure, n, num_pairs, rng) for n in ns]
    alphas = np.array([r.alpha for r in results])
    ok = all(np.isfinite(r.r2) and r.r2 >= r2_min for r in results)
    spread = (alphas.max() - alphas.min()) / alphas.mean() if np.all(np.isfinite(alphas)) else np.inf
    return EITCertificate(measure.label, results, r2_min, spread_max, bool(ok and spread <= spread_max))
