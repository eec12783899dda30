"""Exact circle-model expectations on tiny graphs.

Every angle (and, for disorder averages, every edge disorder) is put on the
periodic grid 2 pi k / q. For smooth periodic integrands the trapezoid rule
converges geometrically, so a q versus q/2 comparison is a reliable error
bound. Integrals are tensor contractions of per-edge factors

    exp(beta J (cos(theta_i - theta_j + omega_e) - 1))

evaluated with ``np.einsum``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

MAX_VARIABLES = 7
MIN_Q, MAX_Q = 32, 512


class OracleSizeError(ValueError):
    pass


class OracleNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Observable:
    """prod_v e^{i k_v theta_v} * prod_e f_e(Y_e), Y_e = theta_i - theta_j + omega_e.

    ``charges`` maps vertex -> integer k_v; ``edge_terms`` is a tuple of
    (edge index, f) with f a vectorised function of Y_e.
    """

    charges: dict = field(default_factory=dict)
    edge_terms: tuple = ()

    @property
    def total_charge(self):
        return sum(self.charges.values())


def character(charges) -> Observable:
    return Observable(dict(charges))


def phase_pair(x, y) -> Observable:
    """e^{i (theta_x - theta_y)}."""
    if x == y:
        return Observable()
    return Observable({x: 1, y: -1})


def edge_function(edges_and_funcs) -> Observable:
    return Observable({}, tuple(edges_and_funcs))


@dataclass
class OracleProblem:
    """Circle model on ``num_vertices`` vertices and the given edge list.

    ``clamped`` maps vertices to fixed angles (Dirichlet data); ``h`` and
    ``psi`` give a fixed field term h_j cos(theta_j + psi_j). ``u`` is the
    disorder concentration used by disorder averages (default beta).
    """

    num_vertices: int
    edges: list
    beta: float
    u: float | None = None
    couplings: np.ndarray | None = None
    clamped: dict = field(default_factory=dict)
    h: np.ndarray | None = None
    psi: np.ndarray | None = None
    q: int = 64

    def __post_init__(self):
        self.edges = [tuple(int(v) for v in e) for e in self.edges]
        if self.u is None:
            self.u = self.beta
        if self.beta < 0 or self.u < 0:
            raise ValueError("beta and u must be nonnegative")
        if self.couplings is None:
            self.couplings = np.ones(len(self.edges))
        self.couplings = np.asarray(self.couplings, dtype=float)
        if len(self.couplings) != len(self.edges):
            raise ValueError("one coupling per edge")
        for i, j in self.edges:
            if not (0 <= i < self.num_vertices and 0 <= j < self.num_vertices) or i == j:
                raise ValueError(f"bad edge {(i, j)}")
        self.q = check_q(self.q)

    @property
    def has_field(self):
        return self.h is not None and np.any(np.asarray(self.h) != 0)

    def components(self):
        if not self.edges:
            return np.arange(self.num_vertices)
        e = np.asarray(self.edges)
        A = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.num_vertices,) * 2)
        return connected_components(A, directed=False)[1]


def check_q(q):
    q = int(q)
    if q < MIN_Q or q > MAX_Q or q & (q - 1):
        raise ValueError(f"grid resolution must be a power of two in [{MIN_Q}, {MAX_Q}], got {q}")
    return q


def chain_problem(length, beta, **kw) -> OracleProblem:
    return OracleProblem(length + 1, [(k, k + 1) for k in range(length)], beta, **kw)


def cycle_problem(length, beta, **kw) -> OracleProblem:
    return OracleProblem(length, [(k, (k + 1) % length) for k in range(length)], beta, **kw)


# --------------------------------------------------------------------------
# contraction engine


def _gauge_fixed(problem, observables):
    """Vertices that may be pinned at angle 0, or None when some observable
    carries a nonzero charge on a rotation-invariant component (value 0)."""
    if problem.clamped or problem.has_field:
        return {}
    comp = problem.components()
    fixed = {}
    for c in np.unique(comp):
        members = np.flatnonzero(comp == c)
        for obs in observables:
            if sum(obs.charges.get(int(v), 0) for v in members) != 0:
                return None
        fixed[int(members[0])] = 0.0
    return fixed


def _contract(problem, q, observables, omega=None, disorder_slice=None):
    """Partition function and un-normalised observables.

    With ``omega`` given (length E), the disorder is fixed; otherwise every
    edge disorder is a free output index on the grid, except the first,
    which is pinned to grid value ``disorder_slice``. Returns (Z, [num]).
    """
    grid = 2 * np.pi * np.arange(q) / q
    fixed = _gauge_fixed(problem, observables)
    if fixed is None:
        return None
    fixed = {**fixed, **{int(v): float(a) for v, a in problem.clamped.items()}}
    free = [v for v in range(problem.num_vertices) if v not in fixed]
    vidx = {v: k for k, v in enumerate(free)}
    E = len(problem.edges)
    average = omega is None
    out_edges = list(range(1, E)) if average else []
    base = len(free)
    widx = {e: base + k for k, e in enumerate(out_edges)}
    if average and disorder_slice is None:
        raise ValueError("disorder averages are contracted one outer slice at a time")

    def angle(v):
        # (array broadcast over its own index, index list)
        if v in fixed:
            return np.array(fixed[v]), []
        return grid, [vidx[v]]

    def edge_tensor(e, f=None):
        i, j = problem.edges[e]
        ai, li = angle(i)
        aj, lj = angle(j)
        if average:
            if e == 0:
                aw, lw = np.array(grid[disorder_slice]), []
            else:
                aw, lw = grid, [widx[e]]
        else:
            aw, lw = np.array(omega[e]), []
        labels = li + lj + lw
        shapes = []
        arrays = []
        for arr, lab in ((ai, li), (aj, lj), (aw, lw)):
            arrays.append(arr)
            shapes.append(len(lab))
        # broadcast the three pieces onto the joint index set
        dims = len(labels)
        pos = 0
        bc = []
        for arr, n in zip(arrays, shapes):
            shape = [1] * dims
            if n:
                shape[pos] = q
            bc.append(arr.reshape(shape) if dims else arr)
            pos += n
        Y = bc[0] - bc[1] + bc[2]
        val = np.exp(problem.beta * problem.couplings[e] * (np.cos(Y) - 1.0))
        if f is not None:
            val = val * f(Y)
        return np.asarray(val, dtype=complex), labels

    def vertex_tensor(v, charge=0):
        if v in fixed:
            return None
        th = grid
        val = np.ones(q, dtype=complex)
        if problem.has_field:
            val = val * np.exp(problem.h[v] * (np.cos(th + problem.psi[v]) - 1.0))
        if charge:
            val = val * np.exp(1j * charge * th)
        return val, [vidx[v]]

    def contract(obs):
        terms = dict(obs.edge_terms) if obs is not None else {}
        charges = obs.charges if obs is not None else {}
        ops = []
        scalar = 1.0 + 0j
        for e in range(E):
            t, lab = edge_tensor(e, terms.get(e))
            ops += [t, lab]
        for v in range(problem.num_vertices):
            k = charges.get(v, 0)
            if v in fixed:
                th = fixed[v]
                if problem.has_field:
                    scalar *= np.exp(problem.h[v] * (np.cos(th + problem.psi[v]) - 1.0))
                scalar *= np.exp(1j * k * th)
                continue
            t, lab = vertex_tensor(v, k)
            ops += [t, lab]
        out = sorted(widx.values())
        if not ops:
            return np.asarray(scalar)
        return scalar * np.einsum(*ops, out, optimize="greedy")

    Z = contract(None)
    return Z, [contract(o) for o in observables]


def _count_variables(problem, observables, average):
    fixed = _gauge_fixed(problem, observables) or {}
    fixed = {**fixed, **problem.clamped}
    n = problem.num_vertices - len(fixed)
    return n + (len(problem.edges) if average else 0)


def _check_size(problem, observables, average):
    n = _count_variables(problem, observables, average)
    if n > MAX_VARIABLES:
        raise OracleSizeError(f"{n} integration variables exceed the direct-mode limit of {MAX_VARIABLES}")


@dataclass
class OracleResult:
    value: complex | float
    error: float
    q: int

    def __float__(self):
        return float(np.real(self.value))


def _richardson(fn, q, tol):
    fine = fn(q)
    coarse = fn(q // 2)
    err = float(np.max(np.abs(np.asarray(fine) - np.asarray(coarse))))
    if tol is not None and err > tol:
        raise OracleNotConverged(f"grid error {err:.3g} above tolerance {tol:.3g}; raise q")
    return OracleResult(_real_if_close(fine), err, q)


def _real_if_close(v):
    v = np.asarray(v)
    if np.iscomplexobj(v) and np.all(np.abs(v.imag) < 1e-14 * np.maximum(1.0, np.abs(v.real))):
        v = v.real
    return v.item() if v.ndim == 0 else v


def exact_quenched(problem: OracleProblem, omega, observable, tol=1e-7) -> OracleResult:
    """<observable>_{omega, beta} on the graph. ``observable`` is an
    Observable or a list of (coefficient, Observable)."""
    terms = observable if isinstance(observable, list) else [(1.0, observable)]
    obs = [o for _, o in terms]
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (len(problem.edges),):
        raise ValueError("one disorder value per edge")
    _check_size(problem, [], False)

    def at(q):
        total = 0j
        for c, o in terms:
            res = _contract(problem, q, [o], omega=omega)
            if res is not None:
                Z, (num,) = res
                total += c * num / Z
        return total

    del obs
    return _richardson(at, problem.q, tol)


def exact_disorder_average(problem: OracleProblem, functional, observables, tol=1e-7) -> OracleResult:
    """E_u[ F(<A_1>_omega, ..., omega) ] with omega_e i.i.d. exp(u cos w).

    ``functional(values, omega)`` receives the list of quenched expectations
    of ``observables`` as arrays over the disorder grid (edges 1..E-1 as
    axes, edge 0 fixed for the current outer slice) and the matching
    disorder values as a list of broadcastable arrays, and returns an
    array of the same shape.
    """
    observables = list(observables)
    E = len(problem.edges)
    if E == 0:
        raise ValueError("a disorder average needs at least one edge")
    _check_size(problem, observables, True)

    def at(q):
        grid = 2 * np.pi * np.arange(q) / q
        w = np.exp(problem.u * (np.cos(grid) - 1.0))
        w = w / w.sum()
        fixed = _gauge_fixed(problem, observables)
        total = 0j
        for s in range(q):
            omega = [np.array(grid[s])] + [
                grid.reshape([q if k == e else 1 for k in range(E - 1)]) for e in range(E - 1)
            ]
            if fixed is None:
                vals = [np.zeros((q,) * (E - 1)) for _ in observables]
            else:
                Z, nums = _contract(problem, q, observables, disorder_slice=s)
                vals = [n / Z for n in nums]
            F = np.asarray(functional(vals, omega))
            weight = w[s]
            for e in range(1, E):
                weight = weight * w.reshape([q if k == e - 1 else 1 for k in range(E - 1)])
            total += np.sum(F * weight)
        return total

    return _richardson(at, problem.q, tol)


def disorder_average(problem, observable, tol=1e-7) -> OracleResult:
    """E_u[<observable>_omega]."""
    return exact_disorder_average(problem, lambda v, w: v[0], [observable], tol)


# --------------------------------------------------------------------------
# transfer matrices


def transfer_chain(length, beta, omega=None, boundary="free", x=0, y=None, q=256, tol=1e-8) -> OracleResult:
    """<e^{i(theta_x - theta_y)}> on a chain of ``length`` edges (vertices
    0..length) or on a cycle of ``length`` vertices (``boundary='periodic'``).

    ``dirichlet`` pins both chain ends to angle 0. Works in the Fourier
    basis, where an edge multiplies mode k by I_k(beta) e^{-i k omega} and a
    character shifts modes by one, so exponentially small correlations keep
    full relative precision. ``q`` modes are kept; cost O(length q).
    """
    if boundary not in ("free", "periodic", "dirichlet"):
        raise ValueError("boundary must be free, periodic or dirichlet; other topologies are not chains")
    L = int(length)
    if L < 1:
        raise ValueError("need at least one edge")
    y = L if y is None else y
    nv = L if boundary == "periodic" else L + 1
    if not (0 <= x < nv and 0 <= y < nv):
        raise ValueError("observable vertices outside the chain")
    omega = np.zeros(L) if omega is None else np.asarray(omega, dtype=float)
    if omega.shape != (L,):
        raise ValueError("one disorder value per edge")

    def at(q):
        K = q // 2
        k = np.arange(-K, K + 1)
        bessel = special.ive(np.abs(k), beta)
        charge = np.zeros(nv, dtype=int)
        charge[x] += 1
        charge[y] -= 1

        def shift(c, by):
            # multiply by e^{i by theta}; modes pushed past +-K are dropped
            if by == 0:
                return c
            out = np.zeros_like(c)
            if by > 0:
                out[by:] = c[:-by]
            else:
                out[:by] = c[-by:]
            return out

        def run(charged):
            # free ends integrate vertex 0; dirichlet and periodic pin it at 0
            # (on the cycle this is the rotation gauge fix)
            c = np.zeros(2 * K + 1, dtype=complex)
            if boundary == "free":
                c[K] = 1.0
            else:
                c[:] = 1.0
            if charged:
                c = shift(c, charge[0])
            logscale = 0.0
            for e in range(L):
                c = c * bessel * np.exp(-1j * k * omega[e])
                nxt = (e + 1) % nv
                if charged and nxt != 0:
                    c = shift(c, charge[nxt])
                m = np.max(np.abs(c))
                c = c / m
                logscale += np.log(m)
            return (c[K] if boundary == "free" else c.sum()), logscale

        num, ln = run(True)
        Z, lz = run(False)
        return num / Z * np.exp(ln - lz)

    return _richardson(at, check_q(q), tol)


def quenched_vm_mean(beta, q=256):
    """<cos Y> for Y ~ exp(beta cos Y) on the periodic grid."""
    grid = 2 * np.pi * np.arange(q) / q
    w = np.exp(beta * (np.cos(grid) - 1.0))
    return float(np.sum(np.cos(grid) * w) / np.sum(w))
