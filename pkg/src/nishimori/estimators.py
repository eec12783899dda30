"""Nishimori-line estimators: lambda normalisers, the path estimator R,
planted synchronisation and the identity harness."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from . import oracle as orc
from . import spins as sp
from .disorder import DISORDER_SPACE, DisorderField, check_model, sample_disorder, sample_disorder_replicas
from .gibbs import QuenchedState, run_chains
from .lattice import Lattice, build_box
from .paths import PathBatch, batch_intersections, edge_keys
from .streams import DYNAMICS, PATHS, PLANTED, stream

QUAD_RTOL = 1e-12
GROUP_DIM = {"circle": 1, "su2": 2, "so3": 3}
NON_INFORMATIVE_LAMBDA = 0.1


# --------------------------------------------------------------------------
# lambda


@dataclass
class LambdaValue:
    model: str
    beta: float
    value: float
    error: float
    matrix: np.ndarray | None = None
    mc_value: float | None = None
    mc_stderr: float | None = None
    mc_offdiag_max: float | None = None
    mc_offdiag_stderr: float | None = None

    def __float__(self):
        return float(self.value)


def _ratio(num, den):
    (a, ea), (b, eb) = num, den
    return a / b, abs(a / b) * (abs(ea / a) if a else 0.0) + abs(a / b) * abs(eb / b)


def _quad(f, lo, hi):
    val, err = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    return val, err


def lambda_xy(beta) -> LambdaValue:
    """E[cos w] under exp(beta cos w) by adaptive quadrature (= I1/I0)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return LambdaValue("xy", 0.0, 0.0, 0.0, np.eye(1))
    w = lambda t: np.exp(beta * (np.cos(t) - 1.0))
    val, err = _ratio(_quad(lambda t: np.cos(t) * w(t), 0.0, np.pi), _quad(w, 0.0, np.pi))
    return LambdaValue("xy", float(beta), val, err, np.eye(1) * val)


def lambda_xy_harmonic(beta, k=2):
    """E[cos(k w)] under exp(beta cos w) (= I_k/I_0)."""
    if k == 0:
        return 1.0
    if beta == 0:
        return 0.0
    w = lambda t: np.exp(beta * (np.cos(t) - 1.0))
    return _quad(lambda t: np.cos(k * t) * w(t), 0.0, np.pi)[0] / _quad(w, 0.0, np.pi)[0]


def _lambda_su2(beta):
    # Haar marginal of the real part a is sqrt(1 - a^2); Re Tr = 2a
    w = lambda a: np.sqrt(1.0 - a * a) * np.exp(2.0 * beta * (a - 1.0))
    return _ratio(_quad(lambda a: a * w(a), -1.0, 1.0), _quad(w, -1.0, 1.0))


def _lambda_so3(beta):
    # Haar marginal of the rotation angle is (1 - cos t); Tr = 1 + 2 cos t
    w = lambda t: (1.0 - np.cos(t)) * np.exp(2.0 * beta * (np.cos(t) - 1.0))
    val, err = _ratio(_quad(lambda t: (1.0 + 2.0 * np.cos(t)) * w(t), 0.0, np.pi), _quad(w, 0.0, np.pi))
    return val / 3.0, err / 3.0


def _lambda_heisenberg(beta):
    # Omega_zz = <e_z, Omega e_z> is uniform on [-1, 1] under Haar
    w = lambda t: np.exp(beta * (t - 1.0))
    return _ratio(_quad(lambda t: t * w(t), -1.0, 1.0), _quad(w, -1.0, 1.0))


_GROUP_LAMBDA = {
    "su2": _lambda_su2,
    "isoclinic": _lambda_su2,
    "so3": _lambda_so3,
    "heisenberg": _lambda_heisenberg,
    "heisenberg_lift": _lambda_heisenberg,
}


def mean_matrix(model, values):
    """Disorder values in their matrix form: 2x2 complex for SU(2) via phi,
    3x3 real for SO(3); works on non-unit averages too."""
    space = DISORDER_SPACE[model]
    if space == "su2":
        return phi_linear(values)
    return np.asarray(values)


def phi_linear(q):
    q = np.asarray(q, dtype=float)
    a, b, c, d = (q[..., k] for k in range(4))
    return np.stack([np.stack([a + 1j * b, c - 1j * d], -1), np.stack([-c - 1j * d, a - 1j * b], -1)], -2)


def lambda_group(model, beta, mc_samples=0, rng=None) -> LambdaValue:
    """lambda for the group disorders by one-dimensional quadrature.

    su2/isoclinic: E[Omega] = lambda Id_2; so3: E[Omega] = lambda Id_3.
    heisenberg: the tilt exp(beta Omega_zz) only fixes the z axis, so
    E[Omega] = diag(0, 0, lambda) with lambda = E[Omega_zz] = coth(beta) - 1/beta.
    With ``mc_samples`` > 0 a Monte Carlo E[Omega] is attached as a cross-check.
    """
    if model not in _GROUP_LAMBDA:
        raise ValueError(f"lambda_group supports {sorted(_GROUP_LAMBDA)}, got {model!r}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    val, err = (0.0, 0.0) if beta == 0 else _GROUP_LAMBDA[model](beta)
    space = DISORDER_SPACE[model]
    m = GROUP_DIM[space]
    if model in ("heisenberg", "heisenberg_lift"):
        matrix = np.diag([0.0, 0.0, val])
    else:
        matrix = val * np.eye(m)
    out = LambdaValue(model, float(beta), float(val), float(err), matrix)
    if mc_samples:
        rng = rng or np.random.default_rng(0)
        if model in ("heisenberg", "heisenberg_lift"):
            draws = sp.sample_tilted_zz(beta, rng, mc_samples)
        else:
            draws = sp.tilted_sample(space, beta, rng, mc_samples)
        M = mean_matrix(model, draws)
        E = M.mean(axis=0)
        if np.iscomplexobj(M):
            S = np.hypot(M.real.std(0, ddof=1), M.imag.std(0, ddof=1)) / np.sqrt(mc_samples)
        else:
            S = M.std(axis=0, ddof=1) / np.sqrt(mc_samples)
        diag_idx = (2, 2) if model.startswith("heisenberg") else None
        if diag_idx:
            out.mc_value = float(np.real(E[diag_idx]))
            out.mc_stderr = float(S[diag_idx])
        else:
            out.mc_value = float(np.real(np.trace(E)) / m)
            out.mc_stderr = float(np.sqrt(np.sum(np.diag(S) ** 2)) / m)
        dev = np.abs(E - matrix)
        # entries whose exact mean is zero
        mask = ~np.eye(m, dtype=bool)
        if model.startswith("heisenberg"):
            mask = np.ones((m, m), dtype=bool)
            mask[2, 2] = False
        k = int(np.argmax(np.where(mask, dev, -1)))
        out.mc_offdiag_max = float(dev.flat[k])
        out.mc_offdiag_stderr = float(S.flat[k])
    return out


def lambda_value(model, beta) -> LambdaValue:
    check_model(model)
    return lambda_xy(beta) if model == "xy" else lambda_group(model, beta)


def exact_edge_energy(model, beta):
    """Averaged quenched per-edge internal energy on the Nishimori line:
    minus the mean interaction of one edge under the disorder law."""
    lam = lambda_value(model, beta).value
    scale = {"xy": 1.0, "su2": 2.0, "isoclinic": 2.0, "so3": 3.0, "heisenberg": 1.0, "heisenberg_lift": 1.0}
    return -scale[model] * lam


# --------------------------------------------------------------------------
# R estimator


@dataclass
class REstimate:
    """Per-replica R values: complex (R,) for the circle, quaternion-linear
    (R, 4) for SU(2) (matrix form via ``matrix``), real (R, 3, 3) otherwise."""

    model: str
    values: np.ndarray
    num_paths: int
    normalization: float
    target: tuple
    sampler: str

    @property
    def space(self):
        return DISORDER_SPACE[self.model]

    def matrix(self):
        if self.space == "circle":
            return self.values.reshape(-1, 1, 1)
        return mean_matrix(self.model, self.values)

    def mean(self):
        return self.values.mean(axis=0)

    def stderr(self):
        v = self.values
        if np.iscomplexobj(v):
            return np.hypot(v.real.std(0, ddof=1), v.imag.std(0, ddof=1)) / np.sqrt(len(v))
        return v.std(0, ddof=1) / np.sqrt(len(v))

    def identity_target(self):
        if self.space == "circle":
            return 1.0 + 0j
        if self.space == "su2":
            return sp.identity("su2")
        if self.model.startswith("heisenberg"):
            return np.diag([0.0, 0.0, 1.0])
        return np.eye(3)

    def deviation(self):
        """(distance of E[R] from its target per unit dimension, matching sigma).

        circle: |E R - 1|; SU(2): Frobenius distance of phi(E R) to Id_2
        over sqrt 2, which equals the Euclidean distance of the quaternion;
        3x3: Frobenius distance over sqrt 3.
        """
        diff = self.mean() - self.identity_target()
        se = self.stderr()
        if self.space == "circle":
            return float(abs(diff)), float(se)
        if self.space == "su2":
            return float(np.linalg.norm(diff)), float(np.sqrt(np.sum(se**2)))
        return float(np.linalg.norm(diff) / np.sqrt(3)), float(np.sqrt(np.sum(se**2)) / np.sqrt(3))

    def second_moments(self):
        """|R|^2 (circle) or Re Tr(R R^*)/m per replica."""
        v = self.values
        if self.space == "circle":
            return np.abs(v) ** 2
        if self.space == "su2":
            return np.sum(v**2, axis=-1)
        return np.sum(v**2, axis=(-1, -2)) / 3.0


def edge_table(lat: Lattice) -> np.ndarray:
    """(N, d) index of the edge v -> v + e_axis, -1 where absent."""
    table = np.full((lat.num_vertices, lat.dim), -1, dtype=np.int64)
    table[lat.edges[:, 0], lat.edge_axes] = np.arange(lat.num_edges)
    return table


def path_edges(lat: Lattice, batch: PathBatch):
    """Edge indices and orientation signs, each (P, L), for a path batch."""
    verts = batch.vertices()
    idx = lat.indices(verts)
    if np.any(idx < 0):
        raise ValueError("path leaves the lattice of the disorder field")
    axis = batch.codes // 2
    forward = batch.codes % 2 == 0
    tails = np.where(forward, idx[:, :-1], idx[:, 1:])
    e = edge_table(lat)[tails, axis]
    if np.any(e < 0):
        raise ValueError("path uses an edge outside the disorder field")
    return e, np.where(forward, 1, -1)


def ordered_products(disorder: DisorderField, batch: PathBatch):
    """Ordered edge products along every path: (R, P, *value)."""
    e, s = path_edges(disorder.lattice, batch)
    vals = disorder.oriented(e, s)
    space = disorder.space
    if space == "circle":
        return np.exp(1j * vals.sum(axis=2))
    out = vals[:, :, 0] if batch.length else sp.identity(space, vals.shape[:2])
    for t in range(1, batch.length):
        out = sp.qmul(out, vals[:, :, t]) if space == "su2" else out @ vals[:, :, t]
    return out


def r_estimator(disorder: DisorderField, path_sampler, lam, num_paths=None, rng=None) -> REstimate:
    """R = mean over paths of lambda^{-|p|} times the ordered edge product.

    ``path_sampler`` is either a fixed PathBatch (shared by all replicas,
    the common random numbers choice) or an object with ``sample(rng, n)``.
    """
    lam_v = float(lam.value if isinstance(lam, LambdaValue) else lam)
    if lam_v <= 0:
        raise ValueError("lambda must be positive")
    if isinstance(path_sampler, PathBatch):
        batch = path_sampler
    else:
        if not num_paths or num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        batch = path_sampler.sample(rng or np.random.default_rng(0), num_paths)
    prods = ordered_products(disorder, batch)
    norm = lam_v ** (-batch.length)
    values = norm * prods.mean(axis=1)
    end = tuple(int(c) for c in batch.ends()[0]) if batch.size else batch.start
    return REstimate(disorder.model, values, batch.size, norm, (batch.start, end), batch.sampler)


def exact_second_moment_xy(batch: PathBatch, beta):
    """Exact disorder average of |R|^2 for a fixed circle path set.

    Each path reads edge e with a net winding s in Z (forward minus
    backward traversals). For paths a, b the edge contributes
    E[e^{i(s_a - s_b) w}] = lambda_{|s_a - s_b|}, and each path is
    normalized by lambda^{-|p|}.
    """
    lam = lambda_xy(beta).value
    K = edge_keys(batch.start, batch.codes)
    S = np.where(batch.codes % 2 == 0, 1, -1)
    keys = []
    for k, s in zip(K, S):
        net = {}
        for key, sign in zip(k.tolist(), s.tolist()):
            net[key] = net.get(key, 0) + sign
        keys.append(net)
    factor = {0: 1.0, 1: lam}
    total = 0.0
    L = batch.length
    for ka in keys:
        for kb in keys:
            f = 1.0
            for key in set(ka) | set(kb):
                k = abs(ka.get(key, 0) - kb.get(key, 0))
                if k not in factor:
                    factor[k] = lambda_xy_harmonic(beta, k)
                f *= factor[k]
            total += f
    return total / batch.size**2 / lam ** (2 * L)


def exact_second_moment_increasing(batch: PathBatch, beta):
    """Fast exact E|R|^2 for increasing paths from a common start:
    mean over pairs of lambda^{-2 k_ab}, k_ab = shared edges."""
    lam = lambda_xy(beta).value
    P = batch.size
    a = np.repeat(np.arange(P), P)
    b = np.tile(np.arange(P), P)
    k = batch_intersections(batch[a], batch[b])
    return float(np.mean(lam ** (-2.0 * k)))


@dataclass
class SecondMomentRow:
    model: str
    beta: float
    n: int
    moment: float
    stderr: float
    exact: float | None
    num_disorders: int
    num_paths: int


@dataclass
class SecondMomentTable:
    rows: list
    jensen_ok: bool
    decreasing: bool
    sigma: float

    def as_dicts(self):
        return [asdict(r) for r in self.rows]


def diagonal_target(n, d=3):
    return (n,) * d


def second_moment_probe(
    model, beta_list, n, path_sampler, num_disorders, num_paths=256, seed=0, u=None, sigma=3.0, lattice=None
) -> SecondMomentTable:
    """E|R|^2 (circle) or E Re Tr(R R^*)/m over fresh Nishimori disorders,
    one shared path set per beta. Flags the Jensen floor E >= 1 - sigma SE
    and a strictly decreasing trend across the beta grid."""
    if u is not None and any(u != b for b in beta_list):
        raise ValueError("the second-moment bounds hold on the Nishimori line only (u = beta)")
    rows = []
    for k, beta in enumerate(beta_list):
        batch = path_sampler if isinstance(path_sampler, PathBatch) else path_sampler.sample(stream(seed, PATHS, k), num_paths)
        lat = lattice or _box_for(batch)
        lam = lambda_value(model, beta)
        dis = sample_disorder_replicas(lat, model, beta, seed + 1000 * k, range(num_disorders))
        R = r_estimator(dis, batch, lam)
        mom = R.second_moments()
        exact = None
        if model == "xy":
            if np.all(batch.codes % 2 == 0):
                exact = exact_second_moment_increasing(batch, beta)
            else:
                exact = exact_second_moment_xy(batch, beta)
        rows.append(
            SecondMomentRow(model, float(beta), n, float(mom.mean()), float(mom.std(ddof=1) / np.sqrt(len(mom))), exact, num_disorders, batch.size)
        )
    jensen = all(r.moment >= 1.0 - sigma * r.stderr for r in rows)
    dec = all(b.moment < a.moment for a, b in zip(rows, rows[1:]))
    return SecondMomentTable(rows, jensen, dec, sigma)


def _box_for(batch: PathBatch):
    v = batch.vertices().reshape(-1, batch.dim)
    lo, hi = v.min(axis=0), v.max(axis=0)
    return build_box(hi - lo + 1, lo)


# --------------------------------------------------------------------------
# synchronisation


def polar_project(M, tol=1e-12, max_iter=100):
    """Nearest unitary (orthogonal for real input) by Newton's iteration
    X <- (X + X^{-*}) / 2. Real input with negative determinant is sent to
    the nearest rotation by flipping the weakest singular direction."""
    X = np.asarray(M)
    real = not np.iscomplexobj(X)
    X = X.astype(complex)
    for _ in range(max_iter):
        Y = 0.5 * (X + np.linalg.inv(np.conj(np.swapaxes(X, -1, -2))))
        delta = np.max(np.abs(Y - X))
        X = Y
        if delta < tol:
            break
    else:
        raise RuntimeError("polar iteration did not converge")
    if real:
        X = X.real
        det = np.linalg.det(X)
        if np.any(det < 0):
            u, _, vt = np.linalg.svd(np.asarray(M))
            flip = np.ones(X.shape[:-1])
            flip[..., -1] = np.where(det < 0, -1.0, 1.0)
            X = np.where((det < 0)[..., None, None], u @ (flip[..., :, None] * vt), X)
    return X


def planted_instance(lat: Lattice, model, beta, rng, replicas=1):
    """Hidden spins U and disorder Omega_ij = U_i N_ij U_j^{-1}, N ~ rho_beta
    (circle: omega_ij = theta_i + n_ij - theta_j). Returns (disorder, truth)."""
    space = DISORDER_SPACE[model]
    if model not in ("xy", "su2", "so3"):
        raise ValueError("planted instances are provided for xy, su2 and so3")
    noise = sample_disorder(lat, model, beta, rng, replicas) if np.isfinite(beta) else None
    N = noise.values if noise is not None else sp.identity(space, (replicas, lat.num_edges))
    truth = sp.haar_sample(space, rng, (replicas, lat.num_vertices))
    i, j = lat.edges[:, 0], lat.edges[:, 1]
    Ui, Uj = truth[:, i], truth[:, j]
    if space == "circle":
        vals = np.mod(Ui + N - Uj, sp.TWO_PI)
    elif space == "su2":
        vals = sp.qmul(sp.qmul(Ui, N), sp.qconj(Uj))
    else:
        vals = Ui @ N @ np.swapaxes(Uj, -1, -2)
    return DisorderField(model, lat, vals, float(beta)), truth


def true_relative(model, truth, x_idx, y_idx):
    space = DISORDER_SPACE[model]
    Ux, Uy = truth[:, x_idx], truth[:, y_idx]
    if space == "circle":
        return np.exp(1j * (Ux - Uy))
    if space == "su2":
        return sp.qmul(Ux, sp.qconj(Uy))
    return Ux @ np.swapaxes(Uy, -1, -2)


def alignment(model, est, true):
    """Re Tr(est^* true)/m."""
    space = DISORDER_SPACE[model]
    if space == "circle":
        return np.real(np.conj(est) * true)
    if space == "su2":
        return np.sum(est * true, axis=-1)
    return np.sum(est * true, axis=(-1, -2)) / 3.0


@dataclass
class Reconstruction:
    model: str
    estimate: np.ndarray
    raw: REstimate
    alignment: np.ndarray | None
    informative: bool


def reconstruct_relative(disorder: DisorderField, x, y, path_sampler, lam, num_paths=None, truth=None, rng=None) -> Reconstruction:
    """Estimate U_x U_y^{-1} from the disorder alone by projecting R to the
    group; scores against ``truth`` when the instance is planted."""
    lam_v = float(lam.value if isinstance(lam, LambdaValue) else lam)
    R = r_estimator(disorder, path_sampler, lam_v, num_paths, rng)
    lat = disorder.lattice
    if tuple(R.target[0]) != tuple(x) or tuple(R.target[1]) != tuple(y):
        raise ValueError("paths do not join x to y")
    space = disorder.space
    if space == "circle":
        est = R.values / np.where(np.abs(R.values) > 0, np.abs(R.values), 1.0)
    elif space == "su2":
        M = polar_project(phi_linear(R.values))
        est = np.stack([M[..., 0, 0].real, M[..., 0, 0].imag, M[..., 0, 1].real, -M[..., 0, 1].imag], axis=-1)
    else:
        est = polar_project(R.values)
    score = None
    if truth is not None:
        score = alignment(disorder.model, est, true_relative(disorder.model, truth, lat.index(x), lat.index(y)))
    return Reconstruction(disorder.model, est, R, score, lam_v >= NON_INFORMATIVE_LAMBDA)


# --------------------------------------------------------------------------
# identity harness


@dataclass
class HarnessRecord:
    check: str
    model: str
    beta: float
    lattice: str
    quantity: str
    mc_value: float | None
    mc_stderr: float | None
    oracle_value: float | None
    expected: float | None
    passed: bool
    detail: dict = field(default_factory=dict)

    @property
    def z(self):
        if self.mc_value is None or self.expected is None or not self.mc_stderr:
            return None
        return (self.mc_value - self.expected) / self.mc_stderr

    def to_json(self):
        d = asdict(self)
        d["z"] = self.z
        return json.dumps(d, default=float)


@dataclass
class HarnessConfig:
    model: str = "xy"
    beta: float = 1.5
    dims: tuple = (4, 4, 4)
    replicas: int = 32
    burnin: int = 200
    measure: int = 2000
    seed: int = 0
    sigma: float = 3.0
    oracle_tol: float = 1e-8
    mmsp_fields: int = 50
    mmsp_points: int = 10_000
    two_point_betas: tuple = (0.5, 3.0, 6.0, 12.0)
    two_point_dims: tuple = (10, 10, 10)
    two_point_margin: float = 0.5
    two_point_x: tuple = (3, 5, 5)
    two_point_y: tuple = (7, 5, 5)


CHECKS = ("factorization", "internal_energy", "spin_glass", "mmsp", "two_point_lower")


def _mc_agree(value, se, expected, sigma):
    return bool(abs(value - expected) <= sigma * se)


def _replica_stats(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def simulate(model, lat, beta, replicas, burnin, measure, seed, observables, clones=1, boundary=None, u=None, block=0):
    """Time averages of ``observables`` (label -> fn(state) -> (R*clones,...))
    per replica and clone, shape (replicas, clones, ...)."""
    u = beta if u is None else u
    dis = sample_disorder_replicas(lat, model, u, seed, range(replicas))
    if clones > 1:
        dis = dis.repeat(clones)
    state = QuenchedState(lat, dis, beta, stream(seed, DYNAMICS, block), boundary=boundary)
    series = run_chains(state, burnin, measure, 1, observables)
    return {k: v.mean(axis=-1).reshape((replicas, clones) + v.shape[1:-1]) for k, v in series.items()}, state


def _edge_y(model, state, e):
    """Gauge-invariant edge variable: theta_i - theta_j + omega_e (circle) or
    U_i^* Omega_e U_j as a quaternion (SU(2))."""
    i, j = state.lattice.edges[e]
    s = state.spins
    om = state.disorder.values[:, e]
    if model == "xy":
        return s[:, i] - s[:, j] + om
    if model == "su2":
        return sp.qmul(sp.qmul(sp.qconj(s[:, i]), om), s[:, j])
    raise ValueError("edge variables are provided for xy and su2")


def _disjoint_edges(lat, k=3):
    """k edges with no endpoints in common or adjacent, spread over the box."""
    chosen, used = [], set()
    for e in np.linspace(0, lat.num_edges - 1, 8 * k).astype(int):
        i, j = (int(v) for v in lat.edges[e])
        if {i, j} & used:
            continue
        chosen.append(int(e))
        for v in (i, j):
            used |= {v} | set(lat.neighbors[0][v].tolist())
        if len(chosen) == k:
            return chosen
    raise ValueError("lattice too small for disjoint edges")


def check_factorization(cfg: HarnessConfig):
    recs = []
    beta = cfg.beta
    lam = lambda_xy(beta).value
    lam2 = lambda_xy_harmonic(beta, 2)
    # oracle: path graph with 2 edges and a triangle with 3 edges
    graphs = {"chain2": orc.chain_problem(2, beta), "triangle": orc.OracleProblem(3, [(0, 1), (1, 2), (2, 0)], beta)}
    funcs = {"cos": (np.cos, lam), "sin": (np.sin, 0.0), "cos2": (lambda y: np.cos(2 * y), lam2)}
    for gname, prob in graphs.items():
        E = len(prob.edges)
        for fname, (f, mean) in funcs.items():
            obs = orc.edge_function([(e, f) for e in range(E)])
            val = orc.disorder_average(prob, obs, tol=cfg.oracle_tol).value
            exp = mean**E
            recs.append(
                HarnessRecord("factorization", "xy", beta, gname, f"E prod {fname}(Y_e)", None, None, float(np.real(val)), exp,
                              bool(abs(val - exp) <= cfg.oracle_tol), {"edges": E})
            )
    # MC on a box: three disjoint edges
    model = cfg.model if cfg.model in ("xy", "su2") else "xy"
    lat = build_box(cfg.dims)
    edges = _disjoint_edges(lat, 3)
    if model == "xy":
        tests = {k: (f, m**3) for k, (f, m) in funcs.items()}
        tests.update({f"single_{k}": (f, m) for k, (f, m) in funcs.items()})

        def make(f, single):
            if single:
                return lambda s: np.mean([f(_edge_y(model, s, e)) for e in edges], axis=0)
            return lambda s: np.prod([f(_edge_y(model, s, e)) for e in edges], axis=0)

        obs = {k: make(f, k.startswith("single")) for k, (f, _) in tests.items()}
    else:
        lam_g = lambda_group("su2", beta).value
        w = lambda a: np.sqrt(1 - a * a) * np.exp(2 * beta * (a - 1))
        a2 = _quad(lambda a: a * a * w(a), -1, 1)[0] / _quad(w, -1, 1)[0]
        tests = {"a": (None, lam_g), "a^2": (None, a2), "a1 a2 a3": (None, lam_g**3), "b": (None, 0.0)}
        obs = {
            "a": lambda s: np.mean([_edge_y(model, s, e)[..., 0] for e in edges], axis=0),
            "a^2": lambda s: np.mean([_edge_y(model, s, e)[..., 0] ** 2 for e in edges], axis=0),
            "a1 a2 a3": lambda s: np.prod([_edge_y(model, s, e)[..., 0] for e in edges], axis=0),
            "b": lambda s: np.mean([_edge_y(model, s, e)[..., 1] for e in edges], axis=0),
        }
    avgs, _ = simulate(model, lat, beta, cfg.replicas, cfg.burnin, cfg.measure, cfg.seed, obs)
    for k, (_, exp) in tests.items():
        m, se = _replica_stats(avgs[k][:, 0])
        recs.append(
            HarnessRecord("factorization", model, beta, "x".join(map(str, cfg.dims)), k, m, se, None, exp,
                          _mc_agree(m, se, exp, cfg.sigma), {"edges": edges})
        )
    return recs


def off_nishimori_gap(beta=1.5, u=0.5):
    """Oracle gap |E[cos Y_1 cos Y_2] - lambda(beta)^2| on a triangle with
    u != beta. On a tree the edge variables are i.i.d. for every u, so the
    counterexample needs a cycle."""
    prob = orc.OracleProblem(3, [(0, 1), (1, 2), (2, 0)], beta, u=u)
    val = orc.disorder_average(prob, orc.edge_function([(0, np.cos), (1, np.cos)])).value
    return float(abs(val - lambda_xy(beta).value ** 2))


def check_internal_energy(cfg: HarnessConfig):
    lat = build_box(cfg.dims)
    exp = exact_edge_energy(cfg.model, cfg.beta)
    avgs, _ = simulate(cfg.model, lat, cfg.beta, cfg.replicas, cfg.burnin, cfg.measure, cfg.seed,
                       {"e": lambda s: s.internal_energy()[1]})
    m, se = _replica_stats(avgs["e"][:, 0])
    rec = HarnessRecord("internal_energy", cfg.model, cfg.beta, "x".join(map(str, cfg.dims)), "energy per edge", m, se, None,
                        exp, _mc_agree(m, se, exp, cfg.sigma))
    out = [rec]
    if cfg.model == "xy":
        # oracle: a single edge with disorder integrated out
        val = orc.disorder_average(orc.OracleProblem(2, [(0, 1)], cfg.beta), orc.edge_function([(0, np.cos)])).value
        out.append(HarnessRecord("internal_energy", "xy", cfg.beta, "edge", "energy per edge", None, None, -float(val), exp,
                                 bool(abs(-val - exp) <= cfg.oracle_tol)))
    return out


def check_spin_glass(cfg: HarnessConfig):
    beta = cfg.beta
    prob = orc.chain_problem(2, beta)
    pp = orc.phase_pair(0, 2)
    lin = orc.exact_disorder_average(prob, lambda v, w: v[0], [pp], tol=cfg.oracle_tol).value
    sq = orc.exact_disorder_average(prob, lambda v, w: np.abs(v[0]) ** 2, [pp], tol=cfg.oracle_tol).value
    recs = [HarnessRecord("spin_glass", "xy", beta, "chain2", "E<e^{i(t0-tx)}> - E|<.>|^2", None, None, float(np.real(lin - sq)), 0.0,
                          bool(abs(lin - sq) <= cfg.oracle_tol), {"linear": float(np.real(lin)), "square": float(sq)})]
    lat = build_box(cfg.dims)
    x = (0,) * lat.dim
    y = tuple(min(2, n - 1) for n in cfg.dims)
    ix, iy = lat.index(x), lat.index(y)
    avgs, _ = simulate("xy", lat, beta, cfg.replicas, cfg.burnin, cfg.measure, cfg.seed,
                       {"m": lambda s: np.exp(1j * (s.spins[:, ix] - s.spins[:, iy]))}, clones=2)
    m = avgs["m"]
    linear = m.mean(axis=1).real
    square = (m[:, 0] * np.conj(m[:, 1])).real
    d_m, d_se = _replica_stats(linear - square)
    l_m, l_se = _replica_stats(linear)
    s_m, s_se = _replica_stats(square)
    recs.append(
        HarnessRecord("spin_glass", "xy", beta, "x".join(map(str, cfg.dims)), "E<e^{i(t0-tx)}> - E|<.>|^2", d_m, d_se, None, 0.0,
                      _mc_agree(d_m, d_se, 0.0, cfg.sigma) and l_m >= -cfg.sigma * l_se and s_m >= -cfg.sigma * s_se,
                      {"linear": l_m, "linear_se": l_se, "square": s_m, "square_se": s_se, "x": x, "y": y})
    )
    return recs


def duplicate_identity_error(rng, points=10_000):
    """max |cos t + cos(t' - w) - 2 cos(p - w/2) cos(p' - w/2)| with
    p = (t' + t)/2, p' = (t' - t)/2 at random points."""
    t, tp, w = rng.uniform(-np.pi, np.pi, size=(3, points))
    lhs = np.cos(t) + np.cos(tp - w)
    p, pp = (tp + t) / 2, (tp - t) / 2
    rhs = 2 * np.cos(p - w / 2) * np.cos(pp - w / 2)
    return float(np.max(np.abs(lhs - rhs)))


MMSP_GRAPHS = {
    "grid2x3": (6, [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)], 5),
    "cycle6": (6, [(k, (k + 1) % 6) for k in range(6)], 3),
    "k4": (4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], 3),
}


def cos_cos(x, y):
    """cos(theta_x) cos(theta_y) as a combination of characters."""
    return [(0.25, orc.character({x: 1, y: 1} if x != y else {x: 2})), (0.25, orc.character({x: -1, y: -1} if x != y else {x: -2})),
            (0.25, orc.phase_pair(x, y)), (0.25, orc.phase_pair(y, x))]


def check_mmsp(cfg: HarnessConfig):
    rng = stream(cfg.seed, PLANTED, 99)
    recs = []
    worst_all = -np.inf
    for name, (nv, edges, x) in MMSP_GRAPHS.items():
        prob = orc.OracleProblem(nv, edges, cfg.beta)
        obs = cos_cos(0, x)
        ref = orc.exact_quenched(prob, np.zeros(len(edges)), obs, tol=cfg.oracle_tol).value
        worst = -np.inf
        for _ in range(cfg.mmsp_fields):
            om = rng.uniform(0, 2 * np.pi, len(edges))
            val = orc.exact_quenched(prob, om, obs, tol=cfg.oracle_tol).value
            worst = max(worst, float(np.real(val) - np.real(ref)))
        worst_all = max(worst_all, worst)
        recs.append(HarnessRecord("mmsp", "xy", cfg.beta, name, "max_omega <cc>(omega) - <cc>(0)", None, None, worst, 0.0,
                                  bool(worst <= 1e-8), {"reference": float(np.real(ref)), "fields": cfg.mmsp_fields}))
    err = duplicate_identity_error(rng, cfg.mmsp_points)
    recs.append(HarnessRecord("mmsp", "xy", cfg.beta, "-", "duplicate-variable identity error", None, None, err, 0.0, bool(err <= 1e-12)))
    return recs


def two_point_curve(model, dims, betas, x, y, replicas, burnin, measure, seed):
    """Averaged quenched two-point function per beta: list of (mean, se)."""
    lat = build_box(dims)
    out = []
    for k, b in enumerate(betas):
        avgs, _ = simulate(model, lat, b, replicas, burnin, measure, seed + k,
                           {"c": lambda s: s.two_point(x, y)})
        out.append(_replica_stats(avgs["c"][:, 0]))
    return out


def check_two_point_lower(cfg: HarnessConfig):
    model = cfg.model if cfg.model in ("xy", "su2") else "xy"
    curve = two_point_curve(model, cfg.two_point_dims, cfg.two_point_betas, cfg.two_point_x, cfg.two_point_y,
                            cfg.replicas, cfg.burnin, cfg.measure, cfg.seed)
    means = [m for m, _ in curve]
    gap = means[-1] - means[0]
    increasing = all(b > a for a, b in zip(means, means[1:]))
    return [HarnessRecord("two_point_lower", model, cfg.two_point_betas[-1], "x".join(map(str, cfg.two_point_dims)),
                          "two-point gain over lowest beta", gap, float(np.hypot(curve[-1][1], curve[0][1])), None,
                          cfg.two_point_margin, bool(gap >= cfg.two_point_margin and increasing),
                          {"betas": list(cfg.two_point_betas), "means": means, "stderrs": [s for _, s in curve]})]


_CHECK_FUNCS = {
    "factorization": check_factorization,
    "internal_energy": check_internal_energy,
    "spin_glass": check_spin_glass,
    "mmsp": check_mmsp,
    "two_point_lower": check_two_point_lower,
}


def identity_harness(check, config: HarnessConfig | None = None):
    """Run one named check; returns a list of HarnessRecord."""
    if check not in _CHECK_FUNCS:
        raise ValueError(f"unknown check {check!r}; expected one of {CHECKS}")
    cfg = config or HarnessConfig()
    if check != "mmsp":
        check_model(cfg.model)
    return _CHECK_FUNCS[check](cfg)


def estimator_identity(model, beta, n, path_batch: PathBatch, replicas, burnin, measure, seed):
    """E[<obs(x, y) R>] with spins from MCMC; target 1 (circle) or m.

    obs is e^{i(theta_x - theta_y)} for the circle and U_x^* R U_y traced
    for SU(2), so the product telescopes to lambda^{-|p|} prod Y_e.
    """
    lat = _box_for(path_batch)
    lam = lambda_value(model, beta)
    dis = sample_disorder_replicas(lat, model, beta, seed, range(replicas))
    R = r_estimator(dis, path_batch, lam).values
    x, y = path_batch.start, tuple(int(c) for c in path_batch.ends()[0])
    ix, iy = lat.index(x), lat.index(y)
    state = QuenchedState(lat, dis, beta, stream(seed, DYNAMICS, 0))
    if model == "xy":
        fn = lambda s: np.real(np.exp(1j * (s.spins[:, ix] - s.spins[:, iy])) * R)
        target = 1.0
    elif model == "su2":
        fn = lambda s: 2.0 * np.sum(s.spins[:, ix] * sp.qmul(R, s.spins[:, iy]), axis=-1)
        target = 2.0
    else:
        raise ValueError("estimator_identity supports xy and su2")
    series = run_chains(state, burnin, measure, 1, {"v": fn})["v"].mean(axis=-1)
    m, se = _replica_stats(series)
    return m, se, target

