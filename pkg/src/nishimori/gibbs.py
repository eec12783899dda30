"""Quenched Monte Carlo for the disordered spin models.

A :class:`QuenchedState` carries a *batch* of R independent chains, one per
row, each with its own disorder row. Updates go colour by colour over the
two sublattices, so every vertex in a half-sweep sees fixed neighbours.

Energy convention: one term per unoriented edge,

    log weight = beta * sum_e J_e * inter_e + sum_j h_j cos(theta_j + psi_j)

with inter_e = cos(theta_i - theta_j + omega_ij) (circle),
Re Tr(U_i^* Omega_ij U_j) (SU(2), SO(3), and S^3 through phi),
<S_i, Omega_ij S_j> (Heisenberg) and <O_i e_z, Omega_ij O_j e_z> (lift).
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

from . import spins as sp
from ._models import KERNELS, metropolis_accept_probability
from .disorder import (
    SPIN_SPACE,
    DisorderField,
    FieldPhases,
    check_model,
    sample_disorder_replicas,
    sample_field_phases_replicas,
)
from .lattice import BoundarySpec, Lattice, build_box
from .streams import DYNAMICS, stream

log = logging.getLogger(__name__)

MIN_BATCHES = 16


class QuenchedState:
    """R chains of one model on one lattice at one beta."""

    def __init__(
        self,
        lattice: Lattice,
        disorder: DisorderField,
        beta: float,
        rng,
        phases: FieldPhases | None = None,
        boundary: BoundarySpec | None = None,
        init: str = "cold",
        spins=None,
        width: float | None = None,
    ):
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        if disorder.lattice is not lattice and disorder.lattice.num_edges != lattice.num_edges:
            raise ValueError("disorder and lattice edge sets differ")
        self.model = disorder.model
        check_model(self.model)
        if phases is not None and self.model != "xy":
            raise ValueError("random fields are defined for the circle model only")
        self.kernel = KERNELS[self.model]
        self.lattice = lattice
        self.disorder = disorder
        self.beta = float(beta)
        self.rng = rng
        self.phases = phases
        self.boundary = boundary or BoundarySpec()
        self.sweeps = 0
        self.width = width if width is not None else 0.5 * self.kernel.max_width
        self.accepted = 0
        self.proposed = 0

        R, N = disorder.replicas, lattice.num_vertices
        space = SPIN_SPACE[self.model]
        clamped = np.zeros(N, dtype=bool)
        if self.boundary.mode == "dirichlet":
            clamped[[lattice.index(v) for v in self.boundary.vertices]] = True
        self.clamped = clamped

        if spins is not None:
            self.spins = np.array(spins, dtype=float)
        elif init == "cold":
            self.spins = sp.identity(space, (R, N))
        elif init == "hot":
            self.spins = sp.haar_sample(space, rng, (R, N))
            self.spins[:, clamped] = sp.identity(space, (R, int(clamped.sum())))
        else:
            raise ValueError(f"unknown init {init!r}")
        if self.spins.shape[:2] != (R, N):
            raise ValueError("spin array does not match (replicas, vertices)")

        nbr, edge, sign, J = lattice.neighbors
        self._colors = []
        for c in (0, 1):
            V = np.nonzero((lattice.parity == c) & ~clamped)[0]
            if V.size == 0:
                continue
            self._colors.append(
                {
                    "V": V,
                    "nbr": nbr[V],
                    "J": J[V],
                    "omega": disorder.oriented(edge[V], sign[V]),
                }
            )
            if self.model == "xy":
                # circle fast path: G = beta * sum J e^{i(theta_u - omega_vu)}
                c = self._colors[-1]
                c["phase"] = c["J"] * np.exp(-1j * c["omega"])
        self._edge_i = lattice.edges[:, 0]
        self._edge_j = lattice.edges[:, 1]

    @property
    def replicas(self):
        return self.spins.shape[0]

    # -- local quantities ---------------------------------------------------

    def _field(self, color):
        k = self.kernel
        if "phase" in color:
            z = np.exp(1j * self.spins)[:, color["nbr"]]
            Gc = self.beta * np.einsum("rvk,rvk->rv", z, color["phase"])
            G = np.stack([Gc.real, Gc.imag], axis=-1)
        else:
            T = k.transport(color["omega"], self.spins[:, color["nbr"]])
            G = self.beta * np.einsum("rvkd,vk->rvd", T, color["J"])
        if self.phases is not None:
            V = color["V"]
            h = self.phases.h[V]
            psi = self.phases.psi[:, V]
            G[..., 0] += h * np.cos(psi)
            G[..., 1] -= h * np.sin(psi)
        return G

    def local_energy(self, vertex, candidate, replica=0):
        """Sum of J * interaction over the edges at ``vertex`` with the vertex
        set to ``candidate``, plus the field term h cos(theta + psi). No beta."""
        v = self.lattice.index(vertex) if not np.isscalar(vertex) else int(vertex)
        if self.clamped[v]:
            raise ValueError("vertex is clamped")
        nbr, edge, sign, J = self.lattice.neighbors
        k = self.kernel
        omega = self.disorder.oriented(edge[v], sign[v])[replica]
        T = k.transport(omega, self.spins[replica, nbr[v]])
        val = float(np.sum(J[v] * k.inner(k.embed(np.asarray(candidate, dtype=float))[None], T)))
        if self.phases is not None:
            val += self.phases.h[v] * np.cos(float(candidate) + self.phases.psi[replica, v])
        return val

    # -- sweeps -------------------------------------------------------------

    def heat_bath_sweep(self):
        if not self.kernel.has_heat_bath:
            raise ValueError(f"no heat-bath update for model {self.model!r}")
        for color in self._colors:
            G = self._field(color)
            self.spins[:, color["V"]] = self.kernel.heat_bath(G, self.rng)
        self.sweeps += 1
        return self

    def metropolis_sweep(self):
        k = self.kernel
        for color in self._colors:
            G = self._field(color)
            V = color["V"]
            old = self.spins[:, V]
            new = k.propose(old, self.width, self.rng)
            delta = k.inner(k.embed(new) - k.embed(old), G)
            acc = self.rng.random(delta.shape) < metropolis_accept_probability(delta)
            mask = acc.reshape(acc.shape + (1,) * (old.ndim - 2))
            self.spins[:, V] = np.where(mask, k.renormalize(new), old)
            self.accepted += int(acc.sum())
            self.proposed += acc.size
        self.sweeps += 1
        return self

    def sweep(self, algorithm="auto"):
        if algorithm == "auto":
            algorithm = "heat_bath" if self.kernel.has_heat_bath else "metropolis"
        if algorithm == "heat_bath":
            return self.heat_bath_sweep()
        if algorithm == "metropolis":
            return self.metropolis_sweep()
        raise ValueError(f"unknown algorithm {algorithm!r}")

    def tune_width(self, target=0.5):
        """Nudge the Metropolis step toward ``target`` acceptance."""
        if self.proposed == 0:
            return
        rate = self.accepted / self.proposed
        self.width = float(np.clip(self.width * np.exp(2.0 * (rate - target)), 1e-3, self.kernel.max_width))
        self.accepted = self.proposed = 0

    @property
    def acceptance(self):
        return self.accepted / self.proposed if self.proposed else float("nan")

    # -- observables --------------------------------------------------------

    def edge_interactions(self):
        """(R, E) interaction terms on canonical orientations (without J)."""
        k = self.kernel
        s_i = self.spins[:, self._edge_i]
        s_j = self.spins[:, self._edge_j]
        if self.model == "xy":
            return np.cos(s_i - s_j + self.disorder.values)
        return k.inner(k.embed(s_i), k.transport(self.disorder.values, s_j))

    def interaction_sum(self):
        return self.edge_interactions() @ self.lattice.couplings

    def log_weight(self):
        val = self.beta * self.interaction_sum()
        if self.phases is not None:
            val = val + np.sum(self.phases.h * np.cos(self.spins + self.phases.psi), axis=-1)
        return val

    def internal_energy(self):
        """Total and per-edge -(sum_e J_e inter_e), each of shape (R,)."""
        total = -self.interaction_sum()
        return total, total / max(self.lattice.num_edges, 1)

    def two_point(self, x, y):
        k = self.kernel
        i, j = self.lattice.index(x), self.lattice.index(y)
        return k.pair_scale * k.inner(k.embed(self.spins[:, i]), k.embed(self.spins[:, j]))

    def magnetization(self, x):
        k = self.kernel
        i = self.lattice.index(x)
        ident = sp.identity(k.space)
        return k.pair_scale * k.inner(k.embed(self.spins[:, i]), k.embed(ident))

    def phase_pair(self, x, y):
        """exp(i (theta_x - theta_y)), circle model only."""
        if self.model != "xy":
            raise ValueError("phase_pair is defined for the circle model")
        i, j = self.lattice.index(x), self.lattice.index(y)
        return np.exp(1j * (self.spins[:, i] - self.spins[:, j]))


def local_energy(state, vertex, candidate, replica=0):
    return state.local_energy(vertex, candidate, replica)


def metropolis_sweep(state):
    return state.metropolis_sweep()


def heat_bath_sweep_xy(state):
    if state.model != "xy":
        raise ValueError("heat_bath_sweep_xy needs the circle model")
    return state.heat_bath_sweep()


def measure_two_point(state, x, y):
    return state.two_point(x, y)


def measure_internal_energy(state):
    return state.internal_energy()


def global_action(model, spins, g, side="right"):
    """Apply one group element to every spin: U -> U g (right) or g U (left).

    Circle: theta -> theta + g. Heisenberg: S -> g S with g in SO(3).
    """
    spins = np.asarray(spins, dtype=float)
    if model == "xy":
        return np.mod(spins + g, sp.TWO_PI)
    if model in ("su2", "isoclinic"):
        return sp.qmul(spins, g) if side == "right" else sp.qmul(g, spins)
    if model in ("so3", "heisenberg_lift"):
        return spins @ g if side == "right" else g @ spins
    if model == "heisenberg":
        return np.einsum("ij,...j->...i", g, spins)
    raise ValueError(model)


# --------------------------------------------------------------------------
# statistics


@dataclass
class ObservableRecord:
    name: str
    n: int
    mean: float
    stderr: float
    metadata: dict = dc_field(default_factory=dict)

    def row(self):
        out = {"name": self.name, "n": self.n, "mean": self.mean, "stderr": self.stderr}
        out.update(self.metadata)
        return out


def batch_means(series, batches=32):
    """Mean and batch-means standard error along the last axis."""
    series = np.asarray(series, dtype=float)
    T = series.shape[-1]
    nb = min(batches, T)
    if nb < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} measurements for batch means, got {T}")
    usable = (T // nb) * nb
    b = series[..., T - usable :].reshape(series.shape[:-1] + (nb, usable // nb)).mean(axis=-1)
    return series.mean(axis=-1), b.std(axis=-1, ddof=1) / np.sqrt(nb)


def replica_mean(values):
    """Mean over replicas and its standard error (between-replica spread)."""
    v = np.asarray(values, dtype=float)
    R = v.shape[0]
    se = v.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.full(v.shape[1:], np.nan)
    return v.mean(axis=0), se


# --------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentConfig:
    model: str = "xy"
    dims: list = dc_field(default_factory=lambda: [4, 4, 4])
    origin: list | None = None
    beta: float = 1.0
    u: float | None = None
    off_nishimori: bool = False
    boundary: str = "free"
    dirichlet_set: list | str | None = None
    field: dict | None = None
    couplings: dict | None = None
    burnin: int = 200
    measure: int = 1000
    thin: int = 1
    replicas: int = 8
    master_seed: int = 0
    observables: list = dc_field(default_factory=lambda: ["energy"])
    algorithm: str = "auto"
    init: str = "cold"
    replica_block: int = 16
    batches: int = 32
    workers: int = 1
    output: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.u is None:
            self.u = self.beta
        self.validate()

    def validate(self):
        check_model(self.model)
        if self.beta < 0 or self.u < 0:
            raise ValueError("beta and u must be nonnegative")
        if self.u != self.beta and not self.off_nishimori:
            raise ValueError("u != beta leaves the Nishimori line; set off_nishimori to acknowledge")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.measure <= 0:
            raise ValueError("measure sweeps must be positive; nothing would be recorded")
        if self.thin < 1 or self.burnin < 0:
            raise ValueError("thin must be >= 1 and burnin >= 0")
        if self.measure // self.thin < MIN_BATCHES:
            raise ValueError(f"measure/thin must give at least {MIN_BATCHES} samples")
        if self.boundary not in ("free", "dirichlet"):
            raise ValueError("boundary must be free or dirichlet")
        if self.boundary == "dirichlet" and not self.dirichlet_set:
            raise ValueError("dirichlet boundary needs dirichlet_set")
        if self.field and self.model != "xy":
            raise ValueError("random fields are defined for the circle model only")
        if self.output_format not in ("csv", "jsonl"):
            raise ValueError("output_format must be csv or jsonl")
        if not self.observables:
            raise ValueError("no observables requested")
        for obs in self.observables:
            parse_observable(obs)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        sweeps = data.pop("sweeps", None)
        if sweeps:
            for key in ("burnin", "measure", "thin"):
                if key in sweeps:
                    data[key] = sweeps[key]
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def lattice(self) -> Lattice:
        lat = build_box(self.dims, self.origin)
        if self.couplings:
            lat = Lattice.from_dict({**lat.to_dict(), "couplings": self.couplings})
        return lat

    def boundary_spec(self, lat) -> BoundarySpec:
        if self.boundary == "free":
            return BoundarySpec()
        if self.dirichlet_set == "interior_boundary":
            return BoundarySpec("dirichlet", lat.interior_boundary())
        return BoundarySpec("dirichlet", tuple(tuple(v) for v in self.dirichlet_set))

    def field_strengths(self, lat):
        if not self.field:
            return None
        h = np.zeros(lat.num_vertices)
        for key, val in self.field.items():
            vertex = json.loads(key) if isinstance(key, str) else key
            h[lat.index(vertex)] = val
        return h


def _point(v):
    return tuple(int(c) for c in v)


def parse_observable(obs) -> dict:
    """'energy' | {'name': 'two_point', 'x': [...], 'y': [...]} |
    {'name': 'magnetization', 'x': [...]} | {'name': 'spin_glass', 'x', 'y'}."""
    if isinstance(obs, str):
        obs = {"name": obs}
    obs = dict(obs)
    name = obs.get("name")
    if name == "energy":
        return obs
    if name in ("two_point", "spin_glass"):
        if "x" not in obs or "y" not in obs:
            raise ValueError(f"{name} needs x and y")
        return {"name": name, "x": _point(obs["x"]), "y": _point(obs["y"])}
    if name == "magnetization":
        if "x" not in obs:
            raise ValueError("magnetization needs x")
        return {"name": name, "x": _point(obs["x"])}
    raise ValueError(f"unknown observable {obs!r}")


def _observable_label(obs):
    if obs["name"] == "energy":
        return "energy_per_edge"
    if obs["name"] == "magnetization":
        return f"magnetization{list(obs['x'])}"
    return f"{obs['name']}{list(obs['x'])}{list(obs['y'])}"


def run_chains(state: QuenchedState, burnin, measure, thin, observables, algorithm="auto", tune=True):
    """Burn in, then record each observable every ``thin`` sweeps.

    ``observables`` maps a label to a callable(state) -> array of shape (R,)
    (real or complex). Returns {label: (R, T) array}.
    """
    metropolis = algorithm == "metropolis" or (algorithm == "auto" and not state.kernel.has_heat_bath)
    for t in range(burnin):
        state.sweep(algorithm)
        if metropolis and tune and (t + 1) % 10 == 0:
            state.tune_width()
    state.accepted = state.proposed = 0
    series = {name: [] for name in observables}
    for t in range(measure):
        state.sweep(algorithm)
        if (t + 1) % thin == 0:
            for name, fn in observables.items():
                series[name].append(fn(state))
    return {name: np.stack(vals, axis=-1) for name, vals in series.items()}


def _run_block(cfg: ExperimentConfig, block: int, replica_ids):
    lat = cfg.lattice()
    obs = [parse_observable(o) for o in cfg.observables]
    clones = 2 if any(o["name"] == "spin_glass" for o in obs) else 1
    dis = sample_disorder_replicas(lat, cfg.model, cfg.u, cfg.master_seed, replica_ids)
    h = cfg.field_strengths(lat)
    phases = sample_field_phases_replicas(h, cfg.master_seed, replica_ids) if h is not None else None
    if clones > 1:
        dis = dis.repeat(clones)
        phases = phases.repeat(clones) if phases is not None else None
    rng = stream(cfg.master_seed, DYNAMICS, block)
    state = QuenchedState(lat, dis, cfg.beta, rng, phases, cfg.boundary_spec(lat), init=cfg.init)

    fns = {}
    for o in obs:
        if o["name"] == "energy":
            fns["energy"] = lambda s: s.internal_energy()[1]
        elif o["name"] == "two_point":
            fns[_observable_label(o)] = lambda s, o=o: s.two_point(o["x"], o["y"])
        elif o["name"] == "magnetization":
            fns[_observable_label(o)] = lambda s, o=o: s.magnetization(o["x"])
        elif o["name"] == "spin_glass":
            fns[_observable_label(o)] = lambda s, o=o: s.phase_pair(o["x"], o["y"])
    series = run_chains(state, cfg.burnin, cfg.measure, cfg.thin, fns, cfg.algorithm)
    out = {}
    for o in obs:
        label = "energy" if o["name"] == "energy" else _observable_label(o)
        x = series[label]
        if o["name"] == "spin_glass":
            x = x.reshape(len(replica_ids), clones, -1)
            m = x.mean(axis=-1)
            lin_mean, lin_se = batch_means(x[:, 0].real, cfg.batches)
            sq = (m[:, 0] * np.conj(m[:, 1])).real
            out[_observable_label(o).replace("spin_glass", "sg_linear")] = (lin_mean, lin_se)
            out[_observable_label(o).replace("spin_glass", "sg_square")] = (sq, np.full(len(sq), np.nan))
        else:
            if clones > 1:
                x = x.reshape(len(replica_ids), clones, -1)[:, 0]
            out[_observable_label(o)] = batch_means(x, cfg.batches)
    return out, state.width


def run_quenched_experiment(config: ExperimentConfig):
    """Per-replica records plus one aggregate record per observable.

    Replicas are processed in fixed blocks of ``replica_block``; each block
    owns its dynamics stream, so results are identical for any worker count.
    """
    cfg = config
    cfg.validate()
    ids = np.arange(cfg.replicas)
    blocks = [ids[i : i + cfg.replica_block] for i in range(0, cfg.replicas, cfg.replica_block)]
    if cfg.workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_block, [cfg] * len(blocks), range(len(blocks)), blocks))
    else:
        results = [_run_block(cfg, b, blk) for b, blk in enumerate(blocks)]

    meta = {
        "model": cfg.model,
        "beta": cfg.beta,
        "u": cfg.u,
        "dims": "x".join(str(d) for d in cfg.dims),
        "seed": cfg.master_seed,
        "off_nishimori": bool(cfg.u != cfg.beta),
    }
    records = []
    labels = list(results[0][0].keys())
    n_meas = cfg.measure // cfg.thin
    for label in labels:
        means = np.concatenate([res[label][0] for res, _ in results])
        ses = np.concatenate([res[label][1] for res, _ in results])
        for r, (m, s) in enumerate(zip(means, ses)):
            records.append(ObservableRecord(label, n_meas, float(m), float(s), {**meta, "replica": r}))
        agg_mean, agg_se = replica_mean(means)
        records.append(
            ObservableRecord(label, n_meas * cfg.replicas, float(agg_mean), float(agg_se), {**meta, "replica": "all"})
        )
    widths = [w for _, w in results]
    log.info("finished %s beta=%g: %d records, proposal widths %s", cfg.model, cfg.beta, len(records), widths)
    return records


RECORD_COLUMNS = ("name", "model", "beta", "u", "dims", "replica", "n", "mean", "stderr", "seed")


def write_records(records, path, fmt="csv"):
    import csv

    with open(path, "w", newline="") as fh:
        if fmt == "csv":
            w = csv.DictWriter(fh, fieldnames=list(RECORD_COLUMNS), extrasaction="ignore")
            w.writeheader()
            for rec in records:
                w.writerow({k: _fmt(v) for k, v in rec.row().items()})
        else:
            for rec in records:
                fh.write(json.dumps({k: v for k, v in rec.row().items() if k in RECORD_COLUMNS}) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
