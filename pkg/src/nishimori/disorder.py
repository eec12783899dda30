"""Nishimori disorders, random-field phases and gauge transformations."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import spins as sp
from .lattice import Lattice
from .streams import DISORDER, PHASES, stream

MODELS = ("xy", "su2", "so3", "heisenberg", "heisenberg_lift", "isoclinic")

SPIN_SPACE = {
    "xy": "circle",
    "su2": "su2",
    "so3": "so3",
    "heisenberg": "sphere2",
    "heisenberg_lift": "so3",
    "isoclinic": "sphere3",
}
DISORDER_SPACE = {
    "xy": "circle",
    "su2": "su2",
    "so3": "so3",
    "heisenberg": "so3",
    "heisenberg_lift": "so3",
    "isoclinic": "su2",
}


def check_model(model):
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


@dataclass(frozen=True, eq=False)
class DisorderField:
    """Edge disorder for a batch of replicas.

    ``values`` has shape (R, E, *value_shape); entry [r, e] belongs to the
    canonical orientation of edge e. The reverse orientation is never
    stored: ``oriented`` computes it (negated angle, adjoint, transpose).
    """

    model: str
    lattice: Lattice
    values: np.ndarray
    u: float | None = None

    def __post_init__(self):
        check_model(self.model)
        shape = sp.VALUE_SHAPE[self.space]
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1 + len(shape):
            v = v[None]
        if v.shape[1:] != (self.lattice.num_edges,) + shape:
            raise ValueError(f"disorder array has shape {v.shape}, lattice needs (R, {self.lattice.num_edges}) + {shape}")
        object.__setattr__(self, "values", v)

    @property
    def space(self):
        return DISORDER_SPACE[self.model]

    @property
    def replicas(self):
        return self.values.shape[0]

    def oriented(self, edge, sign):
        """Values read along orientation ``sign`` (+1 canonical, -1 reversed);
        ``edge`` and ``sign`` share a shape, the result is (R, *edge.shape, *value)."""
        edge = np.asarray(edge)
        sign = np.broadcast_to(np.asarray(sign), edge.shape)
        if self.values.shape[1] == 0:
            # edgeless lattice: only zero-coupling padding slots read here
            return sp.identity(self.space, (self.replicas,) + edge.shape)
        vals = self.values[:, edge]
        if self.space == "circle":
            return vals * sign
        mask = (sign < 0).reshape(sign.shape + (1,) * len(sp.VALUE_SHAPE[self.space]))
        return np.where(mask, sp.invert(self.space, vals), vals)

    def read(self, i, j, replica=0):
        """Value on the oriented edge (i, j) given as vertex coordinates."""
        lat = self.lattice
        e, s = lat.edge_index(lat.index(i), lat.index(j))
        v = self.values[replica, e]
        if s > 0:
            return v.copy() if np.ndim(v) else float(v)
        out = sp.invert(self.space, v)
        return float(out) if np.ndim(out) == 0 else out

    def replica(self, r) -> "DisorderField":
        return DisorderField(self.model, self.lattice, self.values[r : r + 1], self.u)

    def repeat(self, copies: int) -> "DisorderField":
        """Each replica duplicated ``copies`` times (consecutive)."""
        return DisorderField(self.model, self.lattice, np.repeat(self.values, copies, axis=0), self.u)

    def to_records(self):
        lat = self.lattice
        out = []
        for r in range(self.replicas):
            for e, (i, j) in enumerate(lat.edges.tolist()):
                out.append(
                    {
                        "replica": r,
                        "edge": [lat.coords[i].tolist(), lat.coords[j].tolist()],
                        "value": np.atleast_1d(self.values[r, e]).ravel().tolist(),
                    }
                )
        return out

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump({"model": self.model, "u": self.u, "lattice": self.lattice.to_dict(), "edges": self.to_records()}, fh)

    @classmethod
    def load(cls, path) -> "DisorderField":
        with open(path) as fh:
            data = json.load(fh)
        lat = Lattice.from_dict(data["lattice"])
        shape = sp.VALUE_SHAPE[DISORDER_SPACE[data["model"]]]
        R = 1 + max(rec["replica"] for rec in data["edges"])
        vals = np.zeros((R, lat.num_edges) + shape)
        for rec in data["edges"]:
            e, s = lat.edge_index(lat.index(rec["edge"][0]), lat.index(rec["edge"][1]))
            if s < 0:
                raise ValueError("records must use the canonical edge orientation")
            vals[rec["replica"], e] = np.reshape(rec["value"], shape)
        return cls(data["model"], lat, vals, data.get("u"))


def _draw(model, u, rng, size):
    if model in ("heisenberg", "heisenberg_lift"):
        return sp.sample_tilted_zz(u, rng, size)
    return sp.tilted_sample(DISORDER_SPACE[model], u, rng, size)


def sample_disorder(lat: Lattice, model: str, u: float, rng, replicas: int = 1) -> DisorderField:
    """One independent draw from the model's tilted law per unoriented edge.

    The Heisenberg models use exp(u <e_z, Omega e_z>) on SO(3); every other
    model uses exp(u Re Tr Omega) (circle: exp(u cos w)).
    """
    check_model(model)
    if u < 0:
        raise ValueError("disorder concentration u must be nonnegative")
    vals = _draw(model, u, rng, (replicas, lat.num_edges))
    return DisorderField(model, lat, vals, float(u))


def sample_disorder_replicas(lat: Lattice, model: str, u: float, seed: int, replica_ids) -> DisorderField:
    """Replica r draws its edges, in canonical edge order, from the stream
    keyed (seed, DISORDER, r); the result does not depend on which other
    replicas are drawn alongside it."""
    check_model(model)
    if u < 0:
        raise ValueError("disorder concentration u must be nonnegative")
    vals = [_draw(model, u, stream(seed, DISORDER, r), (lat.num_edges,)) for r in replica_ids]
    return DisorderField(model, lat, np.stack(vals), float(u))


def constant_disorder(lat: Lattice, model: str, replicas: int = 1) -> DisorderField:
    """omega == 0 / Omega == Id (the u -> infinity limit)."""
    space = DISORDER_SPACE[model]
    return DisorderField(model, lat, sp.identity(space, (replicas, lat.num_edges)), np.inf)


@dataclass(frozen=True, eq=False)
class FieldPhases:
    """Random-field strengths h (N,) and phases psi (R, N)."""

    h: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if psi.ndim == 1:
            psi = psi[None]
        if psi.shape[1:] != h.shape:
            raise ValueError("phases and field strengths disagree in length")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "psi", psi)

    def repeat(self, copies):
        return FieldPhases(self.h, np.repeat(self.psi, copies, axis=0))


def sample_field_phases(h, rng, replicas: int = 1) -> FieldPhases:
    """psi_j ~ exp(h_j cos psi) independently; h_j < 0 concentrates near pi."""
    h = np.asarray(h, dtype=float)
    mu = np.where(h < 0, np.pi, 0.0)
    psi = rng.vonmises(np.broadcast_to(mu, (replicas,) + h.shape), np.broadcast_to(np.abs(h), (replicas,) + h.shape))
    return FieldPhases(h, np.mod(psi, sp.TWO_PI))


def sample_field_phases_replicas(h, seed, replica_ids) -> FieldPhases:
    rows = [sample_field_phases(h, stream(seed, PHASES, r)).psi[0] for r in replica_ids]
    return FieldPhases(np.asarray(h, dtype=float), np.stack(rows))


def gauge_transform(model, disorder: DisorderField, spins=None, gauge=None, phases: FieldPhases | None = None):
    """Apply a vertex gauge to (disorder, spins, phases).

    circle: theta -> theta - g, omega_ij -> omega_ij + g_i - g_j, psi -> psi + g.
    groups: U_i -> g_i^* U_i, Omega_ij -> g_i^* Omega_ij g_j (likewise for the
    SO(3) lift, for S^2 spins S_i -> g_i^T S_i, and for S^3 spins through phi).
    ``gauge`` has shape (N, *value) or (R, N, *value).
    """
    check_model(model)
    if gauge is None:
        raise ValueError("gauge values are required on every vertex")
    lat = disorder.lattice
    dspace = DISORDER_SPACE[model]
    g = np.asarray(gauge, dtype=float)
    vshape = sp.VALUE_SHAPE[dspace]
    if g.ndim < 1 + len(vshape) or g.shape[g.ndim - len(vshape) - 1] != lat.num_vertices:
        raise ValueError("gauge must be defined on all vertices")
    if g.ndim == 1 + len(vshape):
        g = g[None]
    i, j = lat.edges[:, 0], lat.edges[:, 1]
    gi, gj = g[:, i], g[:, j]
    if dspace == "circle":
        new_vals = np.mod(disorder.values + gi - gj, sp.TWO_PI)
    elif dspace == "su2":
        new_vals = sp.qmul(sp.qmul(sp.qconj(gi), disorder.values), gj)
    else:
        new_vals = np.swapaxes(gi, -1, -2) @ disorder.values @ gj
    new_dis = DisorderField(model, lat, new_vals, disorder.u)

    new_spins = None
    if spins is not None:
        s = np.asarray(spins, dtype=float)
        if model == "xy":
            new_spins = np.mod(s - g, sp.TWO_PI)
        elif model in ("su2", "isoclinic"):
            new_spins = sp.qmul(sp.qconj(g), s)
        elif model in ("so3", "heisenberg_lift"):
            new_spins = np.swapaxes(g, -1, -2) @ s
        else:
            new_spins = np.einsum("...ji,...j->...i", g, s)

    new_phases = None
    if phases is not None:
        if model != "xy":
            raise ValueError("random fields are defined for the circle model only")
        new_phases = FieldPhases(phases.h, np.mod(phases.psi + g, sp.TWO_PI))
    return new_dis, new_spins, new_phases
