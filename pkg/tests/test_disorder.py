"""Nishimori disorder sampling, random-field phases and gauge transformations."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate, stats

from nishimori import spins as sp
from nishimori.disorder import (
    DISORDER_SPACE,
    MODELS,
    SPIN_SPACE,
    DisorderField,
    constant_disorder,
    gauge_transform,
    sample_disorder,
    sample_disorder_replicas,
    sample_field_phases,
)
from nishimori.estimators import lambda_xy
from nishimori.gibbs import QuenchedState
from nishimori.lattice import build_box


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def box3():
    return build_box([3, 3, 3])


def energy(lat, dis, spins, phases=None, beta=1.0):
    st = QuenchedState(lat, dis, beta, np.random.default_rng(0), phases=phases, spins=spins)
    return st.log_weight() / beta if phases is None else st.log_weight()


def test_u_zero_is_haar(rng):
    lat = build_box([200, 50])
    a = sample_disorder(lat, "xy", 0.0, rng).values.ravel()
    b = sp.haar_sample("circle", rng, a.size)
    assert stats.ks_2samp(a, b).pvalue > 1e-4


def test_xy_nishimori_mean(rng):
    lat = build_box([100, 100])
    w = sample_disorder(lat, "xy", 2.0, rng).values.ravel()
    c = np.cos(w)
    assert abs(c.mean() - lambda_xy(2.0).value) < 3 * c.std(ddof=1) / np.sqrt(c.size)


def test_heisenberg_disorder_concentrates(rng):
    lat = build_box([20, 20])
    O = sample_disorder(lat, "heisenberg", 50.0, rng).values
    assert abs(O[..., 2, 2].mean() - 1.0) < 0.1


def test_heisenberg_disorder_matches_quadrature(rng):
    # t = <e_z, O e_z> has density proportional to exp(beta t) on [-1, 1]
    beta = 2.0
    num = integrate.quad(lambda t: t * np.exp(beta * t), -1, 1)[0]
    den = integrate.quad(lambda t: np.exp(beta * t), -1, 1)[0]
    lat = build_box([100, 100])
    t = sample_disorder(lat, "heisenberg", beta, rng).values[..., 2, 2].ravel()
    assert abs(t.mean() - num / den) < 3 * t.std(ddof=1) / np.sqrt(t.size)


def test_negative_u_rejected(box3, rng):
    with pytest.raises(ValueError):
        sample_disorder(box3, "xy", -0.5, rng)


def test_unknown_model(box3, rng):
    with pytest.raises(ValueError):
        sample_disorder(box3, "potts", 1.0, rng)


@pytest.mark.parametrize("model", ["xy", "su2", "so3", "heisenberg"])
def test_read_through_inverse(box3, rng, model):
    dis = sample_disorder(box3, model, 1.0, rng)
    space = DISORDER_SPACE[model]
    for i, j in box3.oriented_edges()[:20]:
        fwd, bwd = dis.read(i, j), dis.read(j, i)
        prod = sp.compose(space, fwd, bwd)
        assert np.allclose(np.exp(1j * prod) if space == "circle" else prod, 1.0 if space == "circle" else sp.identity(space), atol=1e-12)


def test_replica_streams_are_schedule_independent(box3):
    all5 = sample_disorder_replicas(box3, "su2", 1.0, 7, range(5))
    only3 = sample_disorder_replicas(box3, "su2", 1.0, 7, [3])
    assert np.array_equal(all5.values[3], only3.values[0])


def test_dump_load_round_trip(box3, rng, tmp_path):
    dis = sample_disorder(box3, "so3", 1.0, rng, replicas=2)
    dis.dump(tmp_path / "d.json")
    back = DisorderField.load(tmp_path / "d.json")
    assert back.model == "so3"
    assert np.allclose(back.values, dis.values)


def test_shape_validation(box3):
    with pytest.raises(ValueError):
        DisorderField("xy", box3, np.zeros(3))


# -- field phases --------------------------------------------------------------


def test_zero_field_phases_uniform(rng):
    psi = sample_field_phases(np.zeros(10**5), rng).psi.ravel()
    assert stats.kstest(psi / (2 * np.pi), "uniform").pvalue > 1e-4


def test_field_phase_mean(rng):
    c = np.cos(sample_field_phases(np.full(10**5, 3.0), rng).psi.ravel())
    assert abs(c.mean() - lambda_xy(3.0).value) < 3 * c.std(ddof=1) / np.sqrt(c.size)


def test_strong_field_concentrates(rng):
    assert np.cos(sample_field_phases(np.full(10**4, 60.0), rng).psi).mean() >= 0.99


def test_negative_field_concentrates_at_pi(rng):
    assert np.cos(sample_field_phases(np.full(10**4, -60.0), rng).psi).mean() <= -0.99


# -- gauge --------------------------------------------------------------------


def random_spins(model, lat, rng, R=1):
    return sp.haar_sample(SPIN_SPACE[model], rng, (R, lat.num_vertices))


def random_gauge(model, lat, rng):
    return sp.haar_sample(DISORDER_SPACE[model], rng, lat.num_vertices)


@pytest.mark.parametrize("model", MODELS)
def test_gauge_invariance_of_energy(box3, rng, model):
    dis = sample_disorder(box3, model, 1.3, rng)
    s = random_spins(model, box3, rng)
    g = random_gauge(model, box3, rng)
    d2, s2, _ = gauge_transform(model, dis, s, g)
    assert abs(energy(box3, dis, s) - energy(box3, d2, s2))[0] < 1e-10


def test_gauge_invariance_with_field(box3, rng):
    dis = sample_disorder(box3, "xy", 1.0, rng)
    ph = sample_field_phases(rng.normal(size=box3.num_vertices), rng)
    s = random_spins("xy", box3, rng)
    g = random_gauge("xy", box3, rng)
    d2, s2, p2 = gauge_transform("xy", dis, s, g, ph)
    assert abs(energy(box3, dis, s, ph) - energy(box3, d2, s2, p2))[0] < 1e-10


@pytest.mark.parametrize("model", ["xy", "su2", "so3"])
def test_identity_gauge(box3, rng, model):
    dis = sample_disorder(box3, model, 1.0, rng)
    s = random_spins(model, box3, rng)
    g = sp.identity(DISORDER_SPACE[model], box3.num_vertices)
    d2, s2, _ = gauge_transform(model, dis, s, g)
    assert np.allclose(d2.values, dis.values)
    assert np.allclose(s2, s)


@pytest.mark.parametrize("model", ["xy", "su2", "heisenberg"])
def test_double_gauge_is_identity(box3, rng, model):
    dis = sample_disorder(box3, model, 1.0, rng)
    s = random_spins(model, box3, rng)
    space = DISORDER_SPACE[model]
    g = random_gauge(model, box3, rng)
    d2, s2, _ = gauge_transform(model, dis, s, g)
    d3, s3, _ = gauge_transform(model, d2, s2, sp.invert(space, g))
    if space == "circle":
        assert np.allclose(np.exp(1j * d3.values), np.exp(1j * dis.values))
        assert np.allclose(np.exp(1j * s3), np.exp(1j * s))
    else:
        assert np.allclose(d3.values, dis.values)
        assert np.allclose(s3, s)


def test_gauge_requires_all_vertices(box3, rng):
    dis = sample_disorder(box3, "xy", 1.0, rng)
    with pytest.raises(ValueError):
        gauge_transform("xy", dis, None, np.zeros(5))
    with pytest.raises(ValueError):
        gauge_transform("xy", dis, None, None)


def test_gauge_pushforward_law_single_edge(rng):
    # omega' = omega + g_0 - g_1 is a von Mises law centred at g_0 - g_1
    lat = build_box([2])
    beta = 1.5
    g = np.array([0.7, -0.4])
    dis = sample_disorder(lat, "xy", beta, rng, replicas=10**5)
    d2, _, _ = gauge_transform("xy", dis, None, g)
    z = np.exp(1j * d2.values[:, 0])
    target = lambda_xy(beta).value * np.exp(1j * (g[0] - g[1]))
    se = np.std(z) / np.sqrt(z.size)
    assert abs(z.mean() - target) < 4 * se


def test_constant_disorder_is_identity(box3):
    d = constant_disorder(box3, "su2", 2)
    assert np.allclose(d.values, sp.identity("su2"))
