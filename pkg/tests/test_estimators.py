"""Lambda normalizers, the R estimator, second moments, synchronisation and the harness."""

from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from scipy import linalg, special

from nishimori import spins as sp
from nishimori.disorder import constant_disorder, sample_disorder_replicas
from nishimori.estimators import (
    HarnessConfig,
    alignment,
    estimator_identity,
    exact_second_moment_increasing,
    exact_second_moment_xy,
    identity_harness,
    lambda_group,
    lambda_value,
    lambda_xy,
    planted_instance,
    polar_project,
    r_estimator,
    reconstruct_relative,
    second_moment_probe,
    true_relative,
)
from nishimori.lattice import build_box
from nishimori.paths import LatticePath, PathBatch, bridge_sampler, markov_mixing, uniform_iid
from nishimori.streams import stream

GROUPS = ["su2", "so3", "heisenberg"]


# -- lambda --------------------------------------------------------------------


def test_lambda_xy_matches_bessel():
    for beta in (0.1, 1.0, 4.0, 30.0):
        assert abs(lambda_xy(beta).value - special.ive(1, beta) / special.ive(0, beta)) < 1e-12


def test_lambda_xy_known_values():
    assert lambda_xy(0.0).value == 0.0
    assert round(lambda_xy(1.0).value, 7) == 0.4463900
    assert abs(lambda_xy(100.0).value - (1 - 1 / 200)) < 2e-3


def test_lambda_rejects_negative():
    with pytest.raises(ValueError):
        lambda_xy(-1.0)


@pytest.mark.parametrize("model", ["xy"] + GROUPS)
def test_lambda_monotone_in_unit_interval(model):
    betas = np.linspace(0.0, 40.0, 50)
    vals = np.array([lambda_value(model, b).value for b in betas])
    assert vals[0] == pytest.approx(0.0, abs=1e-14)
    assert np.all(np.diff(vals) > 0)
    assert np.all((vals >= 0) & (vals < 1))


def test_lambda_su2_mc_cross_check():
    lam = lambda_group("su2", 2.0, mc_samples=10**6, rng=np.random.default_rng(0))
    assert abs(lam.mc_value - lam.value) < 3 * lam.mc_stderr
    assert lam.mc_offdiag_max < 3.5 * lam.mc_offdiag_stderr


def test_lambda_su2_large_beta():
    lam = lambda_group("su2", 200.0, mc_samples=10**5, rng=np.random.default_rng(1))
    assert lam.value > lambda_group("su2", 100.0).value
    assert lam.mc_offdiag_max < 3.5 * lam.mc_offdiag_stderr


@pytest.mark.parametrize("model", ["so3", "heisenberg"])
def test_lambda_group_mc_cross_check(model):
    lam = lambda_group(model, 1.5, mc_samples=2 * 10**5, rng=np.random.default_rng(2))
    assert abs(lam.mc_value - lam.value) < 3.5 * lam.mc_stderr


def test_heisenberg_lambda_is_langevin():
    b = 2.5
    assert lambda_value("heisenberg", b).value == pytest.approx(1 / np.tanh(b) - 1 / b, abs=1e-12)


# -- R estimator -----------------------------------------------------------------


def diag_paths(n, size, seed=0, measure=None):
    measure = measure or markov_mixing(3, 0.5)
    return bridge_sampler(measure, (0, 0, 0), (n, n, n)).sample(stream(seed, 3), size)


@pytest.mark.parametrize("model", ["xy", "su2"])
def test_r_identity_disorder(model):
    n, beta = 2, 3.0
    batch = diag_paths(n, 32)
    lat = build_box([n + 1] * 3)
    R = r_estimator(constant_disorder(lat, model), batch, lambda_value(model, beta))
    lam = lambda_value(model, beta).value
    if model == "xy":
        assert R.values[0] == pytest.approx(lam ** (-3 * n))
    else:
        assert np.allclose(R.values[0], lam ** (-3 * n) * sp.identity("su2"))


def test_r_single_edge():
    lat = build_box([2])
    beta = 1.0
    path = PathBatch((0,), np.array([[0]]), "fixed")
    dis = sample_disorder_replicas(lat, "xy", beta, 0, range(10**5))
    R = r_estimator(dis, path, lambda_xy(beta))
    dist, sig = R.deviation()
    assert dist < 3 * sig


@pytest.mark.parametrize("model", ["xy", "su2"])
@pytest.mark.parametrize("beta", [2.0, 8.0, 32.0])
@pytest.mark.parametrize("n", [2, 4])
def test_r_mean_is_identity(model, beta, n):
    batch = diag_paths(n, 64, seed=n)
    lat = build_box([n + 1] * 3)
    dis = sample_disorder_replicas(lat, model, beta, 100 + n, range(512))
    dist, sig = r_estimator(dis, batch, lambda_value(model, beta)).deviation()
    assert dist < 3 * sig


def test_r_rejects_paths_outside_lattice():
    lat = build_box([2, 2, 2])
    with pytest.raises(ValueError):
        r_estimator(constant_disorder(lat, "xy"), diag_paths(3, 4), 0.5)


def test_r_reversed_path_uses_inverse():
    # a path out and back along one edge multiplies omega by -omega
    lat = build_box([2])
    dis = sample_disorder_replicas(lat, "su2", 1.0, 0, range(4))
    batch = PathBatch((0,), np.array([[0, 1]]), "fixed")
    R = r_estimator(dis, batch, 1.0)
    assert np.allclose(R.values, sp.identity("su2"))


# -- second moments ----------------------------------------------------------------


def test_second_moment_single_path():
    beta = 4.0
    path = diag_paths(2, 1)
    batch = PathBatch(path.start, np.repeat(path.codes, 3, axis=0), "fixed")
    lam = lambda_xy(beta).value
    assert exact_second_moment_xy(batch, beta) == pytest.approx(lam ** (-12))
    assert exact_second_moment_increasing(batch, beta) == pytest.approx(lam ** (-12))


def test_second_moment_enumeration_n1():
    beta = 2.0
    lam = lambda_xy(beta).value
    perms = list(itertools.permutations([0, 2, 4]))
    batch = PathBatch((0, 0, 0), np.array(perms), "all")
    # shared edges of two monotone unit-cube paths = common prefix steps + common last step
    total = 0.0
    for a, b in itertools.product(perms, repeat=2):
        va, vb = LatticePath(np.cumsum([[0, 0, 0]] + [np.eye(3, dtype=int)[c // 2] for c in a], axis=0)), None
        vb = LatticePath(np.cumsum([[0, 0, 0]] + [np.eye(3, dtype=int)[c // 2] for c in b], axis=0))
        k = np.intersect1d(va.edge_keys(), vb.edge_keys()).size
        total += lam ** (-2 * k)
    ref = total / 36
    assert exact_second_moment_increasing(batch, beta) == pytest.approx(ref, rel=1e-12)
    assert exact_second_moment_xy(batch, beta) == pytest.approx(ref, rel=1e-12)


def test_second_moment_general_formula_with_backtracking():
    beta = 1.5
    lat = build_box([3])
    batch = PathBatch((0,), np.array([[0, 0], [0, 1]]), "mixed")
    dis = sample_disorder_replicas(lat, "xy", beta, 3, range(2 * 10**5))
    R = r_estimator(dis, batch, lambda_xy(beta))
    m = R.second_moments()
    assert abs(m.mean() - exact_second_moment_xy(batch, beta)) < 3 * m.std(ddof=1) / np.sqrt(m.size)


def test_second_moment_probe_trend():
    batch = diag_paths(4, 128, seed=9)
    tab = second_moment_probe("xy", [4.0, 32.0], 4, batch, 256, seed=1)
    assert tab.jensen_ok
    assert tab.rows[1].moment < tab.rows[0].moment
    for r in tab.rows:
        assert abs(r.moment - r.exact) < 3 * r.stderr + 1e-12


def test_second_moment_identity_disorder_limit():
    batch = diag_paths(2, 1)
    lat = build_box([3, 3, 3])
    lam = lambda_xy(5.0).value
    R = r_estimator(constant_disorder(lat, "xy"), batch, lam)
    assert R.second_moments()[0] == pytest.approx(lam ** (-12))


def test_second_moment_refuses_off_line():
    with pytest.raises(ValueError):
        second_moment_probe("xy", [4.0], 2, diag_paths(2, 4), 8, u=2.0)


def test_full_estimator_identity_mcmc():
    batch = diag_paths(2, 32, seed=4)
    m, se, target = estimator_identity("xy", 4.0, 2, batch, replicas=64, burnin=100, measure=400, seed=2)
    assert abs(m - target) < 3 * se


# -- synchronisation -----------------------------------------------------------------


def test_polar_project_matches_scipy():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(50, 3, 3)) + 1j * rng.normal(size=(50, 3, 3))
    P = polar_project(M)
    for a, b in zip(M, P):
        assert np.allclose(linalg.polar(a)[0], b, atol=1e-10)


def test_polar_project_real_rotation():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(200, 3, 3))
    P = polar_project(M)
    assert np.allclose(np.swapaxes(P, -1, -2) @ P, np.eye(3), atol=1e-10)
    assert np.allclose(np.linalg.det(P), 1.0)
    O = sp.haar_sample("so3", rng, 5)
    assert np.allclose(polar_project(0.3 * O), O)


@pytest.mark.parametrize("model", ["xy", "su2", "so3"])
def test_noiseless_recovery(model):
    n = 3
    lat = build_box([n + 1] * 3)
    dis, truth = planted_instance(lat, model, np.inf, np.random.default_rng(0), replicas=4)
    rec = reconstruct_relative(dis, (0, 0, 0), (n, n, n), diag_paths(n, 16), 1.0, truth=truth)
    assert np.allclose(rec.alignment, 1.0)


def test_alignment_gauge_invariant():
    n, beta = 3, 8.0
    lat = build_box([n + 1] * 3)
    rng = np.random.default_rng(5)
    dis, truth = planted_instance(lat, "su2", beta, rng, replicas=8)
    batch = diag_paths(n, 64)
    lam = lambda_value("su2", beta)
    a = reconstruct_relative(dis, (0, 0, 0), (n, n, n), batch, lam, truth=truth).alignment
    # a global rotation of the planted spins leaves the disorder unchanged
    g = sp.haar_sample("su2", rng)
    truth2 = sp.qmul(truth, g)
    est = reconstruct_relative(dis, (0, 0, 0), (n, n, n), batch, lam).estimate
    b = alignment("su2", est, true_relative("su2", truth2, 0, lat.index((n, n, n))))
    assert np.allclose(a, b)


def test_low_beta_is_non_informative():
    n, beta = 3, 0.1
    lat = build_box([n + 1] * 3)
    dis, truth = planted_instance(lat, "su2", beta, np.random.default_rng(2), replicas=64)
    rec = reconstruct_relative(dis, (0, 0, 0), (n, n, n), diag_paths(n, 64), lambda_value("su2", beta), truth=truth)
    assert not rec.informative
    a = rec.alignment
    assert abs(a.mean()) < 3 * a.std(ddof=1) / np.sqrt(a.size)


def test_reconstruct_rejects_wrong_endpoints():
    lat = build_box([4, 4, 4])
    dis, _ = planted_instance(lat, "su2", 4.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        reconstruct_relative(dis, (0, 0, 0), (2, 2, 2), diag_paths(3, 4), 0.5)


# -- harness --------------------------------------------------------------------------


def test_harness_mmsp():
    recs = identity_harness("mmsp", HarnessConfig(beta=1.0, mmsp_fields=10))
    assert all(r.passed for r in recs)
    json.loads(recs[0].to_json())


def test_harness_factorization_small():
    recs = identity_harness("factorization", HarnessConfig(beta=1.5, dims=(4, 4, 4), replicas=16, burnin=50, measure=300))
    oracle = [r for r in recs if r.oracle_value is not None]
    assert len(oracle) == 6 and all(r.passed for r in oracle)
    mc = [r for r in recs if r.mc_value is not None]
    assert all(r.z is not None for r in mc)


def test_harness_unknown_check():
    with pytest.raises(ValueError):
        identity_harness("nope")
