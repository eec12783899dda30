"""Acceptance criteria, one test each, at full scale.

Every test prints a single PASS/FAIL line (shown even under capture) before
asserting. Thresholds marked as pilot-derived live in
acceptance_thresholds.json; the pilot runs used different seeds from the
ones here, so the checks below are fresh draws.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from nishimori import spins as sp
from nishimori.disorder import (
    DISORDER_SPACE,
    MODELS,
    SPIN_SPACE,
    DisorderField,
    gauge_transform,
    sample_disorder,
    sample_disorder_replicas,
)
from nishimori.estimators import (
    HarnessConfig,
    exact_edge_energy,
    identity_harness,
    lambda_value,
    lambda_xy,
    off_nishimori_gap,
    planted_instance,
    r_estimator,
    reconstruct_relative,
    second_moment_probe,
    simulate,
    two_point_curve,
)
from nishimori.gibbs import ExperimentConfig, QuenchedState, global_action, run_chains, run_quenched_experiment
from nishimori.lattice import BoundarySpec, build_box, centered_box
from nishimori.oracle import transfer_chain
from nishimori.paths import bridge_sampler, certify_eit, estimate_eit_tail, markov_mixing, uniform_iid
from nishimori.streams import stream

THRESHOLDS = json.loads((Path(__file__).with_name("acceptance_thresholds.json")).read_text())
SEED_OFFSET = 1000


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}")
        assert passed, detail

    return emit


@pytest.mark.slow
def test_1_internal_energy(report):
    start = time.time()
    lines, ok = [], True
    for beta in (0.5, 2.0, 8.0):
        cfg = ExperimentConfig(
            model="xy", dims=[6, 6, 6], beta=beta, burnin=1000, measure=20_000, replicas=64,
            master_seed=SEED_OFFSET + 1, replica_block=16, workers=os.cpu_count() or 1,
        )
        agg = [r for r in run_quenched_experiment(cfg) if r.metadata["replica"] == "all"][0]
        exp = exact_edge_energy("xy", beta)
        good = abs(agg.mean - exp) <= 3 * agg.stderr
        ok &= good
        lines.append(f"beta={beta:g} {agg.mean:.5f}±{agg.stderr:.1g} vs {exp:.5f}")
    report(1, "internal energy", ok, "; ".join(lines) + f"; {time.time() - start:.0f}s on {os.cpu_count()} cores")


def test_2_factorization(report):
    recs = identity_harness("factorization", HarnessConfig(beta=1.5, dims=(4, 4, 4), replicas=64, burnin=500,
                                                           measure=4000, seed=SEED_OFFSET + 2))
    oracle = [r for r in recs if r.oracle_value is not None]
    mc = [r for r in recs if r.mc_value is not None]
    gap = off_nishimori_gap(1.5, 0.5)
    ok = all(r.passed for r in recs) and gap > 1e-3
    worst_oracle = max(abs(r.oracle_value - r.expected) for r in oracle)
    worst_z = max(abs(r.z) for r in mc if r.z is not None)
    report(2, "factorization", ok,
           f"{len(oracle)} oracle checks max err {worst_oracle:.1e}; {len(mc)} MC checks max |z| {worst_z:.2f}; off-line gap {gap:.3g}")


def test_3_spin_glass(report):
    parts, ok = [], True
    for beta in (1.0, 4.0):
        recs = identity_harness("spin_glass", HarnessConfig(beta=beta, dims=(4, 4, 4), replicas=64, burnin=500,
                                                            measure=4000, seed=SEED_OFFSET + 3))
        ok &= all(r.passed for r in recs)
        orc_rec, mc_rec = recs
        parts.append(f"beta={beta:g} oracle diff {orc_rec.oracle_value:.1e}, MC diff {mc_rec.mc_value:.4f}±{mc_rec.mc_stderr:.1g}")
    report(3, "spin-glass identity", ok, "; ".join(parts))


def test_4_estimator_normalization(report):
    n = 4
    lat = build_box([n + 1] * 3)
    sampler = bridge_sampler(markov_mixing(3, 0.5), (0, 0, 0), (n, n, n))
    parts, ok = [], True
    for model in ("xy", "su2"):
        for k, beta in enumerate((4.0, 16.0)):
            batch = sampler.sample(stream(SEED_OFFSET + 4, k), 256)
            dis = sample_disorder_replicas(lat, model, beta, SEED_OFFSET + 40 + k, range(256))
            dist, sig = r_estimator(dis, batch, lambda_value(model, beta)).deviation()
            ok &= dist < 3 * sig
            parts.append(f"{model} beta={beta:g} dist {dist:.3g} (3σ {3 * sig:.3g})")
    report(4, "estimator normalization", ok, "; ".join(parts))


def test_5_second_moment_trend(report):
    measure = markov_mixing(3, 0.5)
    cert = certify_eit(measure, stream(SEED_OFFSET + 5, 0))
    sampler = bridge_sampler(measure, (0, 0, 0), (4, 4, 4))
    parts, ok = [f"EIT gate alphas {np.round(cert.alphas, 3).tolist()}"], cert.passed
    for model in ("xy", "su2"):
        tab = second_moment_probe(model, [4.0, 8.0, 16.0, 32.0], 4, sampler, 512, num_paths=256, seed=SEED_OFFSET + 50)
        ok &= tab.jensen_ok and tab.decreasing
        parts.append(f"{model} " + " > ".join(f"{r.moment:.4f}±{r.stderr:.1g}" for r in tab.rows))
    report(5, "second-moment trend", ok, "; ".join(parts))


def test_6_eit_dichotomy(report):
    rng = stream(SEED_OFFSET + 6, 0)
    r4 = estimate_eit_tail(uniform_iid(4), 16, 10**5, rng)
    r3 = estimate_eit_tail(uniform_iid(3), 16, 10**5, rng)
    sep = (r4.alpha - r3.alpha) / np.hypot(r4.alpha_se, r3.alpha_se)
    ok = r4.r2 >= 0.98 and sep > 3
    report(6, "EIT dichotomy", ok,
           f"d=4 alpha {r4.alpha:.3f}±{r4.alpha_se:.2g} R2 {r4.r2:.4f}; d=3 alpha {r3.alpha:.3f}±{r3.alpha_se:.2g}; separation {sep:.1f}σ")


@pytest.mark.slow
def test_7_long_range_order_trend(report):
    t = THRESHOLDS["two_point_trend"]
    parts, ok = [], True
    for model in ("xy", "su2"):
        curve = two_point_curve(model, t["lattice"], t["betas"], t["x"], t["y"], t["replicas"], t["burnin"], t["measure"],
                                t["seed"] + SEED_OFFSET)
        means = [m for m, _ in curve]
        gain = means[-1] - means[0]
        good = gain >= t["min_gain"] and all(b > a for a, b in zip(means, means[1:]))
        ok &= good
        parts.append(f"{model} " + " < ".join(f"{m:.3f}" for m in means) + f" gain {gain:.3f}")
    worst = 0.0
    for beta in (0.25, 0.5, 1.0):
        lam = lambda_xy(beta).value
        for L in (1, 4, 16, 64):
            worst = max(worst, abs(transfer_chain(L, beta).value / lam**L - 1))
    ok &= worst < 1e-8
    parts.append(f"transfer chain vs lambda^L max rel err {worst:.1e}")
    report(7, "long-range-order trend", ok, "; ".join(parts))


@pytest.mark.slow
def test_8_dirichlet_magnetization(report):
    t = THRESHOLDS["dirichlet_magnetization"]
    parts, ok = [], True
    for n in t["boxes"]:
        lat = centered_box(n)
        bnd = BoundarySpec("dirichlet", lat.interior_boundary())
        i0 = lat.index((0, 0, 0))
        stats = []
        for beta in t["betas"]:
            avgs, _ = simulate("xy", lat, beta, t["replicas"], t["burnin"], t["measure"], t["seed"] + SEED_OFFSET,
                               {"m": lambda s: np.cos(s.spins[:, i0])}, boundary=bnd)
            m = avgs["m"][:, 0]
            stats.append((m.mean(), m.std(ddof=1) / np.sqrt(len(m))))
        top = stats[-1][0] >= t["min_at_top_beta"]
        mono = all(b[0] >= a[0] - t["monotone_sigma"] * np.hypot(a[1], b[1]) for a, b in zip(stats, stats[1:]))
        ok &= top and mono
        parts.append(f"n={n} " + ", ".join(f"{m:.3f}±{s:.1g}" for m, s in stats))
    report(8, "Dirichlet magnetization", ok, "; ".join(parts))


def test_9_mmsp(report):
    parts, ok = [], True
    for beta in (0.5, 1.5, 4.0):
        recs = identity_harness("mmsp", HarnessConfig(beta=beta, mmsp_fields=50, mmsp_points=10**4, seed=SEED_OFFSET + 9))
        ok &= all(r.passed for r in recs)
        worst = max(r.oracle_value for r in recs[:-1])
        parts.append(f"beta={beta:g} worst excess {worst:.2e}, identity err {recs[-1].oracle_value:.1e}")
    report(9, "MMSP inequality", ok, "; ".join(parts))


def interaction(lat, dis, s):
    return QuenchedState(lat, dis, 1.0, np.random.default_rng(0), spins=s).interaction_sum()


def test_10_symmetry_suite(report):
    lat = build_box([3, 3, 3])
    rng = stream(SEED_OFFSET + 10, 0)
    gauge_err = 0.0
    for model in MODELS:
        dis = sample_disorder(lat, model, 1.3, rng)
        s = sp.haar_sample(SPIN_SPACE[model], rng, (1, lat.num_vertices))
        g = sp.haar_sample(DISORDER_SPACE[model], rng, lat.num_vertices)
        d2, s2, _ = gauge_transform(model, dis, s, g)
        gauge_err = max(gauge_err, float(abs(interaction(lat, dis, s) - interaction(lat, d2, s2))[0]))

    dis = sample_disorder(lat, "heisenberg", 1.0, rng)
    s = sp.haar_sample("sphere2", rng, (1, lat.num_vertices))
    flip_err = float(abs(interaction(lat, dis, -s) - interaction(lat, dis, s))[0])

    dis = sample_disorder(lat, "isoclinic", 1.0, rng)
    s = sp.haar_sample("sphere3", rng, (1, lat.num_vertices))
    e0 = interaction(lat, dis, s)[0]
    right_err, left_gap = 0.0, 0.0
    for _ in range(20):
        g = sp.haar_sample("su2", rng)
        right_err = max(right_err, abs(interaction(lat, dis, global_action("isoclinic", s, g, "right"))[0] - e0))
        left_gap = max(left_gap, abs(interaction(lat, dis, global_action("isoclinic", s, g, "left"))[0] - e0))

    beta, R = 1.0, 64
    h = sample_disorder(lat, "heisenberg", beta, stream(SEED_OFFSET + 10, 1), replicas=R)
    lift = DisorderField("heisenberg_lift", lat, h.values, beta)
    out = {}
    for name, d in (("s2", h), ("lift", lift)):
        st = QuenchedState(lat, d, beta, stream(SEED_OFFSET + 10, 2))
        out[name] = run_chains(st, 200, 1000, 1, {"c": lambda s: s.two_point((0, 0, 0), (2, 2, 2))})["c"].mean(axis=-1)
    diff = out["s2"] - out["lift"]
    lift_z = abs(diff.mean()) / (diff.std(ddof=1) / np.sqrt(R))

    ok = gauge_err < 1e-10 and flip_err < 1e-10 and right_err < 1e-10 and left_gap > 1e-6 and lift_z < 3
    report(10, "symmetry suite", ok,
           f"gauge err {gauge_err:.1e} (6 models); sign flip {flip_err:.1e}; isoclinic right {right_err:.1e}, left gap {left_gap:.3g}; "
           f"lift vs S2 |z| {lift_z:.2f}")


def test_11_synchronization(report):
    t = THRESHOLDS["synchronization"]
    n, beta = t["n"], t["beta"]
    lat = build_box([n + 1] * 3)
    x, y = (0, 0, 0), (n, n, n)
    dis, truth = planted_instance(lat, t["model"], beta, stream(SEED_OFFSET + 11, 0), t["instances"])
    batch = bridge_sampler(markov_mixing(3, 0.5), x, y).sample(stream(SEED_OFFSET + 11, 1), t["paths"])
    rec = reconstruct_relative(dis, x, y, batch, lambda_value(t["model"], beta), truth=truth)
    mean = float(rec.alignment.mean())
    se = float(rec.alignment.std(ddof=1) / np.sqrt(len(rec.alignment)))
    report(11, "synchronization", mean >= t["min_alignment"] and rec.informative,
           f"mean alignment {mean:.4f}±{se:.2g} over {t['instances']} instances (threshold {t['min_alignment']})")
