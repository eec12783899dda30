"""Pilot runs behind tests/acceptance_thresholds.json.

Reruns the pilot simulations with the recorded seeds and prints the pilot
block of each entry as JSON. The thresholds themselves were set by hand
with a wide margin under these numbers. Takes roughly ten minutes on one core.

    python3 demos/pilot_thresholds.py > pilot.json
"""

import json
import sys
from pathlib import Path

import numpy as np

from nishimori.estimators import lambda_value, planted_instance, reconstruct_relative, simulate, two_point_curve
from nishimori.lattice import BoundarySpec, build_box, centered_box
from nishimori.paths import bridge_sampler, certify_eit, markov_mixing, uniform_iid

THRESHOLDS = json.loads((Path(__file__).resolve().parents[1] / "tests" / "acceptance_thresholds.json").read_text())


def log(msg):
    print(msg, file=sys.stderr, flush=True)


def two_point():
    t = THRESHOLDS["two_point_trend"]
    out = {}
    for model in ("xy", "su2"):
        curve = two_point_curve(model, t["lattice"], t["betas"], t["x"], t["y"], t["replicas"], t["burnin"], t["measure"], t["seed"])
        out[model] = {"mean": [round(m, 5) for m, _ in curve], "stderr": [round(s, 5) for _, s in curve]}
        log(f"two-point {model}: {out[model]['mean']}")
    return out


def dirichlet():
    t = THRESHOLDS["dirichlet_magnetization"]
    out = {}
    for n in t["boxes"]:
        lat = centered_box(n)
        bnd = BoundarySpec("dirichlet", lat.interior_boundary())
        i0 = lat.index((0, 0, 0))
        means, ses = [], []
        for beta in t["betas"]:
            avgs, _ = simulate("xy", lat, beta, t["replicas"], t["burnin"], t["measure"], t["seed"],
                               {"m": lambda s: np.cos(s.spins[:, i0])}, boundary=bnd)
            m = avgs["m"][:, 0]
            means.append(round(float(m.mean()), 5))
            ses.append(round(float(m.std(ddof=1) / np.sqrt(len(m))), 5))
        out[str(n)] = {"mean": means, "stderr": ses}
        log(f"dirichlet n={n}: {means}")
    return out


def synchronization(seed=0):
    t = THRESHOLDS["synchronization"]
    n = t["n"]
    lat = build_box([n + 1] * 3)
    dis, truth = planted_instance(lat, t["model"], t["beta"], np.random.default_rng(seed), t["instances"])
    batch = bridge_sampler(markov_mixing(3, 0.5), (0, 0, 0), (n, n, n)).sample(np.random.default_rng(seed + 1), t["paths"])
    rec = reconstruct_relative(dis, (0, 0, 0), (n, n, n), batch, lambda_value(t["model"], t["beta"]), truth=truth)
    return round(float(rec.alignment.mean()), 3)


def eit():
    rng = np.random.default_rng(0)
    out = {}
    for name, measure in (("uniform_iid d=3", uniform_iid(3)), ("markov_mixing rho=0.5 d=3", markov_mixing(3, 0.5)),
                          ("markov_mixing rho=0.7 d=3", markov_mixing(3, 0.7))):
        out[name] = [round(float(a), 3) for a in certify_eit(measure, rng).alphas]
    return out


if __name__ == "__main__":
    result = {
        "two_point_trend": two_point(),
        "dirichlet_magnetization": dirichlet(),
        "synchronization": synchronization(),
        "eit_gate": eit(),
    }
    print(json.dumps(result, indent=2))
