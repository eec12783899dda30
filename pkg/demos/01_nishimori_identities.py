"""Exact identities on the Nishimori line, checked by simulation.

Run with ``python3 demos/01_nishimori_identities.py``. Takes about a minute.
"""

# %%
import numpy as np

from nishimori.estimators import HarnessConfig, exact_edge_energy, identity_harness, lambda_value, simulate
from nishimori.lattice import build_box
from nishimori.oracle import chain_problem, disorder_average, edge_function

# %% [markdown]
# lambda(beta) is the per-edge mean of the disorder character. On the
# circle it is the Bessel ratio I1/I0; the group models use the matching
# scalar in E[Omega] = lambda Id.

# %%
print("beta   " + "  ".join(f"{m:>10}" for m in ("xy", "su2", "so3", "heisenberg")))
for beta in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0):
    row = [lambda_value(m, beta).value for m in ("xy", "su2", "so3", "heisenberg")]
    print(f"{beta:5.1f}  " + "  ".join(f"{v:10.6f}" for v in row))

# %% [markdown]
# With u = beta the averaged quenched energy per edge is exactly -lambda,
# whatever the lattice. Short runs on a 4^3 box already land within a few
# standard errors.

# %%
lat = build_box([4, 4, 4])
for model in ("xy", "su2", "heisenberg"):
    beta = 2.0
    avgs, _ = simulate(model, lat, beta, 16, 200, 1000, 3, {"e": lambda s: s.internal_energy()[1]})
    e = avgs["e"][:, 0]
    print(f"{model:11s} beta={beta}: {e.mean():+.4f} ± {e.std(ddof=1) / 4:.4f}  exact {exact_edge_energy(model, beta):+.4f}")

# %% [markdown]
# The same number from the quadrature oracle: one edge, disorder and spins
# both integrated on a periodic grid.

# %%
val = disorder_average(chain_problem(1, 2.0), edge_function([(0, np.cos)])).value
print(f"oracle single-edge E cos Y = {float(np.real(val)):.12f}, lambda(2) = {lambda_value('xy', 2.0).value:.12f}")

# %% [markdown]
# The factorization and MMSP checks run through the same harness the
# ``nishimori verify`` subcommand uses.

# %%
for check in ("factorization", "mmsp"):
    for rec in identity_harness(check, HarnessConfig(beta=1.5, replicas=16, measure=1000)):
        status = "PASS" if rec.passed else "FAIL"
        value = rec.oracle_value if rec.mc_value is None else rec.mc_value
        print(f"{status} {check:13s} {rec.lattice:8s} {rec.quantity:38s} {value:+.3e}")
