"""Increasing paths, their intersection tails, and the cone construction.

Run with ``python3 demos/02_paths_and_intersections.py``. Takes under a minute.
"""

# %%
import numpy as np

from nishimori.paths import bridge_sampler, certify_eit, cone_sampler, estimate_eit_tail, markov_mixing, uniform_iid

rng = np.random.default_rng(2024)

# %% [markdown]
# Two independent uniform increasing paths share k edges with probability
# decaying like exp(-alpha k). In four dimensions the decay is clean; in
# three dimensions alpha is smaller and drifts with the path length, which
# is why the estimator needs a better path measure there.

# %%
for d in (4, 3):
    res = estimate_eit_tail(uniform_iid(d), 16, 50_000, rng, bootstrap=50)
    print(f"uniform d={d} n=16: alpha={res.alpha:.3f} ± {res.alpha_se:.3f}  R2={res.r2:.4f}")

# %% [markdown]
# The gate used before trusting a three-dimensional sampler: fitted alpha
# over n = 8, 16, 32 must be stable (relative spread at most 10%) with a
# good linear fit of the log tail.

# %%
for name, measure in (("uniform", uniform_iid(3)), ("markov rho=0.5", markov_mixing(3, 0.5))):
    cert = certify_eit(measure, rng)
    print(f"{name:15s} alphas {np.round(cert.alphas, 3)}  R2 {np.round([r.r2 for r in cert.results], 3)}  passed={cert.passed}")

# %% [markdown]
# Bridges condition an increasing path on its endpoint. For a general pair
# of points the cone sampler routes through monotone segments and stays in
# the ball around the midpoint.

# %%
b = bridge_sampler(markov_mixing(3, 0.5), (0, 0, 0), (4, 4, 4)).sample(rng, 5)
for p in b.paths():
    print("bridge", p.vertices[:4].tolist(), "...", p.end)

cs = cone_sampler((3, 1, 0), (-1, 4, -5))
batch = cs.sample(rng, 1000)
dist = np.linalg.norm(batch.vertices().reshape(-1, 3) - cs.center, axis=1)
print(f"cone paths: length {batch.length}, all simple {batch.simple_mask().all()}, "
      f"max distance from centre {dist.max():.2f} <= radius {cs.radius:.2f}")
