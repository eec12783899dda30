"""Per-model kernels for the sweep engine.

For every model the log-weight of a single spin s_v given its neighbours is
linear in an embedding of s_v::

    log w(s_v) = < embed(s_v), G_v >,   G_v = beta * sum_u J_vu transport(Omega_vu, s_u)

so one engine drives Metropolis for all models and exact heat-bath updates
wherever the conditional law is a von Mises-Fisher law.
"""

import numpy as np

from . import spins as sp


class Kernel:
    space = None
    dim = None
    pair_scale = 1.0
    has_heat_bath = True
    max_width = np.pi

    def embed(self, s):
        raise NotImplementedError

    def transport(self, omega, s):
        raise NotImplementedError

    def heat_bath(self, G, rng):
        raise NotImplementedError

    def propose(self, s, width, rng):
        raise NotImplementedError

    def inner(self, a, b):
        return np.sum(a * b, axis=-1)

    def renormalize(self, s):
        return sp.renormalize(self.space, s)


class XYKernel(Kernel):
    space = "circle"
    dim = 2

    def embed(self, s):
        return np.stack([np.cos(s), np.sin(s)], axis=-1)

    def transport(self, omega, s):
        a = s - omega
        return np.stack([np.cos(a), np.sin(a)], axis=-1)

    def heat_bath(self, G, rng):
        kappa = np.hypot(G[..., 0], G[..., 1])
        mu = np.arctan2(G[..., 1], G[..., 0])
        return np.mod(mu + rng.vonmises(0.0, kappa), sp.TWO_PI)

    def propose(self, s, width, rng):
        return np.mod(s + rng.uniform(-width, width, size=s.shape), sp.TWO_PI)

    def renormalize(self, s):
        return s


class SU2Kernel(Kernel):
    """SU(2) spins as quaternions; also the S^3 model pulled back by phi."""

    space = "su2"
    dim = 4
    pair_scale = 2.0

    def embed(self, s):
        return s

    def transport(self, omega, s):
        # Re Tr(U_v^* A) = 2 <u_v, q(A)>
        return 2.0 * sp.qmul(omega, s)

    def heat_bath(self, G, rng):
        kappa = np.linalg.norm(G, axis=-1)
        w = G / np.where(kappa > 0, kappa, 1.0)[..., None]
        w[kappa == 0] = (1.0, 0.0, 0.0, 0.0)
        x = sp.sample_vmf_s3(kappa, rng)
        return sp.qmul(w, x)

    def propose(self, s, width, rng):
        eps = rng.uniform(-width, width, size=s.shape[:-1])
        axis = sp._unit_gaussian(rng, s.shape[:-1], 3)
        step = np.concatenate([np.cos(eps)[..., None], np.sin(eps)[..., None] * axis], axis=-1)
        return sp.qmul(s, step)


class SphereS3Kernel(SU2Kernel):
    space = "sphere3"


class SO3Kernel(Kernel):
    space = "so3"
    dim = 9
    has_heat_bath = False

    def embed(self, s):
        return s.reshape(s.shape[:-2] + (9,))

    def transport(self, omega, s):
        return (omega @ s).reshape(s.shape[:-2] + (9,))

    def propose(self, s, width, rng):
        eps = rng.uniform(-width, width, size=s.shape[:-2])
        axis = sp._unit_gaussian(rng, s.shape[:-2], 3)
        return s @ sp.axis_angle_rotation(axis, eps)


class HeisenbergKernel(Kernel):
    space = "sphere2"
    dim = 3

    def embed(self, s):
        return s

    def transport(self, omega, s):
        return np.einsum("...ij,...j->...i", omega, s)

    def heat_bath(self, G, rng):
        kappa = np.linalg.norm(G, axis=-1)
        mean = G / np.where(kappa > 0, kappa, 1.0)[..., None]
        mean[kappa == 0] = (0.0, 0.0, 1.0)
        return sp.sample_vmf_s2(mean, kappa, rng)

    def propose(self, s, width, rng):
        t = s + width * rng.standard_normal(s.shape)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    max_width = 4.0


class HeisenbergLiftKernel(Kernel):
    """SO(3) spins O_v interacting only through O_v e_z."""

    space = "so3"
    dim = 3

    def embed(self, s):
        return s[..., :, 2]

    def transport(self, omega, s):
        return np.einsum("...ij,...j->...i", omega, s[..., :, 2])

    def heat_bath(self, G, rng):
        kappa = np.linalg.norm(G, axis=-1)
        mean = G / np.where(kappa > 0, kappa, 1.0)[..., None]
        mean[kappa == 0] = (0.0, 0.0, 1.0)
        S = sp.sample_vmf_s2(mean, kappa, rng)
        gamma = rng.uniform(0.0, sp.TWO_PI, size=kappa.shape)
        ez = np.broadcast_to([0.0, 0.0, 1.0], kappa.shape + (3,))
        return sp.rotation_to(S) @ sp.axis_angle_rotation(ez, gamma)

    def propose(self, s, width, rng):
        eps = rng.uniform(-width, width, size=s.shape[:-2])
        axis = sp._unit_gaussian(rng, s.shape[:-2], 3)
        return sp.axis_angle_rotation(axis, eps) @ s


KERNELS = {
    "xy": XYKernel(),
    "su2": SU2Kernel(),
    "so3": SO3Kernel(),
    "heisenberg": HeisenbergKernel(),
    "heisenberg_lift": HeisenbergLiftKernel(),
    "isoclinic": SphereS3Kernel(),
}


def metropolis_accept_probability(delta_log_weight):
    """min(1, exp(delta)); the rule every Metropolis update uses."""
    return np.exp(np.minimum(delta_log_weight, 0.0))
