"""Spin spaces: the circle, SU(2) as unit quaternions, SO(3), S^2 and S^3.

Values are plain numpy arrays with the spin axes last:

=========  =============  =========================================
space      value shape    meaning
=========  =============  =========================================
circle     ()             angle in [0, 2pi)
su2        (4,)           unit quaternion (a, b, c, d) read through phi
so3        (3, 3)         rotation matrix
sphere2    (3,)           unit vector
sphere3    (4,)           unit vector, identified with SU(2) via phi
=========  =============  =========================================

phi(a, b, c, d) = [[a + ib, c - id], [-c - id, a - ib]]. With this basis the
quaternion units anticommute the "wrong" way, so the matrix product
phi(x) phi(y) equals phi of the Hamilton product y*x; ``compose`` hides that.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

SPACES = ("circle", "su2", "so3", "sphere2", "sphere3")
VALUE_SHAPE = {"circle": (), "su2": (4,), "so3": (3, 3), "sphere2": (3,), "sphere3": (4,)}
# Tr Id for the groups, <S, S> for the spheres
TRACE_DIM = {"circle": 1, "su2": 2, "so3": 3, "sphere2": 1, "sphere3": 1}

UNIT_TOL = 1e-12
RENORM_TOL = 1e-9


def _check_space(space):
    if space not in SPACES:
        raise ValueError(f"unknown spin space {space!r}")


def identity(space, shape=()):
    _check_space(space)
    shape = tuple(np.atleast_1d(shape)) if shape != () else ()
    if space == "circle":
        return np.zeros(shape)
    if space == "so3":
        return np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
    if space == "sphere2":
        out = np.zeros(shape + (3,))
        out[..., 2] = 1.0
        return out
    out = np.zeros(shape + (4,))
    out[..., 0] = 1.0
    return out


# -------------------------------------------------------------------------
# quaternion algebra (a, b, c, d) under phi


def _hamilton(p, q):
    a1, b1, c1, d1 = np.moveaxis(p, -1, 0)
    a2, b2, c2, d2 = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ],
        axis=-1,
    )


def qmul(x, y):
    """Quaternion of phi(x) @ phi(y)."""
    return _hamilton(y, x)


def qconj(x):
    out = np.array(x, dtype=float, copy=True)
    out[..., 1:] *= -1.0
    return out


def phi_map(v, tol=1e-9):
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("phi_map expects unit vectors of R^4")
    a, b, c, d = np.moveaxis(v, -1, 0)
    out = np.empty(v.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = a + 1j * b
    out[..., 0, 1] = c - 1j * d
    out[..., 1, 0] = -c - 1j * d
    out[..., 1, 1] = a - 1j * b
    return out


def phi_inverse(U, tol=1e-9):
    U = np.asarray(U, dtype=complex)
    a = 0.5 * (U[..., 0, 0].real + U[..., 1, 1].real)
    b = 0.5 * (U[..., 0, 0].imag - U[..., 1, 1].imag)
    c = 0.5 * (U[..., 0, 1].real - U[..., 1, 0].real)
    d = -0.5 * (U[..., 0, 1].imag + U[..., 1, 0].imag)
    v = np.stack([a, b, c, d], axis=-1)
    if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > tol):
        raise ValueError("matrix is not in SU(2)")
    return v


def quat_to_rotation(q):
    """SO(3) image of a unit quaternion (the double cover, Hamilton convention).

    A homomorphism for the Hamilton product; ``qmul`` follows phi and is the
    reversed product, so R(qmul(x, y)) = R(y) R(x).
    """
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    out = np.empty(np.shape(w) + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - z * w)
    out[..., 0, 2] = 2 * (x * z + y * w)
    out[..., 1, 0] = 2 * (x * y + z * w)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - x * w)
    out[..., 2, 0] = 2 * (x * z - y * w)
    out[..., 2, 1] = 2 * (y * z + x * w)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def axis_angle_rotation(axis, angle):
    """Rodrigues formula, broadcasting over leading axes."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)[..., None, None]
    K = np.zeros(axis.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -axis[..., 2], axis[..., 1]
    K[..., 1, 0], K[..., 1, 2] = axis[..., 2], -axis[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -axis[..., 1], axis[..., 0]
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def rotation_to(v):
    """A rotation taking e_z to the unit vector v (any fixed choice)."""
    v = np.asarray(v, dtype=float)
    ez = np.array([0.0, 0.0, 1.0])
    cross = np.cross(ez, v)
    s = np.linalg.norm(cross, axis=-1)
    cz = v[..., 2]
    safe = np.where(s > 1e-15, s, 1.0)
    axis = np.where((s > 1e-15)[..., None], cross / safe[..., None], np.array([1.0, 0.0, 0.0]))
    angle = np.arctan2(s, cz)
    return axis_angle_rotation(axis, angle)


def _unit_gaussian(rng, shape, k):
    g = rng.standard_normal(tuple(shape) + (k,))
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    while np.any(n == 0):
        bad = (n == 0)[..., 0]
        g[bad] = rng.standard_normal((int(bad.sum()), k))
        n = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / n


# -------------------------------------------------------------------------
# sampling


def haar_sample(space, rng, size=()):
    _check_space(space)
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    if space == "circle":
        return rng.uniform(0.0, TWO_PI, size=shape)
    if space == "sphere2":
        return _unit_gaussian(rng, shape, 3)
    q = _unit_gaussian(rng, shape, 4)
    if space == "so3":
        return quat_to_rotation(q)
    return q


def sample_cosine_tilt(alpha, rng):
    """Draw a in [-1, 1] with density proportional to sqrt(1 - a^2) exp(alpha a).

    This is the real part of a quaternion from exp(alpha <q, e_0>) on S^3.
    Below alpha = 2 the u = 0 marginal is used as proposal (accept with
    exp(alpha (a - 1))); above it, the Kennedy-Pendleton gamma(3/2) proposal.
    Both are exact.
    """
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty(alpha.shape)
    flat_a = alpha.ravel()
    flat_o = out.ravel()
    todo = np.arange(flat_a.size)
    while todo.size:
        al = flat_a[todo]
        small = al < 2.0
        acc = np.zeros(todo.size, dtype=bool)
        cand = np.empty(todo.size)
        if small.any():
            n = int(small.sum())
            a = _unit_gaussian(rng, (n,), 4)[:, 0]
            ok = rng.random(n) <= np.exp(al[small] * (a - 1.0))
            cand[small] = a
            acc[small] = ok
        big = ~small
        if big.any():
            n = int(big.sum())
            r1, r2, r3, r4 = (1.0 - rng.random(n) for _ in range(4))
            x = -(np.log(r1) + np.cos(TWO_PI * r2) ** 2 * np.log(r3)) / al[big]
            ok = r4**2 <= 1.0 - 0.5 * x
            cand[big] = 1.0 - x
            acc[big] = ok
        flat_o[todo[acc]] = cand[acc]
        todo = todo[~acc]
    return out


def sample_vmf_s3(kappa, rng):
    """Quaternions with density proportional to exp(kappa <q, e_0>) on S^3."""
    kappa = np.asarray(kappa, dtype=float)
    a = sample_cosine_tilt(kappa, rng)
    direction = _unit_gaussian(rng, kappa.shape, 3)
    r = np.sqrt(np.clip(1.0 - a * a, 0.0, None))
    return np.concatenate([a[..., None], r[..., None] * direction], axis=-1)


def sample_vmf_s2(mean, kappa, rng):
    """von Mises-Fisher on S^2 with mean direction ``mean`` (unit vectors)."""
    kappa = np.asarray(kappa, dtype=float)
    mean = np.asarray(mean, dtype=float)
    u = rng.random(kappa.shape)
    w = np.empty(kappa.shape)
    small = kappa < 1e-8
    w[small] = 2.0 * u[small] - 1.0
    k = kappa[~small]
    w[~small] = 1.0 + np.log(u[~small] + (1.0 - u[~small]) * np.exp(-2.0 * k)) / k
    w = np.clip(w, -1.0, 1.0)
    psi = rng.uniform(0.0, TWO_PI, kappa.shape)
    r = np.sqrt(1.0 - w * w)
    local = np.stack([r * np.cos(psi), r * np.sin(psi), w], axis=-1)
    return np.einsum("...ij,...j->...i", rotation_to(mean), local)


def sample_tilted_so3(u, rng, size=()):
    """Rotations with density proportional to exp(u Tr O) against Haar.

    Tr O = 4 a^2 - 1 for the quaternion real part a, so |a| has density
    proportional to sqrt(1 - a^2) exp(4 u a^2) on [0, 1]. Propose from the
    exp(4 u a) tilt and accept with exp(-4 u a (1 - a)).
    """
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    n = int(np.prod(shape)) if shape else 1
    a = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        cand = sample_cosine_tilt(np.full(todo.size, 4.0 * u), rng)
        ok = (cand >= 0) & (rng.random(todo.size) <= np.exp(-4.0 * u * cand * (1.0 - cand)))
        a[todo[ok]] = cand[ok]
        todo = todo[~ok]
    direction = _unit_gaussian(rng, (n,), 3)
    r = np.sqrt(np.clip(1.0 - a * a, 0.0, None))
    q = np.concatenate([a[:, None], r[:, None] * direction], axis=1)
    return quat_to_rotation(q).reshape(shape + (3, 3))


def sample_tilted_zz(beta, rng, size=()):
    """Rotations with density proportional to exp(beta <e_z, O e_z>) against Haar.

    Under Haar, O e_z is uniform on S^2, so its z-component t is uniform on
    [-1, 1] and the tilt makes it exponential; the stabiliser of e_z stays
    uniform. Sampled exactly by inverting the CDF of t.
    """
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    u = rng.random(shape)
    if beta < 1e-8:
        t = 2.0 * u - 1.0
    else:
        t = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * beta)) / beta
    t = np.clip(t, -1.0, 1.0)
    az = rng.uniform(0.0, TWO_PI, shape)
    r = np.sqrt(1.0 - t * t)
    v = np.stack([r * np.cos(az), r * np.sin(az), t], axis=-1)
    gamma = rng.uniform(0.0, TWO_PI, shape)
    spin = axis_angle_rotation(np.broadcast_to([0.0, 0.0, 1.0], shape + (3,)), gamma)
    return rotation_to(v) @ spin


def tilted_sample(space, u, rng, size=()):
    """Draw from exp(u Re Tr Omega) dHaar (circle: exp(u cos w) dw)."""
    _check_space(space)
    if u < 0:
        raise ValueError("tilt parameter u must be nonnegative")
    shape = tuple(np.atleast_1d(size)) if size != () else ()
    if space == "circle":
        return np.mod(rng.vonmises(0.0, u, size=shape), TWO_PI)
    if space in ("su2", "sphere3"):
        # Re Tr phi(q) = 2 a
        return sample_vmf_s3(np.full(shape, 2.0 * u), rng)
    if space == "so3":
        return sample_tilted_so3(u, rng, shape)
    raise ValueError("sphere2 has no group tilt; use sample_tilted_zz for the Heisenberg disorder")


# -------------------------------------------------------------------------
# algebra


def compose(space, x, y):
    _check_space(space)
    if space == "circle":
        return np.mod(np.asarray(x) + np.asarray(y), TWO_PI)
    if space in ("su2", "sphere3"):
        return renormalize(space, qmul(x, y))
    if space == "so3":
        return renormalize(space, np.asarray(x) @ np.asarray(y))
    raise ValueError("sphere2 is not a group")


def invert(space, x):
    _check_space(space)
    if space == "circle":
        return np.mod(-np.asarray(x), TWO_PI)
    if space in ("su2", "sphere3"):
        return qconj(x)
    if space == "so3":
        return np.swapaxes(np.asarray(x), -1, -2).copy()
    raise ValueError("sphere2 is not a group")


def re_trace_pair(space, x, y):
    """Re Tr(x* y) for the groups, cos(x - y) on the circle, <x, y> on spheres."""
    _check_space(space)
    if space == "circle":
        return np.cos(np.asarray(x) - np.asarray(y))
    if space == "su2":
        return 2.0 * np.sum(np.asarray(x) * np.asarray(y), axis=-1)
    if space == "so3":
        return np.sum(np.asarray(x) * np.asarray(y), axis=(-1, -2))
    return np.sum(np.asarray(x) * np.asarray(y), axis=-1)


def isoclinic_act(side, U, v):
    """Left (U . v) or right (v . U) isoclinic rotation of S^3 vectors."""
    if side == "left":
        return qmul(U, v)
    if side == "right":
        return qmul(v, U)
    raise ValueError("side must be 'left' or 'right'")


def renormalize(space, x, tol=RENORM_TOL):
    """Project back onto the space when numerical drift exceeds ``tol``."""
    x = np.asarray(x, dtype=float)
    if space in ("su2", "sphere3", "sphere2"):
        n = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(np.abs(n - 1.0) > tol):
            x = x / n
        return x
    if space == "so3":
        err = np.abs(np.swapaxes(x, -1, -2) @ x - np.eye(3)).max() if x.size else 0.0
        if err > tol:
            u, _, vt = np.linalg.svd(x)
            x = u @ vt
        return x
    return x


def check_invariants(space, x, tol=RENORM_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if space == "circle":
        return bool(np.all(np.isfinite(x)))
    if space == "so3":
        orth = np.abs(np.swapaxes(x, -1, -2) @ x - np.eye(3)).max() if x.size else 0.0
        return bool(orth <= tol and np.all(np.abs(np.linalg.det(x) - 1.0) <= tol))
    return bool(np.all(np.abs(np.linalg.norm(x, axis=-1) - 1.0) <= tol))
