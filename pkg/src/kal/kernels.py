"""Collision kernels B(u, omega), their collision frequencies and angular samplers.

Every kernel shipped here shares the angular law

    B(u, omega) = Sigma_B(|u|) * |u_hat . omega| / (2 pi),

so only the collision frequency Sigma_B differs between families.  The
angular factor integrates to one over the unit sphere.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError

MAXWELL = "maxwell"
HARD_SPHERE = "hard_sphere"
BOUNDED_CUSTOM = "bounded_custom"
FAMILIES = (MAXWELL, HARD_SPHERE, BOUNDED_CUSTOM)

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CollisionKernel:
    family: str
    gamma: float
    c_b: float
    sup_sigma: float | None = None
    # bounded_custom only: Sigma_B tabulated against relative speed
    table_speed: tuple = field(default=(), repr=False)
    table_sigma: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError("kernel.family", f"unknown family {self.family!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("kernel.gamma", "must lie in [0, 1]")
        if not self.c_b > 0:
            raise ConfigError("kernel.c_b", "must be positive")

    @property
    def is_constant(self) -> bool:
        """True when Sigma_B is the same for every pair (Maxwell molecules)."""
        return self.family == MAXWELL

    @property
    def is_bounded(self) -> bool:
        return self.sup_sigma is not None

    def to_dict(self) -> dict:
        d = {"family": self.family, "gamma": self.gamma, "c_b": self.c_b}
        if self.sup_sigma is not None:
            d["sup_sigma"] = self.sup_sigma
        return d


def maxwell() -> CollisionKernel:
    return CollisionKernel(MAXWELL, gamma=0.0, c_b=1.0, sup_sigma=1.0)


def hard_sphere() -> CollisionKernel:
    return CollisionKernel(HARD_SPHERE, gamma=1.0, c_b=1.0, sup_sigma=None)


def bounded_custom(speeds, sigmas, gamma=0.0, c_b=None) -> CollisionKernel:
    """Kernel with a tabulated, bounded collision frequency.

    Sigma_B is linearly interpolated in the relative speed and held constant
    beyond the last node.  ``c_b`` defaults to the table maximum.  The growth
    bound ``Sigma_B(s) <= c_b * s**gamma`` is checked at the nodes; linear
    interpolation under a concave bound then keeps it everywhere.
    """
    speeds = np.asarray(speeds, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if speeds.ndim != 1 or speeds.shape != sigmas.shape or speeds.size == 0:
        raise ConfigError("kernel.table_path", "speed and sigma columns must be equal-length 1-d")
    if np.any(np.diff(speeds) <= 0) or speeds[0] < 0:
        raise ConfigError("kernel.table_path", "speeds must be nonnegative and strictly increasing")
    if np.any(sigmas < 0) or not np.all(np.isfinite(sigmas)):
        raise ConfigError("kernel.table_path", "sigma values must be finite and nonnegative")
    if gamma > 0 and speeds[0] != 0.0:
        raise ConfigError("kernel.table_path", "table must start at speed 0 when gamma > 0")
    sup = float(sigmas.max())
    if c_b is None:
        c_b = sup if gamma == 0 else float(np.max(sigmas[1:] / speeds[1:] ** gamma, initial=0.0))
    bound = c_b * speeds**gamma
    if np.any(sigmas > bound * (1 + 1e-12)):
        raise ConfigError("kernel.c_b", "tabulated sigma exceeds c_b * speed**gamma")
    return CollisionKernel(
        BOUNDED_CUSTOM,
        gamma=float(gamma),
        c_b=float(c_b),
        sup_sigma=sup,
        table_speed=tuple(speeds.tolist()),
        table_sigma=tuple(sigmas.tolist()),
    )


def load_sigma_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``speed,sigma`` CSV (header row optional)."""
    speeds, sigmas = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                s, g = float(row[0]), float(row[1])
            except ValueError:
                if not speeds:
                    continue  # header
                raise ConfigError("kernel.table_path", f"bad row {row!r} in {path}")
            speeds.append(s)
            sigmas.append(g)
    return np.array(speeds), np.array(sigmas)


def kernel_from_config(block: dict, base_dir=None) -> CollisionKernel:
    family = block.get("family", MAXWELL)
    if family == MAXWELL:
        k = maxwell()
    elif family == HARD_SPHERE:
        k = hard_sphere()
    elif family == BOUNDED_CUSTOM:
        if "table_path" not in block:
            raise ConfigError("kernel.table_path", "required for bounded_custom")
        path = Path(block["table_path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError("kernel.table_path", f"no such file {path}")
        speeds, sigmas = load_sigma_table(path)
        return bounded_custom(speeds, sigmas, gamma=float(block.get("gamma", 0.0)), c_b=block.get("c_b"))
    else:
        raise ConfigError("kernel.family", f"unknown family {family!r}")
    for key in ("gamma", "c_b"):
        if key in block and float(block[key]) != getattr(k, key):
            raise ConfigError(f"kernel.{key}", f"{family} requires {key}={getattr(k, key)}")
    return k


def _sigma_of_speed(kernel: CollisionKernel, speed):
    if kernel.family == MAXWELL:
        return np.ones_like(speed)
    if kernel.family == HARD_SPHERE:
        return speed
    return np.interp(speed, kernel.table_speed, kernel.table_sigma)


def sigma_b(kernel: CollisionKernel, u):
    """Collision frequency Sigma_B(u) for one relative velocity or a stack of them."""
    u = np.asarray(u, dtype=float)
    speed = np.sqrt(np.einsum("...i,...i->...", u, u))
    out = _sigma_of_speed(kernel, speed)
    return float(out) if out.ndim == 0 else out


def sigma_b_speed(kernel: CollisionKernel, speed):
    """Sigma_B as a function of the relative speed |u|."""
    return _sigma_of_speed(kernel, np.asarray(speed, dtype=float))


def kernel_density(kernel: CollisionKernel, u, omega) -> float:
    u = np.asarray(u, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise DomainError("omega must be a unit vector")
    speed = float(np.linalg.norm(u))
    if kernel.family == HARD_SPHERE:
        return abs(float(u @ omega)) / _TWO_PI
    sig = float(_sigma_of_speed(kernel, np.array(speed)))
    if speed == 0.0:
        if sig == 0.0:
            return 0.0
        raise DomainError("undefined angular density at zero relative velocity")
    return sig * abs(float(u @ omega)) / (speed * _TWO_PI)


def _orthonormal_frame(uhat):
    # helper axis: the coordinate axis least aligned with uhat
    helper = np.zeros_like(uhat)
    idx = np.argmin(np.abs(uhat), axis=-1)
    np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
    e1 = np.cross(uhat, helper)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(uhat, e1)
    return e1, e2


def uniform_sphere(rng, size=()) -> np.ndarray:
    size = (size,) if np.isscalar(size) else tuple(size)
    x = rng.standard_normal(size + (3,))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_omega(kernel: CollisionKernel, u, rng, size=None) -> np.ndarray:
    """Draw scattering vectors with density B(u, .)/Sigma_B(u) on the sphere.

    ``u`` may be a single 3-vector or a stack of shape (..., 3); ``size``
    prepends extra sample axes, giving output shape ``size + u.shape``.
    The law is |mu| on [-1, 1] for mu = u_hat . omega and a uniform azimuth.
    At u = 0 a uniform direction is returned (the collision is then the
    identity, so the choice has no effect).
    """
    u = np.asarray(u, dtype=float)
    shape = u.shape[:-1]
    if size is not None:
        size = (size,) if np.isscalar(size) else tuple(size)
        shape = size + shape
        u = np.broadcast_to(u, shape + (3,))
    speed = np.linalg.norm(u, axis=-1, keepdims=True)
    zero = speed[..., 0] == 0.0
    uhat = np.where(speed > 0, u / np.where(speed > 0, speed, 1.0), np.array([0.0, 0.0, 1.0]))
    mu = np.sqrt(rng.random(shape))
    mu = np.where(rng.random(shape) < 0.5, -mu, mu)
    phi = _TWO_PI * rng.random(shape)
    e1, e2 = _orthonormal_frame(uhat)
    s = np.sqrt(np.maximum(0.0, 1.0 - mu * mu))
    omega = (
        mu[..., None] * uhat
        + (s * np.cos(phi))[..., None] * e1
        + (s * np.sin(phi))[..., None] * e2
    )
    if np.any(zero):
        omega[zero] = uniform_sphere(rng, int(zero.sum()))
    return omega


def sample_omega_one(u, rng) -> np.ndarray:
    """Scalar fast path of :func:`sample_omega` for a single relative velocity."""
    ux, uy, uz = float(u[0]), float(u[1]), float(u[2])
    r = rng.random(3)
    speed = math.sqrt(ux * ux + uy * uy + uz * uz)
    if speed == 0.0:
        return uniform_sphere(rng)
    ux, uy, uz = ux / speed, uy / speed, uz / speed
    mu = math.sqrt(r[0])
    if r[1] < 0.5:
        mu = -mu
    phi = _TWO_PI * r[2]
    # e1 = uhat x (least aligned axis), e2 = uhat x e1
    ax, ay, az = abs(ux), abs(uy), abs(uz)
    if ax <= ay and ax <= az:
        e1 = (0.0, uz, -uy)
    elif ay <= az:
        e1 = (-uz, 0.0, ux)
    else:
        e1 = (uy, -ux, 0.0)
    n1 = math.sqrt(e1[0] ** 2 + e1[1] ** 2 + e1[2] ** 2)
    e1x, e1y, e1z = e1[0] / n1, e1[1] / n1, e1[2] / n1
    e2x = uy * e1z - uz * e1y
    e2y = uz * e1x - ux * e1z
    e2z = ux * e1y - uy * e1x
    s = math.sqrt(max(0.0, 1.0 - mu * mu))
    c, sn = s * math.cos(phi), s * math.sin(phi)
    return np.array([
        mu * ux + c * e1x + sn * e2x,
        mu * uy + c * e1y + sn * e2y,
        mu * uz + c * e1z + sn * e2z,
    ])
