"""Test functions paired against correlation functions.

Unary kinds act on velocity stacks of shape (..., 3).  Functions of several
velocities take shape (..., ell, 3): :class:`Tensor` multiplies unary
factors, :class:`TruncatedEnergy` is the capped mean kinetic energy
min(ell^-1 sum_j |v_j|^2, r).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def _fmt(x) -> str:
    return format(float(x), ".6g")


def _vec(c) -> str:
    return ",".join(_fmt(x) for x in c)


@dataclass(frozen=True)
class Constant:
    value: float = 1.0
    arity = 1

    def __call__(self, v):
        v = np.asarray(v)
        return np.full(v.shape[:-1], float(self.value))

    @property
    def id(self) -> str:
        return f"const({_fmt(self.value)})"

    @property
    def sup_norm(self) -> float:
        return abs(float(self.value))


@dataclass(frozen=True)
class Gaussian:
    a: float = 0.5
    c: tuple = (0.0, 0.0, 0.0)
    arity = 1

    def __call__(self, v):
        d = np.asarray(v) - np.asarray(self.c, dtype=float)
        return np.exp(-self.a * np.einsum("...i,...i->...", d, d))

    @property
    def id(self) -> str:
        return f"gauss(a={_fmt(self.a)};c={_vec(self.c)})"

    @property
    def sup_norm(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Fourier:
    """Real part of exp(i k . v)."""

    k: tuple = (1.0, 0.0, 0.0)
    arity = 1

    def __call__(self, v):
        return np.cos(np.asarray(v) @ np.asarray(self.k, dtype=float))

    @property
    def id(self) -> str:
        return f"cos(k={_vec(self.k)})"

    @property
    def sup_norm(self) -> float:
        return 1.0


@dataclass(frozen=True)
class SmoothBall:
    """Smoothed indicator of the ball |v| <= radius, edge of the given width."""

    radius: float = 2.0
    width: float = 0.25
    arity = 1

    def __call__(self, v):
        r = np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
        return 0.5 * (1.0 - np.tanh((r - self.radius) / self.width))

    @property
    def id(self) -> str:
        return f"ball(R={_fmt(self.radius)};w={_fmt(self.width)})"

    @property
    def sup_norm(self) -> float:
        return 0.5 * (1.0 - math.tanh(-self.radius / self.width))


@dataclass(frozen=True)
class Tensor:
    factors: tuple

    @property
    def arity(self) -> int:
        return len(self.factors)

    def __call__(self, V):
        V = np.asarray(V, dtype=float)
        out = self.factors[0](V[..., 0, :])
        for m, f in enumerate(self.factors[1:], start=1):
            out = out * f(V[..., m, :])
        return out

    @property
    def id(self) -> str:
        ids = [f.id for f in self.factors]
        if len(set(ids)) == 1:
            return ids[0] if len(ids) == 1 else f"{ids[0]}^{len(ids)}"
        return "*".join(ids)

    @property
    def sup_norm(self) -> float:
        return float(np.prod([f.sup_norm for f in self.factors]))


@dataclass(frozen=True)
class TruncatedEnergy:
    r: float = math.inf
    arity: int = 1

    def __call__(self, V):
        V = np.asarray(V, dtype=float)
        e = np.einsum("...ki,...ki->...", V, V) / self.arity
        return np.minimum(e, self.r)

    @property
    def id(self) -> str:
        return "energy" if math.isinf(self.r) else f"energy(r={_fmt(self.r)})"

    @property
    def sup_norm(self) -> float:
        return float(self.r)


UNARY = (Constant, Gaussian, Fourier, SmoothBall)


def with_arity(fn, ell: int):
    """Lift ``fn`` to an ell-particle test function.

    Unary kinds become tensor powers; tensors must already have arity ell.
    """
    if isinstance(fn, TruncatedEnergy):
        return TruncatedEnergy(fn.r, ell)
    if isinstance(fn, Tensor):
        if fn.arity != ell:
            raise ValueError(f"tensor of arity {fn.arity} used at ell={ell}")
        return fn
    if isinstance(fn, UNARY):
        return Tensor((fn,) * ell)
    raise TypeError(f"not a test function: {fn!r}")


def from_spec(spec: dict):
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return Constant(float(spec.get("value", 1.0)))
        if kind == "gaussian":
            return Gaussian(float(spec.get("a", 0.5)), tuple(float(x) for x in spec.get("c", (0, 0, 0))))
        if kind == "fourier":
            return Fourier(tuple(float(x) for x in spec["k"]))
        if kind == "ball":
            return SmoothBall(float(spec.get("R", 2.0)), float(spec.get("width", 0.25)))
        if kind == "energy":
            r = spec.get("r")
            return TruncatedEnergy(math.inf if r is None else float(r))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("observables", f"bad test function spec {spec!r}: {exc}")
    raise ConfigError("observables", f"unknown test function kind {kind!r}")


def to_spec(fn) -> dict:
    if isinstance(fn, Constant):
        return {"kind": "constant", "value": fn.value}
    if isinstance(fn, Gaussian):
        return {"kind": "gaussian", "a": fn.a, "c": list(fn.c)}
    if isinstance(fn, Fourier):
        return {"kind": "fourier", "k": list(fn.k)}
    if isinstance(fn, SmoothBall):
        return {"kind": "ball", "R": fn.radius, "width": fn.width}
    if isinstance(fn, TruncatedEnergy):
        return {"kind": "energy", "r": None if math.isinf(fn.r) else fn.r}
    raise TypeError(f"no spec form for {fn!r}")


def tuple_sum(fn, V: np.ndarray) -> float:
    """Sum of fn over ordered ell-tuples of distinct rows of V (ell = fn.arity).

    Tensor products use inclusion-exclusion over coincident indices, so the
    cost is O(N) for ell <= 3.  Other functions fall back to enumeration.
    Sums over particles are exactly rounded (math.fsum), which makes the
    result independent of particle order bit for bit.
    """
    V = np.asarray(V, dtype=float)
    ell = fn.arity
    N = len(V)
    if N < ell:
        return 0.0
    if isinstance(fn, TruncatedEnergy):
        if math.isinf(fn.r):
            # each particle sits in each slot of (N-1)!/(N-ell)! tuples
            return float(math.perm(N - 1, ell - 1) * _fsum(V * V))
        if ell == 1:
            return _fsum(fn(V[:, None, :]))
        return _enumerate(fn, V)
    if isinstance(fn, Tensor):
        vals = [f(V) for f in fn.factors]
        if ell == 1:
            return _fsum(vals[0])
        if ell == 2:
            a, b = vals
            return _fsum(a) * _fsum(b) - _fsum(a * b)
        if ell == 3:
            a, b, c = vals
            s_a, s_b, s_c = _fsum(a), _fsum(b), _fsum(c)
            return (
                s_a * s_b * s_c
                - _fsum(a * b) * s_c
                - _fsum(a * c) * s_b
                - _fsum(b * c) * s_a
                + 2.0 * _fsum(a * b * c)
            )
    return _enumerate(fn, V)


def _fsum(x) -> float:
    return math.fsum(np.ravel(x).tolist())


def _enumerate(fn, V):
    ell = fn.arity
    idx = np.array(list(itertools.permutations(range(len(V)), ell)), dtype=np.int64)
    if idx.size == 0:
        return 0.0
    total = 0.0
    for chunk in np.array_split(idx, max(1, len(idx) // 200_000)):
        total += float(fn(V[chunk]).sum())
    return total


class UnitFunctionBank:
    """A batch of random k-fold tensors of unary functions with sup norm <= 1.

    Row b of the bank is the tensor ``self.tensor(b)``; calling the bank on
    an array of shape (B, ..., k, 3) evaluates row b on slice b, so Monte
    Carlo probes over many random functions run as one vectorized pass.
    """

    def __init__(self, rng, count: int, k: int):
        shape = (count, k)
        self.arity = k
        self.kind = rng.integers(4, size=shape)
        self.value = rng.uniform(-1.0, 1.0, size=shape)
        self.a = rng.uniform(0.05, 2.0, size=shape)
        self.c = rng.standard_normal(shape + (3,))
        self.k = rng.standard_normal(shape + (3,)) * 2.0
        self.radius = rng.uniform(0.2, 4.0, size=shape)
        self.width = rng.uniform(0.05, 1.0, size=shape)

    def __len__(self):
        return self.kind.shape[0]

    def factor(self, b: int, m: int):
        kind = int(self.kind[b, m])
        if kind == 0:
            return Constant(float(self.value[b, m]))
        if kind == 1:
            return Gaussian(float(self.a[b, m]), tuple(self.c[b, m].tolist()))
        if kind == 2:
            return Fourier(tuple(self.k[b, m].tolist()))
        return SmoothBall(float(self.radius[b, m]), float(self.width[b, m]))

    def tensor(self, b: int) -> Tensor:
        return Tensor(tuple(self.factor(b, m) for m in range(self.arity)))

    @property
    def sup_norm(self) -> np.ndarray:
        per = np.where(self.kind == 0, np.abs(self.value), 1.0)
        ball = 0.5 * (1.0 - np.tanh(-self.radius / self.width))
        per = np.where(self.kind == 3, ball, per)
        return per.prod(axis=1)

    def __call__(self, V):
        V = np.asarray(V, dtype=float)
        extra = V.ndim - 3  # axes between the batch axis and (k, 3)

        def p(x):
            return x.reshape((x.shape[0],) + (1,) * extra + x.shape[1:])

        out = np.ones(V.shape[:-2])
        for m in range(self.arity):
            v = V[..., m, :]
            kind = p(self.kind[:, m])
            d = v - p(self.c[:, m])
            gauss = np.exp(-p(self.a[:, m]) * np.einsum("...i,...i->...", d, d))
            four = np.cos(np.einsum("...i,...i->...", v, p(self.k[:, m])))
            r = np.linalg.norm(v, axis=-1)
            ball = 0.5 * (1.0 - np.tanh((r - p(self.radius[:, m])) / p(self.width[:, m])))
            val = np.select([kind == 0, kind == 1, kind == 2], [np.broadcast_to(p(self.value[:, m]), r.shape), gauss, four], ball)
            out = out * val
        return out
