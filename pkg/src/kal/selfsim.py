"""Self-similar variables for ensemble data.

The frame at time t is built from the ensemble estimates of the first
moments of f_1^eps:

    n_f = <f, 1>,  n_f u_f = <f, v>,  3 n_f T_f = <f, |v - u_f|^2>,
    tau(t) = sqrt(2) int_0^t n_f(s) sqrt(T_f(s)) ds,

and velocities map to xi = (v - u_f) / sqrt(2 T_f).  In these variables
the rescaled density has mass 1, zero mean and mean |xi|^2 = 3/2 at all
times even though raw mass and energy decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleResult
from .errors import FrameError

TARGET = np.array([1.0, 0.0, 0.0, 0.0, 1.5])
DEV_NAMES = ("mass", "px", "py", "pz", "energy")


@dataclass(frozen=True)
class SelfSimilarFrame:
    t: float
    n_f: float
    u_f: tuple
    T_f: float
    tau: float

    @property
    def scale(self) -> float:
        return math.sqrt(2.0 * self.T_f)


def moment_stats(ens: EnsembleResult) -> np.ndarray:
    """Per-realization (eps N, eps sum v, eps sum |v|^2), shape (M, T, 5)."""
    eps = ens.eps
    return np.concatenate(
        [eps * ens.N[..., None].astype(float), eps * ens.momentum, eps * ens.energy[..., None]],
        axis=-1,
    )


def frame_from_means(m) -> tuple[float, np.ndarray, float]:
    """(n_f, u_f, T_f) from averaged (eps N, eps sum v, eps sum |v|^2)."""
    n = float(m[0])
    if not n > 0:
        raise FrameError("empty sample: no particles to define a frame")
    u = np.asarray(m[1:4], dtype=float) / n
    second = float(m[4]) / n
    T = (second - float(u @ u)) / 3.0
    if not T > 1e-13 * max(second, 1e-300):
        raise FrameError("zero temperature")
    return n, u, T


def frame_curve(ens: EnsembleResult) -> list[SelfSimilarFrame]:
    """Frames at every snapshot time, with tau by trapezoid on the snapshot grid."""
    if "frames" in ens._cache:
        return ens._cache["frames"]
    means = moment_stats(ens).mean(axis=0)
    parts = [frame_from_means(m) for m in means]
    rate = np.array([math.sqrt(2.0) * n * math.sqrt(T) for n, _, T in parts])
    tau = np.zeros(len(rate))
    tau[1:] = np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(ens.times))
    frames = [
        SelfSimilarFrame(float(t), n, tuple(float(x) for x in u), T, float(s))
        for t, (n, u, T), s in zip(ens.times, parts, tau)
    ]
    ens._cache["frames"] = frames
    return frames


def compute_frame(ens: EnsembleResult, t: float) -> SelfSimilarFrame:
    return frame_curve(ens)[ens.snapshot_index(t)]


def rescale_velocities(sample, frame: SelfSimilarFrame) -> np.ndarray:
    if not frame.T_f > 0:
        raise FrameError("zero temperature")
    return (np.asarray(sample, dtype=float) - np.asarray(frame.u_f)) / frame.scale


def unscale_velocities(xi, frame: SelfSimilarFrame) -> np.ndarray:
    """Inverse of :func:`rescale_velocities`."""
    return np.asarray(xi, dtype=float) * frame.scale + np.asarray(frame.u_f)


@dataclass
class ConservationRow:
    t: float
    frame: SelfSimilarFrame
    deviation: np.ndarray          # (mass-1, px, py, pz, energy-3/2)
    stderr: np.ndarray | None
    mode: str

    def within(self, n_se: float) -> bool:
        if self.stderr is None:
            return False
        return bool(np.all(np.abs(self.deviation) <= n_se * self.stderr))


def _same_sample(ens, k, frame):
    eps = ens.eps
    mass = np.empty(ens.M)
    mom = np.empty((ens.M, 3))
    en = np.empty(ens.M)
    for r in range(ens.M):
        xi = rescale_velocities(ens.velocities(r, k), frame)
        mass[r] = eps * len(xi)
        mom[r] = eps * xi.sum(axis=0)
        en[r] = eps * float(np.einsum("ij,ij->", xi, xi))
    n = frame.n_f
    got = np.concatenate([[mass.mean()], mom.mean(axis=0), [en.mean()]]) / n
    return got - TARGET


def _split_deviation(mA, mB):
    n, u, T = frame_from_means(mA)
    s = math.sqrt(2.0 * T)
    mass = mB[0] / n
    mom = (mB[1:4] - mB[0] * u) / (n * s)
    en = (mB[4] - 2.0 * float(u @ mB[1:4]) + mB[0] * float(u @ u)) / (n * s * s)
    return np.concatenate([[mass], mom, [en]]) - TARGET


def _jacobian(fn, x, *, rel=1e-6):
    x = np.asarray(x, dtype=float)
    base = fn(x)
    J = np.empty((len(base), len(x)))
    for i in range(len(x)):
        h = rel * max(abs(x[i]), 1.0)
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (fn(up) - fn(dn)) / (2.0 * h)
    return J


def _split(ens, k):
    stats = moment_stats(ens)[:, k, :]
    half = ens.M // 2
    A, B = stats[:half], stats[half:]
    if len(A) < 2 or len(B) < 2:
        raise FrameError("split-sample mode needs at least four realizations")
    mA, mB = A.mean(axis=0), B.mean(axis=0)
    dev = _split_deviation(mA, mB)
    JA = _jacobian(lambda x: _split_deviation(x, mB), mA)
    JB = _jacobian(lambda x: _split_deviation(mA, x), mB)
    cA = np.atleast_2d(np.cov(A, rowvar=False)) / len(A)
    cB = np.atleast_2d(np.cov(B, rowvar=False)) / len(B)
    var = np.einsum("ij,jk,ik->i", JA, cA, JA) + np.einsum("ij,jk,ik->i", JB, cB, JB)
    return dev, np.sqrt(np.maximum(var, 0.0)), frame_from_means(mA)


def conserved_check(ens: EnsembleResult, t_list, mode: str = "same") -> list[ConservationRow]:
    """Deviation of rescaled (mass, momentum, energy) from (1, 0, 3/2).

    ``same``: frame and moments from the same realizations; deviations are
    rounding only.  ``split``: frame from the first half of the realizations,
    moments from the second half, stderr by the delta method over both halves.
    """
    rows = []
    frames = frame_curve(ens)
    for t in t_list:
        k = ens.snapshot_index(t)
        if mode == "same":
            frame = frames[k]
            if ens.store is not None:
                dev = _same_sample(ens, k, frame)
            else:
                dev = _split_deviation(moment_stats(ens)[:, k, :].mean(axis=0),
                                       moment_stats(ens)[:, k, :].mean(axis=0))
            rows.append(ConservationRow(float(ens.times[k]), frame, dev, None, mode))
        elif mode == "split":
            dev, se, (n, u, T) = _split(ens, k)
            frame = SelfSimilarFrame(float(ens.times[k]), n, tuple(u.tolist()), T, frames[k].tau)
            rows.append(ConservationRow(float(ens.times[k]), frame, dev, se, mode))
        else:
            raise ValueError("mode must be 'same' or 'split'")
    return rows
