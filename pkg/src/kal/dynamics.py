"""The annihilation/collision jump process and its two event schedulers.

Pairs (i, j) fire at rate Sigma_B(v_i - v_j) / Lambda.  A fired pair is
removed with probability alpha and otherwise collides elastically with a
scattering vector drawn from the kernel's angular law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AbsorbingStateError, MajorantViolation
from .kernels import CollisionKernel, sample_omega_one, sigma_b_speed

ELASTIC = "elastic"
ANNIHILATION = "annihilation"
NULL = "null"

EXACT = "exact"
MAJORANT = "majorant"


def elastic_collide(v_i, v_j, omega):
    """Post-collision velocities for scattering vector ``omega``.

    Works on single 3-vectors or on stacks of shape (..., 3).
    """
    v_i = np.asarray(v_i, dtype=float)
    v_j = np.asarray(v_j, dtype=float)
    omega = np.asarray(omega, dtype=float)
    d = np.einsum("...k,...k->...", v_i - v_j, omega)[..., None]
    return v_i - d * omega, v_j + d * omega


@dataclass
class Event:
    time: float
    kind: str
    i: int = -1
    j: int = -1
    omega: np.ndarray | None = None


class SystemState:
    """Velocity configuration V_N with cached rate bookkeeping.

    In exact mode with a speed-dependent kernel the state keeps the full
    matrix of pair frequencies and its row sums; both are patched in O(N)
    per event.  Maxwell molecules need no cache (sigma_N = N(N-1)/2).
    """

    def __init__(self, velocities, kernel: CollisionKernel, lam: float, alpha: float,
                 time: float = 0.0, track_pair_rates: bool | None = None):
        v = np.array(velocities, dtype=float).reshape(-1, 3)
        self.kernel = kernel
        self.lam = float(lam)
        self.alpha = float(alpha)
        self.time = float(time)
        self._v = v
        self.n = len(v)
        self.n0 = self.n
        self.max_speed = float(np.sqrt((v * v).sum(axis=1)).max()) if self.n else 0.0
        if track_pair_rates is None:
            track_pair_rates = not kernel.is_constant
        self._rates = None
        self._rowsum = None
        if track_pair_rates and not kernel.is_constant:
            self._rates = self._pair_matrix()
            self._rowsum = self._rates.sum(axis=1)

    @property
    def velocities(self) -> np.ndarray:
        return self._v[: self.n]

    @property
    def tracks_pair_rates(self) -> bool:
        return self._rates is not None

    def _pair_matrix(self) -> np.ndarray:
        v = self.velocities
        diff = v[:, None, :] - v[None, :, :]
        m = sigma_b_speed(self.kernel, np.sqrt((diff * diff).sum(axis=-1)))
        np.fill_diagonal(m, 0.0)
        return m

    def sigma_n(self) -> float:
        """sum_{i<j} Sigma_B(v_i - v_j), from the cache when one is kept."""
        n = self.n
        if n < 2:
            return 0.0
        if self.kernel.is_constant:
            return n * (n - 1) / 2.0
        if self._rowsum is not None:
            return 0.5 * float(self._rowsum[:n].sum())
        return self.sigma_n_full()

    def sigma_n_full(self) -> float:
        """O(N^2) recomputation of sigma_N, independent of any cache."""
        if self.n < 2:
            return 0.0
        return 0.5 * float(self._pair_matrix().sum())

    def cache_error(self) -> float:
        """Relative mismatch between the cached and recomputed sigma_N."""
        full = self.sigma_n_full()
        cached = self.sigma_n()
        return abs(cached - full) / full if full > 0 else abs(cached)

    def kinetic_energy(self) -> float:
        v = self.velocities
        return float((v * v).sum())

    def momentum(self) -> np.ndarray:
        return self.velocities.sum(axis=0)

    def _refresh(self, k: int):
        n = self.n
        v = self._v
        diff = v[:n] - v[k]
        new = sigma_b_speed(self.kernel, np.sqrt((diff * diff).sum(axis=1)))
        new[k] = 0.0
        R = self._rates
        self._rowsum[:n] += new - R[k, :n]
        self._rowsum[k] = new.sum()
        R[k, :n] = new
        R[:n, k] = new

    def _remove(self, k: int):
        last = self.n - 1
        R = self._rates
        if R is not None:
            self._rowsum[: self.n] -= R[: self.n, k]
            if k != last:
                R[k, : self.n] = R[last, : self.n]
                R[: self.n, k] = R[: self.n, last]
                R[k, k] = 0.0
                self._rowsum[k] = self._rowsum[last]
        if k != last:
            self._v[k] = self._v[last]
        self.n = last

    def annihilate(self, i: int, j: int):
        hi, lo = (i, j) if i > j else (j, i)
        self._remove(hi)
        self._remove(lo)

    def collide(self, i: int, j: int, omega):
        v = self._v
        vi, vj = v[i], v[j]
        d = (vi[0] - vj[0]) * omega[0] + (vi[1] - vj[1]) * omega[1] + (vi[2] - vj[2]) * omega[2]
        v[i] = vi - d * omega
        v[j] = vj + d * omega
        si = math.sqrt(float(v[i] @ v[i]))
        sj = math.sqrt(float(v[j] @ v[j]))
        if si > self.max_speed:
            self.max_speed = si
        if sj > self.max_speed:
            self.max_speed = sj
        if self._rates is not None:
            self._refresh(i)
            self._refresh(j)

    def copy(self) -> "SystemState":
        out = SystemState.__new__(SystemState)
        out.__dict__.update(self.__dict__)
        out._v = self._v.copy()
        if self._rates is not None:
            out._rates = self._rates.copy()
            out._rowsum = self._rowsum.copy()
        return out


def total_rate(state: SystemState) -> float:
    """sigma_N(V_N) / Lambda; zero in the absorbing states N < 2."""
    if state.n < 2:
        return 0.0
    return state.sigma_n() / state.lam


def _uniform_pair(n, rng):
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    return (i, j) if i < j else (j, i)


def _weighted_pair(state, rng):
    n = state.n
    cum = np.cumsum(state._rowsum[:n])
    u = rng.random(2)
    i = min(int(np.searchsorted(cum, u[0] * cum[-1], side="right")), n - 1)
    row_cum = np.cumsum(state._rates[i, :n])
    j = min(int(np.searchsorted(row_cum, u[1] * row_cum[-1], side="right")), n - 1)
    return (i, j) if i < j else (j, i)


def _fire(state: SystemState, i: int, j: int, rng) -> Event:
    if rng.random() < state.alpha:
        state.annihilate(i, j)
        return Event(state.time, ANNIHILATION, i, j)
    v = state._v
    omega = sample_omega_one(v[i] - v[j], rng)
    state.collide(i, j, omega)
    return Event(state.time, ELASTIC, i, j, omega)


def step_exact(state: SystemState, rng, horizon: float = math.inf) -> Event | None:
    """Advance by one event of the exact (Gillespie) scheduler.

    If the next event would fall after ``horizon`` the clock is stopped at
    ``horizon`` and None is returned; by memorylessness the discarded
    holding time does not bias the process.
    """
    if state.n < 2:
        raise AbsorbingStateError("absorbing configuration")
    if not state.kernel.is_constant and not state.tracks_pair_rates:
        raise ValueError("exact scheduling of a speed-dependent kernel needs track_pair_rates=True")
    rate = total_rate(state)
    if rate <= 0.0:
        state.time = max(state.time, horizon)
        return None
    t_next = state.time + rng.exponential(1.0 / rate)
    if t_next > horizon:
        state.time = horizon
        return None
    state.time = t_next
    if state.kernel.is_constant:
        i, j = _uniform_pair(state.n, rng)
    else:
        i, j = _weighted_pair(state, rng)
    return _fire(state, i, j, rng)


def pair_majorant(state: SystemState) -> float:
    """Per-pair bound c_b * (2 max_speed)**gamma on Sigma_B."""
    k = state.kernel
    return k.c_b * (2.0 * state.max_speed) ** k.gamma


def step_majorant(state: SystemState, rng, horizon: float = math.inf) -> Event | None:
    """Advance by one proposal of the null-collision scheduler.

    Proposals arrive at the constant rate N(N-1)/2 * B_hat / Lambda on
    uniform pairs and are accepted with probability Sigma_B / B_hat.
    Rejected proposals are returned as NULL events.
    """
    n = state.n
    if n < 2:
        raise AbsorbingStateError("absorbing configuration")
    bhat = pair_majorant(state)
    rate = 0.5 * n * (n - 1) * bhat / state.lam
    if rate <= 0.0:
        state.time = max(state.time, horizon)
        return None
    t_next = state.time + rng.exponential(1.0 / rate)
    if t_next > horizon:
        state.time = horizon
        return None
    state.time = t_next
    i, j = _uniform_pair(n, rng)
    v = state._v
    u = v[i] - v[j]
    sig = float(sigma_b_speed(state.kernel, math.sqrt(float(u @ u))))
    ratio = sig / bhat
    if ratio > 1.0 + 1e-12:
        raise MajorantViolation(ratio, (i, j), state.time)
    if rng.random() >= ratio:
        return Event(state.time, NULL, i, j)
    return _fire(state, i, j, rng)


STEPPERS = {EXACT: step_exact, MAJORANT: step_majorant}


@dataclass
class Trajectory:
    times: np.ndarray
    n: np.ndarray
    energy: np.ndarray
    momentum: np.ndarray
    velocities: list | None = None
    counts: dict = field(default_factory=lambda: {ELASTIC: 0, ANNIHILATION: 0, NULL: 0})


def simulate(state: SystemState, snapshot_times, mode: str = EXACT, rng=None,
             record_velocities: bool = True, on_event=None) -> Trajectory:
    """Run ``state`` through ``snapshot_times`` and record observables there.

    Records N, sum |v|^2 and sum v at every requested time (exactly those
    times), plus copies of the velocity list when ``record_velocities``.
    Absorbed runs (N < 2) keep emitting unchanged snapshots.  ``on_event``
    is called as ``on_event(state, event)`` after every non-null event.
    """
    times = np.asarray(snapshot_times, dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < state.time):
        raise ValueError("snapshot times must be nondecreasing and start at or after state.time")
    if rng is None:
        rng = np.random.default_rng()
    step = STEPPERS[mode]
    T = times.size
    traj = Trajectory(
        times=times.copy(),
        n=np.zeros(T, dtype=np.int64),
        energy=np.zeros(T),
        momentum=np.zeros((T, 3)),
        velocities=[] if record_velocities else None,
    )
    counts = traj.counts
    for k, ts in enumerate(times):
        while state.n >= 2:
            ev = step(state, rng, horizon=ts)
            if ev is None:
                break
            counts[ev.kind] += 1
            if on_event is not None and ev.kind != NULL:
                on_event(state, ev)
        state.time = max(state.time, ts)
        traj.n[k] = state.n
        traj.energy[k] = state.kinetic_energy()
        traj.momentum[k] = state.momentum()
        if record_velocities:
            traj.velocities.append(state.velocities.copy())
    return traj
