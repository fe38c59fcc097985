"""Ensembles of independent realizations and the estimators built on them.

Every realization starts from exactly N0 i.i.d. velocities and is simulated
to the last snapshot.  Estimators reduce one number per realization and
average in realization-index order, so results do not depend on how many
workers produced the trajectories.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .config import ESTIMATOR_STREAM, SIM_STREAM, RunConfig, sample_initial, stream
from .dynamics import ANNIHILATION, ELASTIC, EXACT, NULL, SystemState, elastic_collide, simulate
from .kernels import sample_omega, sigma_b
from .limits import gamma_terms
from .testfns import Constant, TruncatedEnergy, tuple_sum, with_arity

_RECORD_DTYPE = np.dtype("<f8")


def worker_count() -> int:
    """Number of worker processes: the CPU count, capped by KAL_THREADS."""
    n = os.cpu_count() or 1
    env = os.environ.get("KAL_THREADS")
    if env:
        try:
            n = min(n, int(env))
        except ValueError:
            pass
    return max(1, n)


class SnapshotStore:
    """Velocity snapshots per (realization, snapshot index).

    Up to ``cap_bytes`` are kept in memory; later realizations are appended
    to a binary sidecar of little-endian float64 records
    ``[snapshot index, N, v_1x, v_1y, v_1z, ..., v_Nz]``.
    """

    def __init__(self, cap_bytes: float, sidecar_path=None):
        self.cap_bytes = float(cap_bytes)
        self.sidecar_path = Path(sidecar_path) if sidecar_path is not None else None
        self.bytes_in_memory = 0
        self._mem: dict[int, list] = {}
        self._index: dict[int, list] = {}
        self._reader = None
        self._owns_sidecar = False

    def __len__(self):
        return len(self._mem) + len(self._index)

    @property
    def spilled(self) -> int:
        return len(self._index)

    def add(self, r: int, snapshots: list):
        size = sum(v.nbytes for v in snapshots)
        if self.bytes_in_memory + size <= self.cap_bytes:
            self._mem[r] = snapshots
            self.bytes_in_memory += size
        else:
            self._spill(r, snapshots)

    def _spill(self, r, snapshots):
        if self.sidecar_path is None:
            fd, name = tempfile.mkstemp(prefix="kal_snapshots_", suffix=".bin")
            os.close(fd)
            self.sidecar_path = Path(name)
            self._owns_sidecar = True
        entries = []
        with open(self.sidecar_path, "ab") as fh:
            for k, v in enumerate(snapshots):
                n = len(v)
                rec = np.empty(2 + 3 * n, dtype=_RECORD_DTYPE)
                rec[0] = k
                rec[1] = n
                rec[2:] = np.ravel(v)
                entries.append((fh.tell(), n))
                fh.write(rec.tobytes())
        self._index[r] = entries
        if self._reader is not None:
            self._reader.close()
            self._reader = None

    def get(self, r: int, k: int) -> np.ndarray:
        if r in self._mem:
            return self._mem[r][k]
        offset, n = self._index[r][k]
        if self._reader is None:
            self._reader = open(self.sidecar_path, "rb")
        self._reader.seek(offset)
        rec = np.frombuffer(self._reader.read(8 * (2 + 3 * n)), dtype=_RECORD_DTYPE)
        if int(rec[0]) != k or int(rec[1]) != n:
            raise OSError(f"corrupt snapshot record for realization {r}, snapshot {k}")
        return rec[2:].astype(float).reshape(n, 3)

    def close(self):
        if self._reader is not None:
            self._reader.close()
            self._reader = None
        if self._owns_sidecar and self.sidecar_path is not None and self.sidecar_path.exists():
            self.sidecar_path.unlink()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


@dataclass
class EnsembleResult:
    config: RunConfig
    times: np.ndarray
    N: np.ndarray          # (M, T) particle numbers
    energy: np.ndarray     # (M, T) sum |v|^2
    momentum: np.ndarray   # (M, T, 3) sum v
    store: SnapshotStore | None
    counts: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self) -> int:
        return self.N.shape[0]

    @property
    def eps(self) -> float:
        return self.config.eps

    def snapshot_index(self, t: float) -> int:
        hit = np.flatnonzero(np.abs(self.times - t) <= 1e-12 * max(1.0, abs(t)))
        if hit.size == 0:
            raise ValueError(f"t={t} is not a snapshot time")
        return int(hit[0])

    def velocities(self, r: int, k: int) -> np.ndarray:
        if self.store is None:
            raise ValueError("velocity snapshots were not retained")
        return self.store.get(r, k)

    def snapshots_at(self, k: int):
        for r in range(self.M):
            yield self.velocities(r, k)

    @classmethod
    def from_trajectories(cls, config: RunConfig, trajectories, sidecar_path=None) -> "EnsembleResult":
        trajectories = list(trajectories)
        times = trajectories[0].times.copy()
        store = None
        if trajectories[0].velocities is not None:
            store = SnapshotStore(config.snapshot_memory_mb * 2**20, sidecar_path)
            for r, tr in enumerate(trajectories):
                store.add(r, tr.velocities)
        counts = {ELASTIC: 0, ANNIHILATION: 0, NULL: 0}
        for tr in trajectories:
            for key, val in tr.counts.items():
                counts[key] += val
        out = cls(
            config=config,
            times=times,
            N=np.array([tr.n for tr in trajectories]),
            energy=np.array([tr.energy for tr in trajectories]),
            momentum=np.array([tr.momentum for tr in trajectories]),
            store=store,
            counts=counts,
        )
        if len(times) > 1 and np.max(np.diff(times)) > config.max_dt * (1 + 1e-12):
            out.warnings.append(
                f"snapshot spacing {np.max(np.diff(times)):.6g} exceeds max_dt={config.max_dt:.6g}; "
                "time-integrated hierarchy terms may carry quadrature bias"
            )
        return out


def simulate_realization(config: RunConfig, r: int, record_velocities: bool = True, seed=None):
    """Trajectory of realization ``r``; a pure function of (config, seed, r)."""
    seed = config.seed if seed is None else seed
    rng = stream(seed, r, SIM_STREAM)
    v0 = sample_initial(config.init, config.N0, rng)
    state = SystemState(v0, config.kernel, config.lam, config.alpha,
                        track_pair_rates=(config.mode == EXACT and not config.kernel.is_constant))
    return simulate(state, config.snapshot_times, config.mode, rng, record_velocities)


def _run_chunk(args):
    config, seed, indices, record = args
    return [simulate_realization(config, r, record, seed) for r in indices]


def run_ensemble(config: RunConfig, seed=None, workers: int | None = None,
                 record_velocities: bool = True, sidecar_path=None) -> EnsembleResult:
    """Simulate config.M independent realizations.

    Realization r draws from the stream (seed, r); ``workers`` only changes
    wall time, never the result.
    """
    seed = config.seed if seed is None else int(seed)
    M = config.M
    workers = worker_count() if workers is None else max(1, int(workers))
    workers = min(workers, M)
    if workers == 1:
        trajectories = [simulate_realization(config, r, record_velocities, seed) for r in range(M)]
    else:
        n_chunks = min(M, 8 * workers)
        chunks = [list(c) for c in np.array_split(np.arange(M), n_chunks)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(config, seed, c, record_velocities) for c in chunks])
            trajectories = [tr for part in parts for tr in part]
    result = EnsembleResult.from_trajectories(config, trajectories, sidecar_path)
    result._cache["seed"] = seed
    return result


@dataclass
class Estimate:
    """A Monte Carlo estimate; unpacks as (value, stderr)."""

    value: float
    stderr: float | None
    details: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.value
        yield self.stderr


@dataclass
class EmpiricalCorrelation:
    ell: int
    testfn_id: str
    value: float
    stderr: float | None
    t: float
    M: int


def mean_stderr(samples) -> tuple[float, float | None]:
    x = np.asarray(samples, dtype=float)
    m = float(np.mean(x))
    if len(x) < 2:
        return m, None
    return m, float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _per_realization(ens: EnsembleResult, k: int, fn, ell: int) -> np.ndarray:
    key = ("corr", k, ell, fn.id)
    if key not in ens._cache:
        scale = ens.eps**ell
        ens._cache[key] = np.array([scale * tuple_sum(fn, V) for V in ens.snapshots_at(k)])
    return ens._cache[key]


def estimate_correlation(ens: EnsembleResult, ell: int, testfn, t: float) -> EmpiricalCorrelation:
    """Factorial-moment estimate of <f_ell^eps(t), Phi_ell>.

    eps^ell times the sum of Phi over ordered ell-tuples of distinct
    particles, averaged over realizations.  Realizations with fewer than
    ell particles contribute zero.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    k = ens.snapshot_index(t)
    fn = with_arity(testfn, ell)
    vals = _per_realization(ens, k, fn, ell)
    m, se = mean_stderr(vals)
    return EmpiricalCorrelation(ell, fn.id, m, se, float(ens.times[k]), ens.M)


def chaos_defect(ens: EnsembleResult, phi, psi, t: float) -> Estimate:
    """|<f_2^eps, phi (x) psi> - <f_1^eps, phi><f_1^eps, psi>| with delta-method stderr."""
    k = ens.snapshot_index(t)
    eps = ens.eps
    x = np.empty(ens.M)
    b = np.empty(ens.M)
    c = np.empty(ens.M)
    for r, V in enumerate(ens.snapshots_at(k)):
        p = phi(V)
        q = psi(V)
        sp = math.fsum(p.tolist())
        sq = math.fsum(q.tolist())
        x[r] = eps**2 * (sp * sq - math.fsum((p * q).tolist()))
        b[r] = eps * sp
        c[r] = eps * sq
    xbar, bbar, cbar = float(np.mean(x)), float(np.mean(b)), float(np.mean(c))
    signed = xbar - bbar * cbar
    se = None
    if ens.M > 1:
        influence = x - cbar * b - bbar * c
        se = float(np.std(influence, ddof=1) / math.sqrt(ens.M))
    return Estimate(abs(signed), se, {"signed": signed, "f2": xbar, "f1_phi": bbar, "f1_psi": cbar})


def distinct_tuples(n: int, m: int, count: int, rng) -> np.ndarray:
    """``count`` uniformly random ordered m-tuples of distinct indices in range(n)."""
    if m > n:
        raise ValueError("tuple longer than the population")
    if n >= 2 * m:
        idx = rng.integers(n, size=(count, m))
        while True:
            srt = np.sort(idx, axis=1)
            bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
            if bad.size == 0:
                return idx
            idx[bad] = rng.integers(n, size=(bad.size, m))
    return np.argsort(rng.random((count, n)), axis=1)[:, :m]


def hierarchy_rate(V: np.ndarray, fn, kernel, alpha: float, eps: float, samples: int, rng) -> float:
    """Monte Carlo value of the time derivative side of the rescaled hierarchy.

    Returns eps * A_ell + A_{ell+1} for one configuration, where

      A_ell     = eps^ell sum_{distinct ell-tuples} sum_{i<j<=ell}
                  int B(v_i - v_j, w) [(1-alpha) Phi(V^{ij}) - Phi(V)] dw,
      A_{ell+1} = eps^{ell+1} sum_{distinct (ell+1)-tuples} Gamma Phi(V_{ell+1}).

    Each tuple sum is estimated from ``samples`` uniformly drawn tuples with
    one scattering vector per collision term, scaled by the tuple count.
    """
    ell = fn.arity
    N = len(V)
    total = 0.0
    if ell >= 2 and N >= ell:
        idx = distinct_tuples(N, ell, samples, rng)
        Vt = V[idx]
        base = fn(Vt)
        acc = np.zeros(samples)
        for a, b in combinations(range(ell), 2):
            u = Vt[:, a] - Vt[:, b]
            sig = np.atleast_1d(sigma_b(kernel, u))
            w = sample_omega(kernel, u, rng)
            moved = Vt.copy()
            moved[:, a], moved[:, b] = elastic_collide(Vt[:, a], Vt[:, b], w)
            acc += sig * ((1.0 - alpha) * fn(moved) - base)
        total += eps ** (ell + 1) * math.perm(N, ell) * float(np.mean(acc))
    if N >= ell + 1:
        idx = distinct_tuples(N, ell + 1, samples, rng)
        terms = gamma_terms(fn, V[idx], kernel, alpha, 1, rng)[:, 0]
        total += eps ** (ell + 1) * math.perm(N, ell + 1) * float(np.mean(terms))
    return total


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    if len(t) > 1:
        out[..., 1:] = np.cumsum(0.5 * (y[..., 1:] + y[..., :-1]) * np.diff(t), axis=-1)
    return out


def _quadrature_error(abar, t):
    """Richardson estimate |I_h - I_2h| / 3 of the trapezoid error, per grid point."""
    err = np.zeros(len(t))
    if len(t) < 3:
        return err
    fine = _cumtrapz(abar, t)
    coarse = _cumtrapz(abar[::2], t[::2])
    even = np.abs(fine[::2] - coarse) / 3.0
    err[::2] = even
    err[1::2] = even[: len(err[1::2])]
    return err


def bbgky_curve(ens: EnsembleResult, ell: int, testfn, omega_samples: int | None = None) -> dict:
    """Residual of the weak hierarchy identity at every snapshot time.

    Per realization, residual(t_k) = X(t_k) - X(t_0) - trapz(A, t_0..t_k)
    with X = eps^ell sum Phi over distinct tuples and A the hierarchy rate.
    The returned stderr combines the realization-level spread (which also
    carries the omega and tuple sampling noise) with a Richardson estimate
    of the trapezoid error.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    fn = with_arity(testfn, ell)
    samples = ens.config.omega_samples if omega_samples is None else int(omega_samples)
    key = ("bbgky", ell, fn.id, samples)
    if key in ens._cache:
        return ens._cache[key]
    cfg = ens.config
    seed = ens._cache.get("seed", cfg.seed)
    T = len(ens.times)
    X = np.empty((ens.M, T))
    A = np.empty((ens.M, T))
    for k in range(T):
        X[:, k] = _per_realization(ens, k, fn, ell)
    for r in range(ens.M):
        rng = stream(seed, r, ESTIMATOR_STREAM)
        for k in range(T):
            A[r, k] = hierarchy_rate(ens.velocities(r, k), fn, cfg.kernel, cfg.alpha, ens.eps, samples, rng)
    res = X - X[:, :1] - _cumtrapz(A, ens.times)
    mean = res.mean(axis=0)
    if ens.M > 1:
        stat = res.std(axis=0, ddof=1) / math.sqrt(ens.M)
    else:
        stat = np.full(T, np.nan)
    quad = _quadrature_error(A.mean(axis=0), ens.times)
    out = {
        "times": ens.times.copy(),
        "testfn_id": fn.id,
        "residual": mean,
        "stat_stderr": stat,
        "quad_error": quad,
        "stderr": np.sqrt(stat**2 + quad**2),
    }
    ens._cache[key] = out
    return out


def bbgky_residual(ens: EnsembleResult, ell: int, testfn, t: float, omega_samples: int | None = None) -> Estimate:
    k = ens.snapshot_index(t)
    curve = bbgky_curve(ens, ell, testfn, omega_samples)
    se = float(curve["stderr"][k])
    return Estimate(
        float(curve["residual"][k]),
        None if math.isnan(se) else se,
        {"stat_stderr": float(curve["stat_stderr"][k]), "quad_error": float(curve["quad_error"][k])},
    )


@dataclass
class AprioriCheck:
    ell: int
    times: np.ndarray
    rho: np.ndarray
    rho_stderr: np.ndarray
    energy: np.ndarray
    energy_stderr: np.ndarray
    rho_bound: float
    energy_bound: float

    def violations(self, n_se: float = 2.0) -> int:
        bad = self.rho > self.rho_bound + n_se * np.nan_to_num(self.rho_stderr)
        bad |= self.energy > self.energy_bound + n_se * np.nan_to_num(self.energy_stderr)
        return int(bad.sum())


def apriori_check(ens: EnsembleResult, ell: int, E0: float | None = None) -> AprioriCheck:
    """Mass rho_ell = <f_ell^eps, 1> and energy E_ell = <f_ell^eps, |v_1|^2> at every snapshot,
    with the bounds (N0 eps)^ell and (N0 eps)^ell E0."""
    cfg = ens.config
    E0 = cfg.E0 if E0 is None else E0
    T = len(ens.times)
    rho, rho_se, en, en_se = (np.empty(T) for _ in range(4))
    for k, t in enumerate(ens.times):
        c = estimate_correlation(ens, ell, Constant(1.0), t)
        e = estimate_correlation(ens, ell, TruncatedEnergy(), t)
        rho[k], rho_se[k] = c.value, np.nan if c.stderr is None else c.stderr
        en[k], en_se[k] = e.value, np.nan if e.stderr is None else e.stderr
    scale = (cfg.N0 * ens.eps) ** ell
    return AprioriCheck(ell, ens.times.copy(), rho, rho_se, en, en_se, scale, scale * E0)
