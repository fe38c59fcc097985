"""The acceptance criteria, each as a function returning measured values.

Criteria 3, 4, 6, 7, 11 and 12 share one Maxwell ensemble (N0 = Lambda =
200, alpha = 1/2, M = 1000, standard Maxwellian start, snapshots every
1/32 up to t = 2), built once per :class:`Suite`.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .config import RunConfig, stream
from .dynamics import ANNIHILATION, SystemState, elastic_collide, simulate, step_exact, step_majorant
from .ensemble import apriori_check, bbgky_residual, chaos_defect, run_ensemble
from .errors import MajorantViolation
from .io import RUN_FILES, write_run_outputs
from .kernels import CollisionKernel, HARD_SPHERE, hard_sphere, maxwell, sample_omega
from .limits import death_chain_evolve, gamma_norm_check, gamma_of_constant, maxwell_moment_ode
from .selfsim import conserved_check
from .testfns import Constant, Gaussian

DEFAULT_SEED = 20240611

RUN3 = {
    "kernel": {"family": "maxwell"},
    "alpha": 0.5,
    "N0": 200,
    "t_end": 2.0,
    "snapshot_count": 65,
    "M": 1000,
    "init": {"kind": "maxwellian", "T0": 1.0},
    "mode": "exact",
    "observables": [{"kind": "constant", "value": 1.0}, {"kind": "gaussian", "a": 0.5, "c": [0, 0, 0]}],
    "correlation_ells": [1, 2],
    "residual_ells": [1],
}

NAMES = {
    1: "collision-rule exactness",
    2: "pathwise dissipation",
    3: "Maxwell mass law",
    4: "Maxwell energy law",
    5: "death-chain agreement",
    6: "a-priori bounds",
    7: "BBGKY weak identity",
    8: "propagation of chaos trend",
    9: "Gamma-operator bound",
    10: "sampler equivalence",
    11: "self-similar conservation",
    12: "reproducibility",
}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0
    message: str = ""

    @property
    def name(self) -> str:
        return NAMES[self.number]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        brief = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items() if not isinstance(v, (list, dict)))
        tail = f" ({self.message})" if self.message else ""
        return f"criterion {self.number:2d} {status}  {self.name} [{self.seconds:.1f}s] {brief}{tail}"

    def to_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "seconds": round(self.seconds, 3), "measured": _jsonable(self.measured),
                "message": self.message}


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def criterion_1(seed=DEFAULT_SEED, events=1_000_000, collide=elastic_collide, batch=250_000):
    """Conservation of momentum, energy and relative speed over random elastic events."""
    rng = stream(seed, 0, 101)
    kern = maxwell()
    worst = {"momentum": 0.0, "energy": 0.0, "rel_speed": 0.0}
    done = 0
    while done < events:
        n = min(batch, events - done)
        scale = np.exp(rng.uniform(-3.0, 3.0, size=(n, 1)))
        vi = rng.standard_normal((n, 3)) * scale
        vj = rng.standard_normal((n, 3)) * scale
        w = sample_omega(kern, vi - vj, rng)
        pi, pj = collide(vi, vj, w)
        speed = np.maximum(np.linalg.norm(vi, axis=1), np.linalg.norm(vj, axis=1))
        dp = np.linalg.norm((pi + pj) - (vi + vj), axis=1) / speed
        e0 = (vi * vi).sum(1) + (vj * vj).sum(1)
        de = np.abs((pi * pi).sum(1) + (pj * pj).sum(1) - e0) / e0
        g0 = np.linalg.norm(vi - vj, axis=1)
        dg = np.abs(np.linalg.norm(pi - pj, axis=1) - g0) / g0
        worst["momentum"] = max(worst["momentum"], float(dp.max()))
        worst["energy"] = max(worst["energy"], float(de.max()))
        worst["rel_speed"] = max(worst["rel_speed"], float(dg.max()))
        done += n
    passed = worst["momentum"] <= 1e-12 and worst["energy"] <= 1e-10 and worst["rel_speed"] <= 1e-12
    return CriterionResult(1, passed, {"events": events, **worst})


def criterion_2(seed=DEFAULT_SEED, trajectories=1000, N0=100, t_end=2.0):
    """Hard spheres: N and kinetic energy never increase, N keeps its parity."""
    bad = {"n_up": 0, "energy_up": 0, "parity": 0}
    events = 0
    for r in range(trajectories):
        rng = stream(seed, r, 102)
        state = SystemState(rng.standard_normal((N0, 3)), hard_sphere(), N0, 0.5, track_pair_rates=True)
        last = {"n": state.n, "e": state.kinetic_energy()}

        def check(st, ev, last=last):
            e = st.kinetic_energy()
            if st.n > last["n"]:
                bad["n_up"] += 1
            if e > last["e"] * (1 + 1e-12):
                bad["energy_up"] += 1
            if st.n % 2 != N0 % 2:
                bad["parity"] += 1
            last["n"], last["e"] = st.n, e

        traj = simulate(state, [t_end], "exact", rng, record_velocities=False, on_event=check)
        events += sum(traj.counts.values())
    return CriterionResult(2, sum(bad.values()) == 0, {"trajectories": trajectories, "events": events, **bad})


class Suite:
    """Runs criteria, sharing the Maxwell reference ensemble between them."""

    def __init__(self, seed=DEFAULT_SEED, workdir=None, workers=None):
        self.seed = int(seed)
        self.workers = workers
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="kal_verify_")
            workdir = self._tmp.name
        self.workdir = Path(workdir)
        self._run3 = None

    @property
    def run3_config(self) -> RunConfig:
        return RunConfig.from_dict(dict(RUN3, seed=self.seed))

    @property
    def run3(self):
        if self._run3 is None:
            self._run3 = run_ensemble(self.run3_config, workers=self.workers)
        return self._run3

    # -- criteria on the shared ensemble ------------------------------------
    def criterion_3(self):
        ens = self.run3
        oracle = maxwell_moment_ode(1.0, ens.config.E0, 0.5, [0.5, 1.0, 2.0])
        rows, ok = {}, oracle.max_rel_disagreement() < 1e-8
        for t, n in zip([0.5, 1.0, 2.0], oracle.n):
            k = ens.snapshot_index(t)
            x = ens.eps * ens.N[:, k]
            m, se = x.mean(), x.std(ddof=1) / math.sqrt(ens.M)
            z = abs(m - n) / se
            rel = abs(m - n) / n
            ok &= z < 3 and rel <= 0.02
            rows[f"z@{t}"] = z
            rows[f"relerr@{t}"] = rel
        rows["rk4_vs_closed"] = oracle.max_rel_disagreement()
        return CriterionResult(3, bool(ok), rows)

    def criterion_4(self):
        ens = self.run3
        E0 = ens.config.E0
        oracle = maxwell_moment_ode(1.0, E0, 0.5, [0.5, 1.0, 2.0])
        rows, ok = {}, True
        for t, E in zip([0.5, 1.0, 2.0], oracle.E):
            k = ens.snapshot_index(t)
            x = ens.eps * ens.energy[:, k]
            z = abs(x.mean() - E) / (x.std(ddof=1) / math.sqrt(ens.M))
            ok &= z < 3
            rows[f"z@{t}"] = z
        return CriterionResult(4, bool(ok), rows)

    def criterion_6(self):
        ens = self.run3
        rows, total = {}, 0
        for ell in (1, 2, 3):
            chk = apriori_check(ens, ell)
            v = chk.violations(2.0)
            total += v
            rows[f"violations_l{ell}"] = v
            rows[f"max_rho_ratio_l{ell}"] = float(np.max(chk.rho / chk.rho_bound))
            rows[f"max_E_ratio_l{ell}"] = float(np.max(chk.energy / chk.energy_bound))
        return CriterionResult(6, total == 0, rows)

    def criterion_7(self):
        ens = self.run3
        rows, ok = {}, True
        for name, fn in (("const", Constant(1.0)), ("gauss", Gaussian(0.5))):
            for t in (0.5, 1.0):
                est = bbgky_residual(ens, 1, fn, t)
                z = abs(est.value) / est.stderr
                ok &= z < 3
                rows[f"z_{name}@{t}"] = z
        return CriterionResult(7, bool(ok), rows)

    def criterion_11(self):
        ens = self.run3
        same = conserved_check(ens, ens.times, "same")
        worst_same = max(float(np.max(np.abs(r.deviation))) for r in same)
        split = conserved_check(ens, [0.5, 1.0, 2.0], "split")
        worst_z = max(float(np.max(np.abs(r.deviation) / r.stderr)) for r in split)
        ok = worst_same <= 1e-10 and worst_z < 3
        return CriterionResult(11, ok, {"same_sample_max_dev": worst_same, "split_max_z": worst_z})

    def criterion_12(self):
        first = self.workdir / "run3_a"
        second = self.workdir / "run3_b"
        write_run_outputs(self.run3, first)
        rerun = run_ensemble(self.run3_config, workers=2)
        write_run_outputs(rerun, second)
        names = list(RUN_FILES) + ["selfsim_split.csv"]
        same = [n for n in names if filecmp.cmp(first / n, second / n, shallow=False)]
        return CriterionResult(12, len(same) == len(names),
                               {"files": len(names), "identical": len(same), "artifact_dir": str(first)})

    # -- independent criteria -----------------------------------------------
    def criterion_1(self):
        return criterion_1(self.seed)

    def criterion_2(self):
        return criterion_2(self.seed)

    def criterion_5(self, M=10_000):
        cfg = RunConfig.from_dict({"N0": 10, "alpha": 0.5, "t_end": 1.0, "snapshot_count": 2,
                                   "M": M, "seed": self.seed})
        ens = run_ensemble(cfg, workers=self.workers, record_velocities=False)
        chain = death_chain_evolve(10, 0.5, 10.0, [1.0])
        emp = np.array([np.mean(ens.N[:, 1] == N) for N in chain.states])
        tv = 0.5 * float(np.abs(emp - chain.p[0]).sum())
        return CriterionResult(5, tv <= 0.02, {"M": M, "tv": tv})

    def criterion_8(self, n0s=(50, 100, 200, 400), M=1000):
        phi = Gaussian(0.5)
        vals, ses = [], []
        for N0 in n0s:
            cfg = RunConfig.from_dict({"N0": N0, "alpha": 0.5, "t_end": 1.0, "snapshot_count": 2,
                                       "M": M, "seed": self.seed})
            ens = run_ensemble(cfg, workers=self.workers)
            d = chaos_defect(ens, phi, phi, 1.0)
            vals.append(d.value)
            ses.append(d.stderr)
        mono = all(vals[i + 1] <= vals[i] + 2.0 * math.hypot(ses[i], ses[i + 1]) for i in range(len(vals) - 1))
        ratio = vals[-1] / vals[0]
        rows = {f"defect@{n}": v for n, v in zip(n0s, vals)}
        rows.update({f"stderr@{n}": s for n, s in zip(n0s, ses)})
        rows["ratio_last_first"] = ratio
        return CriterionResult(8, bool(mono and ratio < 0.5), rows)

    def criterion_9(self, samples=10_000):
        rng = stream(self.seed, 0, 109)
        kern = maxwell()
        rows, ok = {}, True
        worst_const = 0.0
        for k in (1, 2, 3, 4):
            for alpha in (0.1, 0.5, 0.9):
                rep = gamma_norm_check(k, alpha, kern, samples, rng)
                ok &= rep.passed
                rows[f"max_ratio_k{k}_a{alpha}"] = rep.max_ratio
                g1 = gamma_of_constant(k, alpha, kern, rng=rng)
                worst_const = max(worst_const, abs(g1 + alpha * k))
        ok &= worst_const <= 1e-12
        rows["const_error"] = worst_const
        return CriterionResult(9, bool(ok), rows)

    def criterion_10(self, M=10_000, N0=10, kernel: CollisionKernel | None = None):
        kernel = hard_sphere() if kernel is None else kernel
        times = {"exact": np.empty(M), "majorant": np.empty(M)}
        try:
            for mode, purpose, step in (("exact", 110, step_exact), ("majorant", 111, step_majorant)):
                for r in range(M):
                    rng = stream(self.seed, r, purpose)
                    state = SystemState(rng.standard_normal((N0, 3)), kernel, N0, 0.5,
                                        track_pair_rates=(mode == "exact"))
                    while True:
                        ev = step(state, rng)
                        if ev.kind == ANNIHILATION:
                            times[mode][r] = ev.time
                            break
        except MajorantViolation as exc:
            return CriterionResult(10, False, {"ratio": exc.ratio, "time": exc.time},
                                   message=f"majorant violated: {exc}")
        ks = stats.ks_2samp(times["exact"], times["majorant"])
        return CriterionResult(10, bool(ks.pvalue > 0.01),
                               {"M": M, "ks_stat": float(ks.statistic), "p_value": float(ks.pvalue),
                                "mean_exact": float(times["exact"].mean()),
                                "mean_majorant": float(times["majorant"].mean())})

    def run(self, only=None, report=None) -> list[CriterionResult]:
        numbers = sorted(NAMES) if only is None else sorted(only)
        results = []
        for n in numbers:
            t0 = time.perf_counter()
            try:
                res = getattr(self, f"criterion_{n}")()
            except Exception as exc:  # report and keep going
                res = CriterionResult(n, False, message=f"{type(exc).__name__}: {exc}")
            res.seconds = time.perf_counter() - t0
            results.append(res)
            if report is not None:
                report(res)
        return results

    def close(self):
        if self._tmp is not None:
            self._tmp.cleanup()


def injected_majorant_kernel() -> CollisionKernel:
    """Hard-sphere collision frequency with a growth constant that is too small."""
    return CollisionKernel(HARD_SPHERE, gamma=1.0, c_b=0.25)
