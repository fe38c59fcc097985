"""Fixed-schema CSV and JSON artifacts.

Floats are written with 17 significant digits so that a rerun with the same
(config, seed) reproduces every file byte for byte.  A missing value (for
instance a standard error of a one-realization ensemble) is an empty field.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError
from .ensemble import EnsembleResult, bbgky_curve, chaos_defect, estimate_correlation, mean_stderr
from .kernels import MAXWELL
from .limits import death_chain_evolve, maxwell_moment_ode
from .selfsim import conserved_check, frame_curve
from .testfns import Constant, TruncatedEnergy, with_arity

MOMENTS_COLUMNS = ("t", "N_mean", "N_stderr", "E_mean", "E_stderr", "px", "py", "pz")
CORRELATION_COLUMNS = ("t", "ell", "testfn_id", "value", "stderr")
RESIDUAL_COLUMNS = ("t", "ell", "testfn_id", "residual", "stderr")
SELFSIM_COLUMNS = ("t", "tau", "n_f", "ux", "uy", "uz", "T_f",
                   "dev_mass", "dev_px", "dev_py", "dev_pz", "dev_energy")
SELFSIM_SPLIT_COLUMNS = ("t",) + tuple(f"dev_{n}" for n in ("mass", "px", "py", "pz", "energy")) \
    + tuple(f"stderr_{n}" for n in ("mass", "px", "py", "pz", "energy"))
SWEEP_COLUMNS = ("N0", "t", "observable_id", "value", "stderr", "oracle_value", "abs_error")
ORACLE_MOMENT_COLUMNS = ("t", "n", "E")
ORACLE_DEATHCHAIN_COLUMNS = ("t", "N", "p")

RUN_FILES = ("moments.csv", "correlations.csv", "residuals.csv", "selfsim.csv")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


def write_csv(path, columns, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"{path.name}: row of length {len(row)} for {len(columns)} columns")
            w.writerow([fmt(x) for x in row])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def prepare_output_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".kal_write_probe"
    probe.write_text("")
    probe.unlink()
    return path


def moments_rows(ens: EnsembleResult):
    for k, t in enumerate(ens.times):
        n, n_se = mean_stderr(ens.N[:, k])
        e, e_se = mean_stderr(ens.energy[:, k])
        p = ens.momentum[:, k].mean(axis=0)
        yield (t, n, n_se, e, e_se, p[0], p[1], p[2])


def correlation_rows(ens: EnsembleResult):
    cfg = ens.config
    for k, t in enumerate(ens.times):
        for ell in cfg.correlation_ells:
            for fn in cfg.observables:
                c = estimate_correlation(ens, ell, fn, t)
                yield (t, ell, c.testfn_id, c.value, c.stderr)


def residual_rows(ens: EnsembleResult):
    cfg = ens.config
    curves = [(ell, bbgky_curve(ens, ell, fn)) for ell in cfg.residual_ells for fn in cfg.observables]
    for k, t in enumerate(ens.times):
        for ell, cur in curves:
            yield (t, ell, cur["testfn_id"], cur["residual"][k], cur["stderr"][k])


def selfsim_rows(ens: EnsembleResult):
    frames = frame_curve(ens)
    rows = conserved_check(ens, ens.times, "same")
    for fr, row in zip(frames, rows):
        d = row.deviation
        yield (fr.t, fr.tau, fr.n_f, *fr.u_f, fr.T_f, *d)


def selfsim_split_rows(ens: EnsembleResult):
    for row in conserved_check(ens, ens.times, "split"):
        yield (row.t, *row.deviation, *row.stderr)


def run_metadata(ens: EnsembleResult, extra: dict | None = None) -> dict:
    cfg = ens.config
    meta = {
        "code": {"package": "kal", "version": __version__},
        "seed": ens._cache.get("seed", cfg.seed),
        "config": cfg.to_dict(),
        "M": ens.M,
        "snapshot_times": [fmt(t) for t in ens.times],
        "event_counts": dict(ens.counts),
        "warnings": list(ens.warnings),
        "sidecar": None if ens.store is None or ens.store.spilled == 0 else ens.store.sidecar_path.name,
        "columns": {
            "moments.csv": list(MOMENTS_COLUMNS),
            "correlations.csv": list(CORRELATION_COLUMNS),
            "residuals.csv": list(RESIDUAL_COLUMNS),
            "selfsim.csv": list(SELFSIM_COLUMNS),
        },
    }
    if extra:
        meta.update(extra)
    return meta


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_run_outputs(ens: EnsembleResult, out_dir) -> list[Path]:
    """moments, correlations, residuals, selfsim CSVs plus meta.json."""
    out = prepare_output_dir(out_dir)
    written = [
        write_csv(out / "moments.csv", MOMENTS_COLUMNS, moments_rows(ens)),
        write_csv(out / "correlations.csv", CORRELATION_COLUMNS, correlation_rows(ens)),
        write_csv(out / "residuals.csv", RESIDUAL_COLUMNS, residual_rows(ens)),
        write_csv(out / "selfsim.csv", SELFSIM_COLUMNS, selfsim_rows(ens)),
    ]
    if ens.M >= 4:
        written.append(write_csv(out / "selfsim_split.csv", SELFSIM_SPLIT_COLUMNS, selfsim_split_rows(ens)))
    meta = run_metadata(ens)
    if meta["sidecar"] is None:
        meta.pop("sidecar")
    write_json(out / "meta.json", meta)
    written.append(out / "meta.json")
    return written


def limit_density(cfg: RunConfig) -> tuple[float, float]:
    """(n0, E0) of the limit equation: n0 = N0 / Lambda, energy density n0 * int |v|^2 f0."""
    n0 = cfg.N0 / cfg.lam
    return n0, n0 * cfg.E0


def moment_oracle(cfg: RunConfig, t_grid):
    n0, E0 = limit_density(cfg)
    return maxwell_moment_ode(n0, E0, cfg.alpha, t_grid)


def write_oracles(cfg: RunConfig, out_dir) -> list[Path]:
    """Maxwell moment curves and the particle-number law on the snapshot grid."""
    if cfg.kernel.family != MAXWELL:
        raise ConfigError("kernel.family", "closed-form oracles exist only for the maxwell kernel")
    out = prepare_output_dir(out_dir)
    t = cfg.snapshot_times
    curve = moment_oracle(cfg, t)
    chain = death_chain_evolve(cfg.N0, cfg.alpha, cfg.lam, t)
    rows = [(tt, chain.states[j], chain.p[k, j]) for k, tt in enumerate(t) for j in range(len(chain.states))]
    return [
        write_csv(out / "oracle_moments.csv", ORACLE_MOMENT_COLUMNS, zip(t, curve.n, curve.E)),
        write_csv(out / "oracle_deathchain.csv", ORACLE_DEATHCHAIN_COLUMNS, rows),
    ]


def _analytic_oracle(cfg: RunConfig, fn, t_grid):
    """Limit value of <f_1, fn> when a closed form exists (Maxwell moments), else None."""
    if cfg.kernel.family != MAXWELL:
        return None
    curve = moment_oracle(cfg, t_grid)
    if isinstance(fn, Constant):
        return fn.value * curve.n
    if isinstance(fn, TruncatedEnergy) and math.isinf(fn.r):
        return curve.E
    return None


def sweep_rows(results: dict, oracle_source: dict):
    """Rows of sweep.csv from {N0: EnsembleResult}.

    Observables with a closed-form limit are compared against it.  Others
    are compared against the largest N0 in the sweep (self-convergence);
    that reference run itself carries no oracle.  Chaos defects of bounded
    unary observables are compared against zero.
    """
    n0s = sorted(results)
    ref = results[n0s[-1]]
    rows = []
    for N0 in n0s:
        ens = results[N0]
        cfg = ens.config
        for fn in cfg.observables:
            fn1 = with_arity(fn, 1)
            exact = _analytic_oracle(cfg, fn, ens.times)
            oracle_source.setdefault(fn1.id, "closed-form" if exact is not None else f"self-convergence at N0={n0s[-1]}")
            for k, t in enumerate(ens.times):
                c = estimate_correlation(ens, 1, fn, t)
                if exact is not None:
                    oracle = float(exact[k])
                elif N0 != n0s[-1]:
                    oracle = estimate_correlation(ref, 1, fn, t).value
                else:
                    oracle = None
                err = None if oracle is None else abs(c.value - oracle)
                rows.append((N0, t, c.testfn_id, c.value, c.stderr, oracle, err))
        for fn in cfg.observables:
            if isinstance(fn, TruncatedEnergy) or fn.sup_norm == 0:
                continue
            oid = f"defect[{fn.id}]"
            oracle_source.setdefault(oid, "zero (propagation of chaos)")
            for t in ens.times:
                d = chaos_defect(ens, fn, fn, t)
                rows.append((N0, t, oid, d.value, d.stderr, 0.0, d.value))
    return rows


def write_sweep_outputs(results: dict, base: RunConfig, out_dir) -> list[Path]:
    out = prepare_output_dir(out_dir)
    source: dict = {}
    path = write_csv(out / "sweep.csv", SWEEP_COLUMNS, sweep_rows(results, source))
    meta = {
        "code": {"package": "kal", "version": __version__},
        "seed": base.seed,
        "config": base.to_dict(),
        "N0_list": sorted(results),
        "oracle_source": source,
        "warnings": sorted({w for ens in results.values() for w in ens.warnings}),
        "columns": {"sweep.csv": list(SWEEP_COLUMNS)},
    }
    write_json(out / "meta.json", meta)
    return [path, out / "meta.json"]
