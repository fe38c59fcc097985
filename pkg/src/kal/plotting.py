"""Tidy long-format table and PNG figures for an artifact directory."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import read_csv, write_csv  # noqa: E402

TIDY_COLUMNS = ("source", "series", "x_name", "x", "variable", "value", "stderr")


def _num(s):
    return float(s) if s not in ("", None) else math.nan


def tidy_rows(d: Path):
    """Long-format rows from whichever known CSVs are present in ``d``."""
    rows = []
    if (d / "moments.csv").exists():
        for r in read_csv(d / "moments.csv"):
            t = _num(r["t"])
            rows.append(("moments", "N", "t", t, "N_mean", _num(r["N_mean"]), _num(r["N_stderr"])))
            rows.append(("moments", "E", "t", t, "E_mean", _num(r["E_mean"]), _num(r["E_stderr"])))
            for c in ("px", "py", "pz"):
                rows.append(("moments", c, "t", t, c, _num(r[c]), math.nan))
    if (d / "correlations.csv").exists():
        for r in read_csv(d / "correlations.csv"):
            rows.append(("correlations", f"ell={r['ell']}:{r['testfn_id']}", "t", _num(r["t"]),
                         "value", _num(r["value"]), _num(r["stderr"])))
    if (d / "residuals.csv").exists():
        for r in read_csv(d / "residuals.csv"):
            rows.append(("residuals", f"ell={r['ell']}:{r['testfn_id']}", "t", _num(r["t"]),
                         "residual", _num(r["residual"]), _num(r["stderr"])))
    if (d / "selfsim.csv").exists():
        for r in read_csv(d / "selfsim.csv"):
            t = _num(r["t"])
            for c, v in r.items():
                if c != "t":
                    rows.append(("selfsim", c, "t", t, c, _num(v), math.nan))
    if (d / "sweep.csv").exists():
        for r in read_csv(d / "sweep.csv"):
            series = f"{r['observable_id']}@t={r['t']}"
            n0 = _num(r["N0"])
            rows.append(("sweep", series, "N0", n0, "value", _num(r["value"]), _num(r["stderr"])))
            rows.append(("sweep", series, "N0", n0, "abs_error", _num(r["abs_error"]), _num(r["stderr"])))
    if (d / "oracle_moments.csv").exists():
        for r in read_csv(d / "oracle_moments.csv"):
            t = _num(r["t"])
            rows.append(("oracle_moments", "n", "t", t, "n", _num(r["n"]), math.nan))
            rows.append(("oracle_moments", "E", "t", t, "E", _num(r["E"]), math.nan))
    if (d / "oracle_deathchain.csv").exists():
        for r in read_csv(d / "oracle_deathchain.csv"):
            rows.append(("oracle_deathchain", f"N={r['N']}", "t", _num(r["t"]), "p", _num(r["p"]), math.nan))
    return rows


def _group(rows, source, variable):
    out = defaultdict(lambda: ([], [], []))
    for src, series, _, x, var, val, se in rows:
        if src == source and var == variable:
            xs, ys, es = out[series]
            xs.append(x)
            ys.append(val)
            es.append(0.0 if math.isnan(se) else se)
    return out


def _errorbars(ax, groups, label_prefix=""):
    for series, (x, y, e) in sorted(groups.items()):
        ax.errorbar(x, y, yerr=e, marker=".", ms=3, lw=1, capsize=0, label=label_prefix + series)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plotdata(d) -> list[Path]:
    """Write ``tidy.csv`` and one figure per artifact family found in ``d``."""
    d = Path(d)
    rows = tidy_rows(d)
    if not rows:
        raise FileNotFoundError(f"no known CSV artifacts in {d}")
    written = [write_csv(d / "tidy.csv", TIDY_COLUMNS, rows)]
    sources = {r[0] for r in rows}

    if "moments" in sources:
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for ax, var, name in ((axes[0], "N_mean", "mean N"), (axes[1], "E_mean", "mean sum |v|^2")):
            _errorbars(ax, _group(rows, "moments", var))
            ax.set_xlabel("t")
            ax.set_ylabel(name)
        written.append(_save(fig, d / "moments.png"))

    if "oracle_moments" in sources:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for var in ("n", "E"):
            for series, (x, y, _) in _group(rows, "oracle_moments", var).items():
                ax.plot(x, y, label=series)
        ax.set_xlabel("t")
        ax.legend()
        written.append(_save(fig, d / "oracle_moments.png"))

    for source, var in (("correlations", "value"), ("residuals", "residual")):
        if source in sources:
            fig, ax = plt.subplots(figsize=(6, 4))
            _errorbars(ax, _group(rows, source, var))
            if source == "residuals":
                ax.axhline(0.0, color="k", lw=0.5)
            ax.set_xlabel("t")
            ax.set_ylabel(var)
            ax.legend(fontsize=7)
            written.append(_save(fig, d / f"{source}.png"))

    if "selfsim" in sources:
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for var in ("n_f", "T_f", "tau"):
            for series, (x, y, _) in _group(rows, "selfsim", var).items():
                axes[0].plot(x, y, label=series)
        axes[0].set_xlabel("t")
        axes[0].legend()
        for var in ("dev_mass", "dev_px", "dev_py", "dev_pz", "dev_energy"):
            for series, (x, y, _) in _group(rows, "selfsim", var).items():
                axes[1].plot(x, y, label=series)
        axes[1].set_xlabel("t")
        axes[1].set_ylabel("deviation from (1, 0, 3/2)")
        axes[1].legend(fontsize=7)
        written.append(_save(fig, d / "selfsim.png"))

    if "sweep" in sources:
        fig, ax = plt.subplots(figsize=(6, 4))
        groups = {k: v for k, v in _group(rows, "sweep", "abs_error").items()
                  if not all(math.isnan(y) for y in v[1])}
        for series, (x, y, e) in sorted(groups.items()):
            pts = [(a, b, c) for a, b, c in zip(x, y, e) if not math.isnan(b) and b > 0]
            if pts:
                xs, ys, es = zip(*pts)
                ax.errorbar(xs, ys, yerr=es, marker="o", ms=3, lw=1, label=series)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("N0")
        ax.set_ylabel("|value - oracle|")
        ax.legend(fontsize=6)
        written.append(_save(fig, d / "sweep.png"))

    if "oracle_deathchain" in sources:
        groups = _group(rows, "oracle_deathchain", "p")
        fig, ax = plt.subplots(figsize=(6, 4))
        for series, (x, y, _) in sorted(groups.items(), key=lambda kv: -int(kv[0].split("=")[1])):
            if max(y) > 1e-3:
                ax.plot(x, y, lw=1, label=series)
        ax.set_xlabel("t")
        ax.set_ylabel("P(N)")
        if len(groups) <= 12:
            ax.legend(fontsize=7)
        written.append(_save(fig, d / "oracle_deathchain.png"))
    return written
