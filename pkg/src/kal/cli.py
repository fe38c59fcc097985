"""Command-line driver: ``kal run | sweep | verify | oracle | plotdata``.

Exit codes: 0 ok, 1 configuration error, 2 verification failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_IO = 3


def _output_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(cfg.output_dir)


def _fresh_sidecar(out: Path) -> Path:
    side = out / "snapshots.bin"
    if side.exists():
        side.unlink()
    return side


def cmd_run(args) -> int:
    from .ensemble import run_ensemble
    from .io import prepare_output_dir, write_run_outputs

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = prepare_output_dir(_output_dir(args, cfg))
    ens = run_ensemble(cfg, sidecar_path=_fresh_sidecar(out))
    write_run_outputs(ens, out)
    print(f"wrote {out} (M={ens.M}, seed={cfg.seed})")
    for w in ens.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def _parse_n0_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("--n0", f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise ConfigError("--n0", "empty list")
    for v in vals:
        if v <= 0 or v % 2:
            raise ConfigError("--n0", f"entries must be even positive integers, got {v}")
    return vals


def cmd_sweep(args) -> int:
    from .ensemble import run_ensemble
    from .io import prepare_output_dir, write_sweep_outputs

    base = load_config(args.config)
    n0s = _parse_n0_list(args.n0)
    out = prepare_output_dir(_output_dir(args, base))
    results = {}
    for N0 in n0s:
        cfg = base.replace(N0=N0, lam=float(N0))
        results[N0] = run_ensemble(cfg)
        print(f"N0={N0}: {results[N0].M} realizations")
    write_sweep_outputs(results, base, out)
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import DEFAULT_SEED, Suite
    from .io import prepare_output_dir, write_json

    seed = DEFAULT_SEED
    out = None
    if args.config:
        cfg = load_config(args.config)
        seed = cfg.seed
        out = Path(cfg.output_dir)
    if args.seed is not None:
        seed = args.seed
    if args.out:
        out = Path(args.out)
    only = None
    if args.only:
        try:
            only = sorted({int(x) for x in args.only.split(",")})
        except ValueError:
            raise ConfigError("--only", "expected comma-separated criterion numbers")
        if any(n < 1 or n > 12 for n in only):
            raise ConfigError("--only", "criteria are numbered 1..12")
    if out is not None:
        prepare_output_dir(out)
    suite = Suite(seed=seed, workdir=out)
    try:
        results = suite.run(only=only, report=lambda r: print(r.line(), flush=True))
    finally:
        if out is None:
            suite.close()
    report = {"seed": seed, "passed": all(r.passed for r in results),
              "criteria": [r.to_dict() for r in results]}
    if out is not None:
        write_json(out / "verify.json", report)
    if args.json:
        print(json.dumps(report, indent=2))
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_oracle(args) -> int:
    from .io import write_oracles

    cfg = load_config(args.config)
    out = _output_dir(args, cfg)
    for p in write_oracles(cfg, out):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    from .plotting import plotdata

    d = Path(args.dir)
    if not d.is_dir():
        raise FileNotFoundError(f"no such directory: {d}")
    for p in plotdata(d):
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate an ensemble and write CSV artifacts")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config output_dir)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the config at several N0 with Lambda = N0")
    s.add_argument("config")
    s.add_argument("--n0", default="50,100,200,400", help="comma-separated even N0 values")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the acceptance criteria")
    v.add_argument("config", nargs="?")
    v.add_argument("--only", help="comma-separated criterion numbers")
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="directory for verify.json and run artifacts")
    v.add_argument("--json", action="store_true", help="print the machine-readable report")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="write Maxwell moment and death-chain reference curves")
    o.add_argument("config")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    d = sub.add_parser("plotdata", help="tidy long-format table and figures from a run directory")
    d.add_argument("dir")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
