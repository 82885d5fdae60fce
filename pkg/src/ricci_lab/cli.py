"""Command line: ``lab run <config>``, ``lab report <dir>``, ``lab gen <kind> k=v ...``.

Exit codes: 0 pass, 1 assertion failure, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def resolve_threads(flag: int | None) -> int:
    env = os.environ.get("LAB_THREADS")
    if env:
        return max(1, int(env))
    if flag:
        return max(1, flag)
    return os.cpu_count() or 1


def _apply_threads(n: int) -> None:
    # must run before numpy/numba are imported to take effect
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    from .errors import ConfigError

    pairs = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(tok, "expected --key value")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise ConfigError(key, "missing value")
        pairs.append((key, val))
    return pairs


def cmd_run(args, extra) -> int:
    from . import experiments
    from .config import load_config

    overrides = _split_overrides(extra)
    if args.threads is not None:
        overrides.append(("threads", str(args.threads)))
    cfg = load_config(args.config, overrides)
    res = experiments.run(cfg)
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} ({c.bound})")
    print(f"{cfg.experiment}: {'PASS' if res.passed else 'FAIL'}  artifacts in {cfg.out_dir()}")
    return EXIT_PASS if res.passed else EXIT_FAIL


def summarize(directory) -> tuple[list[str], bool]:
    """Human-readable lines for a completed run directory and its overall verdict."""
    from pathlib import Path

    from .errors import MissingArtifacts
    from .io import read_json

    path = Path(directory) / "summary.json"
    if not path.is_file():
        raise MissingArtifacts(f"no summary.json in {directory}")
    data = read_json(path)
    lines = [f"experiment {data['experiment']}: {'PASS' if data['passed'] else 'FAIL'}"]
    for c in data["checks"]:
        lines.append(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']!r}  tolerance {c['bound']}")
    lines.append("  fitted constants:")
    for k, v in data["summary"].items():
        lines.append(f"    {k} = {v!r}")
    return lines, bool(data["passed"])


def cmd_report(args, extra) -> int:
    lines, _ = summarize(args.directory)
    print("\n".join(lines))
    return EXIT_PASS


def cmd_gen(args, extra) -> int:
    from .errors import ConfigError
    from .field import GridSpec, bump_background, flat_background
    from .initial_data import describe, generate
    from .io import write_metric

    params = {}
    for tok in args.params + extra:
        if "=" not in tok:
            raise ConfigError(tok, "generator parameters are key=value")
        k, v = tok.split("=", 1)
        try:
            params[k.lstrip("-")] = float(v)
        except ValueError:
            raise ConfigError(k, f"expected a number, got {v!r}") from None
    try:
        grid = GridSpec(args.dim, args.points_per_axis, args.side_length)
    except ValueError as exc:
        raise ConfigError("points_per_axis", str(exc)) from None
    bg = bump_background(grid) if args.background == "bump" else flat_background(grid)
    g = generate(args.kind, grid, bg, **params)
    out = args.out or f"{args.kind}.tfs"
    meta = describe(g, bg)
    write_metric(out, g, {"generator": args.kind, "params": params, "a": meta["a"]})
    print(f"wrote {out}  a={meta['a']:.6g}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Ricci-DeTurck flow lab")
    p.add_argument("--threads", type=int, default=None, help="kernel threads (LAB_THREADS overrides)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a key=value config file")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="summarize a completed run directory")
    rep.add_argument("directory")
    rep.set_defaults(func=cmd_report)
    g = sub.add_parser("gen", help="write initial data as a .tfs snapshot")
    g.add_argument("kind")
    g.add_argument("params", nargs="*", help="generator parameters as key=value")
    g.add_argument("--out", default=None)
    g.add_argument("--dim", type=int, default=4)
    g.add_argument("--points-per-axis", type=int, default=16)
    g.add_argument("--side-length", type=float, default=1.0)
    g.add_argument("--background", choices=("flat", "bump"), default="flat")
    g.set_defaults(func=cmd_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.command == "report" and extra:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    _apply_threads(resolve_threads(args.threads))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from .errors import ConfigError, LabError

    try:
        return args.func(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
