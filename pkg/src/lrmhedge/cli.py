"""Command line entry point: ``lrmhedge {run,validate,oracle-check} CONFIG``.

Exit codes: 0 success, 2 invalid config, 3 filter-oracle check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ValidationError
from .harness import FILTER_TV_LIMIT, ORACLE_COLUMNS, emit_reports, filter_oracle_tv, load_config, run_ensemble

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ORACLE = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrmhedge", description="Hedging simulations under a hidden mortality state.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "simulate the ensemble and write reports"),
                       ("validate", "check a config and print its normalized form"),
                       ("oracle-check", "compare the filter with the discrete oracle")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="path to a JSON scenario config")
        s.add_argument("--paths", type=int, default=None, metavar="N", help="override n_paths")
        s.add_argument("--seed", type=int, default=None, metavar="K", help="override seed")
        s.add_argument("--out", default=None, metavar="DIR", help="override the output directory")
        s.add_argument("--overwrite", action="store_true", help="replace files in an existing output directory")
    return p


def _oracle_check(cfg, n: int, out: str | None, overwrite: bool) -> int:
    rows = []
    for i in range(n):
        nd, tv = filter_oracle_tv(cfg, i)
        rows.append((i, nd, tv))
    worst = max(tv for _, _, tv in rows)
    failed = [i for i, _, tv in rows if tv >= FILTER_TV_LIMIT]
    if out is not None:
        d = Path(out)
        target = d / "filter_oracle.csv"
        if target.exists() and not overwrite:
            raise FileExistsError(f"{target} exists; pass --overwrite to replace it")
        d.mkdir(parents=True, exist_ok=True)
        with open(target, "w") as fh:
            fh.write(",".join(ORACLE_COLUMNS) + "\n")
            for i, nd, tv in rows:
                fh.write(f"{i},{nd},{tv!r}\n")
    status = "PASS" if not failed else "FAIL"
    print(f"{status} filter-oracle: {n} histories, max TV {worst:.3e} (limit {FILTER_TV_LIMIT:g}), "
          f"{len(failed)} over limit")
    return EXIT_OK if not failed else EXIT_ORACLE


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(Path(args.config))
        cfg = cfg.with_overrides(args.paths, args.seed, args.out)
    except (ValidationError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.command == "validate":
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    try:
        if args.command == "oracle-check":
            n = args.paths if args.paths is not None else min(cfg.n_paths, 100)
            return _oracle_check(cfg, n, args.out, args.overwrite)
        summary = run_ensemble(cfg)
        emit_reports(summary, cfg.outputs, overwrite=args.overwrite)
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary.stats, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
