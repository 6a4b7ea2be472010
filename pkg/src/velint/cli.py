"""``velint run <config.json>`` and ``velint list``.

Exit codes: 0 when every expectation holds, 1 when a study fails or misses
an expectation, 2 for unreadable or invalid configs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import STUDY_KINDS, ConfigError, load_config
from .discrete_lagrangian import FAMILIES
from .systems import BUILTIN_SYSTEMS

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
MANIFEST_VERSION = 1

log = logging.getLogger("velint")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def catalog() -> dict:
    return {
        "systems": BUILTIN_SYSTEMS,
        "families": {f: ({"a": "float (default 0)"} if f == "left_rectangle" else
                         {"tol": "float > 0 (default 1e-10)"} if f == "exact" else {})
                     for f in FAMILIES if f != "user"},
        "discretizations": {"linear": {"beta": "float in [0, 1] (default 0)"},
                            "exact": {"beta": "float in [0, 1] (default 0)",
                                      "tol": "float > 0 (default 1e-10)"}},
        "study_kinds": list(STUDY_KINDS),
    }


def cmd_list(args) -> int:
    cat = catalog()
    if args.json:
        print(json.dumps(cat, indent=2))
        return EXIT_OK
    for section in ("systems", "families", "discretizations"):
        print(f"{section}:")
        for name, params in cat[section].items():
            extra = ", ".join(f"{k}: {v}" for k, v in params.items())
            print(f"  {name}" + (f"  ({extra})" if extra else ""))
    print("study kinds:\n  " + ", ".join(cat["study_kinds"]))
    return EXIT_OK


def cmd_run(args) -> int:
    from .studies import run_study

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    parallel = not args.sequential
    started = time.perf_counter()
    summaries, all_ok = [], True
    for st in cfg["studies"]:
        name = st["name"]
        t0 = time.perf_counter()
        try:
            result, verdicts = run_study(st, parallel=parallel)
        except Exception as exc:  # noqa: BLE001 - any study crash is a study failure
            log.debug("study %s failed", name, exc_info=True)
            print(f"[FAIL] {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
            if args.verbose:
                traceback.print_exc()
            summaries.append({"name": name, "kind": st["kind"], "passed": False,
                              "error": f"{type(exc).__name__}: {exc}"})
            all_ok = False
            continue
        write_csv(out / f"{name}.csv", result.header, result.rows)
        for suffix, (header, rows) in result.extra_tables.items():
            write_csv(out / f"{name}-{suffix}.csv", header, rows)
        passed = all(v.passed for v in verdicts)
        all_ok &= passed
        summary = {"name": name, "kind": st["kind"], "passed": passed,
                   "metrics": result.metrics, "verdicts": [v.to_json() for v in verdicts],
                   "seconds": time.perf_counter() - t0}
        (out / f"{name}.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
        summaries.append(summary)
        for v in verdicts:
            print(f"[{'PASS' if v.passed else 'FAIL'}] {name}: {v.metric} = {v.value!r} "
                  f"against {json.dumps(v.constraint)}")
        if not verdicts:
            print(f"[DONE] {name}: no expectations")
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "velint", "tool_version": __version__,
        "config": cfg,
        "sequential": not parallel,
        "wall_clock_seconds": time.perf_counter() - started,
        "studies": [{k: s[k] for k in ("name", "kind", "passed", "verdicts", "error") if k in s}
                    for s in summaries],
        "passed": all_ok,
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")
    return EXIT_OK if all_ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="velint", description="Discrete Lagrangian integrator studies")
    p.add_argument("--version", action="version", version=f"velint {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the studies of a JSON config (or a previous manifest)")
    r.add_argument("config")
    r.add_argument("--sequential", action="store_true", help="evaluate study points serially")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="print built-in systems, families and discretizations")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
