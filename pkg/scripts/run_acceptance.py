"""Run every shipped acceptance config through the CLI and summarize the verdicts."""
import argparse
import json
import sys
from pathlib import Path

from velint.cli import main as velint_main

ROOT = Path(__file__).resolve().parents[1]


def run(out_dir: Path, sequential: bool) -> int:
    status = 0
    for cfg in sorted((ROOT / "configs" / "acceptance").glob("*.json")):
        out = out_dir / cfg.stem
        argv = ["run", str(cfg), "--out", str(out)] + (["--sequential"] if sequential else [])
        code = velint_main(argv)
        manifest = json.loads((out / "manifest.json").read_text()) if (out / "manifest.json").exists() else {}
        secs = manifest.get("wall_clock_seconds", float("nan"))
        print(f"{cfg.stem:32s} exit {code}  {secs:6.1f} s")
        status = max(status, code)
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="velint-out/acceptance")
    ap.add_argument("--sequential", action="store_true")
    args = ap.parse_args()
    sys.exit(run(Path(args.out), args.sequential))
