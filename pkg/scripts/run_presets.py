"""Run every bundled preset through the CLI and collect outputs under one directory.

usage: python3 scripts/run_presets.py [OUTDIR]   (default: runs/)
"""
import json
import pathlib
import sys
import time

from halfheat.cli import PRESETS, load_preset, run


def main(argv):
    root = pathlib.Path(argv[1] if len(argv) > 1 else "runs")
    codes = {}
    for name in PRESETS:
        cmd = load_preset(name)["command"]
        out = root / name
        argv_ = [cmd, "--preset", name, "--out", str(out)]
        if cmd == "sweep":
            argv_.append("--svg")
        t0 = time.perf_counter()
        print(f"== {name} ({cmd})", flush=True)
        codes[name] = run(argv_)
        print(f"== {name}: exit {codes[name]} in {time.perf_counter() - t0:.1f} s", flush=True)
    (root / "summary.json").write_text(json.dumps(codes, indent=2) + "\n")
    return max(codes.values())


if __name__ == "__main__":
    sys.exit(main(sys.argv))
