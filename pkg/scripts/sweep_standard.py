"""Standard moduli sweep: both families, energy/degree/decay/divisor per point.

    python scripts/sweep_standard.py --grid 512x32 --threads 1 --out out/sweep
"""

import argparse
from pathlib import Path

from esvortex.cli import main


def run(grid: str, threads: int, out: Path) -> int:
    common = ["--grid", grid, "--threads", str(threads)]
    code = main(["sweep", "family=divisor_free", "E=0.25..1.75 step 0.25",
                 "--out", str(out / "divisor_free")] + common)
    code |= main(["sweep", "family=divisor_at", "E=1..1.75 step 0.25", "z0=0, 1, 2+i",
                  "--out", str(out / "divisor_at")] + common)
    return code


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="512x32")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/sweep"))
    args = ap.parse_args()
    raise SystemExit(run(args.grid, args.threads, args.out))
