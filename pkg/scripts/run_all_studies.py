"""Run every config in configs/ through the pgd-strip harness.

    python3 scripts/run_all_studies.py [--only locking,dump_modes] [--parallel]
"""

import argparse
import sys
import time
from pathlib import Path

from pgd_strip.cli import main, parse_config

ROOT = Path(__file__).resolve().parent.parent


def run(config: Path, parallel: bool) -> int:
    study = parse_config(config.read_text(encoding="utf-8")).study.value
    argv = [study, "--config", str(config)]
    if parallel:
        argv.append("--parallel")
    start = time.perf_counter()
    code = main(argv)
    print(f"{config.name}: exit {code} in {time.perf_counter() - start:.1f} s")
    return code


def cli():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--configs", type=Path, default=ROOT / "configs")
    parser.add_argument("--only", help="comma-separated config stems")
    parser.add_argument("--parallel", action="store_true")
    args = parser.parse_args()
    configs = sorted(args.configs.glob("*.cfg"))
    if args.only:
        wanted = set(args.only.split(","))
        configs = [c for c in configs if c.stem in wanted]
    codes = [run(c, args.parallel) for c in configs]
    # 2 only flags rows that did not converge; 1 is a configuration or I/O problem
    return 1 if 1 in codes else max(codes, default=0)


if __name__ == "__main__":
    sys.exit(cli())
