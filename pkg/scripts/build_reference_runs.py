#!/usr/bin/env python3
"""Build (or refresh) the cached reference trajectories used by the
acceptance suite.

Each run lands in tests/_cache keyed by its configuration and the source
digest, so a stale cache is rebuilt automatically and a warm one makes
this script a no-op.  Run it before `pytest -m acceptance` on a fresh
checkout; the full set takes a few hours single-threaded.
"""

import argparse
import sys
import time
from pathlib import Path

from qmaser import acceptance


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cache", default=None,
                    help="cache directory (default: tests/_cache)")
    ap.add_argument("--force", action="store_true",
                    help="recompute even if a cached copy matches")
    ap.add_argument("--only", nargs="*", metavar="NAME",
                    help=f"subset of runs, from: {', '.join(acceptance.RUN_ORDER)}")
    args = ap.parse_args()

    cache = Path(args.cache) if args.cache else \
        Path(__file__).resolve().parent.parent / "tests" / "_cache"
    cache.mkdir(parents=True, exist_ok=True)

    names = args.only if args.only else list(acceptance.RUN_ORDER)
    unknown = [n for n in names if n not in acceptance.RUN_ORDER]
    if unknown:
        ap.error(f"unknown run names: {unknown}")

    t0 = time.time()
    for name in names:
        run = acceptance.execute_reference_run(name, cache, force=args.force,
                                               log=print)
        print(f"[{time.time() - t0:8.1f}s] {name}: t_final={run.final_time:.6g} "
              f"n_fock={run.params.n_fock}->{run.n_fock_history[-1]} "
              f"trace_err={max(run.trace_err):.2e} "
              f"wall={run.wall_time_s:.1f}s", flush=True)
    print(f"all requested runs cached under {cache} "
          f"({time.time() - t0:.1f}s total)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
