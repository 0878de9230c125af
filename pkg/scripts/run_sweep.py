#!/usr/bin/env python3
"""Run the full verification sweep on both backends and write reports.

Usage:
    python scripts/run_sweep.py [--order N] [--out DIR]

Writes exact.json and numeric.json into DIR (default: ./reports) and
prints a one-line summary per backend plus the slowest records.
"""

import argparse
import collections
import pathlib
import sys
import time

from qsv.exact import DEFAULT_ORDER
from qsv.verifier import (
    default_catalog_path,
    emit_report,
    load_catalog_file,
    verify_all,
)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--order", type=int, default=DEFAULT_ORDER)
    parser.add_argument("--out", default="reports")
    parser.add_argument("--catalog", default=default_catalog_path())
    args = parser.parse_args()

    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_catalog_file(args.catalog)
    print(f"{len(records)} records loaded from {args.catalog}")

    failures = 0
    for backend in ("exact", "numeric"):
        t0 = time.time()
        reports = verify_all(records, backend=backend, order=args.order)
        wall = time.time() - t0
        passed = sum(1 for r in reports if r.status == "pass")
        mismatched = sum(1 for r in reports if r.status == "mismatch")
        errored = sum(1 for r in reports if r.status == "error")
        failures += mismatched
        path = out_dir / f"{backend}.json"
        path.write_text(emit_report(reports))
        print(f"[{backend}] {len(reports)} checks: {passed} pass, "
              f"{mismatched} mismatch, {errored} error in {wall:.1f}s -> {path}")
        times = collections.Counter()
        for r in reports:
            times[r.id] += r.wall_ms
        slowest = ", ".join(f"{rid} ({ms} ms)" for rid, ms in times.most_common(5))
        print(f"  slowest: {slowest}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
