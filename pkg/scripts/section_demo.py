#!/usr/bin/env python3
"""Demonstrate series sectioning: extract the even part of the triangular
theta series three ways and show they agree.

    python scripts/section_demo.py [--order N]

Routes compared:
  1. coefficient filter on the sum-form series,
  2. the averaged product form ((q^2;q^2)/(q;q^2) at q and at -q)/2,
  3. the catalog record whose left side is the sectioned single sum.
"""

import argparse

from qsv.engine import ExactEnv, eval_exact
from qsv.exact import series_add, series_scale, series_section
from qsv.qkernel import ThetaKind, theta_series
from qsv.verifier import default_catalog_path, load_catalog_file


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--order", type=int, default=64)
    args = parser.parse_args()
    n = args.order

    psi = theta_series(ThetaKind.PSI, n)
    route1 = series_section(psi, 2, 0)

    records = {r.id: r for r in load_catalog_file(default_catalog_path())}
    record = records["gb-1.6.5d"]
    env = ExactEnv(order=n)
    route2 = eval_exact(record.rhs, env)
    route3 = eval_exact(record.lhs, env)

    from qsv.exact import series_subs_neg_q

    route4 = series_scale(series_add(psi, series_subs_neg_q(psi)), "1/2")

    print(f"order {n}")
    print("coefficient filter == averaged products:", route1 == route2)
    print("coefficient filter == sectioned sum:    ", route1 == route3)
    print("coefficient filter == (f(q)+f(-q))/2:   ", route1 == route4)
    nonzero = [(i, c) for i, c in enumerate(route1.coeffs) if c][:8]
    print("leading even-part terms:", " + ".join(f"q^{i}" for i, _ in nonzero))


if __name__ == "__main__":
    main()
