import dataclasses
import random

import pytest
from hypothesis import settings

# reproducible property runs: the acceptance gate must be deterministic
settings.register_profile("ci", derandomize=True)
settings.load_profile("ci")

from qsv.dsl import parse_catalog
from qsv.expr import (
    Add,
    Const,
    Div,
    Mul,
    MultiSum,
    Neg,
    Param,
    Poch,
    Pow,
    QPow,
    Sub,
    Sum,
)
from qsv.intpoly import IntPoly
from qsv.verifier import default_catalog_path


@pytest.fixture(scope="session")
def catalog_records():
    with open(default_catalog_path(), encoding="utf-8") as fh:
        return parse_catalog(fh.read())


@pytest.fixture(scope="session")
def catalog(catalog_records):
    return {r.id: r for r in catalog_records}


def perturb_expr(expr, rng: random.Random):
    """Inject exactly one fault: a sign flip or an off-by-one exponent.

    Collects every mutable site, picks one at random, and rebuilds the
    tree around it.
    """
    sites = []

    def collect(node, path):
        if isinstance(node, QPow):
            sites.append((path, "qpow"))
        elif isinstance(node, Pow):
            sites.append((path, "pow"))
            collect(node.base, path + ("base",))
        elif isinstance(node, Poch):
            if isinstance(node.length, IntPoly) and not node.length.is_zero():
                sites.append((path, "len"))
            collect(node.arg, path + ("arg",))
        elif isinstance(node, Const) and node.value not in (0,):
            sites.append((path, "const"))
        elif isinstance(node, Neg):
            collect(node.arg, path + ("arg",))
        elif isinstance(node, (Add, Sub, Mul, Div)):
            collect(node.left, path + ("left",))
            collect(node.right, path + ("right",))
        elif isinstance(node, Sum):
            collect(node.summand, path + ("summand",))
        elif isinstance(node, MultiSum):
            collect(node.summand, path + ("summand",))
        elif isinstance(node, Param):
            sites.append((path, "param"))

    collect(expr, ())
    if not sites:
        return None
    path, kind = rng.choice(sites)

    def rebuild(node, path):
        if not path:
            if kind == "qpow":
                return QPow(node.exponent + IntPoly.const(1))
            if kind == "pow":
                return Pow(node.base, node.exponent + IntPoly.const(1))
            if kind == "len":
                return Poch(node.arg, node.base, node.length + IntPoly.const(1))
            if kind == "const":
                return Const(-node.value)
            if kind == "param":
                return Pow(node, IntPoly.const(2))
            raise AssertionError(kind)
        attr, rest = path[0], path[1:]
        return dataclasses.replace(node, **{attr: rebuild(getattr(node, attr), rest)})

    return rebuild(expr, path)


def perturb_record(record, rng: random.Random):
    """Return a copy of the record with one fault injected on one side."""
    for _ in range(20):
        side = rng.choice(["lhs", "rhs"])
        mutated = perturb_expr(getattr(record, side), rng)
        if mutated is not None:
            return dataclasses.replace(record, **{side: mutated})
    return None
