"""Evaluation engine: exact and numeric backends, truncated sums,
sectioning, and the backend-agreement invariant."""

import itertools
from fractions import Fraction as F

import mpmath
import pytest
from mpmath import mpc

from qsv.dsl import parse_expr
from qsv.engine import (
    ExactEnv,
    ExactEvaluator,
    NumericEnv,
    NumericEvaluator,
    eval_exact,
    eval_numeric,
    fl_lhs_numeric,
    fl_rhs_numeric,
    sum_sectioned_exact,
)
from qsv.errors import NonIntegerExponent, NonTruncatable, ValuationStall
from qsv.exact import ParamValue, series_add, series_inv, series_mul
from qsv.qkernel import ThetaKind, poch_infinite, theta_series


def pv(c, m):
    return ParamValue(F(c), m)


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), mpmath.mpf(1e-30))


QBIN_LHS = parse_expr("sum(k=0..inf; poch(a;q)_k / poch(q;q)_k * z^k)")
QBIN_RHS = parse_expr("poch(a*z;q)_inf / poch(z;q)_inf")


# -- exact backend --------------------------------------------------------------


def test_qbin_partition_series():
    # a = 0, z = q reduces the sum to the partition generating function
    env = ExactEnv(order=10, params={"a": pv(0, 0), "z": pv(1, 1)})
    got = eval_exact(QBIN_LHS, env)
    assert [int(c) for c in got.coeffs] == [1, 1, 2, 3, 5, 7, 11, 15, 22, 30]
    assert got == eval_exact(QBIN_RHS, env)


def test_theta_builtin_delegates():
    env = ExactEnv(order=24)
    assert eval_exact(parse_expr("psi()"), env) == theta_series(ThetaKind.PSI, 24)
    assert (eval_exact(parse_expr("phi_minus()"), env)
            == theta_series(ThetaKind.PHI_MINUS, 24))


def test_valuation_stall_on_flat_driver():
    # a sum whose driver has q-power zero never gains valuation
    lhs = parse_expr("sum(k=0..inf; poch(a; q^h)_k / poch(q^h; q^h)_k"
                     " * poch(b; q^t)_(h*k) / poch(c; q^t)_(h*k) * z^k)")
    env = ExactEnv(order=16, params={"a": pv(1, 1), "b": pv(-1, 1),
                                     "c": pv(1, 2), "z": pv(F(1, 2), 0)},
                   exps={"h": 2, "t": 1})
    with pytest.raises(ValuationStall):
        eval_exact(lhs, env)


def test_infinite_poch_zero_valuation_is_hard_error():
    env = ExactEnv(order=8, params={"z": pv(1, 0)})
    with pytest.raises(NonTruncatable):
        eval_exact(parse_expr("poch(z;q)_inf"), env)


def test_negative_exponent_rejected():
    env = ExactEnv(order=8, exps={"t": 1})
    with pytest.raises(NonIntegerExponent):
        eval_exact(parse_expr("q^(t-2)"), env)


def test_monomial_power_paths():
    env = ExactEnv(order=12, params={"a": pv(F(1, 2), 1)}, exps={"h": 2})
    got = eval_exact(parse_expr("(a*q^h)^2"), env)
    assert got.coeffs[6] == F(1, 4)
    assert sum(1 for c in got.coeffs if c) == 1


def test_sum_with_start_and_step():
    # sum over k = 1, 3, 5, ... of z^k at z = q: q/(1-q^2)
    env = ExactEnv(order=12, params={"z": pv(1, 1)})
    got = eval_exact(parse_expr("sum(k=1..inf step 2; z^k)"), env)
    expected = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1]
    assert [int(c) for c in got.coeffs] == expected


# -- sectioned sums ---------------------------------------------------------------


def test_sectioned_sum_splits_total():
    summand = parse_expr("z^k / poch(q;q)_k")
    for z in (pv(1, 1), pv(-1, 2)):
        env = ExactEnv(order=24, params={"z": z})
        full = eval_exact(parse_expr("sum(k=0..inf; z^k / poch(q;q)_k)"), env)
        # one section starting at zero is the ordinary sum
        assert sum_sectioned_exact(summand, "k", 1, 0, env) == full
        for r in (2, 3):
            parts = [sum_sectioned_exact(summand, "k", r, s, env)
                     for s in range(r)]
            total = parts[0]
            for p in parts[1:]:
                total = series_add(total, p)
            assert total == full


def test_sectioned_sum_splits_catalog_summands(catalog):
    # the same consistency on summands lifted from shipped records
    from qsv.expr import Mul, Sum

    cases = []
    rec = catalog["gb-1.4.12"]

    def find_sum(e):
        if isinstance(e, Sum):
            return e
        for attr in ("left", "right", "arg", "summand"):
            child = getattr(e, attr, None)
            if child is not None and hasattr(child, "__class__"):
                found = find_sum(child) if hasattr(child, "__dataclass_fields__") else None
                if found is not None:
                    return found
        return None

    node = find_sum(rec.lhs)
    env = ExactEnv(order=32, params={"a": pv(1, 1), "b": pv(F(-1, 2), 1)},
                   exps={"h": 2, "t": 1})
    full = eval_exact(node, env)
    for r in (2, 3):
        parts = [sum_sectioned_exact(node.summand, node.index, r, s, env)
                 for s in range(r)]
        total = parts[0]
        for p in parts[1:]:
            total = series_add(total, p)
        assert total == full


def test_sectioned_even_part_matches_root_average():
    # even section of sum z^k/(q;q)_k at z = q equals the average of
    # 1/(q;q)_inf at z = q and z = -q (the two-section root filter)
    n = 32
    env = ExactEnv(order=n, params={"z": pv(1, 1)})
    summand = parse_expr("z^k / poch(q;q)_k")
    sectioned = sum_sectioned_exact(summand, "k", 2, 0, env)
    plus = series_inv(poch_infinite(pv(1, 1), 1, n))
    minus = series_inv(poch_infinite(pv(-1, 1), 1, n))
    avg = series_add(plus, minus)
    avg = type(avg)(n, tuple(c / 2 for c in avg.coeffs))
    assert sectioned == avg


def test_sectioned_geometric_tail():
    # k = 1, 3, 5, ... of z^k: z/(1 - z^2) as a series at z = q
    env = ExactEnv(order=16, params={"z": pv(1, 1)})
    got = sum_sectioned_exact(parse_expr("z^k"), "k", 2, 1, env)
    assert [int(c) for c in got.coeffs] == [0, 1, 0, 1] * 4


def test_numeric_sectioning_roots_route():
    env = NumericEnv(q=0.3, params={"z": 0.4}, tol=1e-12)
    ev = NumericEvaluator(env)
    summand = parse_expr("z^k / poch(q;q)_k")
    for r, s in ((2, 0), (2, 1), (3, 1)):
        direct = ev.sum_sectioned(summand, "k", r, s)
        averaged = ev.sum_sectioned_roots(summand, "k", r, s)
        assert rel_err(direct, averaged) < 1e-10


# -- multisums ----------------------------------------------------------------------


def test_multisum_single_index_equals_sum():
    msum = parse_expr("msum(k; poch(a;q)_k / poch(q;q)_k * z^k)")
    plain = parse_expr("sum(k=0..inf; poch(a;q)_k / poch(q;q)_k * z^k)")
    env = ExactEnv(order=32, params={"a": pv(-1, 1), "z": pv(F(1, 2), 1)})
    assert eval_exact(msum, env) == eval_exact(plain, env)


def test_multisum_order_independence():
    e12 = parse_expr("msum(k1, k2; z1^k1 * z2^k2 "
                     "/ (poch(q;q)_k1 * poch(q^2;q^2)_k2))")
    e21 = parse_expr("msum(k2, k1; z1^k1 * z2^k2 "
                     "/ (poch(q;q)_k1 * poch(q^2;q^2)_k2))")
    env = ExactEnv(order=20, params={"z1": pv(1, 1), "z2": pv(-1, 1)})
    assert eval_exact(e12, env) == eval_exact(e21, env)


def test_multisum_matches_brute_force():
    e = parse_expr("msum(k1, k2; z1^k1 * z2^k2 / poch(q;q)_(k1+k2))")
    env = ExactEnv(order=14, params={"z1": pv(1, 1), "z2": pv(1, 2)})
    got = eval_exact(e, env)
    # brute force over an ample rectangle
    ev = ExactEvaluator(env)
    summand = e.summand
    total = None
    for k1, k2 in itertools.product(range(16), repeat=2):
        term = ev.eval(summand, {"k1": k1, "k2": k2})
        total = term if total is None else series_add(total, term)
    assert got == total


def test_multisum_stall_detection():
    e = parse_expr("msum(k1, k2; z1^k1 * z2^k2)")
    env = ExactEnv(order=12, params={"z1": pv(1, 1), "z2": pv(F(1, 3), 0)})
    with pytest.raises(ValuationStall):
        eval_exact(e, env)


# -- numeric backend -----------------------------------------------------------------


def test_qbin_numeric_both_sides():
    env = NumericEnv(q=0.3, params={"a": 0.2, "z": 0.4}, tol=1e-12)
    lhs = eval_numeric(QBIN_LHS, env)
    rhs = eval_numeric(QBIN_RHS, env)
    assert rel_err(lhs, rhs) < 1e-10


def test_numeric_complex_exponents():
    lhs = parse_expr(
        "poch(b*w; q^t)_inf / poch(w; q^t)_inf"
        " * sum(k=0..inf; poch(a; q^h)_k / poch(q^h; q^h)_k"
        " * poch(w; q^t)_(h*k) / poch(b*w; q^t)_(h*k) * z^k)")
    rhs = parse_expr(
        "poch(a*z; q^h)_inf / poch(z; q^h)_inf"
        " * sum(j=0..inf; poch(b; q^t)_j / poch(q^t; q^t)_j"
        " * poch(z; q^h)_(t*j) / poch(a*z; q^h)_(t*j) * w^j)")
    env = NumericEnv(q=0.35, params={"a": 0.1, "b": 0.2, "w": 0.3, "z": 0.25},
                     exps={"h": 1.5, "t": 0.7}, tol=1e-11)
    assert rel_err(eval_numeric(lhs, env), eval_numeric(rhs, env)) < 1e-9


def test_backend_agreement_on_catalog(catalog_records):
    # exact series evaluated at q = 0.2 must match the numeric backend at
    # the same substitution (picking a grid point whose numeric magnitudes
    # stay inside the declared convergence region)
    from qsv.verifier import default_exact_grid, numeric_constraints_ok

    q = mpmath.mpf("0.2")
    for record in catalog_records:
        if record.numeric_only:
            continue
        chosen = None
        for point in default_exact_grid(record):
            nenv = NumericEnv(
                q=q,
                params={k: complex(v.coeff) * 0.2 ** v.qpow
                        for k, v in point.params.items()},
                exps=dict(point.exps), tol=1e-12)
            if numeric_constraints_ok(record, nenv):
                chosen = (point, nenv)
                break
        assert chosen is not None, f"no numerically admissible point: {record.id}"
        point, nenv = chosen
        env = ExactEnv(order=64, params=point.params, exps=point.exps)
        for side in (record.lhs, record.rhs):
            exact_value = eval_exact(side, env).eval_at(q)
            numeric_value = eval_numeric(side, nenv)
            assert rel_err(mpc(exact_value), numeric_value) < 1e-8, record.id


# -- Fundamental Lemma numeric sides ----------------------------------------------------


@pytest.mark.parametrize("r,s", [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1)])
def test_fundamental_lemma_sections(r, s):
    kwargs = dict(a=0.25, b=0.15, c=0.4, z=0.25, q=0.3, p=0.3,
                  r=r, s=s, u=2, v=1, tol=1e-11)
    lhs = fl_lhs_numeric(**kwargs)
    rhs = fl_rhs_numeric(**kwargs)
    assert rel_err(lhs, rhs) < 1e-8


def test_fundamental_lemma_r1_matches_catalog_record(catalog):
    # the one-section instance with u = h, v = 0 is the plain bibasic
    # transformation; both records must produce identical exact series
    fl = catalog["andrews-fl-r1"]
    heine = catalog["gb-heine"]
    params = {"a": pv(1, 1), "b": pv(F(1, 2), 1), "c": pv(2, 2), "z": pv(-1, 1)}
    for h, t in ((1, 1), (2, 1), (1, 2), (2, 3)):
        env_fl = ExactEnv(order=48, params=params,
                          exps={"h": h, "t": t, "u": h, "v": 0})
        env_gb = ExactEnv(order=48, params=params, exps={"h": h, "t": t})
        fl_l = eval_exact(fl.lhs, env_fl)
        fl_r = eval_exact(fl.rhs, env_fl)
        gb_l = eval_exact(heine.lhs, env_gb)
        gb_r = eval_exact(heine.rhs, env_gb)
        assert fl_l == gb_l
        assert fl_r == gb_r
        assert fl_l == fl_r


def test_numeric_constraint_violation():
    from qsv.errors import ConstraintViolation
    from qsv.verifier import numeric_constraints_ok

    record_like = parse_expr("q^(h*t)")
    # |q^{ht}| must stay below the margin: h = t = 0.1 at q = 0.35 gives
    # |q^{0.01}| ~ 0.99
    env = NumericEnv(q=0.35, exps={"h": 0.1, "t": 0.1})
    value = NumericEvaluator(env).eval(record_like)
    assert abs(value) > 0.95
