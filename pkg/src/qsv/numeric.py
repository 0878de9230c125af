"""High-precision complex backend.

Used for identities whose base exponents h, t are not positive integers
(q^h via the principal branch) and for root-of-unity constructions.  All
arithmetic runs on mpmath at a working precision comfortably above the
target tolerance; any non-finite intermediate aborts the evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
from mpmath import mpc, mpf

from .errors import (
    BaseNotInDisk,
    DivisionByZeroProduct,
    NonConvergence,
    NonFiniteValue,
    ZeroBase,
)

#: Default relative tolerance for scalar kernels.
SCALAR_TOL = 1e-12
#: Default relative tolerance for full identity checks (error accumulates
#: over thousands of terms).
IDENTITY_TOL = 1e-9

#: Working precision in decimal digits; ~100 bits, at least twice the bit
#: budget of the tightest default tolerance.
WORK_DPS = 30

#: Hard cap on series terms before declaring non-convergence.
MAX_TERMS = 100_000

#: Consecutive small terms required before the tail test may fire.
TAIL_RUN = 20


def set_precision(dps: int = WORK_DPS):
    mpmath.mp.dps = dps


set_precision()


def to_cnum(value) -> mpc:
    if isinstance(value, complex):
        return mpc(value.real, value.imag)
    return mpc(value)


def check_finite(z: mpc) -> mpc:
    if not (mpmath.isfinite(z.real) and mpmath.isfinite(z.imag)):
        raise NonFiniteValue(f"non-finite intermediate {z}")
    return z


def near_int(z, tol=1e-9):
    """Return the nearest integer if z is within tol of one, else None."""
    z = mpc(z)
    if abs(z.imag) > tol:
        return None
    n = int(mpmath.nint(z.real))
    if abs(z.real - n) > tol:
        return None
    return n


def cpow(base, exp) -> mpc:
    """Principal-branch power exp(exp * Log(base)).

    Integer exponents take the exact power path (no branch cut involved),
    which keeps (-1)^k and friends clean.
    """
    base = to_cnum(base)
    exp = to_cnum(exp)
    n = near_int(exp, 1e-12)
    if n is not None:
        if base == 0:
            if n > 0:
                return mpc(0)
            if n == 0:
                return mpc(1)
            raise ZeroBase("0 to a negative power")
        return check_finite(mpmath.power(base, n))
    if base == 0:
        raise ZeroBase("0 to a non-integer power")
    return check_finite(mpmath.exp(exp * mpmath.log(base)))


@dataclass(frozen=True)
class RootOfUnity:
    """w_r^index with w_r = exp(2*pi*i/r)."""

    order: int
    index: int

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be a positive integer")

    def value(self) -> mpc:
        return mpmath.exp(2j * mpmath.pi * self.index / self.order)


def root_of_unity(r: int, index: int = 1) -> mpc:
    return RootOfUnity(r, index).value()


def qpoch_inf_numeric(x, qbase, tol=SCALAR_TOL) -> mpc:
    """(x; qbase)_inf = prod_{r>=0} (1 - x*qbase^r) for |qbase| < 1.

    Truncates once the log-magnitude tail bound
    |x|*|qbase|^r / (1-|qbase|) drops below tol.
    """
    x = to_cnum(x)
    qbase = to_cnum(qbase)
    aq = abs(qbase)
    if aq >= 1:
        raise BaseNotInDisk(f"|qbase| = {aq} >= 1")
    if x == 0:
        return mpc(1)
    prod = mpc(1)
    term = x
    r = 0
    ax = abs(x)
    while ax * aq ** r / (1 - aq) > tol / 4 and r < MAX_TERMS:
        prod *= 1 - term
        check_finite(prod)
        term *= qbase
        r += 1
    if r >= MAX_TERMS:
        raise NonConvergence("infinite product did not meet its tail bound")
    return check_finite(prod)


def qpoch_finite_numeric(x, qbase, k: int) -> mpc:
    """(x; qbase)_k as a finite product of k factors."""
    if k < 0:
        raise ValueError("finite length must be non-negative")
    x = to_cnum(x)
    qbase = to_cnum(qbase)
    prod = mpc(1)
    term = x
    for _ in range(k):
        prod *= 1 - term
        term *= qbase
    return check_finite(prod)


def qpoch_complex_index(x, qbase, k, tol=SCALAR_TOL) -> mpc:
    """(x; qbase)_k for complex k:  (x;qbase)_inf / (x*qbase^k; qbase)_inf."""
    x = to_cnum(x)
    qbase = to_cnum(qbase)
    k = to_cnum(k)
    n = near_int(k)
    if n is not None and n >= 0:
        return qpoch_finite_numeric(x, qbase, n)
    num = qpoch_inf_numeric(x, qbase, tol)
    den = qpoch_inf_numeric(x * cpow(qbase, k), qbase, tol)
    if den == 0:
        raise DivisionByZeroProduct("(x*q^k;q)_inf evaluated to zero")
    return check_finite(num / den)


def theta_psi_numeric(q, tol=SCALAR_TOL) -> mpc:
    """psi(q) = sum_{k>=0} q^{k(k+1)/2}, |q| < 1."""
    q = to_cnum(q)
    if abs(q) >= 1:
        raise BaseNotInDisk("theta series needs |q| < 1")
    total = mpc(0)
    k = 0
    while True:
        term = cpow(q, k * (k + 1) // 2)
        total += term
        if abs(term) < tol * max(abs(total), mpf(1)) and k > 2:
            return check_finite(total)
        k += 1
        if k > MAX_TERMS:
            raise NonConvergence("theta sum did not converge")


def theta_phi_minus_numeric(q, tol=SCALAR_TOL) -> mpc:
    """phi(-q) = 1 + 2*sum_{k>=1} (-1)^k q^{k^2}, |q| < 1."""
    q = to_cnum(q)
    if abs(q) >= 1:
        raise BaseNotInDisk("theta series needs |q| < 1")
    total = mpc(1)
    k = 1
    while True:
        term = 2 * (-1) ** k * cpow(q, k * k)
        total += term
        if abs(term) < tol * max(abs(total), mpf(1)) and k > 2:
            return check_finite(total)
        k += 1
        if k > MAX_TERMS:
            raise NonConvergence("theta sum did not converge")


def sum_with_tail_bound(term_fn, tol, max_terms=MAX_TERMS, tail_run=TAIL_RUN):
    """Sum term_fn(0), term_fn(1), ... until the tail is certified small.

    Stops when `tail_run` consecutive terms each have magnitude below
    tol*|partial sum| AND the last term-to-term ratio estimate certifies a
    geometric remainder below tol*|partial sum| (ratio must be < 0.99).
    """
    total = mpc(0)
    small_run = 0
    prev_mag = None
    k = 0
    while k < max_terms:
        term = to_cnum(term_fn(k))
        check_finite(term)
        total += term
        mag = abs(term)
        if mag > 1e30:
            raise NonConvergence("terms are diverging")
        scale = max(abs(total), mpf(1e-300))
        if mag < tol * scale:
            small_run += 1
            if small_run >= tail_run:
                if prev_mag is None:
                    # nothing but (near-)zero terms so far
                    if small_run >= 2 * tail_run:
                        return check_finite(total)
                else:
                    ratio = mag / prev_mag
                    if ratio < 0.99:
                        tail = mag * ratio / (1 - ratio) if ratio > 0 else mpf(0)
                        if tail < tol * scale:
                            return check_finite(total)
        else:
            small_run = 0
        if mag != 0:
            prev_mag = mag
        k += 1
    raise NonConvergence(f"sum did not converge within {max_terms} terms")
