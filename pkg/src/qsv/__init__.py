"""qsv: a verification engine for q-series transformation identities.

Identities are stored as data (a small text DSL), evaluated independently
on both sides -- exactly, as truncated formal power series over Q, or
numerically at high precision for complex base exponents -- and compared
coefficient by coefficient (exact) or within tolerance (numeric).
"""

from .exact import DEFAULT_ORDER, ParamValue, QSeries, Rational
from .dsl import IdentityRecord, parse_catalog, parse_expr, render_expr
from .engine import ExactEnv, NumericEnv, eval_exact, eval_numeric
from .expr import normalize, substitute

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ORDER",
    "ExactEnv",
    "IdentityRecord",
    "NumericEnv",
    "ParamValue",
    "QSeries",
    "Rational",
    "eval_exact",
    "eval_numeric",
    "normalize",
    "parse_catalog",
    "parse_expr",
    "render_expr",
    "substitute",
    "__version__",
]
