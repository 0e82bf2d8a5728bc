"""robustpred: derived floating-point filters and exact staged predicates.

Turns a polynomial expression into a cascade of provably valid sign filters
(semi-static with optional underflow protection, static/almost-static, zero,
interval, translation) backed by exact stages (floating-point expansions,
dyadic rationals), so the returned sign is always the exact sign of the
underlying real polynomial.
"""

from .errorbound import (
    DerivationError,
    EpsPoly,
    FilterConstants,
    RoundedInputRule,
    compute_constants,
    derive,
    derive_filter_bounds,
    eps_poly_combine_product,
    eps_poly_combine_sum,
    eps_poly_max,
    phi,
    staticize,
)
from .expr import (
    Constant,
    Difference,
    ExprError,
    Input,
    ParseError,
    Product,
    Sum,
    arity,
    eval_naive,
    parse_expr,
    serialize,
    top_decomposition,
)
from .filters import (
    UNCERTAIN,
    DyadicExactStage,
    ExpansionExactStage,
    IntervalFilter,
    SemiStaticFilter,
    StaticFilter,
    TranslationFilter,
    ZeroFilter,
)
from .fpn import (
    BINARY32,
    BINARY64,
    Dyadic,
    FpnParams,
    InvalidInputError,
    dyadic_from_float,
    oracle_sign,
)
from .predicates import (
    BUILTIN_NAMES,
    IncircleRectFilter,
    StagedPredicate,
    builtin_expr,
    default_pipeline,
    register_custom_stage,
    rounded_input_filter,
)

__version__ = "0.1.0"

__all__ = [
    "BINARY32",
    "BINARY64",
    "BUILTIN_NAMES",
    "Constant",
    "DerivationError",
    "Difference",
    "Dyadic",
    "DyadicExactStage",
    "EpsPoly",
    "ExpansionExactStage",
    "ExprError",
    "FilterConstants",
    "FpnParams",
    "IncircleRectFilter",
    "Input",
    "IntervalFilter",
    "InvalidInputError",
    "ParseError",
    "Product",
    "RoundedInputRule",
    "SemiStaticFilter",
    "StagedPredicate",
    "StaticFilter",
    "Sum",
    "TranslationFilter",
    "UNCERTAIN",
    "ZeroFilter",
    "arity",
    "builtin_expr",
    "compute_constants",
    "default_pipeline",
    "derive",
    "derive_filter_bounds",
    "dyadic_from_float",
    "eps_poly_combine_product",
    "eps_poly_combine_sum",
    "eps_poly_max",
    "eval_naive",
    "oracle_sign",
    "parse_expr",
    "phi",
    "register_custom_stage",
    "rounded_input_filter",
    "serialize",
    "staticize",
    "top_decomposition",
]
