from .ast import (
    And,
    BinOp,
    Call,
    Cmp,
    Feat,
    Implies,
    Neg,
    Num,
    Or,
    format_arith,
    format_constraint,
    negate,
)
from .evaluate import (
    PenaltyProgram,
    all_satisfied,
    compile_penalty,
    eval_constraint,
    kink_distance,
    satisfied,
)
from .parser import parse_constraint, parse_expression, tokenize
from .repair import repair
from .schema import (
    ConstraintSet,
    FeatureDef,
    FeatureSchema,
    Problem,
    build_constraint_set,
    categorical,
    dump_schema,
    load_schema,
    parse_schema,
)
