"""Kernel machines trained under hard Lukasiewicz-logic constraints,
with multiplier-based detection of removable constraints."""

from __future__ import annotations

__version__ = "0.1.0"

from .analyze import (
    AblationRecord,
    AnalysisError,
    AnalysisReport,
    DeactivationResult,
    GeneralSolution,
    InconsistentSystem,
    SupportLimitExceeded,
    SupportSet,
    ablate_and_compare,
    ablated_problem,
    deactivate,
    deactivation_report,
    grounded_entailment,
    kkt_certificate,
    logical_coefficients,
    minimal_support_sets,
    removable_constraints,
    solve_problem2,
)
from .constraints import (
    AffinePiece,
    AffineSet,
    CompileError,
    ConstraintBlock,
    ConstraintMatrix,
    assemble_matrix,
    compile_min_affine,
    consistency_blocks,
    matrix_csv,
    pointwise_block,
    restrict_columns,
    to_constraint_block,
)
from .grounding import (
    GroundFormula,
    GroundingError,
    GroundingIndex,
    GroundLiteral,
    PredicateDecl,
    SampleSets,
    build_grounding_index,
    build_samples,
    expand_quantifiers,
    ground_assignment,
    ground_conjuncts,
    sample_universe,
)
from .kernels import GramMatrix, KernelError, KernelSpec, gram, kernel_value, psd_check
from .logic import (
    Atom,
    Forall,
    Formula,
    FormulaError,
    FragmentReport,
    Implies,
    Neg,
    NnfError,
    ParseError,
    StrongConj,
    StrongDisj,
    WeakConj,
    WeakDisj,
    check_concave_fragment,
    conjuncts,
    eval_lukasiewicz,
    parse_formula,
    to_nnf,
    to_text,
)
from .problem import Problem, ProblemError, build_training_problem, load_problem, parse_problem
from .solver import (
    DEFAULT_TOLERANCES,
    Infeasible,
    LpResult,
    NullspaceBasis,
    QpProblem,
    QpSolution,
    SolverError,
    Tolerances,
    lp_feasible,
    lp_solve,
    min_norm_solution,
    nullspace,
    solve_qp,
    tolerances_with,
)
from .train import (
    LoadedModel,
    TrainError,
    TrainedModel,
    TrainingProblem,
    assemble_problem,
    load_model,
    solve_primal,
)
