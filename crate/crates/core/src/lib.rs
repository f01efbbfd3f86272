//! Second-order optimality analysis for small mathematical programs with
//! equilibrium constraints.
//!
//! Load a problem with [`load_problem`], evaluate it with
//! [`evaluate_at_reference`], then run individual checks or [`analyze`].

pub mod cone;
pub mod error;
pub mod expr;
pub mod implicit;
pub mod lcp;
pub mod linalg;
pub mod lp;
pub mod multiplier;
pub mod piecewise;
pub mod problem;
pub mod report;
pub mod tol;
pub mod verdict;

pub use cone::{
    classify_indices, copositivity_test, critical_cone, generators, tangent_cone_branches, upper_tangent_cone,
    BranchPattern, ConeUnion, CopositivityVerdict, GeneratorSet, IndexPartition, PolyhedralCone,
};
pub use error::{Error, Result};
pub use expr::{eval_jet, parse_expr, Expr, ParseError, SecondOrderJet, SymmetricMatrix};
pub use implicit::{
    directional_derivatives, finite_difference_probe, first_directional_derivative, reduced_second_order_test,
    second_directional_derivative, src_check, DirectionalDerivatives, ProbeTable, RegularityReport,
};
pub use lcp::{solve_mixed_lcp, LcpSolutionSet, MixedLcp, RowKind};
pub use linalg::{is_p_matrix, DenseMatrix, PMatrixCertificate};
pub use multiplier::{
    assemble_kkt_lagrangian_hessian, assemble_ncp_lagrangian_hessian, compute_kkt_multiplier, kkt_sufficient_check,
    multiplier_form_test, multiplier_uniqueness_check, relaxed_critical_cone, KktMultiplier, LagrangianAssembly,
    UniquenessOutcome,
};
pub use piecewise::{enumerate_branches, piecewise_analysis, BranchCheck, BranchNlp, PiecewiseResult};
pub use problem::{
    evaluate_at_reference, kkt_reformulate_avi, load_problem, PointEvaluation, ProblemFile, ProblemKind, ProblemSpec,
};
pub use report::{analyze, render_text, ConditionReport, ReportOptions};
pub use verdict::Verdict;
