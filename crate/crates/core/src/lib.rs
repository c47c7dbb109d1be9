//! Random trees grown by preferential attachment with a general weight
//! function, together with the analytic limit objects the growth converges
//! to and the statistics to verify one against the other.
//!
//! The crate is organised around the pipeline:
//!
//! * [`weight`] — weight functions ω and the shared text grammar;
//! * [`malthus`] — the series ρ̂, the Malthusian parameter λ*, the asymptotic
//!   degree law and second-moment machinery;
//! * [`tree`] — finite rooted ordered trees, canonical codes, histories and
//!   exact enumeration;
//! * [`fenwick`] + [`simulate`] — seeded O(log n)-per-step growth in
//!   discrete or continuous time, censuses and growth-constant samples;
//! * [`analytic`] — the limiting subtree distribution π and its marked and
//!   steady-state extensions;
//! * [`stats`] — distances, goodness-of-fit tests and the
//!   theory-vs-simulation comparison harness.

pub mod analytic;
pub mod fenwick;
pub mod malthus;
pub mod simulate;
pub mod stats;
pub mod tree;
pub mod weight;

pub use analytic::{
    ancestor_subtree_mass, marked_pi, pi_linear, pi_mass, pi_table, steadiness_exact,
    steadiness_residual, AnalyticError, SteadinessResidual, TreeDistribution,
};
pub use malthus::{
    check_condition_m, degree_dist, degree_dist_linear, eval_rho_hat, kappa, lambda_underline,
    solve_malthus, xhat_second_moment, ConditionM, DegreeDistribution, LambdaUnder, MalthusError,
    MalthusResult, SeriesValue,
};
pub use simulate::{
    census, derive_stream, init_growth, theta_sample, write_jsonl, CensusReport, GrowthState,
};
pub use stats::{
    compare_ancestors, compare_degree, compare_subtrees, gamma_theta_check, tv_distance,
    AncestorComparison, ChiSquare, ComparisonReport, DistributionTable, StatsError, ThetaCheck,
};
pub use tree::{
    trees_up_to, History, MarkedTree, OrderedTree, TreeCode, TreeError, VertexLabel,
};
pub use weight::{Tail, TailSpec, WeightError, WeightFunction, WeightSpec};
