//! Breakdown probabilities of resampling ensembles under contamination.

pub mod formulas;
pub mod law;
pub mod montecarlo;
pub mod query;
pub mod search;
pub mod tails;

pub use formulas::{evaluate_plan, trimmed_breakdown_threshold, BreakdownFormula, FormulaRegistry, Plan};
pub use montecarlo::{lower_std_err, monte_carlo_breakdown};
pub use query::{
    BreakdownQuery, BreakdownResult, CellProfile, Flag, Method, RankContext, RowGroup, Scenario, ThresholdContext,
    TrimContext, Value,
};
pub use search::{
    prob_bagging_bounded_breakdown, prob_breakdown_rank_case, prob_breakdown_rank_cell,
    prob_breakdown_threshold_case, prob_breakdown_threshold_cell, prob_resample_overrun, resampling_bdp,
    robustness_surplus, stab_bdp, vsbdp_upper_bound, Aggregation, BdpResult, SurplusMode, SurplusResult,
};
