//! Online calibration of prediction intervals for time series.
//!
//! The library wraps any forecaster that produces nested multi-step-ahead
//! prediction intervals and adjusts the nominal miscoverage rate online so
//! that realized long-run miscoverage tracks a target rate, regardless of
//! how poorly the forecaster is calibrated.
//!
//! Two controllers are provided:
//!
//! * **ACI** (adaptive conformal inference): a one-parameter online gradient
//!   update of the nominal miscoverage rate.
//! * **BCI** (Bellman conformal inference): a receding-horizon controller
//!   that solves a small stochastic control problem by backward dynamic
//!   programming at every step, trading expected interval length against a
//!   penalty on short-horizon miscoverage, with the penalty weight itself
//!   updated online.
//!
//! Supporting pieces: interval families with monotone/safeguard enforcement
//! ([`intervals`]), a trailing window of probability integral transforms
//! ([`pit`]), GARCH(1,1) and AR forecasters plus synthetic generators
//! ([`forecast`]), the exact DP solver ([`scp`]), the online loops
//! ([`control`]), and the evaluation metrics ([`eval`]).

pub mod control;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod intervals;
pub mod pit;
pub mod scp;

pub use control::{
    build_problem, run_on_pit_stream, run_online, AciState, BciState, ControllerKind, RunConfig,
    RunRecord, RunSeries, StepRow,
};
pub use error::{BciError, Result};
pub use eval::{
    default_alpha_grid, ecc, local_metrics, match_stepsize, select_matching_c, summarize,
    LocalSeries, MatchOutcome, SummaryStats,
};
pub use forecast::{
    ar_fit, ar_forecast_bundle, garch_filter, garch_fit, garch_forecast_bundle, garch_loglik,
    synth_ar, synth_garch, synth_garch_switching, ArForecaster, ArParams, ForecastBundle,
    Forecaster, GarchForecaster, GarchParams, OracleGaussianForecaster,
};
pub use intervals::{
    compute_pit, err_indicator, monotone_envelope, FnFamily, GaussianFamily, GridFamily,
    IntervalFamily, Pit, PredictionInterval, ScaledChiSquareFamily,
};
pub use pit::{EcdfSnapshot, PitWindow};
pub use scp::{
    brute_force_oracle, policy_expected_cost, sample_problem, solve, terminal_cost, PolicyTables,
    ScpProblem,
};
