//! Exact solver for the per-step stochastic control problem behind BCI.
//!
//! At each time step the controller plans nominal miscoverage rates for
//! the next `T` outcomes. Planned actions incur the expected interval
//! length now and, through the error-count state, a terminal penalty
//! `lambda * max(errors/T - alpha_bar, 0)` on the short-horizon
//! miscoverage rate. Future PITs are modeled as independent draws from
//! the trailing empirical CDF, so the expected stage cost of action
//! `alpha` is `L(alpha) + D * F(alpha)` where `D` is the marginal
//! cost-to-go of one more error.
//!
//! The state space is the error count accrued within the horizon, so the
//! whole problem has `O(T^2)` states and is solved exactly by backward
//! induction with an exhaustive scan over the candidate actions. When the
//! CDF is the empirical distribution of the trailing PIT atoms and the
//! length function is continuous, an optimal action always lies on the
//! atom grid, which is why the scan is exact rather than a discretization.
//!
//! A non-positive penalty weight makes the search degenerate; in that
//! regime every planned action is forced to 1 (the shortest interval),
//! which the coverage guarantee of the outer update relies on.

use crate::error::{BciError, Result};
use crate::pit::EcdfSnapshot;

/// A boxed scalar function, used for per-stage length and CDF evaluators.
pub type RealFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// One planning instance: horizon, penalty weight, target rate, per-stage
/// length functions and PIT CDFs, and the admissible action grid.
pub struct ScpProblem {
    horizon: usize,
    lambda: f64,
    alpha_bar: f64,
    lengths: Vec<RealFn>,
    cdfs: Vec<RealFn>,
    candidates: Vec<f64>,
}

impl ScpProblem {
    /// Validate and assemble a problem. `lengths` and `cdfs` must each
    /// have one entry per horizon step; candidates must be sorted,
    /// strictly positive, at most 1, and each length function must be
    /// non-increasing across them.
    pub fn new(
        lambda: f64,
        alpha_bar: f64,
        lengths: Vec<RealFn>,
        cdfs: Vec<RealFn>,
        candidates: Vec<f64>,
    ) -> Result<Self> {
        let horizon = lengths.len();
        if horizon == 0 {
            return Err(BciError::param("horizon", "must be >= 1"));
        }
        if cdfs.len() != horizon {
            return Err(BciError::param(
                "cdfs",
                format!("expected {horizon} evaluators, got {}", cdfs.len()),
            ));
        }
        if !lambda.is_finite() {
            return Err(BciError::param("lambda", "must be finite"));
        }
        if !(0.0 < alpha_bar && alpha_bar < 1.0) {
            return Err(BciError::param("alpha_bar", format!("{alpha_bar} not in (0, 1)")));
        }
        for pair in candidates.windows(2) {
            if pair[0] >= pair[1] {
                return Err(BciError::param("candidates", "must be strictly increasing"));
            }
        }
        if candidates.iter().any(|&c| c <= 0.0 || c > 1.0) {
            return Err(BciError::param("candidates", "must lie in (0, 1]"));
        }
        for (s, len_fn) in lengths.iter().enumerate() {
            let mut prev = f64::INFINITY;
            for &c in &candidates {
                let l = len_fn(c);
                if l > prev + 1e-9 * (1.0 + prev.abs()) {
                    return Err(BciError::param(
                        "lengths",
                        format!("stage {s} length increases at candidate {c}"),
                    ));
                }
                prev = l;
            }
        }
        Ok(Self {
            horizon,
            lambda,
            alpha_bar,
            lengths,
            cdfs,
            candidates,
        })
    }

    /// Convenience constructor sharing one empirical CDF across stages.
    pub fn with_shared_cdf(
        lambda: f64,
        alpha_bar: f64,
        lengths: Vec<RealFn>,
        ecdf: &EcdfSnapshot,
        candidates: Vec<f64>,
    ) -> Result<Self> {
        let cdfs = (0..lengths.len())
            .map(|_| {
                let snap = ecdf.clone();
                Box::new(move |alpha: f64| snap.cdf(alpha)) as RealFn
            })
            .collect();
        Self::new(lambda, alpha_bar, lengths, cdfs, candidates)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn length_at(&self, stage: usize, alpha: f64) -> f64 {
        (self.lengths[stage])(alpha)
    }

    pub fn cdf_at(&self, stage: usize, alpha: f64) -> f64 {
        (self.cdfs[stage])(alpha)
    }
}

/// Solved cost-to-go and policy tables, indexed by stage offset
/// `h in 0..=T` and error count `rho in 0..=h`.
#[derive(Debug, Clone)]
pub struct PolicyTables {
    horizon: usize,
    cost: Vec<Vec<f64>>,
    policy: Vec<Vec<f64>>,
}

impl PolicyTables {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Optimal expected remaining cost from stage `h` with `rho` errors.
    pub fn cost(&self, h: usize, rho: usize) -> f64 {
        self.cost[h][rho]
    }

    /// Planned action at stage `h` with `rho` errors (`h < T`).
    pub fn action(&self, h: usize, rho: usize) -> f64 {
        self.policy[h][rho]
    }

    /// The action executed now: the plan at stage 0 with zero errors.
    pub fn first_action(&self) -> f64 {
        self.policy[0][0]
    }
}

/// Terminal penalty `lambda * max(rho/T - alpha_bar, 0)`.
pub fn terminal_cost(rho: usize, lambda: f64, alpha_bar: f64, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(BciError::param("horizon", "must be >= 1"));
    }
    if rho > horizon {
        return Err(BciError::param(
            "rho",
            format!("{rho} exceeds the horizon {horizon}"),
        ));
    }
    Ok(lambda * (rho as f64 / horizon as f64 - alpha_bar).max(0.0))
}

/// Solve the problem exactly by backward induction.
///
/// For a non-positive penalty weight the policy is forced to 1 at every
/// state and the tables report the cost of that forced plan. Ties in the
/// stage argmin break toward the smallest action (the widest interval).
pub fn solve(problem: &ScpProblem) -> Result<PolicyTables> {
    if problem.candidates.is_empty() {
        return Err(BciError::NotReady("candidate set"));
    }
    let t = problem.horizon;

    let mut cost: Vec<Vec<f64>> = (0..=t).map(|h| vec![0.0; h + 1]).collect();
    let mut policy: Vec<Vec<f64>> = (0..t).map(|h| vec![0.0; h + 1]).collect();
    for (rho, slot) in cost[t].iter_mut().enumerate() {
        *slot = terminal_cost(rho, problem.lambda, problem.alpha_bar, t)?;
    }

    if problem.lambda <= 0.0 {
        for h in (0..t).rev() {
            let l1 = problem.length_at(h, 1.0);
            let f1 = problem.cdf_at(h, 1.0);
            for rho in 0..=h {
                policy[h][rho] = 1.0;
                cost[h][rho] = l1 + f1 * cost[h + 1][rho + 1] + (1.0 - f1) * cost[h + 1][rho];
            }
        }
        return Ok(PolicyTables {
            horizon: t,
            cost,
            policy,
        });
    }

    let lengths_at: Vec<Vec<f64>> = (0..t)
        .map(|h| problem.candidates.iter().map(|&c| problem.length_at(h, c)).collect())
        .collect();
    let cdfs_at: Vec<Vec<f64>> = (0..t)
        .map(|h| problem.candidates.iter().map(|&c| problem.cdf_at(h, c)).collect())
        .collect();

    for h in (0..t).rev() {
        for rho in 0..=h {
            // Marginal cost of one more error; clamp guards float noise
            // (the exact difference is non-negative).
            let d = (cost[h + 1][rho + 1] - cost[h + 1][rho]).max(0.0);
            let mut best_v = f64::INFINITY;
            let mut best_a = problem.candidates[0];
            for (i, &c) in problem.candidates.iter().enumerate() {
                let v = lengths_at[h][i] + d * cdfs_at[h][i];
                if v < best_v {
                    best_v = v;
                    best_a = c;
                }
            }
            policy[h][rho] = best_a;
            cost[h][rho] = cost[h + 1][rho] + best_v;
        }
    }

    Ok(PolicyTables {
        horizon: t,
        cost,
        policy,
    })
}

/// Exhaustive minimization over the full decision tree of error
/// outcomes, with no error-count state aggregation: every history node
/// gets its own scan over the candidate actions and the expectation is
/// accumulated branch by branch with probabilities `F(alpha)` and
/// `1 - F(alpha)`. Returns the optimal expected cost and the root action;
/// ties break toward the smallest action.
///
/// This is the testing oracle for [`solve`]. It performs pure
/// minimization: no special-casing of non-positive penalty weights.
pub fn brute_force_oracle(problem: &ScpProblem) -> Result<(f64, f64)> {
    if problem.horizon > 4 {
        return Err(BciError::GuardExceeded(format!(
            "horizon {} > 4",
            problem.horizon
        )));
    }
    if problem.candidates.len() > 12 {
        return Err(BciError::GuardExceeded(format!(
            "{} candidates > 12",
            problem.candidates.len()
        )));
    }
    if problem.candidates.is_empty() {
        return Err(BciError::NotReady("candidate set"));
    }

    fn descend(problem: &ScpProblem, h: usize, rho: usize) -> (f64, f64) {
        let t = problem.horizon;
        if h == t {
            let v = problem.lambda * (rho as f64 / t as f64 - problem.alpha_bar).max(0.0);
            return (v, f64::NAN);
        }
        // Each branch is explored independently per history node.
        let (cost_err, _) = descend(problem, h + 1, rho + 1);
        let (cost_ok, _) = descend(problem, h + 1, rho);
        let mut best_v = f64::INFINITY;
        let mut best_a = problem.candidates[0];
        for &c in problem.candidates.iter() {
            let p = problem.cdf_at(h, c);
            let v = problem.length_at(h, c) + p * cost_err + (1.0 - p) * cost_ok;
            if v < best_v {
                best_v = v;
                best_a = c;
            }
        }
        (best_v, best_a)
    }

    let (cost, action) = descend(problem, 0, 0);
    Ok((cost, action))
}

/// Expected cost of executing a solved policy, evaluated by forward
/// enumeration of the error paths; equals `tables.cost(0, 0)` for tables
/// produced by [`solve`] on the same problem.
pub fn policy_expected_cost(problem: &ScpProblem, tables: &PolicyTables) -> f64 {
    fn walk(problem: &ScpProblem, tables: &PolicyTables, h: usize, rho: usize) -> f64 {
        let t = problem.horizon;
        if h == t {
            return problem.lambda() * (rho as f64 / t as f64 - problem.alpha_bar()).max(0.0);
        }
        let alpha = tables.action(h, rho);
        let p = problem.cdf_at(h, alpha);
        problem.length_at(h, alpha)
            + p * walk(problem, tables, h + 1, rho + 1)
            + (1.0 - p) * walk(problem, tables, h + 1, rho)
    }
    walk(problem, tables, 0, 0)
}

/// Random planning instance for verification suites: strictly decreasing
/// length functions, an empirical CDF over freshly drawn PIT atoms, and
/// the atom grid plus 1 as candidates.
pub fn sample_problem<R: rand::Rng>(
    rng: &mut R,
    horizon: usize,
    lambda: f64,
    alpha_bar: f64,
    n_atoms: usize,
) -> ScpProblem {
    let mut sample: Vec<f64> = (0..n_atoms.max(1))
        .map(|_| rng.gen_range(0.01..0.99))
        .collect();
    let ecdf = EcdfSnapshot::from_values(sample.clone()).expect("non-empty sample");
    sample.sort_by(|a, b| a.partial_cmp(b).expect("no NaNs"));
    sample.dedup();
    let mut candidates = sample;
    if *candidates.last().expect("non-empty") < 1.0 {
        candidates.push(1.0);
    }

    let lengths: Vec<RealFn> = (0..horizon)
        .map(|_| {
            let base = rng.gen_range(0.0..2.0);
            let scale = rng.gen_range(0.5..5.0);
            let power = rng.gen_range(1..=3) as f64;
            Box::new(move |alpha: f64| base + scale * (1.0 - alpha).powf(power)) as RealFn
        })
        .collect();

    let cdfs: Vec<RealFn> = (0..horizon)
        .map(|_| {
            let snap = ecdf.clone();
            Box::new(move |alpha: f64| snap.cdf(alpha)) as RealFn
        })
        .collect();

    ScpProblem::new(lambda, alpha_bar, lengths, cdfs, candidates).expect("valid instance")
}
