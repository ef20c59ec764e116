//! Evaluation metrics and the stepsize-matching comparison protocol.
//!
//! Runs are compared by centered moving averages of the error indicator
//! and the interval length (window 500 by default), overall summary
//! statistics with infinite-length intervals reported separately, the
//! expected calibration curve of the raw PITs, and a variance-matching
//! search that picks the BCI stepsize whose local-miscoverage variance is
//! closest to a reference ACI run.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::control::RunRecord;
use crate::error::{BciError, Result};

/// Centered moving averages, defined only where a full window fits.
#[derive(Debug, Clone)]
pub struct LocalSeries {
    /// Averaging span is `2 * (window / 2) + 1` points centered at `t`.
    pub window: usize,
    /// Row indices (into the record) with a complete window.
    pub ts: Vec<usize>,
    pub miscov: Vec<f64>,
    /// Extended-real: any infinite length inside the window makes the
    /// local average infinite.
    pub length: Vec<f64>,
}

/// Overall summary of a run.
#[derive(Debug, Clone, Copy)]
pub struct SummaryStats {
    pub miscoverage: f64,
    /// Mean length over the finite-length rows only (0 when there are none).
    pub avg_length_finite: f64,
    pub frac_infinite: f64,
}

/// Centered moving averages of the error indicator and interval length.
pub fn local_metrics(record: &RunRecord, window: usize) -> Result<LocalSeries> {
    if window < 2 {
        return Err(BciError::param("window", "must be >= 2"));
    }
    let n = record.rows.len();
    if n <= window {
        return Err(BciError::InsufficientData {
            needed: window + 1,
            have: n,
        });
    }
    let half = window / 2;
    let span = 2 * half + 1;

    // Prefix sums; infinite lengths are excluded from the running sum and
    // tracked by count so they can poison exactly the windows they touch.
    let mut err_prefix = vec![0.0; n + 1];
    let mut len_prefix = vec![0.0; n + 1];
    let mut inf_prefix = vec![0usize; n + 1];
    for (i, row) in record.rows.iter().enumerate() {
        err_prefix[i + 1] = err_prefix[i] + if row.err { 1.0 } else { 0.0 };
        let finite = if row.length.is_finite() { row.length } else { 0.0 };
        len_prefix[i + 1] = len_prefix[i] + finite;
        inf_prefix[i + 1] = inf_prefix[i] + usize::from(row.length.is_infinite());
    }

    let mut ts = Vec::with_capacity(n - 2 * half);
    let mut miscov = Vec::with_capacity(n - 2 * half);
    let mut length = Vec::with_capacity(n - 2 * half);
    for center in half..n - half {
        let lo = center - half;
        let hi = center + half + 1;
        ts.push(center);
        miscov.push((err_prefix[hi] - err_prefix[lo]) / span as f64);
        if inf_prefix[hi] - inf_prefix[lo] > 0 {
            length.push(f64::INFINITY);
        } else {
            length.push((len_prefix[hi] - len_prefix[lo]) / span as f64);
        }
    }

    Ok(LocalSeries {
        window,
        ts,
        miscov,
        length,
    })
}

/// Overall miscoverage, finite-length average, and infinite fraction.
pub fn summarize(record: &RunRecord) -> Result<SummaryStats> {
    if record.rows.is_empty() {
        return Err(BciError::NotReady("run record"));
    }
    let n = record.rows.len() as f64;
    let errs = record.rows.iter().filter(|r| r.err).count() as f64;
    let infinite = record.rows.iter().filter(|r| r.length.is_infinite()).count();
    let finite_count = record.rows.len() - infinite;
    let finite_sum: f64 = record
        .rows
        .iter()
        .filter(|r| r.length.is_finite())
        .map(|r| r.length)
        .sum();
    Ok(SummaryStats {
        miscoverage: errs / n,
        avg_length_finite: if finite_count > 0 {
            finite_sum / finite_count as f64
        } else {
            0.0
        },
        frac_infinite: infinite as f64 / n,
    })
}

/// Expected calibration curve: for each grid rate `alpha`, the fraction
/// of recorded PITs strictly below it (the miscoverage a fixed-rate
/// policy at `alpha` would have realized).
pub fn ecc(betas: &[f64], alpha_grid: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = betas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("PITs are never NaN"));
    let n = sorted.len();
    alpha_grid
        .iter()
        .map(|&alpha| {
            let below = sorted.partition_point(|&b| b < alpha);
            let frac = if n == 0 { 0.0 } else { below as f64 / n as f64 };
            (alpha, frac)
        })
        .collect()
}

/// Default 101-point grid `{0, 0.01, ..., 1}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Outcome of the variance-matching search.
#[derive(Debug)]
pub struct MatchOutcome {
    pub chosen_c: f64,
    pub chosen_index: usize,
    pub aci_variance: f64,
    /// One `(c, local-miscoverage variance, record)` triple per grid value.
    pub trials: Vec<(f64, f64, RunRecord)>,
}

/// Pick the grid value whose local-miscoverage variance is closest to the
/// reference run's, from already-executed trials. Ties break toward the
/// smaller stepsize. Every trial must cover the same steps as the
/// reference so the variances are computed over an identical index range.
pub fn select_matching_c(
    reference: &RunRecord,
    window: usize,
    trials: Vec<(f64, RunRecord)>,
) -> Result<MatchOutcome> {
    if trials.is_empty() {
        return Err(BciError::NotReady("stepsize grid"));
    }
    let ref_local = local_metrics(reference, window)?;
    let aci_variance = population_variance(&ref_local.miscov);

    let mut evaluated = Vec::with_capacity(trials.len());
    for (c, record) in trials {
        if record.rows.len() != reference.rows.len() {
            return Err(BciError::param(
                "match trials",
                format!(
                    "trial for c={c} has {} rows, reference has {}",
                    record.rows.len(),
                    reference.rows.len()
                ),
            ));
        }
        let local = local_metrics(&record, window)?;
        evaluated.push((c, population_variance(&local.miscov), record));
    }

    let mut chosen_index = 0;
    let mut best_gap = f64::INFINITY;
    for (i, (_, var, _)) in evaluated.iter().enumerate() {
        let gap = (var - aci_variance).abs();
        if gap < best_gap {
            best_gap = gap;
            chosen_index = i;
        }
    }

    Ok(MatchOutcome {
        chosen_c: evaluated[chosen_index].0,
        chosen_index,
        aci_variance,
        trials: evaluated,
    })
}

/// Run the configurable runner over the stepsize grid and pick the value
/// matching the reference run's local-miscoverage variance.
pub fn match_stepsize<F>(
    reference: &RunRecord,
    window: usize,
    grid: &[f64],
    mut runner: F,
) -> Result<MatchOutcome>
where
    F: FnMut(f64) -> Result<RunRecord>,
{
    let mut trials = Vec::with_capacity(grid.len());
    for &c in grid {
        trials.push((c, runner(c)?));
    }
    select_matching_c(reference, window, trials)
}

fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

/// Write the per-run metrics file: one row per step with the local
/// columns filled only where a complete window exists. Infinite lengths
/// serialize as the literal token `inf`.
pub fn write_metrics_csv(
    path: &Path,
    record: &RunRecord,
    local: Option<&LocalSeries>,
) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,alpha,beta,err,length,local_miscov,local_length")?;
    for (i, row) in record.rows.iter().enumerate() {
        let (lm, ll) = match local {
            Some(series) if i >= series.ts[0] && i <= *series.ts.last().expect("non-empty") => {
                let k = i - series.ts[0];
                (fmt_value(series.miscov[k]), fmt_value(series.length[k]))
            }
            _ => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            row.t,
            fmt_value(row.alpha),
            fmt_value(row.beta),
            u8::from(row.err),
            fmt_value(row.length),
            lm,
            ll
        )?;
    }
    w.flush()
}

/// Write a `key,value` summary file in the given order.
pub fn write_summary_csv(path: &Path, pairs: &[(String, String)]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "key,value")?;
    for (k, v) in pairs {
        writeln!(w, "{k},{v}")?;
    }
    w.flush()
}

/// Write an expected-calibration-curve file.
pub fn write_ecc_csv(path: &Path, curve: &[(f64, f64)]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "alpha,ecc")?;
    for (alpha, value) in curve {
        writeln!(w, "{},{}", fmt_value(*alpha), fmt_value(*value))?;
    }
    w.flush()
}
