//! Subcommand implementations.
//!
//! Every command reads one config file, writes deterministic CSV outputs
//! into the chosen directory, and reports problems on a fixed exit-code
//! scheme: 2 for configuration, 3 for data, 4 for runtime failures.

use std::path::{Path, PathBuf};
use std::thread;

use bci_core::eval::{write_ecc_csv, write_metrics_csv, write_summary_csv};
use bci_core::forecast::{default_garch_init, ArForecaster, Forecaster, GarchForecaster, OracleGaussianForecaster};
use bci_core::{
    ar_fit, ecc, garch_fit, local_metrics, select_matching_c, summarize, synth_ar, synth_garch,
    synth_garch_switching, run_online, ArParams, ControllerKind, RunConfig, RunRecord, RunSeries,
};

use crate::config::{ControllerChoice, ExperimentConfig, ForecasterChoice, SynthModel, Task};
use crate::data::{ingest_csv, simple_returns, transform_return, transform_volatility};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Run,
    Match,
    Ecc,
    Synth,
    Fit,
}

/// One CLI invocation after argument parsing.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: CommandKind,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

/// Failure with its exit-code category.
#[derive(Debug)]
pub enum CliError {
    Config(Vec<String>),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Diagnostics, one per line.
    pub fn lines(&self) -> Vec<String> {
        match self {
            CliError::Config(errors) => errors.iter().map(|e| format!("config error: {e}")).collect(),
            CliError::Data(msg) => vec![format!("data error: {msg}")],
            CliError::Runtime(msg) => vec![format!("runtime error: {msg}")],
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn execute(inv: &Invocation) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&inv.config).map_err(CliError::Config)?;
    cfg.validate_for(inv.command).map_err(CliError::Config)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&inv.out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", inv.out.display())))?;

    match inv.command {
        CommandKind::Run => cmd_run(&cfg, inv),
        CommandKind::Match => cmd_match(&cfg, inv),
        CommandKind::Ecc => cmd_ecc(&cfg, inv),
        CommandKind::Synth => cmd_synth(&cfg, inv),
        CommandKind::Fit => cmd_fit(&cfg, inv),
    }
}

fn say(inv: &Invocation, message: String) {
    if !inv.quiet {
        println!("{message}");
    }
}

// The fitting input and the coverage target for the configured task.
fn load_series(cfg: &ExperimentConfig) -> Result<RunSeries, CliError> {
    let input = cfg.input.as_ref().expect("validated");
    let (_, values) = ingest_csv(input).map_err(|e| CliError::Data(e.to_string()))?;
    let task = cfg.task.expect("validated");
    let series = match task {
        Task::Return => {
            let returns = transform_return(&values).map_err(|e| CliError::Data(e.to_string()))?;
            RunSeries::univariate(returns)
        }
        Task::Volatility => {
            let returns = simple_returns(&values).map_err(|e| CliError::Data(e.to_string()))?;
            let squared = transform_volatility(&values).map_err(|e| CliError::Data(e.to_string()))?;
            RunSeries::new(squared, returns)
        }
        Task::Level => RunSeries::univariate(values),
    };
    series.map_err(|e| CliError::Data(e.to_string()))
}

fn build_forecaster(cfg: &ExperimentConfig) -> Box<dyn Forecaster> {
    match cfg.forecaster.expect("validated") {
        ForecasterChoice::Garch => Box::new(GarchForecaster::new(cfg.refit_every)),
        ForecasterChoice::Ar => Box::new(ArForecaster::new(cfg.ar_order, cfg.refit_every)),
        ForecasterChoice::OracleGaussian => {
            Box::new(OracleGaussianForecaster::new(cfg.garch.expect("validated")))
        }
    }
}

fn run_config(cfg: &ExperimentConfig) -> RunConfig {
    RunConfig {
        alpha_bar: cfg.alpha_bar,
        horizon: cfg.horizon,
        pit_window: cfg.pit_window,
        train: cfg.train,
    }
}

fn bci_kind(cfg: &ExperimentConfig, c: f64) -> ControllerKind {
    ControllerKind::Bci {
        c,
        lambda_max: cfg.lambda_max,
        lambda_init: cfg.lambda_init,
    }
}

fn stats_pairs(record: &RunRecord, prefix: &str) -> Result<Vec<(String, String)>, CliError> {
    let stats = summarize(record).map_err(runtime)?;
    Ok(vec![
        (format!("{prefix}steps"), record.rows.len().to_string()),
        (format!("{prefix}miscoverage"), stats.miscoverage.to_string()),
        (
            format!("{prefix}avg_length_finite"),
            stats.avg_length_finite.to_string(),
        ),
        (
            format!("{prefix}frac_infinite"),
            stats.frac_infinite.to_string(),
        ),
    ])
}

fn write_record_outputs(
    out: &Path,
    metrics_name: &str,
    record: &RunRecord,
    window: usize,
) -> Result<(), CliError> {
    let local = local_metrics(record, window).ok();
    write_metrics_csv(&out.join(metrics_name), record, local.as_ref()).map_err(runtime)
}

fn cmd_run(cfg: &ExperimentConfig, inv: &Invocation) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let mut forecaster = build_forecaster(cfg);
    let kind = match cfg.controller.expect("validated") {
        ControllerChoice::Naive => ControllerKind::Naive,
        ControllerChoice::Aci => ControllerKind::Aci { gamma: cfg.gamma_aci },
        ControllerChoice::Bci => bci_kind(cfg, cfg.c),
    };

    let record = run_online(&kind, forecaster.as_mut(), &series, &run_config(cfg)).map_err(runtime)?;
    record.validate().map_err(runtime)?;

    write_record_outputs(&inv.out, "metrics.csv", &record, cfg.window)?;
    let mut pairs = vec![("command".to_string(), "run".to_string())];
    pairs.extend(cfg.snapshot());
    if let Some(cap) = record.lambda_max {
        pairs.push(("lambda_max_used".to_string(), cap.to_string()));
    }
    pairs.extend(stats_pairs(&record, "")?);
    write_summary_csv(&inv.out.join("summary.csv"), &pairs).map_err(runtime)?;

    let stats = summarize(&record).map_err(runtime)?;
    say(
        inv,
        format!(
            "run: {} steps, miscoverage {:.4}, avg finite length {:.6}, frac infinite {:.4}",
            record.rows.len(),
            stats.miscoverage,
            stats.avg_length_finite,
            stats.frac_infinite
        ),
    );
    say(inv, format!("wrote {}", inv.out.join("metrics.csv").display()));
    Ok(())
}

fn cmd_match(cfg: &ExperimentConfig, inv: &Invocation) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let rc = run_config(cfg);

    let mut aci_forecaster = build_forecaster(cfg);
    let aci = run_online(
        &ControllerKind::Aci { gamma: cfg.gamma_aci },
        aci_forecaster.as_mut(),
        &series,
        &rc,
    )
    .map_err(runtime)?;

    // Grid runs are independent; fan out, then collect in grid order so
    // outputs stay deterministic.
    let trials: Vec<(f64, RunRecord)> = thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .c_grid
            .iter()
            .map(|&c| {
                let series = &series;
                let cfg = &cfg;
                scope.spawn(move || {
                    let mut forecaster = build_forecaster(cfg);
                    run_online(&bci_kind(cfg, c), forecaster.as_mut(), series, &rc)
                        .map(|record| (c, record))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("grid run panicked"))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(runtime)?;

    let outcome = select_matching_c(&aci, cfg.window, trials).map_err(runtime)?;

    write_record_outputs(&inv.out, "aci_metrics.csv", &aci, cfg.window)?;
    for (c, _, record) in &outcome.trials {
        write_record_outputs(&inv.out, &format!("bci_c{c}_metrics.csv"), record, cfg.window)?;
    }

    let mut pairs = vec![("command".to_string(), "match".to_string())];
    pairs.extend(cfg.snapshot());
    pairs.push(("aci_local_miscov_variance".to_string(), outcome.aci_variance.to_string()));
    for (c, var, _) in &outcome.trials {
        pairs.push((format!("bci_c{c}_local_miscov_variance"), var.to_string()));
    }
    pairs.push(("chosen_c".to_string(), outcome.chosen_c.to_string()));
    pairs.extend(stats_pairs(&aci, "aci_")?);
    let chosen = &outcome.trials[outcome.chosen_index].2;
    pairs.extend(stats_pairs(chosen, "bci_")?);
    write_summary_csv(&inv.out.join("summary.csv"), &pairs).map_err(runtime)?;

    say(
        inv,
        format!(
            "match: chose c = {} (aci variance {:.3e})",
            outcome.chosen_c, outcome.aci_variance
        ),
    );
    Ok(())
}

fn cmd_ecc(cfg: &ExperimentConfig, inv: &Invocation) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let mut forecaster = build_forecaster(cfg);
    // The PITs do not depend on the controller, so the cheapest one drives.
    let record = run_online(
        &ControllerKind::Naive,
        forecaster.as_mut(),
        &series,
        &run_config(cfg),
    )
    .map_err(runtime)?;

    let grid: Vec<f64> = (0..cfg.ecc_points)
        .map(|i| i as f64 / (cfg.ecc_points - 1) as f64)
        .collect();
    let curve = ecc(&record.betas(), &grid);
    write_ecc_csv(&inv.out.join("ecc.csv"), &curve).map_err(runtime)?;

    let worst = curve
        .iter()
        .map(|(a, v)| (v - a).abs())
        .fold(0.0_f64, f64::max);
    say(
        inv,
        format!(
            "ecc: {} grid points over {} PITs, max |ecc - alpha| = {:.4}",
            curve.len(),
            record.rows.len(),
            worst
        ),
    );
    Ok(())
}

fn cmd_synth(cfg: &ExperimentConfig, inv: &Invocation) -> Result<(), CliError> {
    let values = match cfg.synth_model.expect("validated") {
        SynthModel::Garch => {
            let params = cfg.garch.expect("validated");
            let returns = match cfg.switch_at {
                Some(switch) => {
                    let second = cfg.garch2.expect("validated");
                    synth_garch_switching(&params, &second, switch, cfg.n, cfg.seed)
                }
                None => synth_garch(&params, cfg.n, cfg.seed),
            };
            // Compound into a price path (base 100, n+1 rows) so the
            // return/volatility transforms recover the simulated returns.
            let mut prices = Vec::with_capacity(returns.len() + 1);
            let mut price = 100.0;
            prices.push(price);
            for r in returns {
                price *= 1.0 + r;
                prices.push(price);
            }
            prices
        }
        SynthModel::Ar => {
            let params = ArParams::new(
                cfg.ar_coeffs.clone().expect("validated"),
                cfg.ar_intercept,
                cfg.ar_noise_sd,
            )
            .map_err(|e| CliError::Config(vec![e.to_string()]))?;
            synth_ar(&params, cfg.n, cfg.seed)
        }
    };

    let path = inv.out.join("series.csv");
    let mut body = String::from("date,value\n");
    for (i, v) in values.iter().enumerate() {
        body.push_str(&format!("{},{}\n", i + 1, v));
    }
    std::fs::write(&path, body).map_err(runtime)?;
    say(inv, format!("synth: wrote {} rows to {}", values.len(), path.display()));
    Ok(())
}

fn cmd_fit(cfg: &ExperimentConfig, inv: &Invocation) -> Result<(), CliError> {
    let series = load_series(cfg)?;
    let mut pairs = vec![("command".to_string(), "fit".to_string())];

    match cfg.forecaster.expect("validated") {
        ForecasterChoice::Garch => {
            let returns = series.fit();
            let fit = garch_fit(returns, &default_garch_init(returns)).map_err(runtime)?;
            pairs.push(("model".to_string(), "garch".to_string()));
            pairs.push(("mu".to_string(), fit.params.mu.to_string()));
            pairs.push(("omega".to_string(), fit.params.omega.to_string()));
            pairs.push(("a".to_string(), fit.params.a.to_string()));
            pairs.push(("b".to_string(), fit.params.b.to_string()));
            pairs.push(("loglik".to_string(), fit.loglik.to_string()));
            pairs.push(("converged".to_string(), fit.converged.to_string()));
            pairs.push(("degenerate".to_string(), fit.degenerate.to_string()));
            say(
                inv,
                format!(
                    "fit garch: mu={} omega={} a={} b={} (loglik {:.3})",
                    fit.params.mu, fit.params.omega, fit.params.a, fit.params.b, fit.loglik
                ),
            );
        }
        ForecasterChoice::Ar => {
            let fit = ar_fit(series.fit(), cfg.ar_order).map_err(runtime)?;
            pairs.push(("model".to_string(), "ar".to_string()));
            pairs.push((
                "coeffs".to_string(),
                fit.params
                    .coeffs
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
            ));
            pairs.push(("intercept".to_string(), fit.params.intercept.to_string()));
            pairs.push(("noise_sd".to_string(), fit.params.noise_sd.to_string()));
            pairs.push(("ridged".to_string(), fit.ridged.to_string()));
            say(
                inv,
                format!(
                    "fit ar({}): coeffs {:?}, intercept {}, noise sd {}",
                    cfg.ar_order, fit.params.coeffs, fit.params.intercept, fit.params.noise_sd
                ),
            );
        }
        ForecasterChoice::OracleGaussian => unreachable!("rejected during validation"),
    }

    write_summary_csv(&inv.out.join("params.csv"), &pairs).map_err(runtime)?;
    say(inv, format!("wrote {}", inv.out.join("params.csv").display()));
    Ok(())
}
