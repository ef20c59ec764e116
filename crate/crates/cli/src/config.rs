//! Flat `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, unknown and duplicate
//! keys are rejected, and every validation problem is reported at once
//! rather than one at a time.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use bci_core::GarchParams;

use crate::commands::CommandKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Return,
    Volatility,
    Level,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Return => "return",
            Task::Volatility => "volatility",
            Task::Level => "level",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecasterChoice {
    Garch,
    Ar,
    OracleGaussian,
}

impl fmt::Display for ForecasterChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecasterChoice::Garch => "garch",
            ForecasterChoice::Ar => "ar",
            ForecasterChoice::OracleGaussian => "oracle-gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerChoice {
    Naive,
    Aci,
    Bci,
}

impl fmt::Display for ControllerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerChoice::Naive => "naive",
            ControllerChoice::Aci => "aci",
            ControllerChoice::Bci => "bci",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthModel {
    Garch,
    Ar,
}

/// Parsed and domain-checked experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub forecaster: Option<ForecasterChoice>,
    pub controller: Option<ControllerChoice>,
    pub alpha_bar: f64,
    pub horizon: usize,
    pub pit_window: usize,
    pub c: f64,
    pub c_grid: Vec<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_init: Option<f64>,
    pub gamma_aci: f64,
    /// Refit cadence in observations; 0 fits once and keeps the parameters.
    pub refit_every: usize,
    pub seed: u64,
    /// Span of the centered local-metrics window.
    pub window: usize,
    /// Observations reserved for the initial fit.
    pub train: usize,
    pub ar_order: usize,
    pub input: Option<PathBuf>,
    /// Length of synthetic series.
    pub n: usize,
    pub synth_model: Option<SynthModel>,
    pub switch_at: Option<usize>,
    pub garch: Option<GarchParams>,
    pub garch2: Option<GarchParams>,
    pub ar_coeffs: Option<Vec<f64>>,
    pub ar_intercept: f64,
    pub ar_noise_sd: f64,
    pub ecc_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: None,
            forecaster: None,
            controller: None,
            alpha_bar: 0.1,
            horizon: 3,
            pit_window: 100,
            c: 0.5,
            c_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            lambda_max: None,
            lambda_init: None,
            gamma_aci: 0.1,
            refit_every: 1,
            seed: 42,
            window: 500,
            train: 250,
            ar_order: 1,
            input: None,
            n: 1000,
            synth_model: None,
            switch_at: None,
            garch: None,
            garch2: None,
            ar_coeffs: None,
            ar_intercept: 0.0,
            ar_noise_sd: 1.0,
            ecc_points: 101,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "task",
    "forecaster",
    "controller",
    "alpha_bar",
    "horizon",
    "pit_window",
    "c",
    "c_grid",
    "lambda_max",
    "lambda_init",
    "gamma_aci",
    "refit_every",
    "seed",
    "window",
    "train",
    "ar_order",
    "input",
    "n",
    "synth_model",
    "switch_at",
    "garch_mu",
    "garch_omega",
    "garch_a",
    "garch_b",
    "garch2_mu",
    "garch2_omega",
    "garch2_a",
    "garch2_b",
    "ar_coeffs",
    "ar_intercept",
    "ar_noise_sd",
    "ecc_points",
];

fn parse_f64(key: &str, value: &str, errors: &mut Vec<String>) -> Option<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => {
            errors.push(format!("{key}: `{value}` is not a finite number"));
            None
        }
    }
}

fn parse_usize(key: &str, value: &str, errors: &mut Vec<String>) -> Option<usize> {
    match value.parse::<usize>() {
        Ok(v) => Some(v),
        Err(_) => {
            errors.push(format!("{key}: `{value}` is not a non-negative integer"));
            None
        }
    }
}

fn parse_f64_list(key: &str, value: &str, errors: &mut Vec<String>) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    for item in value.split(',') {
        match item.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                errors.push(format!("{key}: `{}` is not a finite number", item.trim()));
                return None;
            }
        }
    }
    if out.is_empty() {
        errors.push(format!("{key}: list must not be empty"));
        return None;
    }
    Some(out)
}

impl ExperimentConfig {
    /// Parse a config file, collecting every problem before failing.
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let mut errors = Vec::new();
        let mut seen: BTreeMap<String, String> = BTreeMap::new();

        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                errors.push(format!("line {}: unknown key `{key}`", lineno + 1));
                continue;
            }
            if seen.insert(key.clone(), value).is_some() {
                errors.push(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }

        let mut cfg = ExperimentConfig::default();
        let mut garch_raw: BTreeMap<&str, f64> = BTreeMap::new();
        let mut garch2_raw: BTreeMap<&str, f64> = BTreeMap::new();

        for (key, value) in &seen {
            match key.as_str() {
                "task" => match value.as_str() {
                    "return" => cfg.task = Some(Task::Return),
                    "volatility" => cfg.task = Some(Task::Volatility),
                    "level" => cfg.task = Some(Task::Level),
                    other => errors.push(format!(
                        "task: `{other}` is not one of return, volatility, level"
                    )),
                },
                "forecaster" => match value.as_str() {
                    "garch" => cfg.forecaster = Some(ForecasterChoice::Garch),
                    "ar" => cfg.forecaster = Some(ForecasterChoice::Ar),
                    "oracle-gaussian" => cfg.forecaster = Some(ForecasterChoice::OracleGaussian),
                    other => errors.push(format!(
                        "forecaster: `{other}` is not one of garch, ar, oracle-gaussian"
                    )),
                },
                "controller" => match value.as_str() {
                    "naive" => cfg.controller = Some(ControllerChoice::Naive),
                    "aci" => cfg.controller = Some(ControllerChoice::Aci),
                    "bci" => cfg.controller = Some(ControllerChoice::Bci),
                    other => errors.push(format!(
                        "controller: `{other}` is not one of naive, aci, bci"
                    )),
                },
                "alpha_bar" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        cfg.alpha_bar = v;
                    }
                }
                "horizon" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.horizon = v;
                    }
                }
                "pit_window" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.pit_window = v;
                    }
                }
                "c" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        cfg.c = v;
                    }
                }
                "c_grid" => {
                    if let Some(v) = parse_f64_list(key, value, &mut errors) {
                        cfg.c_grid = v;
                    }
                }
                "lambda_max" => cfg.lambda_max = parse_f64(key, value, &mut errors),
                "lambda_init" => cfg.lambda_init = parse_f64(key, value, &mut errors),
                "gamma_aci" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        cfg.gamma_aci = v;
                    }
                }
                "refit_every" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.refit_every = v;
                    }
                }
                "seed" => match value.parse::<u64>() {
                    Ok(v) => cfg.seed = v,
                    Err(_) => errors.push(format!("seed: `{value}` is not a u64")),
                },
                "window" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.window = v;
                    }
                }
                "train" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.train = v;
                    }
                }
                "ar_order" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.ar_order = v;
                    }
                }
                "input" => cfg.input = Some(PathBuf::from(value)),
                "n" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.n = v;
                    }
                }
                "synth_model" => match value.as_str() {
                    "garch" => cfg.synth_model = Some(SynthModel::Garch),
                    "ar" => cfg.synth_model = Some(SynthModel::Ar),
                    other => errors.push(format!("synth_model: `{other}` is not garch or ar")),
                },
                "switch_at" => cfg.switch_at = parse_usize(key, value, &mut errors),
                "garch_mu" | "garch_omega" | "garch_a" | "garch_b" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        garch_raw.insert(&key.as_str()[6..], v);
                    }
                }
                "garch2_mu" | "garch2_omega" | "garch2_a" | "garch2_b" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        garch2_raw.insert(&key.as_str()[7..], v);
                    }
                }
                "ar_coeffs" => cfg.ar_coeffs = parse_f64_list(key, value, &mut errors),
                "ar_intercept" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        cfg.ar_intercept = v;
                    }
                }
                "ar_noise_sd" => {
                    if let Some(v) = parse_f64(key, value, &mut errors) {
                        cfg.ar_noise_sd = v;
                    }
                }
                "ecc_points" => {
                    if let Some(v) = parse_usize(key, value, &mut errors) {
                        cfg.ecc_points = v;
                    }
                }
                _ => unreachable!("key filtered above"),
            }
        }

        cfg.garch = assemble_garch("garch", &garch_raw, &mut errors);
        cfg.garch2 = assemble_garch("garch2", &garch2_raw, &mut errors);
        cfg.check_domains(&mut errors);

        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }

    fn check_domains(&self, errors: &mut Vec<String>) {
        if !(0.0 < self.alpha_bar && self.alpha_bar < 1.0) {
            errors.push(format!("alpha_bar: {} not in (0, 1)", self.alpha_bar));
        }
        if self.horizon == 0 {
            errors.push("horizon: must be >= 1".to_string());
        }
        if self.pit_window == 0 {
            errors.push("pit_window: must be >= 1".to_string());
        }
        if !(0.0 < self.c && self.c < 1.0) {
            errors.push(format!("c: {} not in (0, 1)", self.c));
        }
        for &c in &self.c_grid {
            if !(0.0 < c && c < 1.0) {
                errors.push(format!("c_grid: {c} not in (0, 1)"));
            }
        }
        if let Some(v) = self.lambda_max {
            if v <= 0.0 {
                errors.push(format!("lambda_max: {v} must be > 0"));
            }
        }
        if let Some(v) = self.lambda_init {
            if v < 0.0 {
                errors.push(format!("lambda_init: {v} must be >= 0"));
            }
            if let Some(cap) = self.lambda_max {
                if v > cap {
                    errors.push(format!("lambda_init: {v} exceeds lambda_max {cap}"));
                }
            }
        }
        if self.gamma_aci <= 0.0 {
            errors.push(format!("gamma_aci: {} must be > 0", self.gamma_aci));
        }
        if self.window < 2 {
            errors.push("window: must be >= 2".to_string());
        }
        if self.train == 0 {
            errors.push("train: must be >= 1".to_string());
        }
        if self.ar_order == 0 {
            errors.push("ar_order: must be >= 1".to_string());
        }
        if self.n == 0 {
            errors.push("n: must be >= 1".to_string());
        }
        if self.ecc_points < 2 {
            errors.push("ecc_points: must be >= 2".to_string());
        }
        if let Some(s) = self.switch_at {
            if s >= self.n {
                errors.push(format!("switch_at: {s} must be below n = {}", self.n));
            }
        }
        if self.ar_noise_sd < 0.0 {
            errors.push(format!("ar_noise_sd: {} must be >= 0", self.ar_noise_sd));
        }
    }

    /// Requirements that depend on the subcommand being executed.
    pub fn validate_for(&self, command: CommandKind) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        let needs_series = matches!(
            command,
            CommandKind::Run | CommandKind::Match | CommandKind::Ecc | CommandKind::Fit
        );

        if needs_series {
            if self.input.is_none() {
                errors.push("input: required for this command".to_string());
            }
            if self.task.is_none() {
                errors.push("task: required for this command".to_string());
            }
            if self.forecaster.is_none() {
                errors.push("forecaster: required for this command".to_string());
            }
            if let (Some(task), Some(forecaster)) = (self.task, self.forecaster) {
                match forecaster {
                    ForecasterChoice::Garch => {
                        if task != Task::Volatility {
                            errors.push(
                                "forecaster garch requires task = volatility".to_string(),
                            );
                        }
                        if self.train < 50 {
                            errors.push("train: garch fitting needs train >= 50".to_string());
                        }
                    }
                    ForecasterChoice::Ar => {
                        if task == Task::Volatility {
                            errors.push(
                                "forecaster ar requires task = return or level".to_string(),
                            );
                        }
                        if self.train < 10 * self.ar_order {
                            errors.push(format!(
                                "train: ar fitting needs train >= {}",
                                10 * self.ar_order
                            ));
                        }
                    }
                    ForecasterChoice::OracleGaussian => {
                        if task != Task::Return && task != Task::Level {
                            errors.push(
                                "forecaster oracle-gaussian requires task = return or level"
                                    .to_string(),
                            );
                        }
                        if self.garch.is_none() {
                            errors.push(
                                "garch_mu/omega/a/b: required by forecaster oracle-gaussian"
                                    .to_string(),
                            );
                        }
                    }
                }
            }
        }

        match command {
            CommandKind::Run => {
                if self.controller.is_none() {
                    errors.push("controller: required for run".to_string());
                }
            }
            CommandKind::Match => {
                if self.c_grid.is_empty() {
                    errors.push("c_grid: must not be empty".to_string());
                }
            }
            CommandKind::Fit => {
                if self.forecaster == Some(ForecasterChoice::OracleGaussian) {
                    errors.push("forecaster: oracle-gaussian has nothing to fit".to_string());
                }
            }
            CommandKind::Synth => match self.synth_model {
                None => errors.push("synth_model: required for synth".to_string()),
                Some(SynthModel::Garch) => {
                    if self.garch.is_none() {
                        errors.push("garch_mu/omega/a/b: required for synth_model garch".to_string());
                    }
                    if self.switch_at.is_some() && self.garch2.is_none() {
                        errors.push(
                            "garch2_mu/omega/a/b: required when switch_at is set".to_string(),
                        );
                    }
                }
                Some(SynthModel::Ar) => {
                    if self.ar_coeffs.is_none() {
                        errors.push("ar_coeffs: required for synth_model ar".to_string());
                    }
                    if self.switch_at.is_some() {
                        errors.push("switch_at: only supported for synth_model garch".to_string());
                    }
                }
            },
            CommandKind::Ecc => {}
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// The effective configuration as ordered `key,value` pairs for the
    /// summary file.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::new();
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        push("task", opt_str(&self.task));
        push("forecaster", opt_str(&self.forecaster));
        push("controller", opt_str(&self.controller));
        push("alpha_bar", self.alpha_bar.to_string());
        push("horizon", self.horizon.to_string());
        push("pit_window", self.pit_window.to_string());
        push("c", self.c.to_string());
        push(
            "c_grid",
            self.c_grid
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        );
        push("lambda_max", opt_num(&self.lambda_max));
        push("lambda_init", opt_num(&self.lambda_init));
        push("gamma_aci", self.gamma_aci.to_string());
        push("refit_every", self.refit_every.to_string());
        push("seed", self.seed.to_string());
        push("window", self.window.to_string());
        push("train", self.train.to_string());
        push("ar_order", self.ar_order.to_string());
        push(
            "input",
            self.input
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        pairs
    }
}

fn opt_str<T: fmt::Display>(value: &Option<T>) -> String {
    value.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn opt_num(value: &Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn assemble_garch(
    prefix: &str,
    raw: &BTreeMap<&str, f64>,
    errors: &mut Vec<String>,
) -> Option<GarchParams> {
    if raw.is_empty() {
        return None;
    }
    let fields = ["mu", "omega", "a", "b"];
    let missing: Vec<&str> = fields
        .iter()
        .filter(|f| !raw.contains_key(*f))
        .copied()
        .collect();
    if !missing.is_empty() {
        errors.push(format!("{prefix}_*: missing {}", missing.join(", ")));
        return None;
    }
    match GarchParams::new(raw["mu"], raw["omega"], raw["a"], raw["b"]) {
        Ok(p) => Some(p),
        Err(e) => {
            errors.push(format!("{prefix}_*: {e}"));
            None
        }
    }
}
