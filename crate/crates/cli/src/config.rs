//! Run configuration: one TOML file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use hele_shaw_core::dynamics::{EvolveOptions, FlowSign, Snapshots};
use hele_shaw_core::rescaling::log_schedule;
use hele_shaw_core::series::CoefficientSeries;
use hele_shaw_core::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Evolve,
    Suction,
    Perturb,
    Cascade,
    Decay,
    Moments,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Experiment::Evolve => "evolve",
            Experiment::Suction => "suction",
            Experiment::Perturb => "perturb",
            Experiment::Cascade => "cascade",
            Experiment::Decay => "decay",
            Experiment::Moments => "moments",
        };
        f.write_str(s)
    }
}

/// Which times end up in the output tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    /// Every accepted step.
    EveryStep,
    /// `intervals + 1` equally spaced times on `[0, t_end]`.
    Linear { intervals: usize },
    /// Log-spaced times on `[start, t_end]`.
    Log { start: f64, per_decade: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuctionConfig {
    pub deltas: Vec<f64>,
    /// Shape added to `ξ` with weight `δ`.
    pub template: Vec<[f64; 2]>,
    pub t_max: f64,
    /// Derivatives compared against the disk, `n = 0..=jmax`.
    pub jmax: usize,
    pub radius: f64,
    /// Deviations are measured on `[0, compare_fraction·t*]`.
    pub compare_fraction: f64,
}

impl Default for SuctionConfig {
    fn default() -> Self {
        SuctionConfig {
            deltas: vec![0.05, 0.01, 0.001],
            template: vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
            t_max: 2.0,
            jmax: 1,
            radius: 1.0,
            compare_fraction: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub tail: Vec<[f64; 2]>,
    pub rho: f64,
    pub k: u32,
    pub jmax: usize,
    pub radius: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            tail: vec![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1e-3, 0.0]],
            rho: 1.5,
            k: 1,
            jmax: 1,
            radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub degrees: Vec<usize>,
    pub radius: f64,
    pub intervals: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            degrees: vec![3, 6, 12, 24],
            radius: 1.0,
            intervals: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub window: [f64; 2],
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { window: [50.0, 500.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    /// Coefficients `a_1, a_2, …` as `[re, im]` pairs.
    pub initial: Vec<[f64; 2]>,
    pub sign: i32,
    pub t_end: f64,
    pub schedule: Schedule,
    pub rtol: f64,
    pub atol: f64,
    pub analysis_radius: f64,
    pub moment_order: usize,
    /// Smallest velocity grid.
    pub grid: usize,
    pub locally_univalent: bool,
    /// Jitter seed for the quadrature moment check.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub suction: SuctionConfig,
    pub perturb: PerturbConfig,
    pub cascade: CascadeConfig,
    pub decay: DecayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let o = EvolveOptions::default();
        RunConfig {
            experiment: None,
            initial: vec![[1.0, 0.0]],
            sign: 1,
            t_end: 1.0,
            schedule: Schedule::EveryStep,
            rtol: o.rtol,
            atol: o.atol,
            analysis_radius: o.analysis_radius,
            moment_order: 5,
            grid: o.min_grid,
            locally_univalent: false,
            seed: 0,
            out_dir: PathBuf::from("out"),
            suction: SuctionConfig::default(),
            perturb: PerturbConfig::default(),
            cascade: CascadeConfig::default(),
            decay: DecayConfig::default(),
        }
    }
}

/// Values given on the command line; each replaces the config entry.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub rtol: Option<f64>,
    pub t_end: Option<f64>,
    pub sign: Option<i32>,
    pub locally_univalent: bool,
    pub seed: Option<u64>,
}

fn series(pairs: &[[f64; 2]], name: &'static str) -> Result<CoefficientSeries, ConfigError> {
    let c: Vec<Complex64> = pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
    CoefficientSeries::new(c).map_err(|e| field(name, e.to_string()))
}

fn positive(v: f64, name: &'static str) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses and validates TOML text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<text>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(p) = &o.out {
            self.out_dir = p.clone();
        }
        if let Some(v) = o.rtol {
            self.rtol = v;
        }
        if let Some(v) = o.t_end {
            self.t_end = v;
        }
        if let Some(v) = o.sign {
            self.sign = v;
        }
        if o.locally_univalent {
            self.locally_univalent = true;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.initial_map()?;
        self.flow_sign()?;
        positive(self.t_end, "t_end")?;
        positive(self.rtol, "rtol")?;
        positive(self.atol, "atol")?;
        if !(self.analysis_radius > 1.0 && self.analysis_radius.is_finite()) {
            return Err(field("analysis_radius", format!("must exceed 1, got {}", self.analysis_radius)));
        }
        if !self.grid.is_power_of_two() || self.grid < 16 {
            return Err(field("grid", format!("must be a power of two >= 16, got {}", self.grid)));
        }
        match &self.schedule {
            Schedule::EveryStep => {}
            Schedule::Linear { intervals } if *intervals == 0 => {
                return Err(field("schedule.intervals", "must be at least 1"));
            }
            Schedule::Linear { .. } => {}
            Schedule::Log { start, per_decade } => {
                positive(*start, "schedule.start")?;
                if *start >= self.t_end {
                    return Err(field("schedule.start", format!("must be below t_end = {}", self.t_end)));
                }
                if *per_decade == 0 {
                    return Err(field("schedule.per_decade", "must be at least 1"));
                }
            }
        }
        series(&self.suction.template, "suction.template")?;
        if self.suction.deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(field("suction.deltas", "must be finite and nonnegative"));
        }
        positive(self.suction.t_max, "suction.t_max")?;
        if !(self.suction.compare_fraction > 0.0 && self.suction.compare_fraction < 1.0) {
            return Err(field("suction.compare_fraction", "must lie in (0, 1)"));
        }
        positive(self.suction.radius, "suction.radius")?;
        series(&self.perturb.tail, "perturb.tail")?;
        positive(self.perturb.rho, "perturb.rho")?;
        positive(self.perturb.radius, "perturb.radius")?;
        positive(self.cascade.radius, "cascade.radius")?;
        let d = &self.cascade.degrees;
        if d.len() < 2 || d[0] == 0 || d.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field("cascade.degrees", format!("need at least two increasing degrees, got {d:?}")));
        }
        if self.cascade.intervals == 0 {
            return Err(field("cascade.intervals", "must be at least 1"));
        }
        let [lo, hi] = self.decay.window;
        if !(lo > 0.0 && hi > lo) {
            return Err(field("decay.window", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn initial_map(&self) -> Result<CoefficientSeries, ConfigError> {
        if self.initial.is_empty() {
            return Err(field("initial", "needs at least the linear coefficient"));
        }
        series(&self.initial, "initial")
    }

    pub fn flow_sign(&self) -> Result<FlowSign, ConfigError> {
        FlowSign::try_from(self.sign).map_err(|e| field("sign", e.to_string()))
    }

    pub fn template(&self) -> CoefficientSeries {
        series(&self.suction.template, "suction.template").expect("validated")
    }

    pub fn tail(&self) -> CoefficientSeries {
        series(&self.perturb.tail, "perturb.tail").expect("validated")
    }

    pub fn snapshots(&self) -> Snapshots {
        match &self.schedule {
            Schedule::EveryStep => Snapshots::EveryStep,
            Schedule::Linear { intervals } => {
                Snapshots::Times(hele_shaw_core::perturbation::uniform_schedule(self.t_end, *intervals))
            }
            Schedule::Log { start, per_decade } => Snapshots::Times(log_schedule(*start, self.t_end, *per_decade)),
        }
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            rtol: self.rtol,
            atol: self.atol,
            analysis_radius: self.analysis_radius,
            locally_univalent: self.locally_univalent,
            min_grid: self.grid,
            snapshots: self.snapshots(),
            ..EvolveOptions::default()
        }
    }

    /// Rejects a config written for a different experiment.
    pub fn check_experiment(&self, wanted: Experiment) -> Result<(), ConfigError> {
        match self.experiment {
            Some(e) if e != wanted => Err(field(
                "experiment",
                format!("config is for `{e}`, but the `{wanted}` command was run"),
            )),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_field_names_the_field() {
        let err = RunConfig::parse("t_endd = 3.0\n").unwrap_err().to_string();
        assert!(err.contains("t_endd"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn bad_sign_names_the_field() {
        let err = RunConfig::parse("sign = 2\n").unwrap_err().to_string();
        assert!(err.starts_with("field `sign`"), "{err}");
    }

    #[test]
    fn log_schedule_needs_start_below_end() {
        let err = RunConfig::parse("t_end = 10.0\n[schedule]\nkind = \"log\"\nstart = 20.0\nper_decade = 4\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("schedule.start"), "{err}");
    }

    #[test]
    fn overrides_replace_entries() {
        let mut c = RunConfig::default();
        c.apply(&Overrides {
            rtol: Some(1e-7),
            sign: Some(-1),
            locally_univalent: true,
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!(c.rtol, 1e-7);
        assert_eq!(c.flow_sign().unwrap(), FlowSign::Suction);
        assert!(c.evolve_options().locally_univalent);
    }

    #[test]
    fn experiment_mismatch_rejected() {
        let c = RunConfig {
            experiment: Some(Experiment::Decay),
            ..RunConfig::default()
        };
        assert!(c.check_experiment(Experiment::Evolve).is_err());
        assert!(c.check_experiment(Experiment::Decay).is_ok());
    }
}
