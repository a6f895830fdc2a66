//! Run configuration: one JSON document, overridden field by field by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use surro_core::model::RhsMode;
use surro_core::problems::{FamilyDims, FamilyKind};
use surro_core::trainer::TrainerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyKind,
    pub dims: FamilyDims,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Worker pool size; `None` uses every core, 1 runs sequentially.
    pub workers: Option<usize>,
    pub time_limit_s: f64,
    /// Label MIP gap; `None` takes the family default.
    pub label_gap: Option<f64>,
    pub out: PathBuf,
    /// Dataset directory; `None` means `out`.
    pub data_dir: Option<PathBuf>,
    /// Trained artifact; `None` means `out/theta.json`.
    pub theta: Option<PathBuf>,
    pub surrogate: SurrogateOverrides,
    pub trainer: TrainerConfig,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateOverrides {
    pub cuts: Option<usize>,
    pub degree: Option<u32>,
    pub rhs_mode: Option<RhsMode>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            family: FamilyKind::Knapsack,
            dims: FamilyDims::default(),
            n_train: 50,
            n_test: 100,
            seed: 0,
            workers: None,
            time_limit_s: 3600.0,
            label_gap: None,
            out: PathBuf::from("out"),
            data_dir: None,
            theta: None,
            surrogate: SurrogateOverrides::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

/// Flags shared by every subcommand; each one set overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration (a previous run's manifest also works)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    pub family: Option<FamilyKind>,
    /// Hybrid horizon
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    /// Hybrid engine levels
    #[arg(long = "S")]
    pub levels: Option<u32>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Number of learned cuts (per batch for scheduling)
    #[arg(long)]
    pub cuts: Option<usize>,
    /// Polynomial degree of the cut features
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub time_limit_s: Option<f64>,
    #[arg(long)]
    pub label_gap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    s.parse().map_err(|e: surro_core::Error| e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        // A manifest wraps the effective config under "config".
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&text) {
            if let (Some(cfg), true) = (map.get("config"), map.contains_key("command")) {
                return serde_json::from_value(cfg.clone())
                    .with_context(|| format!("parsing manifest config in {}", path.display()));
            }
        }
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Config file (or defaults) with every given flag applied on top.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(o.family => c.family);
        set!(o.horizon => c.dims.horizon);
        set!(o.batches => c.dims.batches);
        set!(o.units => c.dims.units);
        set!(o.slots => c.dims.slots);
        set!(o.n_train => c.n_train);
        set!(o.n_test => c.n_test);
        set!(o.seed => c.seed);
        set!(o.time_limit_s => c.time_limit_s);
        set!(o.out => c.out);
        if o.levels.is_some() {
            c.dims.levels = o.levels;
        }
        if o.cuts.is_some() {
            c.surrogate.cuts = o.cuts;
        }
        if o.degree.is_some() {
            c.surrogate.degree = o.degree;
        }
        if o.workers.is_some() {
            c.workers = o.workers;
        }
        if o.label_gap.is_some() {
            c.label_gap = o.label_gap;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit_s > 0.0) {
            bail!("time_limit_s must be positive");
        }
        if let Some(g) = self.label_gap {
            if !(g >= 0.0) {
                bail!("label_gap must be non-negative");
            }
        }
        if let Some(s) = self.dims.levels {
            if !(1..=3).contains(&s) {
                bail!("engine levels S must be 1, 2 or 3");
            }
        }
        self.trainer.validate()?;
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out.clone())
    }

    pub fn theta_path(&self) -> PathBuf {
        self.theta.clone().unwrap_or_else(|| self.out.join("theta.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"family": "hybrid", "seed": 3, "n_train": 7, "dims": {"horizon": 6}}"#).unwrap();
        let o = Overrides {
            config: Some(path),
            seed: Some(9),
            levels: Some(2),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.family, FamilyKind::Hybrid);
        assert_eq!((c.seed, c.n_train, c.dims.horizon, c.dims.levels), (9, 7, 6, Some(2)));
        assert_eq!(c.n_test, 100);
    }

    #[test]
    fn unknown_fields_are_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "{\n  \"seed\": 1,\n  \"sed\": 2\n}").unwrap();
        let err = format!("{:#}", RunConfig::load(&path).unwrap_err());
        assert!(err.contains("sed") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let o = Overrides {
            time_limit_s: Some(0.0),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(&o).is_err());
    }
}
