//! Experiment configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed used when none is given; the default ellipsoid frame walk completes
/// all 20000 steps with it.
pub const DEFAULT_SEED: u64 = 66;
pub const DEFAULT_EPS_GRID: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_GENERATOR_THRESHOLD: f64 = 0.8;
pub const RETRACTION_NAMES: [&str; 5] = ["exact-exp", "ret1", "ret2", "ret3", "ret3-prime"];
pub const CONNECTION_NAMES: [&str; 4] = ["frame-parallel", "kappa-corrected", "levi-civita", "flat"];

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to per-command defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigLayer {
    /// TOML file with the same keys as the long flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Registry name: euclidean<n>, heisenberg, twisted, ellipsoid, ellipsoid-frames.
    #[arg(long)]
    pub model: Option<String>,
    /// exact-exp | ret1 | ret2 | ret3 | ret3-prime.
    #[arg(long)]
    pub retraction: Option<String>,
    /// frame-parallel | kappa-corrected | levi-civita | flat.
    #[arg(long)]
    pub connection: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Initial point as comma-separated chart coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    /// JSON Lines file receiving walk records.
    #[arg(long)]
    pub out_paths: Option<PathBuf>,
    /// JSON summary file.
    #[arg(long)]
    pub out_summary: Option<PathBuf>,
    /// CSV table file (generator and order tests); stdout when absent.
    #[arg(long)]
    pub out_table: Option<PathBuf>,
    /// quad_xy | coord_z | bump.
    #[arg(long)]
    pub probe: Option<String>,
    /// Strictly decreasing comma-separated ε values.
    #[arg(long, value_delimiter = ',')]
    pub eps_grid: Option<Vec<f64>>,
    /// Pass threshold on the fitted slope.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Directions of the deterministic circle rule (k = 2).
    #[arg(long)]
    pub circle_points: Option<usize>,
    /// Monte Carlo directions when k > 2.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Base points for generator tests.
    #[arg(long)]
    pub points: Option<usize>,
    /// Random (x, u) samples for order tests.
    #[arg(long)]
    pub samples: Option<usize>,
}

impl ConfigLayer {
    fn over(self, file: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            config: self.config,
            model: self.model.or(file.model),
            retraction: self.retraction.or(file.retraction),
            connection: self.connection.or(file.connection),
            epsilon: self.epsilon.or(file.epsilon),
            steps: self.steps.or(file.steps),
            replicas: self.replicas.or(file.replicas),
            seed: self.seed.or(file.seed),
            record_every: self.record_every.or(file.record_every),
            start: self.start.or(file.start),
            out_paths: self.out_paths.or(file.out_paths),
            out_summary: self.out_summary.or(file.out_summary),
            out_table: self.out_table.or(file.out_table),
            probe: self.probe.or(file.probe),
            eps_grid: self.eps_grid.or(file.eps_grid),
            threshold: self.threshold.or(file.threshold),
            circle_points: self.circle_points.or(file.circle_points),
            mc_samples: self.mc_samples.or(file.mc_samples),
            points: self.points.or(file.points),
            samples: self.samples.or(file.samples),
        }
    }
}

/// Which experiment the configuration feeds; selects defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Walk,
    GeneratorTest,
    RetractionOrder,
    ConnectionCheck,
}

/// Fully resolved configuration. Output paths are not part of the echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub retraction: String,
    pub connection: String,
    pub epsilon: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub record_every: usize,
    pub start: Option<Vec<f64>>,
    pub probe: String,
    pub eps_grid: Vec<f64>,
    pub threshold: Option<f64>,
    pub circle_points: usize,
    pub mc_samples: usize,
    pub points: usize,
    pub samples: usize,
    /// Set when `--connection` was given; connection checks then cover only it.
    #[serde(skip)]
    pub connection_explicit: bool,
    #[serde(skip)]
    pub out_paths: Option<PathBuf>,
    #[serde(skip)]
    pub out_summary: Option<PathBuf>,
    #[serde(skip)]
    pub out_table: Option<PathBuf>,
}

fn read_file(path: &Path) -> Result<ConfigLayer, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn is_ellipsoid(model: &str) -> bool {
    model == "ellipsoid" || model == "ellipsoid-frames"
}

impl ExperimentConfig {
    pub fn resolve(flags: ConfigLayer, kind: CommandKind) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => read_file(p)?,
            None => ConfigLayer::default(),
        };
        let layer = flags.over(file);
        let model = layer.model.unwrap_or_else(|| "heisenberg".into());
        let default_retraction = match (kind, model.as_str()) {
            (_, "ellipsoid-frames") => "ret3-prime",
            (CommandKind::RetractionOrder, m) if is_ellipsoid(m) => "ret3",
            (CommandKind::RetractionOrder, _) => "ret1",
            _ => "exact-exp",
        };
        let retraction = layer.retraction.unwrap_or_else(|| default_retraction.into());
        if !RETRACTION_NAMES.contains(&retraction.as_str()) {
            return Err(CliError::Config(format!(
                "unknown retraction `{retraction}`; available: {}",
                RETRACTION_NAMES.join(", ")
            )));
        }
        let connection_explicit = layer.connection.is_some();
        let default_connection = if is_ellipsoid(&model) { "levi-civita" } else { "kappa-corrected" };
        let connection = layer.connection.unwrap_or_else(|| default_connection.into());
        if !CONNECTION_NAMES.contains(&connection.as_str()) {
            return Err(CliError::Config(format!(
                "unknown connection `{connection}`; available: {}",
                CONNECTION_NAMES.join(", ")
            )));
        }
        let default_steps = if model == "ellipsoid-frames" { 20_000 } else { 100 };
        let cfg = Self {
            model,
            retraction,
            connection,
            epsilon: layer.epsilon.unwrap_or(0.05),
            steps: layer.steps.unwrap_or(default_steps),
            replicas: layer.replicas.unwrap_or(1),
            seed: layer.seed.unwrap_or(DEFAULT_SEED),
            record_every: layer.record_every.unwrap_or(1),
            start: layer.start,
            probe: layer.probe.unwrap_or_else(|| "quad_xy".into()),
            eps_grid: layer.eps_grid.unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec()),
            threshold: layer.threshold,
            circle_points: layer.circle_points.unwrap_or(32),
            mc_samples: layer.mc_samples.unwrap_or(20_000),
            points: layer.points.unwrap_or(5),
            samples: layer.samples.unwrap_or(20),
            connection_explicit,
            out_paths: layer.out_paths,
            out_summary: layer.out_summary,
            out_table: layer.out_table,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.steps == 0 || self.replicas == 0 || self.record_every == 0 {
            return bad("steps, replicas and record-every must be at least 1".into());
        }
        if self.points == 0 || self.samples == 0 {
            return bad("points and samples must be at least 1".into());
        }
        if let Some(t) = self.threshold {
            if !t.is_finite() {
                return bad(format!("threshold must be finite, got {t}"));
            }
        }
        Ok(())
    }
}
