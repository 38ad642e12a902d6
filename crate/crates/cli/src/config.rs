//! Command line and JSON configuration. Each experiment has one parameter
//! struct that is both a clap argument group and a strict serde record, with
//! the clap defaults as the single source of default values.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use srqe::model::ContactModel;

#[derive(Parser, Debug)]
#[command(name = "srqe", version, about = "Spectral and dynamical experiments on 3D contact sub-Riemannian quotients")]
pub struct Cli {
    /// JSON experiment config; replaces the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts (default `out`).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed for randomized steps (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Use the reference perturbation with this ε as the model.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "parameters", rename_all = "kebab-case")]
pub enum Command {
    /// Exact flat spectrum or assembled sector spectrum, with a Weyl fit.
    Spectrum(SpectrumParams),
    /// Weyl constant of the discretized model by sector inertia counts.
    Weyl(WeylParams),
    /// Heat kernel values, heat trace curve or Karamata constant.
    Heat(HeatParams),
    /// Concentration series, Cesàro statistics, density-one extraction.
    Qe(QeParams),
    /// Integrate the geodesic or Reeb flow from one start.
    Flow(FlowParams),
    /// Adiabatic invariant experiment over a sweep of ε.
    Spiral(SpiralParams),
    /// Birkhoff normal form of a graded symbol.
    Nf(NfParams),
    /// Birkhoff averages on the Bolza surface or the flat Reeb flow.
    Ergodic(ErgodicParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Weyl(_) => "weyl",
            Command::Heat(_) => "heat",
            Command::Qe(_) => "qe",
            Command::Flow(_) => "flow",
            Command::Spiral(_) => "spiral",
            Command::Nf(_) => "nf",
            Command::Ergodic(_) => "ergodic",
        }
    }

    pub fn parameters(&self) -> Value {
        match serde_json::to_value(self) {
            Ok(Value::Object(mut m)) => m.remove("parameters").unwrap_or(Value::Null),
            _ => Value::Null,
        }
    }
}

fn clap_defaults<T: Args>() -> T {
    #[derive(Parser)]
    struct Wrap<T: Args> {
        #[command(flatten)]
        inner: T,
    }
    Wrap::<T>::parse_from(["srqe"]).inner
}

macro_rules! clap_default {
    ($($t:ty),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                clap_defaults()
            }
        })*
    };
}

clap_default!(SpectrumParams, WeylParams, HeatParams, QeParams, FlowParams, SpiralParams, NfParams, ErgodicParams);

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSource {
    /// Closed-form flat spectrum.
    Exact,
    /// Lanczos eigenvalues of the sector discretizations of the model.
    Discrete,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    #[arg(long, default_value_t = 1000.0)]
    pub lambda_max: f64,
    #[arg(long, value_enum, default_value_t = SpectrumSource::Exact)]
    pub source: SpectrumSource,
    /// Lower end of the fit window (default λ_max/10).
    #[arg(long)]
    pub fit_lo: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub n_grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeylParams {
    #[arg(long, default_value_t = 20.0)]
    pub lambda_lo: f64,
    #[arg(long, default_value_t = 60.0)]
    pub lambda_hi: f64,
    #[arg(long, default_value_t = 48)]
    pub n_grid: usize,
    /// Grid of the gauge check run when the model carries a density.
    #[arg(long, default_value_t = 24)]
    pub gauge_n_grid: usize,
    #[arg(long, default_value_t = 1)]
    pub gauge_sector: i64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatExperiment {
    Kernel,
    Trace,
    Karamata,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatParams {
    #[arg(long, value_enum, default_value_t = HeatExperiment::Karamata)]
    pub experiment: HeatExperiment,
    /// Kernel times.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0])]
    pub t: Vec<f64>,
    /// Kernel point `x,y,z`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.0])]
    pub point: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub t_lo: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub t_hi: f64,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QeParams {
    #[arg(long, default_value_t = 1e4)]
    pub lambda_max: f64,
    /// Cutoffs at which Cesàro means and variances are reported.
    #[arg(long, value_delimiter = ',', default_values_t = [1e2, 1e3, 1e4])]
    pub checkpoints: Vec<f64>,
    /// Cutoff of the deficit series fed to the density-one extraction.
    #[arg(long, default_value_t = 2000.0)]
    pub kvn_lambda: f64,
    /// Sector whose lowest eigenvectors are classified.
    #[arg(long)]
    pub classify_sector: Option<i64>,
    #[arg(long, default_value_t = 24)]
    pub n_grid: usize,
    #[arg(long, default_value_t = 8)]
    pub classify_count: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Geodesic,
    Reeb,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Rk4,
    ImplicitMidpoint,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    #[arg(long, value_enum, default_value_t = FlowKind::Geodesic)]
    pub flow: FlowKind,
    #[arg(long, value_enum, default_value_t = SchemeKind::Rk4)]
    pub scheme: SchemeKind,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
    pub q: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, -0.5, 1.1])]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 10)]
    pub sample_every: usize,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpiralParams {
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025])]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub i0_scale: f64,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, value_enum, default_value_t = SchemeKind::Rk4)]
    pub scheme: SchemeKind,
    #[arg(long, default_value_t = 10.0)]
    pub flat_horizon: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NfMode {
    Semiglobal,
    Local,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfParams {
    /// Preset name (`H2`, `H2+u3`) or a file holding canonical text.
    #[arg(long, default_value = "H2+u3")]
    pub input: String,
    #[arg(long, default_value_t = 6)]
    pub order: u32,
    #[arg(long, value_enum, default_value_t = NfMode::Semiglobal)]
    pub mode: NfMode,
    /// Truncation of the input symbol (default: the order).
    #[arg(long)]
    pub truncation: Option<u32>,
    #[arg(long, default_value_t = srqe::normal_form::DEFAULT_LIE_ORDER)]
    pub max_lie_order: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErgodicSystem {
    Bolza,
    FlatReeb,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Disk,
    HalfDomain,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicParams {
    #[arg(long, value_enum, default_value_t = ErgodicSystem::Bolza)]
    pub system: ErgodicSystem,
    #[arg(long, value_enum, default_value_t = RegionKind::Disk)]
    pub region: RegionKind,
    /// Hyperbolic radius of the disk region.
    #[arg(long, default_value_t = 1.2)]
    pub radius: f64,
    #[arg(long, default_value_t = 12)]
    pub starts: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Start of the flat Reeb orbit.
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.2, 0.0])]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub checkpoints: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Weyl,
    Heat,
    Qe,
    Flow,
    Spiral,
    Nf,
    Ergodic,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: Option<ContactModel>,
    pub experiment: Experiment,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn command(&self) -> Result<Command, serde_json::Error> {
        let tagged = serde_json::json!({ "experiment": self.experiment, "parameters": self.parameters });
        serde_json::from_value(tagged)
    }
}

/// Fully resolved run.
#[derive(Clone, Debug)]
pub struct Job {
    pub model: ContactModel,
    pub command: Command,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Job {
    pub fn resolve(cli: Cli) -> Result<Self, String> {
        let (mut model, command, dir, seed) = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
                let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))?;
                let command = cfg.command().map_err(|e| format!("invalid parameters: {e}"))?;
                if let Some(sub) = &cli.command {
                    if sub.name() != command.name() {
                        return Err(format!("subcommand `{}` does not match config experiment `{}`", sub.name(), command.name()));
                    }
                }
                (cfg.model.unwrap_or_default(), command, cfg.output_dir, cfg.seed)
            }
            None => {
                let command = cli.command.clone().ok_or("a subcommand or --config is required")?;
                (ContactModel::default(), command, None, 0)
            }
        };
        if let Some(eps) = cli.epsilon {
            model = if model.is_flat() && model.coeff_a.is_zero() && model.coeff_b.is_zero() {
                ContactModel { density_h: model.density_h.clone(), ..ContactModel::reference_perturbation(eps) }
            } else {
                ContactModel { epsilon: eps, ..model }
            };
        }
        if cli.threads == Some(0) {
            return Err("--threads must be at least 1".into());
        }
        Ok(Job {
            model,
            command,
            output_dir: cli.output_dir.or(dir).unwrap_or_else(|| PathBuf::from("out")),
            seed: cli.seed.unwrap_or(seed),
            threads: cli.threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_agree_between_flags_and_json() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"experiment":"heat"}"#).unwrap();
        match cfg.command().unwrap() {
            Command::Heat(p) => {
                assert_eq!(p.experiment, HeatExperiment::Karamata);
                assert_eq!(p.t, vec![0.1, 1.0]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"experiment":"nf","sed":1}"#).is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"experiment":"nf","parameters":{"ordr":6}}"#).unwrap();
        assert!(cfg.command().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"experiment":"plot"}"#).is_err());
    }

    #[test]
    fn parameters_echo_roundtrips() {
        let cmd = Command::Nf(NfParams { order: 8, ..Default::default() });
        let cfg = ExperimentConfig {
            model: None,
            experiment: Experiment::Nf,
            parameters: cmd.parameters().as_object().unwrap().clone(),
            output_dir: None,
            seed: 0,
        };
        match cfg.command().unwrap() {
            Command::Nf(p) => assert_eq!(p.order, 8),
            other => panic!("{other:?}"),
        }
    }
}
