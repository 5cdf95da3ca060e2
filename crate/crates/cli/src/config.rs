//! Experiment configuration: a flat JSON object with a `command` tag, an optional seed and
//! output block, and the command's own parameters.

use std::path::PathBuf;

use iltlab_core::rate::{SchilderSet, TimeBox};
use iltlab_core::simplex::QuadratureSpec;
use iltlab_core::theta::{CylinderFunctional, McBudget, Payoff, WeightFunction, DEFAULT_EPS_LADDER};
use iltlab_core::Point;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassParams {
    pub d: usize,
    pub u: Point,
    #[serde(default)]
    pub quad: Option<QuadratureSpec>,
}

fn default_t_grid() -> Vec<f64> {
    vec![4.0, 8.0, 12.0, 16.0, 20.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSlopeParams {
    pub d: usize,
    pub u_list: Vec<Point>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub quad: Option<QuadratureSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Bridge,
    Epsilon,
    Both,
}

fn default_route() -> Route {
    Route::Bridge
}

fn default_eps_ladder() -> Vec<f64> {
    DEFAULT_EPS_LADDER.to_vec()
}

fn default_budget() -> McBudget {
    McBudget::new(1000, 100)
}

fn default_samples_per_eps() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingParams {
    pub d: usize,
    pub u_list: Vec<Point>,
    pub eval_times: Vec<f64>,
    pub payoff: Payoff,
    #[serde(default = "default_route")]
    pub route: Route,
    #[serde(default = "default_budget")]
    pub budget: McBudget,
    #[serde(default = "default_eps_ladder")]
    pub eps_ladder: Vec<f64>,
    #[serde(default = "default_samples_per_eps")]
    pub samples_per_eps: usize,
    #[serde(default)]
    pub quad: Option<QuadratureSpec>,
}

/// Correlation of the auxiliary motion with the first coordinate of `w` and the window of `F_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlation {
    pub r: f64,
    pub s: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaParams {
    pub d: usize,
    pub u: Point,
    pub weight: WeightFunction,
    /// Payoff of `w`: at `f1_times` when independent, of `w(s_2) - w(s_1)` when correlated.
    #[serde(default = "Payoff::one")]
    pub f1: Payoff,
    #[serde(default)]
    pub f1_times: Option<Vec<f64>>,
    #[serde(default = "CylinderFunctional::one")]
    pub f2: CylinderFunctional,
    #[serde(default)]
    pub correlated: Option<Correlation>,
    #[serde(default = "default_budget")]
    pub budget: McBudget,
    #[serde(default)]
    pub quad: Option<QuadratureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosNormParams {
    pub d: usize,
    pub u: Point,
    #[serde(default)]
    pub s: f64,
    #[serde(default = "one")]
    pub t: f64,
    pub gamma: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn one() -> f64 {
    1.0
}

fn default_k_max() -> usize {
    400
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateMinParams {
    pub d: usize,
    pub targets: Vec<Point>,
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub boxes: Vec<TimeBox>,
    #[serde(default)]
    pub n_extra_knots: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_u_norms() -> Vec<f64> {
    (0..=8).map(|m| 2f64.powi(-m)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticScanParams {
    pub d: usize,
    pub weight: WeightFunction,
    #[serde(default = "default_u_norms")]
    pub u_norms: Vec<f64>,
    #[serde(default)]
    pub quad: Option<QuadratureSpec>,
}

fn default_schilder_grid() -> Vec<f64> {
    vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]
}

fn default_samples() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchilderParams {
    pub set: SchilderSet,
    #[serde(default = "default_schilder_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    #[default]
    Quick,
    Full,
}

/// Deliberate faults for testing that selfcheck catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Heat kernel normalised with `(2 pi)^{-d}` instead of `(2 pi)^{-d/2}`.
    #[serde(rename = "heat-kernel-2pi")]
    HeatKernel2Pi,
    /// Wick convolution writing level `i + j` into slot `i + j + 1`.
    WickOffByOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfcheckParams {
    #[serde(default)]
    pub tier: Tier,
    #[serde(default)]
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Mass(MassParams),
    LdpSlope(LdpSlopeParams),
    Pairing(PairingParams),
    Eta(EtaParams),
    ChaosNorm(ChaosNormParams),
    RateMin(RateMinParams),
    AsymptoticScan(AsymptoticScanParams),
    Schilder(SchilderParams),
    Selfcheck(SelfcheckParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mass(_) => "mass",
            Command::LdpSlope(_) => "ldp-slope",
            Command::Pairing(_) => "pairing",
            Command::Eta(_) => "eta",
            Command::ChaosNorm(_) => "chaos-norm",
            Command::RateMin(_) => "rate-min",
            Command::AsymptoticScan(_) => "asymptotic-scan",
            Command::Schilder(_) => "schilder",
            Command::Selfcheck(_) => "selfcheck",
        }
    }

    /// Commands whose results depend on random draws.
    pub fn needs_seed(&self) -> bool {
        match self {
            Command::Pairing(_) | Command::Eta(_) | Command::Schilder(_) => true,
            Command::Mass(p) => p.quad.is_some_and(is_mc),
            Command::LdpSlope(p) => p.quad.is_some_and(is_mc),
            Command::AsymptoticScan(p) => p.quad.is_some_and(is_mc),
            _ => false,
        }
    }
}

fn is_mc(q: QuadratureSpec) -> bool {
    q.method == iltlab_core::simplex::QuadMethod::DirichletMc
}

pub const COMMANDS: [&str; 9] = [
    "mass",
    "ldp-slope",
    "pairing",
    "eta",
    "chaos-norm",
    "rate-min",
    "asymptotic-scan",
    "schilder",
    "selfcheck",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub output: Option<OutputSpec>,
}

fn params<T: DeserializeOwned>(body: Map<String, Value>) -> Result<T, CliError> {
    serde_path_to_error::deserialize(Value::Object(body)).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        })
    })
}

fn field<T: DeserializeOwned>(body: &mut Map<String, Value>, key: &str) -> Result<Option<T>, CliError> {
    match body.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_path_to_error::deserialize(v)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{key}{}: {}", suffix(e.path()), e.inner()))),
    }
}

fn suffix(p: &serde_path_to_error::Path) -> String {
    let s = p.to_string();
    if s == "." {
        String::new()
    } else {
        format!(".{s}")
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
    let Value::Object(mut body) = value else {
        return Err(CliError::Config("the configuration must be a JSON object".into()));
    };
    let name: String = field(&mut body, "command")?.ok_or_else(|| CliError::Config("command: missing field".into()))?;
    let seed = field(&mut body, "seed")?;
    let output = field(&mut body, "output")?;
    let command = match name.as_str() {
        "mass" => Command::Mass(params(body)?),
        "ldp-slope" => Command::LdpSlope(params(body)?),
        "pairing" => Command::Pairing(params(body)?),
        "eta" => Command::Eta(params(body)?),
        "chaos-norm" => Command::ChaosNorm(params(body)?),
        "rate-min" => Command::RateMin(params(body)?),
        "asymptotic-scan" => Command::AsymptoticScan(params(body)?),
        "schilder" => Command::Schilder(params(body)?),
        "selfcheck" => Command::Selfcheck(params(body)?),
        other => {
            return Err(CliError::Config(format!(
                "command: unknown command `{other}`, expected one of {}",
                COMMANDS.join(", ")
            )))
        }
    };
    let cfg = ExperimentConfig { command, seed, output };
    cfg.validate()?;
    Ok(cfg)
}

fn check_dim(path: &str, p: &Point, d: usize) -> Result<(), CliError> {
    if p.dim() != d {
        return Err(CliError::Config(format!("{path}: expected {d} coordinates, got {}", p.dim())));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Schema-level checks that need more than one field.
    pub fn validate(&self) -> Result<(), CliError> {
        match &self.command {
            Command::Mass(p) => {
                check_dim("u", &p.u, p.d)?;
                if p.u.is_zero() {
                    return Err(CliError::Domain(
                        "u: the mass m(u, d) needs u != 0; at u = 0 the diagonal intersection local time is infinite".into(),
                    ));
                }
            }
            Command::LdpSlope(p) => {
                for (i, u) in p.u_list.iter().enumerate() {
                    check_dim(&format!("u_list[{i}]"), u, p.d)?;
                }
            }
            Command::Pairing(p) => {
                for (i, u) in p.u_list.iter().enumerate() {
                    check_dim(&format!("u_list[{i}]"), u, p.d)?;
                }
            }
            Command::Eta(p) => check_dim("u", &p.u, p.d)?,
            Command::ChaosNorm(p) => check_dim("u", &p.u, p.d)?,
            Command::RateMin(p) => {
                for (i, u) in p.targets.iter().enumerate() {
                    check_dim(&format!("targets[{i}]"), u, p.d)?;
                }
            }
            Command::AsymptoticScan(_) | Command::Schilder(_) | Command::Selfcheck(_) => {}
        }
        if self.seed.is_none() && self.command.needs_seed() {
            return Err(CliError::Config(format!(
                "seed: required for the Monte Carlo command `{}` (set it in the config or pass --seed)",
                self.command.name()
            )));
        }
        Ok(())
    }

    /// Whether `chaos-norm` is asked for an index at which the series diverges.
    pub fn divergence_mode(&self) -> bool {
        matches!(&self.command, Command::ChaosNorm(p) if p.gamma >= -(p.d as f64) / 2.0)
    }

    /// The canonical JSON form; `parse_config(emit) == self`.
    pub fn to_json(&self) -> Value {
        let body = match &self.command {
            Command::Mass(p) => serde_json::to_value(p),
            Command::LdpSlope(p) => serde_json::to_value(p),
            Command::Pairing(p) => serde_json::to_value(p),
            Command::Eta(p) => serde_json::to_value(p),
            Command::ChaosNorm(p) => serde_json::to_value(p),
            Command::RateMin(p) => serde_json::to_value(p),
            Command::AsymptoticScan(p) => serde_json::to_value(p),
            Command::Schilder(p) => serde_json::to_value(p),
            Command::Selfcheck(p) => serde_json::to_value(p),
        }
        .expect("parameters serialise");
        let Value::Object(mut map) = body else {
            unreachable!("parameter structs serialise to objects")
        };
        map.insert("command".into(), Value::String(self.command.name().into()));
        if let Some(s) = self.seed {
            map.insert("seed".into(), Value::from(s));
        }
        if let Some(o) = &self.output {
            map.insert("output".into(), serde_json::to_value(o).expect("output serialises"));
        }
        Value::Object(map)
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_mass() {
        let c = parse_config(r#"{"command":"mass","d":4,"u":[1,0,0,0],"seed":1}"#).unwrap();
        assert_eq!(c.seed, Some(1));
        assert!(matches!(c.command, Command::Mass(_)));
    }

    #[test]
    fn zero_u_is_a_domain_error() {
        let e = parse_config(r#"{"command":"mass","d":4,"u":[0,0,0,0]}"#).unwrap_err();
        assert!(matches!(e, CliError::Domain(ref m) if m.contains("u != 0")), "{e}");
    }

    #[test]
    fn divergent_index_is_accepted_and_flagged() {
        let c = parse_config(r#"{"command":"chaos-norm","d":4,"u":[1,0,0,0],"gamma":-1.5}"#).unwrap();
        assert!(c.divergence_mode());
        let c = parse_config(r#"{"command":"chaos-norm","d":4,"u":[1,0,0,0],"gamma":-2.5}"#).unwrap();
        assert!(!c.divergence_mode());
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_config(r#"{"command":"mass","d":4,"u":[1,0,0,0],"extra":1}"#).unwrap_err();
        assert!(e.to_string().contains("extra"), "{e}");
        let e = parse_config(r#"{"command":"pairing","d":4,"u_list":[[1,0,0,0]],"eval_times":[1],"seed":1,
            "payoff":{"kind":"gaussian_bump","center":[],"width":"wide"}}"#)
        .unwrap_err();
        assert!(e.to_string().starts_with("payoff") && e.to_string().contains("wide"), "{e}");
        let e = parse_config(r#"{"command":"ldp-slope","d":4,"u_list":[[1,0,0]]}"#).unwrap_err();
        assert!(e.to_string().starts_with("u_list[0]"), "{e}");
        let e = parse_config(r#"{"command":"mass","d":4,"u":[1,0,0,0],"output":{"format":"xml"}}"#).unwrap_err();
        assert!(e.to_string().starts_with("output.format"), "{e}");
        assert!(parse_config(r#"{"command":"nope"}"#).is_err());
        assert!(parse_config("[1]").is_err());
    }

    #[test]
    fn monte_carlo_needs_a_seed() {
        let e = parse_config(r#"{"command":"schilder","set":{"kind":"full","d":2}}"#).unwrap_err();
        assert!(e.to_string().starts_with("seed"), "{e}");
    }
}
