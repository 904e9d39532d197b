//! Experiment configuration: per-command defaults, overlays from a config file
//! and from flags, and validation against the core preconditions.

use clap::ValueEnum;
use rmf_core::coupling::CouplingParams;
use rmf_core::euler::ShiftParams;
use rmf_core::primes::MAX_TABLE_LIMIT;
use rmf_core::rmf::{Model, Twist};
use rmf_core::spectral::StepFunction;
use rmf_core::truncation::TruncationPlan;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SimulateSum,
    Truncate,
    Bracket,
    ChaosMeasure,
    ModifiedMoment,
    CouplingReport,
    VerifyPlancherel,
    Dickman,
    Tshift,
    ChainingDemo,
    Anatomy,
    MomentTrend,
    LimitTest,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::SimulateSum => "simulate-sum",
            Command::Truncate => "truncate",
            Command::Bracket => "bracket",
            Command::ChaosMeasure => "chaos-measure",
            Command::ModifiedMoment => "modified-moment",
            Command::CouplingReport => "coupling-report",
            Command::VerifyPlancherel => "verify-plancherel",
            Command::Dickman => "dickman",
            Command::Tshift => "tshift",
            Command::ChainingDemo => "chaining-demo",
            Command::Anatomy => "anatomy",
            Command::MomentTrend => "moment-trend",
            Command::LimitTest => "limit-test",
        }
    }
}

/// Real step function Φ: value `values[j]` on `(breaks[j-1], breaks[j]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSpec {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhiSpec {
    pub fn unit() -> Self {
        PhiSpec { breaks: vec![1.0], values: vec![1.0] }
    }

    pub fn step(&self) -> rmf_core::Result<StepFunction> {
        StepFunction::real(&self.breaks, &self.values)
    }

    /// `unit`, `zero`, or `b1:v1,b2:v2,...`.
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "unit" => return Ok(PhiSpec::unit()),
            "zero" => return Ok(PhiSpec { breaks: vec![], values: vec![] }),
            _ => {}
        }
        let mut spec = PhiSpec { breaks: vec![], values: vec![] };
        for piece in s.split(',') {
            let (b, v) = piece.split_once(':').ok_or_else(|| format!("phi piece `{piece}` is not `break:value`"))?;
            spec.breaks.push(b.trim().parse().map_err(|e| format!("phi break `{b}`: {e}"))?);
            spec.values.push(v.trim().parse().map_err(|e| format!("phi value `{v}`: {e}"))?);
        }
        Ok(spec)
    }
}

/// Everything that determines a run's output. Execution settings (output
/// directory, thread count) are deliberately not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    /// Output basename.
    pub name: String,
    pub seed: u64,
    pub trials: u64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    pub u: Vec<f64>,
    #[serde(rename = "L")]
    pub l: f64,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub interval: [f64; 2],
    pub t_max: f64,
    pub panel_width: f64,
    pub phi: PhiSpec,
    pub twist: Twist,
    pub model: Model,
    pub y_exponent: f64,
    pub resamples: usize,
    pub level: f64,
    pub null_splits: usize,
    /// Points per axis of the residual-field lattice.
    pub lattice: usize,
    /// Points per axis of the lattice used for the sup in γ_k.
    pub gamma_lattice: usize,
    pub n_max: u32,
    pub k_scale: Vec<f64>,
    /// Coupled-phase draws per y.
    pub samples: u64,
    pub richardson: Vec<f64>,
    pub check: bool,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let mut c = ExperimentConfig {
            command,
            name: command.as_str().to_string(),
            seed: 1,
            trials: 1000,
            x: vec![1e4],
            y: vec![1e4],
            eps: 0.1,
            delta: 0.05,
            u: vec![0.0, 1.0, 2.0],
            l: 1.0,
            t: vec![0.0, 0.5, 1.0],
            r: vec![0.1, 0.5],
            q: vec![0.5, 1.0],
            interval: [-0.5, 0.5],
            t_max: 50.0,
            panel_width: 1.0,
            phi: PhiSpec::unit(),
            twist: Twist::One,
            model: Model::Steinhaus,
            y_exponent: 0.9,
            resamples: 200,
            level: 0.95,
            null_splits: 200,
            lattice: 9,
            gamma_lattice: 64,
            n_max: 10,
            k_scale: vec![0.1, 1.0, 10.0],
            samples: 10_000,
            richardson: vec![0.02, 0.01, 0.005],
            check: false,
        };
        match command {
            Command::SimulateSum => {}
            Command::Truncate => c.trials = 200,
            Command::Bracket => {
                c.x = vec![1e4, 1e5, 1e6];
                c.trials = 300;
            }
            Command::ChaosMeasure => {
                c.y = vec![1e5];
                c.trials = 500;
            }
            Command::ModifiedMoment => {
                c.y = vec![1e2, 1e3, 1e4];
                c.u = vec![1.0];
                c.trials = 2000;
            }
            Command::CouplingReport | Command::ChainingDemo => {
                c.y = vec![1e2, 1e3, 1e4];
                c.u = vec![1.0, 2.0];
                c.t = vec![0.3, -0.2];
                c.trials = 300;
            }
            Command::VerifyPlancherel => {
                c.y = vec![50.0];
                c.trials = 1;
            }
            Command::Dickman => {
                c.eps = 0.2;
                c.delta = 0.2;
                c.t = vec![0.0, 1.0, 2.0];
            }
            Command::Tshift => c.y = vec![1e6],
            Command::Anatomy => {
                c.x = vec![1e4, 1e5, 1e6];
                c.y = vec![1e2, 1e3];
            }
            Command::MomentTrend => {
                c.x = vec![1e4, 1e5, 1e6, 1e7];
                c.trials = 2000;
            }
            Command::LimitTest => {
                c.x = vec![1e4, 1e5, 1e6];
                c.trials = 2000;
            }
        }
        c
    }

    /// Defaults for `command`, overlaid by `file` (a bare config, or a summary
    /// carrying one under `config`), then by `flags`.
    pub fn resolve(command: Command, file: Option<Value>, flags: Map<String, Value>) -> Result<Self, ConfigError> {
        let mut base = match serde_json::to_value(Self::defaults(command)) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("config serializes to an object"),
        };
        if let Some(v) = file {
            let v = match v {
                Value::Object(mut m) if m.contains_key("config") && m.contains_key("version") => m.remove("config").unwrap(),
                other => other,
            };
            let Value::Object(m) = v else {
                return Err(ConfigError("config file must hold a JSON object".into()));
            };
            if let Some(c) = m.get("command") {
                if c != &Value::String(command.as_str().into()) {
                    return Err(ConfigError(format!("config file is for command {c}, not {}", command.as_str())));
                }
            }
            overlay(&mut base, m)?;
        }
        overlay(&mut base, flags)?;
        let cfg: ExperimentConfig = serde_json::from_value(Value::Object(base)).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every parameter the chosen command reads before any compute.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        let finite = |name: &str, v: &[f64]| -> Result<(), ConfigError> {
            match v.iter().find(|x| !x.is_finite()) {
                Some(x) => Err(ConfigError(format!("{name} contains non-finite value {x}"))),
                None => Ok(()),
            }
        };
        let increasing = |name: &str, v: &[f64], min: f64| -> Result<(), ConfigError> {
            finite(name, v)?;
            if v.is_empty() {
                return Err(ConfigError(format!("{name} grid is empty")));
            }
            if v[0] < min {
                return Err(ConfigError(format!("{name} values must be >= {min}, got {}", v[0])));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError(format!("{name} grid must be strictly increasing")));
            }
            Ok(())
        };
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return err(format!("name must be a non-empty file stem, got {:?}", self.name));
        }
        finite("u", &self.u)?;
        finite("t", &self.t)?;
        finite("r", &self.r)?;
        finite("q", &self.q)?;
        finite("interval", &self.interval)?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return err(format!("level must lie in (0, 1), got {}", self.level));
        }
        if !(self.interval[0] < self.interval[1]) {
            return err(format!("interval must have a < b, got {:?}", self.interval));
        }
        let step = self.phi.step().map_err(|e| ConfigError(format!("phi: {e}")))?;
        let needs_trials = !matches!(self.command, Command::Dickman | Command::Tshift | Command::Anatomy | Command::ChainingDemo);
        if needs_trials && self.trials == 0 {
            return err("trials must be >= 1".into());
        }
        let steinhaus_only = !matches!(self.command, Command::ChaosMeasure | Command::ModifiedMoment);
        if steinhaus_only && self.model != Model::Steinhaus {
            return err(format!("{} supports only the steinhaus model", self.command.as_str()));
        }
        let limit = MAX_TABLE_LIMIT as f64;
        match self.command {
            Command::SimulateSum | Command::MomentTrend => {
                increasing("x", &self.x, 1.0)?;
                if self.x.windows(2).any(|w| w[0].floor() >= w[1].floor()) {
                    return err("x grid must have strictly increasing integer parts".into());
                }
                if *self.x.last().unwrap() > limit {
                    return err(format!("x exceeds table capacity {MAX_TABLE_LIMIT}"));
                }
                if self.command == Command::MomentTrend {
                    if self.x[0] < 3.0 {
                        return err("moment-trend needs x >= 3".into());
                    }
                    if self.q.is_empty() || self.q.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
                        return err(format!("q values must lie in (0, 1], got {:?}", self.q));
                    }
                }
            }
            Command::Truncate | Command::Bracket | Command::LimitTest => {
                increasing("x", &self.x, 3.0)?;
                if step.is_zero() {
                    return err("phi must be nonzero".into());
                }
                for &x in &self.x {
                    let plan = TruncationPlan::new(x, self.eps, self.delta, step.support()).map_err(|e| ConfigError(e.to_string()))?;
                    if plan.n_max() as f64 > limit {
                        return err(format!("A·x = {} exceeds table capacity {MAX_TABLE_LIMIT}", plan.n_max()));
                    }
                }
                if self.command == Command::LimitTest {
                    if !(self.y_exponent > 0.0 && self.y_exponent <= 1.0) {
                        return err(format!("y_exponent must lie in (0, 1], got {}", self.y_exponent));
                    }
                    if !(self.t_max > 0.0 && self.t_max.is_finite()) {
                        return err(format!("t_max must be positive, got {}", self.t_max));
                    }
                    if self.resamples == 0 || self.null_splits == 0 {
                        return err("resamples and null_splits must be >= 1".into());
                    }
                }
            }
            Command::ChaosMeasure | Command::ModifiedMoment => {
                increasing("y", &self.y, 3.0)?;
                if *self.y.last().unwrap() > limit {
                    return err(format!("y exceeds table capacity {MAX_TABLE_LIMIT}"));
                }
                if self.u.is_empty() {
                    return err("u list is empty".into());
                }
                for &y in &self.y {
                    for &u in &self.u {
                        ShiftParams::new(y, u).map_err(|e| ConfigError(e.to_string()))?;
                    }
                }
                if self.command == Command::ModifiedMoment && !(self.l > 0.0 && self.l.is_finite()) {
                    return err(format!("L must be positive, got {}", self.l));
                }
                if self.command == Command::ChaosMeasure && self.null_splits == 0 {
                    return err("null_splits must be >= 1".into());
                }
            }
            Command::CouplingReport | Command::ChainingDemo => {
                increasing("y", &self.y, 3.0)?;
                if *self.y.last().unwrap() > limit {
                    return err(format!("y exceeds table capacity {MAX_TABLE_LIMIT}"));
                }
                if self.u.len() != 2 || self.t.len() != 2 {
                    return err("coupling needs exactly two u values and two t values".into());
                }
                for &y in &self.y {
                    CouplingParams::new(self.twist, y, [self.u[0], self.u[1]], [self.t[0], self.t[1]])
                        .map_err(|e| ConfigError(e.to_string()))?;
                }
                if self.lattice < 2 || self.gamma_lattice < 2 {
                    return err("lattice sizes must be >= 2".into());
                }
                if self.n_max == 0 || self.n_max > 12 {
                    return err(format!("n_max must lie in 1..=12, got {}", self.n_max));
                }
                if self.command == Command::CouplingReport && self.samples == 0 {
                    return err("samples must be >= 1".into());
                }
                if self.command == Command::ChainingDemo && self.k_scale.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
                    return err(format!("k_scale values must be positive, got {:?}", self.k_scale));
                }
                if self.command == Command::ChainingDemo && self.trials == 0 {
                    return err("trials must be >= 1".into());
                }
            }
            Command::VerifyPlancherel => {
                increasing("y", &self.y, 2.0)?;
                if self.r.is_empty() || self.r.iter().any(|&r| !(r > 0.0)) {
                    return err(format!("r values must be positive, got {:?}", self.r));
                }
                if !(self.panel_width > 0.0 && self.panel_width.is_finite()) {
                    return err(format!("panel_width must be positive, got {}", self.panel_width));
                }
                if *self.y.last().unwrap() > 1e4 {
                    return err("verify-plancherel enumerates y-smooth numbers; y must be <= 1e4".into());
                }
            }
            Command::Dickman => {
                if !(self.eps > 0.0 && self.eps < 1.0 && self.delta > 0.0 && self.delta < 1.0) {
                    return err(format!("eps and delta must lie in (0, 1), got {} and {}", self.eps, self.delta));
                }
                if self.t.iter().any(|&t| t < 0.0) {
                    return err("Laplace variables t must be >= 0".into());
                }
                if self.richardson.len() < 2 || self.richardson.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
                    return err("richardson needs at least two deltas in (0, 1)".into());
                }
            }
            Command::Tshift => {
                increasing("y", &self.y, 3.0)?;
                if *self.y.last().unwrap() > limit {
                    return err(format!("y exceeds table capacity {MAX_TABLE_LIMIT}"));
                }
                if self.t.iter().any(|&t| t < 0.0) {
                    return err("t values must be >= 0".into());
                }
            }
            Command::Anatomy => {
                increasing("x", &self.x, 3.0)?;
                increasing("y", &self.y, 2.0)?;
                if *self.x.last().unwrap() > limit {
                    return err(format!("x exceeds table capacity {MAX_TABLE_LIMIT}"));
                }
            }
        }
        Ok(())
    }
}

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) -> Result<(), ConfigError> {
    for (k, v) in top {
        if !base.contains_key(&k) {
            return Err(ConfigError(format!("unknown config key `{k}`")));
        }
        base.insert(k, v);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn flags(v: Value) -> Map<String, Value> {
        match v {
            Value::Object(m) => m,
            _ => panic!(),
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = ExperimentConfig::defaults(Command::LimitTest);
        c.eps = 0.1 + 0.2;
        c.x = vec![12345.678901234567, 1e6];
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overlay_order_and_summary_files() {
        let file = json!({"version": "0.1.0", "config": {"command": "tshift", "y": [1e3, 1e4]}});
        let c = ExperimentConfig::resolve(Command::Tshift, Some(file), flags(json!({"t": [2.0]}))).unwrap();
        assert_eq!(c.y, vec![1e3, 1e4]);
        assert_eq!(c.t, vec![2.0]);
        let c = ExperimentConfig::resolve(Command::Tshift, Some(json!({"y": [1e3]})), flags(json!({"y": [50.0]}))).unwrap();
        assert_eq!(c.y, vec![50.0]);
    }

    #[test]
    fn validation_errors() {
        let bad = [
            (Command::Tshift, json!({"frobnicate": 1})),
            (Command::Tshift, json!({"y": [1e4, 1e3]})),
            (Command::Truncate, json!({"eps": 0.0})),
            (Command::Truncate, json!({"eps": 7.0})),
            (Command::Truncate, json!({"x": [1e9]})),
            (Command::Truncate, json!({"phi": {"breaks": [1.0, 0.5], "values": [1.0, 1.0]}})),
            (Command::SimulateSum, json!({"trials": 0})),
            (Command::CouplingReport, json!({"u": [1.0]})),
            (Command::MomentTrend, json!({"q": [1.5]})),
            (Command::SimulateSum, json!({"model": "gaussian-analog"})),
            (Command::VerifyPlancherel, json!({"r": [-0.1]})),
            (Command::ModifiedMoment, json!({"L": 0.0})),
            (Command::Dickman, json!({"richardson": [0.01]})),
        ];
        for (cmd, f) in bad {
            assert!(ExperimentConfig::resolve(cmd, None, flags(f.clone())).is_err(), "{f}");
        }
        let wrong = json!({"command": "dickman"});
        assert!(ExperimentConfig::resolve(Command::Tshift, Some(wrong), Map::new()).is_err());
        for cmd in Command::value_variants() {
            ExperimentConfig::resolve(*cmd, None, Map::new()).unwrap();
        }
    }

    #[test]
    fn phi_parsing() {
        assert_eq!(PhiSpec::parse("unit").unwrap(), PhiSpec::unit());
        let p = PhiSpec::parse("0.5:2,1:-1").unwrap();
        assert_eq!(p.breaks, vec![0.5, 1.0]);
        assert_eq!(p.values, vec![2.0, -1.0]);
        assert!(PhiSpec::parse("0.5").is_err());
        assert!(PhiSpec::parse("zero").unwrap().step().unwrap().is_zero());
    }
}
