use clap::Parser;
use rmf_core::Error as CoreError;
use rmf_lab::{execute, write_outputs, Command, ExperimentConfig, PhiSpec};
use serde_json::{json, Map, Value};
use std::path::PathBuf;
use std::process::ExitCode;

/// Every flag mirrors a key of the config file; flags win over the file.
#[derive(Parser, Debug)]
#[command(name = "rmf-lab", version, about = "Random multiplicative function experiments")]
#[command(allow_negative_numbers = true)]
struct Cli {
    command: Command,
    /// JSON config, or a previous run's summary to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: available cores; RMF_LAB_THREADS overrides).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    y: Option<Vec<f64>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    u: Option<Vec<f64>>,
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<f64>>,
    /// a,b
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    interval: Option<Vec<f64>>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    panel_width: Option<f64>,
    /// `unit`, `zero` or `b1:v1,b2:v2,...`
    #[arg(long)]
    phi: Option<String>,
    #[arg(long)]
    twist: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    y_exponent: Option<f64>,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    null_splits: Option<usize>,
    #[arg(long)]
    lattice: Option<usize>,
    #[arg(long)]
    gamma_lattice: Option<usize>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    k_scale: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    richardson: Option<Vec<f64>>,
    #[arg(long)]
    check: bool,
}

impl Cli {
    fn flag_map(&self) -> Result<Map<String, Value>, String> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("name", self.name.clone().map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("trials", self.trials.map(Value::from));
        put("x", self.x.clone().map(|v| json!(v)));
        put("y", self.y.clone().map(|v| json!(v)));
        put("eps", self.eps.map(|v| json!(v)));
        put("delta", self.delta.map(|v| json!(v)));
        put("u", self.u.clone().map(|v| json!(v)));
        put("L", self.l.map(|v| json!(v)));
        put("t", self.t.clone().map(|v| json!(v)));
        put("r", self.r.clone().map(|v| json!(v)));
        put("q", self.q.clone().map(|v| json!(v)));
        put("interval", self.interval.clone().map(|v| json!(v)));
        put("t_max", self.t_max.map(|v| json!(v)));
        put("panel_width", self.panel_width.map(|v| json!(v)));
        put("twist", self.twist.clone().map(Value::from));
        put("model", self.model.clone().map(Value::from));
        put("y_exponent", self.y_exponent.map(|v| json!(v)));
        put("resamples", self.resamples.map(Value::from));
        put("level", self.level.map(|v| json!(v)));
        put("null_splits", self.null_splits.map(Value::from));
        put("lattice", self.lattice.map(Value::from));
        put("gamma_lattice", self.gamma_lattice.map(Value::from));
        put("n_max", self.n_max.map(Value::from));
        put("k_scale", self.k_scale.clone().map(|v| json!(v)));
        put("samples", self.samples.map(Value::from));
        put("richardson", self.richardson.clone().map(|v| json!(v)));
        if self.check {
            put("check", Some(Value::Bool(true)));
        }
        if let Some(p) = &self.phi {
            m.insert("phi".into(), json!(PhiSpec::parse(p)?));
        }
        Ok(m)
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let flags = match cli.flag_map() {
        Ok(f) => f,
        Err(e) => return fail("config", e, 2),
    };
    let file = match &cli.config {
        None => None,
        Some(p) => match std::fs::read_to_string(p).map_err(|e| e.to_string()).and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string())) {
            Ok(v) => Some(v),
            Err(e) => return fail("config", format!("{}: {e}", p.display()), 2),
        },
    };
    let cfg = match ExperimentConfig::resolve(cli.command, file, flags) {
        Ok(c) => c,
        Err(e) => return fail("config", e.0, 2),
    };
    let threads = std::env::var("RMF_LAB_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).or(cli.threads);
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("runtime", e.to_string(), 1);
        }
    }
    let report = match execute(&cfg) {
        Ok(r) => r,
        Err(e) => {
            return match e.downcast_ref::<CoreError>() {
                Some(CoreError::Capacity { .. }) | Some(CoreError::OutOfRange { .. }) => fail("capacity", e.to_string(), 3),
                _ => fail("runtime", e.to_string(), 1),
            }
        }
    };
    for v in &report.verdicts {
        println!("{}", v.line());
    }
    match write_outputs(&cli.out_dir, &cfg, &report) {
        Ok([s, t]) => {
            eprintln!("wrote {} and {}", s.display(), t.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail("io", e.to_string(), 1),
    }
}
