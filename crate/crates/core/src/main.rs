use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sns_mimo::channel::SystemConfig;
use sns_mimo::harness::{
    self, convergence_csv, meta_path, metadata, parse_config, read_file, run_convergence, run_sweep, sweep_csv, write_file, CiTarget,
    HarnessError, SchemeKind, SweepSpec,
};

#[derive(Parser)]
#[command(name = "sns-mimo", version, about = "Monte-Carlo sweeps for successive null-space rate-splitting precoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average sum rate per scheme over a range of transmit powers.
    Sweep(SweepArgs),
    /// Averaged per-iteration SCA trace at one transmit power.
    Converge(ConvergeArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; a `.meta` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated transmit powers in dBm.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pt_dbm: Option<Vec<f64>>,
    /// Comma-separated schemes among sns, bd, dpc.
    #[arg(long, value_delimiter = ',', default_value = "sns,bd,dpc")]
    schemes: Vec<String>,
    /// Trial cap per power level.
    #[arg(long, default_value_t = harness::DEFAULT_MAX_TRIALS)]
    trials: usize,
    /// Target confidence half-width in bits per channel use.
    #[arg(long, default_value_t = harness::DEFAULT_HALF_WIDTH)]
    ci: f64,
    #[arg(long, default_value_t = harness::DEFAULT_CONFIDENCE)]
    confidence: f64,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pt_dbm: f64,
    /// Channel realizations to average.
    #[arg(long, default_value_t = harness::DEFAULT_REALIZATIONS)]
    trials: usize,
}

fn load_config(path: &Option<PathBuf>) -> Result<SystemConfig, HarnessError> {
    match path {
        Some(p) => parse_config(&read_file(p)?),
        None => Ok(SystemConfig::default()),
    }
}

fn with_pool<T>(workers: usize, f: impl FnOnce() -> Result<T, HarnessError> + Send) -> Result<T, HarnessError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    pool.install(f)
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn sweep(a: SweepArgs) -> Result<(), HarnessError> {
    let base = load_config(&a.common.config)?;
    let mut spec = SweepSpec::new(base);
    if let Some(p) = a.pt_dbm {
        spec.pt_dbm = p;
    }
    spec.schemes = a.schemes.iter().map(|s| SchemeKind::parse(s)).collect::<Result<_, _>>()?;
    spec.max_trials = a.trials;
    spec.ci = CiTarget { confidence: a.confidence, half_width: a.ci };
    spec.seed = a.common.seed;
    let rows = with_pool(a.common.workers, || run_sweep(&spec))?;
    write_file(&a.common.out, &sweep_csv(&rows))?;
    let mut schemes = spec.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let extra = [
        ("command", "sweep".to_string()),
        ("pt_dbm", fmt_list(&spec.pt_dbm)),
        ("schemes", schemes.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")),
        ("max_trials", spec.max_trials.to_string()),
        ("confidence", spec.ci.confidence.to_string()),
        ("ci_half_width", spec.ci.half_width.to_string()),
    ];
    write_file(&meta_path(&a.common.out), &metadata(&spec.base, spec.seed, &extra))
}

fn converge(a: ConvergeArgs) -> Result<(), HarnessError> {
    let cfg = load_config(&a.common.config)?.with_pt_dbm(a.pt_dbm);
    let trace = with_pool(a.common.workers, || run_convergence(&cfg, a.common.seed, a.trials))?;
    write_file(&a.common.out, &convergence_csv(&trace))?;
    let extra = [
        ("command", "converge".to_string()),
        ("pt_dbm", a.pt_dbm.to_string()),
        ("realizations", a.trials.to_string()),
        ("ordering", "identity".to_string()),
    ];
    write_file(&meta_path(&a.common.out), &metadata(&cfg, a.common.seed, &extra))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Converge(a) => converge(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
