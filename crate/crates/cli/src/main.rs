use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ddlab::datagen::inspect_idx;
use ddlab::nnet::{gradient_suite, lift_suite, GRAD_TOL, LIFT_TOL};
use ddlab::sweep::{run_sweep, ExperimentKind, SweepConfig};
use serde_json::{Map, Value};

const EXIT_CELL_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "ddlab",
    version,
    about = "Double-descent sweeps with concatenated inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Min-norm linear regression over a grid of sample sizes.
    LinregSweep(SweepArgs),
    /// One-hidden-layer networks over a grid of widths.
    MlpSweep(SweepArgs),
    /// Per-epoch curves for each width.
    Epochwise(SweepArgs),
    /// KL bias-variance decomposition over split ensembles.
    Biasvar(SweepArgs),
    /// Check both lift identities on random networks.
    LiftCheck(CheckArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(CheckArgs),
    /// Print the header of an IDX file.
    IdxInspect { path: PathBuf },
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable); VALUE is JSON or a bare string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(short, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct CheckArgs {
    /// Number of random draws.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct ConfigError(String);

fn load_object(path: &Path) -> Result<Map<String, Value>, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ConfigError(format!(
            "config {} is not a JSON object",
            path.display()
        ))),
        Err(e) => Err(ConfigError(format!("config {}: {e}", path.display()))),
    }
}

fn check_key(key: &str, known: &[String]) -> Result<(), ConfigError> {
    if known.iter().any(|k| k == key) {
        Ok(())
    } else {
        Err(ConfigError(format!("unknown key '{key}'")))
    }
}

/// Config file, then `DDLAB_SEED`, then `--set` overrides, then flags.
fn resolve(kind: ExperimentKind, args: &SweepArgs) -> Result<SweepConfig, ConfigError> {
    let known = SweepConfig::known_keys();
    let mut map = match &args.config {
        Some(path) => load_object(path)?,
        None => Map::new(),
    };
    for key in map.keys() {
        check_key(key, &known)?;
    }
    if let Ok(seed) = std::env::var("DDLAB_SEED") {
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("DDLAB_SEED '{seed}' is not an unsigned integer")))?;
        map.insert("seed".into(), Value::from(seed));
    }
    for item in &args.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override '{item}' is not KEY=VALUE")))?;
        let key = key.trim();
        check_key(key, &known)?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
    }
    if let Some(dir) = &args.out {
        map.insert("out_dir".into(), Value::String(dir.display().to_string()));
    }
    if let Some(t) = args.threads {
        map.insert("threads".into(), Value::from(t));
    }
    if let Some(found) = map.get("experiment") {
        if found != &Value::String(kind.as_str().into()) {
            return Err(ConfigError(format!(
                "config experiment {found} does not match subcommand ({})",
                kind.as_str()
            )));
        }
    }
    map.insert("experiment".into(), Value::String(kind.as_str().into()));
    let cfg: SweepConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError(e.to_string()))?;
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(cfg)
}

fn run_sweep_command(kind: ExperimentKind, args: &SweepArgs) -> ExitCode {
    let cfg = match resolve(kind, args) {
        Ok(cfg) => cfg,
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    println!("{}", cfg.to_json_pretty());
    if args.verbose > 0 {
        eprintln!(
            "running {} ({} seeds) on {} threads",
            kind.as_str(),
            cfg.num_seeds,
            cfg.threads
        );
    }
    let start = Instant::now();
    let output = match run_sweep(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let code = match e {
                ddlab::Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_CELL_FAILED,
            };
            eprintln!("error: {e}");
            return ExitCode::from(code);
        }
    };
    let config_path = cfg.out_dir.join("config.json");
    let written = fs::create_dir_all(&cfg.out_dir)
        .and_then(|_| fs::write(&config_path, cfg.to_json_pretty() + "\n"))
        .map_err(|e| ddlab::Error::Config(format!("{}: {e}", config_path.display())))
        .and_then(|_| output.write(&cfg.out_dir));
    let files = match written {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CELL_FAILED);
        }
    };
    if args.verbose > 0 {
        eprintln!("finished in {:.1}s", start.elapsed().as_secs_f64());
        for f in &files {
            eprintln!("wrote {}", f.display());
        }
    }
    let failed = output.failed_cells();
    if failed > 0 {
        for cell in output.manifest.cells.iter().filter(|c| c.error.is_some()) {
            eprintln!(
                "failed cell: variant={} width={} seed={}: {}",
                cell.variant.as_str(),
                cell.width,
                cell.seed,
                cell.error.as_deref().unwrap_or("")
            );
        }
        eprintln!("error: {failed} cell(s) failed");
        return ExitCode::from(EXIT_CELL_FAILED);
    }
    ExitCode::SUCCESS
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::LinregSweep(a) => run_sweep_command(ExperimentKind::LinregSample, a),
        Command::MlpSweep(a) => run_sweep_command(ExperimentKind::MlpWidth, a),
        Command::Epochwise(a) => run_sweep_command(ExperimentKind::Epochwise, a),
        Command::Biasvar(a) => run_sweep_command(ExperimentKind::Biasvar, a),
        Command::Gradcheck(a) => match gradient_suite(a.draws.unwrap_or(100), a.seed) {
            Ok(r) => {
                println!(
                    "gradcheck {}: {} draws ({} redrawn near kinks), max relative deviation {:.3e} (tolerance {:e})",
                    verdict(r.passed()),
                    r.draws,
                    r.redrawn,
                    r.max_rel_dev,
                    GRAD_TOL
                );
                if r.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::LiftCheck(a) => match lift_suite(a.draws.unwrap_or(1000), a.seed) {
            Ok(r) => {
                println!(
                    "lift-check {}: {} draws, max |lift([x|x]) - f(x)| {:.3e}, max |lift([x1|x2]) - mean| {:.3e} (tolerance {:e})",
                    verdict(r.passed()),
                    r.draws,
                    r.max_self_dev,
                    r.max_pair_dev,
                    LIFT_TOL
                );
                if r.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::IdxInspect { path } => match inspect_idx(path) {
            Ok(h) => {
                let dims: Vec<String> = h.dims.iter().map(|d| d.to_string()).collect();
                println!("magic: 0x{:08x}", h.magic);
                println!("count: {}", h.count);
                println!("dims: {}", dims.join("x"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
