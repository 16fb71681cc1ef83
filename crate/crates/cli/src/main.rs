use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Value, json};

use zeno_core::config::{ProtocolConfig, RunConfig, parse_config};
use zeno_core::fitting::{FitResult, SinusoidVariant, fit_damped_sinusoid, fit_inverse_n, fit_quadratic_vertex};
use zeno_core::oracle::validation_suite;
use zeno_core::output::{Provenance, emit_results, read_points_csv};
use zeno_core::protocols::{
    run_duration_scan, run_pulse_width_scan, run_snapshot, run_strength_scan, run_transport, run_zeno_scan,
};
use zeno_core::{ZenoError, measurement::write_records_csv};

const ENV_OUTPUT_DIR: &str = "ZENO_OUTPUT_DIR";
const ENV_WORKERS: &str = "ZENO_WORKERS";

#[derive(Parser)]
#[command(
    name = "zeno",
    version,
    about = "Spatial quantum Zeno simulator for a single trapped atom"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides ZENO_OUTPUT_DIR and the config).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Override ensemble.rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override ensemble.n_samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Loss against number of pulses at fixed total time.
    Zeno(RunArgs),
    /// Loss against pulse width.
    PulseWidth(RunArgs),
    /// Loss against pulse intensity for several N.
    Strength(RunArgs),
    /// Loss against total free-evolution time.
    Duration(RunArgs),
    /// Stepped pulse train dragging the atom.
    Transport(RunArgs),
    /// One traced trajectory: observables, final wavefunction and measurement records.
    Snapshot(RunArgs),
    /// Fit a curve family to a CSV of x,y[,stderr] rows.
    Fit {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short, value_enum)]
        family: Family,
        /// Upper x bound of the quadratic segment.
        #[arg(long)]
        domain_max: Option<f64>,
        /// Output JSON path; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the oracle suite and emit a pass/fail JSON report.
    Validate {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    InverseN,
    Quadratic,
    SinusoidTied,
    SinusoidFree,
}

fn exit_code(e: &ZenoError) -> u8 {
    match e {
        ZenoError::Config { .. } | ZenoError::InvalidParameter { .. } | ZenoError::Schedule(_) => 2,
        ZenoError::Fit(_) | ZenoError::FitNotConverged(_) => 4,
        ZenoError::Io(_) => 1,
        ZenoError::GridMismatch(_)
        | ZenoError::BoundaryContact(_)
        | ZenoError::NotNormalized(_)
        | ZenoError::PhaseCap { .. }
        | ZenoError::TrajectoryLost(_)
        | ZenoError::UnboundMode { .. } => 3,
    }
}

fn config_err(path: &str, reason: impl Into<String>) -> ZenoError {
    ZenoError::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

fn load_config(args: &RunArgs, kind: &str) -> Result<RunConfig, ZenoError> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| config_err("$", format!("{}: {e}", p.display())))?,
        None => format!(r#"{{"protocol": "{kind}"}}"#),
    };
    let mut cfg = parse_config(&text)?;
    if cfg.protocol.name() != kind {
        return Err(config_err(
            "protocol.kind",
            format!(
                "config describes `{}` but the `{kind}` command was run",
                cfg.protocol.name()
            ),
        ));
    }
    if let Some(seed) = args.seed {
        cfg.ensemble.rng_seed = seed;
    }
    if let Some(n) = args.samples {
        cfg.ensemble.n_samples = n;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    } else if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
        cfg.output.dir = dir;
    }
    // Overrides go through the parser again so the echoed config stays validated.
    parse_config(&cfg.to_json())
}

fn fit_json(r: Result<FitResult, ZenoError>) -> Value {
    match r {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn run(args: &RunArgs, kind: &str) -> Result<(), ZenoError> {
    let cfg = load_config(args, kind)?;
    if args.dry_run {
        println!("{}", cfg.to_json());
        return Ok(());
    }
    let sim = cfg.simulation();
    let ens = &cfg.ensemble;
    let dir = PathBuf::from(&cfg.output.dir);
    let (results, extra) = match &cfg.protocol {
        ProtocolConfig::Zeno(p) => {
            let sr = run_zeno_scan(&sim, p, ens)?;
            let fit = fit_json(fit_inverse_n(&sr.data_points()));
            (vec![sr], json!({ "fit_inverse_n": fit }))
        }
        ProtocolConfig::PulseWidth(p) => {
            let out = run_pulse_width_scan(&sim, p, ens)?;
            let data = out.scan.data_points();
            let extra = json!({
                "fit_tied": fit_json(fit_damped_sinusoid(&data, SinusoidVariant::Tied)),
                "fit_free": fit_json(fit_damped_sinusoid(&data, SinusoidVariant::Free)),
                "trace": out.trace,
            });
            fs::create_dir_all(&dir)?;
            out.trace
                .write_csv(fs::File::create(dir.join("pulse-width_trace.csv"))?)?;
            (vec![out.scan], extra)
        }
        ProtocolConfig::Strength(p) => {
            let series = run_strength_scan(&sim, p, ens)?;
            let extra = json!({ "series": series.iter().map(|s| json!({
                "n_pulses": s.n_pulses,
                "plateau": s.plateau,
                "fit_quadratic_vertex": s.fit,
                "fit_error": s.fit_error,
            })).collect::<Vec<_>>() });
            (series.into_iter().map(|s| s.scan).collect(), extra)
        }
        ProtocolConfig::Duration(p) => (run_duration_scan(&sim, p, ens)?, Value::Null),
        ProtocolConfig::Transport(p) => {
            let r = run_transport(&sim, p, ens)?;
            (vec![r.scan], json!({ "drift_speed_um_per_us": r.drift_speed }))
        }
        ProtocolConfig::Snapshot(p) => {
            let snap = run_snapshot(&sim, p, ens)?;
            return write_snapshot(&cfg, &snap, &dir);
        }
    };
    for path in emit_results(&cfg, &results, extra, &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn write_snapshot(cfg: &RunConfig, snap: &zeno_core::protocols::Snapshot, dir: &Path) -> Result<(), ZenoError> {
    fs::create_dir_all(dir)?;
    let o = &snap.outcome;
    let files = [
        "snapshot_trace.csv",
        "snapshot_psi.csv",
        "snapshot_records.csv",
        "snapshot_timeline.csv",
        "snapshot.json",
    ];
    let paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    o.trace.write_csv(fs::File::create(&paths[0])?)?;
    o.state.write_csv(fs::File::create(&paths[1])?)?;
    write_records_csv(&o.records, fs::File::create(&paths[2])?)?;
    snap.timeline.write_csv(fs::File::create(&paths[3])?)?;
    let prov = Provenance::of(cfg);
    let doc = json!({
        "config_hash": prov.config_hash,
        "seed": prov.seed,
        "config": cfg,
        "survival": o.survival,
        "readout": o.readout,
        "loss": o.loss,
        "lost": o.lost,
    });
    fs::write(&paths[4], serde_json::to_string_pretty(&doc).expect("serializes"))?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn fit(input: &Path, family: Family, domain_max: Option<f64>, output: Option<&Path>) -> Result<(), ZenoError> {
    let points = read_points_csv(fs::File::open(input)?)?;
    let result = match family {
        Family::InverseN => fit_inverse_n(&points)?,
        Family::Quadratic => {
            let top = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            fit_quadratic_vertex(&points, domain_max.unwrap_or(top))?
        }
        Family::SinusoidTied => fit_damped_sinusoid(&points, SinusoidVariant::Tied)?,
        Family::SinusoidFree => fit_damped_sinusoid(&points, SinusoidVariant::Free)?,
    };
    let text = serde_json::to_string_pretty(&result).expect("serializes");
    match output {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn validate(output: Option<&Path>) -> Result<bool, ZenoError> {
    let report = validation_suite(&Default::default())?;
    let text = serde_json::to_string_pretty(&report).expect("serializes");
    match output {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(report.passed)
}

fn init_workers() -> Result<(), ZenoError> {
    if let Ok(v) = std::env::var(ENV_WORKERS) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| config_err(ENV_WORKERS, format!("expected a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(ENV_WORKERS, e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Validate { output } = &cli.command {
        return match validate(output.as_deref()) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("error: oracle suite reported failures");
                ExitCode::from(3)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        };
    }
    let outcome = init_workers().and_then(|_| match &cli.command {
        Command::Zeno(a) => run(a, "zeno"),
        Command::PulseWidth(a) => run(a, "pulse-width"),
        Command::Strength(a) => run(a, "strength"),
        Command::Duration(a) => run(a, "duration"),
        Command::Transport(a) => run(a, "transport"),
        Command::Snapshot(a) => run(a, "snapshot"),
        Command::Fit {
            input,
            family,
            domain_max,
            output,
        } => fit(input, *family, *domain_max, output.as_deref()),
        Command::Validate { .. } => unreachable!("handled above"),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
