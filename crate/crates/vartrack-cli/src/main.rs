//! Simulation runner: build a scenario, drive seeded Monte-Carlo repetitions
//! of the tracker over it, and write the result files.
//!
//! `run` writes four artifacts into the output directory: `ospa.csv` (the
//! aggregate error curve), `tracks.json` (per-run, per-step confirmed-track
//! beliefs), `runtime.json` (wall-clock statistics and failed-run log) and
//! `plot.gp` (a gnuplot script over the CSV). `validate` checks a config file
//! and echoes every effective constant.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::io::Write as IoWrite;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use vartrack::bus::NodePool;
use vartrack::config::LambdaShape;
use vartrack::eval::{monte_carlo, write_ospa_csv, MonteCarloResult, OspaConfig};
use vartrack::scenario::{
    make_crossing_scene, make_handover_scene, make_parallel_scene, RcsModel, Scene,
};
use vartrack::ModelConfig;

#[derive(Parser)]
#[command(
    name = "vartrack",
    version,
    about = "Signal-level multi-object tracking simulator for multi-sensor MIMO radar"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write ospa.csv, tracks.json, runtime.json, plot.gp.
    Run(RunArgs),
    /// Check a JSON config file and echo every effective constant.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario: crossing, parallel, handover, or a scene JSON file path.
    #[arg(long)]
    scenario: String,
    /// Monte-Carlo repetitions.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Base seed; repetition i derives its own child seed from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RCS fluctuation: 0 (constant) or 3 (chi-square, four degrees of
    /// freedom). Defaults to the scenario's own model.
    #[arg(long)]
    swerling: Option<u8>,
    /// JSON file of constant overrides by flat name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Smooth over the whole track history instead of the sliding window.
    #[arg(long)]
    full_smoothing: bool,
    /// Take a radar offline for a span of steps: "id:start-end" with an
    /// inclusive end, or "id:start-" for the rest of the run. Repeatable.
    #[arg(long)]
    drop_node: Vec<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// JSON config file of constant overrides.
    config: PathBuf,
}

/// Failures split by exit code: bad input versus a failed execution.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Config(_) => ExitCode::from(2),
            Failure::Runtime(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.message());
            f.code()
        }
    }
}

/// Apply a JSON object of overrides to the config. Numeric fields go through
/// the by-name setter; `lambda_shape` takes a string.
fn apply_config_file(cfg: &mut ModelConfig, path: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse {} as a JSON object", path.display()))?;
    for (name, value) in &map {
        if name == "lambda_shape" {
            let s = value
                .as_str()
                .ok_or_else(|| anyhow!("lambda_shape must be a string"))?;
            cfg.lambda_shape = match s {
                "dof_consistent" => LambdaShape::DofConsistent,
                "literal" => LambdaShape::Literal,
                other => return Err(anyhow!("unknown lambda_shape: {other}")),
            };
            continue;
        }
        let v = value
            .as_f64()
            .ok_or_else(|| anyhow!("{name} must be a number, got {value}"))?;
        cfg.set(name, v)?;
    }
    Ok(())
}

/// Parse one "id:start-end" dropout spec; the end is inclusive and may be
/// omitted for an open-ended outage.
fn parse_drop_spec(spec: &str) -> anyhow::Result<(u32, Range<usize>)> {
    let (id_part, span_part) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("expected id:start-end, got {spec:?}"))?;
    let id: u32 = id_part.parse().with_context(|| format!("bad node id in {spec:?}"))?;
    let (start_part, end_part) = span_part
        .split_once('-')
        .ok_or_else(|| anyhow!("expected start-end span in {spec:?}"))?;
    let start: usize =
        start_part.parse().with_context(|| format!("bad span start in {spec:?}"))?;
    let end = if end_part.is_empty() {
        usize::MAX
    } else {
        let e: usize = end_part.parse().with_context(|| format!("bad span end in {spec:?}"))?;
        if e < start {
            return Err(anyhow!("span end before start in {spec:?}"));
        }
        e.saturating_add(1)
    };
    Ok((id, start..end))
}

/// How each repetition obtains its scene.
enum ScenarioKind {
    Crossing,
    Parallel,
    Handover,
    File(Scene),
}

fn resolve_scenario(name: &str) -> anyhow::Result<ScenarioKind> {
    match name {
        "crossing" => Ok(ScenarioKind::Crossing),
        "parallel" => Ok(ScenarioKind::Parallel),
        "handover" => Ok(ScenarioKind::Handover),
        other => {
            let path = Path::new(other);
            if path.exists() {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read scene file {}", path.display()))?;
                let scene: Scene = serde_json::from_str(&text)
                    .with_context(|| format!("cannot parse scene file {}", path.display()))?;
                if scene.radars.is_empty() {
                    return Err(anyhow!("scene file has no radars"));
                }
                Ok(ScenarioKind::File(scene))
            } else {
                Err(anyhow!(
                    "unknown scenario {other:?}: expected crossing, parallel, handover or a \
                     scene JSON path"
                ))
            }
        }
    }
}

#[derive(Serialize)]
struct RuntimeReport<'a> {
    runs_requested: usize,
    runs_completed: usize,
    failures: &'a [(u64, String)],
    runtime: &'a vartrack::eval::RuntimeStats,
}

fn plot_script() -> &'static str {
    "set datafile separator comma\n\
     set xlabel 'time index'\n\
     set ylabel 'OSPA [m]'\n\
     set yrange [0:*]\n\
     set key top right\n\
     plot 'ospa.csv' using 1:2 with lines lw 2 title 'mean OSPA', \\\n\
     \x20    'ospa.csv' using 1:4 with lines title 'localization', \\\n\
     \x20    'ospa.csv' using 1:5 with lines title 'cardinality'\n"
}

fn run(args: RunArgs) -> Result<(), Failure> {
    if args.runs < 1 {
        return Err(Failure::Config(anyhow!("--runs must be at least 1")));
    }
    let rcs_override = match args.swerling {
        None => None,
        Some(0) => Some(RcsModel::Swerling0),
        Some(3) => Some(RcsModel::Swerling3),
        Some(other) => {
            return Err(Failure::Config(anyhow!("--swerling must be 0 or 3, got {other}")))
        }
    };
    let mut cfg = ModelConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(&mut cfg, path).map_err(Failure::Config)?;
    }
    if args.full_smoothing {
        cfg.smoothing_window = None;
    }
    let mut drops = Vec::new();
    for spec in &args.drop_node {
        drops.push(parse_drop_spec(spec).map_err(Failure::Config)?);
    }
    let kind = resolve_scenario(&args.scenario).map_err(Failure::Config)?;

    let factory = |seed: u64| -> (Scene, NodePool) {
        let mut scene = match &kind {
            // The crossing geometry is itself random; derive its stream from
            // the run seed so a run is one seed end to end.
            ScenarioKind::Crossing => {
                let mut scene_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5343_454e_4552_4e47);
                make_crossing_scene(&cfg, &mut scene_rng)
            }
            ScenarioKind::Parallel => make_parallel_scene(&cfg),
            ScenarioKind::Handover => make_handover_scene(&cfg),
            ScenarioKind::File(scene) => scene.clone(),
        };
        if let Some(model) = rcs_override {
            scene.rcs_model = model;
        }
        let mut pool = NodePool::new(scene.radars.iter().map(|r| r.id).collect());
        for (id, span) in &drops {
            pool = pool.with_dropout(*id, span.clone());
        }
        (scene, pool)
    };

    let ospa_cfg = OspaConfig::default();
    let result = monte_carlo(&cfg, factory, args.runs, args.seed, &ospa_cfg);
    if result.records.is_empty() {
        return Err(Failure::Runtime(anyhow!(
            "all {} runs failed; first failure: {}",
            args.runs,
            result.failures.first().map(|(_, m)| m.as_str()).unwrap_or("unknown")
        )));
    }

    write_outputs(&args.out, &args, &result).map_err(Failure::Runtime)?;

    let steady: Vec<f64> = result
        .curve
        .iter()
        .skip(result.curve.len() / 4)
        .map(|p| p.mean_ospa)
        .collect();
    let steady_mean = steady.iter().sum::<f64>() / steady.len().max(1) as f64;
    println!(
        "{} run(s) of {:?} complete ({} failed); mean OSPA {:.3} m over the last three \
         quarters; {:.3} s/step mean tracker time",
        result.records.len(),
        args.scenario,
        result.failures.len(),
        steady_mean,
        result.runtime.mean_s,
    );
    println!("wrote {}", args.out.join("ospa.csv").display());
    Ok(())
}

fn write_outputs(
    out_dir: &Path,
    args: &RunArgs,
    result: &MonteCarloResult,
) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;

    let mut csv = fs::File::create(out_dir.join("ospa.csv"))?;
    write_ospa_csv(result, &mut csv)?;

    let tracks = serde_json::json!({
        "scenario": args.scenario,
        "base_seed": args.seed,
        "runs": result.records,
    });
    let mut tracks_file = fs::File::create(out_dir.join("tracks.json"))?;
    serde_json::to_writer(&mut tracks_file, &tracks)?;
    tracks_file.write_all(b"\n")?;

    let report = RuntimeReport {
        runs_requested: args.runs,
        runs_completed: result.records.len(),
        failures: &result.failures,
        runtime: &result.runtime,
    };
    let mut runtime_file = fs::File::create(out_dir.join("runtime.json"))?;
    serde_json::to_writer_pretty(&mut runtime_file, &report)?;
    runtime_file.write_all(b"\n")?;

    fs::write(out_dir.join("plot.gp"), plot_script())?;
    Ok(())
}

/// Sanity checks beyond per-field validation: cross-field physics that a set
/// of individually fine constants can still get wrong.
fn physical_report(cfg: &ModelConfig) -> Result<String, anyhow::Error> {
    let radar = vartrack::signal::RadarNode::from_config(cfg, 0, Vector2::new(0.0, 0.0), 0.0);
    let mut notes = String::new();
    let unamb = radar.unambiguous_range();
    writeln!(notes, "derived: range_resolution_m = {}", radar.range_resolution()).unwrap();
    writeln!(notes, "derived: unambiguous_range_m = {unamb}").unwrap();
    writeln!(notes, "derived: n_samples = {}", radar.n_samples).unwrap();
    writeln!(notes, "derived: dt_s = {}", cfg.dt()).unwrap();
    if cfg.r_max_m > unamb + 1e-9 {
        return Err(anyhow!(
            "r_max_m = {} exceeds the unambiguous range {unamb}",
            cfg.r_max_m
        ));
    }
    if cfg.delta_minus >= cfg.delta_plus {
        return Err(anyhow!(
            "delta_minus = {} must lie below delta_plus = {}",
            cfg.delta_minus,
            cfg.delta_plus
        ));
    }
    if radar.n_samples < 2 {
        return Err(anyhow!("sample_rate_hz x pulse_duration_s gives fewer than 2 samples"));
    }
    Ok(notes)
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let mut cfg = ModelConfig::default();
    apply_config_file(&mut cfg, &args.config).map_err(Failure::Config)?;
    let notes = physical_report(&cfg).map_err(Failure::Config)?;
    println!("config {} is valid", args.config.display());
    for (name, value) in cfg.effective_constants() {
        println!("{name} = {value}");
    }
    print!("{notes}");
    Ok(())
}
