//! Batch front end: single runs, variant/wind/seed sweeps and plot-ready
//! data extraction, all driven by TOML scenario configs.

use crate::scenario::{
    run, write_step_csv, write_timing_csv, RunResult, RunSummary, ScenarioConfig, ScenarioError,
    Variant,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable that overrides any `--out` directory.
pub const OUT_ENV: &str = "CEMPC_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Data(String),
    #[error("{failed} of {total} sweep cells failed")]
    CellsFailed { failed: usize, total: usize },
}

impl CliError {
    /// Process exit code: 1 i/o, 2 bad config or data, 3 numerical failure,
    /// 4 safety-filter abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) | CliError::Data(_) => 2,
            CliError::Scenario(e) => {
                if e.is_safety_abort() {
                    4
                } else {
                    3
                }
            }
            CliError::CellsFailed { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cempc",
    version,
    about = "Learning-based sampling MPC with a barrier safety filter, simulated on a quadrotor in wind"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and write step, timing and summary files.
    Run(RunArgs),
    /// Run a grid of variants, wind speeds and seeds.
    Sweep(SweepArgs),
    /// Derive plot-ready series (tracking error, learned disturbance,
    /// barrier traces) from a step log.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML; unset keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Controller variant override.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Mean wind speed override (m/s).
    #[arg(long)]
    pub wind: Option<f64>,
    /// Planning horizon override in seconds, converted at the control rate.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; CEMPC_OUT wins over this flag.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Scenario TOML shared by every cell.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Variants to sweep (default: all four).
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// Wind speeds to sweep in m/s (default: 5, 8, 10, 12).
    #[arg(long, value_delimiter = ',')]
    pub winds: Vec<f64>,
    /// Seeds to sweep (default: 0).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Output directory; CEMPC_OUT wins over this flag.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the sweep (default: one per core).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Step CSV written by `run` or `sweep`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (default: next to the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Directory the outputs actually go to, after the environment override.
pub fn resolve_out_dir(flag: &Path, env_value: Option<OsString>) -> PathBuf {
    match env_value {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.to_path_buf(),
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ScenarioConfig::from_toml_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Horizon given in seconds, converted to control steps (at least one).
pub fn horizon_steps(seconds: f64, control_dt: f64) -> usize {
    ((seconds / control_dt).round() as usize).max(1)
}

fn apply_overrides(
    cfg: &mut ScenarioConfig,
    variant: Option<Variant>,
    wind: Option<f64>,
    horizon: Option<f64>,
    seed: Option<u64>,
) {
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(w) = wind {
        cfg.wind_speed = w;
    }
    if let Some(h) = horizon {
        cfg.cem.horizon = horizon_steps(h, cfg.control_dt);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
}

/// File stem identifying one run: variant, wind, horizon steps, seed.
pub fn run_stem(cfg: &ScenarioConfig) -> String {
    format!(
        "{}_w{}_h{}_seed{}",
        cfg.variant.name(),
        cfg.wind_speed,
        cfg.cem.horizon,
        cfg.seed
    )
}

/// Write the three per-run files and return the summary.
fn write_run_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    result: &RunResult,
) -> Result<RunSummary, CliError> {
    fs::create_dir_all(dir)?;
    let stem = run_stem(cfg);
    let steps_path = dir.join(format!("{stem}.steps.csv"));
    let timing_path = dir.join(format!("{stem}.timing.csv"));
    let summary_path = dir.join(format!("{stem}.summary.json"));

    let file = fs::File::create(&steps_path)?;
    write_step_csv(&result.records, std::io::BufWriter::new(file))?;
    let file = fs::File::create(&timing_path)?;
    write_timing_csv(&result.timings, std::io::BufWriter::new(file))?;

    let summary = RunSummary::new(cfg, result.metrics.clone());
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Data(format!("summary serialization: {e}")))?;
    json.push('\n');
    fs::write(&summary_path, json)?;

    println!("wrote {}", steps_path.display());
    println!("wrote {}", timing_path.display());
    println!("wrote {}", summary_path.display());
    Ok(summary)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_overrides(&mut cfg, args.variant, args.wind, args.horizon, args.seed);
    let out_dir = resolve_out_dir(&args.out, std::env::var_os(OUT_ENV));
    let result = run(&cfg)?;
    let summary = write_run_outputs(&out_dir, &cfg, &result)?;
    let m = &summary.metrics;
    println!(
        "variant={} wind={} seed={} rms_error={:.4} max_error={:.4} min_barrier={:.4} interventions={}",
        summary.variant, summary.wind_speed, summary.seed, m.rms_error, m.max_error, m.min_barrier,
        m.interventions
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let base = load_config(args.config.as_deref())?;
    let out_dir = resolve_out_dir(&args.out, std::env::var_os(OUT_ENV));
    fs::create_dir_all(&out_dir)?;

    let variants = if args.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        args.variants
    };
    let winds = if args.winds.is_empty() {
        vec![5.0, 8.0, 10.0, 12.0]
    } else {
        args.winds
    };
    let seeds = if args.seeds.is_empty() { vec![0] } else { args.seeds };

    let mut cells = Vec::new();
    for &variant in &variants {
        for &wind in &winds {
            for &seed in &seeds {
                let mut cfg = base.clone();
                cfg.variant = variant;
                cfg.wind_speed = wind;
                cfg.seed = seed;
                cells.push(cfg);
            }
        }
    }

    let run_cell = |cfg: &ScenarioConfig| -> Result<RunSummary, String> {
        let result = run(cfg).map_err(|e| e.to_string())?;
        write_run_outputs(&out_dir, cfg, &result).map_err(|e| e.to_string())
    };
    let results: Vec<Result<RunSummary, String>> = match args.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Data(format!("worker pool: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };

    let table_path = out_dir.join("table.csv");
    let mut table = String::from(
        "variant,wind,seed,status,rms_error,max_error,min_barrier,min_clearance,penetration_steps,interventions,gp_updates\n",
    );
    let jsonl_path = out_dir.join("summaries.jsonl");
    let mut jsonl = String::new();
    let mut failed = 0;
    for (cfg, res) in cells.iter().zip(&results) {
        match res {
            Ok(summary) => {
                let m = &summary.metrics;
                table.push_str(&format!(
                    "{},{},{},ok,{},{},{},{},{},{},{}\n",
                    cfg.variant.name(),
                    cfg.wind_speed,
                    cfg.seed,
                    m.rms_error,
                    m.max_error,
                    m.min_barrier,
                    m.min_clearance.map_or(String::new(), |v| v.to_string()),
                    m.penetration_steps,
                    m.interventions,
                    m.gp_updates
                ));
                jsonl.push_str(
                    &serde_json::to_string(summary)
                        .map_err(|e| CliError::Data(format!("summary serialization: {e}")))?,
                );
                jsonl.push('\n');
                println!(
                    "cell variant={} wind={} seed={}: rms_error={:.4} min_barrier={:.4}",
                    cfg.variant.name(),
                    cfg.wind_speed,
                    cfg.seed,
                    m.rms_error,
                    m.min_barrier
                );
            }
            Err(msg) => {
                failed += 1;
                table.push_str(&format!(
                    "{},{},{},\"{}\",,,,,,,\n",
                    cfg.variant.name(),
                    cfg.wind_speed,
                    cfg.seed,
                    msg.replace('"', "'")
                ));
                eprintln!(
                    "cell variant={} wind={} seed={} failed: {msg}",
                    cfg.variant.name(),
                    cfg.wind_speed,
                    cfg.seed
                );
            }
        }
    }
    fs::write(&table_path, table)?;
    fs::write(&jsonl_path, jsonl)?;
    println!("wrote {}", table_path.display());
    println!("wrote {}", jsonl_path.display());

    if failed > 0 {
        return Err(CliError::CellsFailed {
            failed,
            total: cells.len(),
        });
    }
    Ok(())
}

/// Parsed numeric CSV with named columns.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::Data(format!("{}: empty file", origin.display())))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
            let row = row.map_err(|e| {
                CliError::Data(format!("{}: line {}: {e}", origin.display(), i + 2))
            })?;
            if row.len() != columns.len() {
                return Err(CliError::Data(format!(
                    "{}: line {}: {} fields, expected {}",
                    origin.display(),
                    i + 2,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    fn col(&self, name: &str, origin: &Path) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| {
                CliError::Data(format!("{}: missing column '{name}'", origin.display()))
            })
    }
}

fn cmd_plot(args: PlotArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input)?;
    let table = Table::parse(&text, &args.input)?;
    let input = &args.input;

    let file_name = input
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("steps");
    let stem = file_name
        .strip_suffix(".steps.csv")
        .or_else(|| file_name.strip_suffix(".csv"))
        .unwrap_or(file_name);
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => input.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
    };
    fs::create_dir_all(&dir)?;

    let t = table.col("t", input)?;
    let want = |names: &[&str]| -> Result<Vec<usize>, CliError> {
        names.iter().map(|n| table.col(n, input)).collect()
    };

    // Tracking error per axis and norm.
    let p = want(&["px", "py", "pz", "pd_x", "pd_y", "pd_z"])?;
    let err_path = dir.join(format!("{stem}.err.csv"));
    let mut out = String::from("t,err_x,err_y,err_z,err_norm\n");
    for row in &table.rows {
        let ex = row[p[0]] - row[p[3]];
        let ey = row[p[1]] - row[p[4]];
        let ez = row[p[2]] - row[p[5]];
        let norm = (ex * ex + ey * ey + ez * ez).sqrt();
        out.push_str(&format!("{},{},{},{},{}\n", row[t], ex, ey, ez, norm));
    }
    fs::write(&err_path, out)?;

    // Learned disturbance against the true one, per axis with the posterior
    // standard deviation.
    let g = want(&[
        "disturbance_x",
        "gp_mean_x",
        "gp_sigma_x",
        "disturbance_y",
        "gp_mean_y",
        "gp_sigma_y",
        "disturbance_z",
        "gp_mean_z",
        "gp_sigma_z",
    ])?;
    let gp_path = dir.join(format!("{stem}.gp.csv"));
    let mut out =
        String::from("t,d_x,mu_x,sigma_x,d_y,mu_y,sigma_y,d_z,mu_z,sigma_z\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row[t],
            row[g[0]],
            row[g[1]],
            row[g[2]],
            row[g[3]],
            row[g[4]],
            row[g[5]],
            row[g[6]],
            row[g[7]],
            row[g[8]]
        ));
    }
    fs::write(&gp_path, out)?;

    // Safety traces.
    let c = want(&[
        "barrier",
        "extended_barrier",
        "lyapunov",
        "intervened",
        "min_clearance",
        "safe_radius",
    ])?;
    let cbf_path = dir.join(format!("{stem}.cbf.csv"));
    let mut out = String::from(
        "t,barrier,extended_barrier,lyapunov,intervened,min_clearance,safe_radius\n",
    );
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row[t], row[c[0]], row[c[1]], row[c[2]], row[c[3]], row[c[4]], row[c[5]]
        ));
    }
    fs::write(&cbf_path, out)?;

    println!("wrote {}", err_path.display());
    println!("wrote {}", gp_path.display());
    println!("wrote {}", cbf_path.display());
    Ok(())
}

/// Dispatch a parsed command line. The caller maps errors to exit codes.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Plot(args) => cmd_plot(args),
    }
}
