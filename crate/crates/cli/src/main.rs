use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gradtopo::config::{load_config, RunConfig};
use gradtopo::export::{
    extrude_to_stl, read_vtk, split_regions, write_fields, ContourPolygonSet, FieldSnapshot, RegionMask,
};
use gradtopo::optimizer::{write_history_csv, Problem, RunOutcome, RunStatus};
use rayon::prelude::*;

/// Two-scale phase-field topology optimization for plane elasticity.
///
/// Exit codes: 0 converged (or success), 1 error, 2 iteration cap reached.
#[derive(Parser, Debug)]
#[command(name = "gradtopo", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file; the built-in cantilever is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `optimizer.kappa2=4000`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the initial perturbation (overrides optimizer.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize one configuration.
    Run,
    /// Run one configuration per value of a key and tabulate the results.
    Sweep {
        /// `section.key=v1,v2,...`
        #[arg(long)]
        vary: String,
        /// Extra reference variant, `section.key=value` (repeatable).
        #[arg(long)]
        reference: Vec<String>,
    },
    /// Split a field snapshot at a chi threshold and extrude both parts.
    ExportStl {
        /// VTK snapshot written by `run`.
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        height: Option<f64>,
        #[arg(long)]
        phi_threshold: Option<f64>,
    },
    /// Check a configuration and list every violated constraint.
    Validate,
    /// Run the built-in cantilever benchmark.
    Bench,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRADTOPO_LOG", "warn")).init();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run => {
            let cfg = resolve_config(&cli.common, cli.common.config.is_none())?;
            cmd_run(&cfg)
        }
        Command::Bench => {
            let cfg = resolve_config(&cli.common, true)?;
            cmd_run(&cfg)
        }
        Command::Validate => cmd_validate(&cli.common),
        Command::Sweep { vary, reference } => cmd_sweep(&cli.common, vary, reference),
        Command::ExportStl {
            snapshot,
            threshold,
            height,
            phi_threshold,
        } => {
            let cfg = resolve_config(&cli.common, cli.common.config.is_none())?;
            cmd_export_stl(&cfg, snapshot, *threshold, *height, *phi_threshold)
        }
    }
}

fn common_overrides(common: &Common) -> Vec<String> {
    let mut o = common.overrides.clone();
    if let Some(seed) = common.seed {
        o.push(format!("optimizer.seed={seed}"));
    }
    if let Some(out) = &common.out {
        o.push(format!(
            "output.dir=\"{}\"",
            out.display().to_string().replace('\\', "\\\\").replace('"', "\\\"")
        ));
    }
    o
}

fn resolve_config(common: &Common, builtin: bool) -> Result<RunConfig> {
    let overrides = common_overrides(common);
    let cfg = match (&common.config, builtin) {
        (Some(path), false) => load_config(path, &overrides)?,
        _ => RunConfig::cantilever().with_overrides(&overrides)?,
    };
    Ok(cfg)
}

fn status_word(status: RunStatus) -> &'static str {
    match status {
        RunStatus::Converged => "converged",
        RunStatus::IterationCap => "iteration_cap",
    }
}

fn exit_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Converged => 0,
        RunStatus::IterationCap => 2,
    }
}

/// Optimize and write every enabled artifact into `cfg.output.dir`.
fn optimize(cfg: &RunConfig) -> Result<(Problem, RunOutcome)> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()).with_context(|| format!("writing {}", dir.display()))?;
    let problem = Problem::new(cfg)?;
    let outcome = problem.run()?;
    if cfg.output.csv {
        let path = dir.join("history.csv");
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_history_csv(&mut BufWriter::new(file), &outcome.history, cfg.output.csv_timing)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if cfg.output.vtk {
        write_fields(&dir.join("final.vtk"), &problem.mesh, &outcome.state)?;
    }
    if cfg.output.stl {
        let snap = FieldSnapshot::from_state(&problem.mesh, &outcome.state);
        write_region_stls(
            &snap,
            cfg.export.chi_threshold,
            cfg.export.phi_threshold,
            cfg.export.extrude_height,
            dir,
        )?;
    }
    Ok((problem, outcome))
}

fn summary_line(outcome: &RunOutcome) -> String {
    let s = &outcome.state;
    let drift = outcome.history.last().map_or(0.0, |r| r.volume_drift);
    format!(
        "status={} iterations={} compliance={:.6e} m_chi={:.6} objective={:.6e} max_von_mises={:.6e} sigma_pn={:.6} volume_drift={:.3e}",
        status_word(outcome.status),
        s.iter,
        s.compliance,
        s.m_chi,
        s.objective,
        s.max_von_mises,
        s.sigma_pn,
        drift
    )
}

fn cmd_run(cfg: &RunConfig) -> Result<u8> {
    let (_, outcome) = optimize(cfg)?;
    println!("{}", summary_line(&outcome));
    Ok(exit_code(outcome.status))
}

fn cmd_validate(common: &Common) -> Result<u8> {
    let Some(path) = &common.config else {
        bail!("validate needs --config");
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match RunConfig::from_toml_str(&text, &common_overrides(common)) {
        Ok(_) => {
            println!("valid");
            Ok(0)
        }
        Err(gradtopo::ConfigError::Invalid(violations)) => {
            for v in violations {
                println!("{v}");
            }
            Ok(1)
        }
        Err(e) => Err(e.into()),
    }
}

struct Variant {
    label: String,
    overrides: Vec<String>,
}

fn parse_vary(vary: &str) -> Result<(String, Vec<String>)> {
    let Some((key, list)) = vary.split_once('=') else {
        bail!("--vary expects section.key=v1,v2,...");
    };
    let values: Vec<String> = list
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        bail!("--vary {key}: empty value list");
    }
    Ok((key.trim().to_string(), values))
}

struct SweepRow {
    label: String,
    result: Result<(f64, f64, RunStatus, usize), String>,
}

fn cmd_sweep(common: &Common, vary: &str, reference: &[String]) -> Result<u8> {
    let (key, values) = parse_vary(vary)?;
    let base = resolve_config(common, common.config.is_none())?;
    let mut variants: Vec<Variant> = reference
        .iter()
        .map(|r| Variant {
            label: r.clone(),
            overrides: vec![r.clone()],
        })
        .collect();
    variants.extend(values.iter().map(|v| Variant {
        label: format!("{key}={v}"),
        overrides: vec![format!("{key}={v}")],
    }));
    let out_root = base.output.dir.clone();
    let rows: Vec<SweepRow> = variants
        .par_iter()
        .map(|v| {
            let run = || -> Result<(f64, f64, RunStatus, usize)> {
                let mut cfg = base.with_overrides(&v.overrides)?;
                cfg.output.dir = out_root.join(sanitize(&v.label));
                let (_, o) = optimize(&cfg)?;
                log::info!("{}: {}", v.label, summary_line(&o));
                Ok((o.state.compliance, o.state.m_chi, o.status, o.state.iter))
            };
            SweepRow {
                label: v.label.clone(),
                result: run().map_err(|e| format!("{e:#}")),
            }
        })
        .collect();

    let mut md = String::from("| variant | compliance | m_chi | convergence | iterations |\n|---|---|---|---|---|\n");
    let mut csv = String::from("variant,compliance,m_chi,convergence,iterations\n");
    for r in &rows {
        match &r.result {
            Ok((c, m, s, it)) => {
                let yes = if s.converged() { "YES" } else { "NO" };
                writeln!(md, "| {} | {c:.1} | {m:.3} | {yes} | {it} |", r.label)?;
                writeln!(csv, "{},{c},{m},{yes},{it}", r.label)?;
            }
            Err(e) => {
                writeln!(md, "| {} | - | - | ERROR | - |", r.label)?;
                writeln!(csv, "{},,,ERROR,", r.label)?;
                eprintln!("{}: {e}", r.label);
            }
        }
    }
    fs::create_dir_all(&out_root).with_context(|| format!("creating {}", out_root.display()))?;
    fs::write(out_root.join("sweep.md"), &md)?;
    fs::write(out_root.join("sweep.csv"), &csv)?;
    print!("{md}");
    Ok(if rows.iter().all(|r| r.result.is_ok()) { 0 } else { 1 })
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_region_stls(
    snap: &FieldSnapshot,
    threshold: f64,
    phi_threshold: f64,
    height: f64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let chi = snap.point_field("chi").context("snapshot has no chi field")?;
    let phi = snap.point_field("phi").context("snapshot has no phi field")?;
    let mask = RegionMask {
        phi,
        threshold: phi_threshold,
    };
    let set: ContourPolygonSet = split_regions(&snap.points, &snap.cells, chi, threshold, Some(mask))?;
    let mut written = Vec::new();
    for (name, polys) in [("above", &set.above), ("below", &set.below)] {
        if polys.is_empty() {
            log::info!("{name} region is empty; no STL written");
            continue;
        }
        let path = dir.join(format!("{name}.stl"));
        let soup = extrude_to_stl(polys, height, &path)?;
        println!(
            "region={name} path={} triangles={} volume={:.6e}",
            path.display(),
            soup.len(),
            soup.volume()
        );
        written.push(path);
    }
    Ok(written)
}

fn cmd_export_stl(
    cfg: &RunConfig,
    snapshot: &Path,
    threshold: Option<f64>,
    height: Option<f64>,
    phi_threshold: Option<f64>,
) -> Result<u8> {
    let height = height.unwrap_or(cfg.export.extrude_height);
    if !(height > 0.0) {
        bail!("--height must be positive, got {height}");
    }
    let threshold = threshold.unwrap_or(cfg.export.chi_threshold);
    if !(0.0..=1.0).contains(&threshold) {
        bail!("--threshold must be in [0,1], got {threshold}");
    }
    let phi_threshold = phi_threshold.unwrap_or(cfg.export.phi_threshold);
    let snap = read_vtk(snapshot)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let written = write_region_stls(&snap, threshold, phi_threshold, height, dir)?;
    if written.is_empty() {
        bail!("both regions are empty; nothing to export");
    }
    Ok(0)
}
