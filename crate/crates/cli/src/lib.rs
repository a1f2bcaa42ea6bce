//! Command-line front end: single runs, parameter sweeps, scenario
//! validation and a dump of the default scenario.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use hat_core::metrics::{requests_csv, Summary};
use hat_core::{Framework, RunOutput, Scenario};

#[derive(Debug, Parser)]
#[command(name = "hat", version, about = "Device-cloud speculative decoding simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run the Cartesian product of one or more `--sweep key=v1,v2` lists.
    Sweep(RunArgs),
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the default scenario as JSON.
    DumpDefaults,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub framework: Option<Framework>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// `dotted.key=v1,v2,...`; repeat for a Cartesian product.
    #[arg(long = "sweep", value_name = "KEY=VALUES")]
    pub sweep: Vec<String>,
    /// Also write the full event log.
    #[arg(long)]
    pub event_log: bool,
}

/// One parsed `--sweep` flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

pub fn parse_sweep(spec: &str) -> Result<SweepAxis> {
    let (key, values) = spec
        .split_once('=')
        .with_context(|| format!("sweep {spec:?} is not of the form key=v1,v2"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("sweep {spec:?} has an empty key");
    }
    let values: Vec<String> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(String::from)
        .collect();
    if values.is_empty() {
        bail!("sweep {key:?} has no values");
    }
    Ok(SweepAxis {
        key: key.to_string(),
        values,
    })
}

/// A point of the sweep grid: the overrides applied, in axis order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub index: usize,
    pub overrides: Vec<(String, String)>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        self.overrides
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Cartesian product with the last axis varying fastest.
pub fn expand_grid(axes: &[SweepAxis]) -> Vec<SweepPoint> {
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
        .into_iter()
        .enumerate()
        .map(|(index, overrides)| SweepPoint { index, overrides })
        .collect()
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Scenario::parse(&text)?)
}

fn base_scenario(args: &RunArgs) -> Result<Scenario> {
    let mut s = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(fw) = args.framework {
        s.framework = fw;
    }
    Ok(s)
}

pub const SUMMARY_CSV_HEADER: &str = "point,params,framework,seed,requests,mean_ttft_ns,median_ttft_ns,p90_ttft_ns,mean_tbt_ns,prefill_sla_rate,decode_sla_rate,sla_vacuous,short_outputs,mean_accept_len";

pub fn summary_row(point: &SweepPoint, s: &Scenario, m: &Summary) -> String {
    format!(
        "{},{},{},{},{},{:.0},{},{},{:.0},{:.4},{:.4},{},{},{:.4}",
        point.index,
        point.label(),
        s.framework,
        s.seed,
        m.requests,
        m.mean_ttft_ns,
        m.median_ttft_ns,
        m.p90_ttft_ns,
        m.mean_tbt_ns,
        m.sla.prefill,
        m.sla.decode,
        m.sla.vacuous,
        m.short_outputs,
        m.mean_accept_len
    )
}

fn predictor_csv(out: &RunOutput) -> String {
    let mut s = String::from("bin,first_token,last_token,delay_s\n");
    for b in &out.predictor {
        s.push_str(&format!(
            "{},{},{},{:.9}\n",
            b.index, b.first_token, b.last_token, b.delay
        ));
    }
    s
}

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn write_run(dir: &Path, s: &Scenario, out: &RunOutput, event_log: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(
        &dir.join("requests.csv"),
        &requests_csv(&out.records, s.framework.name()),
    )?;
    write_atomic(&dir.join("effective_config.json"), &s.to_json())?;
    write_atomic(&dir.join("predictor.csv"), &predictor_csv(out))?;
    if event_log {
        write_atomic(&dir.join("events.log"), &out.log.to_text())?;
    }
    Ok(())
}

fn write_summary(dir: &Path, rows: &[String]) -> Result<()> {
    let mut text = String::from(SUMMARY_CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    write_atomic(&dir.join("summary.csv"), &text)
}

/// Runs every point and writes results; returns the summary rows in point
/// order regardless of how the points were scheduled.
pub fn run_points(base: &Scenario, points: &[SweepPoint], args: &RunArgs, nested: bool) -> Result<Vec<String>> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    points
        .par_iter()
        .map(|p| {
            let mut s = base.clone();
            for (k, v) in &p.overrides {
                s = s.with_override(k, v)?;
            }
            let out = hat_core::run(&s).with_context(|| format!("point {} ({})", p.index, p.label()))?;
            let dir = if nested {
                args.out.join(format!("point-{:03}", p.index))
            } else {
                args.out.clone()
            };
            write_run(&dir, &s, &out, args.event_log)?;
            Ok(summary_row(p, &s, &out.summary))
        })
        .collect()
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            if !args.sweep.is_empty() {
                bail!("--sweep is only accepted by the sweep command");
            }
            let base = base_scenario(&args)?;
            let point = SweepPoint {
                index: 0,
                overrides: Vec::new(),
            };
            let rows = run_points(&base, std::slice::from_ref(&point), &args, false)?;
            write_summary(&args.out, &rows)?;
        }
        Command::Sweep(args) => {
            if args.sweep.is_empty() {
                bail!("sweep needs at least one --sweep key=v1,v2");
            }
            let axes = args.sweep.iter().map(|s| parse_sweep(s)).collect::<Result<Vec<_>>>()?;
            let base = base_scenario(&args)?;
            let rows = run_points(&base, &expand_grid(&axes), &args, true)?;
            write_summary(&args.out, &rows)?;
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!("ok: {} device(s), framework {}", s.device_count(), s.framework);
        }
        Command::DumpDefaults => println!("{}", Scenario::default().to_json()),
    }
    Ok(())
}
