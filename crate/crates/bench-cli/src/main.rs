use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use dirfmm::bench::{run_benchmark, BenchConfig, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Run one fast directional Helmholtz matvec on a uniform grid (or a
/// points file) and report counters, timings and the sampled error.
#[derive(Debug, Parser)]
#[command(name = "dirfmm-bench", version)]
struct Cli {
    /// Grid exponent; the grid has 8^k points.
    #[arg(long)]
    k: Option<u32>,
    /// Wave number, default 0.1 * 2^k.
    #[arg(long)]
    kappa: Option<f64>,
    /// Leaf size bound.
    #[arg(long)]
    n_max: Option<usize>,
    /// Admissibility parameter.
    #[arg(long)]
    eta2: Option<f64>,
    /// Highest high-frequency level, default k - 4.
    #[arg(long)]
    l_hf: Option<i32>,
    /// Interpolation degree per axis.
    #[arg(long)]
    degree: Option<usize>,
    /// ACA tolerance for coupling matrices; "off" or 0 stores them dense.
    #[arg(long)]
    aca_eps: Option<String>,
    /// Keep the singular diagonal (fails on coincident points).
    #[arg(long)]
    no_zero_diagonal: bool,
    /// Seed of the input vector.
    #[arg(long)]
    seed: Option<u64>,
    /// Rows sampled for the error estimate; 0 skips it.
    #[arg(long)]
    sample_rows: Option<usize>,
    /// Whitespace-separated x y z file used instead of the grid.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Flat key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_aca(value: &str) -> anyhow::Result<Option<f64>> {
    if value.eq_ignore_ascii_case("off") {
        return Ok(None);
    }
    let eps: f64 = value.parse().with_context(|| format!("invalid aca-eps {value:?}"))?;
    Ok(if eps == 0.0 { None } else { Some(eps) })
}

fn parse_bool(value: &str) -> anyhow::Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!("invalid boolean {value:?}"),
    }
}

fn apply_key(cfg: &mut BenchConfig, key: &str, value: &str) -> anyhow::Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> anyhow::Result<T> {
        value.parse().map_err(|_| anyhow::anyhow!("invalid value {value:?} for {key}"))
    }
    match key.replace('-', "_").as_str() {
        "k" => cfg.k = Some(num(key, value)?),
        "kappa" => cfg.kappa = Some(num(key, value)?),
        "n_max" => cfg.n_max = num(key, value)?,
        "eta2" => cfg.eta2 = num(key, value)?,
        "l_hf" => cfg.l_hf = Some(num(key, value)?),
        "degree" | "m" => cfg.degree = num(key, value)?,
        "aca_eps" => cfg.aca_eps = parse_aca(value)?,
        "zero_diagonal" => cfg.zero_diagonal = parse_bool(value)?,
        "seed" => cfg.seed = num(key, value)?,
        "sample_rows" => cfg.sample_rows = num(key, value)?,
        "points" => cfg.points = Some(PathBuf::from(value)),
        _ => bail!("unknown config key {key:?}"),
    }
    Ok(())
}

fn read_config(path: &Path, cfg: &mut BenchConfig) -> anyhow::Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').with_context(|| format!("{}:{}: expected key = value", path.display(), n + 1))?;
        apply_key(cfg, key.trim(), value.trim()).with_context(|| format!("{}:{}", path.display(), n + 1))?;
    }
    Ok(())
}

fn build_config(cli: &Cli) -> anyhow::Result<BenchConfig> {
    let mut cfg = BenchConfig::default();
    if let Some(path) = &cli.config {
        read_config(path, &mut cfg)?;
    }
    cfg.k = cli.k.or(cfg.k);
    cfg.kappa = cli.kappa.or(cfg.kappa);
    cfg.l_hf = cli.l_hf.or(cfg.l_hf);
    cfg.n_max = cli.n_max.unwrap_or(cfg.n_max);
    cfg.eta2 = cli.eta2.unwrap_or(cfg.eta2);
    cfg.degree = cli.degree.unwrap_or(cfg.degree);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.sample_rows = cli.sample_rows.unwrap_or(cfg.sample_rows);
    if let Some(eps) = &cli.aca_eps {
        cfg.aca_eps = parse_aca(eps)?;
    }
    if cli.no_zero_diagonal {
        cfg.zero_diagonal = false;
    }
    if cli.points.is_some() {
        cfg.points = cli.points.clone();
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn render(report: &Report, format: Format) -> anyhow::Result<Vec<u8>> {
    Ok(match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report)?;
            out.push(b'\n');
            out
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.serialize(report)?;
            w.into_inner()?
        }
    })
}

fn run(cli: &Cli, cfg: &BenchConfig) -> anyhow::Result<()> {
    let run = run_benchmark(cfg)?;
    let bytes = render(&run.report, cli.format)?;
    match &cli.output {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
