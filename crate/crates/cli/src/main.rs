//! `cssim`: run sensing scenarios, ROC sweeps and algorithm comparisons.

mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use css_core::metrics::{csv_string, CsvRow, MetricsLog};
use css_core::{emit_csv, roc_sweep, run_scenario, Algorithm, Error, Preset, ScenarioConfig};
use rayon::prelude::*;

use plot::Series;

#[derive(Parser)]
#[command(name = "cssim", version, about = "Collaborative spectrum sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its per-step metrics.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: Option<Algorithm>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the false-alarm target and report empirical fusion-center rates.
    Roc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long, value_delimiter = ',', required = true)]
        pfa_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several algorithms on the same seed and merge their metrics.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        algos: Vec<Algorithm>,
        /// Number of consecutive seeds; more than one adds mean rows.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; keys it leaves out come from the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, default_value = "msc")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Directory for SVG charts; plotting problems only produce warnings.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self, algo: Option<Algorithm>) -> Result<ScenarioConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_file(path)?,
            None => ScenarioConfig::preset(self.preset, Algorithm::HedgeSc),
        };
        if let Some(a) = algo {
            if a != cfg.algorithm {
                cfg = cfg.with_algorithm(a);
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const METRICS: [(&str, &str); 5] = [
    ("pu_coll_frac", "fraction of PU collision"),
    ("su_coll_frac", "fraction of SU collision"),
    ("missed_frac", "fraction of missed slots"),
    ("avg_sensing", "sensing per SU per step"),
    ("alive_frac", "alive SU fraction"),
];

fn metric(row: &CsvRow, name: &str) -> f64 {
    match name {
        "pu_coll_frac" => row.pu_coll_frac,
        "su_coll_frac" => row.su_coll_frac,
        "missed_frac" => row.missed_frac,
        "avg_sensing" => row.avg_sensing,
        _ => row.alive_frac,
    }
}

fn rows(log: &MetricsLog) -> Vec<CsvRow> {
    log.records.iter().map(|r| CsvRow::from_record(r, log.experts)).collect()
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn plot_metrics(dir: &Path, prefix: &str, curves: &[(String, Vec<CsvRow>)]) {
    for (name, title) in METRICS {
        let series: Vec<Series> = curves
            .iter()
            .map(|(label, rows)| Series {
                label,
                points: rows.iter().map(|r| (r.step as f64, metric(r, name))).collect(),
            })
            .collect();
        let svg = plot::render(title, "time step", name, &series);
        plot::write_or_warn(&dir.join(format!("{prefix}{name}.svg")), &svg);
    }
}

fn cmd_run(common: &Common, algo: Option<Algorithm>, out: Option<&Path>) -> Result<(), Error> {
    let cfg = common.load(algo)?;
    let log = run_scenario(&cfg)?;
    match out {
        Some(p) => emit_csv(&log, p)?,
        None => print!("{}", csv_string(&log)),
    }
    if let Some(dir) = &common.plot_dir {
        plot_metrics(dir, "", &[(cfg.algorithm.to_string(), rows(&log))]);
    }
    Ok(())
}

fn cmd_roc(common: &Common, algo: Option<Algorithm>, pfa_list: &[f64], out: Option<&Path>) -> Result<(), Error> {
    let cfg = common.load(algo)?;
    if let Some(bad) = pfa_list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("pfa target {bad} outside [0, 1]")));
    }
    let points = pfa_list
        .par_iter()
        .map(|&t| roc_sweep(&cfg, &[t]).map(|mut v| v.remove(0)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut text = String::from("target,pfa,pd\n");
    for p in &points {
        let _ = writeln!(text, "{},{},{}", p.target, p.pfa, p.pd);
    }
    write_text(out, &text)?;
    if let Some(dir) = &common.plot_dir {
        let mut pts: Vec<_> = points.iter().map(|p| (p.pfa, p.pd)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let series = [Series { label: cfg.algorithm.name(), points: pts }];
        let svg = plot::render("ROC at the fusion center", "empirical Pfa", "empirical Pd", &series);
        plot::write_or_warn(&dir.join("roc.svg"), &svg);
    }
    Ok(())
}

fn mean_rows(runs: &[&Vec<CsvRow>]) -> Vec<CsvRow> {
    let n = runs.len() as f64;
    (0..runs[0].len())
        .map(|i| {
            let avg = |name: &str| runs.iter().map(|r| metric(&r[i], name)).sum::<f64>() / n;
            CsvRow {
                step: runs[0][i].step,
                pu_coll_frac: avg("pu_coll_frac"),
                su_coll_frac: avg("su_coll_frac"),
                missed_frac: avg("missed_frac"),
                avg_sensing: avg("avg_sensing"),
                alive_frac: avg("alive_frac"),
                mode: "mean".into(),
            }
        })
        .collect()
}

fn cmd_compare(common: &Common, algos: &[Algorithm], seeds: u64, out: Option<&Path>) -> Result<(), Error> {
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let base = common.load(None)?;
    let mut jobs = Vec::new();
    for &a in algos {
        let cfg = if a == base.algorithm { base.clone() } else { base.clone().with_algorithm(a) };
        cfg.validate()?;
        for k in 0..seeds {
            let mut c = cfg.clone();
            c.seed = base.seed.wrapping_add(k);
            jobs.push(c);
        }
    }
    let logs = jobs
        .par_iter()
        .map(|c| run_scenario(c).map(|log| rows(&log)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut text = String::from("algorithm,seed,step,pu_coll_frac,su_coll_frac,missed_frac,avg_sensing,alive_frac,mode\n");
    let push = |text: &mut String, algo: &str, seed: &str, rows: &[CsvRow]| {
        for r in rows {
            let _ = writeln!(
                text,
                "{algo},{seed},{},{},{},{},{},{},{}",
                r.step, r.pu_coll_frac, r.su_coll_frac, r.missed_frac, r.avg_sensing, r.alive_frac, r.mode
            );
        }
    };
    let mut curves = Vec::new();
    for (a, chunk) in algos.iter().zip(logs.chunks(seeds as usize)) {
        for (k, rows) in chunk.iter().enumerate() {
            push(&mut text, a.name(), &base.seed.wrapping_add(k as u64).to_string(), rows);
        }
        let shown = if seeds > 1 {
            let mean = mean_rows(&chunk.iter().collect::<Vec<_>>());
            push(&mut text, a.name(), "mean", &mean);
            mean
        } else {
            chunk[0].clone()
        };
        curves.push((a.name().to_string(), shown));
    }
    write_text(out, &text)?;
    if let Some(dir) = &common.plot_dir {
        plot_metrics(dir, "compare_", &curves);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run { common, algo, out } => cmd_run(common, *algo, out.as_deref()),
        Command::Roc { common, algo, pfa_list, out } => cmd_roc(common, *algo, pfa_list, out.as_deref()),
        Command::Compare { common, algos, seeds, out } => cmd_compare(common, algos, *seeds, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
