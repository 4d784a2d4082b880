use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use diffscore::acceptance;
use diffscore::experiment::{
    lowerbound_table, rates_table, risk_table, run_lowerbound, run_rates, run_risk_grid, run_sampler, sampler_table,
    ExperimentConfig, Table,
};

#[derive(Parser, Debug)]
#[command(name = "diffscore", version, about = "Score-estimation experiments for smoothed densities on [-1, 1]")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; only `seed` is required in it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads, 0 for all processors
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// relative tolerance of the risk quadrature
    #[arg(long = "quad-tol", global = true)]
    quad_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replicated risk on the (n, t) grid
    RiskGrid,
    /// Risk grid plus log-log slopes per regime, checked against the theoretical rates
    Rates,
    /// Reverse-SDE sampling with fitted scores; TV, W1 and initialisation KL per run
    Sample,
    /// Lower-bound construction checks
    Lowerbound,
    /// The acceptance suite (all criteria, or the listed ids such as AC1 AC7)
    Accept { ids: Vec<String> },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::with_seed(0),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(q) = cli.quad_tol {
        cfg.risk.rel_tol = q;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Output {
    dir: PathBuf,
    hash: String,
}

impl Output {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = PathBuf::from(&cfg.out_dir);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let hash = cfg.hash();
        fs::write(dir.join("config.toml"), format!("# config_hash={hash}\n{}", cfg.to_toml()))?;
        Ok(Output { dir, hash })
    }

    fn csv(&self, name: &str, table: &Table) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        table.write_csv(std::io::BufWriter::new(file), &[format!("config_hash={}", self.hash)])?;
        Ok(path)
    }
}

fn say(path: &Path, rows: usize) {
    eprintln!("wrote {} ({rows} rows)", path.display());
}

fn execute(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global().context("starting worker pool")?;
    }
    match &cli.command {
        Command::RiskGrid => {
            let out = Output::new(&cfg)?;
            let recs = run_risk_grid(&cfg)?;
            say(&out.csv("risk_grid.csv", &risk_table(&recs))?, recs.len());
            Ok(true)
        }
        Command::Rates => {
            let out = Output::new(&cfg)?;
            let recs = run_risk_grid(&cfg)?;
            say(&out.csv("risk_grid.csv", &risk_table(&recs))?, recs.len());
            let rows = run_rates(&cfg, &recs)?;
            let table = rates_table(&rows);
            print!("{}", table.to_csv_string(&[])?);
            say(&out.csv("rates.csv", &table)?, rows.len());
            Ok(rows.iter().all(|r| r.pass != Some(false)))
        }
        Command::Sample => {
            let out = Output::new(&cfg)?;
            let run = run_sampler(&cfg)?;
            let table = sampler_table(&run);
            print!("{}", table.to_csv_string(&[])?);
            say(&out.csv("sampler.csv", &table)?, run.rows.len());
            if cfg.sampler.write_samples {
                for (row, batch) in run.rows.iter().zip(&run.batches) {
                    let path = out.dir.join(format!("samples_n{}_r{}.txt", row.n, row.rep));
                    fs::write(&path, format!("# config_hash={}\n{}", out.hash, batch.to_text()))?;
                }
            }
            let kl_ok = run.rows.iter().all(|r| r.kl_init <= 0.5 / run.horizon);
            Ok(kl_ok && run.rows.iter().all(|r| r.aborted == 0))
        }
        Command::Lowerbound => {
            let out = Output::new(&cfg)?;
            let rows = run_lowerbound(&cfg)?;
            let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
            for r in failed.iter().take(20) {
                eprintln!("failed: {} t={} b={:?} b'={:?} value={:e} bound={:e}", r.check, r.t, r.b, r.c, r.value, r.reference);
            }
            say(&out.csv("lowerbound.csv", &lowerbound_table(&rows))?, rows.len());
            Ok(failed.is_empty())
        }
        Command::Accept { ids } => {
            if let Some(bad) = ids.iter().find(|i| !acceptance::IDS.iter().any(|id| id.eq_ignore_ascii_case(i))) {
                anyhow::bail!("unknown criterion {bad}; known: {}", acceptance::IDS.join(" "));
            }
            let outcomes = acceptance::run(ids, |o| println!("{}", o.line()));
            let passed = outcomes.iter().filter(|o| o.pass).count();
            println!("acceptance: {passed}/{} criteria passed", outcomes.len());
            if cli.out.is_some() {
                let dir = PathBuf::from(&cfg.out_dir);
                fs::create_dir_all(&dir)?;
                let text: String = outcomes.iter().map(|o| o.line() + "\n").collect();
                fs::write(dir.join("acceptance.txt"), text)?;
            }
            Ok(passed == outcomes.len())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
