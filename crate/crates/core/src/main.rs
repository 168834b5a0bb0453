use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use seed6d::scenario::estimator_eval::{gen_corpus, load_eval_config, run_estimator_eval};
use seed6d::scenario::sysid_run::run_sysid_file;
use seed6d::scenario::{run_many, ScenarioConfig};

#[derive(Parser)]
#[command(name = "seed6d", version, about = "Scenario runner for the series-elastic 6D end effector")]
struct Cli {
    /// Output root.
    #[arg(long, global = true, env = "SEED6D_OUT", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run control scenarios and write `<out>/<name>/trace.csv` and `summary.json`.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Override the seed of every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenarios run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Identify bushing stiffness and write `<out>/<name>/sysid_report.json`.
    Sysid { config: PathBuf },
    /// Evaluate the pose estimator over the corpus sweeps.
    EvalEstimator { config: PathBuf },
    /// Generate the synthetic sensor corpus and its calibration.
    GenCorpus { config: PathBuf },
}

fn config_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { configs, seed, jobs } => {
            let mut loaded = Vec::with_capacity(configs.len());
            for path in &configs {
                let mut cfg = ScenarioConfig::load(path)?;
                if let Some(seed) = seed {
                    cfg.seed = seed;
                }
                loaded.push(cfg);
            }
            let mut names: Vec<&str> = loaded.iter().map(|c| c.name.as_str()).collect();
            names.sort_unstable();
            if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
                bail!("two scenarios are named {:?}; outputs would collide", w[0]);
            }
            let mut failed = 0;
            for (path, result) in configs.iter().zip(run_many(&loaded, &cli.out, jobs)) {
                match result {
                    Ok(a) => {
                        let s = &a.output.summary;
                        println!(
                            "{}: steady f_z {:.4} N (commanded {:.4}, error {:.2}%), steady |tau_x| {:.4e} N·m, max |tau_x| {:.4e} N·m -> {}",
                            s.name,
                            s.steady_f_z,
                            s.commanded_f_z,
                            100.0 * s.steady_f_z_relative_error,
                            s.steady_abs_tau_x,
                            s.max_abs_tau_x,
                            a.trace.display()
                        );
                    }
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: {e}", path.display());
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} scenarios failed", configs.len());
            }
        }
        Command::Sysid { config } => {
            let (run, path) = run_sysid_file(&config, &cli.out)?;
            print!("{}", run.table());
            println!("report: {}", path.display());
        }
        Command::EvalEstimator { config } => {
            let cfg = load_eval_config(&config)?;
            let report = run_estimator_eval(&cfg, config_dir(&config), &cli.out)?;
            print!("{}", report.table());
            println!("report: {}", cli.out.join(&cfg.name).join("estimator_report.json").display());
        }
        Command::GenCorpus { config } => {
            let cfg = load_eval_config(&config)?;
            let (dir, cal) = gen_corpus(&cfg, config_dir(&config), &cli.out)
                .with_context(|| format!("generating corpus for {}", config.display()))?;
            println!("corpus: {} (k_curl {:.6})", dir.display(), cal.k_curl);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
