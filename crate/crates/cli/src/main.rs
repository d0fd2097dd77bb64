use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use vlrl_core::envs::optimal_return_oracle;
use vlrl_core::harness::{
    ablation_run, evaluate_checkpoint, train, AgentKind, EnvKind, EvalResult, Precision, RunConfig, Sweep,
};
use vlrl_core::nets::Metric;
use vlrl_core::verify::{gradient_suite, DEFAULT_TOLERANCE};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "vlrl",
    version,
    about = "Cycle-consistent virtual trajectories for RL representation learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write config, metrics, summary and checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an ablation sweep over seeds 0..N.
    Ablate {
        #[arg(long)]
        sweep: Sweep,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "gridworld")]
        env: EnvKind,
        /// Base run configuration (JSON); defaults to the env's defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        /// Use the narrow network profile.
        #[arg(long)]
        compact: bool,
    },
    /// Compare autodiff with finite differences for every op and loss.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Start from a full run configuration (JSON, as written to
    /// `config.json`); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "gridworld")]
    env: EnvKind,
    /// Defaults to q on gridworld and sac on pointmass.
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda_pred: Option<f64>,
    #[arg(long)]
    lambda_cyc: Option<f64>,
    #[arg(long)]
    metric: Option<Metric>,
    /// Keep the cycle loss from updating the forward dynamics model.
    #[arg(long)]
    nd: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Use the narrow network profile.
    #[arg(long)]
    compact: bool,
    #[arg(long)]
    out: PathBuf,
}

impl TrainArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::for_env(self.env),
        };
        if self.compact {
            cfg = cfg.compact();
        }
        if let Some(agent) = self.agent {
            cfg.agent = agent;
        }
        if let Some(steps) = self.steps {
            cfg.total_steps = steps;
            cfg.warmup_steps = cfg.warmup_steps.min(steps);
        }
        if let Some(k) = self.k {
            cfg.aux.k = k;
        }
        if let Some(m) = self.m {
            cfg.aux.m = m;
        }
        if let Some(l) = self.lambda_pred {
            cfg.aux.lambda_pred = l;
        }
        if let Some(l) = self.lambda_cyc {
            cfg.aux.lambda_cyc = l;
        }
        if let Some(metric) = self.metric {
            cfg.aux.metric = metric;
        }
        cfg.aux.nd_mode |= self.nd;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_eval(label: &str, e: &EvalResult) {
    println!(
        "{label}: mean return {:.4} (std {:.4}, {} episodes)",
        e.mean,
        e.std,
        e.returns.len()
    );
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let precision = Precision::from_env()?;
    match cli.command {
        Command::Train(args) => {
            let cfg = args.config()?;
            let final_eval = match precision {
                Precision::F32 => train::<f32>(&cfg, Some(&args.out))?.final_eval,
                Precision::F64 => train::<f64>(&cfg, Some(&args.out))?.final_eval,
            };
            print_eval("final eval", &final_eval);
            if cfg.env == EnvKind::Gridworld {
                if let Some(best) = optimal_return_oracle(&cfg.grid).value() {
                    println!(
                        "oracle-normalized return {:.4} (optimum {best:.4})",
                        final_eval.mean / best
                    );
                }
            }
            println!("outputs written to {}", args.out.display());
        }
        Command::Eval { ckpt, episodes, seed } => {
            let result = match precision {
                Precision::F32 => evaluate_checkpoint::<f32>(&ckpt, episodes, seed),
                Precision::F64 => evaluate_checkpoint::<f64>(&ckpt, episodes, seed),
            }
            .with_context(|| format!("evaluating {}", ckpt.display()))?;
            print_eval("eval", &result);
        }
        Command::Ablate {
            sweep,
            seeds,
            out,
            env,
            config,
            steps,
            compact,
        } => {
            if seeds == 0 {
                bail!("--seeds must be positive");
            }
            let mut base = match &config {
                Some(path) => load_config(path)?,
                None => RunConfig::for_env(env),
            };
            if compact {
                base = base.compact();
            }
            if let Some(steps) = steps {
                base.total_steps = steps;
                base.warmup_steps = base.warmup_steps.min(steps);
            }
            let settings = sweep.settings(&base);
            let seed_list: Vec<u64> = (0..seeds).collect();
            let rows = match precision {
                Precision::F32 => ablation_run::<f32>(&settings, &seed_list, Some(&out))?,
                Precision::F64 => ablation_run::<f64>(&settings, &seed_list, Some(&out))?,
            };
            for r in &rows {
                println!(
                    "{:<40} median final {:>9.4}  median auc {:>9.4}",
                    r.label, r.median_final, r.median_auc
                );
            }
            println!("table written to {}", out.join("results.csv").display());
        }
        Command::Gradcheck { instances, seed } => {
            let results = gradient_suite(instances, seed, DEFAULT_TOLERANCE)?;
            let mut failed = 0;
            for r in &results {
                println!(
                    "{} {:<24} max rel err {:.3e}  ({} coords, {} kinks skipped)",
                    if r.passed { "ok  " } else { "FAIL" },
                    r.name,
                    r.max_rel_error,
                    r.checked,
                    r.excluded
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                bail!("{failed} gradient checks failed");
            }
        }
    }
    Ok(())
}
