use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rilo::expert::{generate_dataset, train_dense_expert, DenseRewardSpec, ExpertSource};
use rilo::gridworld::MoveStyle;
use rilo::harness::{
    emit_curves, evaluate, load_matrix_metrics, run_matrix, train_observed, write_outputs, ConfigError, CurveInput,
    ExperimentConfig, Matrix, Method, MetricsRow, TrainObserver,
};
use rilo::numnet::ParamSet;
use rilo::policy::PolicyNet;

#[derive(Parser)]
#[command(
    name = "rilo",
    version,
    about = "Reinforced imitation learning from observations on grid worlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file (supports `include` and `preset`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base preset when no config file is given: full, desk, desk-partial.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Override one config key, e.g. `--set a2c.lr=0.001`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an expert dataset.
    GenData {
        #[arg(long)]
        style: Option<MoveStyle>,
        #[arg(long)]
        count: Option<usize>,
        /// Use greedy rollouts of this policy checkpoint instead of the planner.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train an expert on shaped rewards.
    TrainExpert {
        #[arg(long)]
        style: Option<MoveStyle>,
        #[arg(long, default_value_t = 200_000)]
        episodes: usize,
        /// Train on the sparse reward only.
        #[arg(long)]
        no_shaping: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run one training experiment.
    Train {
        #[arg(long)]
        expert: Option<MoveStyle>,
        #[arg(long)]
        learner: Option<MoveStyle>,
        /// Method such as `ATD-SE` or `csd`.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a policy checkpoint greedily.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        learner: Option<MoveStyle>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        tau: u8,
        #[command(flatten)]
        common: Common,
    },
    /// Run an expert × learner × method × seed sweep.
    Matrix {
        #[arg(long, value_delimiter = ',', default_value = "4-way,king,knight,16-way")]
        experts: Vec<MoveStyle>,
        #[arg(long, value_delimiter = ',', default_value = "4-way,king,knight,16-way")]
        learners: Vec<MoveStyle>,
        #[arg(long, value_delimiter = ',', default_value = "CSD,SSD-SE,RTGD-SE,ATD-SE")]
        methods: Vec<Method>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw learning curves of a finished sweep.
    Plot {
        /// Sweep directory holding `summary.csv`.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

struct Progress;

impl TrainObserver for Progress {
    fn on_metrics(&mut self, m: &MetricsRow) {
        eprintln!(
            "iter {:>8}  success {:.3}  steps {:>5.2}  train {:.3}  upsilon {:.3}  tau {:.2}  D(e) {:.3}  D(l) {:.3}",
            m.iteration,
            m.success,
            m.mean_steps,
            m.train_success,
            m.upsilon,
            m.tau_rate,
            m.disc_expert_score,
            m.disc_learner_score
        );
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(&common.preset)
            .ok_or_else(|| Failure::Config(format!("unknown preset `{}`", common.preset)))?,
    };
    if !common.overrides.is_empty() {
        for o in &common.overrides {
            if !o.contains('=') {
                return Err(Failure::Config(format!("override `{o}` is not KEY=VALUE")));
            }
        }
        cfg = ExperimentConfig::from_toml_str(&common.overrides.join("\n"), &cfg)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    std::fs::write(path, text).map_err(runtime)
}

fn load_policy(cfg: &ExperimentConfig, style: MoveStyle, path: &Path) -> Result<PolicyNet, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = PolicyNet::new(&cfg.net, &cfg.env, style, &mut rng);
    let params = ParamSet::load(path).map_err(runtime)?;
    net.load_params(&params)
        .map_err(|e| Failure::Config(format!("checkpoint does not fit the configured network: {e}")))?;
    Ok(net)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData {
            style,
            count,
            checkpoint,
            common,
        } => {
            let cfg = load_config(&common)?;
            let style = style.unwrap_or(cfg.expert_style);
            let n = count.unwrap_or(cfg.dataset_size);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let net = checkpoint.map(|p| load_policy(&cfg, style, &p)).transpose()?;
            let source = match &net {
                Some(net) => ExpertSource::TrainedPolicy(net),
                None => ExpertSource::Planner,
            };
            let ds = generate_dataset(n, &cfg.env, style, source, &mut rng).map_err(runtime)?;
            let path = common.out_dir.join(format!("{}.txt", style.name()));
            write(&path, &ds.to_text())?;
            println!("wrote {} trajectories to {}", n, path.display());
        }
        Command::TrainExpert {
            style,
            episodes,
            no_shaping,
            common,
        } => {
            let cfg = load_config(&common)?;
            let style = style.unwrap_or(cfg.expert_style);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let spec = DenseRewardSpec { shaping: !no_shaping };
            let expert =
                train_dense_expert(&cfg.env, style, &spec, &cfg.net, &cfg.a2c, episodes, &mut rng).map_err(runtime)?;
            std::fs::create_dir_all(&common.out_dir).map_err(runtime)?;
            expert
                .net
                .params
                .save(&common.out_dir.join("expert.ckpt"))
                .map_err(runtime)?;
            let report = format!(
                "style {style}\nepisodes {episodes}\ngreedy success {:.4}\n",
                expert.success
            );
            write(&common.out_dir.join("report.txt"), &report)?;
            print!("{report}");
        }
        Command::Train {
            expert,
            learner,
            method,
            lambda,
            iterations,
            dataset,
            common,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = expert {
                cfg.expert_style = s;
            }
            if let Some(s) = learner {
                cfg.learner_style = s;
            }
            if let Some(m) = method {
                m.apply(&mut cfg);
            }
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            if let Some(k) = iterations {
                cfg.iterations = k;
            }
            if dataset.is_some() {
                cfg.dataset = dataset;
            }
            cfg.validate()?;
            let out = train_observed(&cfg, &mut Progress).map_err(runtime)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            write_outputs(&common.out_dir, &cfg, &out).map_err(runtime)?;
            print!("{}", out.final_eval);
        }
        Command::Eval {
            checkpoint,
            learner,
            episodes,
            tau,
            common,
        } => {
            let cfg = load_config(&common)?;
            if tau > 1 || episodes == 0 {
                return Err(Failure::Config("tau must be 0 or 1 and episodes at least 1".into()));
            }
            let net = load_policy(&cfg, learner.unwrap_or(cfg.learner_style), &checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let report = evaluate(&net, &cfg.env, episodes, tau, &mut rng).map_err(runtime)?;
            write(&common.out_dir.join("report.txt"), &report.to_string())?;
            print!("{report}");
        }
        Command::Matrix {
            experts,
            learners,
            methods,
            seeds,
            common,
        } => {
            let cfg = load_config(&common)?;
            let matrix = Matrix {
                experts,
                learners,
                methods,
                seeds,
            };
            let results = run_matrix(&cfg, &matrix, &common.out_dir, |r| {
                println!(
                    "{:<8} {:<8} ({}) {:<8} seed {:<3} success {:.3}{}",
                    r.spec.expert,
                    r.spec.learner,
                    r.relation,
                    r.spec.method.to_string(),
                    r.spec.seed,
                    r.success,
                    r.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default()
                )
            })
            .map_err(runtime)?;
            let failed = results.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} of {} runs failed", results.len())));
            }
        }
        Command::Plot { input, common } => {
            let runs = load_matrix_metrics(&input).map_err(runtime)?;
            let inputs: Vec<CurveInput> = runs
                .into_iter()
                .map(|(r, rows)| CurveInput {
                    group: format!("{} to {} ({})", r.spec.expert, r.spec.learner, r.relation),
                    series: r.spec.method.to_string(),
                    rows,
                })
                .collect();
            for path in emit_curves(&inputs, &common.out_dir).map_err(runtime)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
