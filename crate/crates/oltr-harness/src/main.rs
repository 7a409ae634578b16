use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use oltr_core::clicksim::ClickBehavior;
use oltr_core::data::{generate_synthetic, write_letor, SyntheticSpec};
use oltr_core::learner::TrainConfig;
use oltr_core::metrics::offline_performance;
use oltr_core::rewards::{RewardSpec, RewardVariant};
use oltr_core::Policy64;

use oltr_harness::config::{DataSource, ExperimentConfig, SweepAxes};
use oltr_harness::runner::{load_data, run_experiment};

#[derive(Parser)]
#[command(
    name = "oltr",
    about = "Online learning to rank laboratory: train rankers against simulated users, sweep reward-shaping configurations, and evaluate checkpoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded training run.
    Train(TrainArgs),
    /// A full experiment: sweep cells x seeded repeats, with aggregation.
    Sweep(SweepArgs),
    /// Score a saved policy checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Generate synthetic LETOR files plus the hidden-scorer sidecar.
    GenData(GenDataArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory with LETOR files train.txt / vali.txt / test.txt.
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// JSON file holding a synthetic dataset spec.
    #[arg(long, value_name = "FILE")]
    synthetic: Option<PathBuf>,
    /// Feature dimensionality of the LETOR files (inferred when omitted).
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Min-max normalize features per dimension, fitted on train.
    #[arg(long)]
    normalize: bool,
}

impl DataArgs {
    fn source(&self) -> anyhow::Result<Option<DataSource>> {
        match (&self.dataset, &self.synthetic) {
            (Some(dir), None) => Ok(Some(DataSource::Letor {
                dir: dir.clone(),
                feature_dim: self.feature_dim,
            })),
            (None, Some(spec_path)) => {
                let spec = read_spec(spec_path)?;
                Ok(Some(DataSource::Synthetic { spec }))
            }
            (None, None) => Ok(None),
            (Some(_), Some(_)) => bail!("--dataset and --synthetic are mutually exclusive"),
        }
    }
}

fn read_spec(path: &PathBuf) -> anyhow::Result<SyntheticSpec> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec: SyntheticSpec = serde_json::from_reader(std::io::BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(spec)
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Click behavior of the simulated user.
    #[arg(long, default_value = "perfect")]
    clicks: ClickBehavior,
    /// True propensity exponent of the simulated user.
    #[arg(long, default_value_t = 1.0)]
    eta_true: f64,
    /// Reward function: dcg|naive+|ips+|naive-|ips-|naive+-|ips+-.
    #[arg(long, default_value = "ips+-")]
    reward: RewardVariant,
    /// Reward discount factor (0 = contextual bandit).
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Propensity exponent assumed by the learner.
    #[arg(long, default_value_t = 1.0)]
    eta_model: f64,
    /// Cap on the inverse-propensity weight (propensity clipping).
    #[arg(long)]
    ips_clip: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 10_000)]
    impressions: usize,
    /// Documents displayed per impression.
    #[arg(long, default_value_t = 10)]
    serp_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Offline evaluation cadence in impressions.
    #[arg(long, default_value_t = 1000)]
    eval_every: usize,
    /// Episodes per gradient-variance window.
    #[arg(long, default_value_t = 1000)]
    variance_window: usize,
    /// Write a policy checkpoint at every evaluation point.
    #[arg(long)]
    checkpoints: bool,
    /// Discount rate for cumulative online performance.
    #[arg(long, default_value_t = 0.9995)]
    tau: f64,
    /// Moving-average window for smoothed plot CSVs.
    #[arg(long, default_value_t = 100)]
    smoothing_window: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

impl TrainArgs {
    fn experiment(&self) -> anyhow::Result<ExperimentConfig> {
        let Some(data) = self.data.source()? else {
            bail!("a data source is required: --dataset <dir> or --synthetic <spec.json>");
        };
        let mut reward = RewardSpec::new(self.reward, self.gamma, self.eta_model);
        reward.ips_weight_cap = self.ips_clip;
        let mut train = TrainConfig::new(reward);
        train.serp_size = self.serp_size;
        train.impressions = self.impressions;
        train.learning_rate = self.lr;
        train.seed = self.seed;
        train.eval_every = self.eval_every;
        train.variance_window = self.variance_window;
        if self.checkpoints {
            train.checkpoint_dir = Some(self.out.join("checkpoints"));
        }
        Ok(ExperimentConfig {
            data,
            clicks: self.clicks,
            eta_true: self.eta_true,
            train,
            runs: 1,
            sweep: SweepAxes::default(),
            out_dir: self.out.clone(),
            parallelism: 1,
            tau: self.tau,
            smoothing_window: self.smoothing_window,
            normalize: self.data.normalize,
        })
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    clicks: Option<ClickBehavior>,
    #[arg(long)]
    eta_true: Option<f64>,
    /// Reward variants; a comma-separated list becomes a sweep axis.
    #[arg(long, value_delimiter = ',')]
    reward: Option<Vec<RewardVariant>>,
    /// Discount factors; a comma-separated list becomes a sweep axis.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Assumed propensity exponents; a list becomes a sweep axis.
    #[arg(long, value_delimiter = ',')]
    eta_model: Option<Vec<f64>>,
    #[arg(long)]
    ips_clip: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    impressions: Option<usize>,
    #[arg(long)]
    serp_size: Option<usize>,
    /// Base seed; run r of every cell uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    variance_window: Option<usize>,
    /// Seeded repeats per sweep cell.
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    smoothing_window: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn experiment(&self) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let Some(data) = self.data.source()? else {
                    bail!(
                        "a data source is required: --config, --dataset <dir> or --synthetic <spec.json>"
                    );
                };
                let Some(out_dir) = self.out.clone() else {
                    bail!("--out <dir> is required without --config");
                };
                ExperimentConfig {
                    data,
                    clicks: ClickBehavior::Perfect,
                    eta_true: 1.0,
                    train: TrainConfig::new(RewardSpec::new(RewardVariant::IpsBoth, 0.0, 1.0)),
                    runs: 15,
                    sweep: SweepAxes::default(),
                    out_dir,
                    parallelism: 0,
                    tau: 0.9995,
                    smoothing_window: 100,
                    normalize: false,
                }
            }
        };

        if let Some(data) = self.data.source()? {
            config.data = data;
        }
        if self.data.normalize {
            config.normalize = true;
        }
        if let Some(clicks) = self.clicks {
            config.clicks = clicks;
        }
        if let Some(eta_true) = self.eta_true {
            config.eta_true = eta_true;
        }
        if let Some(rewards) = &self.reward {
            match rewards.as_slice() {
                [single] => config.train.reward.variant = *single,
                _ => config.sweep.reward = Some(rewards.clone()),
            }
        }
        if let Some(gammas) = &self.gamma {
            match gammas.as_slice() {
                [single] => config.train.reward.gamma = *single,
                _ => config.sweep.gamma = Some(gammas.clone()),
            }
        }
        if let Some(etas) = &self.eta_model {
            match etas.as_slice() {
                [single] => config.train.reward.eta_model = *single,
                _ => config.sweep.eta_model = Some(etas.clone()),
            }
        }
        if self.ips_clip.is_some() {
            config.train.reward.ips_weight_cap = self.ips_clip;
        }
        if let Some(lr) = self.lr {
            config.train.learning_rate = lr;
        }
        if let Some(impressions) = self.impressions {
            config.train.impressions = impressions;
        }
        if let Some(serp) = self.serp_size {
            config.train.serp_size = serp;
        }
        if let Some(seed) = self.seed {
            config.train.seed = seed;
        }
        if let Some(eval_every) = self.eval_every {
            config.train.eval_every = eval_every;
        }
        if let Some(window) = self.variance_window {
            config.train.variance_window = window;
        }
        if let Some(runs) = self.runs {
            config.runs = runs;
        }
        if let Some(parallelism) = self.parallelism {
            config.parallelism = parallelism;
        }
        if let Some(tau) = self.tau {
            config.tau = tau;
        }
        if let Some(window) = self.smoothing_window {
            config.smoothing_window = window;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Policy checkpoint JSON.
    #[arg(long, value_name = "FILE")]
    policy: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Which split to score.
    #[arg(long, default_value = "test")]
    split: String,
    /// Evaluation depth (nDCG@k).
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct GenDataArgs {
    /// Synthetic spec JSON; alternatively use the individual flags.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    queries: usize,
    #[arg(long, default_value_t = 50)]
    docs_per_query: usize,
    #[arg(long, default_value_t = 20)]
    feature_dim: usize,
    /// Probabilities of grades 0..=4, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 5, default_values_t = [0.5, 0.25, 0.12, 0.08, 0.05])]
    relevance_dist: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for train.txt / vali.txt / test.txt / scorer.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn run_train_or_sweep(config: ExperimentConfig) -> anyhow::Result<()> {
    let cells = config.cells().len();
    eprintln!(
        "running {} cell(s) x {} run(s) of {} impressions into {}",
        cells,
        config.runs,
        config.train.impressions,
        config.out_dir.display()
    );
    let summary = run_experiment(&config)?;
    for cell in &summary.cells {
        eprintln!(
            "  {}: offline nDCG@10 {:.4} +/- {:.4}, online performance {:.2} ({} runs, {} failed)",
            cell.cell,
            cell.final_offline_ndcg.mean,
            cell.final_offline_ndcg.std_dev,
            cell.online_performance.mean,
            cell.completed_runs,
            cell.failed_runs
        );
    }
    if !summary.failures.is_empty() {
        eprintln!("  {} run(s) failed; see summary.json", summary.failures.len());
    }
    eprintln!("summary written to {}", config.out_dir.join("summary.json").display());
    Ok(())
}

fn eval(args: &EvalArgs) -> anyhow::Result<()> {
    let Some(source) = args.data.source()? else {
        bail!("a data source is required: --dataset <dir> or --synthetic <spec.json>");
    };
    let data = load_data(&source, args.data.normalize)?;
    let dataset = match args.split.as_str() {
        "train" => &data.train,
        "vali" | "validation" => data
            .validation
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("no validation split available"))?,
        "test" => &data.test,
        other => bail!("unknown split `{other}` (expected train|vali|test)"),
    };
    let policy = Policy64::load(&args.policy)?;
    let ndcg = offline_performance(&policy, dataset, args.k)?;
    println!("offline nDCG@{} on {}: {ndcg}", args.k, args.split);
    Ok(())
}

fn gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let spec = match &args.spec {
        Some(path) => read_spec(path)?,
        None => {
            let mut relevance_distribution = [0.0; 5];
            relevance_distribution.copy_from_slice(&args.relevance_dist);
            SyntheticSpec {
                n_queries: args.queries,
                docs_per_query: args.docs_per_query,
                feature_dim: args.feature_dim,
                relevance_distribution,
                noise_scale: args.noise_scale,
                seed: args.seed,
            }
        }
    };
    let data = generate_synthetic::<f64>(&spec)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for (name, dataset) in [
        ("train.txt", &data.train),
        ("vali.txt", &data.validation),
        ("test.txt", &data.test),
    ] {
        write_letor(dataset, &args.out.join(name))?;
    }
    data.scorer.save(&args.out.join("scorer.json"))?;
    let spec_file = std::fs::File::create(args.out.join("spec.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(spec_file), &spec)?;
    eprintln!(
        "wrote {} train / {} validation / {} test queries to {}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train(args) => run_train_or_sweep(args.experiment()?),
        Command::Sweep(args) => run_train_or_sweep(args.experiment()?),
        Command::Eval(args) => eval(&args),
        Command::GenData(args) => gen_data(&args),
    }
}
