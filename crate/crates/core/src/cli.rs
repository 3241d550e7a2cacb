//! Command-line front end. Every command writes a `RunManifest` next to its
//! outputs and prints the manifest path as its last line of stdout;
//! `uwac replay --manifest M` reruns the recorded command.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    chebyshev_bound_check, detect_q_explosion, grid_heatmap, max_abs_q, ood_auc, uncertainty_heatmap, uniform_edges,
    ActionSource, BoundedDist, UncertaintySource, DEFAULT_RATIO,
};
use crate::env::{clip_dataset, generate_dataset, Axis, Behavior, ClipSpec, Dataset, EnvConfig, Keep, PdGains};
use crate::env::lander::{X_BOUND, Y_MAX};
use crate::error::{Category, Error, Result};
use crate::trainer::{
    evaluate_policy, gradcheck_suite, load_agent, normalized_return, read_metrics, reference_scores, save_agent, Agent,
    Mode, MetricsRow, MetricsWriter, TrainConfig, Trainer,
};
use crate::uncertainty::Weighting;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SEED_ENV: &str = "UWAC_SEED";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad flag, invalid value or config)
  3  i/o error (missing or unwritable file)
  4  format error (malformed dataset, checkpoint, CSV or JSON)
  5  numeric failure (non-finite values, failed gradient check)

Failures print one line `error[<category>]: <message>` to stderr.

Seeds: an explicit --seed wins, then a `seed` key in the config JSON
(train only), then the UWAC_SEED environment variable, then 0.";

#[derive(Parser, Debug)]
#[command(name = "uwac", version, about = "Uncertainty-weighted offline actor-critic toolkit", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Roll out a scripted controller and write a dataset file.
    GenDataset(GenDatasetArgs),
    /// Keep only transitions on one side of a displacement threshold.
    ClipDataset(ClipDatasetArgs),
    /// Train an agent; writes metrics.csv, a checkpoint directory and a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint's deterministic policy.
    Eval(EvalArgs),
    /// Bin critic uncertainty over displacement space (CSV + SVG).
    Heatmap(HeatmapArgs),
    /// AUC of dataset pairs vs. random-action pairs under critic uncertainty.
    Roc(RocArgs),
    /// Randomized finite-difference checks of the training losses.
    Gradcheck(GradcheckArgs),
    /// Monte-Carlo check of the weighted-deviation concentration bound.
    BoundCheck(BoundCheckArgs),
    /// Merge two metrics files and report Q-explosion verdicts for both.
    Compare(CompareArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorKind {
    Expert,
    Random,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    /// Gaussian action-noise std of the expert controller.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = BehaviorKind::Expert)]
    pub behavior: BehaviorKind,
    /// Defaults to UWAC_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisArg {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeepArg {
    Below,
    Above,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipDatasetArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: f64,
    /// Side of the threshold to keep (inclusive).
    #[arg(long, value_enum)]
    pub keep: KeepArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Uwac,
    Bear,
    UwacEnsemble,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Uwac => Mode::Uwac,
            ModeArg::Bear => Mode::BearBaseline,
            ModeArg::UwacEnsemble => Mode::UwacEnsemble,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full-size hyperparameters.
    Default,
    /// Smaller networks and batches sized for a single CPU.
    Desk,
}

/// Hyperparameter flags. Precedence: preset < --config JSON < flags.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOverrides {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Dropout passes per uncertainty estimate.
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub actor_lr: Option<f64>,
    #[arg(long)]
    pub critic_lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Sample dropout masks in the critic-loss forward pass too.
    #[arg(long)]
    pub train_dropout: Option<bool>,
    #[arg(long)]
    pub spectral_norm: Option<bool>,
    #[arg(long)]
    pub clip_hi: Option<f64>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingArg {
    InverseVariance,
    InverseStd,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON object overlaid on the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub episodes: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path; defaults to `<checkpoint>/eval.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionArg {
    Dataset,
    Policy,
    Hover,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Bins per axis.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Dropout passes; defaults to the checkpoint's config.
    #[arg(long = "T")]
    pub passes: Option<usize>,
    #[arg(long, value_enum, default_value_t = ActionArg::Dataset)]
    pub actions: ActionArg,
    /// Score bin centers (zero velocity) instead of dataset states.
    #[arg(long, default_value_t = false)]
    pub grid: bool,
    /// Also report mean uncertainty left/right of this x (bins that straddle
    /// it are excluded).
    #[arg(long, allow_negative_numbers = true)]
    pub split_x: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Writes `<prefix>.csv`, `<prefix>.svg` and `<prefix>.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n_random_actions: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_states: usize,
    #[arg(long = "T")]
    pub passes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "roc.json")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value = "gradcheck.json")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckArgs {
    /// Distribution as inline JSON (starting with `{`) or a path to a JSON
    /// file, e.g. `{"kind":"uniform","lo":-1,"hi":1}`.
    #[arg(long)]
    pub dist: String,
    #[arg(long, default_value_t = 0.8)]
    pub beta: f64,
    #[arg(long = "K", default_value_t = 2.0)]
    pub k: f64,
    #[arg(long, default_value_t = 1.0)]
    pub qm: f64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "bound-check.json")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub metrics_a: PathBuf,
    #[arg(long)]
    pub metrics_b: PathBuf,
    /// Merged CSV; verdicts go to `<out>.verdicts.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    pub ratio: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command: the resolved arguments (seed
/// filled in), the resolved training config and hashes of every input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: Command,
    pub config: Option<TrainConfig>,
    pub seed: Option<u64>,
    /// Hash of the dataset the command read, if any.
    pub dataset_hash: Option<String>,
    pub inputs: Vec<FileHash>,
    pub artifacts: Vec<PathBuf>,
}

impl RunManifest {
    fn new(command: Command, seed: Option<u64>) -> Self {
        Self {
            tool: "uwac".into(),
            tool_version: TOOL_VERSION.into(),
            command,
            config: None,
            seed,
            dataset_hash: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<String> {
        let h = sha256_file(path)?;
        self.inputs.push(FileHash {
            path: path.to_path_buf(),
            sha256: h.clone(),
        });
        Ok(h)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_text(path)?)?)
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_bytes(&read_bytes(path)?))
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_context(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_context(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_context(path, e))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_bytes(&read_bytes(path)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    })
}

/// Builds the clap command, annotating each train override flag with the
/// matching `TrainConfig` default.
pub fn command() -> clap::Command {
    let defaults = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    Cli::command().mut_subcommand("train", |sc| {
        let ids: Vec<String> = sc.get_arguments().map(|a| a.get_id().to_string()).collect();
        ids.into_iter().fold(sc, |sc, id| match defaults.get(&id) {
            Some(v) => sc.mut_arg(id.as_str(), |a| {
                let base = a.get_help().map(|h| format!("{h} ")).unwrap_or_default();
                a.help(format!("{base}[config default: {}]", v.to_string().trim_matches('"')))
            }),
            None => sc,
        })
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches: ArgMatches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[{}]: {first} (see --help)", Category::Usage);
            return Category::Usage.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[{}]: {}", Category::Usage, e.to_string().lines().next().unwrap_or(""));
            return Category::Usage.exit_code();
        }
    };
    match run(cli.command) {
        Ok(manifest) => {
            println!("manifest: {}", manifest.display());
            0
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{cat}]: {}", e.to_string().replace('\n', " "));
            cat.exit_code()
        }
    }
}

/// Runs one command and returns the path of the manifest it wrote.
pub fn run(cmd: Command) -> Result<PathBuf> {
    match cmd {
        Command::GenDataset(a) => gen_dataset(a),
        Command::ClipDataset(a) => clip(a),
        Command::Train(a) => {
            let cfg = resolve_train_config(&a)?;
            train_cmd(a, cfg)
        }
        Command::Eval(a) => eval(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Roc(a) => roc(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::BoundCheck(a) => bound_check(a),
        Command::Compare(a) => compare(a),
        Command::Replay(a) => replay(&a.manifest),
    }
}

fn gen_dataset(mut a: GenDatasetArgs) -> Result<PathBuf> {
    let seed = resolve_seed(a.seed)?;
    a.seed = Some(seed);
    let behavior = match a.behavior {
        BehaviorKind::Expert => Behavior::Expert {
            gains: PdGains::default(),
            noise_std: a.noise,
        },
        BehaviorKind::Random => Behavior::Random,
    };
    let d = generate_dataset(&EnvConfig::default(), &behavior, a.episodes, seed)?;
    let bytes = d.to_bytes()?;
    write_file(&a.out, &bytes)?;
    println!("wrote {} transitions to {}", d.len(), a.out.display());
    let mpath = with_suffix(&a.out, ".manifest.json");
    let mut m = RunManifest::new(Command::GenDataset(a.clone()), Some(seed));
    m.dataset_hash = Some(sha256_bytes(&bytes));
    m.artifacts.push(a.out);
    m.save(&mpath)?;
    Ok(mpath)
}

fn clip(a: ClipDatasetArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new(Command::ClipDataset(a.clone()), None);
    m.input(&a.input)?;
    let d = load_dataset(&a.input)?;
    let spec = ClipSpec::new(
        match a.axis {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
        },
        a.threshold,
        match a.keep {
            KeepArg::Below => Keep::Below,
            KeepArg::Above => Keep::Above,
        },
    );
    let out = clip_dataset(&d, spec)?;
    let bytes = out.to_bytes()?;
    write_file(&a.out, &bytes)?;
    println!("kept {} of {} transitions ({})", out.len(), d.len(), spec.describe());
    m.dataset_hash = Some(sha256_bytes(&bytes));
    m.artifacts.push(a.out.clone());
    let mpath = with_suffix(&a.out, ".manifest.json");
    m.save(&mpath)?;
    Ok(mpath)
}

/// Preset, then the config file, then flags; the seed falls back to
/// UWAC_SEED only when neither the file nor a flag sets it.
pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match a.preset {
        Preset::Default => TrainConfig::default(),
        Preset::Desk => TrainConfig::desk(),
    };
    let mut seed_set = false;
    if let Some(p) = &a.config {
        let text = read_text(p)?;
        cfg = cfg.with_json(&text)?;
        seed_set = serde_json::from_str::<serde_json::Value>(&text)?.get("seed").is_some();
    }
    let o = &a.overrides;
    if let Some(s) = o.seed {
        cfg.seed = s;
    } else if !seed_set {
        if let Some(s) = env_seed()? {
            cfg.seed = s;
        }
    }
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = o.$field { cfg.$field = v; } )* };
    }
    apply!(epochs, steps_per_epoch, batch_size, beta, alpha, lambda, tau, passes, gamma, actor_lr, critic_lr, dropout, train_dropout, spectral_norm, clip_hi, ensemble_size, eval_episodes);
    if let Some(m) = o.mode {
        cfg.mode = m.into();
    }
    if let Some(w) = o.weighting {
        cfg.weighting = match w {
            WeightingArg::InverseVariance => Weighting::InverseVariance,
            WeightingArg::InverseStd => Weighting::InverseStd,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_BATCH_FILE: &str = "failed_batch.json";

fn train_cmd(a: TrainArgs, cfg: TrainConfig) -> Result<PathBuf> {
    let mut m = RunManifest::new(Command::Train(a.clone()), Some(cfg.seed));
    let hash = m.input(&a.dataset)?;
    m.dataset_hash = Some(hash);
    m.config = Some(cfg.clone());
    let ckpt = a.out_dir.join(CHECKPOINT_DIR);
    m.artifacts = vec![a.out_dir.join(METRICS_FILE), ckpt.clone()];
    let dataset = load_dataset(&a.dataset)?;
    let mpath = a.out_dir.join(MANIFEST_FILE);
    m.save(&mpath)?;

    let mut writer = MetricsWriter::create(a.out_dir.join(METRICS_FILE))?;
    let mut trainer = Trainer::new(&dataset, &cfg)?;
    for _ in 0..cfg.epochs {
        match trainer.run_epoch() {
            Ok(row) => {
                writer.write(&row)?;
                println!(
                    "epoch {:>4}  return {:>9.3}  q_target {:>10.3}  weight {:.4}",
                    row.epoch, row.eval_return, row.q_target_mean, row.weight_mean
                );
            }
            Err(e) => {
                if let (Error::Numeric(_), Some(b)) = (&e, trainer.last_batch()) {
                    let dump = a.out_dir.join(FAILED_BATCH_FILE);
                    write_file(&dump, b.to_json())?;
                    return Err(Error::Numeric(format!("{e}; offending batch written to {}", dump.display())));
                }
                return Err(e);
            }
        }
    }
    save_agent(&ckpt, trainer.agent())?;
    Ok(mpath)
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: PathBuf,
    episodes: usize,
    seed: u64,
    raw_return: f64,
    random_reference: f64,
    expert_reference: f64,
    normalized_return: f64,
}

fn load_checkpoint(m: &mut RunManifest, dir: &Path) -> Result<Agent> {
    let cfg_path = dir.join(crate::trainer::store::CONFIG_FILE);
    if cfg_path.is_file() {
        m.input(&cfg_path)?;
        let cfg = TrainConfig::load(&cfg_path)?;
        for k in 0..cfg.num_critics() {
            m.input(&dir.join(crate::trainer::store::critic_file(k)))?;
        }
        m.input(&dir.join(crate::trainer::store::POLICY_FILE))?;
    }
    load_agent(dir)
}

fn eval(mut a: EvalArgs) -> Result<PathBuf> {
    let seed = resolve_seed(a.seed)?;
    a.seed = Some(seed);
    let mut m = RunManifest::new(Command::Eval(a.clone()), Some(seed));
    let agent = load_checkpoint(&mut m, &a.checkpoint)?;
    let env = EnvConfig::default();
    let raw = evaluate_policy(&env, &agent.policy, a.episodes, seed)?;
    let (random, expert) = reference_scores(&env, a.episodes, seed)?;
    let report = EvalReport {
        checkpoint: a.checkpoint.clone(),
        episodes: a.episodes,
        seed,
        raw_return: raw,
        random_reference: random,
        expert_reference: expert,
        normalized_return: normalized_return(raw, random, expert)?,
    };
    let out = a.out.clone().unwrap_or_else(|| a.checkpoint.join("eval.json"));
    let json = serde_json::to_string_pretty(&report)?;
    write_file(&out, format!("{json}\n"))?;
    println!("{json}");
    m.artifacts.push(out.clone());
    let mpath = with_suffix(&out, ".manifest.json");
    m.save(&mpath)?;
    Ok(mpath)
}

fn uncertainty_source(agent: &Agent, passes: Option<usize>, seed: u64) -> UncertaintySource<'_> {
    if agent.config.mode == Mode::UwacEnsemble {
        UncertaintySource::Ensemble(&agent.critics)
    } else {
        UncertaintySource::Dropout {
            q1: &agent.critics[0],
            q2: &agent.critics[1],
            lambda: agent.config.lambda,
            passes: passes.unwrap_or(agent.config.passes),
            seed,
        }
    }
}

#[derive(Serialize)]
struct HeatmapSummary {
    bins: usize,
    passes: usize,
    seed: u64,
    split_x: Option<f64>,
    mean_left: Option<f64>,
    mean_right: Option<f64>,
    /// `mean_left / mean_right`.
    ratio: Option<f64>,
}

fn heatmap(mut a: HeatmapArgs) -> Result<PathBuf> {
    let seed = resolve_seed(a.seed)?;
    a.seed = Some(seed);
    let mut m = RunManifest::new(Command::Heatmap(a.clone()), Some(seed));
    let agent = load_checkpoint(&mut m, &a.checkpoint)?;
    m.dataset_hash = Some(m.input(&a.dataset)?);
    let dataset = load_dataset(&a.dataset)?;
    let passes = a.passes.unwrap_or(agent.config.passes);
    let unc = uncertainty_source(&agent, Some(passes), seed);
    let actions = match a.actions {
        ActionArg::Dataset => ActionSource::Dataset,
        ActionArg::Policy => ActionSource::Policy(&agent.policy),
        ActionArg::Hover => ActionSource::Fixed([0.0, dataset.meta.env.hover_thrust()]),
    };
    let xs = uniform_edges(-X_BOUND, X_BOUND, a.bins)?;
    let ys = uniform_edges(0.0, Y_MAX, a.bins)?;
    let grid = if a.grid {
        if matches!(actions, ActionSource::Dataset) {
            return Err(Error::Config("--grid needs --actions policy or hover".into()));
        }
        grid_heatmap(&unc, actions, &xs, &ys)?
    } else {
        uncertainty_heatmap(&unc, &dataset, actions, &xs, &ys)?
    };
    let (mean_left, mean_right) = match a.split_x {
        Some(t) => (
            grid.region_mean(|_, hi, _, _| hi <= t),
            grid.region_mean(|lo, _, _, _| lo >= t),
        ),
        None => (None, None),
    };
    let summary = HeatmapSummary {
        bins: a.bins,
        passes,
        seed,
        split_x: a.split_x,
        mean_left,
        mean_right,
        ratio: mean_left.zip(mean_right).map(|(l, r)| l / r),
    };
    let csv = with_suffix(&a.out_prefix, ".csv");
    let svg = with_suffix(&a.out_prefix, ".svg");
    let json = with_suffix(&a.out_prefix, ".json");
    write_file(&csv, grid.to_csv()?)?;
    let title = format!("critic uncertainty, {} passes", passes);
    write_file(&svg, grid.to_svg(&title))?;
    let text = serde_json::to_string_pretty(&summary)?;
    write_file(&json, format!("{text}\n"))?;
    println!("{text}");
    m.artifacts = vec![csv, svg, json];
    let mpath = with_suffix(&a.out_prefix, ".manifest.json");
    m.save(&mpath)?;
    Ok(mpath)
}

fn roc(mut a: RocArgs) -> Result<PathBuf> {
    let seed = resolve_seed(a.seed)?;
    a.seed = Some(seed);
    let mut m = RunManifest::new(Command::Roc(a.clone()), Some(seed));
    let agent = load_checkpoint(&mut m, &a.checkpoint)?;
    m.dataset_hash = Some(m.input(&a.dataset)?);
    let dataset = load_dataset(&a.dataset)?;
    let unc = uncertainty_source(&agent, a.passes, seed);
    let report = ood_auc(&unc, &dataset, a.n_random_actions, a.max_states, seed)?;
    let text = serde_json::to_string_pretty(&report)?;
    write_file(&a.out, format!("{text}\n"))?;
    println!("{text}");
    m.artifacts.push(a.out.clone());
    let mpath = with_suffix(&a.out, ".manifest.json");
    m.save(&mpath)?;
    Ok(mpath)
}

fn gradcheck(mut a: GradcheckArgs) -> Result<PathBuf> {
    let seed = resolve_seed(a.seed)?;
    a.seed = Some(seed);
    let report = gradcheck_suite(seed, a.cases)?;
    write_file(&a.out, serde_json::to_string_pretty(&report)? + "\n")?;
    let mut m = RunManifest::new(Command::Gradcheck(a.clone()), Some(seed));
    m.artifacts.push(a.out.clone());
    let mpath = with_suffix(&a.out, ".manifest.json");
    m.save(&mpath)?;
    let verdict = if report.passed(a.tol) { "PASS" } else { "FAIL" };
    println!("{verdict} cases={} max_rel_error={:.3e} tol={:e}", a.cases, report.max_rel_error, a.tol);
    if !report.passed(a.tol) {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= {:e} (manifest {})",
            report.max_rel_error,
            a.tol,
            mpath.display()
        )));
    }
    Ok(mpath)
}

fn bound_check(mut a: BoundCheckArgs) -> Result<PathBuf> {
    let seed = resolve_seed(a.seed)?;
    a.seed = Some(seed);
    let mut m = RunManifest::new(Command::BoundCheck(a.clone()), Some(seed));
    let text = if a.dist.trim_start().starts_with('{') {
        a.dist.clone()
    } else {
        let p = PathBuf::from(&a.dist);
        m.input(&p)?;
        read_text(&p)?
    };
    let dist: BoundedDist = serde_json::from_str(&text)?;
    let report = chebyshev_bound_check(&dist, a.beta, a.k, a.qm, a.trials, seed)?;
    let text = serde_json::to_string_pretty(&report)?;
    write_file(&a.out, format!("{text}\n"))?;
    println!("{text}");
    m.artifacts.push(a.out.clone());
    let mpath = with_suffix(&a.out, ".manifest.json");
    m.save(&mpath)?;
    Ok(mpath)
}

#[derive(Serialize)]
struct RunVerdict {
    metrics: PathBuf,
    epochs: usize,
    exploded_at: Option<usize>,
    max_abs_q_target: f64,
    final_return: Option<f64>,
}

#[derive(Serialize)]
struct CompareReport {
    ratio: f64,
    a: RunVerdict,
    b: RunVerdict,
}

fn verdict(path: &Path, rows: &[MetricsRow], ratio: f64) -> RunVerdict {
    RunVerdict {
        metrics: path.to_path_buf(),
        epochs: rows.len(),
        exploded_at: detect_q_explosion(rows, ratio),
        max_abs_q_target: max_abs_q(rows),
        final_return: rows.last().map(|r| r.eval_return),
    }
}

fn compare(a: CompareArgs) -> Result<PathBuf> {
    let mut m = RunManifest::new(Command::Compare(a.clone()), None);
    m.input(&a.metrics_a)?;
    m.input(&a.metrics_b)?;
    let ra = read_metrics(&a.metrics_a)?;
    let rb = read_metrics(&a.metrics_b)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "a_eval_return",
        "a_q_target_mean",
        "a_weight_mean",
        "b_eval_return",
        "b_q_target_mean",
        "b_weight_mean",
    ])?;
    let n = ra.len().max(rb.len());
    let cell = |rows: &[MetricsRow], i: usize, f: fn(&MetricsRow) -> f64| rows.get(i).map(|r| f(r).to_string()).unwrap_or_default();
    for i in 0..n {
        let epoch = ra.get(i).or(rb.get(i)).map(|r| r.epoch).unwrap_or(i);
        w.write_record([
            epoch.to_string(),
            cell(&ra, i, |r| r.eval_return),
            cell(&ra, i, |r| r.q_target_mean),
            cell(&ra, i, |r| r.weight_mean),
            cell(&rb, i, |r| r.eval_return),
            cell(&rb, i, |r| r.q_target_mean),
            cell(&rb, i, |r| r.weight_mean),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_file(&a.out, bytes)?;
    let report = CompareReport {
        ratio: a.ratio,
        a: verdict(&a.metrics_a, &ra, a.ratio),
        b: verdict(&a.metrics_b, &rb, a.ratio),
    };
    let vpath = with_suffix(&a.out, ".verdicts.json");
    let text = serde_json::to_string_pretty(&report)?;
    write_file(&vpath, format!("{text}\n"))?;
    println!("{text}");
    m.artifacts = vec![a.out.clone(), vpath];
    let mpath = with_suffix(&a.out, ".manifest.json");
    m.save(&mpath)?;
    Ok(mpath)
}

/// Checks recorded input hashes, then reruns the command. Training reuses the
/// recorded config rather than re-reading the config file.
pub fn replay(path: &Path) -> Result<PathBuf> {
    let m = RunManifest::load(path)?;
    for f in &m.inputs {
        let h = sha256_file(&f.path)?;
        if h != f.sha256 {
            return Err(Error::contract(format!(
                "input {} changed since the manifest was written (sha256 {h}, recorded {})",
                f.path.display(),
                f.sha256
            )));
        }
    }
    match m.command {
        Command::Train(a) => {
            let cfg = m
                .config
                .ok_or_else(|| Error::format(0, "train manifest has no config snapshot"))?;
            cfg.validate()?;
            train_cmd(a, cfg)
        }
        Command::Replay(_) => Err(Error::contract("a manifest cannot record a replay")),
        other => run(other),
    }
}
