//! `hoi`: generate scenes, label anchors, smoke-train, score, evaluate,
//! check gradients and time the fusion step.
//!
//! Exit status: 0 on success, 1 when a `--verify` check or a gradient
//! check fails, 2 on usage, configuration or input errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hoi", version, about = "Union-level HOI detection toolkit")]
struct Cli {
    /// Drop unknown fields in input files instead of rejecting them.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Output file; `-` for stdout.
    #[arg(short, long, default_value = "-")]
    output: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate seeded synthetic scenes.
    Gen(GenArgs),
    /// Turn scenes into detections with optional noise and distractors.
    Perturb(PerturbArgs),
    /// Label the default anchor pyramid of each scene and summarize.
    Label(LabelArgs),
    /// Gradient descent on raw prediction parameters for one scene.
    Smoketrain(SmoketrainArgs),
    /// Suppress detections and score HOI triplets.
    Score(ScoreArgs),
    /// Per-action average precision of triplets against scenes.
    Eval(EvalArgs),
    /// Finite-difference check of every loss on random problems.
    Fdcheck(FdcheckArgs),
    /// Time suppression plus triplet enumeration.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, env = "HOI_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    scenes: usize,
    /// Interaction groups per scene.
    #[arg(long, default_value_t = 3)]
    groups: usize,
    /// `mixed` or one of included, adjacent, distant, remote.
    #[arg(long, default_value = "mixed")]
    regime: String,
    /// `mixed` or one of one-to-one, one-to-many, many-to-one, many-to-many.
    #[arg(long, default_value = "mixed")]
    topology: String,
    /// Add a human whose three interactions share one union box.
    #[arg(long)]
    overlap_stress: bool,
    #[arg(long, default_value = "vcoco")]
    preset: String,
    #[arg(long, default_value_t = 80)]
    classes: usize,
    #[arg(long, default_value_t = 512.0)]
    width: f64,
    #[arg(long, default_value_t = 512.0)]
    height: f64,
    #[arg(long)]
    parallel: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    /// Scene file; `-` for stdin.
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    #[arg(long, env = "HOI_SEED", default_value_t = 0)]
    seed: u64,
    /// Corner jitter std-dev as a fraction of box size.
    #[arg(long, default_value_t = 0.0)]
    box_jitter: f64,
    /// Logit-space score noise std-dev.
    #[arg(long, default_value_t = 0.0)]
    score_sigma: f64,
    /// Logit magnitude of clean labels; `inf` gives exact 0/1 scores.
    #[arg(long, default_value_t = f64::INFINITY)]
    confidence: f64,
    #[arg(long, default_value_t = 0)]
    distractor_instances: usize,
    #[arg(long, default_value_t = 0)]
    distractor_unions: usize,
    /// Upper bound on distractor scores.
    #[arg(long, default_value_t = 0.3)]
    distractor_score: f64,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    t_union: f64,
    #[arg(long, default_value_t = 0.5)]
    t_human: f64,
    #[arg(long, default_value_t = 0.5)]
    t_object: f64,
    #[arg(long, default_value_t = 0.5)]
    t_instance: f64,
    /// Compare against the brute-force labelers; exit 1 on disagreement.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    parallel: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct SmoketrainArgs {
    /// Scene file; the built-in five-interaction scene when omitted.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Record index within the scene file.
    #[arg(long, default_value_t = 0)]
    record: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    /// Initial union action logit; the focal prior by default.
    #[arg(long, allow_hyphen_values = true)]
    init_logit: Option<f64>,
    /// Require a 99% loss reduction and decoded union IoU >= 0.9.
    #[arg(long)]
    verify: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Detection file; `-` for stdin.
    #[arg(short, long, default_value = "-")]
    input: PathBuf,
    #[arg(long, default_value = "vcoco")]
    preset: String,
    /// Select and weight unions by plain IoU with the pair's enclosing box.
    #[arg(long)]
    no_union_match: bool,
    /// Ignore union detections entirely.
    #[arg(long)]
    no_union: bool,
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f64,
    #[arg(long, default_value_t = 0.0)]
    score_threshold: f64,
    #[arg(long, default_value_t = 0)]
    person_class: usize,
    /// Comma-separated action names left out of scoring.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    /// Compare against the brute-force suppressors and scorer.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    parallel: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    triplets: PathBuf,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, default_value_t = 0)]
    person_class: usize,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct FdcheckArgs {
    #[arg(long, env = "HOI_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    scenes: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Coordinates sampled per check (at least 200).
    #[arg(long, default_value_t = 200)]
    coords: usize,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 30)]
    humans: usize,
    #[arg(long, default_value_t = 30)]
    objects: usize,
    #[arg(long, default_value_t = 60)]
    unions: usize,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, env = "HOI_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "vcoco")]
    preset: String,
    #[command(flatten)]
    out: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::VerificationFailed>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
