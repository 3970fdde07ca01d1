use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use hoi_core::action_space::{ActionSpace, Preset};
use hoi_core::anchors::{
    generate_anchors, label_instance_anchors, label_union_anchors, AnchorAssignment, PyramidConfig,
};
use hoi_core::eval::evaluate;
use hoi_core::formats::{
    parse_detections, parse_scenes, parse_triplets, write_detections, write_scenes, write_triplets, SceneDetections,
    Strictness, TripletRecord,
};
use hoi_core::fusion::{enumerate_triplets, split_instances, FusionOptions, MatchMode};
use hoi_core::gradcheck::{finite_difference_check, FdOptions};
use hoi_core::losses::LossConfig;
use hoi_core::suppress::{nms_instance, nms_union};
use hoi_core::synth::oracle::{
    compare_triplets, oracle_label_instance, oracle_label_union, oracle_nms_instance, oracle_nms_union, oracle_triplets,
};
use hoi_core::synth::{
    generate_scene, perturb_to_detections, random_detections, smoke_scene, Mix, NoiseConfig, Regime, Scene,
    SceneConfig, Topology,
};
use hoi_core::train::{
    checked_loss, checked_params, random_problem, smoke_loss_config, smoke_train, CheckedLoss, LabelThresholds,
    SmokeConfig, TrainingProblem, PRIOR_LOGIT,
};
use hoi_core::{Threshold, UnionThresholds};

use crate::{
    BenchArgs, Cli, Command, EvalArgs, FdcheckArgs, GenArgs, LabelArgs, PerturbArgs, ScoreArgs, SmoketrainArgs,
};

/// A `--verify` or gradient check did not pass.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

pub fn run(cli: Cli) -> Result<()> {
    let strict = if cli.lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Perturb(a) => perturb(a, strict),
        Command::Label(a) => label(a, strict),
        Command::Smoketrain(a) => smoketrain(a, strict),
        Command::Score(a) => score(a, strict),
        Command::Eval(a) => eval(a, strict),
        Command::Fdcheck(a) => fdcheck(a),
        Command::Bench(a) => bench(a),
    }
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).context("reading stdin")?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_output(path: &Path, text: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes())?;
        out.flush()?;
        Ok(())
    } else {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Maps over scenes, optionally in parallel; results keep input order.
fn map_ordered<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

fn threshold(v: f64, name: &str) -> Result<Threshold> {
    Threshold::new(v).with_context(|| format!("--{name}"))
}

fn mix<E: fmt::Display>(value: &str, parse: impl Fn(&str) -> Result<usize, E>) -> Result<Mix> {
    if value == "mixed" {
        return Ok(Mix::UNIFORM);
    }
    parse(value).map(Mix::only).map_err(|e| anyhow::anyhow!("{e}"))
}

fn gen(a: GenArgs) -> Result<()> {
    let preset: Preset = a.preset.parse()?;
    let regime_mix = mix(&a.regime, |s| {
        s.parse::<Regime>()
            .map(|r| Regime::ALL.iter().position(|x| *x == r).expect("listed"))
    })?;
    let topology_mix = mix(&a.topology, |s| {
        s.parse::<Topology>()
            .map(|t| Topology::ALL.iter().position(|x| *x == t).expect("listed"))
    })?;
    let configs: Vec<SceneConfig> = (0..a.scenes)
        .map(|i| SceneConfig {
            seed: a.seed.wrapping_add(i as u64),
            image_width: a.width,
            image_height: a.height,
            groups: a.groups,
            preset,
            num_classes: a.classes,
            regime_mix,
            topology_mix,
            overlap_stress: a.overlap_stress,
            ..SceneConfig::default()
        })
        .collect();
    let scenes = map_ordered(&configs, a.parallel, generate_scene)
        .into_iter()
        .collect::<Result<Vec<Scene>, _>>()?;
    write_output(&a.out.output, &write_scenes(scenes.iter().enumerate()))
}

fn perturb(a: PerturbArgs, strict: Strictness) -> Result<()> {
    let scenes = parse_scenes(&read_input(&a.input)?, strict)?;
    let mut out = Vec::with_capacity(scenes.len());
    for (index, scene) in &scenes {
        let noise = NoiseConfig {
            seed: a.seed.wrapping_add(*index as u64),
            box_jitter: a.box_jitter,
            score_sigma: a.score_sigma,
            confidence: a.confidence,
            distractor_instances: a.distractor_instances,
            distractor_unions: a.distractor_unions,
            distractor_score: a.distractor_score,
        };
        out.push(SceneDetections {
            scene: *index,
            detections: perturb_to_detections(scene, &noise)?,
        });
    }
    write_output(&a.out.output, &write_detections(&out))
}

#[derive(Debug, Serialize)]
struct BranchSummary {
    positive: usize,
    negative: usize,
    per_gt: Vec<usize>,
}

impl BranchSummary {
    fn new(assignment: &AnchorAssignment, num_gts: usize) -> Self {
        let positive = assignment.num_positive();
        Self {
            positive,
            negative: assignment.len() - positive,
            per_gt: assignment.positives_per_gt(num_gts),
        }
    }
}

#[derive(Debug, Serialize)]
struct LabelSummary {
    scene: usize,
    anchors: usize,
    union: BranchSummary,
    instance: BranchSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_agrees: Option<bool>,
}

fn label(a: LabelArgs, strict: Strictness) -> Result<()> {
    let thresholds = UnionThresholds {
        union_iou: threshold(a.t_union, "t-union")?,
        human_inclusion: threshold(a.t_human, "t-human")?,
        object_inclusion: threshold(a.t_object, "t-object")?,
    };
    let t_instance = threshold(a.t_instance, "t-instance")?;
    let scenes = parse_scenes(&read_input(&a.input)?, strict)?;
    let summaries = map_ordered(&scenes, a.parallel, |(index, scene)| -> Result<LabelSummary> {
        let anchors = generate_anchors(&PyramidConfig::retinanet(scene.image_width, scene.image_height))?;
        let union = label_union_anchors(&anchors, &scene.unions, &thresholds);
        let instance = label_instance_anchors(&anchors, &scene.instances, t_instance);
        let oracle_agrees = a.verify.then(|| {
            union == oracle_label_union(&anchors, &scene.unions, a.t_union, a.t_human, a.t_object)
                && instance == oracle_label_instance(&anchors, &scene.instances, a.t_instance)
        });
        Ok(LabelSummary {
            scene: *index,
            anchors: anchors.len(),
            union: BranchSummary::new(&union, scene.unions.len()),
            instance: BranchSummary::new(&instance, scene.instances.len()),
            oracle_agrees,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut text = String::new();
    for s in &summaries {
        text.push_str(&serde_json::to_string(s)?);
        text.push('\n');
    }
    write_output(&a.out.output, &text)?;
    let bad: Vec<usize> = summaries
        .iter()
        .filter(|s| s.oracle_agrees == Some(false))
        .map(|s| s.scene)
        .collect();
    if !bad.is_empty() {
        return Err(VerificationFailed(format!("labeling differs from the oracle in scenes {bad:?}")).into());
    }
    Ok(())
}

fn smoketrain(a: SmoketrainArgs, strict: Strictness) -> Result<()> {
    let scene = match &a.input {
        None => smoke_scene(),
        Some(path) => {
            let mut scenes = parse_scenes(&read_input(path)?, strict)?;
            if a.record >= scenes.len() {
                bail!("--record {} but the file has {} scenes", a.record, scenes.len());
            }
            scenes.swap_remove(a.record).1
        }
    };
    let pyramid = PyramidConfig::retinanet(scene.image_width, scene.image_height);
    let problem = TrainingProblem::from_scene(&scene, &pyramid, &LabelThresholds::default(), smoke_loss_config())?;
    let cfg = SmokeConfig {
        steps: a.steps,
        lr: a.lr,
        init_action_logit: a.init_logit.unwrap_or(PRIOR_LOGIT),
    };
    let report = smoke_train(&problem, &cfg)?;

    let mut csv = String::from("step,loss\n");
    for (step, loss) in report.trajectory.iter().enumerate() {
        csv.push_str(&format!("{step},{loss}\n"));
    }
    write_output(&a.out.output, &csv)?;

    let decoded = problem.decoded_unions(&report.params)?;
    let min_iou = decoded
        .iter()
        .map(|d| d.map_or(0.0, |(_, v)| v))
        .fold(f64::INFINITY, f64::min);
    eprintln!(
        "loss {:.6} -> {:.6} ({:.4}% reduction); min decoded union IoU {:.4}",
        report.trajectory[0],
        report.trajectory.last().expect("non-empty"),
        100.0 * report.reduction(),
        if decoded.is_empty() { f64::NAN } else { min_iou }
    );
    if a.verify {
        if report.reduction() < 0.99 {
            return Err(
                VerificationFailed(format!("loss reduced by {:.4}%, need 99%", 100.0 * report.reduction())).into(),
            );
        }
        if decoded.is_empty() || min_iou < 0.9 {
            return Err(VerificationFailed(format!("decoded union IoU {min_iou:.4} below 0.9")).into());
        }
    }
    Ok(())
}

fn score(a: ScoreArgs, strict: Strictness) -> Result<()> {
    let preset: Preset = a.preset.parse()?;
    let names: Vec<&str> = a.exclude.iter().map(String::as_str).collect();
    let space = ActionSpace::from_preset(preset)?.with_excluded(&names)?;
    let nms_iou = threshold(a.nms_iou, "nms-iou")?;
    let opts = FusionOptions {
        score_threshold: a.score_threshold,
        match_mode: if a.no_union_match {
            MatchMode::PlainIou
        } else {
            MatchMode::UnionInstance
        },
        use_union: !a.no_union,
        person_class: a.person_class,
    };
    let scenes = parse_detections(&read_input(&a.input)?, strict)?;
    let results = map_ordered(
        &scenes,
        a.parallel,
        |s| -> Result<(Vec<TripletRecord>, Option<String>)> {
            let instances = nms_instance(&s.detections.instances, nms_iou);
            let unions = nms_union(&s.detections.unions, nms_iou);
            let (humans, objects) = split_instances(&instances, opts.person_class);
            let triplets = enumerate_triplets(&humans, &objects, &unions, &space, &opts)?;
            let mut mismatch = None;
            if a.verify {
                let t = nms_iou.get();
                if instances != oracle_nms_instance(&s.detections.instances, t) {
                    mismatch = Some(format!("scene {}: instance suppression differs", s.scene));
                } else if unions != oracle_nms_union(&s.detections.unions, t) {
                    mismatch = Some(format!("scene {}: union suppression differs", s.scene));
                } else if let Err(e) = compare_triplets(
                    &triplets,
                    &oracle_triplets(&humans, &objects, &unions, &space, &opts),
                    1e-12,
                ) {
                    mismatch = Some(format!("scene {}: {e}", s.scene));
                }
            }
            Ok((
                triplets.iter().map(|t| TripletRecord::new(s.scene, t)).collect(),
                mismatch,
            ))
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut mismatches = Vec::new();
    for (r, m) in results {
        records.extend(r);
        mismatches.extend(m);
    }
    write_output(&a.out.output, &write_triplets(&records))?;
    if !mismatches.is_empty() {
        return Err(VerificationFailed(mismatches.join("; ")).into());
    }
    Ok(())
}

fn eval(a: EvalArgs, strict: Strictness) -> Result<()> {
    let scenes = parse_scenes(&read_input(&a.scenes)?, strict)?;
    let preds: Vec<_> = parse_triplets(&read_input(&a.triplets)?, strict)?
        .iter()
        .map(|r| (r.scene, r.triplet()))
        .collect();
    let mut gts = Vec::new();
    let mut space: Option<ActionSpace> = None;
    for (index, scene) in &scenes {
        let s = scene.action_space()?;
        if space.as_ref().is_some_and(|prev| prev.preset() != s.preset()) {
            bail!("scene file mixes action spaces");
        }
        gts.extend(scene.gt_triplets(&s, a.person_class).into_iter().map(|g| (*index, g)));
        space = Some(s);
    }
    let report = evaluate(&preds, &gts, a.iou);
    let text = if a.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        let mut t = format!("{:<6} {:<22} {:>6} {:>6} {:>8}\n", "action", "name", "gt", "pred", "AP");
        for ap in &report.per_action {
            let name = space
                .as_ref()
                .and_then(|s| s.action(ap.action))
                .map_or("?", |m| m.name.as_str());
            t.push_str(&format!(
                "{:<6} {:<22} {:>6} {:>6} {:>8.4}\n",
                ap.action, name, ap.num_gt, ap.num_pred, ap.ap
            ));
        }
        t.push_str(&format!(
            "mean AP {:.4} over {} actions\n",
            report.mean_ap,
            report.per_action.len()
        ));
        t
    };
    write_output(&a.out.output, &text)
}

fn fdcheck(a: FdcheckArgs) -> Result<()> {
    let configs = [
        ("vanilla", LossConfig::vanilla()),
        ("target-cls", LossConfig::with_target_cls()),
        ("foreground", LossConfig::default()),
    ];
    let checks = [
        ("union", CheckedLoss::Union),
        ("instance", CheckedLoss::Instance),
        ("total", CheckedLoss::Total),
    ];
    let mut text = String::from("config,loss,max_rel_error,worst_scene\n");
    let mut worst_overall: f64 = 0.0;
    for (cname, cfg) in configs {
        for (lname, which) in checks {
            let mut worst = (0.0f64, 0u64);
            for k in 0..a.scenes {
                let seed = a.seed.wrapping_add(k as u64);
                let (problem, params) = random_problem(seed, cfg);
                let x = checked_params(&problem, &params, which);
                let opts = FdOptions {
                    eps: a.eps,
                    max_coords: a.coords,
                    seed,
                };
                let r = finite_difference_check(checked_loss(&problem, which), &x, &opts)?;
                if r.max_rel_error >= worst.0 {
                    worst = (r.max_rel_error, seed);
                }
            }
            worst_overall = worst_overall.max(worst.0);
            text.push_str(&format!("{cname},{lname},{:e},{}\n", worst.0, worst.1));
        }
    }
    write_output(&a.out.output, &text)?;
    if worst_overall > a.tolerance {
        return Err(VerificationFailed(format!(
            "max relative gradient error {worst_overall:e} exceeds {:e}",
            a.tolerance
        ))
        .into());
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let space = ActionSpace::from_preset(a.preset.parse()?)?;
    let det = random_detections(a.seed, a.humans, a.objects, a.unions, &space, 80, 640.0);
    let opts = FusionOptions::default();
    let mut times = Vec::with_capacity(a.reps);
    let mut count = 0;
    for _ in 0..a.reps {
        let start = Instant::now();
        let instances = nms_instance(&det.instances, Threshold::HALF);
        let unions = nms_union(&det.unions, Threshold::HALF);
        let (humans, objects) = split_instances(&instances, opts.person_class);
        let triplets = enumerate_triplets(&humans, &objects, &unions, &space, &opts)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        count = triplets.len();
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    let p95 = times[((times.len() as f64 * 0.95).ceil() as usize).clamp(1, times.len()) - 1];
    let text = format!(
        "n_h,n_o,n_u,reps,median_ms,p95_ms,triplets\n{},{},{},{},{:.4},{:.4},{}\n",
        a.humans, a.objects, a.unions, a.reps, median, p95, count
    );
    write_output(&a.out.output, &text)
}
