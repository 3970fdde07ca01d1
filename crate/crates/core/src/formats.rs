//! JSON Lines files for scenes, detections and triplets.
//!
//! Each line holds one JSON object. Strict parsing rejects unknown fields;
//! lenient parsing drops them. Writing a parsed file reproduces the bytes
//! of the previous write.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action_space::Preset;
use crate::anchors::{InstanceGroundTruth, UnionGroundTruth};
use crate::error::FormatError;
use crate::fusion::{HoiTriplet, InstanceDetection, UnionDetection};
use crate::geometry::BBox;
use crate::synth::{Detections, Regime, Scene, RNG_ALGORITHM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub algorithm: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSize {
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class: usize,
    /// Active instance action slots.
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnionRecord {
    pub human_id: usize,
    pub object_id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Active union actions.
    pub actions: Vec<usize>,
    pub target_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub scene: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    pub action_space: Preset,
    pub num_classes: usize,
    pub image: ImageSize,
    pub instances: Vec<InstanceRecord>,
    pub unions: Vec<UnionRecord>,
}

fn active(flags: &[bool]) -> Vec<usize> {
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
}

fn flags(indices: &[usize], len: usize, what: &str) -> Result<Vec<bool>, String> {
    let mut out = vec![false; len];
    for &i in indices {
        if i >= len {
            return Err(format!("{what} index {i} out of range for {len}"));
        }
        if out[i] {
            return Err(format!("{what} index {i} listed twice"));
        }
        out[i] = true;
    }
    Ok(out)
}

impl SceneRecord {
    pub fn from_scene(index: usize, scene: &Scene) -> Self {
        Self {
            scene: index,
            generator: scene.seed.map(|seed| Generator {
                algorithm: RNG_ALGORITHM.to_string(),
                seed,
            }),
            action_space: scene.preset,
            num_classes: scene.num_classes,
            image: ImageSize {
                w: scene.image_width,
                h: scene.image_height,
            },
            instances: scene
                .instances
                .iter()
                .map(|i| InstanceRecord {
                    id: i.instance_id,
                    bbox: i.bbox,
                    class: i.class,
                    actions: active(&i.action_labels),
                })
                .collect(),
            unions: scene
                .unions
                .iter()
                .zip(&scene.regimes)
                .map(|(u, r)| UnionRecord {
                    human_id: u.human_id,
                    object_id: u.object_id,
                    bbox: u.union_box,
                    actions: active(&u.action_labels),
                    target_class: u.target_class,
                    regime: *r,
                })
                .collect(),
        }
    }

    pub fn to_scene(&self) -> Result<Scene, String> {
        if let Some(g) = &self.generator {
            if g.algorithm != RNG_ALGORITHM {
                return Err(format!("unsupported generator {:?}", g.algorithm));
            }
        }
        let space = crate::action_space::ActionSpace::from_preset(self.action_space).map_err(|e| e.to_string())?;
        let instances = self
            .instances
            .iter()
            .map(|r| {
                Ok(InstanceGroundTruth {
                    bbox: r.bbox,
                    class: r.class,
                    action_labels: flags(&r.actions, space.num_instance_slots(), "instance action")?,
                    instance_id: r.id,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let find = |id: usize| {
            instances
                .iter()
                .find(|i| i.instance_id == id)
                .ok_or_else(|| format!("unknown instance id {id}"))
        };
        let mut unions = Vec::with_capacity(self.unions.len());
        for r in &self.unions {
            let h = find(r.human_id)?;
            let o = find(r.object_id)?;
            let labels = flags(&r.actions, space.num_union(), "union action")?;
            let gt = UnionGroundTruth::new(h.bbox, o.bbox, labels, r.target_class, r.human_id, r.object_id)
                .map_err(|e| e.to_string())?;
            if gt.union_box != r.bbox {
                return Err(format!(
                    "union box of ({}, {}) is not the enclosing box of its instances",
                    r.human_id, r.object_id
                ));
            }
            unions.push(gt);
        }
        let scene = Scene {
            image_width: self.image.w,
            image_height: self.image.h,
            preset: self.action_space,
            num_classes: self.num_classes,
            instances,
            unions,
            regimes: self.unions.iter().map(|u| u.regime).collect(),
            seed: self.generator.as_ref().map(|g| g.seed),
        };
        scene.validate().map_err(|e| e.to_string())?;
        Ok(scene)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionKind {
    Instance,
    Union,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<Vec<f64>>,
    pub action: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub scene: usize,
    pub kind: DetectionKind,
    pub id: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub scores: ScoreRecord,
}

/// Detections of one scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneDetections {
    pub scene: usize,
    pub detections: Detections,
}

fn check_scores(v: &[f64], what: &str) -> Result<(), String> {
    match v.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        Some(s) => Err(format!("{what} score {s} outside [0, 1]")),
        None => Ok(()),
    }
}

impl DetectionRecord {
    pub fn from_instance(scene: usize, d: &InstanceDetection) -> Self {
        Self {
            scene,
            kind: DetectionKind::Instance,
            id: d.detection_id,
            bbox: d.bbox,
            scores: ScoreRecord {
                class: Some(d.class_scores.clone()),
                action: d.action_scores.clone(),
                target_class: None,
            },
        }
    }

    pub fn from_union(scene: usize, d: &UnionDetection) -> Self {
        Self {
            scene,
            kind: DetectionKind::Union,
            id: d.detection_id,
            bbox: d.bbox,
            scores: ScoreRecord {
                class: None,
                action: d.action_scores.clone(),
                target_class: Some(d.target_class_scores.clone()),
            },
        }
    }

    fn validate(&self) -> Result<(), String> {
        check_scores(&self.scores.action, "action")?;
        match self.kind {
            DetectionKind::Instance => {
                if self.scores.target_class.is_some() {
                    return Err("instance detection carries target_class scores".into());
                }
                let class = self
                    .scores
                    .class
                    .as_ref()
                    .ok_or("instance detection lacks class scores")?;
                if class.is_empty() {
                    return Err("instance detection has no class scores".into());
                }
                check_scores(class, "class")
            }
            DetectionKind::Union => {
                if self.scores.class.is_some() {
                    return Err("union detection carries class scores".into());
                }
                let tc = self
                    .scores
                    .target_class
                    .as_ref()
                    .ok_or("union detection lacks target_class scores")?;
                check_scores(tc, "target_class")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletRecord {
    pub scene: usize,
    pub human_id: usize,
    pub object_id: Option<usize>,
    pub action: usize,
    pub score: f64,
    pub human_box: BBox,
    pub object_box: Option<BBox>,
    pub union_box: Option<BBox>,
    pub mu: Option<f64>,
}

impl TripletRecord {
    pub fn new(scene: usize, t: &HoiTriplet) -> Self {
        Self {
            scene,
            human_id: t.human_id,
            object_id: t.object_id,
            action: t.action,
            score: t.score,
            human_box: t.human_box,
            object_box: t.object_box,
            union_box: t.union_box,
            mu: t.mu,
        }
    }

    pub fn triplet(&self) -> HoiTriplet {
        HoiTriplet {
            human_id: self.human_id,
            object_id: self.object_id,
            action: self.action,
            score: self.score,
            human_box: self.human_box,
            object_box: self.object_box,
            union_box: self.union_box,
            mu: self.mu,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !self.score.is_finite() {
            return Err("non-finite score".into());
        }
        if self.object_id.is_some() != self.object_box.is_some() {
            return Err("object_id and object_box must both be set or both be null".into());
        }
        if self.object_id.is_none() && (self.union_box.is_some() || self.mu.is_some()) {
            return Err("no-object triplet carries a union".into());
        }
        if self.union_box.is_some() != self.mu.is_some() {
            return Err("union_box and mu must both be set or both be null".into());
        }
        Ok(())
    }
}

/// Accepted keys, used to drop unknown fields in lenient mode.
enum Shape {
    Any,
    Object(&'static [(&'static str, Shape)]),
    Array(&'static Shape),
}

const BOX_SHAPE: Shape = Shape::Any;
const INSTANCE_SHAPE: Shape = Shape::Object(&[
    ("id", Shape::Any),
    ("box", BOX_SHAPE),
    ("class", Shape::Any),
    ("actions", Shape::Any),
]);
const UNION_SHAPE: Shape = Shape::Object(&[
    ("human_id", Shape::Any),
    ("object_id", Shape::Any),
    ("box", BOX_SHAPE),
    ("actions", Shape::Any),
    ("target_class", Shape::Any),
    ("regime", Shape::Any),
]);
const SCENE_SHAPE: Shape = Shape::Object(&[
    ("scene", Shape::Any),
    (
        "generator",
        Shape::Object(&[("algorithm", Shape::Any), ("seed", Shape::Any)]),
    ),
    ("action_space", Shape::Any),
    ("num_classes", Shape::Any),
    ("image", Shape::Object(&[("w", Shape::Any), ("h", Shape::Any)])),
    ("instances", Shape::Array(&INSTANCE_SHAPE)),
    ("unions", Shape::Array(&UNION_SHAPE)),
]);
const DETECTION_SHAPE: Shape = Shape::Object(&[
    ("scene", Shape::Any),
    ("kind", Shape::Any),
    ("id", Shape::Any),
    ("box", BOX_SHAPE),
    (
        "scores",
        Shape::Object(&[
            ("class", Shape::Any),
            ("action", Shape::Any),
            ("target_class", Shape::Any),
        ]),
    ),
]);
const TRIPLET_SHAPE: Shape = Shape::Object(&[
    ("scene", Shape::Any),
    ("human_id", Shape::Any),
    ("object_id", Shape::Any),
    ("action", Shape::Any),
    ("score", Shape::Any),
    ("human_box", BOX_SHAPE),
    ("object_box", BOX_SHAPE),
    ("union_box", BOX_SHAPE),
    ("mu", Shape::Any),
]);

fn prune(value: &mut Value, shape: &Shape) {
    match (shape, value) {
        (Shape::Object(fields), Value::Object(map)) => {
            map.retain(|k, _| fields.iter().any(|(name, _)| name == k));
            for (name, sub) in fields.iter() {
                if let Some(v) = map.get_mut(*name) {
                    prune(v, sub);
                }
            }
        }
        (Shape::Array(item), Value::Array(items)) => {
            for v in items {
                prune(v, item);
            }
        }
        _ => {}
    }
}

fn parse_lines<T, F>(text: &str, strictness: Strictness, shape: &Shape, check: F) -> Result<Vec<T>, FormatError>
where
    T: DeserializeOwned,
    F: Fn(&T) -> Result<(), String>,
{
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: T = match strictness {
            Strictness::Strict => serde_json::from_str(raw).map_err(|source| FormatError::Json { line, source })?,
            Strictness::Lenient => {
                let mut v: Value = serde_json::from_str(raw).map_err(|source| FormatError::Json { line, source })?;
                prune(&mut v, shape);
                serde_json::from_value(v).map_err(|source| FormatError::Json { line, source })?
            }
        };
        check(&record).map_err(|message| FormatError::Invalid { line, message })?;
        out.push(record);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses a scene file into `(scene index, scene)` pairs in file order.
pub fn parse_scenes(text: &str, strictness: Strictness) -> Result<Vec<(usize, Scene)>, FormatError> {
    let records = parse_scene_records(text, strictness)?;
    Ok(records
        .iter()
        .map(|r| (r.scene, r.to_scene().expect("validated above")))
        .collect())
}

pub fn parse_scene_records(text: &str, strictness: Strictness) -> Result<Vec<SceneRecord>, FormatError> {
    parse_lines(text, strictness, &SCENE_SHAPE, |r: &SceneRecord| r.to_scene().map(drop))
}

pub fn write_scenes<'a, I>(scenes: I) -> String
where
    I: IntoIterator<Item = (usize, &'a Scene)>,
{
    let records: Vec<SceneRecord> = scenes.into_iter().map(|(i, s)| SceneRecord::from_scene(i, s)).collect();
    write_lines(&records)
}

pub fn parse_detection_records(text: &str, strictness: Strictness) -> Result<Vec<DetectionRecord>, FormatError> {
    parse_lines(text, strictness, &DETECTION_SHAPE, DetectionRecord::validate)
}

/// Groups detections by scene, in order of first appearance. Within a scene
/// the file order of each kind is kept.
pub fn parse_detections(text: &str, strictness: Strictness) -> Result<Vec<SceneDetections>, FormatError> {
    let records = parse_detection_records(text, strictness)?;
    let mut out: Vec<SceneDetections> = Vec::new();
    for r in records {
        let pos = match out.iter().position(|s| s.scene == r.scene) {
            Some(p) => p,
            None => {
                out.push(SceneDetections {
                    scene: r.scene,
                    detections: Detections::default(),
                });
                out.len() - 1
            }
        };
        let d = &mut out[pos].detections;
        match r.kind {
            DetectionKind::Instance => d.instances.push(InstanceDetection {
                detection_id: r.id,
                bbox: r.bbox,
                class_scores: r.scores.class.expect("validated"),
                action_scores: r.scores.action,
            }),
            DetectionKind::Union => d.unions.push(UnionDetection {
                detection_id: r.id,
                bbox: r.bbox,
                action_scores: r.scores.action,
                target_class_scores: r.scores.target_class.expect("validated"),
            }),
        }
    }
    Ok(out)
}

/// Instances of a scene first, then its unions.
pub fn write_detections(scenes: &[SceneDetections]) -> String {
    let mut records = Vec::new();
    for s in scenes {
        records.extend(
            s.detections
                .instances
                .iter()
                .map(|d| DetectionRecord::from_instance(s.scene, d)),
        );
        records.extend(
            s.detections
                .unions
                .iter()
                .map(|d| DetectionRecord::from_union(s.scene, d)),
        );
    }
    write_lines(&records)
}

pub fn parse_triplets(text: &str, strictness: Strictness) -> Result<Vec<TripletRecord>, FormatError> {
    parse_lines(text, strictness, &TRIPLET_SHAPE, TripletRecord::validate)
}

pub fn write_triplets(records: &[TripletRecord]) -> String {
    write_lines(records)
}
