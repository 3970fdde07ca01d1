//! Deterministic synthetic scenes and the detections derived from them.
//!
//! Every scene is built from interaction groups. A group has a relation
//! topology (one-to-one, one-to-many, many-to-one, many-to-many) and a
//! distance regime that holds for every interacting (human, object) pair in
//! it. Layouts are rejection-sampled from a seeded ChaCha8 stream, so a seed
//! reproduces a scene exactly on any platform.
//!
//! Scenes are also kept "detectable": same-class instances and distinct
//! union boxes overlap by at most `max_overlap` IoU, so greedy suppression
//! at that threshold leaves every ground truth standing.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action_space::{ActionSpace, Preset};
use crate::anchors::{InstanceGroundTruth, UnionGroundTruth};
use crate::error::ConfigError;
use crate::fusion::{InstanceDetection, UnionDetection, DEFAULT_PERSON_CLASS};
use crate::geometry::{enclose, iou, BBox};

/// Name of the generator recorded in scene files.
pub const RNG_ALGORITHM: &str = "chacha8";

const GROUP_ATTEMPTS: usize = 4000;
const SCENE_ATTEMPTS: usize = 50;

/// Spatial relation between a human box and an object box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// The human box contains the object box.
    Included,
    /// The boxes overlap without containment.
    Adjacent,
    /// Disjoint, centers no farther apart than the larger diagonal.
    Distant,
    /// Disjoint, centers farther apart than the larger diagonal.
    Remote,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Included, Regime::Adjacent, Regime::Distant, Regime::Remote];

    pub fn holds(self, human: &BBox, object: &BBox) -> bool {
        let overlap = iou(human, object);
        let (hx, hy) = human.center();
        let (ox, oy) = object.center();
        let dist = (hx - ox).hypot(hy - oy);
        let reach = human.diagonal().max(object.diagonal());
        match self {
            Regime::Included => human.contains(object) && human != object,
            Regime::Adjacent => overlap > 0.0 && !human.contains(object),
            Regime::Distant => overlap == 0.0 && dist <= reach,
            Regime::Remote => overlap == 0.0 && dist > reach,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Included => "included",
            Regime::Adjacent => "adjacent",
            Regime::Distant => "distant",
            Regime::Remote => "remote",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown regime {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::OneToOne,
        Topology::OneToMany,
        Topology::ManyToOne,
        Topology::ManyToMany,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::OneToOne => "one-to-one",
            Topology::OneToMany => "one-to-many",
            Topology::ManyToOne => "many-to-one",
            Topology::ManyToMany => "many-to-many",
        }
    }
}

impl FromStr for Topology {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown topology {s:?}")))
    }
}

/// Relative frequencies over the four variants of an enum, in `ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mix(pub [f64; 4]);

impl Mix {
    pub const UNIFORM: Mix = Mix([0.25; 4]);

    pub fn only(index: usize) -> Mix {
        let mut w = [0.0; 4];
        w[index] = 1.0;
        Mix(w)
    }

    fn validate(&self, what: &str) -> Result<(), ConfigError> {
        if self.0.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(ConfigError::Invalid(format!("{what} mix has a negative weight")));
        }
        let total: f64 = self.0.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!("{what} mix sums to {total}, not 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items.
    pub fn apportion(&self, n: usize) -> [usize; 4] {
        let exact: Vec<f64> = self.0.iter().map(|w| w * n as f64).collect();
        let mut counts = [0usize; 4];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut rest: Vec<usize> = (0..4).collect();
        rest.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let assigned: usize = counts.iter().sum();
        for &i in rest.iter().take(n - assigned) {
            counts[i] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub image_width: f64,
    pub image_height: f64,
    /// Interaction groups, not counting the overlap-stress group.
    pub groups: usize,
    pub preset: Preset,
    pub num_classes: usize,
    pub regime_mix: Mix,
    pub topology_mix: Mix,
    /// Adds one human holding three objects inside its box, so all three
    /// interactions share an identical union box.
    pub overlap_stress: bool,
    pub max_overlap: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_width: 512.0,
            image_height: 512.0,
            groups: 3,
            preset: Preset::Vcoco,
            num_classes: 80,
            regime_mix: Mix::UNIFORM,
            topology_mix: Mix::UNIFORM,
            overlap_stress: false,
            max_overlap: 0.5,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.image_width >= 64.0 && self.image_height >= 64.0)
            || !(self.image_width.is_finite() && self.image_height.is_finite())
        {
            return Err(ConfigError::Invalid("image must be at least 64x64".into()));
        }
        if self.num_classes < 2 {
            return Err(ConfigError::Invalid(
                "need a person class and at least one object class".into(),
            ));
        }
        if !(self.max_overlap > 0.0 && self.max_overlap < 1.0) {
            return Err(ConfigError::Invalid("max_overlap must lie in (0, 1)".into()));
        }
        self.regime_mix.validate("regime")?;
        self.topology_mix.validate("topology")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_width: f64,
    pub image_height: f64,
    pub preset: Preset,
    pub num_classes: usize,
    pub instances: Vec<InstanceGroundTruth>,
    pub unions: Vec<UnionGroundTruth>,
    /// Regime each union was generated under, parallel to `unions`.
    pub regimes: Vec<Option<Regime>>,
    pub seed: Option<u64>,
}

/// A ground-truth triplet as scored by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTriplet {
    pub human_box: BBox,
    pub object_box: Option<BBox>,
    pub action: usize,
}

impl Scene {
    pub fn action_space(&self) -> Result<ActionSpace, ConfigError> {
        ActionSpace::from_preset(self.preset)
    }

    pub fn instance(&self, id: usize) -> Option<&InstanceGroundTruth> {
        self.instances.iter().find(|i| i.instance_id == id)
    }

    /// Checks cross-references and label shapes.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let space = self.action_space()?;
        let err = |m: String| Err(ConfigError::Invalid(m));
        if self.regimes.len() != self.unions.len() {
            return err("regime list does not match unions".into());
        }
        let mut ids: Vec<usize> = self.instances.iter().map(|i| i.instance_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate instance id".into());
        }
        for inst in &self.instances {
            if inst.class >= self.num_classes {
                return err(format!("instance {} class out of range", inst.instance_id));
            }
            if inst.action_labels.len() != space.num_instance_slots() {
                return err(format!("instance {} has wrong action length", inst.instance_id));
            }
        }
        for (i, u) in self.unions.iter().enumerate() {
            let (Some(h), Some(o)) = (self.instance(u.human_id), self.instance(u.object_id)) else {
                return err(format!("union {i} references a missing instance"));
            };
            if h.bbox != u.human_box || o.bbox != u.object_box {
                return err(format!("union {i} boxes disagree with its instances"));
            }
            if u.union_box != enclose(&u.human_box, &u.object_box) {
                return err(format!("union {i} box is not the enclosing box"));
            }
            if u.action_labels.len() != space.num_union() {
                return err(format!("union {i} has wrong action length"));
            }
            if u.target_class != o.class {
                return err(format!("union {i} target class differs from its object"));
            }
            if let Some((t, _)) = u
                .action_labels
                .iter()
                .enumerate()
                .find(|&(t, &on)| on && !space.requires_object(t))
            {
                return err(format!("union {i} carries no-object action {t}"));
            }
        }
        Ok(())
    }

    /// Interactions plus no-object actions of every human.
    pub fn gt_triplets(&self, space: &ActionSpace, person_class: usize) -> Vec<GtTriplet> {
        let mut out = Vec::new();
        for u in &self.unions {
            for (a, &on) in u.action_labels.iter().enumerate() {
                if on && !space.is_excluded(a) {
                    out.push(GtTriplet {
                        human_box: u.human_box,
                        object_box: Some(u.object_box),
                        action: a,
                    });
                }
            }
        }
        for inst in self.instances.iter().filter(|i| i.class == person_class) {
            for a in 0..space.num_union() {
                if !space.requires_object(a) && !space.is_excluded(a) && inst.action_labels[space.subject_slot(a)] {
                    out.push(GtTriplet {
                        human_box: inst.bbox,
                        object_box: None,
                        action: a,
                    });
                }
            }
        }
        out
    }
}

/// Incremental scene construction; instance action labels are derived from
/// the interactions added.
#[derive(Debug, Clone)]
pub struct SceneBuilder {
    space: ActionSpace,
    scene: Scene,
}

impl SceneBuilder {
    pub fn new(width: f64, height: f64, preset: Preset, num_classes: usize) -> Result<Self, ConfigError> {
        let space = ActionSpace::from_preset(preset)?;
        Ok(Self {
            space,
            scene: Scene {
                image_width: width,
                image_height: height,
                preset,
                num_classes,
                instances: Vec::new(),
                unions: Vec::new(),
                regimes: Vec::new(),
                seed: None,
            },
        })
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    fn add_instance(&mut self, bbox: BBox, class: usize) -> usize {
        let id = self.scene.instances.len();
        self.scene.instances.push(InstanceGroundTruth {
            bbox,
            class,
            action_labels: vec![false; self.space.num_instance_slots()],
            instance_id: id,
        });
        id
    }

    pub fn add_human(&mut self, bbox: BBox) -> usize {
        self.add_instance(bbox, DEFAULT_PERSON_CLASS)
    }

    pub fn add_object(&mut self, bbox: BBox, class: usize) -> usize {
        self.add_instance(bbox, class)
    }

    /// Gives a human a no-object action.
    pub fn solo_action(&mut self, human: usize, action: usize) -> Result<(), ConfigError> {
        if action >= self.space.num_union() || self.space.requires_object(action) {
            return Err(ConfigError::Invalid(format!("action {action} needs an object")));
        }
        let slot = self.space.subject_slot(action);
        self.scene.instances[human].action_labels[slot] = true;
        Ok(())
    }

    pub fn interact(
        &mut self,
        human: usize,
        object: usize,
        actions: &[usize],
        regime: Option<Regime>,
    ) -> Result<(), ConfigError> {
        let mut labels = vec![false; self.space.num_union()];
        for &a in actions {
            if !self.space.requires_object(a) {
                return Err(ConfigError::Invalid(format!("action {a} takes no object")));
            }
            labels[a] = true;
            let s = self.space.subject_slot(a);
            let o = self.space.object_slot(a).expect("object action");
            self.scene.instances[human].action_labels[s] = true;
            self.scene.instances[object].action_labels[o] = true;
        }
        let h = &self.scene.instances[human];
        let o = &self.scene.instances[object];
        let gt = UnionGroundTruth::new(h.bbox, o.bbox, labels, o.class, human, object)?;
        self.scene.unions.push(gt);
        self.scene.regimes.push(regime);
        Ok(())
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.scene.seed = Some(seed);
        self
    }

    pub fn build(self) -> Result<Scene, ConfigError> {
        self.scene.validate()?;
        Ok(self.scene)
    }
}

#[derive(Debug, Clone)]
struct GroupPlan {
    topology: Topology,
    regime: Regime,
    stress: bool,
}

#[derive(Debug, Clone)]
struct GroupLayout {
    plan: GroupPlan,
    humans: Vec<BBox>,
    objects: Vec<(BBox, usize)>,
    pairs: Vec<(usize, usize)>,
}

impl GroupLayout {
    fn unions(&self) -> impl Iterator<Item = BBox> + '_ {
        self.pairs
            .iter()
            .map(|&(h, o)| enclose(&self.humans[h], &self.objects[o].0))
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_human(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Option<BBox> {
    let w = uniform(rng, 36.0, 80.0).min(cfg.image_width * 0.3);
    let h = (w * uniform(rng, 1.4, 2.4)).min(cfg.image_height * 0.45);
    let x = uniform(rng, 0.0, cfg.image_width - w);
    let y = uniform(rng, 0.0, cfg.image_height - h);
    BBox::new(x, y, x + w, y + h).ok()
}

fn object_size(rng: &mut ChaCha8Rng, regime: Regime) -> (f64, f64) {
    match regime {
        Regime::Remote => (uniform(rng, 8.0, 28.0), uniform(rng, 8.0, 28.0)),
        Regime::Distant => (uniform(rng, 14.0, 50.0), uniform(rng, 14.0, 50.0)),
        _ => (uniform(rng, 20.0, 64.0), uniform(rng, 20.0, 64.0)),
    }
}

/// Box of the given size placed next to `anchor` according to a symmetric
/// regime (adjacent, distant or remote).
fn place_near(rng: &mut ChaCha8Rng, anchor: &BBox, w: f64, h: f64, regime: Regime) -> Option<BBox> {
    let (ax, ay) = anchor.center();
    match regime {
        Regime::Adjacent => {
            let (px, py, nx, ny) = match rng.random_range(0..4) {
                0 => (uniform(rng, anchor.x_min(), anchor.x_max()), anchor.y_min(), 0.0, -1.0),
                1 => (uniform(rng, anchor.x_min(), anchor.x_max()), anchor.y_max(), 0.0, 1.0),
                2 => (anchor.x_min(), uniform(rng, anchor.y_min(), anchor.y_max()), -1.0, 0.0),
                _ => (anchor.x_max(), uniform(rng, anchor.y_min(), anchor.y_max()), 1.0, 0.0),
            };
            let push = uniform(rng, -0.35, 0.35);
            BBox::from_center(px + nx * push * w, py + ny * push * h, w, h).ok()
        }
        Regime::Distant | Regime::Remote => {
            let reach = anchor.diagonal().max(w.hypot(h));
            let r = if regime == Regime::Distant {
                uniform(rng, 0.45, 1.0) * reach
            } else {
                uniform(rng, 1.05, 2.0) * reach
            };
            let theta = uniform(rng, 0.0, std::f64::consts::TAU);
            BBox::from_center(ax + r * theta.cos(), ay + r * theta.sin(), w, h).ok()
        }
        Regime::Included => None,
    }
}

fn place_inside(rng: &mut ChaCha8Rng, outer: &BBox) -> Option<BBox> {
    let w = outer.width() * uniform(rng, 0.2, 0.6);
    let h = outer.height() * uniform(rng, 0.12, 0.35);
    let x = uniform(rng, outer.x_min(), outer.x_max() - w);
    let y = uniform(rng, outer.y_min(), outer.y_max() - h);
    BBox::new(x, y, x + w, y + h).ok()
}

fn place_around(rng: &mut ChaCha8Rng, inner: &BBox) -> Option<BBox> {
    BBox::new(
        inner.x_min() - uniform(rng, 4.0, 90.0),
        inner.y_min() - uniform(rng, 4.0, 120.0),
        inner.x_max() + uniform(rng, 4.0, 90.0),
        inner.y_max() + uniform(rng, 4.0, 120.0),
    )
    .ok()
}

fn propose_group(rng: &mut ChaCha8Rng, cfg: &SceneConfig, plan: &GroupPlan) -> Option<GroupLayout> {
    let (n_h, n_o) = if plan.stress {
        (1, 3)
    } else {
        match plan.topology {
            Topology::OneToOne => (1, 1),
            Topology::OneToMany => (1, rng.random_range(2..=3)),
            Topology::ManyToOne => (rng.random_range(2..=3), 1),
            Topology::ManyToMany => (2, 2),
        }
    };
    let mut humans = Vec::with_capacity(n_h);
    let mut objects = Vec::with_capacity(n_o);

    if plan.regime == Regime::Included {
        if n_h == 1 {
            let h = random_human(rng, cfg)?;
            for _ in 0..n_o {
                objects.push(place_inside(rng, &h)?);
            }
            humans.push(h);
        } else {
            // objects first, then humans that each enclose all of them
            let seed_box = random_human(rng, cfg)?;
            let core = place_inside(rng, &seed_box)?;
            objects.push(core);
            for _ in 1..n_o {
                let (w, h) = (
                    core.width() * uniform(rng, 0.6, 1.4),
                    core.height() * uniform(rng, 0.6, 1.4),
                );
                objects.push(place_near(rng, &core, w, h, Regime::Distant)?);
            }
            let cluster = objects.iter().skip(1).fold(core, |acc, o| enclose(&acc, o));
            for _ in 0..n_h {
                humans.push(place_around(rng, &cluster)?);
            }
        }
    } else {
        humans.push(random_human(rng, cfg)?);
        match plan.topology {
            Topology::OneToOne | Topology::OneToMany => {
                for _ in 0..n_o {
                    let (w, h) = object_size(rng, plan.regime);
                    objects.push(place_near(rng, &humans[0], w, h, plan.regime)?);
                }
            }
            Topology::ManyToOne => {
                let (w, h) = object_size(rng, plan.regime);
                let o = place_near(rng, &humans[0], w, h, plan.regime)?;
                objects.push(o);
                for _ in 1..n_h {
                    let proto = random_human(rng, cfg)?;
                    humans.push(place_near(rng, &o, proto.width(), proto.height(), plan.regime)?);
                }
            }
            Topology::ManyToMany => {
                let (w, h) = object_size(rng, plan.regime);
                let o0 = place_near(rng, &humans[0], w, h, plan.regime)?;
                let proto = random_human(rng, cfg)?;
                let h1 = place_near(rng, &o0, proto.width(), proto.height(), plan.regime)?;
                let (w, h) = object_size(rng, plan.regime);
                let o1 = place_near(rng, &h1, w, h, plan.regime)?;
                humans.push(h1);
                objects.push(o0);
                objects.push(o1);
            }
        }
    }

    let mut classes: Vec<usize> = (1..cfg.num_classes).collect();
    classes.shuffle(rng);
    let objects: Vec<(BBox, usize)> = objects
        .into_iter()
        .enumerate()
        .map(|(i, b)| (b, classes[i % classes.len()]))
        .collect();
    let pairs = (0..n_h).flat_map(|h| (0..n_o).map(move |o| (h, o))).collect();
    Some(GroupLayout {
        plan: plan.clone(),
        humans,
        objects,
        pairs,
    })
}

fn separated(a: &BBox, b: &BBox, max_overlap: f64) -> bool {
    iou(a, b) <= max_overlap
}

fn accept_group(cfg: &SceneConfig, g: &GroupLayout, placed: &[GroupLayout]) -> bool {
    let inside = |b: &BBox| {
        b.x_min() >= 0.0 && b.y_min() >= 0.0 && b.x_max() <= cfg.image_width && b.y_max() <= cfg.image_height
    };
    if !g.humans.iter().all(inside) || !g.objects.iter().all(|(b, _)| inside(b)) {
        return false;
    }
    if !g
        .pairs
        .iter()
        .all(|&(h, o)| g.plan.regime.holds(&g.humans[h], &g.objects[o].0))
    {
        return false;
    }
    let t = cfg.max_overlap;
    let prior_humans: Vec<&BBox> = placed.iter().flat_map(|p| p.humans.iter()).collect();
    for (i, h) in g.humans.iter().enumerate() {
        if !g.humans[..i]
            .iter()
            .chain(prior_humans.iter().copied())
            .all(|o| separated(h, o, t))
        {
            return false;
        }
    }
    let prior_objects: Vec<&(BBox, usize)> = placed.iter().flat_map(|p| p.objects.iter()).collect();
    for (i, (b, c)) in g.objects.iter().enumerate() {
        let clash = g.objects[..i]
            .iter()
            .chain(prior_objects.iter().copied())
            .any(|(ob, oc)| oc == c && !separated(b, ob, t));
        if clash {
            return false;
        }
    }
    let new_unions: Vec<BBox> = g.unions().collect();
    let prior_unions: Vec<BBox> = placed.iter().flat_map(|p| p.unions()).collect();
    for (i, u) in new_unions.iter().enumerate() {
        let ok = new_unions[..i]
            .iter()
            .chain(prior_unions.iter())
            .all(|o| o == u || separated(u, o, t));
        if !ok {
            return false;
        }
    }
    true
}

fn plan_groups(rng: &mut ChaCha8Rng, cfg: &SceneConfig) -> Vec<GroupPlan> {
    let expand = |mix: &Mix| -> Vec<usize> {
        mix.apportion(cfg.groups)
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(i, n))
            .collect()
    };
    let mut topologies = expand(&cfg.topology_mix);
    let mut regimes = expand(&cfg.regime_mix);
    topologies.shuffle(rng);
    regimes.shuffle(rng);
    let mut plans: Vec<GroupPlan> = topologies
        .into_iter()
        .zip(regimes)
        .map(|(t, r)| GroupPlan {
            topology: Topology::ALL[t],
            regime: Regime::ALL[r],
            stress: false,
        })
        .collect();
    if cfg.overlap_stress {
        plans.push(GroupPlan {
            topology: Topology::OneToMany,
            regime: Regime::Included,
            stress: true,
        });
    }
    plans
}

fn assign_actions(
    rng: &mut ChaCha8Rng,
    space: &ActionSpace,
    builder: &mut SceneBuilder,
    layout: &GroupLayout,
    human_ids: &[usize],
    object_ids: &[usize],
    used_verbs: &mut BTreeSet<usize>,
) -> Result<(), ConfigError> {
    // Object actions grouped by subject slot: two roles of one verb share
    // the human's score, so they count as one verb here.
    let mut by_verb: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in (0..space.num_union()).filter(|&a| space.requires_object(a) && !space.is_excluded(a)) {
        by_verb.entry(space.subject_slot(a)).or_default().push(a);
    }
    if by_verb.len() < layout.pairs.len() {
        return Err(ConfigError::Infeasible(format!(
            "{} object verbs cannot label {} distinct pairs",
            by_verb.len(),
            layout.pairs.len()
        )));
    }
    // A verb labels one pair per scene while verbs last. A human doing a
    // verb with one object and another object receiving that verb would
    // otherwise form a spurious pair as strong as a true one wherever their
    // boxes happen to line up. Once the scene has used every verb, reuse
    // starts over but stays unique within the group.
    let mut fresh: Vec<usize> = by_verb.keys().copied().filter(|v| !used_verbs.contains(v)).collect();
    if fresh.len() < layout.pairs.len() {
        used_verbs.clear();
        fresh = by_verb.keys().copied().collect();
    }
    fresh.shuffle(rng);
    let mut extra = fresh.len() - layout.pairs.len();
    let mut pick = |rng: &mut ChaCha8Rng, verb: usize| {
        used_verbs.insert(verb);
        let roles = &by_verb[&verb];
        roles[rng.random_range(0..roles.len())]
    };
    for &(h, o) in &layout.pairs {
        let verb = fresh.pop().expect("pool sized above");
        let mut acts = vec![pick(rng, verb)];
        if !layout.plan.stress && extra > 0 && rng.random_bool(0.5) {
            let verb = fresh.pop().expect("spare verb");
            acts.push(pick(rng, verb));
            extra -= 1;
        }
        builder.interact(human_ids[h], object_ids[o], &acts, Some(layout.plan.regime))?;
    }
    let solo: Vec<usize> = (0..space.num_union())
        .filter(|&a| !space.requires_object(a) && !space.is_excluded(a))
        .collect();
    for &h in human_ids {
        if !solo.is_empty() && rng.random_bool(0.5) {
            let a = solo[rng.random_range(0..solo.len())];
            builder.solo_action(h, a)?;
        }
    }
    Ok(())
}

/// Generates a scene from a seeded configuration.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, ConfigError> {
    cfg.validate()?;
    let space = ActionSpace::from_preset(cfg.preset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plans = plan_groups(&mut rng, cfg);

    'scene: for _ in 0..SCENE_ATTEMPTS {
        let mut placed: Vec<GroupLayout> = Vec::with_capacity(plans.len());
        for plan in &plans {
            let mut found = None;
            for _ in 0..GROUP_ATTEMPTS {
                if let Some(g) = propose_group(&mut rng, cfg, plan) {
                    if accept_group(cfg, &g, &placed) {
                        found = Some(g);
                        break;
                    }
                }
            }
            match found {
                Some(g) => placed.push(g),
                None => continue 'scene,
            }
        }

        let mut builder = SceneBuilder::new(cfg.image_width, cfg.image_height, cfg.preset, cfg.num_classes)?;
        let mut used_verbs = BTreeSet::new();
        for layout in &placed {
            let human_ids: Vec<usize> = layout.humans.iter().map(|&b| builder.add_human(b)).collect();
            let object_ids: Vec<usize> = layout.objects.iter().map(|&(b, c)| builder.add_object(b, c)).collect();
            assign_actions(
                &mut rng,
                &space,
                &mut builder,
                layout,
                &human_ids,
                &object_ids,
                &mut used_verbs,
            )?;
        }
        return builder.seed(cfg.seed).build();
    }
    Err(ConfigError::Infeasible(format!(
        "could not place {} groups in a {}x{} image",
        plans.len(),
        cfg.image_width,
        cfg.image_height
    )))
}

/// Every union's recorded regime holds for its boxes.
pub fn verify_regimes(scene: &Scene) -> bool {
    scene
        .unions
        .iter()
        .zip(&scene.regimes)
        .all(|(u, r)| r.is_none_or(|r| r.holds(&u.human_box, &u.object_box)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Std-dev of corner jitter, as a fraction of box width/height.
    pub box_jitter: f64,
    /// Std-dev of logit-space score noise.
    pub score_sigma: f64,
    /// Logit magnitude of a clean label; infinity gives exact 0/1 scores.
    pub confidence: f64,
    pub distractor_instances: usize,
    pub distractor_unions: usize,
    /// Upper bound on distractor scores.
    pub distractor_score: f64,
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            seed: 0,
            box_jitter: 0.0,
            score_sigma: 0.0,
            confidence: f64::INFINITY,
            distractor_instances: 0,
            distractor_unions: 0,
            distractor_score: 0.3,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detections {
    pub instances: Vec<InstanceDetection>,
    pub unions: Vec<UnionDetection>,
}

struct ScoreNoise {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    cfg: NoiseConfig,
}

impl ScoreNoise {
    fn gauss(&mut self) -> f64 {
        self.normal.sample(&mut self.rng)
    }

    fn score(&mut self, label: bool) -> f64 {
        let base = if label {
            self.cfg.confidence
        } else {
            -self.cfg.confidence
        };
        let z = if self.cfg.score_sigma > 0.0 {
            self.cfg.score_sigma * self.gauss()
        } else {
            0.0
        };
        crate::losses::sigmoid(base + z)
    }

    fn jitter(&mut self, b: &BBox) -> BBox {
        if self.cfg.box_jitter <= 0.0 {
            return *b;
        }
        let (w, h) = (b.width(), b.height());
        let s = self.cfg.box_jitter;
        let c = [
            b.x_min() + s * w * self.gauss(),
            b.y_min() + s * h * self.gauss(),
            b.x_max() + s * w * self.gauss(),
            b.y_max() + s * h * self.gauss(),
        ];
        BBox::try_from(c).unwrap_or(*b)
    }
}

/// Turns a scene's ground truth into detections. Unions with identical boxes
/// merge into one multi-label detection. Zero noise reproduces the ground
/// truth exactly, with scores of exactly 0 or 1.
pub fn perturb_to_detections(scene: &Scene, noise: &NoiseConfig) -> Result<Detections, ConfigError> {
    if !(noise.box_jitter >= 0.0 && noise.score_sigma >= 0.0) {
        return Err(ConfigError::Invalid("noise magnitudes must be >= 0".into()));
    }
    let space = scene.action_space()?;
    let mut n = ScoreNoise {
        rng: ChaCha8Rng::seed_from_u64(noise.seed),
        normal: Normal::new(0.0, 1.0).expect("unit normal"),
        cfg: *noise,
    };

    let mut instances = Vec::with_capacity(scene.instances.len() + noise.distractor_instances);
    for inst in &scene.instances {
        let bbox = n.jitter(&inst.bbox);
        let class_scores = (0..scene.num_classes).map(|k| n.score(k == inst.class)).collect();
        let action_scores = inst.action_labels.iter().map(|&y| n.score(y)).collect();
        instances.push(InstanceDetection {
            detection_id: inst.instance_id,
            bbox,
            class_scores,
            action_scores,
        });
    }

    // merge exact duplicates, keeping first-seen order
    let mut merged: Vec<(BBox, Vec<bool>, Vec<bool>)> = Vec::new();
    let mut by_box: BTreeMap<[u64; 4], usize> = BTreeMap::new();
    for u in &scene.unions {
        let key = u.union_box.corners().map(f64::to_bits);
        let idx = *by_box.entry(key).or_insert_with(|| {
            merged.push((
                u.union_box,
                vec![false; space.num_union()],
                vec![false; scene.num_classes],
            ));
            merged.len() - 1
        });
        for (m, &y) in merged[idx].1.iter_mut().zip(&u.action_labels) {
            *m |= y;
        }
        merged[idx].2[u.target_class] = true;
    }
    let mut unions = Vec::with_capacity(merged.len() + noise.distractor_unions);
    for (i, (bbox, actions, classes)) in merged.into_iter().enumerate() {
        let bbox = n.jitter(&bbox);
        unions.push(UnionDetection {
            detection_id: i,
            bbox,
            action_scores: actions.iter().map(|&y| n.score(y)).collect(),
            target_class_scores: classes.iter().map(|&y| n.score(y)).collect(),
        });
    }

    let next_id = scene.instances.iter().map(|i| i.instance_id + 1).max().unwrap_or(0);
    let cap = noise.distractor_score;
    for k in 0..noise.distractor_instances {
        let bbox = random_box(&mut n.rng, scene);
        let class = n.rng.random_range(0..scene.num_classes);
        let class_scores = (0..scene.num_classes)
            .map(|c| if c == class { cap * n.rng.random::<f64>() } else { 0.0 })
            .collect();
        let action_scores = (0..space.num_instance_slots())
            .map(|_| cap * n.rng.random::<f64>())
            .collect();
        instances.push(InstanceDetection {
            detection_id: next_id + k,
            bbox,
            class_scores,
            action_scores,
        });
    }
    for _ in 0..noise.distractor_unions {
        let bbox = random_box(&mut n.rng, scene);
        let id = unions.len();
        unions.push(UnionDetection {
            detection_id: id,
            bbox,
            action_scores: (0..space.num_union()).map(|_| cap * n.rng.random::<f64>()).collect(),
            target_class_scores: (0..scene.num_classes).map(|_| cap * n.rng.random::<f64>()).collect(),
        });
    }
    Ok(Detections { instances, unions })
}

fn random_box(rng: &mut ChaCha8Rng, scene: &Scene) -> BBox {
    let w = uniform(rng, 10.0, scene.image_width * 0.4);
    let h = uniform(rng, 10.0, scene.image_height * 0.4);
    let x = uniform(rng, 0.0, scene.image_width - w);
    let y = uniform(rng, 0.0, scene.image_height - h);
    BBox::new(x, y, x + w, y + h).expect("positive size")
}

/// Random detections for timing and property tests: `humans` person
/// detections, `objects` non-person detections and `unions` union
/// detections with uniform scores and boxes in a `size` x `size` image.
pub fn random_detections(
    seed: u64,
    humans: usize,
    objects: usize,
    unions: usize,
    space: &ActionSpace,
    num_classes: usize,
    size: f64,
) -> Detections {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes = |rng: &mut ChaCha8Rng| {
        let w = uniform(rng, 8.0, size * 0.4);
        let h = uniform(rng, 8.0, size * 0.4);
        let x = uniform(rng, 0.0, size - w);
        let y = uniform(rng, 0.0, size - h);
        BBox::new(x, y, x + w, y + h).expect("positive size")
    };
    let mut instances = Vec::with_capacity(humans + objects);
    for i in 0..humans + objects {
        let bbox = boxes(&mut rng);
        let class = if i < humans {
            DEFAULT_PERSON_CLASS
        } else {
            rng.random_range(1..num_classes)
        };
        let top = uniform(&mut rng, 0.3, 1.0);
        let class_scores = (0..num_classes)
            .map(|k| {
                if k == class {
                    top
                } else {
                    0.25 * top * rng.random::<f64>()
                }
            })
            .collect();
        let action_scores = (0..space.num_instance_slots()).map(|_| rng.random::<f64>()).collect();
        instances.push(InstanceDetection {
            detection_id: i,
            bbox,
            class_scores,
            action_scores,
        });
    }
    let unions = (0..unions)
        .map(|i| UnionDetection {
            detection_id: i,
            bbox: boxes(&mut rng),
            action_scores: (0..space.num_union()).map(|_| rng.random::<f64>()).collect(),
            target_class_scores: (0..num_classes).map(|_| rng.random::<f64>()).collect(),
        })
        .collect();
    Detections { instances, unions }
}

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(x0, y0, x1, y1).expect("literal box")
}

/// Fixed five-interaction scene (compact actions, 4 classes, 256x256)
/// covering all four regimes and a one-to-many human.
pub fn smoke_scene() -> Scene {
    let mut b = SceneBuilder::new(256.0, 256.0, Preset::Compact, 4).expect("compact preset");
    let h0 = b.add_human(bx(20.0, 20.0, 60.0, 110.0));
    let o0 = b.add_object(bx(28.0, 60.0, 52.0, 84.0), 1);
    let h1 = b.add_human(bx(120.0, 16.0, 160.0, 100.0));
    let o1 = b.add_object(bx(150.0, 40.0, 196.0, 72.0), 2);
    let h2 = b.add_human(bx(16.0, 150.0, 56.0, 236.0));
    let o2 = b.add_object(bx(86.0, 172.0, 118.0, 204.0), 3);
    let h3 = b.add_human(bx(140.0, 130.0, 172.0, 196.0));
    let o3 = b.add_object(bx(222.0, 222.0, 240.0, 240.0), 1);
    let o4 = b.add_object(bx(186.0, 124.0, 216.0, 150.0), 2);
    let steps: [(usize, usize, &[usize], Regime); 5] = [
        (h0, o0, &[0], Regime::Included),
        (h1, o1, &[1, 2], Regime::Adjacent),
        (h2, o2, &[3], Regime::Distant),
        (h3, o3, &[4], Regime::Remote),
        (h3, o4, &[0], Regime::Distant),
    ];
    for (h, o, acts, r) in steps {
        b.interact(h, o, acts, Some(r)).expect("smoke interaction");
    }
    b.solo_action(h2, 5).expect("idle");
    b.build().expect("smoke scene is valid")
}

/// A human, a small remote object it interacts with, and a bystander.
/// The union detections include a human-biased box with the higher plain
/// IoU that cuts the object off, and a looser box that covers both.
pub fn remote_small_object_case() -> (Scene, Detections) {
    let mut b = SceneBuilder::new(512.0, 512.0, Preset::Compact, 3).expect("compact preset");
    let human = b.add_human(bx(100.0, 100.0, 200.0, 300.0));
    let object = b.add_object(bx(400.0, 180.0, 420.0, 200.0), 1);
    let bystander = b.add_human(bx(300.0, 320.0, 360.0, 460.0));
    b.interact(human, object, &[0], Some(Regime::Remote))
        .expect("interaction");
    let space = b.space().clone();
    let scene = b.build().expect("valid scene");

    let slots = space.num_instance_slots();
    let object_slot = space.object_slot(0).expect("object action");
    let person = |id: usize, bbox: BBox, act: f64| {
        let mut action_scores = vec![0.0; slots];
        action_scores[space.subject_slot(0)] = act;
        InstanceDetection {
            detection_id: id,
            bbox,
            class_scores: vec![1.0, 0.0, 0.0],
            action_scores,
        }
    };
    let mut object_actions = vec![0.0; slots];
    object_actions[object_slot] = 0.5;
    let instances = vec![
        person(human, scene.instances[human].bbox, 0.6),
        InstanceDetection {
            detection_id: object,
            bbox: scene.instances[object].bbox,
            class_scores: vec![0.0, 0.9, 0.0],
            action_scores: object_actions,
        },
        person(bystander, scene.instances[bystander].bbox, 0.7),
    ];
    let union_scores = |s: f64| {
        let mut v = vec![0.0; space.num_union()];
        v[0] = s;
        v
    };
    let unions = vec![
        UnionDetection {
            detection_id: 0,
            bbox: bx(100.0, 100.0, 360.0, 300.0),
            action_scores: union_scores(0.1),
            target_class_scores: vec![0.0, 0.2, 0.0],
        },
        UnionDetection {
            detection_id: 1,
            bbox: bx(60.0, 60.0, 440.0, 340.0),
            action_scores: union_scores(0.9),
            target_class_scores: vec![0.0, 0.8, 0.0],
        },
    ];
    (scene, Detections { instances, unions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig {
            seed: 0,
            ..Default::default()
        };
        assert_eq!(generate_scene(&cfg).unwrap(), generate_scene(&cfg).unwrap());
        let other = SceneConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate_scene(&cfg).unwrap(), generate_scene(&other).unwrap());
    }

    #[test]
    fn remote_regime_pairs_are_far_apart() {
        for seed in 0..20 {
            let cfg = SceneConfig {
                seed,
                regime_mix: Mix::only(3),
                ..Default::default()
            };
            let scene = generate_scene(&cfg).unwrap();
            assert!(!scene.unions.is_empty());
            for u in &scene.unions {
                assert_eq!(iou(&u.human_box, &u.object_box), 0.0);
                let (hx, hy) = u.human_box.center();
                let (ox, oy) = u.object_box.center();
                let d = (hx - ox).hypot(hy - oy);
                assert!(d > u.human_box.diagonal().max(u.object_box.diagonal()));
            }
        }
    }

    #[test]
    fn every_regime_and_topology_is_generated() {
        for (ri, r) in Regime::ALL.iter().enumerate() {
            for (ti, _) in Topology::ALL.iter().enumerate() {
                let cfg = SceneConfig {
                    seed: (ri * 4 + ti) as u64,
                    groups: 2,
                    regime_mix: Mix::only(ri),
                    topology_mix: Mix::only(ti),
                    ..Default::default()
                };
                let scene = generate_scene(&cfg).unwrap_or_else(|e| panic!("{r} {ti}: {e}"));
                assert!(verify_regimes(&scene));
                assert!(scene.regimes.iter().all(|x| *x == Some(*r)));
            }
        }
    }

    #[test]
    fn overlap_stress_shares_one_union_box() {
        let cfg = SceneConfig {
            seed: 3,
            groups: 0,
            overlap_stress: true,
            ..Default::default()
        };
        let scene = generate_scene(&cfg).unwrap();
        assert_eq!(scene.unions.len(), 3);
        assert!(scene.unions.iter().all(|u| u.union_box == scene.unions[0].union_box));
        let ids: Vec<_> = scene.unions.iter().map(|u| u.object_id).collect();
        assert_eq!(ids.len(), 3);
        assert!(ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2]);
    }

    #[test]
    fn mix_must_sum_to_one() {
        let cfg = SceneConfig {
            regime_mix: Mix([0.5, 0.5, 0.5, 0.0]),
            ..Default::default()
        };
        assert!(generate_scene(&cfg).is_err());
    }

    #[test]
    fn tiny_image_with_many_groups_is_infeasible() {
        let cfg = SceneConfig {
            image_width: 64.0,
            image_height: 64.0,
            groups: 12,
            regime_mix: Mix::only(3),
            ..Default::default()
        };
        assert!(matches!(generate_scene(&cfg), Err(ConfigError::Infeasible(_))));
    }

    #[test]
    fn apportion_realizes_mix() {
        assert_eq!(Mix::UNIFORM.apportion(4), [1, 1, 1, 1]);
        assert_eq!(Mix::UNIFORM.apportion(6), [2, 2, 1, 1]);
        assert_eq!(Mix([0.5, 0.0, 0.5, 0.0]).apportion(3), [2, 0, 1, 0]);
        assert_eq!(Mix::only(2).apportion(5), [0, 0, 5, 0]);
    }

    #[test]
    fn zero_noise_reproduces_ground_truth() {
        let scene = generate_scene(&SceneConfig::default()).unwrap();
        let det = perturb_to_detections(&scene, &NoiseConfig::zero()).unwrap();
        assert_eq!(det.instances.len(), scene.instances.len());
        for (d, g) in det.instances.iter().zip(&scene.instances) {
            assert_eq!(d.bbox, g.bbox);
            assert_eq!(d.class_scores[g.class], 1.0);
            assert_eq!(d.class_scores.iter().sum::<f64>(), 1.0);
            for (s, &y) in d.action_scores.iter().zip(&g.action_labels) {
                assert_eq!(*s, if y { 1.0 } else { 0.0 });
            }
        }
        for u in &scene.unions {
            assert!(det.unions.iter().any(|d| d.bbox == u.union_box));
        }
    }

    #[test]
    fn seeded_noise_is_deterministic_and_in_range() {
        let scene = generate_scene(&SceneConfig::default()).unwrap();
        let noise = NoiseConfig {
            seed: 9,
            box_jitter: 0.05,
            score_sigma: 1.0,
            confidence: 3.0,
            distractor_instances: 4,
            distractor_unions: 3,
            distractor_score: 0.3,
        };
        let a = perturb_to_detections(&scene, &noise).unwrap();
        assert_eq!(a, perturb_to_detections(&scene, &noise).unwrap());
        for d in &a.instances {
            assert!(d
                .class_scores
                .iter()
                .chain(&d.action_scores)
                .all(|s| (0.0..=1.0).contains(s)));
        }
        assert_eq!(a.instances.len(), scene.instances.len() + 4);
    }

    #[test]
    fn smoke_scene_regimes_hold() {
        let s = smoke_scene();
        assert_eq!(s.unions.len(), 5);
        assert!(verify_regimes(&s));
    }

    #[test]
    fn gt_triplets_cover_unions_and_solo_actions() {
        let s = smoke_scene();
        let space = s.action_space().unwrap();
        let t = s.gt_triplets(&space, 0);
        // six union labels and one idle
        assert_eq!(t.len(), 7);
        assert_eq!(t.iter().filter(|t| t.object_box.is_none()).count(), 1);
    }
}
