//! Action vocabularies shared by the two branches.
//!
//! The union branch predicts `T` union actions. The instance branch treats
//! the subject side and the object side of an action as separate labels and
//! predicts `T_s + T_o` slots: subject slots first, object slots after.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Where a union action reads its instance-branch scores from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMapping {
    pub name: String,
    pub subject: usize,
    /// `None` for actions without a target object.
    pub object: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    preset: Preset,
    actions: Vec<ActionMapping>,
    num_subject: usize,
    num_object: usize,
    excluded: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Vcoco,
    Hico,
    Compact,
    Custom,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Vcoco => "vcoco",
            Preset::Hico => "hico",
            Preset::Compact => "compact",
            Preset::Custom => "custom",
        })
    }
}

impl FromStr for Preset {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "vcoco" => Ok(Preset::Vcoco),
            "hico" => Ok(Preset::Hico),
            "compact" => Ok(Preset::Compact),
            other => Err(ConfigError::Invalid(format!("unknown action space preset {other:?}"))),
        }
    }
}

// (verb, roles) in V-COCO annotation order. Verbs without roles take no
// target object.
const VCOCO_VERBS: [(&str, &[&str]); 26] = [
    ("hold", &["obj"]),
    ("stand", &[]),
    ("sit", &["instr"]),
    ("ride", &["instr"]),
    ("walk", &[]),
    ("look", &["obj"]),
    ("hit", &["instr", "obj"]),
    ("eat", &["obj", "instr"]),
    ("jump", &["instr"]),
    ("lay", &["instr"]),
    ("talk_on_phone", &["instr"]),
    ("carry", &["obj"]),
    ("throw", &["obj"]),
    ("catch", &["obj"]),
    ("cut", &["instr", "obj"]),
    ("run", &[]),
    ("work_on_computer", &["instr"]),
    ("ski", &["instr"]),
    ("surf", &["instr"]),
    ("skateboard", &["instr"]),
    ("smile", &[]),
    ("drink", &["instr"]),
    ("kick", &["obj"]),
    ("point", &["instr"]),
    ("read", &["obj"]),
    ("snowboard", &["instr"]),
];

impl ActionSpace {
    pub fn new(actions: Vec<ActionMapping>, num_subject: usize, num_object: usize) -> Result<Self, ConfigError> {
        let space = Self {
            preset: Preset::Custom,
            excluded: vec![false; actions.len()],
            actions,
            num_subject,
            num_object,
        };
        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.actions.is_empty() {
            return Err(ConfigError::Invalid("action space has no actions".into()));
        }
        for a in &self.actions {
            if a.subject >= self.num_subject || a.object.is_some_and(|o| o >= self.num_object) {
                return Err(ConfigError::Invalid(format!(
                    "action {:?} maps outside {} subject / {} object slots",
                    a.name, self.num_subject, self.num_object
                )));
            }
        }
        Ok(())
    }

    /// V-COCO: 26 verbs, 29 union actions (three verbs carry two roles),
    /// 26 subject slots and 25 object slots.
    pub fn vcoco() -> Self {
        let mut actions = Vec::new();
        let mut next_object = 0;
        for (subject, (verb, roles)) in VCOCO_VERBS.iter().enumerate() {
            if roles.is_empty() {
                actions.push(ActionMapping {
                    name: (*verb).to_string(),
                    subject,
                    object: None,
                });
            }
            for role in roles.iter() {
                actions.push(ActionMapping {
                    name: format!("{verb}_{role}"),
                    subject,
                    object: Some(next_object),
                });
                next_object += 1;
            }
        }
        Self {
            preset: Preset::Vcoco,
            excluded: vec![false; actions.len()],
            num_subject: VCOCO_VERBS.len(),
            num_object: next_object,
            actions,
        }
    }

    /// HICO-DET: 117 verbs, each with a subject and an object slot.
    pub fn hico() -> Self {
        let actions: Vec<_> = (0..117)
            .map(|i| ActionMapping {
                name: format!("verb_{i:03}"),
                subject: i,
                object: Some(i),
            })
            .collect();
        Self {
            preset: Preset::Hico,
            excluded: vec![false; actions.len()],
            actions,
            num_subject: 117,
            num_object: 117,
        }
    }

    /// Six actions, the last without a target object. Small enough for
    /// exhaustive tests and fast smoke training.
    pub fn compact() -> Self {
        let mut actions: Vec<_> = (0..5)
            .map(|i| ActionMapping {
                name: format!("act{i}"),
                subject: i,
                object: Some(i),
            })
            .collect();
        actions.push(ActionMapping {
            name: "idle".into(),
            subject: 5,
            object: None,
        });
        Self {
            preset: Preset::Compact,
            excluded: vec![false; actions.len()],
            actions,
            num_subject: 6,
            num_object: 5,
        }
    }

    pub fn from_preset(preset: Preset) -> Result<Self, ConfigError> {
        match preset {
            Preset::Vcoco => Ok(Self::vcoco()),
            Preset::Hico => Ok(Self::hico()),
            Preset::Compact => Ok(Self::compact()),
            Preset::Custom => Err(ConfigError::Invalid(
                "custom action spaces have no preset constructor".into(),
            )),
        }
    }

    pub fn preset(&self) -> Preset {
        self.preset
    }

    /// Number of union actions `T`.
    pub fn num_union(&self) -> usize {
        self.actions.len()
    }

    pub fn num_subject(&self) -> usize {
        self.num_subject
    }

    pub fn num_object(&self) -> usize {
        self.num_object
    }

    /// Instance-branch action slots `T_s + T_o`.
    pub fn num_instance_slots(&self) -> usize {
        self.num_subject + self.num_object
    }

    pub fn actions(&self) -> &[ActionMapping] {
        &self.actions
    }

    pub fn action(&self, index: usize) -> Option<&ActionMapping> {
        self.actions.get(index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn requires_object(&self, index: usize) -> bool {
        self.actions.get(index).is_some_and(|a| a.object.is_some())
    }

    /// Instance slot holding the subject score of a union action.
    pub fn subject_slot(&self, index: usize) -> usize {
        self.actions[index].subject
    }

    /// Instance slot holding the object score of a union action.
    pub fn object_slot(&self, index: usize) -> Option<usize> {
        self.actions[index].object.map(|o| self.num_subject + o)
    }

    pub fn is_excluded(&self, index: usize) -> bool {
        self.excluded.get(index).copied().unwrap_or(false)
    }

    /// Marks actions that scoring should skip (e.g. V-COCO's `point`).
    pub fn with_excluded(mut self, names: &[&str]) -> Result<Self, ConfigError> {
        for name in names {
            let i = self
                .index_of(name)
                .ok_or_else(|| ConfigError::Invalid(format!("no action named {name:?}")))?;
            self.excluded[i] = true;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vcoco_sizes() {
        let s = ActionSpace::vcoco();
        assert_eq!(s.num_union(), 29);
        assert_eq!(s.num_subject(), 26);
        assert_eq!(s.num_object(), 25);
        let no_object: Vec<_> = s
            .actions()
            .iter()
            .filter(|a| a.object.is_none())
            .map(|a| a.name.as_str())
            .collect();
        assert_eq!(no_object, ["stand", "walk", "run", "smile"]);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn hico_sizes() {
        let s = ActionSpace::hico();
        assert_eq!(s.num_union(), 117);
        assert_eq!(s.num_instance_slots(), 234);
    }

    #[test]
    fn slots_and_exclusion() {
        let s = ActionSpace::vcoco().with_excluded(&["point_instr"]).unwrap();
        let eat_instr = s.index_of("eat_instr").unwrap();
        assert_eq!(s.subject_slot(eat_instr), 7);
        assert_eq!(s.object_slot(eat_instr), Some(26 + 7));
        assert!(s.is_excluded(s.index_of("point_instr").unwrap()));
        assert!(!s.requires_object(s.index_of("smile").unwrap()));
        assert!(ActionSpace::vcoco().with_excluded(&["fly"]).is_err());
    }

    #[test]
    fn custom_validation() {
        let bad = vec![ActionMapping {
            name: "x".into(),
            subject: 2,
            object: None,
        }];
        assert!(ActionSpace::new(bad, 2, 0).is_err());
        assert!(ActionSpace::new(vec![], 1, 1).is_err());
    }
}
