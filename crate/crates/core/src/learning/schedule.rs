//! Mixed-objective epoch schedules: datasets tagged with an objective,
//! visited in order within each cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectiveKind {
    Contrastive,
    Multitask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub dataset: String,
    pub objective: ObjectiveKind,
    pub epochs: u32,
}

impl ScheduleEntry {
    pub fn new(dataset: impl Into<String>, objective: ObjectiveKind, epochs: u32) -> Self {
        Self {
            dataset: dataset.into(),
            objective,
            epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedObjectiveSchedule {
    pub entries: Vec<ScheduleEntry>,
    pub cycles: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSlot {
    pub cycle: u32,
    pub dataset: String,
    pub objective: ObjectiveKind,
}

/// Ratio of multitask epochs to contrastive epochs per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochRatio {
    Finite {
        multitask: u32,
        contrastive: u32,
    },
    /// Multitask data only.
    Infinite,
}

pub const CONTRASTIVE_TAG: &str = "DPR";
pub const MULTITASK_TAG: &str = "FEVER";

impl MixedObjectiveSchedule {
    /// Contrastive entry first, then the multitask entry, per cycle.
    pub fn from_ratio(ratio: EpochRatio, cycles: u32) -> Self {
        let entries = match ratio {
            EpochRatio::Finite {
                multitask,
                contrastive,
            } => vec![
                ScheduleEntry::new(CONTRASTIVE_TAG, ObjectiveKind::Contrastive, contrastive),
                ScheduleEntry::new(MULTITASK_TAG, ObjectiveKind::Multitask, multitask),
            ],
            EpochRatio::Infinite => vec![ScheduleEntry::new(
                MULTITASK_TAG,
                ObjectiveKind::Multitask,
                1,
            )],
        };
        Self { entries, cycles }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config("schedule has no entries".into()));
        }
        if self.cycles == 0 {
            return Err(Error::Config("schedule needs at least one cycle".into()));
        }
        if let Some(e) = self.entries.iter().find(|e| e.epochs == 0) {
            return Err(Error::Config(format!(
                "dataset {:?} has zero epochs per cycle",
                e.dataset
            )));
        }
        Ok(())
    }
}

pub fn build_schedule(spec: &MixedObjectiveSchedule) -> Result<Vec<EpochSlot>> {
    spec.validate()?;
    let mut slots = Vec::new();
    for cycle in 0..spec.cycles {
        for entry in &spec.entries {
            for _ in 0..entry.epochs {
                slots.push(EpochSlot {
                    cycle,
                    dataset: entry.dataset.clone(),
                    objective: entry.objective,
                });
            }
        }
    }
    Ok(slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ObjectiveKind::*;

    fn kinds(slots: &[EpochSlot]) -> Vec<ObjectiveKind> {
        slots.iter().map(|s| s.objective).collect()
    }

    #[test]
    fn ratio_two_alternates() {
        let spec = MixedObjectiveSchedule::from_ratio(
            EpochRatio::Finite {
                multitask: 2,
                contrastive: 1,
            },
            2,
        );
        let slots = build_schedule(&spec).unwrap();
        assert_eq!(
            kinds(&slots),
            [
                Contrastive,
                Multitask,
                Multitask,
                Contrastive,
                Multitask,
                Multitask
            ]
        );
        assert_eq!(slots[3].cycle, 1);
        assert_eq!(slots[1].dataset, MULTITASK_TAG);
    }

    #[test]
    fn single_entry_repeats() {
        let spec = MixedObjectiveSchedule {
            entries: vec![ScheduleEntry::new("X", Contrastive, 1)],
            cycles: 3,
        };
        assert_eq!(kinds(&build_schedule(&spec).unwrap()), [Contrastive; 3]);
    }

    #[test]
    fn infinite_ratio_is_multitask_only() {
        let spec = MixedObjectiveSchedule::from_ratio(EpochRatio::Infinite, 4);
        assert_eq!(kinds(&build_schedule(&spec).unwrap()), [Multitask; 4]);
    }

    #[test]
    fn invalid_specs() {
        let empty = MixedObjectiveSchedule {
            entries: vec![],
            cycles: 1,
        };
        assert!(build_schedule(&empty).is_err());
        let zero = MixedObjectiveSchedule {
            entries: vec![ScheduleEntry::new("X", Contrastive, 0)],
            cycles: 1,
        };
        assert!(build_schedule(&zero).is_err());
    }

    proptest! {
        #[test]
        fn length_and_tag_counts(epochs in prop::collection::vec(1u32..5, 1..5), cycles in 1u32..5) {
            let entries: Vec<_> = epochs
                .iter()
                .enumerate()
                .map(|(i, &e)| ScheduleEntry::new(format!("d{i}"), if i % 2 == 0 { Contrastive } else { Multitask }, e))
                .collect();
            let spec = MixedObjectiveSchedule { entries, cycles };
            let slots = build_schedule(&spec).unwrap();
            let per_cycle: u32 = epochs.iter().sum();
            prop_assert_eq!(slots.len() as u32, cycles * per_cycle);
            for (i, &e) in epochs.iter().enumerate() {
                let tag = format!("d{i}");
                prop_assert_eq!(slots.iter().filter(|s| s.dataset == tag).count() as u32, e * cycles);
            }
        }
    }
}
