//! A scheduling instance: map, tasks, fleet and energy model, cross-checked
//! and resolved to position ids once.

use thiserror::Error;

use crate::domain::{occupation_spans, EnergyModel, TaskEnd, TaskId, TaskKind, TaskSet, TimeWindow, UavId, UavSpec};
use crate::map::{MapGraph, PosId, UNREACHABLE};
use crate::timeline::Battery;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("task {task} refers to unknown position `{label}`")]
    UnknownPosition { task: TaskId, label: String },
    #[error("UAV {0} does not start at a recharge station")]
    NotAtStation(UavId),
    #[error("UAV {0} starts at unknown position")]
    UnknownStart(UavId),
    #[error("UAV {0} has non-positive battery capacity")]
    BadCapacity(UavId),
    #[error("duplicate UAV id {0}")]
    DuplicateUav(UavId),
    #[error("invalid energy model: {0}")]
    Energy(String),
    #[error("task {0} cannot be reached from any recharge station")]
    Unreachable(TaskId),
}

/// Task data in the form the schedulers consume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedTask {
    pub id: TaskId,
    pub start: PosId,
    pub end: PosId,
    pub processing: i64,
    pub window: Option<TimeWindow>,
    pub kind: TaskKind,
    /// Position occupations as `(position, offset from, offset to)`
    /// relative to the task start.
    pub spans: Vec<(PosId, i64, i64)>,
}

#[derive(Debug, Clone)]
pub struct Instance<'a> {
    pub map: &'a MapGraph,
    pub tasks: &'a TaskSet,
    pub fleet: &'a [UavSpec],
    pub energy: EnergyModel,
    resolved: Vec<ResolvedTask>,
    homes: Vec<PosId>,
    batteries: Vec<Battery>,
}

impl<'a> Instance<'a> {
    pub fn new(map: &'a MapGraph, tasks: &'a TaskSet, fleet: &'a [UavSpec], energy: EnergyModel) -> Result<Self, InstanceError> {
        energy.validate().map_err(InstanceError::Energy)?;
        let mut homes = Vec::with_capacity(fleet.len());
        let mut batteries = Vec::with_capacity(fleet.len());
        for (i, u) in fleet.iter().enumerate() {
            if fleet[..i].iter().any(|v| v.id == u.id) {
                return Err(InstanceError::DuplicateUav(u.id));
            }
            let home = map
                .id(&u.initial_position)
                .map_err(|_| InstanceError::UnknownStart(u.id))?;
            if !map.is_station(home) {
                return Err(InstanceError::NotAtStation(u.id));
            }
            if u.battery_capacity <= 0 {
                return Err(InstanceError::BadCapacity(u.id));
            }
            homes.push(home);
            batteries.push(Battery::new(u.battery_capacity, &energy));
        }
        let mut resolved = Vec::with_capacity(tasks.len());
        for t in tasks.tasks() {
            let pos = |label: &str| {
                map.id(label).map_err(|_| InstanceError::UnknownPosition {
                    task: t.id,
                    label: label.to_string(),
                })
            };
            let start = pos(&t.start)?;
            let end = pos(&t.end)?;
            if map.travel(start, end) >= UNREACHABLE {
                return Err(InstanceError::Unreachable(t.id));
            }
            let kind = t.kind();
            let spans = occupation_spans(kind, t.processing, &energy)
                .into_iter()
                .filter(|&(_, a, b)| b > a)
                .map(|(which, a, b)| (if which == TaskEnd::Start { start } else { end }, a, b))
                .collect();
            resolved.push(ResolvedTask {
                id: t.id,
                start,
                end,
                processing: t.processing,
                window: t.window,
                kind,
                spans,
            });
        }
        Ok(Instance {
            map,
            tasks,
            fleet,
            energy,
            resolved,
            homes,
            batteries,
        })
    }

    /// Resolved task at the same index as in the task set.
    pub fn task(&self, idx: usize) -> &ResolvedTask {
        &self.resolved[idx]
    }

    pub fn resolved(&self) -> &[ResolvedTask] {
        &self.resolved
    }

    pub fn home(&self, uav_idx: usize) -> PosId {
        self.homes[uav_idx]
    }

    pub fn battery(&self, uav_idx: usize) -> &Battery {
        &self.batteries[uav_idx]
    }

    pub fn uav_index(&self, id: UavId) -> Option<usize> {
        self.fleet.iter().position(|u| u.id == id)
    }

    /// Latest due date, or zero when no task has a window.
    pub fn latest_due(&self) -> i64 {
        self.resolved
            .iter()
            .filter_map(|t| t.window.map(|w| w.due))
            .max()
            .unwrap_or(0)
    }
}
