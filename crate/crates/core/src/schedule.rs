//! Per-UAV action timelines and their JSON form.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{TaskId, UavId};
use crate::fragments::TimeFragment;
use crate::map::{MapGraph, PosId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    FlyTo,
    PerformInspection,
    PerformMaterialHandling,
    Hover,
    WaitOnGround,
    Recharge,
}

impl ActionKind {
    /// Whether the action moves the UAV between two positions.
    pub fn is_moving(self) -> bool {
        matches!(self, ActionKind::FlyTo | ActionKind::PerformMaterialHandling)
    }

    pub fn is_task(self) -> bool {
        matches!(self, ActionKind::PerformInspection | ActionKind::PerformMaterialHandling)
    }

    /// Whether each second of the action drains the battery.
    pub fn consumes(self) -> bool {
        !matches!(self, ActionKind::WaitOnGround | ActionKind::Recharge)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub kind: ActionKind,
    pub fragment: TimeFragment,
    pub from: PosId,
    /// Equal to `from` for stationary actions.
    pub to: PosId,
    pub task: Option<TaskId>,
}

impl Action {
    pub fn moving(kind: ActionKind, fragment: TimeFragment, from: PosId, to: PosId, task: Option<TaskId>) -> Self {
        Action {
            kind,
            fragment,
            from,
            to,
            task,
        }
    }

    pub fn stationary(kind: ActionKind, fragment: TimeFragment, at: PosId, task: Option<TaskId>) -> Self {
        Action::moving(kind, fragment, at, at, task)
    }

    pub fn duration(&self) -> i64 {
        self.fragment.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UavTimeline {
    pub uav: UavId,
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Schedule {
    pub uavs: Vec<UavTimeline>,
    /// Total battery-seconds consumed, as computed by the producer.
    pub energy: i64,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("malformed schedule document: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Schedule {
    pub fn empty() -> Self {
        Schedule::default()
    }

    pub fn timeline(&self, uav: UavId) -> Option<&UavTimeline> {
        self.uavs.iter().find(|t| t.uav == uav)
    }

    pub fn actions(&self) -> impl Iterator<Item = (UavId, &Action)> + '_ {
        self.uavs.iter().flat_map(|t| t.actions.iter().map(move |a| (t.uav, a)))
    }

    pub fn makespan(&self) -> i64 {
        self.actions().map(|(_, a)| a.fragment.end).max().unwrap_or(0)
    }

    /// Task executions as `(task, uav, action)` in timeline order.
    pub fn executions(&self) -> impl Iterator<Item = (TaskId, UavId, &Action)> + '_ {
        self.actions()
            .filter(|(_, a)| a.kind.is_task())
            .filter_map(|(u, a)| a.task.map(|t| (t, u, a)))
    }

    pub fn to_document(&self, map: &MapGraph) -> ScheduleDocument {
        ScheduleDocument {
            uavs: self
                .uavs
                .iter()
                .map(|t| UavDoc {
                    id: t.uav.0,
                    actions: t
                        .actions
                        .iter()
                        .map(|a| ActionDoc {
                            kind: a.kind,
                            start: a.fragment.start,
                            end: a.fragment.end,
                            from: Some(map.label(a.from).to_string()),
                            to: a.kind.is_moving().then(|| map.label(a.to).to_string()),
                            task: a.task.map(|t| t.0),
                        })
                        .collect(),
                })
                .collect(),
            energy: self.energy,
            makespan: self.makespan(),
        }
    }

    pub fn to_json(&self, map: &MapGraph) -> String {
        serde_json::to_string_pretty(&self.to_document(map)).expect("schedule serializes")
    }

    pub fn from_document(doc: &ScheduleDocument, map: &MapGraph) -> Result<Self, ScheduleError> {
        let pos = |label: &Option<String>, what: &str| -> Result<PosId, ScheduleError> {
            let label = label
                .as_deref()
                .ok_or_else(|| ScheduleError::Parse(format!("action lacks `{what}`")))?;
            map.id(label).map_err(|e| ScheduleError::Parse(e.to_string()))
        };
        let mut uavs = Vec::with_capacity(doc.uavs.len());
        for u in &doc.uavs {
            let mut actions = Vec::with_capacity(u.actions.len());
            for a in &u.actions {
                if a.end < a.start {
                    return Err(ScheduleError::Parse(format!("UAV {}: action ends before it starts", u.id)));
                }
                let from = pos(&a.from, "from")?;
                let to = if a.kind.is_moving() { pos(&a.to, "to")? } else { from };
                actions.push(Action {
                    kind: a.kind,
                    fragment: TimeFragment::new(a.start, a.end),
                    from,
                    to,
                    task: a.task.map(TaskId),
                });
            }
            uavs.push(UavTimeline {
                uav: UavId(u.id),
                actions,
            });
        }
        Ok(Schedule {
            uavs,
            energy: doc.energy,
        })
    }

    pub fn from_json(text: &str, map: &MapGraph) -> Result<Self, ScheduleError> {
        let doc: ScheduleDocument = serde_json::from_str(text).map_err(|e| ScheduleError::Parse(e.to_string()))?;
        Self::from_document(&doc, map)
    }

    pub fn load(path: impl AsRef<Path>, map: &MapGraph) -> Result<Self, ScheduleError> {
        Self::from_json(&std::fs::read_to_string(path)?, map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub uavs: Vec<UavDoc>,
    pub energy: i64,
    #[serde(default)]
    pub makespan: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UavDoc {
    pub id: u32,
    pub actions: Vec<ActionDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDoc {
    pub kind: ActionKind,
    pub start: i64,
    pub end: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<u32>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_round_trip() {
        let map = MapGraph::lab_demo();
        let r = map.id("r1").unwrap();
        let a = map.id("a3").unwrap();
        let sched = Schedule {
            uavs: vec![UavTimeline {
                uav: UavId(1),
                actions: vec![
                    Action::moving(ActionKind::FlyTo, TimeFragment::new(0, 6), r, a, None),
                    Action::stationary(ActionKind::PerformInspection, TimeFragment::new(6, 16), a, Some(TaskId(4))),
                ],
            }],
            energy: 16,
        };
        let text = sched.to_json(&map);
        assert!(text.contains("\"makespan\": 16"));
        assert_eq!(Schedule::from_json(&text, &map).unwrap(), sched);
        let doc = sched.to_document(&map);
        assert_eq!(doc.uavs[0].actions[1].to, None);
    }

    #[test]
    fn empty_schedule() {
        let s = Schedule::empty();
        assert_eq!(s.makespan(), 0);
        assert_eq!(s.executions().count(), 0);
    }
}
