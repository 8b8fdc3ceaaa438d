//! Tasks, UAVs and the energy model, plus task-document parsing.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{MapGraph, PosId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UavId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for UavId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TaskSetError {
    #[error("malformed task document: {0}")]
    Parse(String),
    #[error("duplicate task id {0}")]
    DuplicateTask(TaskId),
    #[error("task {task} lists unknown predecessor {predecessor}")]
    DanglingPredecessor { task: TaskId, predecessor: TaskId },
    #[error("precedence relation contains a cycle through task {0}")]
    CyclicPrecedence(TaskId),
    #[error("precedence {from} -> {to} is implied by other relations")]
    RedundantPrecedence { from: TaskId, to: TaskId },
    #[error("task {0}: release + processing exceeds due date")]
    InvalidWindow(TaskId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {0} has no time window")]
    NoTimeWindow(TaskId),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Inspection,
    MaterialHandling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeWindow {
    pub release: i64,
    pub due: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub start: String,
    pub end: String,
    pub processing: i64,
    pub window: Option<TimeWindow>,
    /// Direct predecessors, ascending.
    pub predecessors: Vec<TaskId>,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        if self.start == self.end {
            TaskKind::Inspection
        } else {
            TaskKind::MaterialHandling
        }
    }

    pub fn has_time_window(&self) -> bool {
        self.window.is_some()
    }

    pub fn slack(&self) -> Result<i64, TaskSetError> {
        let w = self.window.ok_or(TaskSetError::NoTimeWindow(self.id))?;
        Ok(w.due - w.release - self.processing)
    }
}

/// Which end of a task an occupation span refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskEnd {
    Start,
    End,
}

/// Position occupation of a task relative to its start time, as
/// `(which position, offset start, offset end)`.
///
/// Inspections hold their position for the whole execution. Material
/// handling holds the start position while loading and the end position
/// while unloading, each half of the load/unload allowance.
pub fn occupation_spans(kind: TaskKind, processing: i64, energy: &EnergyModel) -> Vec<(TaskEnd, i64, i64)> {
    match kind {
        TaskKind::Inspection => vec![(TaskEnd::Start, 0, processing)],
        TaskKind::MaterialHandling => {
            let load = energy.load_time().min(processing);
            let unload = energy.unload_time().min(processing);
            vec![(TaskEnd::Start, 0, load), (TaskEnd::End, processing - unload, processing)]
        }
    }
}

/// An immutable, validated set of tasks with precomputed precedence closures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    tasks: Vec<Task>,
    index: HashMap<TaskId, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    cum_preds: Vec<Vec<usize>>,
    cum_succs: Vec<Vec<usize>>,
}

impl TaskSet {
    pub fn new(mut tasks: Vec<Task>) -> Result<Self, TaskSetError> {
        tasks.sort_by_key(|t| t.id);
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.id, i).is_some() {
                return Err(TaskSetError::DuplicateTask(t.id));
            }
        }
        for t in tasks.iter_mut() {
            if t.processing <= 0 {
                return Err(TaskSetError::Parse(format!("task {} has non-positive processing time", t.id)));
            }
            if t.start.is_empty() || t.end.is_empty() {
                return Err(TaskSetError::Parse(format!("task {} has an empty position", t.id)));
            }
            if let Some(w) = t.window {
                if w.release < 0 || w.release + t.processing > w.due {
                    return Err(TaskSetError::InvalidWindow(t.id));
                }
            }
            t.predecessors.sort();
            t.predecessors.dedup();
        }
        let n = tasks.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (i, t) in tasks.iter().enumerate() {
            for p in &t.predecessors {
                if *p == t.id {
                    return Err(TaskSetError::CyclicPrecedence(t.id));
                }
                let j = *index.get(p).ok_or(TaskSetError::DanglingPredecessor {
                    task: t.id,
                    predecessor: *p,
                })?;
                preds[i].push(j);
                succs[j].push(i);
            }
        }

        // Kahn's algorithm; leftover nodes sit on a cycle
        let mut indegree: Vec<usize> = preds.iter().map(Vec::len).collect();
        let mut order = Vec::with_capacity(n);
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &s in &succs[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(TaskSetError::CyclicPrecedence(tasks[stuck].id));
        }

        let mut cum_preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &i in &order {
            let mut acc = BTreeSet::new();
            for &p in &preds[i] {
                acc.insert(p);
                acc.extend(cum_preds[p].iter().copied());
            }
            cum_preds[i] = acc;
        }
        for (i, t) in tasks.iter().enumerate() {
            for &p in &preds[i] {
                let implied = preds[i].iter().any(|&q| q != p && cum_preds[q].contains(&p));
                if implied {
                    return Err(TaskSetError::RedundantPrecedence {
                        from: tasks[p].id,
                        to: t.id,
                    });
                }
            }
        }
        let mut cum_succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, cp) in cum_preds.iter().enumerate() {
            for &p in cp {
                cum_succs[p].push(i);
            }
        }

        Ok(TaskSet {
            tasks,
            index,
            preds,
            succs,
            cum_preds: cum_preds.into_iter().map(|s| s.into_iter().collect()).collect(),
            cum_succs,
        })
    }

    pub fn empty() -> Self {
        TaskSet::new(Vec::new()).expect("empty task set is valid")
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.tasks.iter().map(|t| t.id)
    }

    pub fn get(&self, id: TaskId) -> Option<&Task> {
        self.index.get(&id).map(|&i| &self.tasks[i])
    }

    pub fn index_of(&self, id: TaskId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn task_at(&self, idx: usize) -> &Task {
        &self.tasks[idx]
    }

    /// Direct predecessor indices of the task at `idx`.
    pub fn preds_idx(&self, idx: usize) -> &[usize] {
        &self.preds[idx]
    }

    pub fn succs_idx(&self, idx: usize) -> &[usize] {
        &self.succs[idx]
    }

    pub fn cumulative_preds_idx(&self, idx: usize) -> &[usize] {
        &self.cum_preds[idx]
    }

    pub fn cumulative_succs_idx(&self, idx: usize) -> &[usize] {
        &self.cum_succs[idx]
    }

    pub fn cumulative_predecessors(&self, id: TaskId) -> Result<BTreeSet<TaskId>, TaskSetError> {
        let i = self.index_of(id).ok_or(TaskSetError::UnknownTask(id))?;
        Ok(self.cum_preds[i].iter().map(|&j| self.tasks[j].id).collect())
    }

    pub fn cumulative_successors(&self, id: TaskId) -> Result<BTreeSet<TaskId>, TaskSetError> {
        let i = self.index_of(id).ok_or(TaskSetError::UnknownTask(id))?;
        Ok(self.cum_succs[i].iter().map(|&j| self.tasks[j].id).collect())
    }

    pub fn direct_successors(&self, id: TaskId) -> Result<Vec<TaskId>, TaskSetError> {
        let i = self.index_of(id).ok_or(TaskSetError::UnknownTask(id))?;
        Ok(self.succs[i].iter().map(|&j| self.tasks[j].id).collect())
    }

    pub fn slack_of(&self, id: TaskId) -> Result<i64, TaskSetError> {
        self.get(id).ok_or(TaskSetError::UnknownTask(id))?.slack()
    }

    /// A topological order of task indices (ascending id among ready tasks).
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &s in &self.succs[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        order
    }

    pub fn to_document(&self) -> TaskDocument {
        TaskDocument {
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskRecord {
                    id: t.id.0,
                    start: t.start.clone(),
                    end: t.end.clone(),
                    processing: t.processing,
                    release: t.window.map(|w| w.release),
                    due: t.window.map(|w| w.due),
                    predecessors: t.predecessors.iter().map(|p| p.0).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("task document serializes")
    }

    pub fn from_document(doc: TaskDocument) -> Result<Self, TaskSetError> {
        let tasks = doc
            .tasks
            .into_iter()
            .map(TaskRecord::into_task)
            .collect::<Result<Vec<_>, _>>()?;
        TaskSet::new(tasks)
    }

    pub fn from_json(text: &str) -> Result<Self, TaskSetError> {
        let doc: TaskDocument = serde_json::from_str(text).map_err(|e| TaskSetError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Reads the tabular layout `id,start,end,processing,release,due,predecessors`
    /// with `;`-separated predecessors and `-` for none. A header row is optional.
    pub fn from_csv(text: &str) -> Result<Self, TaskSetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut tasks = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row.map_err(|e| TaskSetError::Parse(e.to_string()))?;
            if row.iter().all(str::is_empty) {
                continue;
            }
            if line == 0 && row.get(0).is_some_and(|f| f.parse::<u32>().is_err()) {
                continue;
            }
            if row.len() < 4 {
                return Err(TaskSetError::Parse(format!("row {}: expected at least 4 columns", line + 1)));
            }
            let field = |i: usize| row.get(i).unwrap_or("");
            let int = |i: usize, what: &str| -> Result<i64, TaskSetError> {
                field(i).parse::<i64>().map_err(|_| {
                    let hint = if what == "processing" && field(2).parse::<i64>().is_ok() {
                        " (columns look like id,start,processing,end; expected id,start,end,processing)"
                    } else {
                        ""
                    };
                    TaskSetError::Parse(format!("row {}: invalid {what} `{}`{hint}", line + 1, field(i)))
                })
            };
            let id = int(0, "id")? as u32;
            let processing = int(3, "processing")?;
            let opt = |i: usize, what: &str| -> Result<Option<i64>, TaskSetError> {
                match field(i) {
                    "" | "-" => Ok(None),
                    _ => int(i, what).map(Some),
                }
            };
            let release = opt(4, "release")?;
            let due = opt(5, "due")?;
            let predecessors = match field(6) {
                "" | "-" => Vec::new(),
                list => list
                    .split(';')
                    .map(|s| {
                        s.trim()
                            .parse::<u32>()
                            .map_err(|_| TaskSetError::Parse(format!("row {}: invalid predecessor `{s}`", line + 1)))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let record = TaskRecord {
                id,
                start: field(1).to_string(),
                end: field(2).to_string(),
                processing,
                release,
                due,
                predecessors,
            };
            tasks.push(record.into_task()?);
        }
        TaskSet::new(tasks)
    }

    /// JSON when the text starts with `{`, CSV otherwise.
    pub fn parse(text: &str) -> Result<Self, TaskSetError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_csv(text)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaskSetError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The ten-task example dataset bundled with the crate.
    pub fn reference_set() -> Self {
        Self::from_csv(include_str!("../data/reference_tasks.csv")).expect("bundled dataset is valid")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TaskDocument {
    pub tasks: Vec<TaskRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TaskRecord {
    pub id: u32,
    pub start: String,
    pub end: String,
    pub processing: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<i64>,
    #[serde(default)]
    pub predecessors: Vec<u32>,
}

impl TaskRecord {
    fn into_task(self) -> Result<Task, TaskSetError> {
        let window = match (self.release, self.due) {
            (Some(release), Some(due)) => Some(TimeWindow { release, due }),
            (None, None) => None,
            _ => {
                return Err(TaskSetError::Parse(format!(
                    "task {} must give both release and due, or neither",
                    self.id
                )))
            }
        };
        Ok(Task {
            id: TaskId(self.id),
            start: self.start,
            end: self.end,
            processing: self.processing,
            window,
            predecessors: self.predecessors.into_iter().map(TaskId).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UavSpec {
    pub id: UavId,
    pub initial_position: String,
    /// Flight seconds available on a full battery.
    pub battery_capacity: i64,
}

impl UavSpec {
    /// `count` UAVs numbered from 1, parked round-robin on the map's stations
    /// in ascending station order.
    pub fn fleet(map: &MapGraph, count: usize, battery_capacity: i64) -> Vec<UavSpec> {
        let stations: Vec<PosId> = map.stations().collect();
        (0..count)
            .map(|k| UavSpec {
                id: UavId(k as u32 + 1),
                initial_position: map.label(stations[k % stations.len()]).to_string(),
                battery_capacity,
            })
            .collect()
    }
}

pub const DEFAULT_BATTERY_CAPACITY: i64 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Seconds to recharge an empty battery to full.
    pub full_recharge: i64,
    /// Shortest recharge worth scheduling.
    pub min_recharge: i64,
    /// Combined load and unload allowance of a material-handling task.
    pub load_unload: i64,
    pub inspection: i64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            full_recharge: 2700,
            min_recharge: 270,
            load_unload: 30,
            inspection: 10,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.full_recharge <= 0 {
            return Err("full recharge duration must be positive".into());
        }
        if self.min_recharge <= 0 || self.min_recharge > self.full_recharge {
            return Err("minimum recharge must lie in (0, full recharge]".into());
        }
        if self.load_unload < 0 || self.inspection <= 0 {
            return Err("task time constants must be positive".into());
        }
        Ok(())
    }

    /// Battery-seconds gained per second on the charger.
    pub fn charge_rate(&self, capacity: i64) -> Rational64 {
        Rational64::new(capacity, self.full_recharge)
    }

    pub fn load_time(&self) -> i64 {
        self.load_unload / 2
    }

    pub fn unload_time(&self) -> i64 {
        self.load_unload - self.load_unload / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: impl IntoIterator<Item = u32>) -> BTreeSet<TaskId> {
        v.into_iter().map(TaskId).collect()
    }

    #[test]
    fn reference_set_parses() {
        let ts = TaskSet::reference_set();
        assert_eq!(ts.len(), 10);
        assert_eq!(ts.get(TaskId(7)).unwrap().predecessors, vec![TaskId(9), TaskId(10)]);
        assert_eq!(ts.get(TaskId(3)).unwrap().kind(), TaskKind::MaterialHandling);
        assert_eq!(ts.get(TaskId(5)).unwrap().kind(), TaskKind::Inspection);
    }

    #[test]
    fn empty_documents() {
        assert!(TaskSet::from_json(r#"{"tasks": []}"#).unwrap().is_empty());
        assert!(TaskSet::from_csv("").unwrap().is_empty());
    }

    #[test]
    fn redundant_precedence_is_rejected() {
        let csv = "8,a1,a1,10,0,100,-\n10,a2,a2,10,100,200,8\n2,a3,a3,10,200,300,10;8\n";
        match TaskSet::from_csv(csv) {
            Err(TaskSetError::RedundantPrecedence { from, to }) => {
                assert_eq!((from, to), (TaskId(8), TaskId(2)));
            }
            other => panic!("expected redundancy error, got {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let cyc = "1,a1,a1,10,0,100,2\n2,a1,a1,10,0,100,1\n";
        assert!(matches!(TaskSet::from_csv(cyc), Err(TaskSetError::CyclicPrecedence(_))));
        let selfp = "1,a1,a1,10,0,100,1\n";
        assert!(matches!(TaskSet::from_csv(selfp), Err(TaskSetError::CyclicPrecedence(_))));
        let dangling = "1,a1,a1,10,0,100,9\n";
        assert!(matches!(
            TaskSet::from_csv(dangling),
            Err(TaskSetError::DanglingPredecessor { .. })
        ));
        let window = "1,a1,a1,50,0,40,-\n";
        assert!(matches!(TaskSet::from_csv(window), Err(TaskSetError::InvalidWindow(_))));
        let dup = "1,a1,a1,10,0,40,-\n1,a2,a2,10,0,40,-\n";
        assert!(matches!(TaskSet::from_csv(dup), Err(TaskSetError::DuplicateTask(_))));
    }

    #[test]
    fn header_order_mixup_gets_a_hint() {
        let err = TaskSet::from_csv("1,c3,10,c3,726,1077,8\n").unwrap_err();
        assert!(err.to_string().contains("expected id,start,end,processing"), "{err}");
    }

    #[test]
    fn windowless_tasks_are_accepted() {
        let ts = TaskSet::from_json(r#"{"tasks":[{"id":1,"start":"a1","end":"a1","processing":10}]}"#).unwrap();
        let t = ts.get(TaskId(1)).unwrap();
        assert!(!t.has_time_window());
        assert!(matches!(t.slack(), Err(TaskSetError::NoTimeWindow(_))));
        let half = r#"{"tasks":[{"id":1,"start":"a1","end":"a1","processing":10,"release":4}]}"#;
        assert!(matches!(TaskSet::from_json(half), Err(TaskSetError::Parse(_))));
    }

    #[test]
    fn slack_values() {
        let ts = TaskSet::reference_set();
        assert_eq!(ts.slack_of(TaskId(10)).unwrap(), 237);
        assert_eq!(ts.slack_of(TaskId(5)).unwrap(), 372);
        let tight = TaskSet::from_csv("1,a1,a1,10,5,15,-\n").unwrap();
        assert_eq!(tight.slack_of(TaskId(1)).unwrap(), 0);
    }

    /// Closure computed by plain repeated expansion over the predecessor column.
    fn closure_oracle(ts: &TaskSet, id: TaskId) -> BTreeSet<TaskId> {
        let mut out = BTreeSet::new();
        let mut frontier: Vec<TaskId> = ts.get(id).unwrap().predecessors.clone();
        while let Some(p) = frontier.pop() {
            if out.insert(p) {
                frontier.extend(ts.get(p).unwrap().predecessors.iter().copied());
            }
        }
        out
    }

    #[test]
    fn cumulative_predecessors_of_reference_set() {
        let ts = TaskSet::reference_set();
        assert_eq!(ts.cumulative_predecessors(TaskId(7)).unwrap(), ids([9, 10, 5, 8]));
        assert_eq!(ts.cumulative_predecessors(TaskId(3)).unwrap(), ids([7, 9, 10, 5, 8]));
        assert!(ts.cumulative_predecessors(TaskId(5)).unwrap().is_empty());
        for id in ts.ids() {
            let cp = ts.cumulative_predecessors(id).unwrap();
            assert_eq!(cp, closure_oracle(&ts, id));
            assert!(ts.get(id).unwrap().predecessors.iter().all(|p| cp.contains(p)));
        }
        assert!(matches!(
            ts.cumulative_predecessors(TaskId(99)),
            Err(TaskSetError::UnknownTask(_))
        ));
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let ts = TaskSet::reference_set();
        let text = ts.to_json();
        let again = TaskSet::from_json(&text).unwrap();
        assert_eq!(again, ts);
        assert_eq!(again.to_json(), text);
    }

    #[test]
    fn occupation_spans_follow_task_kind() {
        let e = EnergyModel::default();
        assert_eq!(occupation_spans(TaskKind::Inspection, 10, &e), vec![(TaskEnd::Start, 0, 10)]);
        assert_eq!(
            occupation_spans(TaskKind::MaterialHandling, 44, &e),
            vec![(TaskEnd::Start, 0, 15), (TaskEnd::End, 29, 44)]
        );
    }

    #[test]
    fn charge_rate_is_capacity_over_full_recharge() {
        let e = EnergyModel::default();
        assert_eq!(e.charge_rate(1200), Rational64::new(4, 9));
        assert_eq!(e.charge_rate(1200) * 270, Rational64::from_integer(120));
    }
}
