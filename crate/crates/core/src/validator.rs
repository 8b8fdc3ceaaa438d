//! Independent audit of a schedule against the problem constraints.
//!
//! Nothing here reuses the placement or battery code of the scheduler:
//! battery levels are simulated in exact rational battery-seconds straight
//! from the action list.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::Rational64;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{occupation_spans, EnergyModel, TaskEnd, TaskId, TaskKind, TaskSet, UavId, UavSpec};
use crate::fragments::TimeFragment;
use crate::map::{MapGraph, PosId, UNREACHABLE};
use crate::schedule::{Action, ActionKind, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Every task executed exactly once by one UAV.
    TaskOnce,
    /// Executions lie inside release and due dates.
    TimeWindow,
    /// Stations host any number of UAVs; always satisfied, kept for the record.
    StationCapacity,
    /// No two executions occupy a work position at the same time.
    PositionConflict,
    /// A UAV does one thing at a time.
    SingleTask,
    /// Ground waits and recharges only happen at stations.
    LandingAtStation,
    /// Level stays above the reserve and above zero at every action boundary.
    Battery,
    /// Timelines start full, at the home station, at time zero.
    InitialState,
    /// Tasks start after all their predecessors end.
    Precedence,
    /// The precedence relation is acyclic and free of implied edges.
    PrecedenceGraph,
    /// Execution duration, kind and positions match the task.
    ProcessingTime,
    /// Recharges last at least the minimum recharge time.
    MinimumRecharge,
    /// Consecutive actions meet in time and place.
    Chaining,
    /// Flights take exactly the routed travel time.
    FlightTime,
    /// The reported energy equals the recomputed one.
    Energy,
}

impl Check {
    pub const ALL: [Check; 15] = [
        Check::TaskOnce,
        Check::TimeWindow,
        Check::StationCapacity,
        Check::PositionConflict,
        Check::SingleTask,
        Check::LandingAtStation,
        Check::Battery,
        Check::InitialState,
        Check::Precedence,
        Check::PrecedenceGraph,
        Check::ProcessingTime,
        Check::MinimumRecharge,
        Check::Chaining,
        Check::FlightTime,
        Check::Energy,
    ];
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("check names serialize");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub check: Check,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uav: Option<UavId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UavTrace {
    pub uav: UavId,
    /// `(time, level)` at every action boundary, starting with the full
    /// battery before the first action.
    pub points: Vec<(i64, Rational64)>,
    /// Level right after each task execution.
    pub post_task: Vec<Rational64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatteryTrace {
    pub uavs: Vec<UavTrace>,
}

impl BatteryTrace {
    pub fn post_task_samples(&self) -> impl Iterator<Item = Rational64> + '_ {
        self.uavs.iter().flat_map(|u| u.post_task.iter().copied())
    }

    pub fn minimum(&self) -> Option<Rational64> {
        self.uavs.iter().flat_map(|u| u.points.iter().map(|p| p.1)).min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub energy: i64,
    pub makespan: i64,
    pub battery: BatteryTrace,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn violated(&self) -> std::collections::BTreeSet<Check> {
        self.violations.iter().map(|v| v.check).collect()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            ok: bool,
            energy: i64,
            makespan: i64,
            checks: &'a [Check],
            violations: &'a [Violation],
            battery: Vec<TraceDoc>,
        }
        #[derive(Serialize)]
        struct TraceDoc {
            uav: UavId,
            min_level: Option<f64>,
            points: Vec<(i64, f64)>,
            post_task: Vec<f64>,
        }
        let round = |r: Rational64| (*r.numer() as f64 / *r.denom() as f64 * 100.0).round() / 100.0;
        let doc = Doc {
            ok: self.ok,
            energy: self.energy,
            makespan: self.makespan,
            checks: &self.checks,
            violations: &self.violations,
            battery: self
                .battery
                .uavs
                .iter()
                .map(|u| TraceDoc {
                    uav: u.uav,
                    min_level: u.points.iter().map(|p| p.1).min().map(round),
                    points: u.points.iter().map(|&(t, l)| (t, round(l))).collect(),
                    post_task: u.post_task.iter().copied().map(round).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("malformed schedule: {0}")]
    MalformedSchedule(String),
}

/// Battery-seconds consumed: flights, hovering and task executions.
pub fn energy_of(sched: &Schedule) -> i64 {
    sched
        .actions()
        .filter(|(_, a)| a.kind.consumes())
        .map(|(_, a)| a.duration())
        .sum()
}

fn check_structure(sched: &Schedule, ts: &TaskSet, fleet: &[UavSpec], map: &MapGraph) -> Result<(), ValidationError> {
    let bad = |m: String| Err(ValidationError::MalformedSchedule(m));
    let mut seen = Vec::new();
    for t in &sched.uavs {
        if !fleet.iter().any(|u| u.id == t.uav) {
            return bad(format!("unknown UAV {}", t.uav));
        }
        if seen.contains(&t.uav) {
            return bad(format!("UAV {} listed twice", t.uav));
        }
        seen.push(t.uav);
        for a in &t.actions {
            if a.from.index() >= map.len() || a.to.index() >= map.len() {
                return bad(format!("UAV {}: action refers to an unknown position", t.uav));
            }
            if a.fragment.end < a.fragment.start {
                return bad(format!("UAV {}: reversed action {}", t.uav, a.fragment));
            }
            match (a.kind.is_task(), a.task) {
                (true, Some(id)) if ts.get(id).is_none() => return bad(format!("unknown task {id}")),
                (true, None) => return bad(format!("UAV {}: execution without a task", t.uav)),
                (false, Some(id)) => return bad(format!("UAV {}: {} action carries task {id}", t.uav, a.kind)),
                _ => {}
            }
            if !a.kind.is_moving() && a.from != a.to {
                return bad(format!("UAV {}: stationary {} changes position", t.uav, a.kind));
            }
        }
    }
    Ok(())
}

/// Full audit of `sched`.
pub fn validate_schedule(
    sched: &Schedule,
    ts: &TaskSet,
    fleet: &[UavSpec],
    map: &MapGraph,
    energy: &EnergyModel,
) -> Result<ValidationReport, ValidationError> {
    check_structure(sched, ts, fleet, map)?;
    let mut out = Vec::new();
    let mut push = |check: Check, uav: Option<UavId>, task: Option<TaskId>, position: Option<&str>, detail: String| {
        out.push(Violation {
            check,
            uav,
            task,
            position: position.map(str::to_string),
            detail,
        })
    };

    // executions per task
    let mut runs: BTreeMap<TaskId, Vec<(UavId, Action)>> = BTreeMap::new();
    for (uav, a) in sched.actions() {
        if let (true, Some(id)) = (a.kind.is_task(), a.task) {
            runs.entry(id).or_default().push((uav, *a));
        }
    }
    for t in ts.tasks() {
        match runs.get(&t.id).map(Vec::len).unwrap_or(0) {
            1 => {}
            0 => push(Check::TaskOnce, None, Some(t.id), None, "task never executed".into()),
            n => push(Check::TaskOnce, None, Some(t.id), None, format!("task executed {n} times")),
        }
    }

    for t in ts.tasks() {
        let Some(execs) = runs.get(&t.id) else { continue };
        for &(uav, a) in execs {
            let start = map.id(&t.start).ok();
            let end = map.id(&t.end).ok();
            let want = if t.kind() == TaskKind::Inspection {
                ActionKind::PerformInspection
            } else {
                ActionKind::PerformMaterialHandling
            };
            if a.kind != want || Some(a.from) != start || Some(a.to) != end {
                push(
                    Check::ProcessingTime,
                    Some(uav),
                    Some(t.id),
                    None,
                    format!("expected {want} {}->{}, found {} {}->{}", t.start, t.end, a.kind, map.label(a.from), map.label(a.to)),
                );
            }
            if a.duration() != t.processing {
                push(
                    Check::ProcessingTime,
                    Some(uav),
                    Some(t.id),
                    None,
                    format!("lasts {} s, processing time is {} s", a.duration(), t.processing),
                );
            }
            if let Some(w) = t.window {
                if a.fragment.start < w.release || a.fragment.end > w.due {
                    push(
                        Check::TimeWindow,
                        Some(uav),
                        Some(t.id),
                        None,
                        format!("runs {} outside window [{}, {}]", a.fragment, w.release, w.due),
                    );
                }
            }
        }
    }

    // position occupation
    let mut occupied: HashMap<PosId, Vec<(TimeFragment, TaskId)>> = HashMap::new();
    for (id, execs) in &runs {
        for (_, a) in execs {
            let kind = if a.from == a.to {
                TaskKind::Inspection
            } else {
                TaskKind::MaterialHandling
            };
            for (which, o1, o2) in occupation_spans(kind, a.duration(), energy) {
                let pos = if which == TaskEnd::Start { a.from } else { a.to };
                if o2 > o1 && !map.is_station(pos) {
                    let f = TimeFragment::new(a.fragment.start + o1, a.fragment.start + o2);
                    occupied.entry(pos).or_default().push((f, *id));
                }
            }
        }
    }
    let mut positions: Vec<_> = occupied.into_iter().collect();
    positions.sort_by_key(|(p, _)| *p);
    for (pos, mut frags) in positions {
        frags.sort();
        for i in 0..frags.len() {
            for j in i + 1..frags.len() {
                if frags[j].0.start >= frags[i].0.end {
                    break;
                }
                if frags[i].1 != frags[j].1 {
                    push(
                        Check::PositionConflict,
                        None,
                        Some(frags[j].1),
                        Some(map.label(pos)),
                        format!("task {} at {} overlaps task {} at {}", frags[j].1, frags[j].0, frags[i].1, frags[i].0),
                    );
                }
            }
        }
    }

    // per-UAV sequencing, landing, flight times, battery
    let min_recharge = energy.min_recharge;
    let mut trace = BatteryTrace::default();
    for spec in fleet {
        let actions: &[Action] = sched.timeline(spec.id).map(|t| t.actions.as_slice()).unwrap_or(&[]);
        let uav = Some(spec.id);
        let cap = Rational64::from_integer(spec.battery_capacity);
        let rate = Rational64::new(spec.battery_capacity, energy.full_recharge);
        let mut points = Vec::with_capacity(actions.len() + 1);
        let mut post_task = Vec::new();
        let home = map.id(&spec.initial_position).ok();

        if let Some(first) = actions.first() {
            if first.fragment.start != 0 || Some(first.from) != home {
                push(
                    Check::InitialState,
                    uav,
                    None,
                    Some(map.label(first.from)),
                    format!("timeline starts at {} in {}, expected 0 in {}", first.fragment.start, map.label(first.from), spec.initial_position),
                );
            }
        }
        if home.is_none_or(|h| !map.is_station(h)) {
            push(Check::InitialState, uav, None, Some(&spec.initial_position), "home is not a recharge station".into());
        }

        let mut level = cap;
        if let Some(first) = actions.first() {
            points.push((first.fragment.start, level));
        }
        for (i, a) in actions.iter().enumerate() {
            if i > 0 {
                let prev = &actions[i - 1];
                if prev.fragment.end > a.fragment.start {
                    push(
                        Check::SingleTask,
                        uav,
                        a.task.or(prev.task),
                        None,
                        format!("{} {} overlaps {} {}", a.kind, a.fragment, prev.kind, prev.fragment),
                    );
                } else if prev.fragment.end < a.fragment.start {
                    push(
                        Check::Chaining,
                        uav,
                        a.task,
                        None,
                        format!("idle hole between {} and {}", prev.fragment.end, a.fragment.start),
                    );
                }
                if prev.to != a.from {
                    push(
                        Check::Chaining,
                        uav,
                        a.task,
                        Some(map.label(a.from)),
                        format!("{} starts at {} but previous action ended at {}", a.kind, map.label(a.from), map.label(prev.to)),
                    );
                }
            }
            let dur = a.duration();
            match a.kind {
                ActionKind::WaitOnGround | ActionKind::Recharge if !map.is_station(a.from) => push(
                    Check::LandingAtStation,
                    uav,
                    None,
                    Some(map.label(a.from)),
                    format!("{} {} away from any station", a.kind, a.fragment),
                ),
                _ => {}
            }
            if a.kind == ActionKind::Recharge && dur < min_recharge {
                push(
                    Check::MinimumRecharge,
                    uav,
                    None,
                    Some(map.label(a.from)),
                    format!("recharge of {dur} s is shorter than {min_recharge} s"),
                );
            }
            if a.kind == ActionKind::FlyTo {
                let route = map.travel(a.from, a.to);
                if route >= UNREACHABLE || route != dur {
                    push(
                        Check::FlightTime,
                        uav,
                        None,
                        Some(map.label(a.to)),
                        format!("flight {}->{} lasts {dur} s, route takes {}", map.label(a.from), map.label(a.to), route),
                    );
                }
            }
            level = match a.kind {
                ActionKind::Recharge => (level + rate * dur).min(cap),
                ActionKind::WaitOnGround => level,
                _ => level - dur,
            };
            points.push((a.fragment.end, level));
            if a.kind.is_task() {
                post_task.push(level);
            }
            let reserve = map.reserve(a.to);
            if level <= Rational64::from_integer(0) || level < Rational64::from_integer(reserve) {
                push(
                    Check::Battery,
                    uav,
                    a.task,
                    Some(map.label(a.to)),
                    format!(
                        "level {:.2} after {} at {} is below reserve {reserve}",
                        *level.numer() as f64 / *level.denom() as f64,
                        a.kind,
                        a.fragment.end
                    ),
                );
            }
        }
        trace.uavs.push(UavTrace {
            uav: spec.id,
            points,
            post_task,
        });
    }

    // precedence
    for t in ts.tasks() {
        let Some(&[(uav, a)]) = runs.get(&t.id).map(Vec::as_slice) else { continue };
        for p in &t.predecessors {
            if let Some(&[(_, pa)]) = runs.get(p).map(Vec::as_slice) {
                if a.fragment.start < pa.fragment.end {
                    push(
                        Check::Precedence,
                        Some(uav),
                        Some(t.id),
                        None,
                        format!("starts at {} before predecessor {p} ends at {}", a.fragment.start, pa.fragment.end),
                    );
                }
            }
        }
    }
    for (task, detail) in precedence_graph_issues(ts) {
        push(Check::PrecedenceGraph, None, Some(task), None, detail);
    }

    let recomputed = energy_of(sched);
    if recomputed != sched.energy {
        push(Check::Energy, None, None, None, format!("reported {} but actions consume {recomputed}", sched.energy));
    }

    Ok(ValidationReport {
        ok: out.is_empty(),
        violations: out,
        energy: recomputed,
        makespan: sched.makespan(),
        battery: trace,
        checks: Check::ALL.to_vec(),
    })
}

/// Battery levels at all action boundaries plus post-task samples.
pub fn battery_trace(sched: &Schedule, ts: &TaskSet, fleet: &[UavSpec], map: &MapGraph, energy: &EnergyModel) -> Result<BatteryTrace, ValidationError> {
    validate_schedule(sched, ts, fleet, map, energy).map(|r| r.battery)
}

/// Cycles and implied edges, found by plain reachability over the
/// predecessor lists.
fn precedence_graph_issues(ts: &TaskSet) -> Vec<(TaskId, String)> {
    let preds: HashMap<TaskId, &[TaskId]> = ts.tasks().iter().map(|t| (t.id, t.predecessors.as_slice())).collect();
    let reaches = |from: TaskId, target: TaskId, skip_direct: bool| -> bool {
        let mut stack: Vec<TaskId> = preds
            .get(&from)
            .map(|v| v.iter().copied().filter(|&p| !(skip_direct && p == target)).collect())
            .unwrap_or_default();
        let mut seen = std::collections::HashSet::new();
        while let Some(x) = stack.pop() {
            if x == target {
                return true;
            }
            if seen.insert(x) {
                stack.extend(preds.get(&x).into_iter().flat_map(|v| v.iter().copied()));
            }
        }
        false
    };
    let mut out = Vec::new();
    for t in ts.tasks() {
        if reaches(t.id, t.id, false) {
            out.push((t.id, "task lies on a precedence cycle".into()));
        }
        for &p in &t.predecessors {
            if reaches(t.id, p, true) {
                out.push((t.id, format!("precedence {p} -> {} is implied by others", t.id)));
            }
        }
    }
    out
}
