#![allow(dead_code)]

use uavsched::map::{EdgeDoc, MapDocument, PositionDoc};
use uavsched::fragments::TimeFragment;
use uavsched::schedule::UavTimeline;
use uavsched::{energy_of, Action, ActionKind, MapGraph, PosId, Schedule, Task, TaskId, TimeWindow, UavId};

/// Map from `(label, is_station)` and `(from, to, seconds)` edges.
pub fn map_of(positions: &[(&str, bool)], edges: &[(&str, &str, i64)]) -> MapGraph {
    MapGraph::from_document(&MapDocument {
        bounds: None,
        speed: None,
        scale: None,
        positions: positions
            .iter()
            .enumerate()
            .map(|(i, &(id, recharge))| PositionDoc {
                id: id.into(),
                x: i as f64,
                y: 0.0,
                z: 0.0,
                recharge,
            })
            .collect(),
        edges: edges
            .iter()
            .map(|&(from, to, t)| EdgeDoc {
                from: from.into(),
                to: to.into(),
                time: Some(t),
            })
            .collect(),
    })
    .unwrap()
}

/// Station `r` and work position `p`, 20 s apart both ways.
pub fn pair_map() -> MapGraph {
    map_of(&[("p", false), ("r", true)], &[("r", "p", 20), ("p", "r", 20)])
}

/// Station `r` and work positions `p`, `q`; every leg takes 20 s.
pub fn trio_map() -> MapGraph {
    let legs = [("r", "p"), ("p", "r"), ("r", "q"), ("q", "r"), ("p", "q"), ("q", "p")];
    let edges: Vec<(&str, &str, i64)> = legs.iter().map(|&(a, b)| (a, b, 20)).collect();
    map_of(&[("p", false), ("q", false), ("r", true)], &edges)
}

pub fn inspection(id: u32, at: &str, window: Option<(i64, i64)>, preds: &[u32]) -> Task {
    Task {
        id: TaskId(id),
        start: at.into(),
        end: at.into(),
        processing: 10,
        window: window.map(|(release, due)| TimeWindow { release, due }),
        predecessors: preds.iter().map(|&p| TaskId(p)).collect(),
    }
}

pub fn ids(s: &str) -> Vec<TaskId> {
    s.split_whitespace().map(|x| TaskId(x.parse().unwrap())).collect()
}

/// Stations `r`, `s` and work positions `p`, `q`; every leg takes 20 s.
pub fn quad_map() -> MapGraph {
    let names = ["p", "q", "r", "s"];
    let mut edges = Vec::new();
    for a in names {
        for b in names {
            if a != b {
                edges.push((a, b, 20));
            }
        }
    }
    map_of(&[("p", false), ("q", false), ("r", true), ("s", true)], &edges)
}

/// Builds one UAV timeline action by action from time zero.
pub struct Line<'m> {
    map: &'m MapGraph,
    uav: UavId,
    at: PosId,
    t: i64,
    actions: Vec<Action>,
}

impl<'m> Line<'m> {
    pub fn new(map: &'m MapGraph, uav: u32, home: &str) -> Self {
        Line {
            map,
            uav: UavId(uav),
            at: map.id(home).unwrap(),
            t: 0,
            actions: Vec::new(),
        }
    }

    fn still(mut self, kind: ActionKind, secs: i64, task: Option<TaskId>) -> Self {
        self.actions.push(Action::stationary(kind, TimeFragment::new(self.t, self.t + secs), self.at, task));
        self.t += secs;
        self
    }

    pub fn wait(self, secs: i64) -> Self {
        self.still(ActionKind::WaitOnGround, secs, None)
    }

    pub fn recharge(self, secs: i64) -> Self {
        self.still(ActionKind::Recharge, secs, None)
    }

    pub fn hover(self, secs: i64) -> Self {
        self.still(ActionKind::Hover, secs, None)
    }

    pub fn inspect(self, task: u32, secs: i64) -> Self {
        self.still(ActionKind::PerformInspection, secs, Some(TaskId(task)))
    }

    pub fn fly(mut self, to: &str) -> Self {
        let to = self.map.id(to).unwrap();
        let d = self.map.travel(self.at, to);
        self.actions.push(Action::moving(ActionKind::FlyTo, TimeFragment::new(self.t, self.t + d), self.at, to, None));
        self.t += d;
        self.at = to;
        self
    }

    pub fn done(self) -> UavTimeline {
        UavTimeline {
            uav: self.uav,
            actions: self.actions,
        }
    }
}

/// Schedule whose recorded energy matches its actions.
pub fn schedule(lines: Vec<UavTimeline>) -> Schedule {
    let mut s = Schedule { uavs: lines, energy: 0 };
    s.energy = energy_of(&s);
    s
}
