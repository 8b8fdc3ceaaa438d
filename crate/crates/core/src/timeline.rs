//! Integer battery bookkeeping and the deterministic plans used to fill the
//! time between two consecutive duties of a UAV.
//!
//! Battery levels are counted in units of `1/full_recharge` battery-seconds,
//! so flying costs `full_recharge` units per second and charging adds
//! `capacity` units per second without any rounding.

use crate::domain::EnergyModel;
use crate::fragments::TimeFragment;
use crate::map::{MapGraph, PosId, UNREACHABLE};
use crate::schedule::{Action, ActionKind};

/// Level requirement that can never be met.
pub const UNMEETABLE: i64 = i64::MAX / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Battery {
    /// Units in a full battery.
    pub capacity: i64,
    /// Units spent per second aloft.
    pub drain: i64,
    /// Units gained per second on a charger.
    pub charge: i64,
    pub min_recharge: i64,
}

impl Battery {
    pub fn new(capacity_seconds: i64, energy: &EnergyModel) -> Self {
        Battery {
            capacity: capacity_seconds * energy.full_recharge,
            drain: energy.full_recharge,
            charge: capacity_seconds,
            min_recharge: energy.min_recharge,
        }
    }

    /// Lowest level allowed at `pos`: enough to reach the nearest station,
    /// and never empty.
    pub fn floor(&self, map: &MapGraph, pos: PosId) -> i64 {
        (map.reserve(pos) * self.drain).max(1)
    }

    pub fn to_seconds(&self, units: i64) -> f64 {
        units as f64 / self.drain as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMode {
    /// Fly to the station nearest the departure point, charge, fly on.
    Recharge { station: PosId, to_station: i64, from_station: i64 },
    /// Departure point is a station: stay on the ground, then fly.
    Ground,
    /// Hover at the departure point, then fly.
    Hover,
}

/// How a UAV spends `[t0, t1)` moving from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapPlan {
    pub from: PosId,
    pub to: PosId,
    pub t0: i64,
    pub t1: i64,
    pub direct: i64,
    pub mode: GapMode,
}

/// Outcome of running a plan forward from a given level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapRun {
    pub level: i64,
    /// Smallest excess over the allowed floor at any boundary inside the
    /// gap, including arrival; negative means infeasible.
    pub margin: i64,
}

impl GapPlan {
    /// `None` when the gap is too short for the direct flight or the
    /// destination is unreachable.
    pub fn new(map: &MapGraph, battery: &Battery, from: PosId, t0: i64, to: PosId, t1: i64) -> Option<GapPlan> {
        let direct = map.travel(from, to);
        let len = t1 - t0;
        if direct >= UNREACHABLE || len < direct {
            return None;
        }
        let mode = match map.nearest_station(from) {
            Some((station, to_station)) => {
                let from_station = map.travel(station, to);
                if from_station < UNREACHABLE && len - to_station - from_station >= battery.min_recharge {
                    GapMode::Recharge {
                        station,
                        to_station,
                        from_station,
                    }
                } else if map.is_station(from) {
                    GapMode::Ground
                } else {
                    GapMode::Hover
                }
            }
            None => GapMode::Hover,
        };
        Some(GapPlan {
            from,
            to,
            t0,
            t1,
            direct,
            mode,
        })
    }

    pub fn len(&self) -> i64 {
        self.t1 - self.t0
    }

    pub fn is_empty(&self) -> bool {
        self.t1 == self.t0
    }

    /// Seconds of battery-consuming activity.
    pub fn cost(&self) -> i64 {
        match self.mode {
            GapMode::Recharge {
                to_station,
                from_station,
                ..
            } => to_station + from_station,
            GapMode::Ground => self.direct,
            GapMode::Hover => self.len(),
        }
    }

    fn usable(&self) -> i64 {
        match self.mode {
            GapMode::Recharge {
                to_station,
                from_station,
                ..
            } => self.len() - to_station - from_station,
            _ => 0,
        }
    }

    pub fn forward(&self, map: &MapGraph, battery: &Battery, level: i64) -> GapRun {
        let arrive_floor = battery.floor(map, self.to);
        match self.mode {
            GapMode::Recharge {
                to_station,
                from_station,
                ..
            } => {
                let landed = level - to_station * battery.drain;
                let charged = (landed + battery.charge * self.usable()).min(battery.capacity);
                let end = charged - from_station * battery.drain;
                GapRun {
                    level: end,
                    margin: (landed - 1).min(end - arrive_floor),
                }
            }
            GapMode::Ground => {
                let end = level - self.direct * battery.drain;
                GapRun {
                    level: end,
                    margin: end - arrive_floor,
                }
            }
            GapMode::Hover => {
                let hovered = level - (self.len() - self.direct) * battery.drain;
                let end = level - self.len() * battery.drain;
                GapRun {
                    level: end,
                    margin: (hovered - battery.floor(map, self.from)).min(end - arrive_floor),
                }
            }
        }
    }

    /// Least level at departure for which the plan succeeds and arrives with
    /// at least `target`.
    pub fn need(&self, map: &MapGraph, battery: &Battery, target: i64) -> i64 {
        if target >= UNMEETABLE {
            return UNMEETABLE;
        }
        let target = target.max(battery.floor(map, self.to));
        let depart_floor = battery.floor(map, self.from);
        let need = match self.mode {
            GapMode::Recharge {
                to_station,
                from_station,
                ..
            } => {
                if battery.capacity - from_station * battery.drain < target {
                    return UNMEETABLE;
                }
                (target + (to_station + from_station) * battery.drain - battery.charge * self.usable())
                    .max(to_station * battery.drain + 1)
            }
            GapMode::Ground => target + self.direct * battery.drain,
            GapMode::Hover => {
                (target + self.len() * battery.drain).max(depart_floor + (self.len() - self.direct) * battery.drain)
            }
        };
        need.max(depart_floor)
    }

    /// The concrete actions realizing this plan when departing with `level`.
    pub fn actions(&self, battery: &Battery, level: i64) -> Vec<Action> {
        let mut out = Vec::new();
        let fly = |from: PosId, to: PosId, start: i64, end: i64, out: &mut Vec<Action>| {
            if end > start {
                out.push(Action::moving(ActionKind::FlyTo, TimeFragment::new(start, end), from, to, None));
            }
        };
        let stay = |kind: ActionKind, at: PosId, start: i64, end: i64, out: &mut Vec<Action>| {
            if end > start {
                out.push(Action::stationary(kind, TimeFragment::new(start, end), at, None));
            }
        };
        match self.mode {
            GapMode::Recharge {
                station,
                to_station,
                from_station,
            } => {
                let landed_at = self.t0 + to_station;
                let leave_at = self.t1 - from_station;
                fly(self.from, station, self.t0, landed_at, &mut out);
                let landed = level - to_station * battery.drain;
                let deficit = battery.capacity - landed;
                let mut cursor = landed_at;
                if deficit > 0 {
                    let full = (deficit + battery.charge - 1) / battery.charge;
                    let charge_for = full.max(battery.min_recharge).min(self.usable());
                    stay(ActionKind::Recharge, station, cursor, cursor + charge_for, &mut out);
                    cursor += charge_for;
                }
                stay(ActionKind::WaitOnGround, station, cursor, leave_at, &mut out);
                fly(station, self.to, leave_at, self.t1, &mut out);
            }
            GapMode::Ground => {
                stay(ActionKind::WaitOnGround, self.from, self.t0, self.t1 - self.direct, &mut out);
                fly(self.from, self.to, self.t1 - self.direct, self.t1, &mut out);
            }
            GapMode::Hover => {
                stay(ActionKind::Hover, self.from, self.t0, self.t1 - self.direct, &mut out);
                fly(self.from, self.to, self.t1 - self.direct, self.t1, &mut out);
            }
        }
        out
    }
}

/// Battery effect of executing a task of `processing` seconds from `start`
/// to `end`: returns (level after, margin at completion).
pub fn run_task(map: &MapGraph, battery: &Battery, level: i64, processing: i64, end: PosId) -> GapRun {
    let after = level - processing * battery.drain;
    GapRun {
        level: after,
        margin: after - battery.floor(map, end),
    }
}

/// Least level at task start so that `target` remains afterwards.
pub fn task_need(map: &MapGraph, battery: &Battery, target: i64, processing: i64, start: PosId, end: PosId) -> i64 {
    if target >= UNMEETABLE {
        return UNMEETABLE;
    }
    (target.max(battery.floor(map, end)) + processing * battery.drain).max(battery.floor(map, start))
}
