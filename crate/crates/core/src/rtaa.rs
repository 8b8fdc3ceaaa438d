//! Restful task assignment: turns one task sequence into a schedule.
//!
//! Windowed tasks are first placed as late as possible (grouped by start
//! position, busiest positions first), leftovers and windowless tasks are
//! then placed as early as possible, and finally every idle stretch between
//! two duties is filled with a recharge trip, ground wait or hover.
//!
//! Placement feasibility projects the battery through the surrounding gaps
//! using the same plans that the final expansion emits, so the projection is
//! exact rather than optimistic.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{TaskId, TaskKind, UavId};
use crate::fragments::{OccupationLedger, TaskPlacement, TimeFragment};
use crate::map::{PosId, UNREACHABLE};
use crate::problem::Instance;
use crate::schedule::{Action, ActionKind, Schedule, UavTimeline};
use crate::timeline::{run_task, task_need, GapPlan, UNMEETABLE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RtaaError {
    #[error("no feasible schedule for this sequence")]
    NoSchedule,
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("battery of UAV {0} cannot be kept above reserve")]
    InfeasibleEnergy(UavId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slotted {
    task: usize,
    start: i64,
    end: i64,
}

#[derive(Debug, Clone, Default)]
struct Line {
    items: Vec<Slotted>,
    /// Battery level right after each task.
    level_after: Vec<i64>,
    /// Least level at the start of each task that keeps the rest feasible.
    need_before: Vec<i64>,
}

/// State of one schedule construction.
#[derive(Debug, Clone)]
pub struct Construction<'i, 'a> {
    inst: &'i Instance<'a>,
    ledger: OccupationLedger,
    lines: Vec<Line>,
    placed: Vec<Option<(usize, i64)>>,
    diameter: i64,
}

impl<'i, 'a> Construction<'i, 'a> {
    pub fn new(inst: &'i Instance<'a>) -> Self {
        let map = inst.map;
        let n = map.len();
        let mut diameter = 0;
        for a in 0..n {
            for b in 0..n {
                let d = map.travel(PosId(a as u32), PosId(b as u32));
                if d < UNREACHABLE {
                    diameter = diameter.max(d);
                }
            }
        }
        Construction {
            inst,
            ledger: OccupationLedger::new(inst.fleet.iter().map(|u| u.id), map.stations()),
            lines: vec![Line::default(); inst.fleet.len()],
            placed: vec![None; inst.tasks.len()],
            diameter,
        }
    }

    pub fn ledger(&self) -> &OccupationLedger {
        &self.ledger
    }

    /// UAV and start time of a placed task.
    pub fn placement(&self, task: TaskId) -> Option<(UavId, i64)> {
        let ti = self.inst.tasks.index_of(task)?;
        self.placed[ti].map(|(u, s)| (self.inst.fleet[u].id, s))
    }

    /// Placed tasks of a UAV as `(task, start, end)` in time order.
    pub fn line(&self, uav: UavId) -> Vec<(TaskId, i64, i64)> {
        self.inst
            .uav_index(uav)
            .map(|u| {
                self.lines[u]
                    .items
                    .iter()
                    .map(|it| (self.inst.task(it.task).id, it.start, it.end))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn end_of(&self, ti: usize) -> Option<i64> {
        self.placed[ti].map(|(_, s)| s + self.inst.task(ti).processing)
    }

    /// UAVs ordered by preference for `task`: least loaded first, then the
    /// executor of its earliest placed successor, then the executor of its
    /// latest placed predecessor in front.
    pub fn preferred_uavs(&self, task: TaskId) -> Vec<UavId> {
        let inst = self.inst;
        let Some(ti) = inst.tasks.index_of(task) else {
            return inst.fleet.iter().map(|u| u.id).collect();
        };
        let mut order: Vec<usize> = (0..inst.fleet.len()).collect();
        order.sort_by_key(|&u| {
            let id = inst.fleet[u].id;
            (self.ledger.workload(id).unwrap_or(0), id)
        });
        let after = inst
            .tasks
            .succs_idx(ti)
            .iter()
            .filter_map(|&j| self.placed[j].map(|(u, s)| (s, inst.task(j).id, u)))
            .min()
            .map(|(_, _, u)| u);
        let before = inst
            .tasks
            .preds_idx(ti)
            .iter()
            .filter_map(|&j| self.end_of(j).map(|e| (e, Reverse(inst.task(j).id), self.placed[j].unwrap().0)))
            .max()
            .map(|(_, _, u)| u);
        for u in [after, before].into_iter().flatten() {
            if let Some(p) = order.iter().position(|&x| x == u) {
                let u = order.remove(p);
                order.insert(0, u);
            }
        }
        order.into_iter().map(|u| inst.fleet[u].id).collect()
    }

    /// Start-time bounds from the window and placed precedence relatives;
    /// the upper bound is `None` for windowless tasks without placed successors.
    fn bounds(&self, ti: usize) -> (i64, Option<i64>) {
        let inst = self.inst;
        let t = inst.task(ti);
        let mut lo = t.window.map_or(0, |w| w.release);
        let mut hi = t.window.map(|w| w.due - t.processing);
        for &p in inst.tasks.cumulative_preds_idx(ti) {
            if let Some(e) = self.end_of(p) {
                lo = lo.max(e);
            }
        }
        for &s in inst.tasks.cumulative_succs_idx(ti) {
            if let Some((_, start)) = self.placed[s] {
                let cap = start - t.processing;
                hi = Some(hi.map_or(cap, |h| h.min(cap)));
            }
        }
        (lo, hi)
    }

    /// Inclusive start-time intervals within `[lo, hi]` whose position
    /// occupations clash with nothing already committed.
    fn free_starts(&self, ti: usize, lo: i64, hi: i64) -> Vec<(i64, i64)> {
        if lo > hi {
            return Vec::new();
        }
        let t = self.inst.task(ti);
        let mut blocked: Vec<TimeFragment> = Vec::new();
        for &(pos, o1, o2) in &t.spans {
            if self.inst.map.is_station(pos) {
                continue;
            }
            for (f, _) in self.ledger.position_entries(pos) {
                blocked.push(TimeFragment::new(f.start - o2 + 1, f.end - o1));
            }
        }
        blocked.sort();
        let mut merged: Vec<TimeFragment> = Vec::with_capacity(blocked.len());
        for f in blocked {
            match merged.last_mut() {
                Some(last) if f.start <= last.end => last.end = last.end.max(f.end),
                _ => merged.push(f),
            }
        }
        crate::fragments::trim_occupied_time_range(TimeFragment::new(lo, hi + 1), &merged)
            .into_iter()
            .map(|f| (f.start, f.end - 1))
            .collect()
    }

    /// Departure point, time and level of the gap before slot `k`.
    fn before_slot(&self, u: usize, k: usize) -> (PosId, i64, i64) {
        if k == 0 {
            (self.inst.home(u), 0, self.inst.battery(u).capacity)
        } else {
            let it = self.lines[u].items[k - 1];
            (self.inst.task(it.task).end, it.end, self.lines[u].level_after[k - 1])
        }
    }

    /// Start times allowed in slot `k` by travel alone.
    fn slot_range(&self, u: usize, k: usize, ti: usize) -> (i64, Option<i64>) {
        let map = self.inst.map;
        let t = self.inst.task(ti);
        let (p, t0, _) = self.before_slot(u, k);
        let lo = t0 + map.travel(p, t.start);
        let hi = self.lines[u].items.get(k).map(|n| {
            let d = map.travel(t.end, self.inst.task(n.task).start);
            n.start - t.processing - d
        });
        (lo, hi)
    }

    /// Smallest battery margin over the placement of `ti` at `s` in slot
    /// `k`, or `None` when travel times rule it out.
    fn margin_at(&self, u: usize, k: usize, ti: usize, s: i64) -> Option<i64> {
        let inst = self.inst;
        let map = inst.map;
        let bat = inst.battery(u);
        let t = inst.task(ti);
        let line = &self.lines[u];
        let (p, t0, level) = self.before_slot(u, k);
        let r1 = GapPlan::new(map, bat, p, t0, t.start, s)?.forward(map, bat, level);
        let r2 = run_task(map, bat, r1.level, t.processing, t.end);
        let mut m = r1.margin.min(r2.margin);
        if let Some(n) = line.items.get(k) {
            let next = inst.task(n.task);
            let r3 = GapPlan::new(map, bat, t.end, s + t.processing, next.start, n.start)?.forward(map, bat, r2.level);
            m = m.min(r3.margin).min(r3.level - line.need_before[k]);
        }
        Some(m)
    }

    /// Splits `[lo, hi]` where either surrounding gap switches plan, so the
    /// margin is concave on every piece.
    fn pieces(&self, u: usize, k: usize, ti: usize, lo: i64, hi: i64) -> Vec<(i64, i64)> {
        let inst = self.inst;
        let map = inst.map;
        let t = inst.task(ti);
        let min_r = inst.energy.min_recharge;
        let mut cuts = Vec::new();
        let (p, t0, _) = self.before_slot(u, k);
        if let Some((h, c1)) = map.nearest_station(p) {
            let c2 = map.travel(h, t.start);
            if c2 < UNREACHABLE {
                cuts.push(t0 + c1 + c2 + min_r);
            }
        }
        if let Some(n) = self.lines[u].items.get(k) {
            if let Some((h, c1)) = map.nearest_station(t.end) {
                let c2 = map.travel(h, inst.task(n.task).start);
                if c2 < UNREACHABLE {
                    cuts.push(n.start - t.processing - c1 - c2 - min_r + 1);
                }
            }
        }
        cuts.sort_unstable();
        let mut out = Vec::new();
        let mut a = lo;
        for c in cuts {
            if c > a && c <= hi {
                out.push((a, c - 1));
                a = c;
            }
        }
        out.push((a, hi));
        out
    }

    /// Every candidate interval for `ti` on UAV `u`, ascending, with its slot.
    fn candidates(&self, u: usize, ti: usize, lo: i64, hi: i64, free: &[(i64, i64)], slots: impl Iterator<Item = usize>) -> Vec<(usize, i64, i64)> {
        let mut out = Vec::new();
        for k in slots {
            let (a, b) = self.slot_range(u, k, ti);
            let a = a.max(lo);
            let b = b.map_or(hi, |b| b.min(hi));
            if a > b {
                continue;
            }
            for &(fa, fb) in free {
                let (x, y) = (fa.max(a), fb.min(b));
                if x > y {
                    continue;
                }
                for (px, py) in self.pieces(u, k, ti, x, y) {
                    out.push((k, px, py));
                }
            }
        }
        out
    }

    /// Backward placement: latest feasible start on the first preferred UAV
    /// that admits one.
    pub fn bfpa_assign(&mut self, task: TaskId, prefs: &[UavId]) -> bool {
        let Some(ti) = self.inst.tasks.index_of(task) else { return false };
        if self.placed[ti].is_some() || self.inst.task(ti).window.is_none() {
            return false;
        }
        let (lo, Some(hi)) = self.bounds(ti) else { return false };
        let free = self.free_starts(ti, lo, hi);
        if free.is_empty() {
            return false;
        }
        for &uav in prefs {
            let Some(u) = self.inst.uav_index(uav) else { continue };
            let n = self.lines[u].items.len();
            let cands = self.candidates(u, ti, lo, hi, &free, 0..=n);
            for &(k, a, b) in cands.iter().rev() {
                let f = |s: i64| self.margin_at(u, k, ti, s).unwrap_or(i64::MIN / 2);
                if let Some(s) = latest_nonnegative(a, b, f) {
                    return self.commit(u, k, ti, s);
                }
            }
        }
        false
    }

    /// Forward placement: earliest feasible start in the idle stretch left of
    /// any placed task, else after the last task of a preferred UAV.
    pub fn ffpa_assign(&mut self, task: TaskId, prefs: &[UavId]) -> bool {
        let Some(ti) = self.inst.tasks.index_of(task) else { return false };
        if self.placed[ti].is_some() {
            return false;
        }
        let inst = self.inst;
        let (lo, hi) = self.bounds(ti);
        let hi = hi.unwrap_or_else(|| {
            let last_end = self
                .lines
                .iter()
                .filter_map(|l| l.items.last().map(|it| it.end))
                .max()
                .unwrap_or(0);
            lo.max(last_end).max(self.ledger.latest_position_end())
                + 2 * self.diameter
                + inst.energy.full_recharge
                + inst.energy.min_recharge
        });
        let free = self.free_starts(ti, lo, hi);
        if free.is_empty() {
            return false;
        }
        let uavs: Vec<usize> = prefs.iter().filter_map(|&id| inst.uav_index(id)).collect();
        for &u in &uavs {
            let n = self.lines[u].items.len();
            for k in 0..n {
                for (_, a, b) in self.candidates(u, ti, lo, hi, &free, std::iter::once(k)) {
                    let f = |s: i64| self.margin_at(u, k, ti, s).unwrap_or(i64::MIN / 2);
                    if let Some(s) = earliest_nonnegative(a, b, f) {
                        return self.commit(u, k, ti, s);
                    }
                }
            }
        }
        for &u in &uavs {
            let k = self.lines[u].items.len();
            for (_, a, b) in self.candidates(u, ti, lo, hi, &free, std::iter::once(k)) {
                let f = |s: i64| self.margin_at(u, k, ti, s).unwrap_or(i64::MIN / 2);
                if let Some(s) = earliest_nonnegative(a, b, f) {
                    return self.commit(u, k, ti, s);
                }
            }
        }
        false
    }

    /// Whether `task` could be committed on `uav` starting at `s`, checked
    /// directly without any interval search.
    pub fn is_feasible_start(&self, uav: UavId, task: TaskId, s: i64) -> bool {
        let (Some(u), Some(ti)) = (self.inst.uav_index(uav), self.inst.tasks.index_of(task)) else {
            return false;
        };
        if self.placed[ti].is_some() {
            return false;
        }
        let (lo, hi) = self.bounds(ti);
        if s < lo || hi.is_some_and(|h| s > h) {
            return false;
        }
        let t = self.inst.task(ti);
        for &(pos, o1, o2) in &t.spans {
            if self.inst.map.is_station(pos) {
                continue;
            }
            let mine = TimeFragment::new(s + o1, s + o2);
            if self.ledger.position_entries(pos).iter().any(|(f, _)| f.overlaps(&mine)) {
                return false;
            }
        }
        let k = self.lines[u].items.partition_point(|it| it.start < s);
        self.margin_at(u, k, ti, s).is_some_and(|m| m >= 0)
    }

    fn commit(&mut self, u: usize, k: usize, ti: usize, s: i64) -> bool {
        let inst = self.inst;
        let map = inst.map;
        let t = inst.task(ti).clone();
        let (p, _, _) = self.before_slot(u, k);
        let d_in = map.travel(p, t.start);
        let outbound = self.lines[u].items.get(k).map(|n| {
            let next = inst.task(n.task);
            let d = map.travel(t.end, next.start);
            (t.end, next.start, TimeFragment::new(n.start - d, n.start), next.id)
        });
        let placement = TaskPlacement {
            task: t.id,
            execution: TimeFragment::new(s, s + t.processing),
            positions: t
                .spans
                .iter()
                .map(|&(pos, o1, o2)| (pos, TimeFragment::new(s + o1, s + o2)))
                .collect(),
            inbound: Some((p, t.start, TimeFragment::new(s - d_in, s))),
            outbound,
        };
        if self.ledger.commit(inst.fleet[u].id, &placement).is_err() {
            return false;
        }
        self.lines[u].items.insert(
            k,
            Slotted {
                task: ti,
                start: s,
                end: s + t.processing,
            },
        );
        self.placed[ti] = Some((u, s));
        self.refresh(u);
        true
    }

    /// Recomputes the battery caches of one UAV.
    fn refresh(&mut self, u: usize) {
        let inst = self.inst;
        let map = inst.map;
        let bat = *inst.battery(u);
        let home = inst.home(u);
        let line = &mut self.lines[u];
        let n = line.items.len();
        line.level_after.clear();
        let (mut pos, mut t, mut level) = (home, 0, bat.capacity);
        for it in &line.items {
            let task = inst.task(it.task);
            if let Some(plan) = GapPlan::new(map, &bat, pos, t, task.start, it.start) {
                level = plan.forward(map, &bat, level).level;
            } else {
                level = -UNMEETABLE;
            }
            level -= task.processing * bat.drain;
            line.level_after.push(level);
            pos = task.end;
            t = it.end;
        }
        line.need_before = vec![UNMEETABLE; n];
        let mut target = 0;
        for k in (0..n).rev() {
            let it = line.items[k];
            let task = inst.task(it.task);
            if k + 1 < n {
                let nx = line.items[k + 1];
                target = match GapPlan::new(map, &bat, task.end, it.end, inst.task(nx.task).start, nx.start) {
                    Some(plan) => plan.need(map, &bat, line.need_before[k + 1]),
                    None => UNMEETABLE,
                };
            }
            line.need_before[k] = task_need(map, &bat, target, task.processing, task.start, task.end);
        }
    }

    /// Expands every idle stretch into concrete actions and returns the
    /// finished schedule.
    pub fn insert_support_actions(&self) -> Result<Schedule, RtaaError> {
        let lines: Vec<Vec<(usize, i64)>> = self
            .lines
            .iter()
            .map(|l| l.items.iter().map(|it| (it.task, it.start)).collect())
            .collect();
        realize(self.inst, &lines)
    }
}

/// Builds the schedule in which UAV `u` executes `lines[u]`, given as
/// `(task index, start)` in time order, filling every gap with its plan.
pub fn realize(inst: &Instance, lines: &[Vec<(usize, i64)>]) -> Result<Schedule, RtaaError> {
    let map = inst.map;
    let mut total = 0;
    let mut uavs = Vec::with_capacity(inst.fleet.len());
    for (u, spec) in inst.fleet.iter().enumerate() {
        let bat = inst.battery(u);
        let (mut pos, mut t, mut level) = (inst.home(u), 0, bat.capacity);
        let mut actions = Vec::new();
        for &(ti, start) in lines.get(u).map(Vec::as_slice).unwrap_or(&[]) {
            let task = inst.task(ti);
            let plan = GapPlan::new(map, bat, pos, t, task.start, start).ok_or(RtaaError::InfeasibleEnergy(spec.id))?;
            let run = plan.forward(map, bat, level);
            if run.margin < 0 {
                return Err(RtaaError::InfeasibleEnergy(spec.id));
            }
            actions.extend(plan.actions(bat, level));
            total += plan.cost();
            let done = run_task(map, bat, run.level, task.processing, task.end);
            if done.margin < 0 {
                return Err(RtaaError::InfeasibleEnergy(spec.id));
            }
            let frag = TimeFragment::new(start, start + task.processing);
            actions.push(match task.kind {
                TaskKind::Inspection => Action::stationary(ActionKind::PerformInspection, frag, task.start, Some(task.id)),
                TaskKind::MaterialHandling => {
                    Action::moving(ActionKind::PerformMaterialHandling, frag, task.start, task.end, Some(task.id))
                }
            });
            total += task.processing;
            level = done.level;
            pos = task.end;
            t = frag.end;
        }
        uavs.push(UavTimeline { uav: spec.id, actions });
    }
    Ok(Schedule { uavs, energy: total })
}

/// Largest `s` in `[lo, hi]` with `f(s) >= 0`, for `f` concave.
pub(crate) fn latest_nonnegative(lo: i64, hi: i64, f: impl Fn(i64) -> i64) -> Option<i64> {
    if f(hi) >= 0 {
        return Some(hi);
    }
    let (peak, best) = concave_peak(lo, hi, &f);
    if best < 0 {
        return None;
    }
    let (mut good, mut bad) = (peak, hi);
    while bad - good > 1 {
        let mid = good + (bad - good) / 2;
        if f(mid) >= 0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// Smallest `s` in `[lo, hi]` with `f(s) >= 0`, for `f` concave.
pub(crate) fn earliest_nonnegative(lo: i64, hi: i64, f: impl Fn(i64) -> i64) -> Option<i64> {
    if f(lo) >= 0 {
        return Some(lo);
    }
    let (peak, best) = concave_peak(lo, hi, &f);
    if best < 0 {
        return None;
    }
    let (mut bad, mut good) = (lo, peak);
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if f(mid) >= 0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Some(good)
}

/// A maximizer of a concave integer function on `[lo, hi]` and its value.
fn concave_peak(mut lo: i64, mut hi: i64, f: &impl Fn(i64) -> i64) -> (i64, i64) {
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        let (f1, f2) = (f(m1), f(m2));
        if f1 < f2 {
            lo = m1 + 1;
        } else if f1 > f2 {
            hi = m2 - 1;
        } else {
            lo = m1;
            hi = m2;
        }
    }
    (lo..=hi).map(|s| (f(s), Reverse(s))).max().map(|(v, Reverse(s))| (s, v)).unwrap()
}

/// Schedules `seq`, a permutation of all task ids.
pub fn schedule_sequence(inst: &Instance, seq: &[TaskId]) -> Result<Schedule, RtaaError> {
    let order = sequence_indices(inst, seq)?;
    let mut c = Construction::new(inst);

    let mut load: BTreeMap<PosId, i64> = BTreeMap::new();
    for t in inst.resolved() {
        *load.entry(t.start).or_insert(0) += t.processing;
    }
    let mut ranked: Vec<(PosId, i64)> = load.into_iter().collect();
    ranked.sort_by_key(|&(p, l)| (Reverse(l), p));

    let mut done = vec![false; order.len()];
    for (pos, _) in ranked {
        for &ti in &order {
            let t = inst.task(ti);
            if t.start != pos || t.window.is_none() {
                continue;
            }
            let prefs = c.preferred_uavs(t.id);
            done[ti] = c.bfpa_assign(t.id, &prefs);
        }
    }
    for &ti in &order {
        if done[ti] {
            continue;
        }
        let id = inst.task(ti).id;
        let prefs = c.preferred_uavs(id);
        if !c.ffpa_assign(id, &prefs) {
            return Err(RtaaError::NoSchedule);
        }
    }
    c.insert_support_actions()
}

fn sequence_indices(inst: &Instance, seq: &[TaskId]) -> Result<Vec<usize>, RtaaError> {
    let n = inst.tasks.len();
    if seq.len() != n {
        return Err(RtaaError::InvalidSequence(format!("expected {n} tasks, got {}", seq.len())));
    }
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for id in seq {
        let ti = inst
            .tasks
            .index_of(*id)
            .ok_or_else(|| RtaaError::InvalidSequence(format!("unknown task {id}")))?;
        if std::mem::replace(&mut seen[ti], true) {
            return Err(RtaaError::InvalidSequence(format!("task {id} repeated")));
        }
        out.push(ti);
    }
    Ok(out)
}
