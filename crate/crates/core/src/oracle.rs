//! Exact minimum-energy schedules for desk-scale instances.
//!
//! The search covers every schedule built from the same gap plans the
//! heuristic emits: each task-to-UAV assignment, each per-UAV order that
//! respects precedence, each order of cross-UAV visits to a shared work
//! position, and for every gap the choice between a recharge trip and
//! staying aloft (or on the ground at a station). Within one such structure
//! the energy is linear in the integer start times, so the cheapest timing
//! is found by branch and bound over a small linear program. The result is
//! therefore never worse than any schedule the heuristic can produce on the
//! same instance.
//!
//! # Limits
//!
//! The enumeration grows factorially and is capped by [`OracleLimits`]
//! (six tasks and two UAVs by default, plus a wall-clock budget). This
//! module stands in for a commercial MILP solver as the exact baseline.
//! Runtimes of such a solver are not reproduced, and the timings of this
//! oracle are not comparable to them.

use std::cmp::Ordering as CmpOrdering;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, Variable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::TaskId;
use crate::map::{PosId, UNREACHABLE};
use crate::par::Execution;
use crate::problem::Instance;
use crate::rtaa::realize;
use crate::schedule::Schedule;
use crate::validator::validate_schedule;

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleLimits {
    pub max_tasks: usize,
    pub max_uavs: usize,
    pub time_budget: Duration,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_tasks: 6,
            max_uavs: 2,
            time_budget: Duration::from_secs(600),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance has {tasks} tasks and {uavs} UAVs, above the limits of {max_tasks} and {max_uavs}")]
    LimitExceeded {
        tasks: usize,
        uavs: usize,
        max_tasks: usize,
        max_uavs: usize,
    },
    /// The time budget ran out; `incumbent` is the best energy seen, with
    /// no optimality guarantee.
    #[error("time budget exhausted (best so far: {incumbent:?})")]
    Exhausted { incumbent: Option<i64> },
    #[error("instance has no feasible schedule")]
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub energy: i64,
    pub schedule: Schedule,
    /// Assignment, order and gap-mode combinations examined.
    pub structures: u64,
    /// Linear programs solved, branch and bound nodes included.
    pub lp_solves: u64,
    pub elapsed: Duration,
}

/// Cheap bound: every task costs its processing plus at least the shortest
/// approach from a station or from the end of another task.
pub fn energy_lower_bound(inst: &Instance) -> i64 {
    let map = inst.map;
    let tasks = inst.resolved();
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let from_station = map.stations().map(|h| map.travel(h, t.start)).min().unwrap_or(UNREACHABLE);
            let from_task = tasks
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, o)| map.travel(o.end, t.start))
                .min()
                .unwrap_or(UNREACHABLE);
            t.processing + from_station.min(from_task)
        })
        .sum()
}

/// Ranking key: energy, then per-UAV `(task, start)` lists.
type Key = (i64, Vec<Vec<(TaskId, i64)>>);

struct Found {
    key: Key,
    schedule: Schedule,
}

struct Shared {
    best: AtomicI64,
    expired: AtomicBool,
    structures: AtomicU64,
    lp_solves: AtomicU64,
    deadline: Instant,
}

impl Shared {
    fn out_of_time(&self) -> bool {
        if self.expired.load(Ordering::Relaxed) {
            return true;
        }
        if Instant::now() >= self.deadline {
            self.expired.store(true, Ordering::Relaxed);
            return true;
        }
        false
    }
}

/// Finds a minimum-energy schedule, exploring assignments in parallel when
/// `exec` allows.
pub fn brute_force_optimal(inst: &Instance, limits: &OracleLimits, exec: Execution) -> Result<OracleOutcome, OracleError> {
    let started = Instant::now();
    let n = inst.tasks.len();
    let k = inst.fleet.len();
    if n > limits.max_tasks || k > limits.max_uavs {
        return Err(OracleError::LimitExceeded {
            tasks: n,
            uavs: k,
            max_tasks: limits.max_tasks,
            max_uavs: limits.max_uavs,
        });
    }
    if n == 0 {
        let schedule = realize(inst, &[]).map_err(|_| OracleError::Infeasible)?;
        return Ok(OracleOutcome {
            energy: 0,
            schedule,
            structures: 1,
            lp_solves: 0,
            elapsed: started.elapsed(),
        });
    }
    if k == 0 {
        return Err(OracleError::Infeasible);
    }

    let shared = Shared {
        best: AtomicI64::new(i64::MAX),
        expired: AtomicBool::new(false),
        structures: AtomicU64::new(0),
        lp_solves: AtomicU64::new(0),
        deadline: started + limits.time_budget,
    };
    let partitions = ordered_partitions(inst, n, k);
    let results = exec.map(&partitions, |lines| solve_partition(inst, lines, &shared));
    let best = results.into_iter().flatten().min_by(|a, b| a.key.cmp(&b.key));

    if shared.expired.load(Ordering::Relaxed) {
        return Err(OracleError::Exhausted {
            incumbent: best.map(|f| f.key.0),
        });
    }
    let best = best.ok_or(OracleError::Infeasible)?;
    Ok(OracleOutcome {
        energy: best.key.0,
        schedule: best.schedule,
        structures: shared.structures.load(Ordering::Relaxed),
        lp_solves: shared.lp_solves.load(Ordering::Relaxed),
        elapsed: started.elapsed(),
    })
}

/// Every split of the tasks into `k` ordered lines in which no task comes
/// after one of its own successors.
fn ordered_partitions(inst: &Instance, n: usize, k: usize) -> Vec<Vec<Vec<usize>>> {
    let ts = inst.tasks;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    loop {
        let mut sizes = vec![0usize; k];
        compositions(n, 0, &mut sizes, &mut |sizes| {
            let mut lines = Vec::with_capacity(k);
            let mut at = 0;
            for &len in sizes {
                lines.push(perm[at..at + len].to_vec());
                at += len;
            }
            let consistent = lines.iter().all(|line: &Vec<usize>| {
                line.iter()
                    .enumerate()
                    .all(|(a, &ti)| line[a + 1..].iter().all(|&later| !ts.cumulative_preds_idx(ti).contains(&later)))
            });
            if consistent {
                out.push(lines);
            }
        });
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out
}

fn compositions(left: usize, slot: usize, sizes: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if slot + 1 == sizes.len() {
        sizes[slot] = left;
        f(sizes);
        return;
    }
    for take in 0..=left {
        sizes[slot] = take;
        compositions(left - take, slot + 1, sizes, f);
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a larger suffix element");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Linear form over start times: `Σ coef[i]·s_i + constant`.
#[derive(Debug, Clone, PartialEq)]
struct Lin {
    coef: Vec<f64>,
    constant: f64,
}

impl Lin {
    fn constant(n: usize, c: f64) -> Lin {
        Lin {
            coef: vec![0.0; n],
            constant: c,
        }
    }

    /// `s_next - s_prev - processing_prev`
    fn gap(n: usize, prev: usize, next: usize, processing: i64) -> Lin {
        let mut l = Lin::constant(n, -(processing as f64));
        l.coef[next] += 1.0;
        l.coef[prev] -= 1.0;
        l
    }

    fn plus(&self, other: &Lin, factor: f64) -> Lin {
        Lin {
            coef: self.coef.iter().zip(&other.coef).map(|(a, b)| a + factor * b).collect(),
            constant: self.constant + factor * other.constant,
        }
    }

    fn shift(&self, c: f64) -> Lin {
        Lin {
            coef: self.coef.clone(),
            constant: self.constant + c,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Recharge,
    Stay,
}

#[derive(Debug, Clone, Copy)]
struct Gap {
    prev: usize,
    next: usize,
    from: PosId,
    to: PosId,
    direct: i64,
    /// Round trip via the station nearest `from`, when one exists.
    via_station: Option<(i64, i64)>,
}

/// One disjunction: the span of `a` at a shared position either ends before
/// the span of `b` starts or the other way round.
#[derive(Debug, Clone, Copy)]
struct Clash {
    a: usize,
    a_span: (i64, i64),
    b: usize,
    b_span: (i64, i64),
}

struct Constraint {
    lhs: Lin,
    op: ComparisonOp,
    rhs: f64,
}

fn solve_partition(inst: &Instance, lines: &[Vec<usize>], shared: &Shared) -> Option<Found> {
    let map = inst.map;
    let n = inst.tasks.len();
    let min_recharge = inst.energy.min_recharge;

    let mut gaps: Vec<Vec<Gap>> = Vec::with_capacity(lines.len());
    for line in lines {
        let mut g = Vec::new();
        for w in line.windows(2) {
            let (from, to) = (inst.task(w[0]).end, inst.task(w[1]).start);
            let via_station = map.nearest_station(from).and_then(|(h, c1)| {
                let c2 = map.travel(h, to);
                (c2 < UNREACHABLE).then_some((c1, c2))
            });
            g.push(Gap {
                prev: w[0],
                next: w[1],
                from,
                to,
                direct: map.travel(from, to),
                via_station,
            });
        }
        gaps.push(g);
    }
    let flat_gaps: Vec<(usize, Gap)> = gaps.iter().enumerate().flat_map(|(u, g)| g.iter().map(move |&x| (u, x))).collect();

    let line_of: Vec<usize> = {
        let mut v = vec![0; n];
        for (u, line) in lines.iter().enumerate() {
            for &ti in line {
                v[ti] = u;
            }
        }
        v
    };
    let mut clashes = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if line_of[a] == line_of[b] {
                continue;
            }
            for &(pa, a0, a1) in &inst.task(a).spans {
                for &(pb, b0, b1) in &inst.task(b).spans {
                    if pa == pb && !map.is_station(pa) {
                        clashes.push(Clash {
                            a,
                            a_span: (a0, a1),
                            b,
                            b_span: (b0, b1),
                        });
                    }
                }
            }
        }
    }

    let fixed_cost: i64 = inst.resolved().iter().map(|t| t.processing).sum::<i64>()
        + lines
            .iter()
            .enumerate()
            .filter_map(|(u, line)| line.first().map(|&ti| map.travel(inst.home(u), inst.task(ti).start)))
            .sum::<i64>();

    let mut best: Option<Found> = None;
    let combos_modes = 1u64 << flat_gaps.len();
    let combos_clash = 1u64 << clashes.len();
    for mode_bits in 0..combos_modes {
        let modes: Vec<Mode> = (0..flat_gaps.len())
            .map(|g| if mode_bits >> g & 1 == 1 { Mode::Recharge } else { Mode::Stay })
            .collect();
        if flat_gaps.iter().zip(&modes).any(|((_, g), m)| matches!(m, Mode::Recharge) && g.via_station.is_none()) {
            continue;
        }
        let floor_cost: i64 = fixed_cost
            + flat_gaps
                .iter()
                .zip(&modes)
                .map(|((_, g), m)| match m {
                    Mode::Recharge => g.via_station.map_or(0, |(c1, c2)| c1 + c2),
                    Mode::Stay => g.direct,
                })
                .sum::<i64>();
        for clash_bits in 0..combos_clash {
            if shared.out_of_time() {
                return best;
            }
            if floor_cost > shared.best.load(Ordering::Relaxed) {
                break;
            }
            shared.structures.fetch_add(1, Ordering::Relaxed);
            let mut cons = structure_constraints(inst, lines, &gaps, &modes, min_recharge);
            for (c, clash) in clashes.iter().enumerate() {
                let mut l = Lin::constant(n, 0.0);
                let (first, first_span, second, second_span) = if clash_bits >> c & 1 == 0 {
                    (clash.a, clash.a_span, clash.b, clash.b_span)
                } else {
                    (clash.b, clash.b_span, clash.a, clash.a_span)
                };
                // second.start + second_span.0 >= first.start + first_span.1
                l.coef[second] += 1.0;
                l.coef[first] -= 1.0;
                cons.push(Constraint {
                    lhs: l,
                    op: ComparisonOp::Ge,
                    rhs: (first_span.1 - second_span.0) as f64,
                });
            }
            let mut objective = Lin::constant(n, 0.0);
            let mut constant = fixed_cost as f64;
            for ((_, g), m) in flat_gaps.iter().zip(&modes) {
                constant += match m {
                    Mode::Recharge => g.via_station.map_or(0, |(c1, c2)| c1 + c2) as f64,
                    Mode::Stay if map.is_station(g.from) => g.direct as f64,
                    Mode::Stay => {
                        let len = Lin::gap(n, g.prev, g.next, inst.task(g.prev).processing);
                        objective = objective.plus(&len, 1.0);
                        0.0
                    }
                };
            }
            constant += objective.constant;
            if let Some(found) = branch_and_bound(inst, lines, &objective.coef, constant, &cons, shared) {
                if best.as_ref().is_none_or(|b| found.key < b.key) {
                    shared.best.fetch_min(found.key.0, Ordering::Relaxed);
                    best = Some(found);
                }
            }
        }
    }
    best
}

/// Window, precedence, gap-length and battery constraints for one structure.
fn structure_constraints(inst: &Instance, lines: &[Vec<usize>], gaps: &[Vec<Gap>], modes: &[Mode], min_recharge: i64) -> Vec<Constraint> {
    let map = inst.map;
    let n = inst.tasks.len();
    let mut cons = Vec::new();
    let var = |i: usize| {
        let mut l = Lin::constant(n, 0.0);
        l.coef[i] = 1.0;
        l
    };
    for (i, t) in inst.resolved().iter().enumerate() {
        if let Some(w) = t.window {
            cons.push(Constraint {
                lhs: var(i),
                op: ComparisonOp::Ge,
                rhs: w.release as f64,
            });
            cons.push(Constraint {
                lhs: var(i),
                op: ComparisonOp::Le,
                rhs: (w.due - t.processing) as f64,
            });
        }
        for &p in inst.tasks.preds_idx(i) {
            cons.push(Constraint {
                lhs: var(i).plus(&var(p), -1.0),
                op: ComparisonOp::Ge,
                rhs: inst.task(p).processing as f64,
            });
        }
    }

    let mut mode_iter = modes.iter();
    for (u, line) in lines.iter().enumerate() {
        let Some(&first) = line.first() else { continue };
        let bat = inst.battery(u);
        let drain = bat.drain as f64;
        let rate = bat.charge as f64 / drain;
        let floor = |p: PosId| bat.floor(map, p) as f64 / drain;
        let at_least = |level: &[Lin], bound: f64, cons: &mut Vec<Constraint>| {
            for l in level {
                cons.push(Constraint {
                    lhs: Lin {
                        coef: l.coef.clone(),
                        constant: 0.0,
                    },
                    op: ComparisonOp::Ge,
                    rhs: bound - l.constant,
                });
            }
        };

        let approach = map.travel(inst.home(u), inst.task(first).start);
        cons.push(Constraint {
            lhs: var(first),
            op: ComparisonOp::Ge,
            rhs: approach as f64,
        });
        // level is the minimum of these forms, in battery-seconds
        let mut level = vec![Lin::constant(n, bat.capacity as f64 / drain - approach as f64)];
        at_least(&level, floor(inst.task(first).start), &mut cons);

        for (k, &ti) in line.iter().enumerate() {
            let t = inst.task(ti);
            level = level.iter().map(|l| l.shift(-(t.processing as f64))).collect();
            at_least(&level, floor(t.end), &mut cons);
            if k + 1 == line.len() {
                break;
            }
            let g = gaps[u][k];
            let len = Lin::gap(n, g.prev, g.next, t.processing);
            let mode = *mode_iter.next().expect("one mode per gap");
            match (mode, g.via_station) {
                (Mode::Recharge, Some((c1, c2))) => {
                    cons.push(Constraint {
                        lhs: len.clone(),
                        op: ComparisonOp::Ge,
                        rhs: (c1 + c2 + min_recharge) as f64,
                    });
                    let landed: Vec<Lin> = level.iter().map(|l| l.shift(-(c1 as f64))).collect();
                    at_least(&landed, 1.0 / drain, &mut cons);
                    let usable = len.shift(-((c1 + c2) as f64));
                    let mut charged = vec![Lin::constant(n, bat.capacity as f64 / drain)];
                    charged.extend(landed.iter().map(|l| l.plus(&usable, rate)));
                    level = charged.iter().map(|l| l.shift(-(c2 as f64))).collect();
                }
                (Mode::Recharge, None) => unreachable!("filtered before building"),
                (Mode::Stay, via) => {
                    cons.push(Constraint {
                        lhs: len.clone(),
                        op: ComparisonOp::Ge,
                        rhs: g.direct as f64,
                    });
                    if let Some((c1, c2)) = via {
                        cons.push(Constraint {
                            lhs: len.clone(),
                            op: ComparisonOp::Le,
                            rhs: (c1 + c2 + min_recharge - 1) as f64,
                        });
                    }
                    if map.is_station(g.from) {
                        level = level.iter().map(|l| l.shift(-(g.direct as f64))).collect();
                    } else {
                        let hovered: Vec<Lin> = level.iter().map(|l| l.plus(&len.shift(-(g.direct as f64)), -1.0)).collect();
                        at_least(&hovered, floor(g.from), &mut cons);
                        level = level.iter().map(|l| l.plus(&len, -1.0)).collect();
                    }
                }
            }
            at_least(&level, floor(g.to), &mut cons);
        }
    }
    cons
}

fn expr(vars: &[Variable], coef: &[f64]) -> LinearExpr {
    vars.iter()
        .zip(coef)
        .filter(|(_, &c)| c != 0.0)
        .map(|(&v, &c)| (v, c))
        .collect()
}

fn branch_and_bound(
    inst: &Instance,
    lines: &[Vec<usize>],
    objective: &[f64],
    constant: f64,
    cons: &[Constraint],
    shared: &Shared,
) -> Option<Found> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = objective.iter().map(|&c| lp.add_var(c, (0.0, f64::INFINITY))).collect();
    for c in cons {
        if c.lhs.coef.iter().all(|&x| x == 0.0) {
            let holds = match c.op {
                ComparisonOp::Ge => c.lhs.constant >= c.rhs - EPS,
                ComparisonOp::Le => c.lhs.constant <= c.rhs + EPS,
                ComparisonOp::Eq => (c.lhs.constant - c.rhs).abs() <= EPS,
            };
            if !holds {
                return None;
            }
            continue;
        }
        lp.add_constraint(expr(&vars, &c.lhs.coef), c.op, c.rhs - c.lhs.constant);
    }
    shared.lp_solves.fetch_add(1, Ordering::Relaxed);
    let root = lp.solve().ok()?;

    let mut best: Option<Found> = None;
    let mut stack: Vec<Solution> = vec![root];
    while let Some(sol) = stack.pop() {
        let bound = (sol.objective() + constant - EPS).ceil() as i64;
        let cutoff = shared.best.load(Ordering::Relaxed).min(best.as_ref().map_or(i64::MAX, |b| b.key.0));
        if bound > cutoff {
            continue;
        }
        let values: Vec<f64> = vars.iter().map(|&v| sol[v]).collect();
        let split = values.iter().position(|x| (x - x.round()).abs() > EPS);
        match split {
            Some(i) => {
                let x = values[i];
                for (op, rhs) in [(ComparisonOp::Le, x.floor()), (ComparisonOp::Ge, x.ceil())] {
                    shared.lp_solves.fetch_add(1, Ordering::Relaxed);
                    if let Ok(next) = sol.clone().add_constraint([(vars[i], 1.0)], op, rhs) {
                        stack.push(next);
                    }
                }
            }
            None => {
                let starts: Vec<i64> = values.iter().map(|x| x.round() as i64).collect();
                if let Some(found) = build(inst, lines, &starts) {
                    if best.as_ref().is_none_or(|b| found.key.cmp(&b.key) == CmpOrdering::Less) {
                        best = Some(found);
                    }
                }
            }
        }
    }
    best
}

fn build(inst: &Instance, lines: &[Vec<usize>], starts: &[i64]) -> Option<Found> {
    let timed: Vec<Vec<(usize, i64)>> = lines.iter().map(|l| l.iter().map(|&ti| (ti, starts[ti])).collect()).collect();
    let schedule = realize(inst, &timed).ok()?;
    let report = validate_schedule(&schedule, inst.tasks, inst.fleet, inst.map, &inst.energy).ok()?;
    if !report.ok {
        return None;
    }
    let order = timed
        .iter()
        .map(|l| l.iter().map(|&(ti, s)| (inst.task(ti).id, s)).collect())
        .collect();
    Some(Found {
        key: (schedule.energy, order),
        schedule,
    })
}
