//! Particle swarm search over task sequences.
//!
//! A particle is a permutation of task ids; its fitness is the energy of the
//! schedule the restful assignment builds from it. Velocities are lists of
//! swaps: an inertia-truncated copy of the previous velocity followed by
//! randomly thinned swaps toward the particle's own best and the swarm best.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{TaskId, TaskSet};
use crate::par::Execution;
use crate::problem::Instance;
use crate::rtaa::{schedule_sequence, RtaaError};
use crate::schedule::Schedule;

/// Fitness of a sequence with no feasible schedule; worse than any energy.
pub const INFEASIBLE: i64 = i64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PriorityRule {
    MinCumulativePredecessors,
    MinTotalPredecessors,
    MaxCumulativeSuccessors,
    MaxTotalSuccessors,
    MaxExecutionTime,
    MinExecutionTime,
    MaxRankedPositionalWeight,
    MinInversePositionalWeight,
    MostOccupiedPosition,
    LeastOccupiedPosition,
}

impl PriorityRule {
    pub const ALL: [PriorityRule; 10] = [
        PriorityRule::MinCumulativePredecessors,
        PriorityRule::MinTotalPredecessors,
        PriorityRule::MaxCumulativeSuccessors,
        PriorityRule::MaxTotalSuccessors,
        PriorityRule::MaxExecutionTime,
        PriorityRule::MinExecutionTime,
        PriorityRule::MaxRankedPositionalWeight,
        PriorityRule::MinInversePositionalWeight,
        PriorityRule::MostOccupiedPosition,
        PriorityRule::LeastOccupiedPosition,
    ];
}

impl fmt::Display for PriorityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Task order under `rule`, ties by ascending id.
pub fn priority_sequence(rule: PriorityRule, ts: &TaskSet) -> Vec<TaskId> {
    let n = ts.len();
    let w = |i: usize| ts.task_at(i).processing;
    let mut load: HashMap<&str, i64> = HashMap::new();
    for t in ts.tasks() {
        *load.entry(t.start.as_str()).or_insert(0) += t.processing;
    }
    let key = |i: usize| -> i64 {
        match rule {
            PriorityRule::MinCumulativePredecessors => ts.cumulative_preds_idx(i).len() as i64,
            PriorityRule::MinTotalPredecessors => ts.preds_idx(i).len() as i64,
            PriorityRule::MaxCumulativeSuccessors => -(ts.cumulative_succs_idx(i).len() as i64),
            PriorityRule::MaxTotalSuccessors => -(ts.succs_idx(i).len() as i64),
            PriorityRule::MaxExecutionTime => -w(i),
            PriorityRule::MinExecutionTime => w(i),
            PriorityRule::MaxRankedPositionalWeight => -(w(i) + ts.cumulative_succs_idx(i).iter().map(|&j| w(j)).sum::<i64>()),
            PriorityRule::MinInversePositionalWeight => w(i) + ts.cumulative_preds_idx(i).iter().map(|&j| w(j)).sum::<i64>(),
            PriorityRule::MostOccupiedPosition => -load[ts.task_at(i).start.as_str()],
            PriorityRule::LeastOccupiedPosition => load[ts.task_at(i).start.as_str()],
        }
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (key(i), ts.task_at(i).id));
    idx.into_iter().map(|i| ts.task_at(i).id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub max_generations: usize,
    pub no_improvement_stop: usize,
    pub c1: f64,
    pub c2: f64,
    pub inertia: f64,
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            particles: 40,
            max_generations: 40,
            no_improvement_stop: 10,
            c1: 1.0,
            c2: 2.0,
            inertia: 0.5,
            seed: 1,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), PsoError> {
        let bad = |m: &str| Err(PsoError::Config(m.to_string()));
        if self.particles < PriorityRule::ALL.len() {
            return bad("at least 10 particles are needed to hold the priority-rule sequences");
        }
        if self.max_generations == 0 || self.no_improvement_stop == 0 {
            return bad("generation limits must be positive");
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.c1) || !finite_nonneg(self.c2) || !finite_nonneg(self.inertia) {
            return bad("coefficients must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsoError {
    #[error("invalid swarm configuration: {0}")]
    Config(String),
    #[error("no feasible schedule found; the tasks seem too tight for the available UAVs and positions")]
    NoFeasibleFound,
    #[error(transparent)]
    Rtaa(#[from] RtaaError),
}

/// A transposition of two sequence slots.
pub type Swap = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Particle {
    pub sequence: Vec<TaskId>,
    pub velocity: Vec<Swap>,
    pub fitness: i64,
    pub best: Vec<TaskId>,
    pub best_fitness: i64,
}

impl Particle {
    fn new(sequence: Vec<TaskId>) -> Self {
        Particle {
            best: sequence.clone(),
            sequence,
            velocity: Vec::new(),
            fitness: INFEASIBLE,
            best_fitness: INFEASIBLE,
        }
    }
}

/// Swaps that turn `from` into `target` when applied in order.
pub fn swaps_toward(from: &[TaskId], target: &[TaskId]) -> Vec<Swap> {
    let mut cur = from.to_vec();
    let mut at: HashMap<TaskId, usize> = cur.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut out = Vec::new();
    for i in 0..cur.len() {
        if cur[i] != target[i] {
            let j = at[&target[i]];
            at.insert(cur[i], j);
            at.insert(cur[j], i);
            cur.swap(i, j);
            out.push((i, j));
        }
    }
    out
}

pub fn apply_swaps(seq: &mut [TaskId], swaps: &[Swap]) {
    for &(i, j) in swaps {
        seq.swap(i, j);
    }
}

fn particle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rule sequences first, then seeded random permutations, avoiding
/// duplicates while that is possible.
pub fn initial_swarm(ts: &TaskSet, cfg: &SwarmConfig) -> Result<Vec<Particle>, PsoError> {
    cfg.validate()?;
    let mut seqs: Vec<Vec<TaskId>> = PriorityRule::ALL.iter().map(|&r| priority_sequence(r, ts)).collect();
    let base: Vec<TaskId> = ts.ids().collect();
    let distinct_possible = (1..=base.len()).try_fold(1usize, |acc, k| acc.checked_mul(k)).unwrap_or(usize::MAX);
    let mut rng = particle_rng(cfg.seed, u64::MAX);
    while seqs.len() < cfg.particles {
        let mut s = base.clone();
        let mut tries = 0;
        loop {
            s.shuffle(&mut rng);
            tries += 1;
            let unique = seqs.iter().filter(|x| **x == s).count() == 0;
            if unique || tries >= 50 || seqs.len() >= distinct_possible {
                break;
            }
        }
        seqs.push(s);
    }
    Ok(seqs.into_iter().map(Particle::new).collect())
}

/// Moves every particle one step; `global` is the swarm best sequence.
pub fn update_swarm(swarm: &mut [Particle], global: &[TaskId], cfg: &SwarmConfig, generation: usize) {
    let p = swarm.len() as u64;
    for (i, part) in swarm.iter_mut().enumerate() {
        let mut rng = particle_rng(cfg.seed, generation as u64 * p + i as u64);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let keep1 = (cfg.c1 * r1).min(1.0);
        let keep2 = (cfg.c2 * r2).min(1.0);

        let kept = ((cfg.inertia * part.velocity.len() as f64).floor() as usize).min(part.velocity.len());
        let mut velocity: Vec<Swap> = part.velocity[..kept].to_vec();
        let mut seq = part.sequence.clone();
        apply_swaps(&mut seq, &velocity);
        for (target, keep) in [(part.best.as_slice(), keep1), (global, keep2)] {
            let toward: Vec<Swap> = swaps_toward(&seq, target)
                .into_iter()
                .filter(|_| rng.random::<f64>() < keep)
                .collect();
            apply_swaps(&mut seq, &toward);
            velocity.extend(toward);
        }
        debug_assert!(is_permutation_of(&seq, &part.sequence));
        part.sequence = seq;
        part.velocity = velocity;
    }
}

fn is_permutation_of(a: &[TaskId], b: &[TaskId]) -> bool {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort();
    y.sort();
    x == y
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub best_energy: Option<i64>,
    pub mean_energy: Option<f64>,
    pub feasible_count: usize,
    pub elapsed_ms: u128,
}

impl GenerationLog {
    /// Equality ignoring wall-clock time.
    pub fn same_search(&self, other: &GenerationLog) -> bool {
        self.generation == other.generation
            && self.best_energy == other.best_energy
            && self.mean_energy == other.mean_energy
            && self.feasible_count == other.feasible_count
    }
}

pub fn write_log_csv(log: &[GenerationLog], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "generation,best_energy,mean_energy,feasible_count,elapsed_ms")?;
    for g in log {
        let best = g.best_energy.map(|e| e.to_string()).unwrap_or_default();
        let mean = g.mean_energy.map(|e| format!("{e:.2}")).unwrap_or_default();
        writeln!(out, "{},{best},{mean},{},{}", g.generation, g.feasible_count, g.elapsed_ms)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub sequence: Vec<TaskId>,
    pub schedule: Schedule,
    pub energy: i64,
    pub log: Vec<GenerationLog>,
    /// Distinct sequences scheduled during the search.
    pub evaluations: usize,
}

/// Called with every feasible schedule the search builds.
pub type Observer<'o> = &'o (dyn Fn(&Schedule) + Sync);

/// Runs the swarm until the generation limit or the no-improvement stop.
pub fn optimize(inst: &Instance, cfg: &SwarmConfig, exec: Execution, observer: Option<Observer>) -> Result<Optimum, PsoError> {
    let started = Instant::now();
    let mut swarm = initial_swarm(inst.tasks, cfg)?;
    let mut memo: HashMap<Vec<TaskId>, i64> = HashMap::new();
    let mut log = Vec::new();
    let mut global: Vec<TaskId> = swarm[0].sequence.clone();
    let mut global_fit = INFEASIBLE;
    let mut stale = 0;

    let evaluate = |swarm: &mut [Particle], memo: &mut HashMap<Vec<TaskId>, i64>| {
        let mut fresh: BTreeMap<Vec<TaskId>, ()> = BTreeMap::new();
        for p in swarm.iter() {
            if !memo.contains_key(&p.sequence) {
                fresh.insert(p.sequence.clone(), ());
            }
        }
        let fresh: Vec<Vec<TaskId>> = fresh.into_keys().collect();
        let fits = exec.map(&fresh, |seq| match schedule_sequence(inst, seq) {
            Ok(s) => {
                if let Some(obs) = observer {
                    obs(&s);
                }
                s.energy
            }
            Err(_) => INFEASIBLE,
        });
        for (s, f) in fresh.into_iter().zip(fits) {
            memo.insert(s, f);
        }
        for p in swarm.iter_mut() {
            p.fitness = memo[&p.sequence];
            if p.fitness < p.best_fitness {
                p.best_fitness = p.fitness;
                p.best = p.sequence.clone();
            }
        }
    };

    let single = inst.tasks.len() <= 1;
    for generation in 1..=cfg.max_generations {
        if generation > 1 {
            update_swarm(&mut swarm, &global, cfg, generation);
        }
        evaluate(&mut swarm, &mut memo);
        let mut improved = false;
        for p in &swarm {
            if p.best_fitness < global_fit {
                global_fit = p.best_fitness;
                global = p.best.clone();
                improved = true;
            }
        }
        let feasible: Vec<i64> = swarm.iter().map(|p| p.fitness).filter(|&f| f != INFEASIBLE).collect();
        log.push(GenerationLog {
            generation,
            best_energy: (global_fit != INFEASIBLE).then_some(global_fit),
            mean_energy: (!feasible.is_empty()).then(|| feasible.iter().sum::<i64>() as f64 / feasible.len() as f64),
            feasible_count: feasible.len(),
            elapsed_ms: started.elapsed().as_millis(),
        });
        if generation > 1 {
            stale = if improved { 0 } else { stale + 1 };
        }
        if single || stale >= cfg.no_improvement_stop {
            break;
        }
    }

    if global_fit == INFEASIBLE {
        return Err(PsoError::NoFeasibleFound);
    }
    let schedule = schedule_sequence(inst, &global)?;
    Ok(Optimum {
        sequence: global,
        energy: schedule.energy,
        schedule,
        log,
        evaluations: memo.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(s: &str) -> Vec<TaskId> {
        s.split_whitespace().map(|x| TaskId(x.parse().unwrap())).collect()
    }

    #[test]
    fn rules_reproduce_the_published_orders() {
        let ts = TaskSet::reference_set();
        let cases = [
            (PriorityRule::MinCumulativePredecessors, "5 8 1 9 10 2 4 7 3 6"),
            (PriorityRule::MinTotalPredecessors, "5 8 1 2 3 4 6 9 10 7"),
            (PriorityRule::MaxCumulativeSuccessors, "8 5 9 10 7 1 2 3 4 6"),
            (PriorityRule::MaxTotalSuccessors, "7 8 9 10 5 1 2 3 4 6"),
            (PriorityRule::MaxExecutionTime, "10 4 3 6 9 1 2 5 7 8"),
            (PriorityRule::MinExecutionTime, "1 2 5 7 8 6 9 3 4 10"),
        ];
        for (rule, want) in cases {
            assert_eq!(priority_sequence(rule, &ts), ids(want), "{rule}");
        }
    }

    #[test]
    fn swaps_toward_reaches_target() {
        let a = ids("1 2 3 4 5");
        let b = ids("5 3 1 2 4");
        let mut x = a.clone();
        apply_swaps(&mut x, &swaps_toward(&a, &b));
        assert_eq!(x, b);
        assert!(swaps_toward(&b, &b).is_empty());
    }

    #[test]
    fn swarm_with_ten_particles_is_the_rule_catalogue() {
        let ts = TaskSet::reference_set();
        let cfg = SwarmConfig {
            particles: 10,
            ..SwarmConfig::default()
        };
        let swarm = initial_swarm(&ts, &cfg).unwrap();
        let want: Vec<Vec<TaskId>> = PriorityRule::ALL.iter().map(|&r| priority_sequence(r, &ts)).collect();
        assert_eq!(swarm.iter().map(|p| p.sequence.clone()).collect::<Vec<_>>(), want);
        let small = SwarmConfig {
            particles: 9,
            ..SwarmConfig::default()
        };
        assert!(matches!(initial_swarm(&ts, &small), Err(PsoError::Config(_))));
    }

    #[test]
    fn initial_swarm_is_seeded() {
        let ts = TaskSet::reference_set();
        let cfg = SwarmConfig::default();
        let a = initial_swarm(&ts, &cfg).unwrap();
        let b = initial_swarm(&ts, &cfg).unwrap();
        assert_eq!(a, b);
        let mut seqs: Vec<_> = a.iter().map(|p| p.sequence.clone()).collect();
        seqs.sort();
        seqs.dedup();
        assert!(seqs.len() >= 35, "only {} distinct sequences", seqs.len());
        let one = TaskSet::from_csv("3,a1,a1,10,-,-,-\n").unwrap();
        assert!(initial_swarm(&one, &cfg).unwrap().iter().all(|p| p.sequence == vec![TaskId(3)]));
    }

    #[test]
    fn fixed_point_and_frozen_swarm() {
        let target = ids("3 1 2");
        let mut swarm = vec![Particle {
            sequence: target.clone(),
            velocity: vec![],
            fitness: 5,
            best: target.clone(),
            best_fitness: 5,
        }];
        update_swarm(&mut swarm, &target, &SwarmConfig::default(), 2);
        assert_eq!(swarm[0].sequence, target);

        let frozen = SwarmConfig {
            c1: 0.0,
            c2: 0.0,
            inertia: 0.0,
            ..SwarmConfig::default()
        };
        let start = ids("1 2 3");
        let mut swarm = vec![Particle {
            sequence: start.clone(),
            velocity: vec![(0, 1)],
            fitness: 9,
            best: ids("2 3 1"),
            best_fitness: 9,
        }];
        update_swarm(&mut swarm, &ids("3 2 1"), &frozen, 2);
        assert_eq!(swarm[0].sequence, start);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn perm(n: usize) -> impl Strategy<Value = Vec<TaskId>> {
            Just((1..=n as u32).map(TaskId).collect::<Vec<_>>()).prop_shuffle()
        }

        proptest! {
            #[test]
            fn swaps_compose_to_target((a, b) in (1usize..12).prop_flat_map(|n| (perm(n), perm(n)))) {
                let mut x = a.clone();
                apply_swaps(&mut x, &swaps_toward(&a, &b));
                prop_assert_eq!(x, b);
            }

            #[test]
            fn updates_keep_permutations(
                (seq, best, global) in (1usize..12).prop_flat_map(|n| (perm(n), perm(n), perm(n))),
                seed in any::<u64>(),
                generation in 2usize..50,
            ) {
                let cfg = SwarmConfig { seed, ..SwarmConfig::default() };
                let mut swarm = vec![Particle { sequence: seq.clone(), velocity: vec![], fitness: 1, best, best_fitness: 1 }];
                for g in generation..generation + 3 {
                    update_swarm(&mut swarm, &global, &cfg, g);
                    prop_assert!(is_permutation_of(&swarm[0].sequence, &seq));
                }
            }
        }
    }
}
