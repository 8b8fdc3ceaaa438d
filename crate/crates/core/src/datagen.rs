//! Seeded generation of benchmark task sets.

use std::fmt;

use num_rational::Rational64;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EnergyModel, Task, TaskId, TaskSet, TimeWindow, DEFAULT_BATTERY_CAPACITY};
use crate::map::{MapError, MapGraph, PosId, UNREACHABLE};

pub const TASK_COUNTS: [usize; 3] = [30, 50, 100];
pub const PRED_MEANS: [u32; 3] = [0, 1, 2];
pub const SLACK_MEANS: [i64; 3] = [300, 600, 1200];
pub const SLACK_MIN: i64 = 100;
pub const SLACK_MAX: i64 = 1395;
pub const MAX_PREDECESSORS: usize = 4;
/// Mean spacing of successive task releases on the lab map, in seconds.
pub const ARRIVAL_SPACING: i64 = 120;
/// Upper bound of the random delay after the latest predecessor due date.
pub const RELEASE_JITTER: i64 = 30;
pub const RETRY_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoScale {
    Lab,
    Industrial,
}

impl GeoScale {
    pub const ALL: [GeoScale; 2] = [GeoScale::Lab, GeoScale::Industrial];

    pub fn factor(self) -> i64 {
        match self {
            GeoScale::Lab => 1,
            GeoScale::Industrial => 8,
        }
    }

    pub fn from_factor(f: i64) -> Option<GeoScale> {
        GeoScale::ALL.into_iter().find(|s| s.factor() == f)
    }
}

impl fmt::Display for GeoScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.factor())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scale: GeoScale,
    pub tasks: usize,
    pub pred_mean: u32,
    pub slack_mean: i64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("configuration outside the benchmark levels: {0}")]
    OffGrid(String),
    #[error("map needs at least two work positions")]
    TooFewPositions,
    #[error("could not generate a valid dataset: {0}")]
    GenerationFailure(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

impl DatasetConfig {
    /// Rejects values outside the benchmark grid.
    pub fn check_levels(&self) -> Result<(), DatagenError> {
        if !TASK_COUNTS.contains(&self.tasks) {
            return Err(DatagenError::OffGrid(format!("task count {}", self.tasks)));
        }
        if !PRED_MEANS.contains(&self.pred_mean) {
            return Err(DatagenError::OffGrid(format!("predecessor mean {}", self.pred_mean)));
        }
        if !SLACK_MEANS.contains(&self.slack_mean) {
            return Err(DatagenError::OffGrid(format!("slack mean {}", self.slack_mean)));
        }
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("d_{}_{}_{}_{}.json", self.scale, self.tasks, self.pred_mean, self.slack_mean)
    }

    /// RNG stream for everything but slack. Configurations differing only
    /// in slack level share it, so their tasks, positions and precedences
    /// line up.
    fn stream(&self) -> u64 {
        (self.scale.factor() as u64 * 1000 + self.tasks as u64) * 10 + self.pred_mean as u64
    }
}

/// All 54 benchmark configurations, in scale, count, predecessor, slack order.
pub fn suite(seed: u64) -> Vec<DatasetConfig> {
    let mut out = Vec::with_capacity(54);
    for scale in GeoScale::ALL {
        for tasks in TASK_COUNTS {
            for pred_mean in PRED_MEANS {
                for slack_mean in SLACK_MEANS {
                    out.push(DatasetConfig {
                        scale,
                        tasks,
                        pred_mean,
                        slack_mean,
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// `map` rescaled to the configuration's geographic scale.
pub fn map_for(scale: GeoScale, map: &MapGraph) -> Result<MapGraph, MapError> {
    let want = Rational64::from_integer(scale.factor());
    if map.scale_factor() == want {
        Ok(map.clone())
    } else {
        map.scaled(want / map.scale_factor())
    }
}

fn sample_round(dist: &Normal<f64>, rng: &mut ChaCha8Rng) -> i64 {
    dist.sample(rng).round() as i64
}

/// Generates the task set for `cfg` on `map` (given at any scale).
pub fn generate_dataset(cfg: &DatasetConfig, map: &MapGraph, energy: &EnergyModel) -> Result<TaskSet, DatagenError> {
    let map = map_for(cfg.scale, map)?;
    let work: Vec<PosId> = map.work_positions().collect();
    if work.len() < 2 {
        return Err(DatagenError::TooFewPositions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream());
    let mut slack_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    slack_rng.set_stream(cfg.stream() | 1 << 63);

    let pred_mean = cfg.pred_mean as f64;
    let pred_dist = Normal::new(pred_mean, pred_mean.min(1.0)).map_err(|e| DatagenError::GenerationFailure(e.to_string()))?;
    let slack_mean = cfg.slack_mean as f64;
    let slack_dist = Normal::new(slack_mean, slack_mean / 5.0).map_err(|e| DatagenError::GenerationFailure(e.to_string()))?;
    let spacing = ARRIVAL_SPACING * cfg.scale.factor();
    let approach = |pos: PosId| map.stations().map(|h| map.travel(h, pos)).min().unwrap_or(UNREACHABLE);

    let mut tasks: Vec<Task> = Vec::with_capacity(cfg.tasks);
    // ancestors[i][j]: task j precedes task i, directly or not
    let mut ancestors: Vec<Vec<bool>> = Vec::with_capacity(cfg.tasks);
    let mut dues: Vec<i64> = Vec::with_capacity(cfg.tasks);
    let mut clock = 0i64;
    let mut retries = 0usize;

    while tasks.len() < cfg.tasks {
        let id = tasks.len();
        let inspection = rng.random_bool(0.5);
        let start = *work.choose(&mut rng).expect("non-empty");
        let end = if inspection {
            start
        } else {
            *work.iter().filter(|&&p| p != start).copied().collect::<Vec<_>>().choose(&mut rng).expect("two positions")
        };
        let route = map.travel(start, end);
        let processing = if inspection { energy.inspection } else { energy.load_unload + route };
        let doable = route < UNREACHABLE && approach(start) + processing + map.reserve(end) < DEFAULT_BATTERY_CAPACITY;
        if !doable {
            retries += 1;
            if retries > RETRY_BUDGET {
                return Err(DatagenError::GenerationFailure("no task fits on a full battery".into()));
            }
            continue;
        }

        let want = sample_round(&pred_dist, &mut rng).clamp(0, MAX_PREDECESSORS as i64) as usize;
        let mut candidates: Vec<usize> = (0..id).collect();
        candidates.shuffle(&mut rng);
        let mut preds: Vec<usize> = Vec::with_capacity(want);
        for c in candidates {
            if preds.len() == want {
                break;
            }
            // keep the set an antichain so no new edge is implied by another
            if preds.iter().all(|&p| !ancestors[p][c] && !ancestors[c][p]) {
                preds.push(c);
            }
        }

        let slack = sample_round(&slack_dist, &mut slack_rng).clamp(SLACK_MIN, SLACK_MAX);
        clock += rng.random_range(0..=2 * spacing);
        let after_preds = preds.iter().map(|&p| dues[p]).max().map(|d| d + rng.random_range(0..=RELEASE_JITTER));
        let release = after_preds.map_or(clock, |d| d.max(clock));
        let due = release + processing + slack;

        let mut anc = vec![false; cfg.tasks];
        for &p in &preds {
            anc[p] = true;
            for (j, &a) in ancestors[p].iter().enumerate() {
                anc[j] |= a;
            }
        }
        ancestors.push(anc);
        dues.push(due);
        preds.sort_unstable();
        tasks.push(Task {
            id: TaskId(id as u32 + 1),
            start: map.label(start).to_string(),
            end: map.label(end).to_string(),
            processing,
            window: Some(TimeWindow { release, due }),
            predecessors: preds.into_iter().map(|p| TaskId(p as u32 + 1)).collect(),
        });
    }
    TaskSet::new(tasks).map_err(|e| DatagenError::GenerationFailure(e.to_string()))
}
