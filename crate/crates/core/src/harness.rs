//! Experiment runner: repeated swarm runs over task sets, validated
//! results, and CSV exports.
//!
//! Attempt-level results are written without wall-clock figures so that a
//! rerun with the same seeds reproduces them byte for byte; timings go to
//! separate files.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{self, DatagenError, DatasetConfig, GeoScale, PRED_MEANS, SLACK_MEANS};
use crate::domain::{EnergyModel, TaskSet, TaskSetError, UavSpec, DEFAULT_BATTERY_CAPACITY};
use crate::map::{MapError, MapGraph};
use crate::par::Execution;
use crate::problem::{Instance, InstanceError};
use crate::pso::{optimize, PsoError, SwarmConfig};
use crate::schedule::Schedule;
use crate::validator::validate_schedule;

pub const DEFAULT_FLEET: usize = 3;
pub const DEFAULT_BUCKET_SECONDS: i64 = 60;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("{0}: {1}")]
    Io(PathBuf, io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{0}: {1}")]
    Tasks(String, TaskSetError),
    #[error("{0}: {1}")]
    Instance(String, InstanceError),
    #[error("{0}: {1}")]
    Search(String, PsoError),
}

/// Benchmark cell a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DatasetKey {
    pub scale: GeoScale,
    pub tasks: usize,
    pub pred_mean: u32,
    pub slack_mean: i64,
}

impl DatasetKey {
    /// Parses names of the form `d_<scale>_<n>_<pred>_<slack>[.json]`.
    pub fn from_file_name(name: &str) -> Option<DatasetKey> {
        let stem = name.strip_suffix(".json").unwrap_or(name);
        let mut parts = stem.strip_prefix("d_")?.split('_');
        let key = DatasetKey {
            scale: GeoScale::from_factor(parts.next()?.parse().ok()?)?,
            tasks: parts.next()?.parse().ok()?,
            pred_mean: parts.next()?.parse().ok()?,
            slack_mean: parts.next()?.parse().ok()?,
        };
        parts.next().is_none().then_some(key)
    }

    /// Row number in the 3x3 grid of predecessor and slack levels, from 1.
    pub fn setting(&self) -> Option<usize> {
        let p = PRED_MEANS.iter().position(|&x| x == self.pred_mean)?;
        let s = SLACK_MEANS.iter().position(|&x| x == self.slack_mean)?;
        Some(p * SLACK_MEANS.len() + s + 1)
    }
}

impl From<&DatasetConfig> for DatasetKey {
    fn from(c: &DatasetConfig) -> Self {
        DatasetKey {
            scale: c.scale,
            tasks: c.tasks,
            pred_mean: c.pred_mean,
            slack_mean: c.slack_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `None` for task sets outside the benchmark grid; they run on the map
    /// as given and are left out of the per-setting exports.
    pub key: Option<DatasetKey>,
    pub tasks: TaskSet,
}

impl Dataset {
    pub fn generated(cfg: &DatasetConfig, map: &MapGraph, energy: &EnergyModel) -> Result<Dataset, HarnessError> {
        Ok(Dataset {
            name: cfg.file_name(),
            key: Some(cfg.into()),
            tasks: datagen::generate_dataset(cfg, map, energy)?,
        })
    }

    pub fn load(path: &Path) -> Result<Dataset, HarnessError> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let tasks = TaskSet::load(path).map_err(|e| HarnessError::Tasks(name.clone(), e))?;
        Ok(Dataset {
            key: DatasetKey::from_file_name(&name),
            name,
            tasks,
        })
    }
}

/// The 54 benchmark datasets for `seed`.
pub fn generate_suite(seed: u64, map: &MapGraph, energy: &EnergyModel) -> Result<Vec<Dataset>, HarnessError> {
    datagen::suite(seed).iter().map(|c| Dataset::generated(c, map, energy)).collect()
}

/// Writes each dataset as `<dir>/<name>` and returns the paths.
pub fn write_datasets(dir: &Path, datasets: &[Dataset]) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.to_path_buf(), e))?;
    datasets
        .iter()
        .map(|d| {
            let path = dir.join(&d.name);
            fs::write(&path, d.tasks.to_json() + "\n").map_err(|e| HarnessError::Io(path.clone(), e))?;
            Ok(path)
        })
        .collect()
}

/// Every `*.json` file in `dir`, sorted by name.
pub fn load_datasets(dir: &Path) -> Result<Vec<Dataset>, HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::Io(dir.to_path_buf(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Dataset::load(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub fleet_size: usize,
    pub battery_capacity: i64,
    pub energy: EnergyModel,
    pub swarm: SwarmConfig,
    pub repetitions: usize,
    /// Repetition `r` runs the swarm with seed `base_seed + r`.
    pub base_seed: u64,
    pub bucket_seconds: i64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            fleet_size: DEFAULT_FLEET,
            battery_capacity: DEFAULT_BATTERY_CAPACITY,
            energy: EnergyModel::default(),
            swarm: SwarmConfig::default(),
            repetitions: 20,
            base_seed: 1,
            bucket_seconds: DEFAULT_BUCKET_SECONDS,
        }
    }
}

/// One scheduling attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub dataset: usize,
    pub rep: usize,
    pub seed: u64,
    /// Energy of the returned schedule, if one was found and validated.
    pub energy: Option<i64>,
    pub makespan: Option<i64>,
    /// Violations found in a returned schedule; nonzero means it was not
    /// counted.
    pub violations: usize,
    pub generations: usize,
    pub evaluations: usize,
    pub elapsed_ms: f64,
    #[serde(skip)]
    pub schedule: Option<Schedule>,
    /// Post-task levels of every validated schedule met during the search,
    /// bucketed: bucket index to count.
    pub histogram: BTreeMap<i64, u64>,
}

/// Everything a run produced except the schedules themselves, which are
/// dropped when saving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub config: ExperimentConfig,
    pub datasets: Vec<(String, Option<DatasetKey>)>,
    /// Ordered by dataset, then repetition.
    pub attempts: Vec<Attempt>,
}

fn bucket_of(level: Rational64, width: i64) -> i64 {
    (level / Rational64::from_integer(width)).floor().to_integer()
}

/// Runs every dataset `cfg.repetitions` times; attempts run in parallel
/// under `exec` and come back in dataset-then-repetition order.
pub fn run_experiment(datasets: &[Dataset], map: &MapGraph, cfg: &ExperimentConfig, exec: Execution) -> Result<Results, HarnessError> {
    if cfg.repetitions == 0 {
        return Err(HarnessError::NoRepetitions);
    }
    cfg.swarm.validate().map_err(|e| HarnessError::Search("swarm configuration".into(), e))?;
    let mut maps: BTreeMap<Option<GeoScale>, MapGraph> = BTreeMap::new();
    for d in datasets {
        let scale = d.key.map(|k| k.scale);
        if let std::collections::btree_map::Entry::Vacant(slot) = maps.entry(scale) {
            slot.insert(match scale {
                Some(s) => datagen::map_for(s, map)?,
                None => map.clone(),
            });
        }
    }
    let fleets: BTreeMap<Option<GeoScale>, Vec<UavSpec>> = maps
        .iter()
        .map(|(s, m)| (*s, UavSpec::fleet(m, cfg.fleet_size, cfg.battery_capacity)))
        .collect();
    let instances = datasets
        .iter()
        .map(|d| {
            let scale = d.key.map(|k| k.scale);
            Instance::new(&maps[&scale], &d.tasks, &fleets[&scale], cfg.energy).map_err(|e| HarnessError::Instance(d.name.clone(), e))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..datasets.len()).flat_map(|d| (0..cfg.repetitions).map(move |r| (d, r))).collect();
    let attempts = exec.map(&jobs, |&(d, rep)| {
        let inst = &instances[d];
        let seed = cfg.base_seed.wrapping_add(rep as u64);
        let swarm = SwarmConfig { seed, ..cfg.swarm };
        let histogram = Mutex::new(BTreeMap::new());
        let observe = |s: &Schedule| {
            if let Ok(rep) = validate_schedule(s, inst.tasks, inst.fleet, inst.map, &cfg.energy) {
                if rep.ok {
                    let mut h = histogram.lock().expect("histogram lock");
                    for level in rep.battery.post_task_samples() {
                        *h.entry(bucket_of(level, cfg.bucket_seconds)).or_insert(0u64) += 1;
                    }
                }
            }
        };
        let started = Instant::now();
        let outcome = optimize(inst, &swarm, Execution::Sequential, Some(&observe));
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        let histogram = histogram.into_inner().expect("histogram lock");
        match outcome {
            Ok(best) => {
                let report = validate_schedule(&best.schedule, inst.tasks, inst.fleet, inst.map, &cfg.energy);
                let violations = match &report {
                    Ok(r) => r.violations.len(),
                    Err(_) => 1,
                };
                let ok = violations == 0;
                Ok(Attempt {
                    dataset: d,
                    rep,
                    seed,
                    energy: ok.then_some(best.energy),
                    makespan: ok.then(|| best.schedule.makespan()),
                    violations,
                    generations: best.log.len(),
                    evaluations: best.evaluations,
                    elapsed_ms,
                    schedule: Some(best.schedule),
                    histogram,
                })
            }
            Err(PsoError::NoFeasibleFound) => Ok(Attempt {
                dataset: d,
                rep,
                seed,
                energy: None,
                makespan: None,
                violations: 0,
                generations: 0,
                evaluations: 0,
                elapsed_ms,
                schedule: None,
                histogram,
            }),
            Err(e) => Err(HarnessError::Search(datasets[d].name.clone(), e)),
        }
    });
    Ok(Results {
        config: *cfg,
        datasets: datasets.iter().map(|d| (d.name.clone(), d.key)).collect(),
        attempts: attempts.into_iter().collect::<Result<_, _>>()?,
    })
}

/// Per-dataset aggregate over the validated attempts.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub name: String,
    pub key: Option<DatasetKey>,
    pub attempts: usize,
    pub feasible: usize,
    pub mean_energy: Option<f64>,
    pub min_energy: Option<i64>,
    pub max_energy: Option<i64>,
    pub mean_makespan: Option<f64>,
    pub mean_ms: f64,
    pub histogram: BTreeMap<i64, u64>,
}

impl Results {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn load(path: &Path) -> Result<Results, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Io(path.to_path_buf(), io::Error::new(io::ErrorKind::InvalidData, e)))
    }

    pub fn summaries(&self) -> Vec<DatasetSummary> {
        self.datasets
            .iter()
            .enumerate()
            .map(|(d, (name, key))| {
                let runs: Vec<&Attempt> = self.attempts.iter().filter(|a| a.dataset == d).collect();
                let energies: Vec<i64> = runs.iter().filter_map(|a| a.energy).collect();
                let spans: Vec<i64> = runs.iter().filter_map(|a| a.makespan).collect();
                let mean = |v: &[i64]| (!v.is_empty()).then(|| v.iter().sum::<i64>() as f64 / v.len() as f64);
                let mut histogram = BTreeMap::new();
                for a in &runs {
                    for (b, c) in &a.histogram {
                        *histogram.entry(*b).or_insert(0) += c;
                    }
                }
                DatasetSummary {
                    name: name.clone(),
                    key: *key,
                    attempts: runs.len(),
                    feasible: energies.len(),
                    mean_energy: mean(&energies),
                    min_energy: energies.iter().min().copied(),
                    max_energy: energies.iter().max().copied(),
                    mean_makespan: mean(&spans),
                    mean_ms: runs.iter().map(|a| a.elapsed_ms).sum::<f64>() / runs.len().max(1) as f64,
                    histogram,
                }
            })
            .collect()
    }

    /// Writes `results.csv` (one row per attempt), `summary.csv` (one row
    /// per dataset) and `timing.csv` (wall-clock per attempt) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.to_path_buf(), e))?;
        let key_cols = |key: &Option<DatasetKey>| -> [String; 4] {
            match key {
                Some(k) => [k.scale.to_string(), k.tasks.to_string(), k.pred_mean.to_string(), k.slack_mean.to_string()],
                None => Default::default(),
            }
        };
        let opt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
        let optf = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();

        let results = dir.join("results.csv");
        let mut w = csv::Writer::from_path(&results)?;
        w.write_record([
            "dataset", "scale", "tasks", "pred_mean", "slack_mean", "rep", "seed", "feasible", "energy", "makespan", "violations", "generations", "evaluations",
        ])?;
        for a in &self.attempts {
            let (name, key) = &self.datasets[a.dataset];
            let k = key_cols(key);
            w.write_record([
                name.clone(),
                k[0].clone(),
                k[1].clone(),
                k[2].clone(),
                k[3].clone(),
                a.rep.to_string(),
                a.seed.to_string(),
                a.energy.is_some().to_string(),
                opt(a.energy),
                opt(a.makespan),
                a.violations.to_string(),
                a.generations.to_string(),
                a.evaluations.to_string(),
            ])?;
        }
        w.flush().map_err(|e| HarnessError::Io(results.clone(), e))?;

        let summary = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&summary)?;
        w.write_record([
            "dataset", "scale", "tasks", "pred_mean", "slack_mean", "attempts", "feasible", "mean_energy", "min_energy", "max_energy", "mean_makespan",
            "post_task_samples",
        ])?;
        for s in self.summaries() {
            let k = key_cols(&s.key);
            w.write_record([
                s.name.clone(),
                k[0].clone(),
                k[1].clone(),
                k[2].clone(),
                k[3].clone(),
                s.attempts.to_string(),
                s.feasible.to_string(),
                optf(s.mean_energy),
                opt(s.min_energy),
                opt(s.max_energy),
                optf(s.mean_makespan),
                s.histogram.values().sum::<u64>().to_string(),
            ])?;
        }
        w.flush().map_err(|e| HarnessError::Io(summary.clone(), e))?;

        let timing = dir.join("timing.csv");
        let mut w = csv::Writer::from_path(&timing)?;
        w.write_record(["dataset", "rep", "seed", "elapsed_ms"])?;
        for a in &self.attempts {
            w.write_record([
                self.datasets[a.dataset].0.clone(),
                a.rep.to_string(),
                a.seed.to_string(),
                format!("{:.3}", a.elapsed_ms),
            ])?;
        }
        w.flush().map_err(|e| HarnessError::Io(timing.clone(), e))?;
        Ok(vec![results, summary, timing])
    }
}

/// Plot-ready CSVs: `battery_hist_<scale>_<n>.csv` per scale and task count,
/// `energy_by_setting.csv` and `comp_time.csv`. Datasets outside the grid
/// are skipped.
pub fn export_plots(results: &Results, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.to_path_buf(), e))?;
    let width = results.config.bucket_seconds;
    let summaries: Vec<DatasetSummary> = results.summaries().into_iter().filter(|s| s.key.is_some()).collect();
    let mut written = Vec::new();

    let mut hists: BTreeMap<(GeoScale, usize), BTreeMap<i64, u64>> = BTreeMap::new();
    for s in &summaries {
        let k = s.key.expect("filtered");
        let h = hists.entry((k.scale, k.tasks)).or_default();
        for (b, c) in &s.histogram {
            *h.entry(*b).or_insert(0) += c;
        }
    }
    for ((scale, n), h) in &hists {
        let path = dir.join(format!("battery_hist_{scale}_{n}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["level_from", "level_to", "count"])?;
        for (b, c) in h {
            w.write_record([(b * width).to_string(), ((b + 1) * width).to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| HarnessError::Io(path.clone(), e))?;
        written.push(path);
    }

    let path = dir.join("energy_by_setting.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["scale", "tasks", "setting", "pred_mean", "slack_mean", "feasible", "mean_energy"])?;
    for s in &summaries {
        let k = s.key.expect("filtered");
        w.write_record([
            k.scale.to_string(),
            k.tasks.to_string(),
            k.setting().map(|x| x.to_string()).unwrap_or_default(),
            k.pred_mean.to_string(),
            k.slack_mean.to_string(),
            s.feasible.to_string(),
            s.mean_energy.map(|x| format!("{x:.3}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(path.clone(), e))?;
    written.push(path);

    let path = dir.join("comp_time.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["scale", "tasks", "pred_mean", "slack_mean", "attempts", "mean_ms"])?;
    for s in &summaries {
        let k = s.key.expect("filtered");
        w.write_record([
            k.scale.to_string(),
            k.tasks.to_string(),
            k.pred_mean.to_string(),
            k.slack_mean.to_string(),
            s.attempts.to_string(),
            format!("{:.3}", s.mean_ms),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(path.clone(), e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_round_trips_through_file_names() {
        for c in datagen::suite(4) {
            let k = DatasetKey::from_file_name(&c.file_name()).unwrap();
            assert_eq!(k, DatasetKey::from(&c));
        }
        assert_eq!(DatasetKey::from_file_name("reference_set.json"), None);
        assert_eq!(DatasetKey::from_file_name("d_2_30_0_300.json"), None);
    }

    #[test]
    fn settings_follow_the_grid() {
        let k = |pred_mean, slack_mean| DatasetKey {
            scale: GeoScale::Lab,
            tasks: 30,
            pred_mean,
            slack_mean,
        };
        assert_eq!(k(0, 300).setting(), Some(1));
        assert_eq!(k(1, 300).setting(), Some(4));
        assert_eq!(k(2, 300).setting(), Some(7));
        assert_eq!(k(2, 1200).setting(), Some(9));
        assert_eq!(k(2, 1000).setting(), None);
    }

    #[test]
    fn buckets_floor() {
        assert_eq!(bucket_of(Rational64::new(119, 1), 60), 1);
        assert_eq!(bucket_of(Rational64::new(120, 1), 60), 2);
        assert_eq!(bucket_of(Rational64::new(1, 2700), 60), 0);
    }

    #[test]
    fn zero_repetitions_rejected() {
        let cfg = ExperimentConfig {
            repetitions: 0,
            ..ExperimentConfig::default()
        };
        assert!(matches!(
            run_experiment(&[], &MapGraph::lab_demo(), &cfg, Execution::Sequential),
            Err(HarnessError::NoRepetitions)
        ));
    }
}
