use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use uavsched::datagen::{self, DatasetConfig, GeoScale};
use uavsched::harness::{self, Dataset, ExperimentConfig};
use uavsched::oracle::{brute_force_optimal, OracleLimits};
use uavsched::par::Execution;
use uavsched::pso::{optimize, write_log_csv, SwarmConfig};
use uavsched::{validate_schedule, EnergyModel, Instance, MapGraph, Schedule, UavSpec};

#[derive(Parser)]
#[command(name = "uavsched", version, about = "Battery-aware scheduling of indoor UAV tasks")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct GlobalArgs {
    /// Number of UAVs, spread over the recharge stations.
    #[arg(long, global = true)]
    fleet: Option<usize>,
    /// Battery capacity in seconds of flight.
    #[arg(long, global = true)]
    alpha: Option<i64>,
    /// Seconds to recharge an empty battery.
    #[arg(long, global = true)]
    gamma: Option<i64>,
    /// Shortest allowed recharge, in seconds.
    #[arg(long, global = true)]
    min_recharge: Option<i64>,
    /// Flight speed in metres per second, for edges without a fixed time.
    #[arg(long, global = true)]
    speed: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Map document; the built-in lab map when absent.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// JSON file with defaults for any of the global flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one dataset.
    GenData {
        #[arg(long, default_value_t = 1)]
        scale: i64,
        #[arg(long, default_value_t = 30)]
        tasks: usize,
        #[arg(long, default_value_t = 1)]
        pred_mean: u32,
        #[arg(long, default_value_t = 600)]
        slack_mean: i64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept levels outside the benchmark grid.
        #[arg(long)]
        unchecked: bool,
    },
    /// Generate all 54 benchmark datasets into the output directory.
    GenSuite,
    /// Search for a low-energy schedule.
    Schedule {
        dataset: PathBuf,
        map: Option<PathBuf>,
        /// Schedule output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-generation log as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        sequential: bool,
    },
    /// Check a schedule against every constraint; exits with 1 on violations.
    Validate {
        schedule: PathBuf,
        dataset: PathBuf,
        map: Option<PathBuf>,
    },
    /// Exact minimum-energy schedule for a small instance.
    Oracle {
        dataset: PathBuf,
        map: Option<PathBuf>,
        #[arg(long)]
        max_tasks: Option<usize>,
        #[arg(long)]
        max_uavs: Option<usize>,
        /// Seconds before giving up.
        #[arg(long)]
        time_budget: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run repeated searches over a dataset directory and write result CSVs.
    Bench {
        /// Dataset directory; the generated suite when absent.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        sequential: bool,
    },
    /// Write plot CSVs from a saved `results.json`.
    ExportPlots { results: PathBuf },
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    fleet: Option<usize>,
    alpha: Option<i64>,
    gamma: Option<i64>,
    min_recharge: Option<i64>,
    speed: Option<f64>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    map: Option<PathBuf>,
    swarm: Option<SwarmConfig>,
    bucket_seconds: Option<i64>,
}

struct Settings {
    fleet: usize,
    capacity: i64,
    energy: EnergyModel,
    speed: Option<f64>,
    seed: Option<u64>,
    out_dir: PathBuf,
    map: Option<PathBuf>,
    swarm: SwarmConfig,
    bucket_seconds: i64,
}

impl Settings {
    fn resolve(args: GlobalArgs) -> Result<Settings> {
        let file: FileConfig = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let defaults = EnergyModel::default();
        let energy = EnergyModel {
            full_recharge: args.gamma.or(file.gamma).unwrap_or(defaults.full_recharge),
            min_recharge: args.min_recharge.or(file.min_recharge).unwrap_or(defaults.min_recharge),
            ..defaults
        };
        if let Err(e) = energy.validate() {
            bail!("invalid energy settings: {e}");
        }
        Ok(Settings {
            fleet: args.fleet.or(file.fleet).unwrap_or(harness::DEFAULT_FLEET),
            capacity: args.alpha.or(file.alpha).unwrap_or(uavsched::domain::DEFAULT_BATTERY_CAPACITY),
            energy,
            speed: args.speed.or(file.speed),
            seed: args.seed.or(file.seed),
            out_dir: args.out_dir.or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            map: args.map.or(file.map),
            swarm: file.swarm.unwrap_or_default(),
            bucket_seconds: file.bucket_seconds.unwrap_or(harness::DEFAULT_BUCKET_SECONDS),
        })
    }

    fn load_map(&self, positional: Option<&Path>) -> Result<MapGraph> {
        let base = match positional.or(self.map.as_deref()) {
            Some(p) => MapGraph::load(p).with_context(|| format!("loading map {}", p.display()))?,
            None => MapGraph::lab_demo(),
        };
        match self.speed {
            Some(speed) => {
                let mut doc = base.to_document();
                doc.speed = Some(speed);
                Ok(MapGraph::from_document(&doc)?)
            }
            None => Ok(base),
        }
    }

    /// The map at the dataset's scale, when its file name carries one.
    fn map_for(&self, dataset: &Dataset, positional: Option<&Path>) -> Result<MapGraph> {
        let base = self.load_map(positional)?;
        Ok(match dataset.key {
            Some(k) => datagen::map_for(k.scale, &base)?,
            None => base,
        })
    }

    fn write_out(&self, out: Option<&Path>, text: &str) -> Result<()> {
        match out {
            Some(p) => {
                if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                fs::write(p, text).with_context(|| format!("writing {}", p.display()))
            }
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let settings = Settings::resolve(cli.global)?;
    match cli.command {
        Command::GenData {
            scale,
            tasks,
            pred_mean,
            slack_mean,
            out,
            unchecked,
        } => {
            let Some(scale) = GeoScale::from_factor(scale) else {
                bail!("scale must be 1 or 8");
            };
            let cfg = DatasetConfig {
                scale,
                tasks,
                pred_mean,
                slack_mean,
                seed: settings.seed.unwrap_or(1),
            };
            if !unchecked {
                cfg.check_levels()?;
            }
            let ts = datagen::generate_dataset(&cfg, &settings.load_map(None)?, &settings.energy)?;
            settings.write_out(out.as_deref(), &ts.to_json())?;
        }
        Command::GenSuite => {
            let datasets = harness::generate_suite(settings.seed.unwrap_or(1), &settings.load_map(None)?, &settings.energy)?;
            let paths = harness::write_datasets(&settings.out_dir, &datasets)?;
            eprintln!("wrote {} datasets to {}", paths.len(), settings.out_dir.display());
        }
        Command::Schedule {
            dataset,
            map,
            out,
            log,
            particles,
            generations,
            sequential,
        } => {
            let ds = Dataset::load(&dataset)?;
            let map = settings.map_for(&ds, map.as_deref())?;
            let fleet = UavSpec::fleet(&map, settings.fleet, settings.capacity);
            let inst = Instance::new(&map, &ds.tasks, &fleet, settings.energy)?;
            let swarm = SwarmConfig {
                particles: particles.unwrap_or(settings.swarm.particles),
                max_generations: generations.unwrap_or(settings.swarm.max_generations),
                seed: settings.seed.unwrap_or(settings.swarm.seed),
                ..settings.swarm
            };
            let best = optimize(&inst, &swarm, exec(sequential), None)?;
            if let Some(path) = log {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_log_csv(&best.log, file)?;
            }
            eprintln!(
                "energy {} makespan {} after {} generations ({} sequences)",
                best.energy,
                best.schedule.makespan(),
                best.log.len(),
                best.evaluations
            );
            settings.write_out(out.as_deref(), &best.schedule.to_json(&map))?;
        }
        Command::Validate { schedule, dataset, map } => {
            let ds = Dataset::load(&dataset)?;
            let map = settings.map_for(&ds, map.as_deref())?;
            let fleet = UavSpec::fleet(&map, settings.fleet, settings.capacity);
            let sched = Schedule::load(&schedule, &map).with_context(|| format!("loading {}", schedule.display()))?;
            let report = validate_schedule(&sched, &ds.tasks, &fleet, &map, &settings.energy)?;
            println!("{}", report.to_json());
            if !report.ok {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Oracle {
            dataset,
            map,
            max_tasks,
            max_uavs,
            time_budget,
            out,
        } => {
            let ds = Dataset::load(&dataset)?;
            let map = settings.map_for(&ds, map.as_deref())?;
            let fleet = UavSpec::fleet(&map, settings.fleet, settings.capacity);
            let inst = Instance::new(&map, &ds.tasks, &fleet, settings.energy)?;
            let defaults = OracleLimits::default();
            let limits = OracleLimits {
                max_tasks: max_tasks.unwrap_or(defaults.max_tasks),
                max_uavs: max_uavs.unwrap_or(defaults.max_uavs),
                time_budget: time_budget.map(Duration::from_secs).unwrap_or(defaults.time_budget),
            };
            let found = brute_force_optimal(&inst, &limits, Execution::Parallel)?;
            eprintln!(
                "optimal energy {} ({} structures, {} LP solves, {:.3} s)",
                found.energy,
                found.structures,
                found.lp_solves,
                found.elapsed.as_secs_f64()
            );
            settings.write_out(out.as_deref(), &found.schedule.to_json(&map))?;
        }
        Command::Bench { suite, reps, sequential } => {
            let base = settings.load_map(None)?;
            let datasets = match &suite {
                Some(dir) => harness::load_datasets(dir)?,
                None => harness::generate_suite(settings.seed.unwrap_or(1), &base, &settings.energy)?,
            };
            if datasets.is_empty() {
                bail!("no datasets to run");
            }
            let cfg = ExperimentConfig {
                fleet_size: settings.fleet,
                battery_capacity: settings.capacity,
                energy: settings.energy,
                swarm: settings.swarm,
                repetitions: reps,
                base_seed: settings.seed.unwrap_or(1),
                bucket_seconds: settings.bucket_seconds,
            };
            let results = harness::run_experiment(&datasets, &base, &cfg, exec(sequential))?;
            let mut written = results.write_csv(&settings.out_dir)?;
            written.extend(harness::export_plots(&results, &settings.out_dir)?);
            let json = settings.out_dir.join("results.json");
            fs::write(&json, results.to_json())?;
            written.push(json);
            let failed = results.attempts.iter().filter(|a| a.energy.is_none()).count();
            eprintln!("{} attempts, {failed} without a valid schedule", results.attempts.len());
            for p in written {
                eprintln!("  {}", p.display());
            }
        }
        Command::ExportPlots { results } => {
            let results = harness::Results::load(&results)?;
            for p in harness::export_plots(&results, &settings.out_dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
