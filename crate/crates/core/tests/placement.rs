mod common;

use common::{inspection, map_of, pair_map, trio_map};
use proptest::prelude::*;
use uavsched::rtaa::Construction;
use uavsched::{energy_of, validate_schedule, EnergyModel, Instance, Task, TaskId, TaskSet, TimeWindow, UavId, UavSpec};

fn assign(c: &mut Construction, task: u32) -> bool {
    let prefs = c.preferred_uavs(TaskId(task));
    c.bfpa_assign(TaskId(task), &prefs)
}

#[test]
fn tighter_task_first_can_block_the_looser_one() {
    let map = pair_map();
    // 11 has 17 s of slack, 12 only 8 s; both inspect p
    let ts = TaskSet::new(vec![inspection(11, "p", Some((100, 127)), &[]), inspection(12, "p", Some((100, 118)), &[])]).unwrap();
    let fleet = UavSpec::fleet(&map, 1, 1200);
    let inst = Instance::new(&map, &ts, &fleet, EnergyModel::default()).unwrap();

    let mut c = Construction::new(&inst);
    assert!(assign(&mut c, 11));
    assert!(assign(&mut c, 12));
    assert_eq!(c.placement(TaskId(11)), Some((UavId(1), 117)));
    assert_eq!(c.placement(TaskId(12)), Some((UavId(1), 107)));

    let mut c = Construction::new(&inst);
    assert!(assign(&mut c, 12));
    assert_eq!(c.placement(TaskId(12)), Some((UavId(1), 108)));
    assert!(!assign(&mut c, 11));
}

#[test]
fn windowless_first_task_starts_after_the_approach() {
    let map = pair_map();
    let ts = TaskSet::new(vec![inspection(1, "p", None, &[])]).unwrap();
    let fleet = UavSpec::fleet(&map, 1, 1200);
    let inst = Instance::new(&map, &ts, &fleet, EnergyModel::default()).unwrap();
    let mut c = Construction::new(&inst);
    let prefs = c.preferred_uavs(TaskId(1));
    assert!(!c.bfpa_assign(TaskId(1), &prefs));
    assert!(c.ffpa_assign(TaskId(1), &prefs));
    assert_eq!(c.placement(TaskId(1)), Some((UavId(1), 20)));
}

#[test]
fn fully_occupied_window_defeats_both_placements() {
    let map = pair_map();
    let ts = TaskSet::new(vec![inspection(1, "p", Some((100, 110)), &[]), inspection(2, "p", Some((100, 110)), &[])]).unwrap();
    let fleet = UavSpec::fleet(&map, 2, 1200);
    let inst = Instance::new(&map, &ts, &fleet, EnergyModel::default()).unwrap();
    let mut c = Construction::new(&inst);
    assert!(assign(&mut c, 1));
    let prefs = c.preferred_uavs(TaskId(2));
    assert!(!c.bfpa_assign(TaskId(2), &prefs));
    assert!(!c.ffpa_assign(TaskId(2), &prefs));
}

#[test]
fn forward_placement_takes_the_first_gap_that_fits() {
    let map = trio_map();
    // a line of duties at q leaves idle stretches [50, 120) and [200, 300) around p
    let ts = TaskSet::new(vec![
        inspection(1, "q", Some((40, 50)), &[]),
        inspection(2, "q", Some((120, 130)), &[]),
        inspection(3, "q", Some((190, 200)), &[]),
        inspection(4, "q", Some((300, 310)), &[]),
        Task {
            id: TaskId(5),
            start: "p".into(),
            end: "p".into(),
            processing: 10,
            window: Some(TimeWindow { release: 0, due: 600 }),
            predecessors: vec![],
        },
    ])
    .unwrap();
    let fleet = UavSpec::fleet(&map, 1, 1200);
    let inst = Instance::new(&map, &ts, &fleet, EnergyModel::default()).unwrap();
    let mut c = Construction::new(&inst);
    for t in 1..=4 {
        assert!(assign(&mut c, t));
    }
    let prefs = c.preferred_uavs(TaskId(5));
    assert!(c.ffpa_assign(TaskId(5), &prefs));
    // 20 s from q to p after the duty ending at 50
    assert_eq!(c.placement(TaskId(5)), Some((UavId(1), 70)));
}

#[derive(Debug, Clone)]
struct Spec {
    mh: bool,
    at_p: bool,
    window: Option<(i64, i64)>,
    after_previous: bool,
}

fn spec() -> impl Strategy<Value = Spec> {
    (any::<bool>(), any::<bool>(), prop::option::weighted(0.8, (0i64..400, 0i64..300)), prop::bool::weighted(0.25)).prop_map(
        |(mh, at_p, window, after_previous)| Spec {
            mh,
            at_p,
            window,
            after_previous,
        },
    )
}

fn build(specs: &[Spec]) -> TaskSet {
    let mut tasks: Vec<Task> = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        let (start, end) = match (s.mh, s.at_p) {
            (false, true) => ("p", "p"),
            (false, false) => ("q", "q"),
            (true, true) => ("p", "q"),
            (true, false) => ("q", "p"),
        };
        let processing = if s.mh { 50 } else { 10 };
        let prev_due = tasks.last().and_then(|t: &Task| t.window.map(|w| w.due));
        let link = s.after_previous && s.window.is_some() && prev_due.is_some();
        let window = s.window.map(|(release, slack)| {
            let release = if link { release.max(prev_due.unwrap()) } else { release };
            TimeWindow {
                release,
                due: release + processing + slack,
            }
        });
        tasks.push(Task {
            id: TaskId(i as u32 + 1),
            start: start.into(),
            end: end.into(),
            processing,
            window,
            predecessors: if link { vec![TaskId(i as u32)] } else { vec![] },
        });
    }
    TaskSet::new(tasks).unwrap()
}

const SCAN_TO: i64 = 4000;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn placements_are_extreme_and_complete(specs in prop::collection::vec(spec(), 1..6), uavs in 1usize..3) {
        let map = trio_map();
        let ts = build(&specs);
        let fleet = UavSpec::fleet(&map, uavs, 1200);
        let inst = Instance::new(&map, &ts, &fleet, EnergyModel::default()).unwrap();
        let mut c = Construction::new(&inst);
        let mut complete = true;
        for t in ts.tasks() {
            let id = t.id;
            let w = t.processing;
            let prefs = c.preferred_uavs(id);
            let range = t.window.map_or((0, SCAN_TO), |win| (win.release, win.due - w));
            let feasible_on = |c: &Construction, u: UavId| (range.0..=range.1).filter(|&s| c.is_feasible_start(u, id, s)).collect::<Vec<i64>>();

            if t.window.is_some() {
                let before = c.clone();
                if c.bfpa_assign(id, &prefs) {
                    let (u, s) = c.placement(id).unwrap();
                    let options = feasible_on(&before, u);
                    prop_assert_eq!(options.last().copied(), Some(s), "backward placement of {} is not the latest", id);
                    for earlier in prefs.iter().take_while(|&&p| p != u) {
                        prop_assert!(feasible_on(&before, *earlier).is_empty(), "UAV {} was skipped with room for {}", earlier, id);
                    }
                    continue;
                }
                for &u in &prefs {
                    prop_assert!(feasible_on(&before, u).is_empty(), "backward placement missed a start for {}", id);
                }
            }
            let before = c.clone();
            if c.ffpa_assign(id, &prefs) {
                let (u, s) = c.placement(id).unwrap();
                let options = feasible_on(&before, u);
                prop_assert_eq!(options.first().copied(), Some(s), "forward placement of {} is not the earliest", id);
            } else {
                for &u in &prefs {
                    prop_assert!(feasible_on(&before, u).is_empty(), "forward placement missed a start for {}", id);
                }
                complete = false;
                break;
            }
        }
        if complete {
            let sched = c.insert_support_actions().unwrap();
            let report = validate_schedule(&sched, &ts, &fleet, &map, &EnergyModel::default()).unwrap();
            prop_assert!(report.ok, "{:?}", report.violations);
            prop_assert_eq!(energy_of(&sched), sched.energy);
        }
    }

    #[test]
    fn every_sequence_schedule_validates(specs in prop::collection::vec(spec(), 1..7), uavs in 1usize..4, rot in 0usize..7) {
        let map = map_of(
            &[("p", false), ("q", false), ("r", true), ("h", true)],
            &[("r", "p", 20), ("p", "r", 20), ("r", "q", 30), ("q", "r", 30), ("p", "q", 15), ("q", "p", 15), ("h", "q", 10), ("q", "h", 10), ("h", "r", 25), ("r", "h", 25)],
        );
        let ts = build(&specs);
        let fleet = UavSpec::fleet(&map, uavs, 1200);
        let inst = Instance::new(&map, &ts, &fleet, EnergyModel::default()).unwrap();
        let mut seq: Vec<TaskId> = ts.ids().collect();
        let n = seq.len();
        seq.rotate_left(rot % n);
        if let Ok(sched) = uavsched::schedule_sequence(&inst, &seq) {
            let report = validate_schedule(&sched, &ts, &fleet, &map, &EnergyModel::default()).unwrap();
            prop_assert!(report.ok, "{:?}", report.violations);
            prop_assert_eq!(report.energy, sched.energy);
            let floor = report.battery.minimum().unwrap();
            prop_assert!(floor > num_rational::Rational64::from_integer(0));
        }
    }
}
