//! Occupation fragments: half-open busy intervals per position and per UAV.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::domain::{TaskId, UavId};
use crate::map::PosId;

/// Half-open interval `[start, end)` of integer seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeFragment {
    pub start: i64,
    pub end: i64,
}

impl TimeFragment {
    pub fn new(start: i64, end: i64) -> Self {
        debug_assert!(start <= end, "fragment [{start}, {end}) is reversed");
        TimeFragment { start, end }
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &TimeFragment) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn intersect(&self, other: &TimeFragment) -> Option<TimeFragment> {
        let f = TimeFragment {
            start: self.start.max(other.start),
            end: self.end.min(other.end),
        };
        (!f.is_empty()).then_some(f)
    }
}

impl fmt::Display for TimeFragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Parts of `window` not covered by any of the sorted, disjoint `occupied`
/// fragments, ascending.
pub fn trim_occupied_time_range(window: TimeFragment, occupied: &[TimeFragment]) -> Vec<TimeFragment> {
    let mut out = Vec::new();
    let mut cursor = window.start;
    let first = occupied.partition_point(|f| f.end <= window.start);
    for f in &occupied[first..] {
        if f.start >= window.end {
            break;
        }
        if f.start > cursor {
            out.push(TimeFragment::new(cursor, f.start));
        }
        cursor = cursor.max(f.end);
    }
    if cursor < window.end {
        out.push(TimeFragment::new(cursor, window.end));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("fragment {fragment} overlaps an existing occupation of {resource}")]
    OverlapViolation { resource: String, fragment: TimeFragment },
    #[error("unknown UAV {0}")]
    UnknownUav(UavId),
}

/// What a UAV occupation fragment is spent on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UofUse {
    Execution(TaskId),
    /// Connecting flight that ends where task `into` starts.
    Flight { from: PosId, to: PosId, into: TaskId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UofEntry {
    pub fragment: TimeFragment,
    pub serves: UofUse,
}

/// Everything a task placement adds to the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPlacement {
    pub task: TaskId,
    pub execution: TimeFragment,
    /// Position occupations; station positions are ignored.
    pub positions: Vec<(PosId, TimeFragment)>,
    pub inbound: Option<(PosId, PosId, TimeFragment)>,
    /// Flight from this task's end position into the next task on the UAV,
    /// replacing whatever flight previously led into that task.
    pub outbound: Option<(PosId, PosId, TimeFragment, TaskId)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OccupationLedger {
    pof: BTreeMap<PosId, Vec<(TimeFragment, TaskId)>>,
    uof: BTreeMap<UavId, Vec<UofEntry>>,
    stations: Vec<PosId>,
}

impl OccupationLedger {
    /// A ledger for the given UAVs; positions in `stations` never receive
    /// position occupations.
    pub fn new(uavs: impl IntoIterator<Item = UavId>, stations: impl IntoIterator<Item = PosId>) -> Self {
        OccupationLedger {
            pof: BTreeMap::new(),
            uof: uavs.into_iter().map(|u| (u, Vec::new())).collect(),
            stations: stations.into_iter().collect(),
        }
    }

    pub fn position_fragments(&self, pos: PosId) -> Vec<TimeFragment> {
        self.pof
            .get(&pos)
            .map(|v| v.iter().map(|(f, _)| *f).collect())
            .unwrap_or_default()
    }

    pub fn position_entries(&self, pos: PosId) -> &[(TimeFragment, TaskId)] {
        self.pof.get(&pos).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn uav_entries(&self, uav: UavId) -> Result<&[UofEntry], LedgerError> {
        self.uof.get(&uav).map(Vec::as_slice).ok_or(LedgerError::UnknownUav(uav))
    }

    pub fn uav_fragments(&self, uav: UavId) -> Result<Vec<TimeFragment>, LedgerError> {
        Ok(self.uav_entries(uav)?.iter().map(|e| e.fragment).collect())
    }

    /// Total occupied seconds of a UAV.
    pub fn workload(&self, uav: UavId) -> Result<i64, LedgerError> {
        Ok(self.uav_entries(uav)?.iter().map(|e| e.fragment.len()).sum())
    }

    pub fn unallocated_time_fragments(&self, uav: UavId, horizon: TimeFragment) -> Result<Vec<TimeFragment>, LedgerError> {
        Ok(trim_occupied_time_range(horizon, &self.uav_fragments(uav)?))
    }

    /// Latest end of any position occupation.
    pub fn latest_position_end(&self) -> i64 {
        self.pof
            .values()
            .filter_map(|v| v.last())
            .map(|(f, _)| f.end)
            .max()
            .unwrap_or(0)
    }

    /// Applies a placement atomically; on error the ledger is unchanged.
    pub fn commit(&mut self, uav: UavId, placement: &TaskPlacement) -> Result<(), LedgerError> {
        let mut pof_adds = Vec::new();
        for &(pos, frag) in &placement.positions {
            if frag.is_empty() || self.stations.contains(&pos) {
                continue;
            }
            let existing = self.pof.get(&pos).map(Vec::as_slice).unwrap_or(&[]);
            let clash = existing.iter().any(|(f, _)| f.overlaps(&frag))
                || pof_adds.iter().any(|&(p, f): &(PosId, TimeFragment)| p == pos && f.overlaps(&frag));
            if clash {
                return Err(LedgerError::OverlapViolation {
                    resource: format!("position {pos}"),
                    fragment: frag,
                });
            }
            pof_adds.push((pos, frag));
        }

        let line = self.uof.get(&uav).ok_or(LedgerError::UnknownUav(uav))?;
        let mut next: Vec<UofEntry> = match placement.outbound {
            Some((_, _, _, into)) => line
                .iter()
                .filter(|e| !matches!(e.serves, UofUse::Flight { into: t, .. } if t == into))
                .copied()
                .collect(),
            None => line.clone(),
        };
        let mut adds = vec![UofEntry {
            fragment: placement.execution,
            serves: UofUse::Execution(placement.task),
        }];
        if let Some((from, to, frag)) = placement.inbound {
            adds.push(UofEntry {
                fragment: frag,
                serves: UofUse::Flight {
                    from,
                    to,
                    into: placement.task,
                },
            });
        }
        if let Some((from, to, frag, into)) = placement.outbound {
            adds.push(UofEntry {
                fragment: frag,
                serves: UofUse::Flight { from, to, into },
            });
        }
        for a in adds {
            if a.fragment.is_empty() {
                continue;
            }
            if next.iter().any(|e| e.fragment.overlaps(&a.fragment)) {
                return Err(LedgerError::OverlapViolation {
                    resource: format!("UAV {uav}"),
                    fragment: a.fragment,
                });
            }
            next.push(a);
        }
        next.sort_by_key(|e| e.fragment);
        self.uof.insert(uav, next);
        for (pos, frag) in pof_adds {
            let v = self.pof.entry(pos).or_default();
            v.push((frag, placement.task));
            v.sort_by_key(|(f, _)| *f);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(a: i64, b: i64) -> TimeFragment {
        TimeFragment::new(a, b)
    }

    #[test]
    fn trimming() {
        assert_eq!(trim_occupied_time_range(tf(0, 100), &[]), vec![tf(0, 100)]);
        assert_eq!(
            trim_occupied_time_range(tf(0, 100), &[tf(20, 30), tf(50, 60)]),
            vec![tf(0, 20), tf(30, 50), tf(60, 100)]
        );
        assert!(trim_occupied_time_range(tf(10, 20), &[tf(0, 30)]).is_empty());
        assert_eq!(trim_occupied_time_range(tf(10, 20), &[tf(0, 10), tf(20, 30)]), vec![tf(10, 20)]);
    }

    fn exec(task: u32, frag: TimeFragment, pos: u32) -> TaskPlacement {
        TaskPlacement {
            task: TaskId(task),
            execution: frag,
            positions: vec![(PosId(pos), frag)],
            inbound: None,
            outbound: None,
        }
    }

    #[test]
    fn unallocated_is_the_complement() {
        let u = UavId(1);
        let mut l = OccupationLedger::new([u], []);
        assert_eq!(l.unallocated_time_fragments(u, tf(0, 50)).unwrap(), vec![tf(0, 50)]);
        l.commit(u, &exec(1, tf(0, 10), 0)).unwrap();
        l.commit(u, &exec(2, tf(40, 50), 1)).unwrap();
        assert_eq!(l.unallocated_time_fragments(u, tf(0, 50)).unwrap(), vec![tf(10, 40)]);
        assert_eq!(l.workload(u).unwrap(), 20);
        assert!(matches!(
            l.unallocated_time_fragments(UavId(9), tf(0, 1)),
            Err(LedgerError::UnknownUav(_))
        ));
    }

    #[test]
    fn commit_then_read_position() {
        let mut l = OccupationLedger::new([UavId(1), UavId(2)], [PosId(9)]);
        l.commit(UavId(1), &exec(1, tf(5, 15), 3)).unwrap();
        assert_eq!(l.position_fragments(PosId(3)), vec![tf(5, 15)]);
        let clash = l.commit(UavId(2), &exec(2, tf(10, 20), 3));
        assert!(matches!(clash, Err(LedgerError::OverlapViolation { .. })));
        assert_eq!(l.uav_fragments(UavId(2)).unwrap(), vec![]);
        // abutting is fine, stations are not tracked
        l.commit(UavId(2), &exec(3, tf(15, 20), 3)).unwrap();
        l.commit(UavId(2), &exec(4, tf(30, 40), 9)).unwrap();
        l.commit(UavId(1), &exec(5, tf(30, 40), 9)).unwrap();
        assert!(l.position_fragments(PosId(9)).is_empty());
    }

    #[test]
    fn insertion_supersedes_the_old_connecting_flight() {
        // B hosts task 1, D hosts task 3, A hosts task 4 inserted between them
        let (a, b, d) = (PosId(0), PosId(1), PosId(3));
        let u = UavId(1);
        let mut l = OccupationLedger::new([u], []);
        l.commit(u, &exec(1, tf(0, 10), b.0)).unwrap();
        l.commit(
            u,
            &TaskPlacement {
                inbound: Some((b, d, tf(90, 100))),
                ..exec(3, tf(100, 110), d.0)
            },
        )
        .unwrap();
        let stale = UofUse::Flight { from: b, to: d, into: TaskId(3) };
        assert!(l.uav_entries(u).unwrap().iter().any(|e| e.serves == stale));

        l.commit(
            u,
            &TaskPlacement {
                inbound: Some((b, a, tf(20, 30))),
                outbound: Some((a, d, tf(40, 50), TaskId(3))),
                ..exec(4, tf(30, 40), a.0)
            },
        )
        .unwrap();
        let entries = l.uav_entries(u).unwrap();
        assert!(!entries.iter().any(|e| e.serves == stale));
        let uses: Vec<UofUse> = entries.iter().map(|e| e.serves).collect();
        assert_eq!(
            uses,
            vec![
                UofUse::Execution(TaskId(1)),
                UofUse::Flight { from: b, to: a, into: TaskId(4) },
                UofUse::Execution(TaskId(4)),
                UofUse::Flight { from: a, to: d, into: TaskId(3) },
                UofUse::Execution(TaskId(3)),
            ]
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn disjoint_sorted() -> impl Strategy<Value = Vec<TimeFragment>> {
            prop::collection::vec((0i64..20, 1i64..20), 0..8).prop_map(|steps| {
                let mut t = 0;
                steps
                    .into_iter()
                    .map(|(gap, len)| {
                        t += gap;
                        let f = TimeFragment::new(t, t + len);
                        t += len;
                        f
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn trim_matches_pointwise_subtraction(occ in disjoint_sorted(), a in 0i64..150, len in 0i64..150) {
                let w = TimeFragment::new(a, a + len);
                let out = trim_occupied_time_range(w, &occ);
                for f in &out {
                    prop_assert!(!f.is_empty());
                    prop_assert!(occ.iter().all(|o| !o.overlaps(f)));
                }
                for pair in out.windows(2) {
                    prop_assert!(pair[0].end < pair[1].start);
                }
                for t in w.start..w.end {
                    let free = !occ.iter().any(|o| o.contains(t));
                    prop_assert_eq!(free, out.iter().any(|f| f.contains(t)));
                }
            }
        }
    }
}
