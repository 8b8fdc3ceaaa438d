//! Battery-aware scheduling of indoor UAV tasks on a directed-path map.
//!
//! A task sequence is turned into a schedule by the restful task assignment
//! heuristic ([`rtaa`]); a particle swarm ([`pso`]) searches over sequences
//! for the lowest total battery consumption. Every emitted schedule can be
//! audited by the independent [`validator`].

pub mod datagen;
pub mod domain;
pub mod fragments;
pub mod harness;
pub mod map;
pub mod oracle;
pub mod par;
pub mod problem;
pub mod pso;
pub mod rtaa;
pub mod schedule;
pub mod timeline;
pub mod validator;

pub use domain::{EnergyModel, Task, TaskId, TaskKind, TaskSet, TaskSetError, TimeWindow, UavId, UavSpec};
pub use map::{MapError, MapGraph, PosId, UNREACHABLE};
pub use problem::{Instance, InstanceError};
pub use rtaa::{schedule_sequence, RtaaError};
pub use schedule::{Action, ActionKind, Schedule};
pub use validator::{energy_of, validate_schedule, Check, ValidationReport};
