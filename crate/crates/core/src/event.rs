//! Trace events: structural changes to the coalition partition, emergencies,
//! directive outcomes and relay assignments.

use crate::ids::{CoalitionId, UavId};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Merge,
    Split,
    Join,
    Leave,
    Switch,
    Found,
    Dissolve,
    Emergency,
    FieldAdded,
    FieldRemoved,
    Rejected,
    RelayAssigned,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Merge => "merge",
            EventKind::Split => "split",
            EventKind::Join => "join",
            EventKind::Leave => "leave",
            EventKind::Switch => "switch",
            EventKind::Found => "found",
            EventKind::Dissolve => "dissolve",
            EventKind::Emergency => "emergency",
            EventKind::FieldAdded => "field_added",
            EventKind::FieldRemoved => "field_removed",
            EventKind::Rejected => "rejected",
            EventKind::RelayAssigned => "relay_assigned",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What triggered a change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Directive,
    Emergency,
    Game,
    Operation,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Directive => "directive",
            Cause::Emergency => "emergency",
            Cause::Game => "game",
            Cause::Operation => "operation",
        }
    }
}

/// A change not yet stamped with a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub kind: EventKind,
    pub coalitions: Vec<CoalitionId>,
    pub uavs: Vec<UavId>,
    pub detail: String,
}

impl Change {
    pub fn new(kind: EventKind, coalitions: Vec<CoalitionId>, uavs: Vec<UavId>) -> Self {
        Change { kind, coalitions, uavs, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn at(self, step: u64, cause: Cause) -> Event {
        Event {
            step,
            kind: self.kind,
            cause,
            coalitions: self.coalitions,
            uavs: self.uavs,
            detail: self.detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub kind: EventKind,
    pub cause: Cause,
    pub coalitions: Vec<CoalitionId>,
    pub uavs: Vec<UavId>,
    pub detail: String,
}
