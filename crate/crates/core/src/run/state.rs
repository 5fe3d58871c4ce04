use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Pending,
    Generating,
    Rendering,
    Evaluating,
    Done,
    Failed,
}

impl InstanceStatus {
    fn rank(self) -> u8 {
        match self {
            InstanceStatus::Pending => 0,
            InstanceStatus::Generating => 1,
            InstanceStatus::Rendering => 2,
            InstanceStatus::Evaluating => 3,
            InstanceStatus::Done => 4,
            InstanceStatus::Failed => 5,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, InstanceStatus::Done | InstanceStatus::Failed)
    }

    pub fn is_in_flight(self) -> bool {
        matches!(
            self,
            InstanceStatus::Generating | InstanceStatus::Rendering | InstanceStatus::Evaluating
        )
    }

    /// Forward moves only, plus failure from any state except `done`.
    pub fn can_advance_to(self, next: InstanceStatus) -> bool {
        match next {
            InstanceStatus::Failed => self != InstanceStatus::Done && self != InstanceStatus::Failed,
            InstanceStatus::Pending => false,
            _ => !self.is_terminal() && next.rank() > self.rank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceState {
    pub status: InstanceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureInfo>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub pending: usize,
    pub generating: usize,
    pub rendering: usize,
    pub evaluating: usize,
    pub done: usize,
    pub failed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunPhase {
    /// Created, never executed.
    Created,
    /// An executor started; it may since have died.
    Running,
    /// Every instance is terminal and the report is written.
    Completed,
}

/// Per-instance progress ledger, persisted as `state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub phase: RunPhase,
    pub counters: Counters,
    /// Keyed by instance id.
    pub instances: BTreeMap<String, InstanceState>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("instance {id}: cannot move from {from:?} to {to:?}")]
pub struct InvalidTransition {
    pub id: String,
    pub from: InstanceStatus,
    pub to: InstanceStatus,
}

impl RunState {
    pub fn new<'a>(run_id: &str, ids: impl IntoIterator<Item = &'a str>) -> Self {
        let instances = ids
            .into_iter()
            .map(|id| {
                (
                    id.to_string(),
                    InstanceState {
                        status: InstanceStatus::Pending,
                        failure: None,
                    },
                )
            })
            .collect();
        let mut s = Self {
            run_id: run_id.to_string(),
            phase: RunPhase::Created,
            counters: Counters::default(),
            instances,
            updated_at: Utc::now(),
        };
        s.recount();
        s
    }

    pub fn recount(&mut self) {
        let mut c = Counters {
            total: self.instances.len(),
            ..Counters::default()
        };
        for s in self.instances.values() {
            match s.status {
                InstanceStatus::Pending => c.pending += 1,
                InstanceStatus::Generating => c.generating += 1,
                InstanceStatus::Rendering => c.rendering += 1,
                InstanceStatus::Evaluating => c.evaluating += 1,
                InstanceStatus::Done => c.done += 1,
                InstanceStatus::Failed => c.failed += 1,
            }
        }
        self.counters = c;
    }

    pub fn all_terminal(&self) -> bool {
        self.instances.values().all(|s| s.status.is_terminal())
    }

    pub fn advance(
        &mut self,
        id: &str,
        to: InstanceStatus,
        failure: Option<FailureInfo>,
    ) -> Result<(), InvalidTransition> {
        let entry = self.instances.get_mut(id).ok_or_else(|| InvalidTransition {
            id: id.to_string(),
            from: InstanceStatus::Pending,
            to,
        })?;
        if !entry.status.can_advance_to(to) {
            return Err(InvalidTransition {
                id: id.to_string(),
                from: entry.status,
                to,
            });
        }
        entry.status = to;
        entry.failure = failure;
        self.updated_at = Utc::now();
        self.recount();
        Ok(())
    }

    /// Send in-flight instances (and, if asked, failed ones) back to
    /// pending. Returns the ids that were reset.
    pub fn reset_for_resume(&mut self, retry_failed: bool) -> Vec<String> {
        let mut reset = Vec::new();
        for (id, s) in self.instances.iter_mut() {
            let again = s.status.is_in_flight()
                || (retry_failed && s.status == InstanceStatus::Failed);
            if again {
                s.status = InstanceStatus::Pending;
                s.failure = None;
                reset.push(id.clone());
            }
        }
        if !reset.is_empty() && self.phase == RunPhase::Completed {
            self.phase = RunPhase::Running;
        }
        self.updated_at = Utc::now();
        self.recount();
        reset
    }

    pub fn pending_ids(&self) -> Vec<String> {
        self.instances
            .iter()
            .filter(|(_, s)| s.status == InstanceStatus::Pending)
            .map(|(id, _)| id.clone())
            .collect()
    }
}
