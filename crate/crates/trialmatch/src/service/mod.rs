//! Annotation service: gold annotations and blind head-to-head judgments
//! over HTTP, persisted as an append-only event journal.
//!
//! There is no authentication. The service is meant to run on a trusted
//! machine or network for a small annotation team.

pub mod http;
pub mod journal;
pub mod state;

use std::path::Path;
use std::sync::{Mutex, RwLock, RwLockReadGuard};

use chrono::Utc;

use journal::Journal;
use state::{Event, ServiceError, State};

/// Shared service handle. Writes go through one journal writer; reads
/// only take the state lock.
pub struct Service {
    journal: Mutex<Journal>,
    state: RwLock<State>,
}

impl Service {
    pub fn open(journal_path: &Path) -> Result<Self, ServiceError> {
        let (journal, state) = Journal::open(journal_path)?;
        Ok(Service {
            journal: Mutex::new(journal),
            state: RwLock::new(state),
        })
    }

    pub fn state(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Plans events against the current state, journals them, then applies
    /// them. Holding the journal lock throughout keeps writers serial.
    pub fn execute<F>(&self, plan: F) -> Result<Vec<Event>, ServiceError>
    where
        F: FnOnce(&State, chrono::DateTime<Utc>) -> Result<Vec<Event>, ServiceError>,
    {
        let mut journal = self.journal.lock().unwrap_or_else(|e| e.into_inner());
        let now = Utc::now();
        let events = plan(&self.state(), now)?;
        if events.is_empty() {
            return Ok(events);
        }
        journal.append(&events, now)?;
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        for e in &events {
            state.apply(e);
        }
        Ok(events)
    }
}
