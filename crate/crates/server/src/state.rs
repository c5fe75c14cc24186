//! Dataset and session registries shared by all handlers.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use tokio::sync::Semaphore;
use xmap_core::session::run_pipeline_with_progress;
use xmap_core::{AnalysisSession, Dataset, Error, Progress, UmapConfig};

use crate::error::ApiError;

/// Extension of persisted session files inside the data directory.
pub const SESSION_EXTENSION: &str = "xmap";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Where ready sessions are written and restored from; `None` keeps
    /// everything in memory.
    pub data_dir: Option<PathBuf>,
    pub max_concurrent_fits: usize,
    /// Seed used when a fit request leaves `umap.seed` out.
    pub default_seed: u64,
    pub max_body_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            data_dir: None,
            max_concurrent_fits: 2,
            default_seed: UmapConfig::default().seed,
            max_body_bytes: 256 << 20,
        }
    }
}

pub enum SlotState {
    /// Queued or running. `total_epochs` is zero while waiting for a permit.
    Fitting(Arc<Progress>),
    Ready(Box<AnalysisSession>),
    Failed(Error),
}

impl SlotState {
    pub fn name(&self) -> &'static str {
        match self {
            SlotState::Fitting(_) => "fitting",
            SlotState::Ready(_) => "ready",
            SlotState::Failed(_) => "failed",
        }
    }
}

/// One session. Readers share the lock; selection edits, component changes
/// and fit completion take it exclusively.
pub type Slot = RwLock<SlotState>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServerConfig,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    fits: Arc<Semaphore>,
}

fn poisoned() -> ApiError {
    ApiError::internal("session lock poisoned by an earlier panic")
}

/// Ids are lowercase hex; anything else never reaches the file system.
fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        let permits = config.max_concurrent_fits.max(1);
        AppState {
            inner: Arc::new(Inner {
                config,
                datasets: RwLock::default(),
                sessions: RwLock::default(),
                fits: Arc::new(Semaphore::new(permits)),
            }),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn insert_dataset(&self, id: String, d: Dataset) {
        self.inner.datasets.write().expect("dataset map").insert(id, Arc::new(d));
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        self.inner
            .datasets
            .read()
            .expect("dataset map")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_dataset(id))
    }

    fn session_path(&self, id: &str) -> Option<PathBuf> {
        let dir = self.inner.config.data_dir.as_ref()?;
        valid_id(id).then(|| dir.join(format!("{id}.{SESSION_EXTENSION}")))
    }

    /// Looks a session up, restoring it from the data directory on a miss.
    pub fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(s) = self.inner.sessions.read().expect("session map").get(id) {
            return Ok(s.clone());
        }
        let path = self.session_path(id).ok_or_else(|| ApiError::unknown_session(id))?;
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ApiError::unknown_session(id))
            }
            Err(e) => return Err(Error::from(e).into()),
        };
        let session = AnalysisSession::load(&bytes)?;
        let mut map = self.inner.sessions.write().expect("session map");
        let slot = map
            .entry(id.to_owned())
            .or_insert_with(|| Arc::new(RwLock::new(SlotState::Ready(Box::new(session)))));
        Ok(slot.clone())
    }

    /// Registers an already fitted session (e.g. an uploaded file).
    pub fn insert_ready(&self, session: AnalysisSession) -> Result<String, ApiError> {
        let id = session.id.clone();
        if !valid_id(&id) {
            return Err(ApiError::bad_request("session id must be lowercase hex"));
        }
        self.persist(&session);
        let slot = Arc::new(RwLock::new(SlotState::Ready(Box::new(session))));
        self.inner.sessions.write().expect("session map").insert(id.clone(), slot);
        Ok(id)
    }

    pub fn read<T>(
        &self,
        id: &str,
        f: impl FnOnce(&AnalysisSession) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let slot = self.slot(id)?;
        let guard = slot.read().map_err(|_| poisoned())?;
        match &*guard {
            SlotState::Ready(s) => f(s),
            other => Err(ApiError::not_ready(id, other.name())),
        }
    }

    /// Runs a mutation and writes the updated session back to disk.
    pub fn write<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut AnalysisSession) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let slot = self.slot(id)?;
        let mut guard = slot.write().map_err(|_| poisoned())?;
        match &mut *guard {
            SlotState::Ready(s) => {
                let out = f(s)?;
                self.persist(s);
                Ok(out)
            }
            other => Err(ApiError::not_ready(id, other.name())),
        }
    }

    fn persist(&self, session: &AnalysisSession) {
        let Some(path) = self.session_path(&session.id) else { return };
        let result = session.save().and_then(|bytes| {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
            Ok(())
        });
        if let Err(e) = result {
            eprintln!("warning: could not persist session {}: {e}", session.id);
        }
    }

    /// Registers a session id for a fit and starts it in the background.
    /// A session that is already fitting or ready is left alone, so
    /// resubmitting the same request is idempotent.
    pub fn start_fit(&self, id: String, dataset: Arc<Dataset>, cfg: UmapConfig, max_pcs: usize) -> Result<(), ApiError> {
        let progress = Arc::new(Progress::new());
        let slot = {
            let mut map = self.inner.sessions.write().expect("session map");
            if let Some(existing) = map.get(&id) {
                let state = existing.read().map_err(|_| poisoned())?;
                if !matches!(*state, SlotState::Failed(_)) {
                    return Ok(());
                }
            } else if self.session_path(&id).is_some_and(|p| p.exists()) {
                drop(map);
                return self.slot(&id).map(|_| ());
            }
            let slot = Arc::new(RwLock::new(SlotState::Fitting(progress.clone())));
            map.insert(id.clone(), slot.clone());
            slot
        };

        let state = self.clone();
        let permits = self.inner.fits.clone();
        tokio::spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore never closed");
            let p = progress.clone();
            let fit = tokio::task::spawn_blocking(move || {
                run_pipeline_with_progress((*dataset).clone(), &cfg, max_pcs, Some(&p))
            })
            .await;
            let next = match fit {
                Ok(Ok(session)) => {
                    state.persist(&session);
                    SlotState::Ready(Box::new(session))
                }
                Ok(Err(e)) => SlotState::Failed(e),
                Err(e) => SlotState::Failed(Error::Io(format!("fit task failed: {e}"))),
            };
            if let Ok(mut guard) = slot.write() {
                *guard = next;
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_hex_ids_map_to_files() {
        assert!(valid_id("0123abcdef"));
        assert!(!valid_id("../etc"));
        assert!(!valid_id("ABC"));
        assert!(!valid_id(""));
    }
}
