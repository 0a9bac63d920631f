//! Server-side store of restricted boxes.
//!
//! The registry keeps its boxes pairwise disjoint: adding a box that overlaps
//! existing ones replaces all of them with their common bounding box, repeated
//! until no stored box overlaps the result. Vicinity queries select boxes by
//! great-circle distance from the query point to each box centroid.
//!
//! Writers are serialized by an internal mutex. Readers only wait while a
//! writer swaps its result into memory; persistence happens before that.

mod index;

use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::boxes::{BoxId, RestrictedBox};
use crate::geo::{BoxExtent, Distance, GeoError, GeoPoint};
use crate::snapshot::{self, SnapshotError};
use crate::wire::{WireBox, WireError};
use crate::Timestamp;
use index::GridIndex;

pub const DEFAULT_CELL_SIZE_DEG: f64 = 0.25;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("duplicate box id {0}")]
    DuplicateId(BoxId),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl From<SnapshotError> for RegistryError {
    fn from(e: SnapshotError) -> Self {
        match e {
            SnapshotError::Io { .. } => RegistryError::Storage(e.to_string()),
            SnapshotError::Corrupt { .. } => RegistryError::CorruptSnapshot(e.to_string()),
        }
    }
}

/// Where a persistent registry keeps its files.
#[derive(Debug, Clone, PartialEq)]
pub struct StorePaths {
    pub snapshot: PathBuf,
    pub audit_log: PathBuf,
}

impl StorePaths {
    /// Snapshot at `snapshot`, audit log next to it as `<name>.audit.jsonl`.
    pub fn beside(snapshot: impl Into<PathBuf>) -> Self {
        let snapshot = snapshot.into();
        let mut name = snapshot.file_name().unwrap_or_default().to_os_string();
        name.push(".audit.jsonl");
        let audit_log = snapshot.with_file_name(name);
        Self { snapshot, audit_log }
    }
}

#[derive(Debug, Clone)]
pub struct RegistryConfig {
    pub cell_size_deg: f64,
    /// Seeds the id generator; `None` draws from OS entropy.
    pub id_seed: Option<u64>,
    /// `None` keeps the registry in memory only.
    pub store: Option<StorePaths>,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            cell_size_deg: DEFAULT_CELL_SIZE_DEG,
            id_seed: None,
            store: None,
        }
    }
}

/// Result of [`Registry::add_box`].
#[derive(Debug, Clone, PartialEq)]
pub struct AddOutcome {
    /// The box as persisted, enlarged when it absorbed others.
    pub stored: RestrictedBox,
    /// Pre-existing boxes replaced by `stored`; empty when nothing overlapped.
    pub replaced_ids: Vec<BoxId>,
}

/// One line of the audit log: a box that was replaced by a merge.
#[derive(Serialize)]
struct AuditRecord {
    event: &'static str,
    absorbed_into: BoxId,
    absorbed_at: Timestamp,
    #[serde(rename = "box")]
    absorbed: WireBox,
}

struct State {
    boxes: HashMap<BoxId, RestrictedBox>,
    index: GridIndex,
}

impl State {
    fn insert(&mut self, b: RestrictedBox) {
        self.index.insert(&b);
        self.boxes.insert(b.id(), b);
    }

    fn remove(&mut self, id: BoxId) -> Option<RestrictedBox> {
        self.index.remove(id);
        self.boxes.remove(&id)
    }

    /// Grows `extent` by every stored box overlapping it until none is left.
    fn merge_closure(&self, extent: BoxExtent) -> (BoxExtent, Vec<BoxId>) {
        let mut merged = extent;
        let mut absorbed = Vec::new();
        let mut seen = HashSet::new();
        loop {
            let before = absorbed.len();
            let window = merged;
            self.index.for_each_candidate(&window, |e| {
                if e.extent.overlaps(&merged) && seen.insert(e.id) {
                    merged = merged.union(&e.extent);
                    absorbed.push(e.id);
                }
            });
            // growth during a pass may reach boxes outside this pass's window
            if absorbed.len() == before {
                return (merged, absorbed);
            }
        }
    }
}

struct UndoRecord {
    stored: BoxId,
    absorbed: Vec<RestrictedBox>,
    audit_len: Option<u64>,
}

struct Writer {
    rng: ChaCha8Rng,
    store: Option<StorePaths>,
    undo: Option<UndoRecord>,
}

impl Writer {
    fn fresh_id(&mut self, taken: &HashMap<BoxId, RestrictedBox>) -> BoxId {
        loop {
            let id = BoxId::from_u128(self.rng.random());
            if !taken.contains_key(&id) {
                return id;
            }
        }
    }
}

pub struct Registry {
    writer: Mutex<Writer>,
    state: RwLock<State>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("count", &self.count()).finish()
    }
}

fn storage_err(path: &Path, e: io::Error) -> RegistryError {
    RegistryError::Storage(format!("{}: {e}", path.display()))
}

impl Registry {
    /// An empty in-memory registry with default settings.
    pub fn in_memory() -> Self {
        Self::with_boxes(RegistryConfig::default(), Vec::new()).expect("empty registry")
    }

    /// Opens a registry. With a store configured, an existing snapshot is
    /// loaded; otherwise the registry starts empty.
    pub fn open(config: RegistryConfig) -> Result<Self, RegistryError> {
        let boxes = match &config.store {
            Some(paths) if paths.snapshot.exists() => read_snapshot(&paths.snapshot)?,
            _ => Vec::new(),
        };
        Self::with_boxes(config, boxes)
    }

    /// Loads the boxes of a snapshot file into a registry configured by `config`.
    pub fn load_snapshot(path: &Path, config: RegistryConfig) -> Result<Self, RegistryError> {
        let boxes = read_snapshot(path)?;
        Self::with_boxes(config, boxes)
    }

    fn with_boxes(config: RegistryConfig, boxes: Vec<RestrictedBox>) -> Result<Self, RegistryError> {
        if !(config.cell_size_deg.is_finite() && config.cell_size_deg > 0.0) {
            return Err(RegistryError::InvalidRequest(format!(
                "cell size {} must be positive",
                config.cell_size_deg
            )));
        }
        let rng = match config.id_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        let mut state = State {
            boxes: HashMap::with_capacity(boxes.len()),
            index: GridIndex::new(config.cell_size_deg),
        };
        for b in boxes {
            if state.boxes.contains_key(&b.id()) {
                return Err(RegistryError::DuplicateId(b.id()));
            }
            state.insert(b);
        }
        Ok(Self {
            writer: Mutex::new(Writer {
                rng,
                store: config.store,
                undo: None,
            }),
            state: RwLock::new(state),
        })
    }

    pub fn count(&self) -> usize {
        self.read().boxes.len()
    }

    pub fn all_boxes(&self) -> Vec<RestrictedBox> {
        self.read().boxes.values().cloned().collect()
    }

    pub fn get(&self, id: BoxId) -> Option<RestrictedBox> {
        self.read().boxes.get(&id).cloned()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn lock_writer(&self) -> std::sync::MutexGuard<'_, Writer> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Adds a restricted box, merging it with every box it overlaps.
    ///
    /// Persistent registries write the audit records and the new snapshot
    /// before the in-memory state changes; a storage error leaves both the
    /// files and memory as they were.
    pub fn add_box(
        &self,
        extent: BoxExtent,
        added_by: &str,
        reason: &str,
        now: Timestamp,
    ) -> Result<AddOutcome, RegistryError> {
        if added_by.trim().is_empty() {
            return Err(RegistryError::InvalidRequest("added_by must not be empty".into()));
        }
        let mut writer = self.lock_writer();

        let state = self.read();
        let (merged, replaced_ids) = state.merge_closure(extent);
        let id = writer.fresh_id(&state.boxes);
        let stored = RestrictedBox::new(id, merged, added_by, reason, now);

        let mut audit_len = None;
        if let Some(paths) = &writer.store {
            let replaced: HashSet<BoxId> = replaced_ids.iter().copied().collect();
            if !replaced_ids.is_empty() {
                let records = replaced_ids.iter().map(|rid| AuditRecord {
                    event: "absorbed",
                    absorbed_into: id,
                    absorbed_at: now,
                    absorbed: WireBox::from(&state.boxes[rid]),
                });
                audit_len = Some(append_audit(&paths.audit_log, records)?);
            }
            let survivors = state
                .boxes
                .values()
                .filter(|b| !replaced.contains(&b.id()))
                .chain(std::iter::once(&stored))
                .map(WireBox::from);
            if let Err(e) = snapshot::save::<(), _, _>(&paths.snapshot, None, survivors) {
                if let Some(len) = audit_len {
                    let _ = truncate(&paths.audit_log, len);
                }
                return Err(e.into());
            }
        }
        drop(state);

        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let absorbed: Vec<RestrictedBox> = replaced_ids
            .iter()
            .map(|rid| state.remove(*rid).expect("merge candidates are stored"))
            .collect();
        state.insert(stored.clone());
        drop(state);

        writer.undo = Some(UndoRecord {
            stored: id,
            absorbed,
            audit_len,
        });
        Ok(AddOutcome { stored, replaced_ids })
    }

    /// Reverts the most recent [`add_box`](Self::add_box), restoring the boxes
    /// it absorbed and truncating the audit log back to its prior length.
    /// Returns `false` when there is nothing to undo. Only one level is kept;
    /// [`import`](Self::import) clears it.
    pub fn undo_last_add(&self) -> Result<bool, RegistryError> {
        let mut writer = self.lock_writer();
        let Some(undo) = writer.undo.take() else {
            return Ok(false);
        };
        if let Some(paths) = &writer.store {
            let state = self.read();
            let survivors = state
                .boxes
                .values()
                .filter(|b| b.id() != undo.stored)
                .chain(undo.absorbed.iter())
                .map(WireBox::from);
            if let Err(e) = snapshot::save::<(), _, _>(&paths.snapshot, None, survivors) {
                drop(state);
                writer.undo = Some(undo);
                return Err(e.into());
            }
            if let Some(len) = undo.audit_len {
                truncate(&paths.audit_log, len).map_err(|e| storage_err(&paths.audit_log, e))?;
            }
        }
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        state.remove(undo.stored);
        for b in undo.absorbed {
            state.insert(b);
        }
        Ok(true)
    }

    /// Inserts boxes verbatim, without overlap checks or merging.
    ///
    /// Meant for bulk-loading trusted datasets; the disjointness that
    /// [`add_box`](Self::add_box) maintains is not enforced here.
    pub fn import(&self, boxes: Vec<RestrictedBox>) -> Result<usize, RegistryError> {
        let mut writer = self.lock_writer();
        let state = self.read();
        let mut fresh = HashSet::with_capacity(boxes.len());
        for b in &boxes {
            if state.boxes.contains_key(&b.id()) || !fresh.insert(b.id()) {
                return Err(RegistryError::DuplicateId(b.id()));
            }
        }
        if let Some(paths) = &writer.store {
            let all = state.boxes.values().chain(boxes.iter()).map(WireBox::from);
            snapshot::save::<(), _, _>(&paths.snapshot, None, all)?;
        }
        drop(state);
        let n = boxes.len();
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        for b in boxes {
            state.insert(b);
        }
        writer.undo = None;
        Ok(n)
    }

    /// Boxes whose centroid is within `radius` (inclusive) of `center`.
    pub fn boxes_within_radius(
        &self,
        center: GeoPoint,
        radius: Distance,
    ) -> Result<Vec<RestrictedBox>, RegistryError> {
        if radius.meters() <= 0.0 {
            return Err(RegistryError::InvalidRequest(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let state = self.read();
        Ok(state
            .index
            .within_radius(center, radius)
            .into_iter()
            .map(|id| state.boxes[&id].clone())
            .collect())
    }

    /// Writes every box to `path` atomically. Returns the file size in bytes.
    pub fn save_snapshot(&self, path: &Path) -> Result<u64, RegistryError> {
        let _writer = self.lock_writer();
        let state = self.read();
        Ok(snapshot::save::<(), _, _>(
            path,
            None,
            state.boxes.values().map(WireBox::from),
        )?)
    }
}

/// Reads and validates the boxes of a registry snapshot.
pub fn read_snapshot(path: &Path) -> Result<Vec<RestrictedBox>, RegistryError> {
    let decoded = snapshot::load::<(), WireBox>(path, false)?;
    decoded
        .records
        .into_iter()
        .map(|w| {
            RestrictedBox::try_from(w)
                .map_err(|e: WireError| RegistryError::CorruptSnapshot(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Appends JSON lines and syncs. Returns the file length before the append.
fn append_audit<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<u64, RegistryError> {
    let run = || -> io::Result<u64> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let len = file.metadata()?.len();
        let mut w = BufWriter::new(&file);
        let written = (|| {
            for r in records {
                serde_json::to_writer(&mut w, &r)?;
                w.write_all(b"\n")?;
            }
            w.flush()
        })();
        drop(w);
        if let Err(e) = written.and_then(|_| file.sync_data()) {
            let _ = file.set_len(len);
            return Err(e);
        }
        Ok(len)
    };
    run().map_err(|e| storage_err(path, e))
}

fn truncate(path: &Path, len: u64) -> io::Result<()> {
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(len)?;
    f.sync_data()
}

/// Size of a file in bytes, or 0 when it does not exist.
pub fn file_len(path: &Path) -> u64 {
    fs::metadata(path).map(|m| m.len()).unwrap_or(0)
}
