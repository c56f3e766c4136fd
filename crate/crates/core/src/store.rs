//! File-based experience store.
//!
//! Layout: `<root>/index.json` plus one `<root>/<experience_id>.json` per
//! experience. Every file is replaced by writing a temporary sibling and
//! renaming it over the target, and writers serialize on `<root>/.lock`.
//! Outcome counters live in the index and are overlaid on loaded
//! experiences.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::{Experience, ExperienceError};
use crate::monitor::Level;
use crate::sts::Fingerprint;

const INDEX_FILE: &str = "index.json";
const LOCK_FILE: &str = ".lock";
const LOCK_ATTEMPTS: u32 = 200;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] io::Error),
    #[error("store index: {0}")]
    Index(#[from] serde_json::Error),
    #[error("experience `{0}` not found")]
    NotFound(String),
    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error(transparent)]
    Experience(#[from] ExperienceError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub experience_id: String,
    pub task_label: String,
    pub role_digest: String,
    pub digest: String,
    pub created_at: u64,
    pub success_count: u64,
    pub failure_count: u64,
    /// Relative to the store root.
    pub path: String,
}

impl IndexEntry {
    /// `success / max(1, success + failure)`.
    pub fn success_rate(&self) -> f64 {
        self.success_count as f64 / (self.success_count + self.failure_count).max(1) as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub entries: Vec<IndexEntry>,
}

impl StoreIndex {
    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.experience_id == id)
    }
}

/// One candidate returned by [`select`], best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub experience_id: String,
    /// `Low` when the layout digest matches exactly.
    pub level_hint: Level,
    pub success_rate: f64,
    pub created_at: u64,
}

/// Exclusive writer lock, released on drop.
struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    fn acquire(root: &Path) -> Result<Self, StoreError> {
        let path = root.join(LOCK_FILE);
        for _ in 0..LOCK_ATTEMPTS {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(Self { path }),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(e.into()),
            }
        }
        Err(StoreError::Locked(root.to_path_buf()))
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_atomic_with(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> io::Result<()>,
) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        before_rename()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    write_atomic_with(path, bytes, || Ok(()))
}

fn read_index(root: &Path) -> Result<StoreIndex, StoreError> {
    match fs::read_to_string(root.join(INDEX_FILE)) {
        Ok(text) => Ok(serde_json::from_str(&text)?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(StoreIndex::default()),
        Err(e) => Err(e.into()),
    }
}

fn write_index_with(
    root: &Path,
    index: &StoreIndex,
    before_rename: impl FnOnce() -> io::Result<()>,
) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(index)?;
    write_atomic_with(&root.join(INDEX_FILE), text.as_bytes(), before_rename)?;
    Ok(())
}

fn save_with(
    exp: &Experience,
    root: &Path,
    before_index_rename: impl FnOnce() -> io::Result<()>,
) -> Result<String, StoreError> {
    exp.validate()?;
    fs::create_dir_all(root)?;
    let _lock = StoreLock::acquire(root)?;
    let mut index = read_index(root)?;
    let path = format!("{}.json", exp.experience_id);
    write_atomic(&root.join(&path), exp.to_json().as_bytes())?;

    let (success_count, failure_count) = index
        .get(&exp.experience_id)
        .map(|e| (e.success_count, e.failure_count))
        .unwrap_or((exp.metadata.success_count, exp.metadata.failure_count));
    let entry = IndexEntry {
        experience_id: exp.experience_id.clone(),
        task_label: exp.task_label.clone(),
        role_digest: exp.env_fingerprint.role_digest.clone(),
        digest: exp.env_fingerprint.digest.clone(),
        created_at: exp.metadata.created_at,
        success_count,
        failure_count,
        path,
    };
    match index.entries.iter_mut().find(|e| e.experience_id == exp.experience_id) {
        Some(slot) => *slot = entry,
        None => index.entries.push(entry),
    }
    write_index_with(root, &index, before_index_rename)?;
    Ok(exp.experience_id.clone())
}

/// Persists `exp`. Re-saving an id replaces its content and keeps its
/// counters.
pub fn save(exp: &Experience, root: &Path) -> Result<String, StoreError> {
    save_with(exp, root, || Ok(()))
}

/// The index, ordered by creation time.
pub fn list(root: &Path) -> Result<StoreIndex, StoreError> {
    let mut index = read_index(root)?;
    index
        .entries
        .sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.experience_id.cmp(&b.experience_id)));
    Ok(index)
}

pub fn load(root: &Path, experience_id: &str) -> Result<Experience, StoreError> {
    let index = read_index(root)?;
    let entry = index
        .get(experience_id)
        .ok_or_else(|| StoreError::NotFound(experience_id.to_string()))?;
    let mut exp = Experience::load(&root.join(&entry.path))?;
    exp.metadata.success_count = entry.success_count;
    exp.metadata.failure_count = entry.failure_count;
    Ok(exp)
}

/// Experiences for `task_label` whose role layout matches `world`, ranked by
/// exact layout match, then success rate, then recency.
pub fn select(root: &Path, task_label: &str, world: &Fingerprint) -> Result<Vec<Selection>, StoreError> {
    let index = read_index(root)?;
    let mut hits: Vec<&IndexEntry> = index
        .entries
        .iter()
        .filter(|e| e.task_label == task_label && e.role_digest == world.role_digest)
        .collect();
    hits.sort_by(|a, b| {
        let exact = |e: &IndexEntry| e.digest == world.digest;
        exact(b)
            .cmp(&exact(a))
            .then(b.success_rate().total_cmp(&a.success_rate()))
            .then(b.created_at.cmp(&a.created_at))
            .then(a.experience_id.cmp(&b.experience_id))
    });
    Ok(hits
        .into_iter()
        .map(|e| Selection {
            experience_id: e.experience_id.clone(),
            level_hint: if e.digest == world.digest { Level::Low } else { Level::High },
            success_rate: e.success_rate(),
            created_at: e.created_at,
        })
        .collect())
}

/// Adds one success or failure to an experience's counters.
pub fn record_outcome(root: &Path, experience_id: &str, success: bool) -> Result<(), StoreError> {
    let _lock = StoreLock::acquire(root)?;
    let mut index = read_index(root)?;
    let entry = index
        .entries
        .iter_mut()
        .find(|e| e.experience_id == experience_id)
        .ok_or_else(|| StoreError::NotFound(experience_id.to_string()))?;
    if success {
        entry.success_count += 1;
    } else {
        entry.failure_count += 1;
    }
    write_index_with(root, &index, || Ok(()))
}
