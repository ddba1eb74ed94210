//! Append-only document store.
//!
//! Layout under the root directory:
//! - `instances/{id}.json`, written once;
//! - `jobs/{id}.jsonl`, one line per status change, newest last;
//! - `results/{id}.json`, written once before the job turns `done`.

use crate::model::{InstanceRecord, JobRecord, JobResult, JobStatus};
use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed document {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("unknown job {0}")]
    UnknownJob(Uuid),
    #[error("job {id} cannot move from {from:?} to {to:?}")]
    Transition { id: Uuid, from: JobStatus, to: JobStatus },
    #[error("{0} already exists")]
    Exists(PathBuf),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Default)]
struct Index {
    instances: HashMap<Uuid, Arc<InstanceRecord>>,
    jobs: HashMap<Uuid, JobRecord>,
    results: HashMap<Uuid, Arc<JobResult>>,
}

pub struct Store {
    root: PathBuf,
    index: Mutex<Index>,
}

impl Store {
    /// Opens or creates a store and loads every document under `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["instances", "jobs", "results"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io(&dir))?;
        }
        let mut index = Index::default();
        for path in Self::files(&root.join("instances"), "json")? {
            let rec: InstanceRecord = read_json(&path)?;
            index.instances.insert(rec.id, Arc::new(rec));
        }
        for path in Self::files(&root.join("jobs"), "jsonl")? {
            if let Some(rec) = last_line(&path)? {
                index.jobs.insert(rec.id, rec);
            }
        }
        for path in Self::files(&root.join("results"), "json")? {
            let res: JobResult = read_json(&path)?;
            index.results.insert(res.job_id, Arc::new(res));
        }
        Ok(Self {
            root,
            index: Mutex::new(index),
        })
    }

    fn files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).map_err(io(dir))? {
            let path = entry.map_err(io(dir))?.path();
            if path.extension().is_some_and(|e| e == ext) {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Index> {
        self.index.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn put_instance(&self, record: InstanceRecord) -> Result<Arc<InstanceRecord>, StoreError> {
        let path = self.root.join("instances").join(format!("{}.json", record.id));
        write_once(&path, &record)?;
        let record = Arc::new(record);
        self.lock().instances.insert(record.id, record.clone());
        Ok(record)
    }

    pub fn instance(&self, id: &Uuid) -> Option<Arc<InstanceRecord>> {
        self.lock().instances.get(id).cloned()
    }

    pub fn job(&self, id: &Uuid) -> Option<JobRecord> {
        self.lock().jobs.get(id).cloned()
    }

    pub fn result(&self, id: &Uuid) -> Option<Arc<JobResult>> {
        self.lock().results.get(id).cloned()
    }

    /// Jobs in the given status, oldest first.
    pub fn jobs_with_status(&self, status: JobStatus) -> Vec<JobRecord> {
        let mut jobs: Vec<JobRecord> = self.lock().jobs.values().filter(|j| j.status == status).cloned().collect();
        jobs.sort_by_key(|j| j.id);
        jobs
    }

    /// Records a new job; it must be `queued`.
    pub fn create_job(&self, record: JobRecord) -> Result<(), StoreError> {
        let mut index = self.lock();
        if index.jobs.contains_key(&record.id) || record.status != JobStatus::Queued {
            return Err(StoreError::Exists(self.job_log(&record.id)));
        }
        self.append(&record)?;
        index.jobs.insert(record.id, record);
        Ok(())
    }

    /// Appends the next state of a job after checking the transition.
    pub fn advance(&self, id: &Uuid, status: JobStatus, error: Option<String>) -> Result<JobRecord, StoreError> {
        let mut index = self.lock();
        let current = index.jobs.get(id).ok_or(StoreError::UnknownJob(*id))?;
        if !current.status.can_become(status) {
            return Err(StoreError::Transition {
                id: *id,
                from: current.status,
                to: status,
            });
        }
        if status == JobStatus::Done && !index.results.contains_key(id) {
            return Err(StoreError::Transition {
                id: *id,
                from: current.status,
                to: status,
            });
        }
        let next = JobRecord {
            status,
            error,
            ..current.clone()
        };
        self.append(&next)?;
        index.jobs.insert(*id, next.clone());
        Ok(next)
    }

    /// Stores the result and marks the job `done`.
    pub fn finish(&self, result: JobResult) -> Result<JobRecord, StoreError> {
        let id = result.job_id;
        let path = self.root.join("results").join(format!("{id}.json"));
        {
            let mut index = self.lock();
            match index.jobs.get(&id) {
                None => return Err(StoreError::UnknownJob(id)),
                Some(j) if !j.status.can_become(JobStatus::Done) => {
                    return Err(StoreError::Transition {
                        id,
                        from: j.status,
                        to: JobStatus::Done,
                    })
                }
                Some(_) => {}
            }
            write_once(&path, &result)?;
            index.results.insert(id, Arc::new(result));
        }
        self.advance(&id, JobStatus::Done, None)
    }

    fn job_log(&self, id: &Uuid) -> PathBuf {
        self.root.join("jobs").join(format!("{id}.jsonl"))
    }

    fn append(&self, record: &JobRecord) -> Result<(), StoreError> {
        let path = self.job_log(&record.id);
        let mut line = serde_json::to_vec(record).map_err(|source| StoreError::Json {
            path: path.clone(),
            source,
        })?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
        f.write_all(&line).map_err(io(&path))?;
        f.sync_data().map_err(io(&path))
    }
}

fn write_once<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|source| StoreError::Json {
        path: path.to_owned(),
        source,
    })?;
    let mut f = match OpenOptions::new().write(true).create_new(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(StoreError::Exists(path.to_owned())),
        Err(e) => return Err(io(path)(e)),
    };
    f.write_all(&bytes).map_err(io(path))?;
    f.sync_data().map_err(io(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let f = File::open(path).map_err(io(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| StoreError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Newest complete record of a job log. A torn final line is ignored and
/// terminated so later appends start on a fresh line.
fn last_line(path: &Path) -> Result<Option<JobRecord>, StoreError> {
    let bytes = fs::read(path).map_err(io(path))?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        let mut f = OpenOptions::new().append(true).open(path).map_err(io(path))?;
        f.write_all(b"\n").map_err(io(path))?;
    }
    let mut last = None;
    for line in bytes.as_slice().lines() {
        let line = line.map_err(io(path))?;
        if let Ok(rec) = serde_json::from_str::<JobRecord>(&line) {
            last = Some(rec);
        }
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SolveParams, SCHEMA_VERSION};

    fn job(id: Uuid) -> JobRecord {
        JobRecord {
            schema_version: SCHEMA_VERSION,
            id,
            instance_id: Uuid::nil(),
            params: SolveParams::default(),
            status: JobStatus::Queued,
            base_job_id: None,
            overrides: None,
            error: None,
        }
    }

    #[test]
    fn job_log_is_append_only_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let id = Uuid::now_v7();
        {
            let store = Store::open(dir.path()).unwrap();
            store.create_job(job(id)).unwrap();
            assert!(store.create_job(job(id)).is_err());
            store.advance(&id, JobStatus::Running, None).unwrap();
            assert!(matches!(
                store.advance(&id, JobStatus::Queued, None),
                Err(StoreError::Transition { .. })
            ));
            assert!(store.advance(&id, JobStatus::Done, None).is_err(), "done needs a result");
            store.advance(&id, JobStatus::Failed, Some("boom".into())).unwrap();
            assert!(store.advance(&id, JobStatus::Done, None).is_err());
        }
        let log = fs::read_to_string(dir.path().join("jobs").join(format!("{id}.jsonl"))).unwrap();
        assert_eq!(log.lines().count(), 3);
        let store = Store::open(dir.path()).unwrap();
        let j = store.job(&id).unwrap();
        assert_eq!(j.status, JobStatus::Failed);
        assert_eq!(j.error.as_deref(), Some("boom"));
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let id = Uuid::now_v7();
        {
            let store = Store::open(dir.path()).unwrap();
            store.create_job(job(id)).unwrap();
        }
        let path = dir.path().join("jobs").join(format!("{id}.jsonl"));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"schema_version\":1,\"id\"").unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.job(&id).unwrap().status, JobStatus::Queued);
        store.advance(&id, JobStatus::Running, None).unwrap();
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.job(&id).unwrap().status, JobStatus::Running);
    }
}
