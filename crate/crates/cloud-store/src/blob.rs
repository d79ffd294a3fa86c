//! Content-addressed blob store: `objects/<h[0:2]>/<h[2:4]>/<h>`.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use fogdrive_core::trace::sha256_hex;

pub fn is_trace_ref(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Relative storage key for a trace reference.
pub fn storage_key(trace_ref: &str) -> PathBuf {
    Path::new("objects")
        .join(&trace_ref[0..2])
        .join(&trace_ref[2..4])
        .join(trace_ref)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PutOutcome {
    pub trace_ref: String,
    pub size: u64,
    pub created: bool,
}

/// Bytes written and synced to the staging area but not yet visible.
#[derive(Debug)]
pub struct Staged {
    tmp: PathBuf,
    trace_ref: String,
    size: u64,
}

impl Staged {
    pub fn trace_ref(&self) -> &str {
        &self.trace_ref
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.tmp);
    }
}

pub struct BlobStore {
    root: PathBuf,
    quota_bytes: Option<u64>,
    used: AtomicU64,
    commit_lock: Mutex<()>,
}

impl BlobStore {
    /// Opens (creating if needed) a store; leftovers from interrupted
    /// writes are discarded.
    pub fn open(root: impl Into<PathBuf>, quota_bytes: Option<u64>) -> io::Result<Self> {
        let root = root.into();
        let tmp = root.join("tmp");
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        fs::create_dir_all(root.join("objects"))?;
        let store = Self {
            root,
            quota_bytes,
            used: AtomicU64::new(0),
            commit_lock: Mutex::new(()),
        };
        let used = store
            .list_refs()?
            .iter()
            .map(|r| fs::metadata(store.path(r)).map(|m| m.len()).unwrap_or(0))
            .sum();
        store.used.store(used, Ordering::SeqCst);
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, trace_ref: &str) -> PathBuf {
        self.root.join(storage_key(trace_ref))
    }

    pub fn used_bytes(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn stage(&self, bytes: &[u8]) -> io::Result<Staged> {
        let trace_ref = sha256_hex(bytes);
        let tmp = self.root.join("tmp").join(format!("{}.part", uuid::Uuid::new_v4()));
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(Staged {
            tmp,
            trace_ref,
            size: bytes.len() as u64,
        })
    }

    /// Publishes a staged blob by rename. Identical content already present
    /// is left untouched.
    pub fn commit(&self, staged: Staged) -> io::Result<PutOutcome> {
        let dest = self.path(&staged.trace_ref);
        let outcome = PutOutcome {
            trace_ref: staged.trace_ref.clone(),
            size: staged.size,
            created: false,
        };
        let _guard = self.commit_lock.lock().expect("commit lock");
        if dest.exists() {
            return Ok(outcome);
        }
        if let Some(limit) = self.quota_bytes {
            let prev = self.used.fetch_add(staged.size, Ordering::SeqCst);
            if prev + staged.size > limit {
                self.used.fetch_sub(staged.size, Ordering::SeqCst);
                return Err(io::Error::new(
                    io::ErrorKind::StorageFull,
                    format!("{} + {} bytes exceeds quota {limit}", prev, staged.size),
                ));
            }
        } else {
            self.used.fetch_add(staged.size, Ordering::SeqCst);
        }
        fs::create_dir_all(dest.parent().expect("key has parent"))?;
        if let Err(e) = fs::rename(&staged.tmp, &dest) {
            self.used.fetch_sub(staged.size, Ordering::SeqCst);
            return Err(e);
        }
        Ok(PutOutcome { created: true, ..outcome })
    }

    pub fn put(&self, bytes: &[u8]) -> io::Result<PutOutcome> {
        let staged = self.stage(bytes)?;
        self.commit(staged)
    }

    pub fn get(&self, trace_ref: &str) -> io::Result<Option<Vec<u8>>> {
        if !is_trace_ref(trace_ref) {
            return Ok(None);
        }
        match fs::read(self.path(trace_ref)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn contains(&self, trace_ref: &str) -> bool {
        is_trace_ref(trace_ref) && self.path(trace_ref).is_file()
    }

    pub fn remove(&self, trace_ref: &str) -> io::Result<()> {
        let path = self.path(trace_ref);
        if let Ok(m) = fs::metadata(&path) {
            fs::remove_file(&path)?;
            self.used.fetch_sub(m.len(), Ordering::SeqCst);
        }
        Ok(())
    }

    pub fn list_refs(&self) -> io::Result<Vec<String>> {
        let mut refs = Vec::new();
        for a in fs::read_dir(self.root.join("objects"))? {
            for b in fs::read_dir(a?.path())? {
                for f in fs::read_dir(b?.path())? {
                    let name = f?.file_name().to_string_lossy().into_owned();
                    if is_trace_ref(&name) {
                        refs.push(name);
                    }
                }
            }
        }
        refs.sort();
        Ok(refs)
    }
}
