use std::path::Path;
use std::sync::Mutex;

use fogdrive_core::trace::SessionManifest;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub trace_ref: String,
    pub manifest: SessionManifest,
    pub size_bytes: u64,
    pub uploaded_at: i64,
    pub uploader: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListFilter {
    pub driver_id: Option<String>,
    /// Inclusive bounds on the session start time.
    pub from: Option<i64>,
    pub to: Option<i64>,
    pub limit: Option<u32>,
    pub offset: Option<u32>,
}

pub const DEFAULT_PAGE: u32 = 100;

pub struct MetaStore {
    conn: Mutex<Connection>,
}

impl MetaStore {
    pub fn open(path: &Path) -> rusqlite::Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> rusqlite::Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> rusqlite::Result<Self> {
        conn.execute_batch(
            "PRAGMA journal_mode=WAL;
             CREATE TABLE IF NOT EXISTS traces (
                 trace_ref   TEXT PRIMARY KEY,
                 manifest    TEXT NOT NULL,
                 driver_id   TEXT NOT NULL,
                 started_at  INTEGER NOT NULL,
                 size        INTEGER NOT NULL,
                 uploaded_at INTEGER NOT NULL,
                 uploader    TEXT NOT NULL
             );
             CREATE INDEX IF NOT EXISTS traces_driver ON traces(driver_id, started_at);",
        )?;
        Ok(Self { conn: Mutex::new(conn) })
    }

    /// Inserts unless the ref is already known; returns the stored row.
    pub fn insert(&self, meta: &TraceMetadata) -> rusqlite::Result<TraceMetadata> {
        let manifest = serde_json::to_string(&meta.manifest).expect("manifest serializes");
        let conn = self.conn.lock().expect("meta lock");
        conn.execute(
            "INSERT OR IGNORE INTO traces (trace_ref, manifest, driver_id, started_at, size, uploaded_at, uploader)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                meta.trace_ref,
                manifest,
                meta.manifest.driver_id,
                meta.manifest.started_at,
                meta.size_bytes as i64,
                meta.uploaded_at,
                meta.uploader
            ],
        )?;
        Self::get_locked(&conn, &meta.trace_ref).map(|m| m.expect("row just written"))
    }

    pub fn get(&self, trace_ref: &str) -> rusqlite::Result<Option<TraceMetadata>> {
        let conn = self.conn.lock().expect("meta lock");
        Self::get_locked(&conn, trace_ref)
    }

    fn get_locked(conn: &Connection, trace_ref: &str) -> rusqlite::Result<Option<TraceMetadata>> {
        conn.query_row(
            "SELECT trace_ref, manifest, size, uploaded_at, uploader FROM traces WHERE trace_ref = ?1",
            [trace_ref],
            row_to_meta,
        )
        .optional()
    }

    pub fn list(&self, f: &ListFilter) -> rusqlite::Result<Vec<TraceMetadata>> {
        let conn = self.conn.lock().expect("meta lock");
        let mut stmt = conn.prepare(
            "SELECT trace_ref, manifest, size, uploaded_at, uploader FROM traces
             WHERE (?1 IS NULL OR driver_id = ?1)
               AND (?2 IS NULL OR started_at >= ?2)
               AND (?3 IS NULL OR started_at <= ?3)
             ORDER BY uploaded_at DESC, rowid DESC
             LIMIT ?4 OFFSET ?5",
        )?;
        let rows = stmt.query_map(
            params![
                f.driver_id,
                f.from,
                f.to,
                f.limit.unwrap_or(DEFAULT_PAGE),
                f.offset.unwrap_or(0)
            ],
            row_to_meta,
        )?;
        rows.collect()
    }

    pub fn delete(&self, trace_ref: &str) -> rusqlite::Result<()> {
        let conn = self.conn.lock().expect("meta lock");
        conn.execute("DELETE FROM traces WHERE trace_ref = ?1", [trace_ref])?;
        Ok(())
    }

    pub fn refs(&self) -> rusqlite::Result<Vec<String>> {
        let conn = self.conn.lock().expect("meta lock");
        let mut stmt = conn.prepare("SELECT trace_ref FROM traces ORDER BY trace_ref")?;
        let rows = stmt.query_map([], |r| r.get(0))?;
        rows.collect()
    }
}

fn row_to_meta(r: &rusqlite::Row<'_>) -> rusqlite::Result<TraceMetadata> {
    let manifest: String = r.get(1)?;
    let manifest = serde_json::from_str(&manifest)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(1, rusqlite::types::Type::Text, Box::new(e)))?;
    Ok(TraceMetadata {
        trace_ref: r.get(0)?,
        manifest,
        size_bytes: r.get::<_, i64>(2)? as u64,
        uploaded_at: r.get(3)?,
        uploader: r.get(4)?,
    })
}
