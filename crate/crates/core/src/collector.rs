//! Sequential `EXPLAIN (ANALYZE, FORMAT JSON)` collection.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! <out>/queries/<query_id>.sql
//! <out>/plans/<query_id>.json
//! <out>/manifest.tsv
//! ```
//!
//! The manifest is appended to after every query so a crash loses at most the
//! record in flight, and rewritten in workload order when the run completes.
//! Credentials are read from an environment variable and never written out.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};

use crate::plan_ingest::parse_plan_document;
use crate::workload::GeneratedQuery;

pub const MANIFEST_FILE: &str = "manifest.tsv";
const LOCK_FILE: &str = ".collect.lock";
const MANIFEST_HEADER: [&str; 9] = [
    "query_id",
    "template_id",
    "sql_path",
    "plan_path",
    "execution_time_ms",
    "status",
    "error",
    "collected_at",
    "server_version",
];

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("connection failure: {0}")]
    Connection(String),
    #[error("invalid collection config: {0}")]
    Config(String),
    #[error("output directory {0} is locked by another collection")]
    Locked(PathBuf),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest integrity: plan file for query {query_id} missing ({path})")]
    Integrity { query_id: String, path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CollectError + '_ {
    move |source| CollectError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Why a single statement failed.
#[derive(Debug, Clone, PartialEq)]
pub enum StatementFailure {
    Timeout(String),
    Error(String),
    /// The session is gone; collection stops.
    Connection(String),
}

/// A session able to run `EXPLAIN (ANALYZE, FORMAT JSON)` and return the document text.
pub trait ExplainBackend {
    fn server_version(&mut self) -> Result<String, CollectError>;
    fn explain_analyze(&mut self, sql: &str) -> Result<String, StatementFailure>;
}

#[derive(Debug, Clone)]
pub struct CollectionConfig {
    /// Environment variable holding the libpq-style connection string.
    pub dsn_env: String,
    pub out_dir: PathBuf,
    pub timeout: Duration,
    pub repeats: usize,
    pub warmup: bool,
    /// Statements run once per session before the workload (e.g. `SET max_parallel_workers_per_gather = 0`).
    pub preamble: Vec<String>,
}

impl CollectionConfig {
    pub fn new(dsn_env: impl Into<String>, out_dir: impl Into<PathBuf>) -> Self {
        CollectionConfig {
            dsn_env: dsn_env.into(),
            out_dir: out_dir.into(),
            timeout: Duration::from_secs(300),
            repeats: 1,
            warmup: false,
            preamble: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CollectError> {
        if self.timeout.is_zero() {
            return Err(CollectError::Config("timeout must be positive".into()));
        }
        if self.repeats == 0 {
            return Err(CollectError::Config("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Timeout,
    Error,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Timeout => "timeout",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionRecord {
    pub query_id: String,
    pub template_id: u32,
    /// Relative to the output directory.
    pub sql_path: String,
    pub plan_path: Option<String>,
    pub execution_time_ms: Option<f64>,
    pub status: Status,
    pub error: Option<String>,
    pub collected_at: DateTime<Utc>,
    pub server_version: String,
}

fn escape_field(s: &str) -> String {
    s.replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
        .replace('\r', "\\r")
}

fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

impl CollectionRecord {
    fn to_line(&self) -> String {
        [
            self.query_id.clone(),
            self.template_id.to_string(),
            escape_field(&self.sql_path),
            self.plan_path.as_deref().map(escape_field).unwrap_or_default(),
            self.execution_time_ms.map(|t| t.to_string()).unwrap_or_default(),
            self.status.as_str().to_string(),
            self.error.as_deref().map(escape_field).unwrap_or_default(),
            self.collected_at.to_rfc3339_opts(SecondsFormat::Micros, true),
            escape_field(&self.server_version),
        ]
        .join("\t")
    }

    fn from_line(line: &str, lineno: usize) -> Result<Self, CollectError> {
        let err = |message: String| CollectError::Manifest { line: lineno, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != MANIFEST_HEADER.len() {
            return Err(err(format!(
                "expected {} fields, found {}",
                MANIFEST_HEADER.len(),
                f.len()
            )));
        }
        let opt = |s: &str| (!s.is_empty()).then(|| unescape_field(s));
        Ok(CollectionRecord {
            query_id: f[0].to_string(),
            template_id: f[1].parse().map_err(|_| err(format!("bad template_id `{}`", f[1])))?,
            sql_path: unescape_field(f[2]),
            plan_path: opt(f[3]),
            execution_time_ms: match f[4] {
                "" => None,
                s => Some(s.parse().map_err(|_| err(format!("bad execution_time_ms `{s}`")))?),
            },
            status: match f[5] {
                "ok" => Status::Ok,
                "timeout" => Status::Timeout,
                "error" => Status::Error,
                s => return Err(err(format!("bad status `{s}`"))),
            },
            error: opt(f[6]),
            collected_at: DateTime::parse_from_rfc3339(f[7])
                .map_err(|e| err(format!("bad collected_at: {e}")))?
                .with_timezone(&Utc),
            server_version: unescape_field(f[8]),
        })
    }
}

fn parse_manifest_text(text: &str) -> Result<Vec<CollectionRecord>, CollectError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, header)) if header.split('\t').eq(MANIFEST_HEADER) => {}
        Some(_) => {
            return Err(CollectError::Manifest {
                line: 1,
                message: "unexpected header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| CollectionRecord::from_line(l, i + 1))
        .collect()
}

/// Reads a manifest and checks that every ok record's plan file exists.
pub fn load_manifest(path: &Path) -> Result<Vec<CollectionRecord>, CollectError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let records = parse_manifest_text(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for r in &records {
        if r.status == Status::Ok {
            let plan = base.join(r.plan_path.as_deref().unwrap_or_default());
            if r.plan_path.is_none() || !plan.is_file() {
                return Err(CollectError::Integrity {
                    query_id: r.query_id.clone(),
                    path: plan,
                });
            }
        }
    }
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[CollectionRecord]) -> Result<(), CollectError> {
    let tmp = path.with_extension("tsv.tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut text = MANIFEST_HEADER.join("\t");
        text.push('\n');
        for r in records {
            text.push_str(&r.to_line());
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, CollectError> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(CollectError::Locked(dir.to_path_buf())),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Index of the repeat whose runtime is the (lower) median.
pub fn median_index(runtimes: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..runtimes.len()).collect();
    order.sort_by(|&a, &b| runtimes[a].total_cmp(&runtimes[b]).then(a.cmp(&b)));
    order[(runtimes.len() - 1) / 2]
}

/// Progress callback arguments: position, total, and the record just written.
pub type Progress<'a> = &'a mut dyn FnMut(usize, usize, &CollectionRecord);

/// Runs every query of the workload in order and returns the manifest records.
///
/// Query ids already recorded as ok in an existing manifest are skipped. A
/// connection failure stops the run and leaves the records written so far.
pub fn collect(
    workload: &[GeneratedQuery],
    config: &CollectionConfig,
    backend: &mut dyn ExplainBackend,
    progress: Option<Progress<'_>>,
) -> Result<Vec<CollectionRecord>, CollectError> {
    config.validate()?;
    let out = &config.out_dir;
    for sub in ["queries", "plans"] {
        fs::create_dir_all(out.join(sub)).map_err(io_err(&out.join(sub)))?;
    }
    let _lock = DirLock::acquire(out)?;
    let manifest_path = out.join(MANIFEST_FILE);

    let mut done: HashMap<String, CollectionRecord> = HashMap::new();
    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        for r in parse_manifest_text(&text)? {
            let plan_ok = r.plan_path.as_deref().is_some_and(|p| out.join(p).is_file());
            if r.status == Status::Ok && plan_ok {
                done.insert(r.query_id.clone(), r);
            }
        }
    }

    // Start from the ok records of earlier runs, in workload order.
    let mut records: Vec<CollectionRecord> = workload.iter().filter_map(|q| done.get(&q.query_id).cloned()).collect();
    write_manifest(&manifest_path, &records)?;
    let mut append = OpenOptions::new()
        .append(true)
        .open(&manifest_path)
        .map_err(io_err(&manifest_path))?;

    let mut progress = progress;
    let mut server_version: Option<String> = None;
    let total = workload.len();
    let mut by_id: HashMap<String, CollectionRecord> = HashMap::new();

    for (pos, query) in workload.iter().enumerate() {
        if done.contains_key(&query.query_id) || by_id.contains_key(&query.query_id) {
            continue;
        }
        let version = match &server_version {
            Some(v) => v.clone(),
            None => {
                let v = backend.server_version()?;
                server_version = Some(v.clone());
                v
            }
        };
        let sql_rel = format!("queries/{}.sql", query.query_id);
        let sql_abs = out.join(&sql_rel);
        fs::write(&sql_abs, format!("{};\n", query.sql_text)).map_err(io_err(&sql_abs))?;

        let record = match run_query(query, config, backend) {
            Ok((plan_text, runtime)) => {
                let plan_rel = format!("plans/{}.json", query.query_id);
                let plan_abs = out.join(&plan_rel);
                fs::write(&plan_abs, &plan_text).map_err(io_err(&plan_abs))?;
                CollectionRecord {
                    query_id: query.query_id.clone(),
                    template_id: query.template_id,
                    sql_path: sql_rel,
                    plan_path: Some(plan_rel),
                    execution_time_ms: Some(runtime),
                    status: Status::Ok,
                    error: None,
                    collected_at: Utc::now().trunc_subsecs(6),
                    server_version: version,
                }
            }
            Err(StatementFailure::Connection(msg)) => return Err(CollectError::Connection(msg)),
            Err(failure) => {
                let (status, msg) = match failure {
                    StatementFailure::Timeout(m) => (Status::Timeout, m),
                    StatementFailure::Error(m) => (Status::Error, m),
                    StatementFailure::Connection(_) => unreachable!(),
                };
                CollectionRecord {
                    query_id: query.query_id.clone(),
                    template_id: query.template_id,
                    sql_path: sql_rel,
                    plan_path: None,
                    execution_time_ms: None,
                    status,
                    error: Some(msg),
                    collected_at: Utc::now().trunc_subsecs(6),
                    server_version: version,
                }
            }
        };
        writeln!(append, "{}", record.to_line()).map_err(io_err(&manifest_path))?;
        append.flush().map_err(io_err(&manifest_path))?;
        if let Some(cb) = progress.as_mut() {
            cb(pos + 1, total, &record);
        }
        by_id.insert(record.query_id.clone(), record);
    }

    let mut seen = std::collections::HashSet::new();
    records = workload
        .iter()
        .filter(|q| seen.insert(q.query_id.as_str()))
        .filter_map(|q| done.get(&q.query_id).or_else(|| by_id.get(&q.query_id)).cloned())
        .collect();
    write_manifest(&manifest_path, &records)?;
    Ok(records)
}

/// Runs the configured repeats and returns the median-runtime plan document.
fn run_query(
    query: &GeneratedQuery,
    config: &CollectionConfig,
    backend: &mut dyn ExplainBackend,
) -> Result<(String, f64), StatementFailure> {
    if config.warmup {
        backend.explain_analyze(&query.sql_text)?;
    }
    let mut plans = Vec::with_capacity(config.repeats);
    let mut runtimes = Vec::with_capacity(config.repeats);
    for _ in 0..config.repeats {
        let text = backend.explain_analyze(&query.sql_text)?;
        let tree =
            parse_plan_document(&text).map_err(|e| StatementFailure::Error(format!("unusable plan document: {e}")))?;
        runtimes.push(tree.execution_time_ms.expect("analyzed plans carry a runtime"));
        plans.push(text);
    }
    let best = median_index(&runtimes);
    Ok((plans.swap_remove(best), runtimes[best]))
}

/// Reads the text of a collected query back from the output directory.
pub fn read_query_text(out_dir: &Path, record: &CollectionRecord) -> Result<String, CollectError> {
    let path = out_dir.join(&record.sql_path);
    let f = File::open(&path).map_err(io_err(&path))?;
    let mut text = String::new();
    for line in BufReader::new(f).lines() {
        text.push_str(&line.map_err(io_err(&path))?);
        text.push('\n');
    }
    Ok(text.trim().trim_end_matches(';').trim_end().to_string())
}

/// [`ExplainBackend`] over a synchronous PostgreSQL client session.
pub struct PostgresBackend {
    client: postgres::Client,
}

impl PostgresBackend {
    /// Connects using the connection string stored in `config.dsn_env` and
    /// applies the statement timeout and preamble.
    pub fn connect(config: &CollectionConfig) -> Result<Self, CollectError> {
        let dsn = std::env::var(&config.dsn_env)
            .map_err(|_| CollectError::Config(format!("environment variable {} is not set", config.dsn_env)))?;
        let mut client =
            postgres::Client::connect(&dsn, postgres::NoTls).map_err(|e| CollectError::Connection(e.to_string()))?;
        let timeout_ms = config.timeout.as_millis().max(1);
        client
            .batch_execute(&format!("SET statement_timeout = {timeout_ms}"))
            .map_err(|e| CollectError::Connection(e.to_string()))?;
        for stmt in &config.preamble {
            client
                .batch_execute(stmt)
                .map_err(|e| CollectError::Config(format!("preamble `{stmt}` failed: {e}")))?;
        }
        Ok(PostgresBackend { client })
    }
}

impl ExplainBackend for PostgresBackend {
    fn server_version(&mut self) -> Result<String, CollectError> {
        let row = self
            .client
            .query_one("SHOW server_version", &[])
            .map_err(|e| CollectError::Connection(e.to_string()))?;
        Ok(row.get(0))
    }

    fn explain_analyze(&mut self, sql: &str) -> Result<String, StatementFailure> {
        let stmt = format!("EXPLAIN (ANALYZE, FORMAT JSON) {sql}");
        let messages = self.client.simple_query(&stmt).map_err(|e| {
            if e.is_closed() {
                StatementFailure::Connection(e.to_string())
            } else if e.code() == Some(&postgres::error::SqlState::QUERY_CANCELED) {
                StatementFailure::Timeout(e.to_string())
            } else {
                StatementFailure::Error(
                    e.as_db_error()
                        .map(|d| d.message().to_string())
                        .unwrap_or_else(|| e.to_string()),
                )
            }
        })?;
        messages
            .into_iter()
            .find_map(|m| match m {
                postgres::SimpleQueryMessage::Row(row) => row.get(0).map(str::to_string),
                _ => None,
            })
            .ok_or_else(|| StatementFailure::Error("EXPLAIN returned no rows".into()))
    }
}
