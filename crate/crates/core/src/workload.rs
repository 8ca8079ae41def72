//! Parameterized query templates and seeded workload generation.
//!
//! Templates are plain SQL files `q1.sql` .. `q22.sql` containing `:name`
//! placeholders. Parameter domains live in a separate `params.manifest` (see
//! the bundled copy for the record format).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::plan_ingest::query_id;

pub const TEMPLATE_COUNT: u32 = 22;
pub const MANIFEST_FILE: &str = "params.manifest";
const REDRAW_ATTEMPTS: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("template {0} missing")]
    MissingTemplate(u32),
    #[error("template {template}: placeholder :{name} has no parameter spec")]
    DanglingPlaceholder { template: u32, name: String },
    #[error("template {template}: parameter :{name} is never referenced")]
    UnreferencedSpec { template: u32, name: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("parameter :{name} value {value} outside domain {domain}")]
    Domain {
        name: String,
        value: String,
        domain: String,
    },
    #[error("parameter :{name} has no binding")]
    MissingBinding { name: String },
    #[error("parameter :{name}: {message}")]
    BadValue { name: String, message: String },
    #[error("workload file: {0}")]
    WorkloadFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Date,
    Integer,
    Decimal,
    Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateUnit {
    Day,
    Month,
    Year,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Date {
        low: NaiveDate,
        high: NaiveDate,
        unit: DateUnit,
    },
    Integer {
        low: i64,
        high: i64,
    },
    Decimal {
        low: f64,
        high: f64,
        scale: u32,
    },
    Choice(Vec<String>),
}

impl Domain {
    pub fn kind(&self) -> ParamKind {
        match self {
            Domain::Date { .. } => ParamKind::Date,
            Domain::Integer { .. } => ParamKind::Integer,
            Domain::Decimal { .. } => ParamKind::Decimal,
            Domain::Choice(_) => ParamKind::Choice,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Date { low, high, .. } => write!(f, "[{low}, {high}]"),
            Domain::Integer { low, high } => write!(f, "[{low}, {high}]"),
            Domain::Decimal { low, high, .. } => write!(f, "[{low}, {high}]"),
            Domain::Choice(values) => write!(f, "{{{}}}", values.join(", ")),
        }
    }
}

/// How a sampled value becomes SQL text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Render {
    /// `DATE 'YYYY-MM-DD'`
    Date,
    Bare,
    Quoted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    pub domain: Domain,
    pub render: Render,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Date(NaiveDate),
    Integer(i64),
    Decimal(f64),
    Text(String),
}

impl ParameterSpec {
    fn check(&self, value: &ParamValue) -> Result<(), WorkloadError> {
        let out_of_domain = || WorkloadError::Domain {
            name: self.name.clone(),
            value: value_text(value),
            domain: self.domain.to_string(),
        };
        let ok = match (&self.domain, value) {
            (Domain::Date { low, high, unit }, ParamValue::Date(d)) => d >= low && d <= high && aligned(*d, *unit),
            (Domain::Integer { low, high }, ParamValue::Integer(v)) => v >= low && v <= high,
            (Domain::Decimal { low, high, .. }, ParamValue::Decimal(v)) => {
                v.is_finite() && *v >= low - 1e-12 && *v <= high + 1e-12
            }
            (Domain::Decimal { low, high, .. }, ParamValue::Integer(v)) => (*v as f64) >= *low && (*v as f64) <= *high,
            (Domain::Choice(values), ParamValue::Text(s)) => values.contains(s),
            _ => {
                return Err(WorkloadError::BadValue {
                    name: self.name.clone(),
                    message: format!(
                        "value {} does not match kind {:?}",
                        value_text(value),
                        self.domain.kind()
                    ),
                })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(out_of_domain())
        }
    }

    fn render_value(&self, value: &ParamValue) -> String {
        let text = match (value, &self.domain) {
            (ParamValue::Decimal(v), Domain::Decimal { scale, .. }) => {
                format!("{:.*}", *scale as usize, v)
            }
            _ => value_text(value),
        };
        match self.render {
            Render::Date => format!("DATE '{text}'"),
            Render::Bare => text,
            Render::Quoted => format!("'{}'", text.replace('\'', "''")),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> ParamValue {
        match &self.domain {
            Domain::Date { low, high, unit } => {
                let candidates = date_candidates(*low, *high, *unit);
                ParamValue::Date(candidates[rng.gen_range(0..candidates.len())])
            }
            Domain::Integer { low, high } => ParamValue::Integer(rng.gen_range(*low..=*high)),
            Domain::Decimal { low, high, scale } => {
                let factor = 10f64.powi(*scale as i32);
                let lo = (low * factor - 1e-9).ceil() as i64;
                let hi = (high * factor + 1e-9).floor() as i64;
                ParamValue::Decimal(rng.gen_range(lo..=hi) as f64 / factor)
            }
            Domain::Choice(values) => ParamValue::Text(values[rng.gen_range(0..values.len())].clone()),
        }
    }
}

fn value_text(value: &ParamValue) -> String {
    match value {
        ParamValue::Date(d) => d.format("%Y-%m-%d").to_string(),
        ParamValue::Integer(v) => v.to_string(),
        ParamValue::Decimal(v) => v.to_string(),
        ParamValue::Text(s) => s.clone(),
    }
}

fn aligned(d: NaiveDate, unit: DateUnit) -> bool {
    match unit {
        DateUnit::Day => true,
        DateUnit::Month => d.day() == 1,
        DateUnit::Year => d.day() == 1 && d.month() == 1,
    }
}

fn date_candidates(low: NaiveDate, high: NaiveDate, unit: DateUnit) -> Vec<NaiveDate> {
    low.iter_days()
        .take_while(|d| *d <= high)
        .filter(|d| aligned(*d, unit))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryTemplate {
    pub template_id: u32,
    pub sql_text: String,
    pub params: Vec<ParameterSpec>,
}

impl QueryTemplate {
    /// Builds a template and checks that placeholders and specs match one to one.
    pub fn new(
        template_id: u32,
        sql_text: impl Into<String>,
        params: Vec<ParameterSpec>,
    ) -> Result<Self, WorkloadError> {
        let template = QueryTemplate {
            template_id,
            sql_text: sql_text.into(),
            params,
        };
        template.validate()?;
        Ok(template)
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let used: BTreeSet<&str> = placeholders(&self.sql_text)
            .into_iter()
            .map(|(_, _, name)| name)
            .collect();
        let declared: BTreeSet<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        if let Some(name) = used.difference(&declared).next() {
            return Err(WorkloadError::DanglingPlaceholder {
                template: self.template_id,
                name: name.to_string(),
            });
        }
        if let Some(name) = declared.difference(&used).next() {
            return Err(WorkloadError::UnreferencedSpec {
                template: self.template_id,
                name: name.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedQuery {
    pub template_id: u32,
    /// Placeholder name to rendered SQL literal.
    pub bindings: BTreeMap<String, String>,
    pub sql_text: String,
    pub query_id: String,
}

/// Byte ranges and names of `:name` placeholders outside literals, comments
/// and `::type` casts.
fn placeholders(sql: &str) -> Vec<(usize, usize, &str)> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\'' | b'"' => {
                let quote = bytes[i];
                i += 1;
                while i < bytes.len() && bytes[i] != quote {
                    i += 1;
                }
                i += 1;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b':' if bytes.get(i + 1) == Some(&b':') => i += 2,
            b':' => {
                let start = i;
                let mut end = i + 1;
                if end < bytes.len() && (bytes[end].is_ascii_alphabetic() || bytes[end] == b'_') {
                    while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                        end += 1;
                    }
                    out.push((start, end, &sql[start + 1..end]));
                }
                i = end;
            }
            _ => i += 1,
        }
    }
    out
}

/// Substitutes explicit bindings into a template.
pub fn instantiate(
    template: &QueryTemplate,
    bindings: &BTreeMap<String, ParamValue>,
) -> Result<GeneratedQuery, WorkloadError> {
    let mut rendered = BTreeMap::new();
    for spec in &template.params {
        let value = bindings.get(&spec.name).ok_or_else(|| WorkloadError::MissingBinding {
            name: spec.name.clone(),
        })?;
        spec.check(value)?;
        rendered.insert(spec.name.clone(), spec.render_value(value));
    }
    Ok(substitute(template, rendered))
}

fn substitute(template: &QueryTemplate, rendered: BTreeMap<String, String>) -> GeneratedQuery {
    let sql = &template.sql_text;
    let mut out = String::with_capacity(sql.len() + 64);
    let mut last = 0;
    for (start, end, name) in placeholders(sql) {
        out.push_str(&sql[last..start]);
        out.push_str(&rendered[name]);
        last = end;
    }
    out.push_str(&sql[last..]);
    let sql_text = out.trim().trim_end_matches(';').trim_end().to_string();
    GeneratedQuery {
        template_id: template.template_id,
        query_id: query_id(&sql_text),
        bindings: rendered,
        sql_text,
    }
}

/// Generated queries plus the number of duplicate bindings that survived redraws.
#[derive(Debug, Clone)]
pub struct Workload {
    pub queries: Vec<GeneratedQuery>,
    pub duplicate_warnings: usize,
}

/// `n_per_template` queries per template, templates in the given order.
pub fn generate_workload(templates: &[QueryTemplate], n_per_template: usize, seed: u64) -> Vec<GeneratedQuery> {
    generate_workload_with_report(templates, n_per_template, seed).queries
}

pub fn generate_workload_with_report(templates: &[QueryTemplate], n_per_template: usize, seed: u64) -> Workload {
    let per_template: Vec<(Vec<GeneratedQuery>, usize)> = templates
        .par_iter()
        .map(|t| generate_for_template(t, n_per_template, seed))
        .collect();
    let mut queries = Vec::with_capacity(templates.len() * n_per_template);
    let mut duplicate_warnings = 0;
    for (qs, dups) in per_template {
        queries.extend(qs);
        duplicate_warnings += dups;
    }
    Workload {
        queries,
        duplicate_warnings,
    }
}

fn generate_for_template(template: &QueryTemplate, n: usize, seed: u64) -> (Vec<GeneratedQuery>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(template.template_id));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut duplicates = 0;
    for _ in 0..n {
        let mut rendered = BTreeMap::new();
        for attempt in 0..REDRAW_ATTEMPTS {
            rendered = template
                .params
                .iter()
                .map(|spec| (spec.name.clone(), spec.render_value(&spec.sample(&mut rng))))
                .collect::<BTreeMap<_, _>>();
            if !seen.contains(&rendered) {
                break;
            }
            if attempt + 1 == REDRAW_ATTEMPTS {
                log::warn!(
                    "template {}: keeping duplicate bindings after {REDRAW_ATTEMPTS} draws",
                    template.template_id
                );
                duplicates += 1;
            }
        }
        seen.insert(rendered.clone());
        out.push(substitute(template, rendered));
    }
    (out, duplicates)
}

/// Loads `q1.sql` .. `q22.sql` and `params.manifest` from a directory.
pub fn load_templates(dir: &Path) -> Result<Vec<QueryTemplate>, WorkloadError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = fs::read_to_string(&manifest_path).map_err(|source| WorkloadError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let mut sources = Vec::with_capacity(TEMPLATE_COUNT as usize);
    for id in 1..=TEMPLATE_COUNT {
        let path = dir.join(format!("q{id}.sql"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(WorkloadError::MissingTemplate(id)),
            Err(source) => {
                return Err(WorkloadError::Io {
                    path: path.display().to_string(),
                    source,
                })
            }
        };
        sources.push((id, text));
    }
    build_templates(sources, &manifest)
}

macro_rules! bundled {
    ($($n:literal),*) => {
        [$(($n, include_str!(concat!("../templates/q", stringify!($n), ".sql")))),*]
    };
}

/// The 22 templates and default domains compiled into the crate.
pub fn bundled_templates() -> Vec<QueryTemplate> {
    let sources = bundled!(1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22);
    let manifest = include_str!("../templates/params.manifest");
    build_templates(
        sources.iter().map(|(id, text)| (*id, text.to_string())).collect(),
        manifest,
    )
    .expect("bundled templates are valid")
}

fn build_templates(sources: Vec<(u32, String)>, manifest: &str) -> Result<Vec<QueryTemplate>, WorkloadError> {
    let mut specs = parse_manifest(manifest)?;
    sources
        .into_iter()
        .map(|(id, text)| QueryTemplate::new(id, text, specs.remove(&id).unwrap_or_default()))
        .collect()
}

/// Parses the `key=value; key=value` manifest into per-template spec lists.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<u32, Vec<ParameterSpec>>, WorkloadError> {
    let mut out: BTreeMap<u32, Vec<ParameterSpec>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| WorkloadError::Manifest { line: idx + 1, message };
        let mut fields = BTreeMap::new();
        for pair in line.split(';') {
            let pair = pair.trim();
            if pair.is_empty() {
                continue;
            }
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{pair}`")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |key: &str| fields.get(key).copied().ok_or_else(|| err(format!("missing `{key}`")));
        let template: u32 = get("template")?
            .parse()
            .map_err(|_| err("template must be an integer".into()))?;
        if !(1..=TEMPLATE_COUNT).contains(&template) {
            return Err(err(format!("template {template} outside 1..={TEMPLATE_COUNT}")));
        }
        let name = get("name")?.to_string();
        let render = match get("render")? {
            "date" => Render::Date,
            "bare" => Render::Bare,
            "quoted" => Render::Quoted,
            other => return Err(err(format!("unknown render `{other}`"))),
        };
        let domain = match get("kind")? {
            "date" => {
                let date = |key: &str| {
                    NaiveDate::parse_from_str(get(key)?, "%Y-%m-%d").map_err(|e| err(format!("bad {key} date: {e}")))
                };
                let unit = match fields.get("unit").copied().unwrap_or("day") {
                    "day" => DateUnit::Day,
                    "month" => DateUnit::Month,
                    "year" => DateUnit::Year,
                    other => return Err(err(format!("unknown unit `{other}`"))),
                };
                let (low, high) = (date("low")?, date("high")?);
                if date_candidates(low, high, unit).is_empty() {
                    return Err(err(format!("empty date domain [{low}, {high}]")));
                }
                Domain::Date { low, high, unit }
            }
            "integer" => {
                let int = |key: &str| {
                    get(key)?
                        .parse::<i64>()
                        .map_err(|_| err(format!("{key} must be an integer")))
                };
                let (low, high) = (int("low")?, int("high")?);
                if low > high {
                    return Err(err(format!("low {low} > high {high}")));
                }
                Domain::Integer { low, high }
            }
            "decimal" => {
                let num = |key: &str| {
                    get(key)?
                        .parse::<f64>()
                        .map_err(|_| err(format!("{key} must be a number")))
                };
                let (low, high) = (num("low")?, num("high")?);
                let scale: u32 = get("scale")?
                    .parse()
                    .map_err(|_| err("scale must be an integer".into()))?;
                if low > high {
                    return Err(err(format!("low {low} > high {high}")));
                }
                Domain::Decimal { low, high, scale }
            }
            "choice" => {
                let values: Vec<String> = get("values")?
                    .split(',')
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect();
                if values.is_empty() {
                    return Err(err("empty choice list".into()));
                }
                Domain::Choice(values)
            }
            other => return Err(err(format!("unknown kind `{other}`"))),
        };
        let specs = out.entry(template).or_default();
        if specs.iter().any(|s| s.name == name) {
            return Err(err(format!("duplicate parameter :{name} for template {template}")));
        }
        specs.push(ParameterSpec { name, domain, render });
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("unterminated quoted literal starting at byte {0}")]
    UnterminatedQuote(usize),
    #[error("unterminated block comment starting at byte {0}")]
    UnterminatedComment(usize),
    #[error("unbalanced parenthesis at byte {0}")]
    UnbalancedParen(usize),
}

/// Counts top-level SQL statements, checking quotes and parentheses balance.
pub fn count_statements(sql: &str) -> Result<usize, SplitError> {
    let bytes = sql.as_bytes();
    let mut depth: i64 = 0;
    let mut count = 0;
    let mut segment_has_content = false;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\'' | b'"' => {
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() {
                        return Err(SplitError::UnterminatedQuote(start));
                    }
                    if bytes[i] == b {
                        // doubled quote is an escaped quote
                        if bytes.get(i + 1) == Some(&b) {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
                segment_has_content = true;
            }
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                while i + 1 < bytes.len() && !(bytes[i] == b'*' && bytes[i + 1] == b'/') {
                    i += 1;
                }
                if i + 1 >= bytes.len() {
                    return Err(SplitError::UnterminatedComment(start));
                }
                i += 1;
            }
            b'(' => {
                depth += 1;
                segment_has_content = true;
            }
            b')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(SplitError::UnbalancedParen(i));
                }
            }
            b';' if depth == 0 => {
                if segment_has_content {
                    count += 1;
                }
                segment_has_content = false;
            }
            b if !b.is_ascii_whitespace() => segment_has_content = true,
            _ => {}
        }
        i += 1;
    }
    if depth != 0 {
        return Err(SplitError::UnbalancedParen(bytes.len()));
    }
    if segment_has_content {
        count += 1;
    }
    Ok(count)
}

/// Writes queries as `-- query_id` / `-- template_id` / `-- bindings` headers
/// followed by the statement terminated with `;`.
pub fn write_workload<W: Write>(queries: &[GeneratedQuery], mut out: W) -> io::Result<()> {
    for q in queries {
        writeln!(out, "-- query_id: {}", q.query_id)?;
        writeln!(out, "-- template_id: {}", q.template_id)?;
        writeln!(
            out,
            "-- bindings: {}",
            serde_json::to_string(&q.bindings).expect("string map serializes")
        )?;
        writeln!(out, "{};", q.sql_text)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Query id, template id, bindings and statement text being accumulated.
type PendingQuery = (String, Option<u32>, BTreeMap<String, String>, String);

pub fn read_workload(text: &str) -> Result<Vec<GeneratedQuery>, WorkloadError> {
    let mut out = Vec::new();
    let mut current: Option<PendingQuery> = None;
    let finish = |rec: PendingQuery| {
        let (id, template, bindings, sql) = rec;
        let sql_text = sql.trim().trim_end_matches(';').trim_end().to_string();
        let template_id =
            template.ok_or_else(|| WorkloadError::WorkloadFile(format!("query {id} lacks template_id")))?;
        if query_id(&sql_text) != id {
            return Err(WorkloadError::WorkloadFile(format!(
                "query {id}: header does not match statement text"
            )));
        }
        Ok(GeneratedQuery {
            template_id,
            bindings,
            sql_text,
            query_id: id,
        })
    };
    for line in text.lines() {
        if let Some(id) = line.strip_prefix("-- query_id:") {
            if let Some(rec) = current.take() {
                out.push(finish(rec)?);
            }
            current = Some((id.trim().to_string(), None, BTreeMap::new(), String::new()));
            continue;
        }
        let Some(rec) = current.as_mut() else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(WorkloadError::WorkloadFile(
                "statement text before the first `-- query_id:` header".into(),
            ));
        };
        if let Some(t) = line.strip_prefix("-- template_id:") {
            rec.1 = Some(
                t.trim()
                    .parse()
                    .map_err(|_| WorkloadError::WorkloadFile(format!("query {}: bad template_id", rec.0)))?,
            );
        } else if let Some(b) = line.strip_prefix("-- bindings:") {
            rec.2 = serde_json::from_str(b.trim())
                .map_err(|e| WorkloadError::WorkloadFile(format!("query {}: bad bindings: {e}", rec.0)))?;
        } else {
            rec.3.push_str(line);
            rec.3.push('\n');
        }
    }
    if let Some(rec) = current.take() {
        out.push(finish(rec)?);
    }
    Ok(out)
}
