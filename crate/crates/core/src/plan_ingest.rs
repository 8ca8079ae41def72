//! Parsing of PostgreSQL `EXPLAIN (ANALYZE, FORMAT JSON)` documents.
//!
//! A document is parsed into an immutable [`PlanTree`]. Per-node values are
//! kept exactly as PostgreSQL emits them: "Actual Rows" and "Actual Total
//! Time" stay per-loop averages, and anything this crate does not model is
//! kept in [`PlanNode::extra`] so the canonical re-serialization loses nothing.

use std::fmt;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("malformed plan document at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unexpected plan document shape at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("plain EXPLAIN, ANALYZE required (no \"Actual Total Time\" at {path})")]
    AnalyzeRequired { path: String },
    #[error("invalid plan node at {path}: {message}")]
    Validation { path: String, message: String },
}

/// Measurements that only exist when the statement was run with ANALYZE.
#[derive(Debug, Clone, PartialEq)]
pub struct ActualMetrics {
    pub startup_ms: f64,
    /// Per-loop average, as emitted.
    pub total_ms: f64,
    /// Per-loop average, as emitted.
    pub rows: f64,
    /// Zero for nodes PostgreSQL reports as "never executed".
    pub loops: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub node_type: String,
    pub parallel_aware: bool,
    pub startup_cost: f64,
    pub total_cost: f64,
    pub plan_rows: f64,
    pub plan_width: f64,
    pub actual: Option<ActualMetrics>,
    pub rows_removed_by_filter: Option<f64>,
    pub children: Vec<PlanNode>,
    /// Keys not modelled above ("Relation Name", "Parent Relationship", ...).
    pub extra: Map<String, Value>,
}

impl PlanNode {
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PlanNode::node_count).sum::<usize>()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// True when this node and all descendants carry actual metrics.
    pub fn all_analyzed(&self) -> bool {
        self.actual.is_some() && self.children.iter().all(PlanNode::all_analyzed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanTree {
    pub root: PlanNode,
    /// Statement runtime from the top-level "Execution Time"; the prediction target.
    pub execution_time_ms: Option<f64>,
    pub planning_time_ms: Option<f64>,
    pub query_text: String,
    pub query_id: String,
    pub template_id: Option<u32>,
    /// Top-level keys besides "Plan", "Planning Time", "Execution Time" and "Query Text".
    pub extra: Map<String, Value>,
}

impl PlanTree {
    pub fn with_query_text(mut self, text: impl Into<String>) -> Self {
        self.query_text = text.into();
        self.query_id = query_id(&self.query_text);
        self
    }

    pub fn with_template_id(mut self, template_id: Option<u32>) -> Self {
        self.template_id = template_id;
        self
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// True when every node carries actual metrics and the runtime is known.
    pub fn is_analyzed(&self) -> bool {
        self.execution_time_ms.is_some() && self.root.all_analyzed()
    }
}

/// Stable 64-bit content hash of whitespace-normalized SQL, as lowercase hex.
pub fn query_id(sql: &str) -> String {
    let normalized = sql.split_whitespace().collect::<Vec<_>>().join(" ");
    let digest = Sha256::digest(normalized.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// "depth.index" identifier of a plan node; the root is `1.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelNumber {
    pub depth: u32,
    pub index: u32,
}

impl fmt::Display for LevelNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.depth, self.index)
    }
}

/// Renders a parent level, using `-1` for the root's missing parent.
pub fn render_parent(parent: Option<LevelNumber>) -> String {
    match parent {
        Some(level) => level.to_string(),
        None => "-1".to_string(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LevelEntry<'a> {
    pub level: LevelNumber,
    pub parent: Option<LevelNumber>,
    pub node: &'a PlanNode,
}

/// Pre-order listing of every node with its level number and parent level.
pub fn assign_level_numbers(tree: &PlanTree) -> Vec<LevelEntry<'_>> {
    fn walk<'a>(
        node: &'a PlanNode,
        depth: u32,
        parent: Option<LevelNumber>,
        counters: &mut Vec<u32>,
        out: &mut Vec<LevelEntry<'a>>,
    ) {
        let slot = depth as usize - 1;
        if counters.len() <= slot {
            counters.push(0);
        }
        counters[slot] += 1;
        let level = LevelNumber {
            depth,
            index: counters[slot],
        };
        out.push(LevelEntry { level, parent, node });
        for child in &node.children {
            walk(child, depth + 1, Some(level), counters, out);
        }
    }

    let mut out = Vec::with_capacity(tree.node_count());
    walk(&tree.root, 1, None, &mut Vec::new(), &mut out);
    out
}

/// Nodes in pre-order: each node before its children, children left to right.
pub fn flatten_preorder(tree: &PlanTree) -> Vec<&PlanNode> {
    fn walk<'a>(node: &'a PlanNode, out: &mut Vec<&'a PlanNode>) {
        out.push(node);
        for child in &node.children {
            walk(child, out);
        }
    }
    let mut out = Vec::with_capacity(tree.node_count());
    walk(&tree.root, &mut out);
    out
}

const NODE_TYPE: &str = "Node Type";
const PARALLEL_AWARE: &str = "Parallel Aware";
const STARTUP_COST: &str = "Startup Cost";
const TOTAL_COST: &str = "Total Cost";
const PLAN_ROWS: &str = "Plan Rows";
const PLAN_WIDTH: &str = "Plan Width";
const ACTUAL_STARTUP: &str = "Actual Startup Time";
const ACTUAL_TOTAL: &str = "Actual Total Time";
const ACTUAL_ROWS: &str = "Actual Rows";
const ACTUAL_LOOPS: &str = "Actual Loops";
const ROWS_REMOVED: &str = "Rows Removed by Filter";
const PLANS: &str = "Plans";

const PLAN: &str = "Plan";
const EXECUTION_TIME: &str = "Execution Time";
const PLANNING_TIME: &str = "Planning Time";
const QUERY_TEXT: &str = "Query Text";

/// Parses an `EXPLAIN (ANALYZE, FORMAT JSON)` document. Every node must carry
/// actual metrics.
pub fn parse_plan_document(json_text: &str) -> Result<PlanTree, PlanError> {
    parse_document(json_text, true)
}

/// Parses either a plain `EXPLAIN (FORMAT JSON)` or an ANALYZE document.
/// Actual metrics are all-or-nothing across the tree.
pub fn parse_plan_document_lenient(json_text: &str) -> Result<PlanTree, PlanError> {
    parse_document(json_text, false)
}

fn parse_document(json_text: &str, require_analyze: bool) -> Result<PlanTree, PlanError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| PlanError::Malformed {
        offset: byte_offset(json_text, e.line(), e.column()),
        message: e.to_string(),
    })?;

    // PostgreSQL emits a one-element array; a bare object is accepted too.
    let top = match value {
        Value::Array(mut items) => {
            if items.len() != 1 {
                return Err(PlanError::Schema {
                    path: "$".into(),
                    message: format!("expected a one-element array, found {} elements", items.len()),
                });
            }
            items.remove(0)
        }
        other => other,
    };
    let Value::Object(mut top) = top else {
        return Err(PlanError::Schema {
            path: "$[0]".into(),
            message: "expected an object".into(),
        });
    };

    let plan = top.remove(PLAN).ok_or_else(|| PlanError::Schema {
        path: "$[0]".into(),
        message: "missing \"Plan\"".into(),
    })?;
    let root = parse_node(plan, "Plan")?;
    let execution_time_ms = take_opt_number(&mut top, EXECUTION_TIME, "$[0]")?;
    let planning_time_ms = take_opt_number(&mut top, PLANNING_TIME, "$[0]")?;
    let query_text = match top.remove(QUERY_TEXT) {
        Some(Value::String(s)) => s,
        Some(_) => {
            return Err(PlanError::Schema {
                path: "$[0]".into(),
                message: "\"Query Text\" must be a string".into(),
            })
        }
        None => String::new(),
    };

    let analyzed = first_unanalyzed(&root, "Plan");
    let any_analyzed = any_analyzed(&root);
    match (&analyzed, require_analyze) {
        (Some(path), true) => return Err(PlanError::AnalyzeRequired { path: path.clone() }),
        (Some(path), false) if any_analyzed => {
            return Err(PlanError::Validation {
                path: path.clone(),
                message: "actual metrics present on some nodes but not this one".into(),
            })
        }
        _ => {}
    }
    if analyzed.is_none() {
        match execution_time_ms {
            None => {
                return Err(PlanError::Schema {
                    path: "$[0]".into(),
                    message: "ANALYZE plan without \"Execution Time\"".into(),
                })
            }
            Some(t) if !t.is_finite() || t <= 0.0 => {
                return Err(PlanError::Validation {
                    path: "$[0]".into(),
                    message: format!("\"Execution Time\" must be positive, got {t}"),
                })
            }
            _ => {}
        }
    }

    let id = query_id(&query_text);
    Ok(PlanTree {
        root,
        execution_time_ms,
        planning_time_ms,
        query_text,
        query_id: id,
        template_id: None,
        extra: top,
    })
}

fn first_unanalyzed(node: &PlanNode, path: &str) -> Option<String> {
    if node.actual.is_none() {
        return Some(path.to_string());
    }
    node.children
        .iter()
        .enumerate()
        .find_map(|(i, c)| first_unanalyzed(c, &format!("{path}.Plans[{i}]")))
}

fn any_analyzed(node: &PlanNode) -> bool {
    node.actual.is_some() || node.children.iter().any(any_analyzed)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_node(value: Value, path: &str) -> Result<PlanNode, PlanError> {
    let Value::Object(mut obj) = value else {
        return Err(PlanError::Schema {
            path: path.into(),
            message: "plan node must be an object".into(),
        });
    };

    let node_type = match obj.remove(NODE_TYPE) {
        Some(Value::String(s)) => s,
        _ => {
            return Err(PlanError::Schema {
                path: path.into(),
                message: "missing string \"Node Type\"".into(),
            })
        }
    };
    let parallel_aware = match obj.remove(PARALLEL_AWARE) {
        Some(Value::Bool(b)) => b,
        None => false,
        Some(_) => {
            return Err(PlanError::Schema {
                path: path.into(),
                message: "\"Parallel Aware\" must be a boolean".into(),
            })
        }
    };
    let startup_cost = take_number(&mut obj, STARTUP_COST, path)?;
    let total_cost = take_number(&mut obj, TOTAL_COST, path)?;
    let plan_rows = take_number(&mut obj, PLAN_ROWS, path)?;
    let plan_width = take_number(&mut obj, PLAN_WIDTH, path)?;

    let actual_startup = take_opt_number(&mut obj, ACTUAL_STARTUP, path)?;
    let actual_total = take_opt_number(&mut obj, ACTUAL_TOTAL, path)?;
    let actual_rows = take_opt_number(&mut obj, ACTUAL_ROWS, path)?;
    let actual_loops = take_opt_number(&mut obj, ACTUAL_LOOPS, path)?;
    let rows_removed_by_filter = take_opt_number(&mut obj, ROWS_REMOVED, path)?;

    let actual = match actual_total {
        None => {
            // Keep partial ANALYZE output (e.g. TIMING OFF) visible to re-serialization.
            for (key, v) in [
                (ACTUAL_STARTUP, actual_startup),
                (ACTUAL_ROWS, actual_rows),
                (ACTUAL_LOOPS, actual_loops),
            ] {
                if let Some(v) = v {
                    obj.insert(key.to_string(), number(v));
                }
            }
            None
        }
        Some(total_ms) => Some(ActualMetrics {
            startup_ms: actual_startup.unwrap_or(0.0),
            total_ms,
            rows: require(actual_rows, ACTUAL_ROWS, path)?,
            loops: require(actual_loops, ACTUAL_LOOPS, path)?,
        }),
    };

    let children = match obj.remove(PLANS) {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, child)| parse_node(child, &format!("{path}.Plans[{i}]")))
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(PlanError::Schema {
                path: path.into(),
                message: "\"Plans\" must be an array".into(),
            })
        }
    };

    let node = PlanNode {
        node_type,
        parallel_aware,
        startup_cost,
        total_cost,
        plan_rows,
        plan_width,
        actual,
        rows_removed_by_filter,
        children,
        extra: obj,
    };
    validate_node(&node, path)?;
    Ok(node)
}

fn validate_node(node: &PlanNode, path: &str) -> Result<(), PlanError> {
    let fail = |message: String| {
        Err(PlanError::Validation {
            path: path.to_string(),
            message,
        })
    };
    if node.startup_cost > node.total_cost {
        return fail(format!(
            "startup cost {} exceeds total cost {}",
            node.startup_cost, node.total_cost
        ));
    }
    for (name, v) in [
        ("plan rows", node.plan_rows),
        ("plan width", node.plan_width),
        ("startup cost", node.startup_cost),
    ] {
        if v < 0.0 {
            return fail(format!("{name} is negative ({v})"));
        }
    }
    if let Some(removed) = node.rows_removed_by_filter {
        if removed < 0.0 {
            return fail(format!("rows removed by filter is negative ({removed})"));
        }
    }
    if let Some(a) = &node.actual {
        if a.startup_ms > a.total_ms {
            return fail(format!(
                "actual startup time {} exceeds actual total time {}",
                a.startup_ms, a.total_ms
            ));
        }
        if a.rows < 0.0 || a.loops < 0.0 || a.startup_ms < 0.0 {
            return fail("negative actual metric".to_string());
        }
    }
    Ok(())
}

fn take_number(obj: &mut Map<String, Value>, key: &str, path: &str) -> Result<f64, PlanError> {
    let v = take_opt_number(obj, key, path)?;
    require(v, key, path)
}

fn require(v: Option<f64>, key: &str, path: &str) -> Result<f64, PlanError> {
    v.ok_or_else(|| PlanError::Schema {
        path: path.into(),
        message: format!("missing \"{key}\""),
    })
}

fn take_opt_number(obj: &mut Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>, PlanError> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => match n.as_f64() {
            Some(f) if f.is_finite() => Ok(Some(f)),
            _ => Err(PlanError::Schema {
                path: path.into(),
                message: format!("\"{key}\" is not a finite number"),
            }),
        },
        Some(_) => Err(PlanError::Schema {
            path: path.into(),
            message: format!("\"{key}\" must be a number"),
        }),
    }
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn node_to_json(node: &PlanNode) -> Value {
    let mut obj = Map::new();
    obj.insert(NODE_TYPE.into(), Value::String(node.node_type.clone()));
    obj.insert(PARALLEL_AWARE.into(), Value::Bool(node.parallel_aware));
    obj.insert(STARTUP_COST.into(), number(node.startup_cost));
    obj.insert(TOTAL_COST.into(), number(node.total_cost));
    obj.insert(PLAN_ROWS.into(), number(node.plan_rows));
    obj.insert(PLAN_WIDTH.into(), number(node.plan_width));
    if let Some(a) = &node.actual {
        obj.insert(ACTUAL_STARTUP.into(), number(a.startup_ms));
        obj.insert(ACTUAL_TOTAL.into(), number(a.total_ms));
        obj.insert(ACTUAL_ROWS.into(), number(a.rows));
        obj.insert(ACTUAL_LOOPS.into(), number(a.loops));
    }
    if let Some(r) = node.rows_removed_by_filter {
        obj.insert(ROWS_REMOVED.into(), number(r));
    }
    for (k, v) in &node.extra {
        obj.insert(k.clone(), v.clone());
    }
    if !node.children.is_empty() {
        obj.insert(
            PLANS.into(),
            Value::Array(node.children.iter().map(node_to_json).collect()),
        );
    }
    Value::Object(obj)
}

/// Canonical `EXPLAIN (FORMAT JSON)` rendering of a parsed tree.
pub fn to_plan_document(tree: &PlanTree) -> String {
    let mut top = Map::new();
    top.insert(PLAN.into(), node_to_json(&tree.root));
    if let Some(t) = tree.planning_time_ms {
        top.insert(PLANNING_TIME.into(), number(t));
    }
    if let Some(t) = tree.execution_time_ms {
        top.insert(EXECUTION_TIME.into(), number(t));
    }
    if !tree.query_text.is_empty() {
        top.insert(QUERY_TEXT.into(), Value::String(tree.query_text.clone()));
    }
    for (k, v) in &tree.extra {
        top.insert(k.clone(), v.clone());
    }
    serde_json::to_string_pretty(&Value::Array(vec![Value::Object(top)])).expect("plan values are always serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEAF: &str = r#"[{"Plan": {"Node Type": "Seq Scan", "Parallel Aware": false,
        "Startup Cost": 0.0, "Total Cost": 10.0, "Plan Rows": 5, "Plan Width": 4,
        "Actual Startup Time": 0.01, "Actual Total Time": 0.2, "Actual Rows": 5, "Actual Loops": 1,
        "Relation Name": "t"},
        "Planning Time": 0.1, "Execution Time": 0.3}]"#;

    #[test]
    fn leaf_only_document() {
        let tree = parse_plan_document(LEAF).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert!(tree.root.children.is_empty());
        assert_eq!(tree.root.extra["Relation Name"], "t");
        let levels = assign_level_numbers(&tree);
        assert_eq!(levels.len(), 1);
        assert_eq!(levels[0].level.to_string(), "1.1");
        assert_eq!(render_parent(levels[0].parent), "-1");
        assert_eq!(flatten_preorder(&tree).len(), 1);
    }

    #[test]
    fn startup_above_total_cost_is_rejected() {
        let doc = LEAF
            .replace("\"Startup Cost\": 0.0", "\"Startup Cost\": 10")
            .replace("\"Total Cost\": 10.0", "\"Total Cost\": 5");
        match parse_plan_document(&doc) {
            Err(PlanError::Validation { path, .. }) => assert_eq!(path, "Plan"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn plain_explain_requires_analyze() {
        let doc = r#"[{"Plan": {"Node Type": "Seq Scan", "Startup Cost": 0, "Total Cost": 1,
            "Plan Rows": 1, "Plan Width": 4}}]"#;
        assert!(matches!(
            parse_plan_document(doc),
            Err(PlanError::AnalyzeRequired { .. })
        ));
        let tree = parse_plan_document_lenient(doc).unwrap();
        assert!(!tree.is_analyzed());
        assert!(tree.execution_time_ms.is_none());
    }

    #[test]
    fn malformed_reports_byte_offset() {
        let doc = "[{\"Plan\": {\"Node Type\": }]";
        match parse_plan_document(doc) {
            Err(PlanError::Malformed { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn nested_violation_names_node_path() {
        let doc = r#"[{"Plan": {"Node Type": "Limit", "Startup Cost": 0, "Total Cost": 1,
            "Plan Rows": 1, "Plan Width": 4, "Actual Startup Time": 0.1, "Actual Total Time": 0.2,
            "Actual Rows": 1, "Actual Loops": 1,
            "Plans": [{"Node Type": "Seq Scan", "Startup Cost": 3, "Total Cost": 1,
                "Plan Rows": 1, "Plan Width": 4, "Actual Startup Time": 0.1,
                "Actual Total Time": 0.2, "Actual Rows": 1, "Actual Loops": 1}]},
            "Execution Time": 0.5}]"#;
        match parse_plan_document(doc) {
            Err(PlanError::Validation { path, .. }) => assert_eq!(path, "Plan.Plans[0]"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn query_id_ignores_whitespace_layout() {
        assert_eq!(query_id("SELECT  1\n FROM t"), query_id("SELECT 1 FROM t"));
        assert_ne!(query_id("SELECT 1"), query_id("SELECT 2"));
        assert_eq!(query_id("x").len(), 16);
    }

    #[test]
    fn subplan_relationship_kept_in_extra() {
        let doc = r#"[{"Plan": {"Node Type": "Result", "Startup Cost": 0, "Total Cost": 1,
            "Plan Rows": 1, "Plan Width": 4, "Actual Startup Time": 0.1, "Actual Total Time": 0.2,
            "Actual Rows": 1, "Actual Loops": 1,
            "Plans": [{"Node Type": "Seq Scan", "Parent Relationship": "InitPlan",
                "Subplan Name": "InitPlan 1 (returns $0)", "Startup Cost": 0, "Total Cost": 1,
                "Plan Rows": 1, "Plan Width": 4, "Actual Startup Time": 0.0,
                "Actual Total Time": 0.0, "Actual Rows": 0, "Actual Loops": 0}]},
            "Execution Time": 0.5}]"#;
        let tree = parse_plan_document(doc).unwrap();
        assert_eq!(tree.root.children[0].extra["Parent Relationship"], "InitPlan");
        assert_eq!(tree.root.children[0].actual.as_ref().unwrap().loops, 0.0);
    }
}
