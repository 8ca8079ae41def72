use serde::{Deserialize, Serialize};

use crate::plan_ingest::{assign_level_numbers, render_parent, LevelEntry, PlanNode, PlanTree};

use super::FeatureError;

/// Operator labels with a dedicated one-hot slot; everything else maps to "Other".
pub const NODE_TYPE_CATALOG: [&str; 24] = [
    "Seq Scan",
    "Index Scan",
    "Index Only Scan",
    "Bitmap Heap Scan",
    "Bitmap Index Scan",
    "Nested Loop",
    "Hash Join",
    "Merge Join",
    "Hash",
    "Sort",
    "Incremental Sort",
    "Aggregate",
    "Group",
    "Limit",
    "Gather",
    "Gather Merge",
    "Materialize",
    "Memoize",
    "Unique",
    "Append",
    "Subquery Scan",
    "CTE Scan",
    "WindowAgg",
    "Result",
];

/// Catalog size including the trailing "Other" slot.
pub const NODE_TYPE_SLOTS: usize = NODE_TYPE_CATALOG.len() + 1;

pub fn node_type_index(label: &str) -> usize {
    NODE_TYPE_CATALOG
        .iter()
        .position(|t| *t == label)
        .unwrap_or(NODE_TYPE_CATALOG.len())
}

pub fn node_type_slot_name(slot: usize) -> String {
    let label = NODE_TYPE_CATALOG.get(slot).copied().unwrap_or("Other");
    label.to_ascii_lowercase().replace(' ', "_")
}

/// One row of the node-level CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatureRow {
    #[serde(rename = "LN")]
    pub ln: String,
    #[serde(rename = "PL")]
    pub pl: String,
    #[serde(rename = "NT")]
    pub nt: String,
    #[serde(rename = "PA", with = "upper_bool")]
    pub pa: bool,
    #[serde(rename = "SC")]
    pub sc: f64,
    #[serde(rename = "TC")]
    pub tc: f64,
    #[serde(rename = "PW")]
    pub pw: f64,
    #[serde(rename = "ST")]
    pub st: f64,
    #[serde(rename = "TT")]
    pub tt: f64,
    #[serde(rename = "IC")]
    pub ic: f64,
    #[serde(rename = "OC")]
    pub oc: f64,
    #[serde(rename = "BC")]
    pub bc: f64,
    pub plan_rows: f64,
    pub actual_rows: f64,
    pub loops: f64,
    pub depth: u32,
    pub subtree_size: usize,
    pub cardinality_error: f64,
    pub cost_per_row: f64,
    pub time_per_loop: f64,
    pub query_id: String,
}

mod upper_bool {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "TRUE" } else { "FALSE" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "TRUE" => Ok(true),
            "FALSE" => Ok(false),
            other => Err(D::Error::custom(format!("expected TRUE or FALSE, got {other}"))),
        }
    }
}

fn output_cardinality(node: &PlanNode) -> Result<f64, FeatureError> {
    let a = node
        .actual
        .as_ref()
        .ok_or_else(|| FeatureError::MissingActuals(node.node_type.clone()))?;
    Ok((a.rows * a.loops).round())
}

fn input_cardinality(node: &PlanNode) -> Result<f64, FeatureError> {
    if node.is_leaf() {
        let oc = output_cardinality(node)?;
        let loops = node.actual.as_ref().map_or(1.0, |a| a.loops);
        Ok(match node.rows_removed_by_filter {
            Some(removed) => oc + (removed * loops).round(),
            None => oc,
        })
    } else {
        node.children.iter().map(output_cardinality).sum()
    }
}

fn base_cardinality(node: &PlanNode) -> Result<f64, FeatureError> {
    if node.is_leaf() {
        input_cardinality(node)
    } else {
        node.children.iter().map(base_cardinality).sum()
    }
}

/// Scalar copies plus cardinalities and derived ratios for one analyzed node.
pub fn node_features(entry: &LevelEntry<'_>, query_id: &str) -> Result<NodeFeatureRow, FeatureError> {
    let node = entry.node;
    let a = node
        .actual
        .as_ref()
        .ok_or_else(|| FeatureError::MissingActuals(node.node_type.clone()))?;
    let oc = output_cardinality(node)?;
    Ok(NodeFeatureRow {
        ln: entry.level.to_string(),
        pl: render_parent(entry.parent),
        nt: node.node_type.clone(),
        pa: node.parallel_aware,
        sc: node.startup_cost,
        tc: node.total_cost,
        pw: node.plan_width,
        st: a.startup_ms,
        tt: a.total_ms,
        ic: input_cardinality(node)?,
        oc,
        bc: base_cardinality(node)?,
        plan_rows: node.plan_rows,
        actual_rows: a.rows,
        loops: a.loops,
        depth: entry.level.depth,
        subtree_size: node.node_count(),
        cardinality_error: (a.rows * a.loops) / node.plan_rows.max(1.0),
        cost_per_row: node.total_cost / oc.max(1.0),
        time_per_loop: a.total_ms / a.loops.max(1.0),
        query_id: query_id.to_string(),
    })
}

/// Node rows for every node of an analyzed tree, in pre-order.
pub fn node_rows(tree: &PlanTree) -> Result<Vec<NodeFeatureRow>, FeatureError> {
    assign_level_numbers(tree)
        .iter()
        .map(|e| node_features(e, &tree.query_id))
        .collect()
}

/// Plan-wide shape statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralSummary {
    pub node_count: usize,
    pub max_depth: u32,
    pub mean_depth: f64,
    pub parallel_aware_count: usize,
    /// Indexed like [`NODE_TYPE_CATALOG`] with "Other" last.
    pub type_counts: [usize; NODE_TYPE_SLOTS],
    pub root_type: usize,
}

pub fn structural_summary(tree: &PlanTree) -> StructuralSummary {
    let levels = assign_level_numbers(tree);
    let mut type_counts = [0usize; NODE_TYPE_SLOTS];
    let mut depth_sum = 0u64;
    let mut max_depth = 0;
    let mut parallel_aware_count = 0;
    for e in &levels {
        type_counts[node_type_index(&e.node.node_type)] += 1;
        depth_sum += u64::from(e.level.depth);
        max_depth = max_depth.max(e.level.depth);
        parallel_aware_count += usize::from(e.node.parallel_aware);
    }
    StructuralSummary {
        node_count: levels.len(),
        max_depth,
        mean_depth: depth_sum as f64 / levels.len() as f64,
        parallel_aware_count,
        type_counts,
        root_type: node_type_index(&tree.root.node_type),
    }
}
