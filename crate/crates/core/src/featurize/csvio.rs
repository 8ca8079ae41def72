//! CSV files for node rows and query-level datasets.

use std::path::Path;

use super::{Column, Dataset, DatasetRow, FeatureError, FeatureSchema, NodeFeatureRow, Provenance, ScalarColumn};

/// Node CSV header: LN through OC, then derived extensions.
pub const NODE_CSV_HEADER: [&str; 21] = [
    "LN",
    "PL",
    "NT",
    "PA",
    "SC",
    "TC",
    "PW",
    "ST",
    "TT",
    "IC",
    "OC",
    "BC",
    "plan_rows",
    "actual_rows",
    "loops",
    "depth",
    "subtree_size",
    "cardinality_error",
    "cost_per_row",
    "time_per_loop",
    "query_id",
];

pub const DATASET_PREFIX: [&str; 2] = ["query_id", "template_id"];
pub const DATASET_SUFFIX: [&str; 2] = ["target_ms", "target_log"];

fn io_err(path: &Path) -> impl Fn(csv::Error) -> FeatureError + '_ {
    move |e| FeatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<(), FeatureError> {
    for (i, want) in expected.iter().enumerate() {
        match found.get(i) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(FeatureError::Schema {
                    column: want.clone(),
                    message: format!("header position {} holds {got}", i + 1),
                })
            }
            None => {
                return Err(FeatureError::Schema {
                    column: want.clone(),
                    message: "missing from header".into(),
                })
            }
        }
    }
    if let Some(extra) = found.get(expected.len()) {
        return Err(FeatureError::Schema {
            column: extra.to_string(),
            message: "unexpected column".into(),
        });
    }
    Ok(())
}

/// Shortest text that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_node_csv(path: &Path, rows: &[NodeFeatureRow]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    w.write_record(NODE_CSV_HEADER).map_err(io_err(path))?;
    for r in rows {
        w.write_record([
            r.ln.clone(),
            r.pl.clone(),
            r.nt.clone(),
            if r.pa { "TRUE" } else { "FALSE" }.to_string(),
            num(r.sc),
            num(r.tc),
            num(r.pw),
            num(r.st),
            num(r.tt),
            num(r.ic),
            num(r.oc),
            num(r.bc),
            num(r.plan_rows),
            num(r.actual_rows),
            num(r.loops),
            r.depth.to_string(),
            r.subtree_size.to_string(),
            num(r.cardinality_error),
            num(r.cost_per_row),
            num(r.time_per_loop),
            r.query_id.clone(),
        ])
        .map_err(io_err(path))?;
    }
    w.flush().map_err(|e| FeatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_node_csv(path: &Path) -> Result<Vec<NodeFeatureRow>, FeatureError> {
    let mut r = csv::Reader::from_path(path).map_err(io_err(path))?;
    let expected: Vec<String> = NODE_CSV_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(r.headers().map_err(io_err(path))?, &expected)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec.map_err(|e: csv::Error| {
            FeatureError::Schema {
                column: e
                    .position()
                    .map_or_else(|| "<row>".into(), |p| format!("<line {}>", p.line())),
                message: e.to_string(),
            }
        })?);
    }
    Ok(rows)
}

/// Provenance of a dataset column, recovered from its name.
pub fn provenance_of(name: &str) -> Provenance {
    if name.starts_with("tfidf_") || name.starts_with("embed_") {
        return Provenance::Semantic;
    }
    for agg in ["sum_", "mean_", "max_"] {
        if let Some(rest) = name.strip_prefix(agg) {
            if let Some(col) = ScalarColumn::for_mode(super::FeatureMode::Full)
                .iter()
                .find(|c| c.name() == rest)
            {
                return col.provenance();
            }
        }
    }
    Provenance::Structural
}

pub fn write_dataset_csv(path: &Path, dataset: &Dataset) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    let header: Vec<String> = DATASET_PREFIX
        .iter()
        .map(|s| s.to_string())
        .chain(dataset.schema.names())
        .chain(DATASET_SUFFIX.iter().map(|s| s.to_string()))
        .collect();
    w.write_record(&header).map_err(io_err(path))?;
    for row in &dataset.rows {
        let mut rec = vec![
            row.query_id.clone(),
            row.template_id.map(|t| t.to_string()).unwrap_or_default(),
        ];
        rec.extend(row.features.iter().map(|x| num(*x)));
        rec.push(num(row.target_ms));
        rec.push(num(row.target_log));
        w.write_record(&rec).map_err(io_err(path))?;
    }
    w.flush().map_err(|e| FeatureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a dataset CSV. With `expected` set, the feature columns must match it exactly.
pub fn read_dataset_csv(path: &Path, expected: Option<&FeatureSchema>) -> Result<Dataset, FeatureError> {
    let mut r = csv::Reader::from_path(path).map_err(io_err(path))?;
    let header = r.headers().map_err(io_err(path))?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    let schema = match expected {
        Some(s) => {
            let want: Vec<String> = DATASET_PREFIX
                .iter()
                .map(|s| s.to_string())
                .chain(s.names())
                .chain(DATASET_SUFFIX.iter().map(|s| s.to_string()))
                .collect();
            check_header(&header, &want)?;
            s.clone()
        }
        None => {
            if names.len() < 4 {
                return Err(FeatureError::Schema {
                    column: "target_ms".into(),
                    message: "dataset header too short".into(),
                });
            }
            for (i, want) in DATASET_PREFIX.iter().enumerate() {
                if names[i] != *want {
                    return Err(FeatureError::Schema {
                        column: want.to_string(),
                        message: format!("header position {} holds {}", i + 1, names[i]),
                    });
                }
            }
            let k = names.len() - 2;
            for (i, want) in DATASET_SUFFIX.iter().enumerate() {
                if names[k + i] != *want {
                    return Err(FeatureError::Schema {
                        column: want.to_string(),
                        message: format!("header position {} holds {}", k + i + 1, names[k + i]),
                    });
                }
            }
            FeatureSchema {
                columns: names[2..k]
                    .iter()
                    .map(|n| Column {
                        name: n.clone(),
                        provenance: provenance_of(n),
                    })
                    .collect(),
            }
        }
    };

    let width = schema.width();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_err(path))?;
        let field = |i: usize| -> Result<f64, FeatureError> {
            rec[i].parse::<f64>().map_err(|e| FeatureError::Schema {
                column: names[i].clone(),
                message: format!("{e} in row {}", &rec[0]),
            })
        };
        let template_id = match &rec[1] {
            "" => None,
            t => Some(t.parse::<u32>().map_err(|e| FeatureError::Schema {
                column: "template_id".into(),
                message: e.to_string(),
            })?),
        };
        rows.push(DatasetRow {
            query_id: rec[0].to_string(),
            template_id,
            features: (2..2 + width).map(field).collect::<Result<_, _>>()?,
            target_ms: field(2 + width)?,
            target_log: field(3 + width)?,
        });
    }
    let ds = Dataset { schema, rows };
    ds.validate()?;
    Ok(ds)
}
