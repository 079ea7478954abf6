//! Importer for textual power-system case files with `bus`, `branch`,
//! `gen`, and `gencost` matrix sections.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use flowmark_core::types::{Dataset, Line, Node, Plant, Zone};

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("case file '{0}' not found")]
    MissingFile(String),
    #[error("missing section 'mpc.{0}'")]
    MissingSection(String),
    #[error("section '{section}', row {row}: {message}")]
    MalformedRow {
        section: String,
        row: usize,
        message: String,
    },
    #[error("gencost row {row}: only linear cost models are supported (found {found})")]
    NonlinearCost { row: usize, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Surrogate capacity for branches whose rating is given as 0 ("unlimited").
const UNLIMITED_CAPACITY: f64 = 1e6;

/// Extract the numeric matrix `mpc.<name> = [ ... ];` from the file text.
fn parse_section(content: &str, name: &str) -> Result<Vec<Vec<f64>>, ImportError> {
    let marker = format!("mpc.{name}");
    let start = content
        .find(&marker)
        .ok_or_else(|| ImportError::MissingSection(name.to_string()))?;
    let after = &content[start..];
    let open = after
        .find('[')
        .ok_or_else(|| ImportError::MissingSection(name.to_string()))?;
    let close = after[open..]
        .find(']')
        .ok_or_else(|| ImportError::MissingSection(name.to_string()))?;
    let body = &after[open + 1..open + close];

    let mut rows = Vec::new();
    for (i, raw_row) in body.split(';').enumerate() {
        // Strip matlab comments and whitespace.
        let cleaned: String = raw_row
            .lines()
            .map(|l| l.split('%').next().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(" ");
        let fields: Vec<&str> = cleaned.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let row: Vec<f64> = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| ImportError::MalformedRow {
                    section: name.to_string(),
                    row: i + 1,
                    message: format!("'{f}' is not a number"),
                })
            })
            .collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Warnings collected during import alongside the dataset.
pub struct Import {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

/// Import a textual case file.
///
/// Buses become nodes (grouped into zones by the bus `AREA` column),
/// branches become lines (reactance and `rateA` rating), generators become
/// plants with the linear cost term as marginal cost, and bus loads become
/// a flat demand series at timestep 0. Quadratic cost models are rejected;
/// branches rated 0 get a large surrogate capacity with a warning.
pub fn import_matpower_case(path: &Path) -> Result<Import, ImportError> {
    if !path.exists() {
        return Err(ImportError::MissingFile(path.display().to_string()));
    }
    let content = fs::read_to_string(path)?;
    let bus = parse_section(&content, "bus")?;
    let gen = parse_section(&content, "gen")?;
    let branch = parse_section(&content, "branch")?;
    let gencost = parse_section(&content, "gencost")?;
    let mut warnings = Vec::new();

    // Zones from the AREA column (index 6), named by area number.
    let mut areas: Vec<i64> = bus
        .iter()
        .map(|row| row.get(6).copied().unwrap_or(1.0) as i64)
        .collect();
    let mut distinct = areas.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.is_empty() {
        distinct.push(1);
        areas = vec![1; bus.len()];
    }
    let zones: Vec<Zone> = distinct
        .iter()
        .map(|a| Zone {
            id: format!("area{a}"),
        })
        .collect();

    let mut nodes = Vec::with_capacity(bus.len());
    let mut demand: BTreeMap<String, flowmark_core::types::Series> = BTreeMap::new();
    let mut bus_to_node: BTreeMap<i64, String> = BTreeMap::new();
    for (i, row) in bus.iter().enumerate() {
        if row.len() < 13 {
            return Err(ImportError::MalformedRow {
                section: "bus".into(),
                row: i + 1,
                message: format!("expected 13 columns, got {}", row.len()),
            });
        }
        let bus_id = row[0] as i64;
        let id = format!("n{bus_id}");
        bus_to_node.insert(bus_id, id.clone());
        nodes.push(Node {
            id: id.clone(),
            zone: format!("area{}", areas[i]),
            slack: row[1] as i64 == 3,
            lat: None,
            lon: None,
        });
        let pd = row[2];
        if pd != 0.0 {
            demand.entry(id).or_default().insert(0, pd);
        }
    }

    let mut lines = Vec::with_capacity(branch.len());
    for (i, row) in branch.iter().enumerate() {
        if row.len() < 6 {
            return Err(ImportError::MalformedRow {
                section: "branch".into(),
                row: i + 1,
                message: format!("expected at least 6 columns, got {}", row.len()),
            });
        }
        let resolve = |bus: f64| {
            bus_to_node
                .get(&(bus as i64))
                .cloned()
                .ok_or_else(|| ImportError::MalformedRow {
                    section: "branch".into(),
                    row: i + 1,
                    message: format!("references unknown bus {bus}"),
                })
        };
        let mut capacity = row[5];
        if capacity == 0.0 {
            capacity = UNLIMITED_CAPACITY;
            warnings.push(format!(
                "branch {} has no rating; using {UNLIMITED_CAPACITY} MW surrogate",
                i + 1
            ));
        }
        lines.push(Line {
            id: format!("l{}", i + 1),
            from: resolve(row[0])?,
            to: resolve(row[1])?,
            reactance: row[3],
            capacity,
            contingency: true,
        });
    }

    let mut plants = Vec::with_capacity(gen.len());
    for (i, row) in gen.iter().enumerate() {
        if row.len() < 9 {
            return Err(ImportError::MalformedRow {
                section: "gen".into(),
                row: i + 1,
                message: format!("expected at least 9 columns, got {}", row.len()),
            });
        }
        let node = bus_to_node
            .get(&(row[0] as i64))
            .cloned()
            .ok_or_else(|| ImportError::MalformedRow {
                section: "gen".into(),
                row: i + 1,
                message: format!("references unknown bus {}", row[0]),
            })?;
        let mc_el = linear_cost(&gencost, i)?;
        plants.push(Plant {
            id: format!("g{}", i + 1),
            node,
            mc_el,
            g_max: row[8],
            h_max: 0.0,
            heat_area: None,
            eta: None,
            storage_capacity: 0.0,
            chp_ratio: None,
            availability: None,
        });
    }

    let dataset = Dataset {
        nodes,
        zones,
        lines,
        plants,
        ntcs: Vec::new(),
        demand,
        heat_demand: BTreeMap::new(),
        availability: BTreeMap::new(),
    };
    Ok(Import { dataset, warnings })
}

/// Marginal cost from a polynomial gencost row; rejects anything beyond a
/// linear-plus-constant model.
fn linear_cost(gencost: &[Vec<f64>], index: usize) -> Result<f64, ImportError> {
    let row = gencost
        .get(index)
        .ok_or_else(|| ImportError::MalformedRow {
            section: "gencost".into(),
            row: index + 1,
            message: "missing cost row for generator".into(),
        })?;
    if row.len() < 4 {
        return Err(ImportError::MalformedRow {
            section: "gencost".into(),
            row: index + 1,
            message: "expected MODEL STARTUP SHUTDOWN NCOST coefficients".into(),
        });
    }
    let model = row[0] as i64;
    if model != 2 {
        return Err(ImportError::NonlinearCost {
            row: index + 1,
            found: format!("cost model {model}"),
        });
    }
    let ncost = row[3] as usize;
    let coeffs = &row[4..];
    if coeffs.len() < ncost {
        return Err(ImportError::MalformedRow {
            section: "gencost".into(),
            row: index + 1,
            message: format!("NCOST={ncost} but only {} coefficients", coeffs.len()),
        });
    }
    // Coefficients are highest order first; anything above the linear term
    // must be zero.
    let higher = &coeffs[..ncost.saturating_sub(2)];
    if higher.iter().any(|&c| c != 0.0) {
        return Err(ImportError::NonlinearCost {
            row: index + 1,
            found: "nonzero quadratic or higher coefficient".into(),
        });
    }
    Ok(if ncost >= 2 { coeffs[ncost - 2] } else { 0.0 })
}
