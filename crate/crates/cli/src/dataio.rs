//! Dataset loading and writing: one CSV file per table, either in a
//! directory or a zip archive. Loading parses all tables, resolves
//! cross-references, and runs validation automatically.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use flowmark_core::types::{Dataset, Line, Node, Ntc, Plant, Timestep, Zone};
use flowmark_core::ValidationReport;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset path '{0}' does not exist")]
    MissingPath(String),
    #[error("missing table '{0}'")]
    MissingTable(String),
    #[error("table '{table}', row {row}: {message}")]
    MalformedRow {
        table: String,
        row: usize,
        message: String,
    },
    #[error("dataset failed validation with {errors} error(s); first: {first}")]
    Invalid { errors: usize, first: String },
    #[error("archive error: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const TABLES: [&str; 8] = [
    "nodes.csv",
    "zones.csv",
    "lines.csv",
    "plants.csv",
    "demand.csv",
    "heat_demand.csv",
    "availability.csv",
    "ntc.csv",
];

#[derive(Debug, Deserialize, Serialize)]
struct NodeRow {
    id: String,
    zone: String,
    slack: String,
    lat: Option<f64>,
    lon: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ZoneRow {
    id: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct LineRow {
    id: String,
    node_from: String,
    node_to: String,
    reactance: f64,
    capacity: f64,
    contingency: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct PlantRow {
    id: String,
    node: String,
    mc_el: f64,
    g_max: f64,
    h_max: f64,
    heat_area: Option<String>,
    eta: Option<f64>,
    storage_capacity: f64,
    chp_ratio: Option<f64>,
    availability: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct SeriesRow {
    timestep: Timestep,
    #[serde(alias = "node", alias = "heat_area", alias = "id")]
    key: String,
    value: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct NtcRow {
    zone_from: String,
    zone_to: String,
    capacity: f64,
}

fn parse_bool(table: &str, row: usize, raw: &str) -> Result<bool, DataError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" | "" => Ok(false),
        other => Err(DataError::MalformedRow {
            table: table.to_string(),
            row,
            message: format!("expected a boolean, got '{other}'"),
        }),
    }
}

/// Empty strings in optional columns mean "absent".
fn clean(value: Option<String>) -> Option<String> {
    value.filter(|v| !v.trim().is_empty())
}

fn parse_table<T: for<'de> Deserialize<'de>>(
    table: &str,
    content: &str,
) -> Result<Vec<T>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<T>().enumerate() {
        rows.push(record.map_err(|e| DataError::MalformedRow {
            table: table.to_string(),
            row: i + 2, // 1-based, after the header line
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Read all table files from a directory or a zip archive.
fn read_tables(path: &Path) -> Result<BTreeMap<String, String>, DataError> {
    if !path.exists() {
        return Err(DataError::MissingPath(path.display().to_string()));
    }
    let mut tables = BTreeMap::new();
    if path.is_dir() {
        for table in TABLES {
            let file = path.join(table);
            if !file.exists() {
                return Err(DataError::MissingTable(table.to_string()));
            }
            tables.insert(table.to_string(), fs::read_to_string(&file)?);
        }
    } else {
        let file = fs::File::open(path)?;
        let mut archive =
            zip::ZipArchive::new(file).map_err(|e| DataError::Archive(e.to_string()))?;
        for table in TABLES {
            let mut entry = archive
                .by_name(table)
                .map_err(|_| DataError::MissingTable(table.to_string()))?;
            let mut content = String::new();
            entry
                .read_to_string(&mut content)
                .map_err(|e| DataError::Archive(e.to_string()))?;
            tables.insert(table.to_string(), content);
        }
    }
    Ok(tables)
}

fn series_from_rows(rows: Vec<SeriesRow>) -> BTreeMap<String, flowmark_core::types::Series> {
    let mut out: BTreeMap<String, flowmark_core::types::Series> = BTreeMap::new();
    for row in rows {
        out.entry(row.key).or_default().insert(row.timestep, row.value);
    }
    out
}

/// Parse all tables and run validation, without rejecting invalid
/// datasets; backs the `validate` subcommand, which reports findings
/// instead of failing.
pub fn inspect_dataset(path: &Path) -> Result<(Dataset, ValidationReport), DataError> {
    let tables = read_tables(path)?;
    let nodes = parse_table::<NodeRow>("nodes.csv", &tables["nodes.csv"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(Node {
                slack: parse_bool("nodes.csv", i + 2, &r.slack)?,
                id: r.id,
                zone: r.zone,
                lat: r.lat,
                lon: r.lon,
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    let zones = parse_table::<ZoneRow>("zones.csv", &tables["zones.csv"])?
        .into_iter()
        .map(|r| Zone { id: r.id })
        .collect();
    let lines = parse_table::<LineRow>("lines.csv", &tables["lines.csv"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(Line {
                contingency: parse_bool("lines.csv", i + 2, &r.contingency)?,
                id: r.id,
                from: r.node_from,
                to: r.node_to,
                reactance: r.reactance,
                capacity: r.capacity,
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    let plants = parse_table::<PlantRow>("plants.csv", &tables["plants.csv"])?
        .into_iter()
        .map(|r| Plant {
            id: r.id,
            node: r.node,
            mc_el: r.mc_el,
            g_max: r.g_max,
            h_max: r.h_max,
            heat_area: clean(r.heat_area),
            eta: r.eta,
            storage_capacity: r.storage_capacity,
            chp_ratio: r.chp_ratio,
            availability: clean(r.availability),
        })
        .collect();
    let dataset = Dataset {
        nodes,
        zones,
        lines,
        plants,
        ntcs: parse_table::<NtcRow>("ntc.csv", &tables["ntc.csv"])?
            .into_iter()
            .map(|r| Ntc {
                from_zone: r.zone_from,
                to_zone: r.zone_to,
                capacity: r.capacity,
            })
            .collect(),
        demand: series_from_rows(parse_table("demand.csv", &tables["demand.csv"])?),
        heat_demand: series_from_rows(parse_table(
            "heat_demand.csv",
            &tables["heat_demand.csv"],
        )?),
        availability: series_from_rows(parse_table(
            "availability.csv",
            &tables["availability.csv"],
        )?),
    };
    let report = dataset.validate(None);
    Ok((dataset, report))
}

/// Load and validate a dataset from a directory or zip archive.
///
/// Returns the dataset together with its validation report; loading fails
/// if the report contains blocking errors.
pub fn load_dataset(path: &Path) -> Result<(Dataset, ValidationReport), DataError> {
    let (dataset, report) = inspect_dataset(path)?;
    if !report.is_valid() {
        let first = report
            .errors()
            .next()
            .map(|f| format!("{}: {}", f.location, f.message))
            .unwrap_or_default();
        return Err(DataError::Invalid {
            errors: report.errors().count(),
            first,
        });
    }
    Ok((dataset, report))
}

fn fmt_opt(value: &Option<f64>) -> String {
    value.map(|v| format_number(v)).unwrap_or_default()
}

/// Plain decimal formatting that round-trips f64 exactly.
fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Write a dataset as the documented CSV tables into a directory.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let mut out = String::from("id,zone,slack,lat,lon\n");
    for n in &dataset.nodes {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            n.id,
            n.zone,
            n.slack,
            fmt_opt(&n.lat),
            fmt_opt(&n.lon)
        ));
    }
    fs::write(dir.join("nodes.csv"), out)?;

    let mut out = String::from("id\n");
    for z in &dataset.zones {
        out.push_str(&format!("{}\n", z.id));
    }
    fs::write(dir.join("zones.csv"), out)?;

    let mut out = String::from("id,node_from,node_to,reactance,capacity,contingency\n");
    for l in &dataset.lines {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.id,
            l.from,
            l.to,
            format_number(l.reactance),
            format_number(l.capacity),
            l.contingency
        ));
    }
    fs::write(dir.join("lines.csv"), out)?;

    let mut out =
        String::from("id,node,mc_el,g_max,h_max,heat_area,eta,storage_capacity,chp_ratio,availability\n");
    for p in &dataset.plants {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            p.id,
            p.node,
            format_number(p.mc_el),
            format_number(p.g_max),
            format_number(p.h_max),
            p.heat_area.as_deref().unwrap_or(""),
            fmt_opt(&p.eta),
            format_number(p.storage_capacity),
            fmt_opt(&p.chp_ratio),
            p.availability.as_deref().unwrap_or("")
        ));
    }
    fs::write(dir.join("plants.csv"), out)?;

    let write_series = |file: &str, header: &str, data: &BTreeMap<String, flowmark_core::types::Series>| -> Result<(), DataError> {
        let mut out = format!("timestep,{header},value\n");
        for (key, series) in data {
            for (t, v) in series {
                out.push_str(&format!("{t},{key},{}\n", format_number(*v)));
            }
        }
        fs::write(dir.join(file), out)?;
        Ok(())
    };
    write_series("demand.csv", "node", &dataset.demand)?;
    write_series("heat_demand.csv", "heat_area", &dataset.heat_demand)?;
    write_series("availability.csv", "id", &dataset.availability)?;

    let mut out = String::from("zone_from,zone_to,capacity\n");
    for n in &dataset.ntcs {
        out.push_str(&format!(
            "{},{},{}\n",
            n.from_zone,
            n.to_zone,
            format_number(n.capacity)
        ));
    }
    fs::write(dir.join("ntc.csv"), out)?;
    Ok(())
}
