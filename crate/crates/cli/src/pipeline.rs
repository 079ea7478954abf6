//! Multi-stage run orchestration: load, grid representation, optional
//! redundancy reduction (cached), optional FBMC parametrization, market
//! clearing, redispatch, analytics, and file exports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use flowmark_core::fbmc::{compute_fb_parameters, FbParameters};
use flowmark_core::grid::{
    build_security_constraints, build_topology, compute_ptdf, enumerate_contingencies,
    ContingencyScenario, GridRepresentation, PtdfMatrix, Topology,
};
use flowmark_core::market::{
    overloaded_lines_n0, overloaded_lines_n1, redispatch_quantity, run_market, run_redispatch,
    DispatchResult, Representation, Stage,
};
use flowmark_core::redundancy::{reduce, Polytope};
use flowmark_core::types::{Dataset, MarketType, Options};

use crate::dataio::load_dataset;
use crate::optfile::load_options;

/// Failure classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad inputs: dataset, options, or references. Exit code 1.
    Data,
    /// Optimization failures. Exit code 2.
    Solve,
    /// Everything else. Exit code 3.
    Internal,
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub kind: ErrorKind,
    #[source]
    pub source: anyhow::Error,
}

impl PipelineError {
    fn new(stage: &'static str, kind: ErrorKind, source: impl Into<anyhow::Error>) -> Self {
        PipelineError {
            stage,
            kind,
            source: source.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Data => 1,
            ErrorKind::Solve => 2,
            ErrorKind::Internal => 3,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u128,
}

/// Record of one pipeline run; written to `manifest.json` in the output
/// directory exactly once per run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub dataset_path: String,
    pub options_hash: String,
    pub stages: Vec<StageTiming>,
    pub out_dir: String,
    /// Relative paths of every file under the output directory.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub success: bool,
    pub error: Option<String>,
}

/// The four headline quantities of a run report.
#[derive(Debug, Serialize)]
pub struct Report {
    pub n0_overloads_market: Option<usize>,
    pub n0_overloads_redispatch: Option<usize>,
    pub n1_overloads_redispatch: Option<usize>,
    pub total_redispatch_mwh: Option<f64>,
}

fn log(stage: &str, message: &str) {
    eprintln!("[{stage}] {message}");
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Injection bounds that any feasible dispatch respects: at most the local
/// plant capacity upward, at most local peak demand plus storage charging
/// downward.
pub fn injection_bounds(dataset: &Dataset, topology: &Topology) -> (Vec<f64>, Vec<f64>) {
    let mut lower = vec![0.0; topology.node_ids.len()];
    let mut upper = vec![0.0; topology.node_ids.len()];
    for (n, id) in topology.node_ids.iter().enumerate() {
        lower[n] = -dataset.peak_demand_at(id);
        for plant in dataset.plants.iter().filter(|p| &p.node == id) {
            upper[n] += plant.g_max;
            if plant.is_storage() {
                lower[n] -= plant.g_max;
            }
        }
        // Curtailment and infeasibility slacks can push an injection to
        // zero even on pure-load nodes.
        upper[n] = upper[n].max(0.0);
        lower[n] = lower[n].min(0.0);
    }
    (lower, upper)
}

/// Reduce a grid representation to its essential rows, reusing a cached
/// result when the dataset/options fingerprint matches.
pub fn reduce_representation(
    dataset: &Dataset,
    topology: &Topology,
    rep: &GridRepresentation,
    cache_dir: &Path,
    fingerprint: &str,
    warnings: &mut Vec<String>,
) -> Result<GridRepresentation, flowmark_core::redundancy::ReduceError> {
    let cache_file = cache_dir.join(format!("reduction-{fingerprint}.json"));
    if let Ok(raw) = fs::read_to_string(&cache_file) {
        if let Ok(indices) = serde_json::from_str::<Vec<usize>>(&raw) {
            if indices.iter().all(|&i| i < rep.constraints.len()) {
                log("reduce", &format!("reusing cached reduction ({} rows)", indices.len()));
                return Ok(rep.keep_rows(&indices));
            }
            warnings.push("reduction cache entry is stale; recomputing".to_string());
        }
    }
    let (lower, upper) = injection_bounds(dataset, topology);
    let poly = Polytope {
        rows: rep.constraints.iter().map(|c| c.row.clone()).collect(),
        rhs: rep.constraints.iter().map(|c| c.rhs).collect(),
        lower,
        upper,
        balance: true,
    };
    let essential = reduce(&poly)?;
    log(
        "reduce",
        &format!(
            "{} of {} rows essential ({:.1}% removed)",
            essential.indices.len(),
            rep.constraints.len(),
            100.0 * essential.stats.removal_fraction
        ),
    );
    let _ = fs::create_dir_all(cache_dir);
    if let Ok(raw) = serde_json::to_string(&essential.indices) {
        let _ = fs::write(&cache_file, raw);
    }
    Ok(rep.keep_rows(&essential.indices))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Write the per-stage result tables.
pub fn write_result_csvs(
    result: &DispatchResult,
    topology: &Topology,
    dir: &Path,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let series = |data: &BTreeMap<(String, usize), f64>, header: &str| {
        let mut out = format!("{header}\n");
        for ((key, t), v) in data {
            out.push_str(&format!("{key},{t},{}\n", fmt(*v)));
        }
        out
    };
    fs::write(dir.join("G.csv"), series(&result.generation, "plant,timestep,value"))?;
    fs::write(dir.join("H.csv"), series(&result.heat, "plant,timestep,value"))?;
    fs::write(
        dir.join("curtailment.csv"),
        series(&result.curtailment, "scope,timestep,value"),
    )?;
    fs::write(
        dir.join("net_positions.csv"),
        series(&result.net_positions, "zone,timestep,value"),
    )?;
    fs::write(
        dir.join("prices.csv"),
        series(&result.prices, "scope,timestep,price"),
    )?;

    let mut out = String::from("plant,timestep,charge,discharge,level\n");
    for ((plant, t), level) in &result.level {
        let ch = result.charge.get(&(plant.clone(), *t)).copied().unwrap_or(0.0);
        let dis = result
            .discharge
            .get(&(plant.clone(), *t))
            .copied()
            .unwrap_or(0.0);
        out.push_str(&format!("{plant},{t},{},{},{}\n", fmt(ch), fmt(dis), fmt(*level)));
    }
    fs::write(dir.join("storage.csv"), out)?;

    let mut out = String::from("line,timestep,flow,capacity\n");
    for (t, flows) in &result.flows_n0 {
        for (l, flow) in flows.iter().enumerate() {
            out.push_str(&format!(
                "{},{t},{},{}\n",
                topology.line_ids[l],
                fmt(*flow),
                fmt(topology.capacity[l])
            ));
        }
    }
    fs::write(dir.join("flows_n0.csv"), out)?;

    if let Some(delta) = &result.redispatch_delta {
        fs::write(
            dir.join("redispatch.csv"),
            series(delta, "plant,timestep,delta"),
        )?;
    }

    #[derive(Serialize)]
    struct Objective<'a> {
        objective: f64,
        costs: &'a flowmark_core::market::CostBreakdown,
        stage: Stage,
    }
    fs::write(
        dir.join("objective.json"),
        serde_json::to_string_pretty(&Objective {
            objective: result.objective,
            costs: &result.costs,
            stage: result.stage,
        })?,
    )?;
    Ok(())
}

/// Write the FB parameter table: one row per timestep and constraint.
pub fn write_fb_parameters(fb: &FbParameters, path: &Path) -> std::io::Result<()> {
    let mut out = String::from("timestep,cbco_id");
    for zone in &fb.zones {
        out.push_str(&format!(",{zone}"));
    }
    out.push_str(",ram\n");
    for (t, rows) in &fb.per_timestep {
        for (i, row) in rows.iter().enumerate() {
            out.push_str(&format!("{t},{}_{}_{i}", row.line, row.scenario));
            for z in &row.zonal_row {
                out.push_str(&format!(",{}", fmt(*z)));
            }
            out.push_str(&format!(",{}\n", fmt(row.ram)));
        }
    }
    fs::write(path, out)
}

/// Write the plain-text and JSON run report with the headline quantities.
pub fn write_report(report: &Report, out_dir: &Path) -> std::io::Result<()> {
    let mut text = String::new();
    let line = |label: &str, value: &Option<usize>| match value {
        Some(v) => format!("{label}: {v}\n"),
        None => format!("{label}: n/a\n"),
    };
    text.push_str(&line(
        "Number of N-0 Overloads (market)",
        &report.n0_overloads_market,
    ));
    text.push_str(&line(
        "Number of N-0 Overloads (redispatch)",
        &report.n0_overloads_redispatch,
    ));
    text.push_str(&line(
        "Number of N-1 Overloads (redispatch)",
        &report.n1_overloads_redispatch,
    ));
    match report.total_redispatch_mwh {
        Some(v) => text.push_str(&format!("Total Redispatch in MWh: {}\n", fmt(v))),
        None => text.push_str("Total Redispatch in MWh: n/a\n"),
    }
    fs::write(out_dir.join("report.txt"), text)?;
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

/// Write node/line geography tables and a GeoJSON feature file.
///
/// Prices come from the market stage, redispatch deltas and line loadings
/// from the final stage. Skipped with a warning when coordinates are
/// missing.
pub fn emit_geo_data(
    dataset: &Dataset,
    topology: &Topology,
    market: &DispatchResult,
    fin: &DispatchResult,
    out_dir: &Path,
    warnings: &mut Vec<String>,
) -> std::io::Result<()> {
    if dataset
        .nodes
        .iter()
        .any(|n| n.lat.is_none() || n.lon.is_none())
    {
        warnings.push("geo export skipped: some nodes have no coordinates".to_string());
        return Ok(());
    }

    let price_of = |node: &flowmark_core::types::Node| -> f64 {
        let t0 = market.horizon.0;
        let keys = [node.id.clone(), node.zone.clone(), "system".to_string()];
        keys.iter()
            .find_map(|k| market.prices.get(&(k.clone(), t0)))
            .copied()
            .unwrap_or(0.0)
    };
    let mut geo_nodes = String::from("node,lat,lon,price,net_redispatch\n");
    let mut features = Vec::new();
    for node in &dataset.nodes {
        let net_rd: f64 = fin
            .redispatch_delta
            .as_ref()
            .map(|deltas| {
                dataset
                    .plants
                    .iter()
                    .filter(|p| p.node == node.id)
                    .flat_map(|p| {
                        deltas
                            .iter()
                            .filter(move |((pid, _), _)| pid == &p.id)
                            .map(|(_, &d)| d)
                    })
                    .sum()
            })
            .unwrap_or(0.0);
        let (lat, lon) = (node.lat.unwrap(), node.lon.unwrap());
        let price = price_of(node);
        geo_nodes.push_str(&format!(
            "{},{},{},{},{}\n",
            node.id,
            fmt(lat),
            fmt(lon),
            fmt(price),
            fmt(net_rd)
        ));
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lon, lat]},
            "properties": {"node": node.id, "price": price, "net_redispatch": net_rd},
        }));
    }

    let mut geo_lines = String::from("line,from,to,avg_loading_fraction\n");
    for (l, id) in topology.line_ids.iter().enumerate() {
        let cap = topology.capacity[l];
        if cap <= 0.0 {
            warnings.push(format!("line {id} has no capacity; excluded from loading"));
            continue;
        }
        let loadings: Vec<f64> = fin
            .flows_n0
            .values()
            .map(|flows| flows[l].abs() / cap)
            .collect();
        let avg = if loadings.is_empty() {
            0.0
        } else {
            loadings.iter().sum::<f64>() / loadings.len() as f64
        };
        let from = &dataset.nodes[topology.from[l]];
        let to = &dataset.nodes[topology.to[l]];
        geo_lines.push_str(&format!("{id},{},{},{}\n", from.id, to.id, fmt(avg)));
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [
                [from.lon.unwrap(), from.lat.unwrap()],
                [to.lon.unwrap(), to.lat.unwrap()]
            ]},
            "properties": {"line": id, "avg_loading_fraction": avg},
        }));
    }

    fs::write(out_dir.join("geo_nodes.csv"), geo_nodes)?;
    fs::write(out_dir.join("geo_lines.csv"), geo_lines)?;
    let collection = serde_json::json!({"type": "FeatureCollection", "features": features});
    fs::write(
        out_dir.join("geo.json"),
        serde_json::to_string_pretty(&collection)?,
    )?;
    Ok(())
}

fn list_outputs(out_dir: &Path) -> Vec<String> {
    fn walk(dir: &Path, root: &Path, acc: &mut Vec<String>) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                walk(&path, root, acc);
            } else if let Ok(rel) = path.strip_prefix(root) {
                acc.push(rel.display().to_string());
            }
        }
    }
    let mut acc = Vec::new();
    walk(out_dir, out_dir, &mut acc);
    acc.sort();
    acc
}

/// Collects per-stage wall-clock timings for the manifest.
pub struct StageClock {
    stages: Vec<StageTiming>,
}

impl Default for StageClock {
    fn default() -> Self {
        StageClock { stages: Vec::new() }
    }
}

impl StageClock {
    fn run<T>(
        &mut self,
        stage: &'static str,
        f: impl FnOnce() -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        let start = Instant::now();
        log(stage, "starting");
        let result = f();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_millis(),
        });
        result
    }
}

/// Execute the full pipeline and write all outputs under `out_dir`.
///
/// The manifest is written even when a stage fails, marking the failure;
/// partial outputs are retained.
pub fn run_pipeline(
    dataset_path: &Path,
    options_path: &Path,
    out_dir: &Path,
) -> Result<RunManifest, PipelineError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::new("setup", ErrorKind::Internal, e))?;
    let mut clock = StageClock::default();
    let mut warnings: Vec<String> = Vec::new();

    let outcome = run_stages(dataset_path, options_path, out_dir, &mut clock, &mut warnings);

    let options_hash = fs::read(options_path)
        .map(|raw| sha256_hex(&raw))
        .unwrap_or_default();
    let manifest = RunManifest {
        dataset_path: dataset_path.display().to_string(),
        options_hash,
        stages: clock.stages,
        out_dir: out_dir.display().to_string(),
        outputs: Vec::new(),
        warnings,
        success: outcome.is_ok(),
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    let mut manifest = manifest;
    // The manifest must list every file, including itself: write a
    // placeholder first so the listing sees it, then the real content.
    let manifest_path = out_dir.join("manifest.json");
    let _ = fs::write(&manifest_path, "{}");
    manifest.outputs = list_outputs(out_dir);
    let _ = fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap_or_default(),
    );

    outcome.map(|()| manifest)
}

/// Everything a run computes, for tests and the report stage.
pub struct RunArtifacts {
    pub dataset: Dataset,
    pub options: Options,
    pub topology: Topology,
    pub ptdf: PtdfMatrix,
    pub scenarios: Vec<ContingencyScenario>,
    pub nodal_rep: Option<GridRepresentation>,
    pub fb: Option<FbParameters>,
    pub market: DispatchResult,
    pub redispatch: Option<DispatchResult>,
    pub report: Report,
}

fn run_stages(
    dataset_path: &Path,
    options_path: &Path,
    out_dir: &Path,
    clock: &mut StageClock,
    warnings: &mut Vec<String>,
) -> Result<(), PipelineError> {
    let artifacts = compute_run(dataset_path, options_path, out_dir, clock, warnings)?;

    clock.run("report", || {
        let int = |e: std::io::Error| PipelineError::new("report", ErrorKind::Internal, e);
        write_result_csvs(&artifacts.market, &artifacts.topology, &out_dir.join("market"))
            .map_err(int)?;
        if let Some(rd) = &artifacts.redispatch {
            write_result_csvs(rd, &artifacts.topology, &out_dir.join("redispatch")).map_err(int)?;
        }
        if let Some(fb) = &artifacts.fb {
            write_fb_parameters(fb, &out_dir.join("fb_parameters.csv")).map_err(int)?;
        }
        write_report(&artifacts.report, out_dir).map_err(int)?;
        let fin = artifacts.redispatch.as_ref().unwrap_or(&artifacts.market);
        emit_geo_data(
            &artifacts.dataset,
            &artifacts.topology,
            &artifacts.market,
            fin,
            out_dir,
            warnings,
        )
        .map_err(int)?;
        Ok(())
    })
}

/// The computational part of the pipeline, separated from file exports so
/// integration tests can inspect every intermediate product.
pub fn compute_run(
    dataset_path: &Path,
    options_path: &Path,
    out_dir: &Path,
    clock: &mut StageClock,
    warnings: &mut Vec<String>,
) -> Result<RunArtifacts, PipelineError> {
    let (dataset, options) = clock.run("load", || {
        let (dataset, report) = load_dataset(dataset_path)
            .map_err(|e| PipelineError::new("load", ErrorKind::Data, e))?;
        for w in report.warnings() {
            warnings.push(format!("{}: {}", w.location, w.message));
        }
        let loaded = load_options(options_path)
            .map_err(|e| PipelineError::new("load", ErrorKind::Data, e))?;
        warnings.extend(loaded.warnings);
        let horizon = loaded.options.horizon();
        let report = dataset.validate(Some(horizon));
        if !report.is_valid() {
            let first = report.errors().next().unwrap();
            return Err(PipelineError::new(
                "load",
                ErrorKind::Data,
                anyhow::anyhow!("{}: {}", first.location, first.message),
            ));
        }
        log(
            "load",
            &format!(
                "{} nodes, {} lines, {} plants, horizon [{}, {})",
                dataset.nodes.len(),
                dataset.lines.len(),
                dataset.plants.len(),
                loaded.options.model_horizon.0,
                loaded.options.model_horizon.1
            ),
        );
        Ok((dataset, loaded.options))
    })?;

    let data_err = |e: flowmark_core::grid::GridError| {
        PipelineError::new("grid", ErrorKind::Data, e)
    };
    let (topology, ptdf, scenarios) = clock.run("grid", || {
        let topology = build_topology(&dataset).map_err(data_err)?;
        let ptdf = compute_ptdf(&topology).map_err(data_err)?;
        let scenarios = if options.contingency.enabled {
            let enumeration = enumerate_contingencies(&topology, &ptdf, &options)
                .map_err(data_err)?;
            warnings.extend(enumeration.warnings.clone());
            enumeration.scenarios
        } else {
            Vec::new()
        };
        log(
            "grid",
            &format!(
                "PTDF {}x{}, {} contingency scenario(s)",
                topology.line_ids.len(),
                topology.node_ids.len(),
                scenarios.len()
            ),
        );
        Ok((topology, ptdf, scenarios))
    })?;

    // A nodal representation is needed for nodal clearing, for redispatch,
    // and as the substrate of FBMC parameters.
    let needs_nodal = options.market_type == MarketType::Nodal
        || options.market_type == MarketType::ZonalFbmc
        || options.redispatch.include;
    let nodal_rep = if needs_nodal {
        Some(clock.run("reduce", || {
            let usable: Vec<ContingencyScenario> = scenarios
                .iter()
                .filter(|s| !s.islanding)
                .cloned()
                .collect();
            let rep = build_security_constraints(
                &ptdf,
                &topology,
                &usable,
                &format!("contingency={}", options.contingency.enabled),
            )
            .map_err(|e| PipelineError::new("reduce", ErrorKind::Data, e))?;
            let fingerprint = sha256_hex(
                format!(
                    "{}|{}",
                    serde_json::to_string(&dataset).unwrap_or_default(),
                    serde_json::to_string(&options.contingency).unwrap_or_default()
                )
                .as_bytes(),
            );
            reduce_representation(
                &dataset,
                &topology,
                &rep,
                &out_dir.join("cache"),
                &fingerprint,
                warnings,
            )
            .map_err(|e| PipelineError::new("reduce", ErrorKind::Solve, e))
        })?)
    } else {
        None
    };

    // FBMC needs a nodal basecase to anchor RAMs.
    let fb = if options.market_type == MarketType::ZonalFbmc {
        Some(clock.run("fbmc", || {
            let rep = nodal_rep.as_ref().expect("built above for zonal_fbmc");
            let basecase = run_market(&dataset, &ptdf, &Representation::Nodal(rep), &options)
                .map_err(|e| PipelineError::new("fbmc", ErrorKind::Solve, e))?;
            let fb = compute_fb_parameters(&dataset, rep, &basecase, &options)
                .map_err(|e| PipelineError::new("fbmc", ErrorKind::Solve, e))?;
            warnings.extend(fb.warnings.clone());
            log(
                "fbmc",
                &format!(
                    "{} FB constraints per timestep, {} RAM(s) floored",
                    fb.constraints_at(options.model_horizon.0).len(),
                    fb.floored_rows
                ),
            );
            Ok(fb)
        })?)
    } else {
        None
    };

    let market = clock.run("market", || {
        let representation = match options.market_type {
            MarketType::CopperPlate => Representation::CopperPlate,
            MarketType::Nodal => {
                Representation::Nodal(nodal_rep.as_ref().expect("built above"))
            }
            MarketType::ZonalNtc => Representation::ZonalNtc,
            MarketType::ZonalFbmc => {
                Representation::ZonalFbmc(fb.as_ref().expect("built above"))
            }
        };
        let result = run_market(&dataset, &ptdf, &representation, &options)
            .map_err(|e| PipelineError::new("market", ErrorKind::Solve, e))?;
        warnings.extend(result.warnings.clone());
        log("market", &format!("objective {:.3}", result.objective));
        Ok(result)
    })?;

    let redispatch = if options.redispatch.include {
        Some(clock.run("redispatch", || {
            let rep = nodal_rep.as_ref().expect("built above for redispatch");
            let result = run_redispatch(&dataset, &ptdf, rep, &market, &options)
                .map_err(|e| PipelineError::new("redispatch", ErrorKind::Solve, e))?;
            warnings.extend(result.warnings.clone());
            log("redispatch", &format!("objective {:.3}", result.objective));
            Ok(result)
        })?)
    } else {
        None
    };

    let count_n0 = |r: &DispatchResult| overloaded_lines_n0(r, &topology).map(|v| v.len()).ok();
    let n0_market = count_n0(&market);
    let n0_rd = redispatch.as_ref().and_then(count_n0);
    let n1_rd = redispatch.as_ref().and_then(|r| {
        overloaded_lines_n1(r, &topology, &ptdf, &scenarios)
            .map(|v| v.len())
            .ok()
    });
    let total = redispatch
        .as_ref()
        .and_then(|r| redispatch_quantity(&market, r).ok());
    let report = Report {
        n0_overloads_market: n0_market,
        n0_overloads_redispatch: n0_rd,
        n1_overloads_redispatch: n1_rd,
        total_redispatch_mwh: total,
    };

    Ok(RunArtifacts {
        dataset,
        options,
        topology,
        ptdf,
        scenarios,
        nodal_rep,
        fb,
        market,
        redispatch,
        report,
    })
}

/// Convenience wrapper for tests: run and return the artifacts.
pub fn run_for_artifacts(
    dataset_path: &Path,
    options_path: &Path,
    out_dir: &Path,
) -> Result<RunArtifacts, PipelineError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::new("setup", ErrorKind::Internal, e))?;
    let mut clock = StageClock::default();
    let mut warnings = Vec::new();
    compute_run(dataset_path, options_path, out_dir, &mut clock, &mut warnings)
}

/// Render a domain polygon as a small standalone vector graphic.
pub fn write_domain_svg(
    polygon: &flowmark_core::fbmc::DomainPolygon,
    path: &Path,
) -> std::io::Result<()> {
    let size = 400.0;
    let margin = 40.0;
    let extent = polygon
        .vertices
        .iter()
        .flat_map(|&(x, y)| [x.abs(), y.abs()])
        .fold(1.0_f64, f64::max);
    let scale = (size / 2.0 - margin) / extent;
    let to_px = |x: f64, y: f64| (size / 2.0 + x * scale, size / 2.0 - y * scale);

    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    // Axes through the origin.
    svg.push_str(&format!(
        r##"<line x1="0" y1="{m}" x2="{size}" y2="{m}" stroke="#ccc"/><line x1="{m}" y1="0" x2="{m}" y2="{size}" stroke="#ccc"/>"##,
        m = size / 2.0,
    ));
    if !polygon.vertices.is_empty() {
        let points: Vec<String> = polygon
            .vertices
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        svg.push_str(&format!(
            r##"<polygon points="{}" fill="#7fb3d5" fill-opacity="0.5" stroke="#2e86c1"/>"##,
            points.join(" ")
        ));
    }
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" font-size="12">{} vs {} (t={})</text>"#,
        margin,
        margin / 2.0,
        polygon.zone_x,
        polygon.zone_y,
        polygon.timestep
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}

/// Write ordered domain vertices as CSV.
pub fn write_domain_csv(
    polygon: &flowmark_core::fbmc::DomainPolygon,
    path: &Path,
) -> std::io::Result<()> {
    let mut out = format!("np_{},np_{}\n", polygon.zone_x, polygon.zone_y);
    for &(x, y) in &polygon.vertices {
        out.push_str(&format!("{},{}\n", fmt(x), fmt(y)));
    }
    fs::write(path, out)
}

/// Output file names for a domain projection.
pub fn domain_file_names(zone_x: &str, zone_y: &str, t: usize) -> (PathBuf, PathBuf) {
    (
        PathBuf::from(format!("domain_{zone_x}_{zone_y}_{t}.csv")),
        PathBuf::from(format!("domain_{zone_x}_{zone_y}_{t}.svg")),
    )
}
