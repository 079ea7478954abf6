//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 data error, 2 solve error, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowmark_cli::dataio::{inspect_dataset, load_dataset, write_dataset};
use flowmark_cli::matpower::import_matpower_case;
use flowmark_cli::optfile::load_options;
use flowmark_cli::pipeline::{
    domain_file_names, reduce_representation, run_pipeline, write_domain_csv, write_domain_svg,
    ErrorKind, PipelineError,
};
use flowmark_core::fbmc::{compute_fb_parameters, project_domain};
use flowmark_core::grid::{
    build_security_constraints, build_topology, compute_ptdf, enumerate_contingencies,
};
use flowmark_core::market::{run_market, Representation};

#[derive(Parser)]
#[command(
    name = "flowmark",
    about = "Electricity market simulation: nodal/zonal clearing, N-1 security, flow-based coupling, redispatch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: load, grid, market, redispatch, reports.
    Run {
        /// Dataset directory or zip archive.
        #[arg(long)]
        data: PathBuf,
        /// Options JSON file.
        #[arg(long)]
        options: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a dataset and print the findings.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Assemble security constraints and reduce them to essential rows.
    Reduce {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        options: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project the flow-based domain onto a zone pair.
    Domain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        options: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Zone pair, e.g. "A,B".
        #[arg(long)]
        zones: String,
        /// Timestep of the projection.
        #[arg(long, default_value_t = 0)]
        t: usize,
    },
    /// Convert a textual power-system case file to the CSV dataset layout.
    Import {
        /// Path to the case file.
        #[arg(long)]
        case: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn data_err(e: impl Into<anyhow::Error>) -> PipelineError {
    PipelineError {
        stage: "load",
        kind: ErrorKind::Data,
        source: e.into(),
    }
}

fn solve_err(stage: &'static str, e: impl Into<anyhow::Error>) -> PipelineError {
    PipelineError {
        stage,
        kind: ErrorKind::Solve,
        source: e.into(),
    }
}

fn internal_err(stage: &'static str, e: impl Into<anyhow::Error>) -> PipelineError {
    PipelineError {
        stage,
        kind: ErrorKind::Internal,
        source: e.into(),
    }
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run { data, options, out } => {
            let manifest = run_pipeline(&data, &options, &out)?;
            println!(
                "run complete: {} stage(s), outputs in {}",
                manifest.stages.len(),
                manifest.out_dir
            );
            Ok(())
        }
        Command::Validate { data } => {
            let (_, report) = inspect_dataset(&data).map_err(data_err)?;
            for finding in &report.findings {
                println!(
                    "{:?}: {}: {}",
                    finding.severity, finding.location, finding.message
                );
            }
            let errors = report.errors().count();
            println!(
                "{} finding(s), {} error(s): dataset is {}",
                report.findings.len(),
                errors,
                if report.is_valid() { "valid" } else { "invalid" }
            );
            if report.is_valid() {
                Ok(())
            } else {
                Err(data_err(anyhow::anyhow!(
                    "dataset failed validation with {errors} error(s)"
                )))
            }
        }
        Command::Reduce { data, options, out } => {
            let (dataset, _) = load_dataset(&data).map_err(data_err)?;
            let options = load_options(&options).map_err(data_err)?.options;
            let topology = build_topology(&dataset).map_err(data_err)?;
            let ptdf = compute_ptdf(&topology).map_err(data_err)?;
            let scenarios = if options.contingency.enabled {
                enumerate_contingencies(&topology, &ptdf, &options)
                    .map_err(data_err)?
                    .usable()
                    .cloned()
                    .collect()
            } else {
                Vec::new()
            };
            let rep = build_security_constraints(&ptdf, &topology, &scenarios, "reduce")
                .map_err(data_err)?;
            std::fs::create_dir_all(&out).map_err(|e| internal_err("reduce", e))?;
            let fingerprint = flowmark_cli::pipeline::sha256_hex(
                format!(
                    "{}|{}",
                    serde_json::to_string(&dataset).unwrap_or_default(),
                    serde_json::to_string(&options.contingency).unwrap_or_default()
                )
                .as_bytes(),
            );
            let mut warnings = Vec::new();
            let reduced = reduce_representation(
                &dataset,
                &topology,
                &rep,
                &out.join("cache"),
                &fingerprint,
                &mut warnings,
            )
            .map_err(|e| solve_err("reduce", e))?;
            let mut csv = String::from("line,scenario,direction,rhs\n");
            for c in &reduced.constraints {
                csv.push_str(&format!(
                    "{},{},{:?},{}\n",
                    c.line, c.scenario, c.direction, c.rhs
                ));
            }
            std::fs::write(out.join("essential_constraints.csv"), csv)
                .map_err(|e| internal_err("reduce", e))?;
            println!(
                "{} of {} constraints essential",
                reduced.constraints.len(),
                rep.constraints.len()
            );
            Ok(())
        }
        Command::Domain {
            data,
            options,
            out,
            zones,
            t,
        } => {
            let (zone_x, zone_y) = zones
                .split_once(',')
                .ok_or_else(|| data_err(anyhow::anyhow!("--zones expects 'A,B'")))?;
            let (dataset, _) = load_dataset(&data).map_err(data_err)?;
            let options = load_options(&options).map_err(data_err)?.options;
            let topology = build_topology(&dataset).map_err(data_err)?;
            let ptdf = compute_ptdf(&topology).map_err(data_err)?;
            let scenarios = if options.contingency.enabled {
                enumerate_contingencies(&topology, &ptdf, &options)
                    .map_err(data_err)?
                    .usable()
                    .cloned()
                    .collect()
            } else {
                Vec::new()
            };
            let rep = build_security_constraints(&ptdf, &topology, &scenarios, "domain")
                .map_err(data_err)?;
            let basecase = run_market(&dataset, &ptdf, &Representation::Nodal(&rep), &options)
                .map_err(|e| solve_err("fbmc", e))?;
            let fb = compute_fb_parameters(&dataset, &rep, &basecase, &options)
                .map_err(|e| solve_err("fbmc", e))?;
            // Non-axis zones sit at their basecase net positions.
            let fixed: std::collections::BTreeMap<String, f64> = fb
                .zones
                .iter()
                .filter(|z| z.as_str() != zone_x && z.as_str() != zone_y)
                .map(|z| {
                    (
                        z.clone(),
                        fb.np_base.get(&(z.clone(), t)).copied().unwrap_or(0.0),
                    )
                })
                .collect();
            let polygon = project_domain(&dataset, &fb, zone_x, zone_y, t, &fixed)
                .map_err(|e| solve_err("fbmc", e))?;
            if let Some(diag) = &polygon.diagnostic {
                eprintln!("[domain] {diag}");
            }
            std::fs::create_dir_all(&out).map_err(|e| internal_err("domain", e))?;
            let (csv_name, svg_name) = domain_file_names(zone_x, zone_y, t);
            write_domain_csv(&polygon, &out.join(&csv_name))
                .map_err(|e| internal_err("domain", e))?;
            write_domain_svg(&polygon, &out.join(&svg_name))
                .map_err(|e| internal_err("domain", e))?;
            println!(
                "domain {zone_x}/{zone_y} at t={t}: {} vertices",
                polygon.vertices.len()
            );
            Ok(())
        }
        Command::Import { case, out } => {
            let import = import_matpower_case(&case).map_err(data_err)?;
            for w in &import.warnings {
                eprintln!("[import] {w}");
            }
            write_dataset(&import.dataset, &out).map_err(|e| internal_err("import", e))?;
            println!(
                "imported {} nodes, {} lines, {} plants into {}",
                import.dataset.nodes.len(),
                import.dataset.lines.len(),
                import.dataset.plants.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(cause) = e.source.chain().nth(1) {
                eprintln!("caused by: {cause}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
