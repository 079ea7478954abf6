//! Flow-based market coupling parametrization: generation shift keys,
//! zonal PTDFs with remaining available margins, and 2D domain projections.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::grid::GridRepresentation;
use crate::market::DispatchResult;
use crate::types::{Dataset, GskStrategy, Options, Timestep};

#[derive(Debug, Error)]
pub enum FbmcError {
    #[error("basecase result has no nodal injections; clear a nodal or feasible zonal basecase first")]
    BasecaseUnavailable,
    #[error("basecase strategy requires a basecase dispatch result")]
    MissingBasecase,
    #[error("zone '{0}' is not part of the dataset")]
    UnknownZone(String),
    #[error("zone '{0}' has no nodes; cannot build a shift key for it")]
    EmptyZone(String),
    #[error("fixed net position missing for zone '{0}'")]
    MissingFixedNp(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Generation shift keys: a nodes-by-zones column-stochastic matrix mapping
/// zonal net-position changes to nodal injection changes.
#[derive(Debug, Clone)]
pub struct Gsk {
    pub zones: Vec<String>,
    /// Column j sums to 1 over the nodes of zone j.
    pub matrix: DMatrix<f64>,
    pub warnings: Vec<String>,
}

/// Compute the GSK for one timestep.
///
/// Strategies weight the nodes of a zone by equal shares (`Flat`), available
/// generation capacity (`Gmax`), or basecase generation (`Basecase`). Zones
/// whose weights sum to zero fall back to flat shares with a warning.
pub fn compute_gsk(
    dataset: &Dataset,
    strategy: GskStrategy,
    basecase: Option<&DispatchResult>,
    t: Timestep,
) -> Result<Gsk, FbmcError> {
    if strategy == GskStrategy::Basecase && basecase.is_none() {
        return Err(FbmcError::MissingBasecase);
    }
    let zones: Vec<String> = dataset.zones.iter().map(|z| z.id.clone()).collect();
    let mut matrix = DMatrix::<f64>::zeros(dataset.nodes.len(), zones.len());
    let mut warnings = Vec::new();

    for (j, zone) in zones.iter().enumerate() {
        let members: Vec<usize> = dataset
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| &n.zone == zone)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(FbmcError::EmptyZone(zone.clone()));
        }
        let mut weights = vec![0.0; members.len()];
        match strategy {
            GskStrategy::Flat => weights.iter_mut().for_each(|w| *w = 1.0),
            GskStrategy::Gmax => {
                for (k, &n) in members.iter().enumerate() {
                    weights[k] = dataset
                        .plants
                        .iter()
                        .filter(|p| p.node == dataset.nodes[n].id && !p.is_storage())
                        .map(|p| dataset.availability_of(p, t) * p.g_max)
                        .sum();
                }
            }
            GskStrategy::Basecase => {
                let base = basecase.expect("checked above");
                for (k, &n) in members.iter().enumerate() {
                    weights[k] = dataset
                        .plants
                        .iter()
                        .filter(|p| p.node == dataset.nodes[n].id)
                        .map(|p| base.generation_of(&p.id, t))
                        .sum();
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            if strategy != GskStrategy::Flat {
                warnings.push(format!(
                    "zone '{zone}' has zero {strategy:?} weight at t={t}; falling back to flat shares"
                ));
            }
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let total: f64 = weights.iter().sum();
        for (k, &n) in members.iter().enumerate() {
            matrix[(n, j)] = weights[k] / total;
        }
    }

    Ok(Gsk {
        zones,
        matrix,
        warnings,
    })
}

/// A flow-based constraint over zonal net positions:
/// `zonal_row . NP <= ram`.
#[derive(Debug, Clone)]
pub struct FbConstraint {
    pub line: String,
    pub scenario: String,
    pub zonal_row: Vec<f64>,
    /// Remaining available margin, MW.
    pub ram: f64,
    /// Basecase reference flow of the underlying nodal row, MW.
    pub f_ref: f64,
}

/// Flow-based parameters per timestep.
#[derive(Debug, Clone)]
pub struct FbParameters {
    pub zones: Vec<String>,
    pub per_timestep: BTreeMap<Timestep, Vec<FbConstraint>>,
    /// Basecase net positions the RAMs were anchored to.
    pub np_base: BTreeMap<(String, Timestep), f64>,
    /// Number of rows whose RAM was lifted to the minimum-RAM floor.
    pub floored_rows: usize,
    pub warnings: Vec<String>,
}

impl FbParameters {
    pub fn constraints_at(&self, t: Timestep) -> &[FbConstraint] {
        self.per_timestep.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parametrize the flow-based domain from a nodal constraint set and a
/// basecase dispatch.
///
/// For each nodal row `a . inj <= cap` the zonal row is `a^T GSK` and the
/// RAM is `cap - f_ref + zonal_row . NP_base`, floored at `min_ram * cap`.
pub fn compute_fb_parameters(
    dataset: &Dataset,
    grid_rep: &GridRepresentation,
    basecase: &DispatchResult,
    options: &Options,
) -> Result<FbParameters, FbmcError> {
    let injections = basecase
        .injections
        .as_ref()
        .ok_or(FbmcError::BasecaseUnavailable)?;
    let mut per_timestep = BTreeMap::new();
    let mut np_base = BTreeMap::new();
    let mut floored_rows = 0;
    let mut warnings = Vec::new();

    for t in options.horizon() {
        let gsk = compute_gsk(dataset, options.gsk_strategy, Some(basecase), t)?;
        warnings.extend(gsk.warnings.iter().cloned());
        let inj = injections
            .get(&t)
            .ok_or(FbmcError::BasecaseUnavailable)?;
        let np_t: Vec<f64> = gsk
            .zones
            .iter()
            .map(|z| {
                basecase
                    .net_positions
                    .get(&(z.clone(), t))
                    .copied()
                    .unwrap_or(0.0)
            })
            .collect();
        for (z, zone) in gsk.zones.iter().enumerate() {
            np_base.insert((zone.clone(), t), np_t[z]);
        }

        let mut rows = Vec::with_capacity(grid_rep.constraints.len());
        for cbco in &grid_rep.constraints {
            let f_ref: f64 = cbco.row.iter().zip(inj).map(|(a, x)| a * x).sum();
            let zonal_row: Vec<f64> = (0..gsk.zones.len())
                .map(|z| {
                    cbco.row
                        .iter()
                        .enumerate()
                        .map(|(n, a)| a * gsk.matrix[(n, z)])
                        .sum()
                })
                .collect();
            let anchored: f64 = zonal_row.iter().zip(&np_t).map(|(a, x)| a * x).sum();
            let mut ram = cbco.rhs - f_ref + anchored;
            let floor = options.min_ram * cbco.rhs;
            if ram < floor {
                ram = floor;
                floored_rows += 1;
            }
            rows.push(FbConstraint {
                line: cbco.line.clone(),
                scenario: cbco.scenario.clone(),
                zonal_row,
                ram,
                f_ref,
            });
        }
        per_timestep.insert(t, rows);
    }

    Ok(FbParameters {
        zones: dataset.zones.iter().map(|z| z.id.clone()).collect(),
        per_timestep,
        np_base,
        floored_rows,
        warnings,
    })
}

/// A 2D projection of the flow-based domain onto two zones' net positions.
#[derive(Debug, Clone)]
pub struct DomainPolygon {
    pub zone_x: String,
    pub zone_y: String,
    pub timestep: Timestep,
    /// Vertices in counter-clockwise order; empty for an empty domain.
    pub vertices: Vec<(f64, f64)>,
    /// The half-planes `(a, b, c)` meaning `a x + b y <= c` that were
    /// intersected, including the clip box.
    pub halfplanes: Vec<(f64, f64, f64)>,
    /// Set when the domain is empty, naming the contradiction.
    pub diagnostic: Option<String>,
}

const GEOM_TOL: f64 = 1e-7;

/// Vertices of the polygon `{(x, y): a x + b y <= c for all rows}`, in
/// counter-clockwise order. Returns an empty vector when the intersection
/// is empty or lower-dimensional.
pub fn polygon_from_halfplanes(halfplanes: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    let scale = halfplanes
        .iter()
        .map(|&(_, _, c)| c.abs())
        .fold(1.0_f64, f64::max);
    let tol = GEOM_TOL * scale;
    let mut vertices: Vec<(f64, f64)> = Vec::new();
    for (i, &(a1, b1, c1)) in halfplanes.iter().enumerate() {
        for &(a2, b2, c2) in &halfplanes[i + 1..] {
            let det = a1 * b2 - a2 * b1;
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (c1 * b2 - c2 * b1) / det;
            let y = (a1 * c2 - a2 * c1) / det;
            if halfplanes
                .iter()
                .all(|&(a, b, c)| a * x + b * y <= c + tol)
                && !vertices
                    .iter()
                    .any(|&(vx, vy)| (vx - x).abs() <= tol && (vy - y).abs() <= tol)
            {
                vertices.push((x, y));
            }
        }
    }
    if vertices.len() < 3 {
        return Vec::new();
    }
    let cx = vertices.iter().map(|v| v.0).sum::<f64>() / vertices.len() as f64;
    let cy = vertices.iter().map(|v| v.1).sum::<f64>() / vertices.len() as f64;
    vertices.sort_by(|p, q| {
        let ap = (p.1 - cy).atan2(p.0 - cx);
        let aq = (q.1 - cy).atan2(q.0 - cx);
        ap.partial_cmp(&aq).expect("finite angles")
    });
    vertices
}

/// Project the flow-based domain onto the net positions of two zones.
///
/// Other zones' net positions are substituted from `fixed_np` (typically
/// the basecase values, or zero). Redundant half-planes are dropped through
/// the row-reduction machinery before intersection, and the polygon is
/// clipped to a box of +-(total peak demand).
pub fn project_domain(
    dataset: &Dataset,
    fb: &FbParameters,
    zone_x: &str,
    zone_y: &str,
    t: Timestep,
    fixed_np: &BTreeMap<String, f64>,
) -> Result<DomainPolygon, FbmcError> {
    let ix = fb
        .zones
        .iter()
        .position(|z| z == zone_x)
        .ok_or_else(|| FbmcError::UnknownZone(zone_x.to_string()))?;
    let iy = fb
        .zones
        .iter()
        .position(|z| z == zone_y)
        .ok_or_else(|| FbmcError::UnknownZone(zone_y.to_string()))?;
    if ix == iy {
        return Err(FbmcError::UnknownZone(format!("{zone_x} used for both axes")));
    }
    for (j, zone) in fb.zones.iter().enumerate() {
        if j != ix && j != iy && !fixed_np.contains_key(zone) {
            return Err(FbmcError::MissingFixedNp(zone.clone()));
        }
    }

    // Clip box: the total peak demand bounds any plausible net position.
    let clip: f64 = dataset
        .nodes
        .iter()
        .map(|n| dataset.peak_demand_at(&n.id))
        .sum::<f64>()
        .max(1.0);

    // Substitute the fixed zones into each FB row.
    let mut halfplanes: Vec<(f64, f64, f64)> = Vec::new();
    for fbc in fb.constraints_at(t) {
        let a = fbc.zonal_row[ix];
        let b = fbc.zonal_row[iy];
        let fixed: f64 = fb
            .zones
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != ix && j != iy)
            .map(|(j, z)| fbc.zonal_row[j] * fixed_np[z])
            .sum();
        let c = fbc.ram - fixed;
        if a.abs() < 1e-12 && b.abs() < 1e-12 {
            if c < -GEOM_TOL {
                return Ok(DomainPolygon {
                    zone_x: zone_x.to_string(),
                    zone_y: zone_y.to_string(),
                    timestep: t,
                    vertices: Vec::new(),
                    halfplanes: vec![(a, b, c)],
                    diagnostic: Some(format!(
                        "constraint {}/{} is violated by the fixed net positions alone",
                        fbc.line, fbc.scenario
                    )),
                });
            }
            continue;
        }
        halfplanes.push((a, b, c));
    }

    // Drop redundant half-planes before intersecting; the clip box enters
    // as variable bounds.
    let poly = crate::redundancy::Polytope {
        rows: halfplanes.iter().map(|&(a, b, _)| vec![a, b]).collect(),
        rhs: halfplanes.iter().map(|&(_, _, c)| c).collect(),
        lower: vec![-clip, -clip],
        upper: vec![clip, clip],
        balance: false,
    };
    let kept: Vec<(f64, f64, f64)> = match crate::redundancy::reduce(&poly) {
        Ok(essential) => essential.indices.iter().map(|&i| halfplanes[i]).collect(),
        Err(crate::redundancy::ReduceError::Infeasible) => {
            return Ok(DomainPolygon {
                zone_x: zone_x.to_string(),
                zone_y: zone_y.to_string(),
                timestep: t,
                vertices: Vec::new(),
                halfplanes,
                diagnostic: Some(
                    "flow-based half-planes contradict each other inside the clip box"
                        .to_string(),
                ),
            });
        }
        // Fall back to the full set on numerical trouble; intersection
        // filtering still yields the correct polygon.
        Err(_) => halfplanes.clone(),
    };

    let mut planes = vec![
        (1.0, 0.0, clip),
        (-1.0, 0.0, clip),
        (0.0, 1.0, clip),
        (0.0, -1.0, clip),
    ];
    planes.extend(kept);
    let vertices = polygon_from_halfplanes(&planes);
    let diagnostic = vertices
        .is_empty()
        .then(|| "domain is empty or lower-dimensional inside the clip box".to_string());

    Ok(DomainPolygon {
        zone_x: zone_x.to_string(),
        zone_y: zone_y.to_string(),
        timestep: t,
        vertices,
        halfplanes: planes,
        diagnostic,
    })
}
