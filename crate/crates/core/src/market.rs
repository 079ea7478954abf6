//! Dispatch LP construction and solving: market clearing under a configured
//! grid representation, second-stage redispatch, and overload analytics.
//!
//! The LP follows the canonical dispatch structure: generation, heat and
//! storage constraints, energy balances per node / zone / system, and
//! network rows appropriate to the representation. Reported flows are always
//! recomputed from injections through the PTDF matrix, never read off LP
//! variables.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::fbmc::FbParameters;
use crate::grid::{
    post_contingency_flows, ContingencyScenario, GridRepresentation, PtdfMatrix, Topology,
};
use crate::solver::{solve_lp, LinearProgram, LpStatus, Sense, INF};
use crate::types::{Dataset, MarketType, Options, Timestep};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("representation mismatch: config requests {expected:?} but {got} was supplied")]
    RepresentationMismatch { expected: MarketType, got: String },
    #[error("dispatch LP {stage} reported {status:?}; this should not happen with slack variables")]
    SolveFailed { stage: String, status: LpStatus },
    #[error("lp error in stage {stage}: {source}")]
    Lp {
        stage: String,
        source: crate::solver::LpError,
    },
    #[error("nodal injections unavailable (zonal infeasibility slack active); run the redispatch stage for a nodal-feasible schedule")]
    NodalInjectionsUnavailable,
    #[error("results cover different horizons or plant sets")]
    ResultMismatch,
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Which network constraints the dispatch LP carries.
pub enum Representation<'a> {
    CopperPlate,
    /// Nodal injection rows (optionally N-1, optionally reduced).
    Nodal(&'a GridRepresentation),
    /// Commercial exchange variables bounded by NTCs.
    ZonalNtc,
    /// Zonal-PTDF rows with RAMs over net positions.
    ZonalFbmc(&'a FbParameters),
}

impl Representation<'_> {
    fn market_type(&self) -> MarketType {
        match self {
            Representation::CopperPlate => MarketType::CopperPlate,
            Representation::Nodal(_) => MarketType::Nodal,
            Representation::ZonalNtc => MarketType::ZonalNtc,
            Representation::ZonalFbmc(_) => MarketType::ZonalFbmc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Market,
    Redispatch,
}

/// Itemized objective of the dispatch LP.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct CostBreakdown {
    pub cost_g: f64,
    pub cost_h: f64,
    pub cost_curt: f64,
    /// Out-of-market penalties: redispatch cost plus infeasibility slack.
    pub oom_pen: f64,
}

/// Keyed LP variable and constraint handles for one dispatch problem.
#[derive(Debug, Default)]
pub struct VariableIndex {
    pub g: BTreeMap<(usize, Timestep), usize>,
    pub h: BTreeMap<(usize, Timestep), usize>,
    pub charge: BTreeMap<(usize, Timestep), usize>,
    pub discharge: BTreeMap<(usize, Timestep), usize>,
    pub level: BTreeMap<(usize, Timestep), usize>,
    /// Curtailment per balance scope.
    pub curt: BTreeMap<(String, Timestep), usize>,
    pub infeas_pos: BTreeMap<(String, Timestep), usize>,
    pub infeas_neg: BTreeMap<(String, Timestep), usize>,
    /// Nodal injection variables (nodal and redispatch stages).
    pub inj: BTreeMap<(usize, Timestep), usize>,
    /// Directed commercial exchanges (zonal NTC).
    pub ex: BTreeMap<(String, String, Timestep), usize>,
    /// Zonal net positions (FBMC).
    pub np: BTreeMap<(String, Timestep), usize>,
    pub delta_pos: BTreeMap<(usize, Timestep), usize>,
    pub delta_neg: BTreeMap<(usize, Timestep), usize>,
}

/// The assembled dispatch LP plus the bookkeeping to read it back.
pub struct DispatchProblem {
    pub lp: LinearProgram,
    pub vars: VariableIndex,
    /// Energy-balance row per (scope id, timestep); scope is a node id,
    /// zone id, or "system".
    pub balance_rows: BTreeMap<(String, Timestep), usize>,
    pub network_row_count: usize,
    pub market_type: MarketType,
    pub stage: Stage,
}

/// Balance scopes of a market type: nodes, zones, or the whole system.
fn balance_scopes(dataset: &Dataset, market_type: MarketType) -> Vec<(String, Vec<usize>)> {
    match market_type {
        MarketType::Nodal => dataset
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), vec![i]))
            .collect(),
        MarketType::ZonalNtc | MarketType::ZonalFbmc => dataset
            .zones
            .iter()
            .map(|z| {
                let members = dataset
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.zone == z.id)
                    .map(|(i, _)| i)
                    .collect();
                (z.id.clone(), members)
            })
            .collect(),
        MarketType::CopperPlate => vec![(
            "system".to_string(),
            (0..dataset.nodes.len()).collect(),
        )],
    }
}

/// Build the market-stage dispatch LP.
pub fn build_dispatch(
    dataset: &Dataset,
    representation: &Representation,
    options: &Options,
) -> Result<DispatchProblem, MarketError> {
    let market_type = representation.market_type();
    let horizon: Vec<Timestep> = options.horizon().collect();
    let mut lp = LinearProgram::default();
    let mut vars = VariableIndex::default();

    // Plant variables.
    for (p, plant) in dataset.plants.iter().enumerate() {
        for &t in &horizon {
            let avail = dataset.availability_of(plant, t);
            let g = lp.add_variable(
                format!("G({},{t})", plant.id),
                0.0,
                avail * plant.g_max,
                plant.mc_el,
            );
            vars.g.insert((p, t), g);
            if plant.has_heat() {
                // Heat carries no explicit cost in the dataset schema.
                let h = lp.add_variable(format!("H({},{t})", plant.id), 0.0, plant.h_max, 0.0);
                vars.h.insert((p, t), h);
            }
            if plant.is_storage() {
                let ch = lp.add_variable(format!("CH({},{t})", plant.id), 0.0, plant.g_max, 0.0);
                let dis = lp.add_variable(format!("DIS({},{t})", plant.id), 0.0, plant.g_max, 0.0);
                let l = lp.add_variable(
                    format!("L({},{t})", plant.id),
                    0.0,
                    plant.storage_capacity,
                    0.0,
                );
                vars.charge.insert((p, t), ch);
                vars.discharge.insert((p, t), dis);
                vars.level.insert((p, t), l);
            }
        }
    }

    // CHP coupling and storage dynamics.
    for (p, plant) in dataset.plants.iter().enumerate() {
        if let (Some(ratio), true) = (plant.chp_ratio, plant.has_heat()) {
            for &t in &horizon {
                lp.add_constraint(
                    format!("chp({},{t})", plant.id),
                    vec![(vars.g[&(p, t)], 1.0), (vars.h[&(p, t)], -ratio)],
                    Sense::Eq,
                    0.0,
                );
            }
        }
        if plant.is_storage() {
            let eta = plant.eta.expect("validated: storages have an efficiency");
            let start_level = 0.5 * plant.storage_capacity;
            for (k, &t) in horizon.iter().enumerate() {
                // L(t) - L(t-1) - eta CH(t) + DIS(t) = 0, L(-1) fixed.
                let mut terms = vec![
                    (vars.level[&(p, t)], 1.0),
                    (vars.charge[&(p, t)], -eta),
                    (vars.discharge[&(p, t)], 1.0),
                ];
                let rhs = if k == 0 {
                    start_level
                } else {
                    terms.push((vars.level[&(p, horizon[k - 1])], -1.0));
                    0.0
                };
                lp.add_constraint(format!("level({},{t})", plant.id), terms, Sense::Eq, rhs);
            }
            // Symmetric boundary: end level equals start level.
            let last = *horizon.last().expect("horizon nonempty");
            lp.add_constraint(
                format!("level_end({})", plant.id),
                vec![(vars.level[&(p, last)], 1.0)],
                Sense::Eq,
                start_level,
            );
        }
    }

    // Heat balances per heat area.
    for area in dataset.heat_areas() {
        for &t in &horizon {
            let terms: Vec<(usize, f64)> = dataset
                .plants
                .iter()
                .enumerate()
                .filter(|(_, p)| p.heat_area.as_deref() == Some(area))
                .filter_map(|(p, _)| vars.h.get(&(p, t)).map(|&v| (v, 1.0)))
                .collect();
            lp.add_constraint(
                format!("heat({area},{t})"),
                terms,
                Sense::Eq,
                dataset.heat_demand_at(area, t),
            );
        }
    }

    // Scope slack variables: curtailment and infeasibility.
    let scopes = balance_scopes(dataset, market_type);
    for (scope, members) in &scopes {
        for &t in &horizon {
            let demand: f64 = members
                .iter()
                .map(|&n| dataset.demand_at(&dataset.nodes[n].id, t))
                .sum();
            let curt = lp.add_variable(
                format!("CURT({scope},{t})"),
                0.0,
                demand,
                options.curtailment_cost,
            );
            let ip = lp.add_variable(
                format!("INFEAS+({scope},{t})"),
                0.0,
                INF,
                options.infeasibility_penalty,
            );
            let im = lp.add_variable(
                format!("INFEAS-({scope},{t})"),
                0.0,
                INF,
                options.infeasibility_penalty,
            );
            vars.curt.insert((scope.clone(), t), curt);
            vars.infeas_pos.insert((scope.clone(), t), ip);
            vars.infeas_neg.insert((scope.clone(), t), im);
        }
    }

    // Representation-specific variables.
    match representation {
        Representation::Nodal(_) => {
            for (n, _) in dataset.nodes.iter().enumerate() {
                for &t in &horizon {
                    let v = lp.add_variable(
                        format!("INJ({},{t})", dataset.nodes[n].id),
                        -INF,
                        INF,
                        0.0,
                    );
                    vars.inj.insert((n, t), v);
                }
            }
        }
        Representation::ZonalNtc => {
            for ntc in &dataset.ntcs {
                for &t in &horizon {
                    let v = lp.add_variable(
                        format!("EX({},{},{t})", ntc.from_zone, ntc.to_zone),
                        0.0,
                        ntc.capacity,
                        0.0,
                    );
                    vars.ex
                        .insert((ntc.from_zone.clone(), ntc.to_zone.clone(), t), v);
                }
            }
        }
        Representation::ZonalFbmc(_) => {
            for zone in &dataset.zones {
                for &t in &horizon {
                    let v = lp.add_variable(format!("NP({},{t})", zone.id), -INF, INF, 0.0);
                    vars.np.insert((zone.id.clone(), t), v);
                }
            }
        }
        Representation::CopperPlate => {}
    }

    // Energy balances: generation - demand-side terms per scope.
    let mut balance_rows = BTreeMap::new();
    for (scope, members) in &scopes {
        for &t in &horizon {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            let mut demand = 0.0;
            for &n in members {
                demand += dataset.demand_at(&dataset.nodes[n].id, t);
                for (p, plant) in dataset.plants.iter().enumerate() {
                    if plant.node == dataset.nodes[n].id {
                        terms.push((vars.g[&(p, t)], 1.0));
                        if plant.is_storage() {
                            terms.push((vars.charge[&(p, t)], -1.0));
                            terms.push((vars.discharge[&(p, t)], 1.0));
                        }
                    }
                }
            }
            terms.push((vars.curt[&(scope.clone(), t)], 1.0));
            terms.push((vars.infeas_pos[&(scope.clone(), t)], 1.0));
            terms.push((vars.infeas_neg[&(scope.clone(), t)], -1.0));
            match representation {
                Representation::Nodal(_) => {
                    let n = members[0];
                    terms.push((vars.inj[&(n, t)], -1.0));
                }
                Representation::ZonalNtc => {
                    for ((from, to, tt), &v) in &vars.ex {
                        if *tt != t {
                            continue;
                        }
                        if from == scope {
                            terms.push((v, -1.0));
                        }
                        if to == scope {
                            terms.push((v, 1.0));
                        }
                    }
                }
                Representation::ZonalFbmc(_) => {
                    terms.push((vars.np[&(scope.clone(), t)], -1.0));
                }
                Representation::CopperPlate => {}
            }
            let row = lp.add_constraint(format!("balance({scope},{t})"), terms, Sense::Eq, demand);
            balance_rows.insert((scope.clone(), t), row);
        }
    }

    // Network constraints.
    let mut network_row_count = 0;
    match representation {
        Representation::Nodal(grid_rep) => {
            // Injections must balance; one row per connected component is
            // implied by per-zone/per-node bookkeeping, so a single global
            // row suffices here together with the balance equalities.
            for &t in &horizon {
                let terms: Vec<(usize, f64)> = (0..dataset.nodes.len())
                    .map(|n| (vars.inj[&(n, t)], 1.0))
                    .collect();
                lp.add_constraint(format!("inj_sum({t})"), terms, Sense::Eq, 0.0);
            }
            for (c, cbco) in grid_rep.constraints.iter().enumerate() {
                for &t in &horizon {
                    let terms: Vec<(usize, f64)> = cbco
                        .row
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a != 0.0)
                        .map(|(n, &a)| (vars.inj[&(n, t)], a))
                        .collect();
                    lp.add_constraint(format!("cbco{c}({t})"), terms, Sense::Le, cbco.rhs);
                    network_row_count += 1;
                }
            }
        }
        Representation::ZonalFbmc(fb) => {
            for &t in &horizon {
                let terms: Vec<(usize, f64)> = dataset
                    .zones
                    .iter()
                    .map(|z| (vars.np[&(z.id.clone(), t)], 1.0))
                    .collect();
                lp.add_constraint(format!("np_sum({t})"), terms, Sense::Eq, 0.0);
                for (c, fbc) in fb.constraints_at(t).iter().enumerate() {
                    let terms: Vec<(usize, f64)> = fbc
                        .zonal_row
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a != 0.0)
                        .map(|(z, &a)| (vars.np[&(fb.zones[z].clone(), t)], a))
                        .collect();
                    lp.add_constraint(format!("fb{c}({t})"), terms, Sense::Le, fbc.ram);
                    network_row_count += 1;
                }
            }
        }
        // NTC limits live on the EX variable bounds; copper plate has none.
        Representation::ZonalNtc | Representation::CopperPlate => {}
    }

    Ok(DispatchProblem {
        lp,
        vars,
        balance_rows,
        network_row_count,
        market_type,
        stage: Stage::Market,
    })
}

/// Solved dispatch: schedules, prices, injections, flows and analytics.
#[derive(Debug, Clone)]
pub struct DispatchResult {
    pub stage: Stage,
    pub market_type: MarketType,
    pub horizon: (Timestep, Timestep),
    /// Plant schedules keyed by plant id.
    pub generation: BTreeMap<(String, Timestep), f64>,
    pub heat: BTreeMap<(String, Timestep), f64>,
    pub charge: BTreeMap<(String, Timestep), f64>,
    pub discharge: BTreeMap<(String, Timestep), f64>,
    pub level: BTreeMap<(String, Timestep), f64>,
    pub curtailment: BTreeMap<(String, Timestep), f64>,
    pub infeasibility: BTreeMap<(String, Timestep), f64>,
    /// Nodal injections per timestep in dataset node order; `None` when an
    /// active zonal infeasibility slack makes them ambiguous.
    pub injections: Option<BTreeMap<Timestep, Vec<f64>>>,
    /// N-0 flows recomputed from injections via PTDF, per timestep in line
    /// order.
    pub flows_n0: BTreeMap<Timestep, Vec<f64>>,
    pub net_positions: BTreeMap<(String, Timestep), f64>,
    /// Duals of the energy balances per scope.
    pub prices: BTreeMap<(String, Timestep), f64>,
    pub objective: f64,
    pub costs: CostBreakdown,
    /// Signed generation change vs the market schedule (redispatch stage).
    pub redispatch_delta: Option<BTreeMap<(String, Timestep), f64>>,
    pub warnings: Vec<String>,
}

impl DispatchResult {
    pub fn generation_of(&self, plant: &str, t: Timestep) -> f64 {
        self.generation
            .get(&(plant.to_string(), t))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn total_infeasibility(&self) -> f64 {
        self.infeasibility.values().sum()
    }
}

/// Distribute scope-level curtailment/infeasibility onto nodes by demand
/// share, then assemble nodal injections from the schedules.
fn assemble_injections(
    dataset: &Dataset,
    market_type: MarketType,
    horizon: &[Timestep],
    generation: &BTreeMap<(String, Timestep), f64>,
    charge: &BTreeMap<(String, Timestep), f64>,
    discharge: &BTreeMap<(String, Timestep), f64>,
    curtailment: &BTreeMap<(String, Timestep), f64>,
) -> BTreeMap<Timestep, Vec<f64>> {
    let scopes = balance_scopes(dataset, market_type);
    let mut result = BTreeMap::new();
    for &t in horizon {
        let mut inj = vec![0.0; dataset.nodes.len()];
        for (n, node) in dataset.nodes.iter().enumerate() {
            inj[n] -= dataset.demand_at(&node.id, t);
        }
        for (plant, p) in dataset.plants.iter().map(|p| (p, p)) {
            let n = dataset
                .node_index(&p.node)
                .expect("validated: plant nodes resolve");
            let key = (plant.id.clone(), t);
            inj[n] += generation.get(&key).copied().unwrap_or(0.0);
            inj[n] -= charge.get(&key).copied().unwrap_or(0.0);
            inj[n] += discharge.get(&key).copied().unwrap_or(0.0);
        }
        for (scope, members) in &scopes {
            let curt = curtailment.get(&(scope.clone(), t)).copied().unwrap_or(0.0);
            if curt <= 0.0 {
                continue;
            }
            let total: f64 = members
                .iter()
                .map(|&n| dataset.demand_at(&dataset.nodes[n].id, t))
                .sum();
            if total <= 0.0 {
                continue;
            }
            for &n in members {
                let share = dataset.demand_at(&dataset.nodes[n].id, t) / total;
                inj[n] += curt * share;
            }
        }
        result.insert(t, inj);
    }
    result
}

fn extract_result(
    dataset: &Dataset,
    ptdf: &PtdfMatrix,
    problem: &DispatchProblem,
    options: &Options,
    solution: &crate::solver::LpSolution,
    market_generation: Option<&BTreeMap<(String, Timestep), f64>>,
) -> DispatchResult {
    let horizon: Vec<Timestep> = options.horizon().collect();
    let mut warnings = Vec::new();

    let read = |map: &BTreeMap<(usize, Timestep), usize>| -> BTreeMap<(String, Timestep), f64> {
        map.iter()
            .map(|(&(p, t), &v)| ((dataset.plants[p].id.clone(), t), solution.primal[v]))
            .collect()
    };
    let generation = read(&problem.vars.g);
    let heat = read(&problem.vars.h);
    let charge = read(&problem.vars.charge);
    let discharge = read(&problem.vars.discharge);
    let level = read(&problem.vars.level);

    let curtailment: BTreeMap<(String, Timestep), f64> = problem
        .vars
        .curt
        .iter()
        .map(|(k, &v)| (k.clone(), solution.primal[v]))
        .collect();
    let mut infeasibility = BTreeMap::new();
    for (k, &vp) in &problem.vars.infeas_pos {
        let vn = problem.vars.infeas_neg[k];
        let total = solution.primal[vp] + solution.primal[vn];
        infeasibility.insert(k.clone(), total);
    }
    let total_infeas: f64 = infeasibility.values().sum();
    if total_infeas > 1e-6 {
        warnings.push(format!(
            "INFEASIBILITY slack active: {total_infeas:.3} MW total; results are not physical"
        ));
    }

    let injections_available = problem.market_type == MarketType::Nodal
        || problem.stage == Stage::Redispatch
        || total_infeas <= 1e-6;
    let injections = injections_available.then(|| {
        assemble_injections(
            dataset,
            problem.market_type,
            &horizon,
            &generation,
            &charge,
            &discharge,
            &curtailment,
        )
    });

    let mut flows_n0 = BTreeMap::new();
    if let Some(inj) = &injections {
        for (&t, vec) in inj {
            match crate::grid::compute_flows(ptdf, vec) {
                Ok(f) => {
                    flows_n0.insert(t, f);
                }
                Err(e) => warnings.push(format!("flow recomputation failed at t={t}: {e}")),
            }
        }
    }

    let mut net_positions = BTreeMap::new();
    if let Some(inj) = &injections {
        for (&t, vec) in inj {
            for zone in &dataset.zones {
                let np: f64 = dataset
                    .nodes
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.zone == zone.id)
                    .map(|(i, _)| vec[i])
                    .sum();
                net_positions.insert((zone.id.clone(), t), np);
            }
        }
    }

    let prices: BTreeMap<(String, Timestep), f64> = problem
        .balance_rows
        .iter()
        .map(|(k, &row)| (k.clone(), solution.duals[row]))
        .collect();

    // Cost breakdown from the primal values.
    let mut costs = CostBreakdown::default();
    for (&(p, t), &v) in &problem.vars.g {
        let _ = t;
        costs.cost_g += dataset.plants[p].mc_el * solution.primal[v];
    }
    for (k, v) in &curtailment {
        let _ = k;
        costs.cost_curt += options.curtailment_cost * v;
    }
    costs.oom_pen += options.infeasibility_penalty * total_infeas;
    let mut redispatch_delta = None;
    if let Some(market_gen) = market_generation {
        let mut delta = BTreeMap::new();
        let mut oom = 0.0;
        for (key, &g_rd) in &generation {
            let g_mkt = market_gen.get(key).copied().unwrap_or(0.0);
            delta.insert(key.clone(), g_rd - g_mkt);
            oom += options.redispatch.cost * (g_rd - g_mkt).abs();
        }
        costs.oom_pen += oom;
        redispatch_delta = Some(delta);
    }

    DispatchResult {
        stage: problem.stage,
        market_type: problem.market_type,
        horizon: options.model_horizon,
        generation,
        heat,
        charge,
        discharge,
        level,
        curtailment,
        infeasibility,
        injections,
        flows_n0,
        net_positions,
        prices,
        objective: solution.objective,
        costs,
        redispatch_delta,
        warnings,
    }
}

/// Clear the market under the given representation.
pub fn run_market(
    dataset: &Dataset,
    ptdf: &PtdfMatrix,
    representation: &Representation,
    options: &Options,
) -> Result<DispatchResult, MarketError> {
    let problem = build_dispatch(dataset, representation, options)?;
    let solution = solve_lp(&problem.lp).map_err(|source| MarketError::Lp {
        stage: "market".into(),
        source,
    })?;
    if solution.status != LpStatus::Optimal {
        return Err(MarketError::SolveFailed {
            stage: "market".into(),
            status: solution.status,
        });
    }
    Ok(extract_result(
        dataset, ptdf, &problem, options, &solution, None,
    ))
}

/// Second-stage redispatch: least-cost change from the market schedule that
/// satisfies the nodal network constraints with the market's balances fixed.
pub fn run_redispatch(
    dataset: &Dataset,
    ptdf: &PtdfMatrix,
    nodal_grid_rep: &GridRepresentation,
    market_result: &DispatchResult,
    options: &Options,
) -> Result<DispatchResult, MarketError> {
    let horizon: Vec<Timestep> = options.horizon().collect();
    if market_result.horizon != options.model_horizon {
        return Err(MarketError::ResultMismatch);
    }
    let mut lp = LinearProgram::default();
    let mut vars = VariableIndex::default();

    for (p, plant) in dataset.plants.iter().enumerate() {
        for &t in &horizon {
            let avail = dataset.availability_of(plant, t);
            let g = lp.add_variable(
                format!("G({},{t})", plant.id),
                0.0,
                avail * plant.g_max,
                plant.mc_el,
            );
            let dp = lp.add_variable(
                format!("D+({},{t})", plant.id),
                0.0,
                INF,
                options.redispatch.cost,
            );
            let dm = lp.add_variable(
                format!("D-({},{t})", plant.id),
                0.0,
                INF,
                options.redispatch.cost,
            );
            vars.g.insert((p, t), g);
            vars.delta_pos.insert((p, t), dp);
            vars.delta_neg.insert((p, t), dm);
            // G_rd = G_mkt + D+ - D-.
            lp.add_constraint(
                format!("rdlink({},{t})", plant.id),
                vec![(g, 1.0), (dp, -1.0), (dm, 1.0)],
                Sense::Eq,
                market_result.generation_of(&plant.id, t),
            );
        }
    }

    // Nodal slack variables and injections.
    for (n, node) in dataset.nodes.iter().enumerate() {
        for &t in &horizon {
            let demand = dataset.demand_at(&node.id, t);
            let curt = lp.add_variable(
                format!("CURT({},{t})", node.id),
                0.0,
                demand,
                options.curtailment_cost,
            );
            let ip = lp.add_variable(
                format!("INFEAS+({},{t})", node.id),
                0.0,
                INF,
                options.infeasibility_penalty,
            );
            let im = lp.add_variable(
                format!("INFEAS-({},{t})", node.id),
                0.0,
                INF,
                options.infeasibility_penalty,
            );
            let inj = lp.add_variable(format!("INJ({},{t})", node.id), -INF, INF, 0.0);
            vars.curt.insert((node.id.clone(), t), curt);
            vars.infeas_pos.insert((node.id.clone(), t), ip);
            vars.infeas_neg.insert((node.id.clone(), t), im);
            vars.inj.insert((n, t), inj);
        }
    }

    // Nodal balances. Market-stage storage and heat schedules enter as
    // constants; redispatch only moves electricity generation.
    let mut balance_rows = BTreeMap::new();
    for (n, node) in dataset.nodes.iter().enumerate() {
        for &t in &horizon {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            let mut rhs = dataset.demand_at(&node.id, t);
            for (p, plant) in dataset.plants.iter().enumerate() {
                if plant.node != node.id {
                    continue;
                }
                terms.push((vars.g[&(p, t)], 1.0));
                let key = (plant.id.clone(), t);
                let storage_net = market_result.discharge.get(&key).copied().unwrap_or(0.0)
                    - market_result.charge.get(&key).copied().unwrap_or(0.0);
                rhs -= storage_net;
            }
            terms.push((vars.curt[&(node.id.clone(), t)], 1.0));
            terms.push((vars.infeas_pos[&(node.id.clone(), t)], 1.0));
            terms.push((vars.infeas_neg[&(node.id.clone(), t)], -1.0));
            terms.push((vars.inj[&(n, t)], -1.0));
            let row =
                lp.add_constraint(format!("balance({},{t})", node.id), terms, Sense::Eq, rhs);
            balance_rows.insert((node.id.clone(), t), row);
        }
    }

    // Fixed balances of the market stage, at the market's scope granularity.
    let scopes = balance_scopes(dataset, market_result.market_type);
    for (scope, members) in &scopes {
        for &t in &horizon {
            let np_fixed = match market_result.market_type {
                MarketType::CopperPlate => 0.0,
                MarketType::Nodal => continue, // already nodal, nothing to fix
                _ => market_result
                    .net_positions
                    .get(&(scope.clone(), t))
                    .copied()
                    .unwrap_or(0.0),
            };
            let terms: Vec<(usize, f64)> =
                members.iter().map(|&n| (vars.inj[&(n, t)], 1.0)).collect();
            lp.add_constraint(format!("np_fix({scope},{t})"), terms, Sense::Eq, np_fixed);
        }
    }
    if market_result.market_type == MarketType::Nodal {
        for &t in &horizon {
            let terms: Vec<(usize, f64)> = (0..dataset.nodes.len())
                .map(|n| (vars.inj[&(n, t)], 1.0))
                .collect();
            lp.add_constraint(format!("inj_sum({t})"), terms, Sense::Eq, 0.0);
        }
    }

    // Network rows.
    let mut network_row_count = 0;
    for (c, cbco) in nodal_grid_rep.constraints.iter().enumerate() {
        for &t in &horizon {
            let terms: Vec<(usize, f64)> = cbco
                .row
                .iter()
                .enumerate()
                .filter(|(_, &a)| a != 0.0)
                .map(|(n, &a)| (vars.inj[&(n, t)], a))
                .collect();
            lp.add_constraint(format!("cbco{c}({t})"), terms, Sense::Le, cbco.rhs);
            network_row_count += 1;
        }
    }

    let problem = DispatchProblem {
        lp,
        vars,
        balance_rows,
        network_row_count,
        market_type: MarketType::Nodal,
        stage: Stage::Redispatch,
    };
    let solution = solve_lp(&problem.lp).map_err(|source| MarketError::Lp {
        stage: "redispatch".into(),
        source,
    })?;
    if solution.status != LpStatus::Optimal {
        return Err(MarketError::SolveFailed {
            stage: "redispatch".into(),
            status: solution.status,
        });
    }
    let mut result = extract_result(
        dataset,
        ptdf,
        &problem,
        options,
        &solution,
        Some(&market_result.generation),
    );
    // Carry the market's storage/heat schedules through for reporting.
    result.charge = market_result.charge.clone();
    result.discharge = market_result.discharge.clone();
    result.level = market_result.level.clone();
    result.heat = market_result.heat.clone();
    Ok(result)
}

/// Flow tolerance for overload detection, MW.
const OVERLOAD_TOL: f64 = 1e-6;

/// Lines whose N-0 flow exceeds capacity: (line id, timestep, overload MW).
pub fn overloaded_lines_n0(
    result: &DispatchResult,
    topology: &Topology,
) -> Result<Vec<(String, Timestep, f64)>, MarketError> {
    if result.injections.is_none() {
        return Err(MarketError::NodalInjectionsUnavailable);
    }
    let mut out = Vec::new();
    for (&t, flows) in &result.flows_n0 {
        for l in 0..topology.num_lines() {
            let overload = flows[l].abs() - topology.capacity[l];
            if overload > OVERLOAD_TOL {
                out.push((topology.line_ids[l].clone(), t, overload));
            }
        }
    }
    Ok(out)
}

/// Post-contingency overloads: (line id, scenario id, timestep, overload MW).
pub fn overloaded_lines_n1(
    result: &DispatchResult,
    topology: &Topology,
    ptdf: &PtdfMatrix,
    scenarios: &[ContingencyScenario],
) -> Result<Vec<(String, String, Timestep, f64)>, MarketError> {
    let injections = result
        .injections
        .as_ref()
        .ok_or(MarketError::NodalInjectionsUnavailable)?;
    let mut out = Vec::new();
    for (&t, inj) in injections {
        for scenario in scenarios {
            if scenario.islanding {
                continue;
            }
            let post = post_contingency_flows(ptdf, topology, inj, scenario)?;
            for l in 0..topology.num_lines() {
                if scenario.lines.contains(&l) {
                    continue;
                }
                let overload = post[l].abs() - topology.capacity[l];
                if overload > OVERLOAD_TOL {
                    out.push((topology.line_ids[l].clone(), scenario.id.clone(), t, overload));
                }
            }
        }
    }
    Ok(out)
}

/// Total absolute redispatched energy in MWh.
pub fn redispatch_quantity(
    market: &DispatchResult,
    redispatch: &DispatchResult,
) -> Result<f64, MarketError> {
    if market.horizon != redispatch.horizon {
        return Err(MarketError::ResultMismatch);
    }
    let plants: std::collections::BTreeSet<&String> =
        market.generation.keys().map(|(p, _)| p).collect();
    let rd_plants: std::collections::BTreeSet<&String> =
        redispatch.generation.keys().map(|(p, _)| p).collect();
    if plants != rd_plants {
        return Err(MarketError::ResultMismatch);
    }
    Ok(redispatch
        .generation
        .iter()
        .map(|(key, &g_rd)| (g_rd - market.generation.get(key).copied().unwrap_or(0.0)).abs())
        .sum())
}
