//! Network topology, DC power flow sensitivities and N-1 constraint assembly.
//!
//! All flow computations use the lossless DC approximation: line flows are
//! linear in nodal net injections through the PTDF matrix, and outage
//! redistribution is linear in pre-outage flows through LODFs.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::types::{Dataset, Options};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("component containing node '{0}' has more than one slack flag")]
    MultipleSlacks(String),
    #[error("unknown line id '{0}'")]
    UnknownLine(String),
    #[error("contingency group contains line '{0}' which is not contingency-eligible")]
    IneligibleGroupLine(String),
    #[error("injections unbalanced in component {component}: sum {imbalance:.6} MW")]
    UnbalancedInjections { component: usize, imbalance: f64 },
    #[error("scenario '{0}' islands the network; post-contingency flows undefined")]
    IslandingScenario(String),
    #[error("injection vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("reduced susceptance matrix singular in component {0}")]
    SingularComponent(usize),
}

/// Oriented network graph with susceptances and per-component slack nodes.
#[derive(Debug, Clone)]
pub struct Topology {
    pub node_ids: Vec<String>,
    pub line_ids: Vec<String>,
    /// Line endpoints as node indices; the incidence row is +1 at `from`,
    /// -1 at `to`.
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    /// Susceptance 1/reactance per line.
    pub susceptance: Vec<f64>,
    pub capacity: Vec<f64>,
    pub contingency_eligible: Vec<bool>,
    /// Connected components as sorted node-index sets.
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
    /// Slack node index per component.
    pub slack: Vec<usize>,
}

impl Topology {
    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_lines(&self) -> usize {
        self.line_ids.len()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.line_ids.iter().position(|l| l == id)
    }

    /// Incidence vector of a line: +1 at from, -1 at to.
    fn end_pair(&self, line: usize) -> DVector<f64> {
        let mut d = DVector::zeros(self.num_nodes());
        d[self.from[line]] = 1.0;
        d[self.to[line]] = -1.0;
        d
    }

    /// Copy of the topology with a set of lines removed. Components and
    /// slacks are recomputed, keeping previous slack flags where possible.
    pub fn without_lines(&self, removed: &[usize]) -> Topology {
        let removed: BTreeSet<usize> = removed.iter().copied().collect();
        let keep: Vec<usize> = (0..self.num_lines())
            .filter(|l| !removed.contains(l))
            .collect();
        let mut slack_flags = vec![false; self.num_nodes()];
        for &s in &self.slack {
            slack_flags[s] = true;
        }
        build_from_parts(
            self.node_ids.clone(),
            &slack_flags,
            keep.iter().map(|&l| LinePart {
                id: self.line_ids[l].clone(),
                from: self.from[l],
                to: self.to[l],
                susceptance: self.susceptance[l],
                capacity: self.capacity[l],
                contingency: self.contingency_eligible[l],
            }),
        )
        .expect("line removal cannot introduce slack conflicts")
    }
}

struct LinePart {
    id: String,
    from: usize,
    to: usize,
    susceptance: f64,
    capacity: f64,
    contingency: bool,
}

fn build_from_parts(
    node_ids: Vec<String>,
    slack_flags: &[bool],
    lines: impl Iterator<Item = LinePart>,
) -> Result<Topology, GridError> {
    let n = node_ids.len();
    let mut line_ids = Vec::new();
    let (mut from, mut to, mut susceptance, mut capacity, mut eligible) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for lp in lines {
        line_ids.push(lp.id);
        from.push(lp.from);
        to.push(lp.to);
        susceptance.push(lp.susceptance);
        capacity.push(lp.capacity);
        eligible.push(lp.contingency);
    }

    // Connected components by breadth-first search.
    let mut adjacency = vec![Vec::new(); n];
    for l in 0..line_ids.len() {
        adjacency[from[l]].push(to[l]);
        adjacency[to[l]].push(from[l]);
    }
    let mut component_of = vec![usize::MAX; n];
    let mut components = Vec::new();
    for start in 0..n {
        if component_of[start] != usize::MAX {
            continue;
        }
        let c = components.len();
        let mut queue = vec![start];
        let mut members = Vec::new();
        component_of[start] = c;
        while let Some(v) = queue.pop() {
            members.push(v);
            for &w in &adjacency[v] {
                if component_of[w] == usize::MAX {
                    component_of[w] = c;
                    queue.push(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }

    // One slack per component: the flagged node if present, else the node
    // with the lexicographically smallest id.
    let mut slack = Vec::with_capacity(components.len());
    for members in &components {
        let flagged: Vec<usize> = members.iter().copied().filter(|&v| slack_flags[v]).collect();
        match flagged.len() {
            0 => {
                let lowest = members
                    .iter()
                    .copied()
                    .min_by(|&a, &b| node_ids[a].cmp(&node_ids[b]))
                    .expect("component is nonempty");
                slack.push(lowest);
            }
            1 => slack.push(flagged[0]),
            _ => return Err(GridError::MultipleSlacks(node_ids[flagged[0]].clone())),
        }
    }

    Ok(Topology {
        node_ids,
        line_ids,
        from,
        to,
        susceptance,
        capacity,
        contingency_eligible: eligible,
        components,
        component_of,
        slack,
    })
}

/// Build the oriented topology of a validated dataset.
pub fn build_topology(dataset: &Dataset) -> Result<Topology, GridError> {
    let node_ids: Vec<String> = dataset.nodes.iter().map(|n| n.id.clone()).collect();
    let slack_flags: Vec<bool> = dataset.nodes.iter().map(|n| n.slack).collect();
    let index = |id: &str| {
        node_ids
            .iter()
            .position(|n| n == id)
            .expect("dataset validated: line endpoints resolve")
    };
    build_from_parts(
        node_ids.clone(),
        &slack_flags,
        dataset.lines.iter().map(|l| LinePart {
            id: l.id.clone(),
            from: index(&l.from),
            to: index(&l.to),
            susceptance: 1.0 / l.reactance,
            capacity: l.capacity,
            contingency: l.contingency,
        }),
    )
}

/// Lines x nodes sensitivity of MW flow to MW injection (withdrawn at the
/// slack of the injection's component). Slack columns are all zero.
#[derive(Debug, Clone)]
pub struct PtdfMatrix {
    pub matrix: DMatrix<f64>,
    pub slack: Vec<usize>,
    pub component_of: Vec<usize>,
}

impl PtdfMatrix {
    pub fn row(&self, line: usize) -> Vec<f64> {
        self.matrix.row(line).iter().copied().collect()
    }
}

/// Assemble the PTDF matrix per connected component by inverting the
/// slack-reduced susceptance Laplacian.
pub fn compute_ptdf(topology: &Topology) -> Result<PtdfMatrix, GridError> {
    let n = topology.num_nodes();
    let nl = topology.num_lines();
    let mut ptdf: DMatrix<f64> = DMatrix::zeros(nl, n);

    for (c, members) in topology.components.iter().enumerate() {
        let slack = topology.slack[c];
        // Non-slack nodes of this component, in node order.
        let reduced: Vec<usize> = members.iter().copied().filter(|&v| v != slack).collect();
        if reduced.is_empty() {
            continue; // isolated single node, nothing to map
        }
        let pos = |v: usize| reduced.iter().position(|&r| r == v);

        let k = reduced.len();
        let mut lap: DMatrix<f64> = DMatrix::zeros(k, k);
        for l in 0..nl {
            let (f, t, b) = (topology.from[l], topology.to[l], topology.susceptance[l]);
            if topology.component_of[f] != c {
                continue;
            }
            if let Some(pf) = pos(f) {
                lap[(pf, pf)] += b;
            }
            if let Some(pt) = pos(t) {
                lap[(pt, pt)] += b;
            }
            if let (Some(pf), Some(pt)) = (pos(f), pos(t)) {
                lap[(pf, pt)] -= b;
                lap[(pt, pf)] -= b;
            }
        }
        let inv = lap
            .lu()
            .try_inverse()
            .ok_or(GridError::SingularComponent(c))?;

        // PTDF rows of lines in this component: diag(b) * A_reduced * inv.
        for l in 0..nl {
            if topology.component_of[topology.from[l]] != c {
                continue;
            }
            let b = topology.susceptance[l];
            for (col, &node) in reduced.iter().enumerate() {
                let mut a_row_inv_col = 0.0;
                if let Some(pf) = pos(topology.from[l]) {
                    a_row_inv_col += inv[(pf, col)];
                }
                if let Some(pt) = pos(topology.to[l]) {
                    a_row_inv_col -= inv[(pt, col)];
                }
                ptdf[(l, node)] = b * a_row_inv_col;
            }
        }
    }

    Ok(PtdfMatrix {
        matrix: ptdf,
        slack: topology.slack.clone(),
        component_of: topology.component_of.clone(),
    })
}

/// Balance tolerance for injection vectors, MW.
pub const BALANCE_TOL: f64 = 1e-6;

/// Map balanced nodal injections to line flows.
pub fn compute_flows(ptdf: &PtdfMatrix, injections: &[f64]) -> Result<Vec<f64>, GridError> {
    let n = ptdf.component_of.len();
    if injections.len() != n {
        return Err(GridError::DimensionMismatch {
            got: injections.len(),
            expected: n,
        });
    }
    let ncomp = ptdf.slack.len();
    for c in 0..ncomp {
        let imbalance: f64 = injections
            .iter()
            .enumerate()
            .filter(|&(v, _)| ptdf.component_of[v] == c)
            .map(|(_, &x)| x)
            .sum();
        if imbalance.abs() > BALANCE_TOL {
            return Err(GridError::UnbalancedInjections {
                component: c,
                imbalance,
            });
        }
    }
    let inj = DVector::from_column_slice(injections);
    Ok((&ptdf.matrix * inj).iter().copied().collect())
}

/// Result of a LODF computation for one outage set.
#[derive(Debug, Clone)]
pub enum LodfOutcome {
    /// Monitored-lines x outaged-lines factor matrix.
    Factors(DMatrix<f64>),
    /// The outage disconnects part of the network.
    Islanding,
}

/// Singularity tolerance on the outage denominator matrix.
const ISLANDING_TOL: f64 = 1e-8;

/// Line outage distribution factors for a (possibly multi-line) outage.
pub fn compute_lodf(
    ptdf: &PtdfMatrix,
    topology: &Topology,
    outage: &[usize],
) -> Result<LodfOutcome, GridError> {
    let nl = topology.num_lines();
    for &k in outage {
        if k >= nl {
            return Err(GridError::UnknownLine(format!("#{k}")));
        }
    }
    let k = outage.len();
    // E = I - P_K D_K, where D_K columns are the outaged end-pair vectors.
    let mut e: DMatrix<f64> = DMatrix::identity(k, k);
    for (col, &kout) in outage.iter().enumerate() {
        let d = topology.end_pair(kout);
        for (row, &krow) in outage.iter().enumerate() {
            e[(row, col)] -= ptdf.matrix.row(krow).dot(&d.transpose());
        }
    }
    // Singular denominator means the removed lines form a cut.
    let lu = e.clone().full_piv_lu();
    let min_pivot = (0..k)
        .map(|i| lu.u()[(i, i)].abs())
        .fold(f64::INFINITY, f64::min);
    if k > 0 && min_pivot < ISLANDING_TOL {
        return Ok(LodfOutcome::Islanding);
    }
    let e_inv = lu.try_inverse().ok_or(GridError::SingularComponent(0))?;

    // L = P D_K E^{-1} over all monitored lines; the diagonal entries for
    // outaged lines come out as -1 (their post-outage flow is zero).
    let mut pd: DMatrix<f64> = DMatrix::zeros(nl, k);
    for (col, &kout) in outage.iter().enumerate() {
        let d = topology.end_pair(kout);
        let col_vals = &ptdf.matrix * d;
        pd.set_column(col, &col_vals);
    }
    let mut lodf = pd * e_inv;
    for (col, &kout) in outage.iter().enumerate() {
        lodf[(kout, col)] = -1.0;
    }
    Ok(LodfOutcome::Factors(lodf))
}

/// One contingency: a set of simultaneously outaged lines.
#[derive(Debug, Clone)]
pub struct ContingencyScenario {
    pub id: String,
    /// Outaged line indices into the topology.
    pub lines: Vec<usize>,
    pub islanding: bool,
}

#[derive(Debug, Clone)]
pub struct ContingencyEnumeration {
    pub scenarios: Vec<ContingencyScenario>,
    pub warnings: Vec<String>,
}

impl ContingencyEnumeration {
    /// Scenarios usable for constraint assembly (non-islanding).
    pub fn usable(&self) -> impl Iterator<Item = &ContingencyScenario> {
        self.scenarios.iter().filter(|s| !s.islanding)
    }
}

/// Enumerate contingency scenarios: one per declared group, one per
/// remaining eligible line. Islanding scenarios are flagged and excluded
/// from assembly; scenarios below the sensitivity threshold are dropped.
pub fn enumerate_contingencies(
    topology: &Topology,
    ptdf: &PtdfMatrix,
    options: &Options,
) -> Result<ContingencyEnumeration, GridError> {
    let mut covered = BTreeSet::new();
    let mut candidates: Vec<(String, Vec<usize>)> = Vec::new();

    for group in &options.contingency.groups {
        let mut lines = Vec::new();
        for id in group {
            let l = topology
                .line_index(id)
                .ok_or_else(|| GridError::UnknownLine(id.clone()))?;
            if !topology.contingency_eligible[l] {
                return Err(GridError::IneligibleGroupLine(id.clone()));
            }
            lines.push(l);
            covered.insert(l);
        }
        lines.sort_unstable();
        lines.dedup();
        candidates.push((format!("group[{}]", group.join("+")), lines));
    }
    for l in 0..topology.num_lines() {
        if topology.contingency_eligible[l] && !covered.contains(&l) {
            candidates.push((topology.line_ids[l].clone(), vec![l]));
        }
    }

    let threshold = options.contingency.sensitivity_threshold;
    let mut scenarios = Vec::new();
    let mut warnings = Vec::new();
    for (id, lines) in candidates {
        match compute_lodf(ptdf, topology, &lines)? {
            LodfOutcome::Islanding => {
                warnings.push(format!(
                    "contingency '{id}' islands the network and is excluded"
                ));
                scenarios.push(ContingencyScenario {
                    id,
                    lines,
                    islanding: true,
                });
            }
            LodfOutcome::Factors(lodf) => {
                // Max |LODF| over monitored lines that are not themselves
                // outaged; below threshold the outage barely moves any flow.
                let outaged: BTreeSet<usize> = lines.iter().copied().collect();
                let max_lodf = (0..topology.num_lines())
                    .filter(|l| !outaged.contains(l))
                    .flat_map(|l| (0..lines.len()).map(move |c| (l, c)))
                    .map(|(l, c)| lodf[(l, c)].abs())
                    .fold(0.0_f64, f64::max);
                if max_lodf < threshold {
                    warnings.push(format!(
                        "contingency '{id}' dropped: max |LODF| {max_lodf:.4} below threshold"
                    ));
                    continue;
                }
                scenarios.push(ContingencyScenario {
                    id,
                    lines,
                    islanding: false,
                });
            }
        }
    }
    Ok(ContingencyEnumeration {
        scenarios,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Positive,
    Negative,
}

/// One flow constraint: a monitored line under a scenario, one direction.
#[derive(Debug, Clone)]
pub struct CbcoConstraint {
    pub line: String,
    /// Scenario id, or "basecase" for the N-0 row.
    pub scenario: String,
    pub direction: Direction,
    /// Nodal sensitivity row; `row . injections <= rhs`.
    pub row: Vec<f64>,
    pub rhs: f64,
}

/// The assembled set of nodal flow constraints for market clearing.
#[derive(Debug, Clone)]
pub struct GridRepresentation {
    pub constraints: Vec<CbcoConstraint>,
    pub reduced: bool,
    /// Options fingerprint the rows were assembled under.
    pub provenance: String,
}

impl GridRepresentation {
    pub fn keep_rows(&self, essential: &[usize]) -> GridRepresentation {
        GridRepresentation {
            constraints: essential
                .iter()
                .map(|&i| self.constraints[i].clone())
                .collect(),
            reduced: true,
            provenance: self.provenance.clone(),
        }
    }
}

/// Assemble N-0 plus per-scenario flow rows over nodal injections.
///
/// Every line is monitored. For each scenario and direction the row is
/// `+-(PTDF_l + sum_k L_lk PTDF_k)` with rhs = capacity of the monitored
/// line, giving `2 * lines * (usable scenarios + 1)` rows.
pub fn build_security_constraints(
    ptdf: &PtdfMatrix,
    topology: &Topology,
    scenarios: &[ContingencyScenario],
    provenance: impl Into<String>,
) -> Result<GridRepresentation, GridError> {
    let nl = topology.num_lines();
    let n = topology.num_nodes();
    let mut constraints = Vec::new();

    let mut push_rows = |scenario: &str, rows: &DMatrix<f64>| {
        for l in 0..nl {
            let base: Vec<f64> = (0..n).map(|v| rows[(l, v)]).collect();
            for direction in [Direction::Positive, Direction::Negative] {
                let row = match direction {
                    Direction::Positive => base.clone(),
                    Direction::Negative => base.iter().map(|x| -x).collect(),
                };
                constraints.push(CbcoConstraint {
                    line: topology.line_ids[l].clone(),
                    scenario: scenario.to_string(),
                    direction,
                    row,
                    rhs: topology.capacity[l],
                });
            }
        }
    };

    push_rows("basecase", &ptdf.matrix);

    for scenario in scenarios {
        if scenario.islanding {
            continue;
        }
        let lodf = match compute_lodf(ptdf, topology, &scenario.lines)? {
            LodfOutcome::Factors(l) => l,
            LodfOutcome::Islanding => continue,
        };
        // Post-contingency PTDF: P + L P_K.
        let mut post = ptdf.matrix.clone();
        for (col, &k) in scenario.lines.iter().enumerate() {
            let pk = ptdf.matrix.row(k).clone_owned();
            for l in 0..nl {
                let f = lodf[(l, col)];
                if f != 0.0 {
                    for v in 0..n {
                        post[(l, v)] += f * pk[v];
                    }
                }
            }
        }
        push_rows(&scenario.id, &post);
    }

    Ok(GridRepresentation {
        constraints,
        reduced: false,
        provenance: provenance.into(),
    })
}

/// Post-contingency flows `f_post = f_pre + L f_pre[outaged]`.
pub fn post_contingency_flows(
    ptdf: &PtdfMatrix,
    topology: &Topology,
    injections: &[f64],
    scenario: &ContingencyScenario,
) -> Result<Vec<f64>, GridError> {
    if scenario.islanding {
        return Err(GridError::IslandingScenario(scenario.id.clone()));
    }
    let pre = compute_flows(ptdf, injections)?;
    let lodf = match compute_lodf(ptdf, topology, &scenario.lines)? {
        LodfOutcome::Factors(l) => l,
        LodfOutcome::Islanding => return Err(GridError::IslandingScenario(scenario.id.clone())),
    };
    let mut post = pre.clone();
    for (col, &k) in scenario.lines.iter().enumerate() {
        for l in 0..topology.num_lines() {
            post[l] += lodf[(l, col)] * pre[k];
        }
    }
    Ok(post)
}
