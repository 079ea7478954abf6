//! Domain types for the model dataset and run options.
//!
//! A [`Dataset`] is read-only after construction and safe to share across
//! threads. Model code must only consume datasets whose validation report
//! carries zero errors; the pipeline enforces this before any run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Integer timestep index; the model horizon is `t_start..t_end`.
pub type Timestep = usize;

/// A time series keyed by timestep. Values are MW, MWth or availability
/// fractions depending on the table the series came from.
pub type Series = BTreeMap<Timestep, f64>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub zone: String,
    pub slack: bool,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Per-unit series reactance, strictly positive.
    pub reactance: f64,
    /// Thermal capacity in MW.
    pub capacity: f64,
    /// Whether the line is eligible as an outage in contingency analysis.
    pub contingency: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plant {
    pub id: String,
    pub node: String,
    /// Marginal cost of electricity generation, currency/MWh.
    pub mc_el: f64,
    pub g_max: f64,
    /// Maximum heat output in MWth; 0 for plants without heat.
    pub h_max: f64,
    pub heat_area: Option<String>,
    /// Round-trip efficiency in (0, 1]; required for storages.
    pub eta: Option<f64>,
    /// Storage energy capacity in MWh; 0 for non-storage plants.
    pub storage_capacity: f64,
    /// Fixed power-per-heat ratio for backpressure CHP units.
    pub chp_ratio: Option<f64>,
    /// Id of an availability series in the dataset, if any.
    pub availability: Option<String>,
}

impl Plant {
    pub fn is_storage(&self) -> bool {
        self.storage_capacity > 0.0
    }

    pub fn has_heat(&self) -> bool {
        self.h_max > 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ntc {
    pub from_zone: String,
    pub to_zone: String,
    pub capacity: f64,
}

/// Grid representation requested for market clearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketType {
    CopperPlate,
    Nodal,
    ZonalNtc,
    ZonalFbmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GskStrategy {
    Flat,
    Gmax,
    Basecase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RedispatchOptions {
    pub include: bool,
    /// Out-of-market penalty per MWh of up- or downward adjustment.
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContingencyOptions {
    pub enabled: bool,
    /// Scenarios whose max |LODF| over non-outaged lines stays below this
    /// are dropped from constraint assembly.
    pub sensitivity_threshold: f64,
    /// Declared outage groups (sets of line ids that trip together).
    pub groups: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Options {
    #[serde(rename = "type")]
    pub market_type: MarketType,
    /// Half-open horizon `[t_start, t_end)`.
    pub model_horizon: (Timestep, Timestep),
    pub redispatch: RedispatchOptions,
    pub contingency: ContingencyOptions,
    pub gsk_strategy: GskStrategy,
    /// Minimum remaining available margin as a fraction of line capacity.
    pub min_ram: f64,
    pub curtailment_cost: f64,
    pub infeasibility_penalty: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            market_type: MarketType::Nodal,
            model_horizon: (0, 1),
            redispatch: RedispatchOptions {
                include: false,
                cost: 50.0,
            },
            contingency: ContingencyOptions {
                enabled: false,
                sensitivity_threshold: 0.05,
                groups: Vec::new(),
            },
            gsk_strategy: GskStrategy::Flat,
            min_ram: 0.0,
            curtailment_cost: 1000.0,
            infeasibility_penalty: 10000.0,
        }
    }
}

impl Options {
    pub fn horizon(&self) -> std::ops::Range<Timestep> {
        self.model_horizon.0..self.model_horizon.1
    }

    /// Structural checks on the options themselves.
    pub fn check(&self) -> Result<(), String> {
        if self.model_horizon.0 >= self.model_horizon.1 {
            return Err(format!(
                "model_horizon [{}, {}) is empty",
                self.model_horizon.0, self.model_horizon.1
            ));
        }
        if self.redispatch.cost < 0.0
            || self.curtailment_cost < 0.0
            || self.infeasibility_penalty < 0.0
        {
            return Err("cost values must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.min_ram) {
            return Err(format!("min_ram {} outside [0, 1]", self.min_ram));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding, pointing at the table and row it concerns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn error(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Warning,
            location: location.into(),
            message: message.into(),
        });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }
}

/// Validated tables of the model dataset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub nodes: Vec<Node>,
    pub zones: Vec<Zone>,
    pub lines: Vec<Line>,
    pub plants: Vec<Plant>,
    pub ntcs: Vec<Ntc>,
    /// Electric demand per node id.
    pub demand: BTreeMap<String, Series>,
    /// Heat demand per heat-area id.
    pub heat_demand: BTreeMap<String, Series>,
    /// Availability fractions per series id.
    pub availability: BTreeMap<String, Series>,
}

impl Dataset {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn zone_index(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.id == id)
    }

    pub fn line_index(&self, id: &str) -> Option<usize> {
        self.lines.iter().position(|l| l.id == id)
    }

    /// Electric demand at a node, 0 where no series entry exists.
    pub fn demand_at(&self, node: &str, t: Timestep) -> f64 {
        self.demand
            .get(node)
            .and_then(|s| s.get(&t))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn heat_demand_at(&self, area: &str, t: Timestep) -> f64 {
        self.heat_demand
            .get(area)
            .and_then(|s| s.get(&t))
            .copied()
            .unwrap_or(0.0)
    }

    /// Availability fraction of a plant, 1 where no series is referenced.
    pub fn availability_of(&self, plant: &Plant, t: Timestep) -> f64 {
        match &plant.availability {
            Some(id) => self
                .availability
                .get(id)
                .and_then(|s| s.get(&t))
                .copied()
                .unwrap_or(1.0),
            None => 1.0,
        }
    }

    /// Zonal demand is always derived by summation over the zone's nodes.
    pub fn zonal_demand_at(&self, zone: &str, t: Timestep) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.zone == zone)
            .map(|n| self.demand_at(&n.id, t))
            .sum()
    }

    /// Peak electric demand at a node over all stored timesteps.
    pub fn peak_demand_at(&self, node: &str) -> f64 {
        self.demand
            .get(node)
            .map(|s| s.values().fold(0.0_f64, |a, &v| a.max(v)))
            .unwrap_or(0.0)
    }

    pub fn heat_areas(&self) -> BTreeSet<&str> {
        self.plants
            .iter()
            .filter_map(|p| p.heat_area.as_deref())
            .collect()
    }

    /// Structural validation of all tables and cross references.
    ///
    /// An optional horizon additionally checks that referenced availability
    /// series and heat demand cover every timestep of a planned run.
    pub fn validate(&self, horizon: Option<std::ops::Range<Timestep>>) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut node_ids = BTreeSet::new();
        let mut zone_ids = BTreeSet::new();

        for zone in &self.zones {
            if !zone_ids.insert(zone.id.as_str()) {
                report.error(format!("zones/{}", zone.id), "duplicate zone id");
            }
        }
        for node in &self.nodes {
            if !node_ids.insert(node.id.as_str()) {
                report.error(format!("nodes/{}", node.id), "duplicate node id");
            }
            if !zone_ids.contains(node.zone.as_str()) {
                report.error(
                    format!("nodes/{}/zone", node.id),
                    format!("references unknown zone '{}'", node.zone),
                );
            }
        }

        let mut line_ids = BTreeSet::new();
        for line in &self.lines {
            let loc = format!("lines/{}", line.id);
            if !line_ids.insert(line.id.as_str()) {
                report.error(&loc, "duplicate line id");
            }
            for end in [&line.from, &line.to] {
                if !node_ids.contains(end.as_str()) {
                    report.error(
                        format!("{loc}/node"),
                        format!("references unknown node '{end}'"),
                    );
                }
            }
            if line.from == line.to {
                report.error(&loc, "line connects a node to itself");
            }
            if !(line.reactance > 0.0) {
                report.error(
                    format!("{loc}/reactance"),
                    format!("reactance must be strictly positive, got {}", line.reactance),
                );
            }
            if !line.capacity.is_finite() || line.capacity < 0.0 {
                report.error(
                    format!("{loc}/capacity"),
                    format!("capacity must be finite and >= 0, got {}", line.capacity),
                );
            } else if line.capacity == 0.0 {
                report.warning(format!("{loc}/capacity"), "zero-capacity line");
            }
        }

        let mut plant_ids = BTreeSet::new();
        for plant in &self.plants {
            let loc = format!("plants/{}", plant.id);
            if !plant_ids.insert(plant.id.as_str()) {
                report.error(&loc, "duplicate plant id");
            }
            if !node_ids.contains(plant.node.as_str()) {
                report.error(
                    format!("{loc}/node"),
                    format!("references unknown node '{}'", plant.node),
                );
            }
            if plant.g_max < 0.0 || plant.h_max < 0.0 || plant.storage_capacity < 0.0 {
                report.error(&loc, "g_max, h_max and storage_capacity must be >= 0");
            }
            if plant.is_storage() {
                match plant.eta {
                    Some(eta) if eta > 0.0 && eta <= 1.0 => {}
                    Some(eta) => report.error(
                        format!("{loc}/eta"),
                        format!("efficiency {eta} outside (0, 1]"),
                    ),
                    None => report.error(
                        format!("{loc}/eta"),
                        "storage plant requires an efficiency",
                    ),
                }
            }
            if plant.has_heat() && plant.heat_area.is_none() {
                report.error(
                    format!("{loc}/heat_area"),
                    "plant with h_max > 0 requires a heat_area",
                );
            }
            if let Some(r) = plant.chp_ratio {
                if !(r > 0.0) {
                    report.error(
                        format!("{loc}/chp_ratio"),
                        format!("chp_ratio must be > 0, got {r}"),
                    );
                }
            }
            if let Some(series) = &plant.availability {
                if !self.availability.contains_key(series) {
                    report.error(
                        format!("{loc}/availability"),
                        format!("references unknown availability series '{series}'"),
                    );
                }
            }
        }

        let mut ntc_pairs = BTreeSet::new();
        for ntc in &self.ntcs {
            let loc = format!("ntc/{}->{}", ntc.from_zone, ntc.to_zone);
            if !ntc_pairs.insert((ntc.from_zone.as_str(), ntc.to_zone.as_str())) {
                report.error(&loc, "duplicate directed NTC pair");
            }
            for z in [&ntc.from_zone, &ntc.to_zone] {
                if !zone_ids.contains(z.as_str()) {
                    report.error(&loc, format!("references unknown zone '{z}'"));
                }
            }
            if ntc.capacity < 0.0 {
                report.error(&loc, format!("capacity must be >= 0, got {}", ntc.capacity));
            }
        }

        for node in self.demand.keys() {
            if !node_ids.contains(node.as_str()) {
                report.error(
                    format!("demand/{node}"),
                    "demand series for unknown node",
                );
            }
        }
        for (id, series) in &self.availability {
            for (t, v) in series {
                if !(0.0..=1.0).contains(v) {
                    report.error(
                        format!("availability/{id}/t={t}"),
                        format!("availability {v} outside [0, 1]"),
                    );
                }
            }
        }

        if let Some(horizon) = horizon {
            for t in horizon {
                for plant in &self.plants {
                    if let Some(id) = &plant.availability {
                        if let Some(series) = self.availability.get(id) {
                            if !series.contains_key(&t) {
                                report.error(
                                    format!("availability/{id}"),
                                    format!("no value for timestep {t} in the model horizon"),
                                );
                            }
                        }
                    }
                }
                for area in self.heat_areas() {
                    if self.heat_demand_at(area, t) < 0.0 {
                        report.error(
                            format!("heat_demand/{area}/t={t}"),
                            "negative heat demand",
                        );
                    }
                }
            }
        }

        report
    }
}


#[cfg(any(test, feature = "fixtures"))]
pub mod test_fixtures {
    //! Small hand-authored datasets shared by tests across the workspace.

    use super::*;

    /// Two zones with one node each, joined by a 50 MW line. Cheap plant at
    /// n1, expensive plant at n2, 100 MW demand at n2 for t = 0.
    pub fn two_node() -> Dataset {
        let mut ds = Dataset {
            zones: vec![Zone { id: "A".into() }, Zone { id: "B".into() }],
            nodes: vec![
                Node {
                    id: "n1".into(),
                    zone: "A".into(),
                    slack: true,
                    lat: Some(52.5),
                    lon: Some(13.4),
                },
                Node {
                    id: "n2".into(),
                    zone: "B".into(),
                    slack: false,
                    lat: Some(48.1),
                    lon: Some(11.6),
                },
            ],
            lines: vec![Line {
                id: "l1".into(),
                from: "n1".into(),
                to: "n2".into(),
                reactance: 0.1,
                capacity: 50.0,
                contingency: true,
            }],
            plants: vec![
                Plant {
                    id: "p1".into(),
                    node: "n1".into(),
                    mc_el: 10.0,
                    g_max: 100.0,
                    h_max: 0.0,
                    heat_area: None,
                    eta: None,
                    storage_capacity: 0.0,
                    chp_ratio: None,
                    availability: None,
                },
                Plant {
                    id: "p2".into(),
                    node: "n2".into(),
                    mc_el: 50.0,
                    g_max: 100.0,
                    h_max: 0.0,
                    heat_area: None,
                    eta: None,
                    storage_capacity: 0.0,
                    chp_ratio: None,
                    availability: None,
                },
            ],
            ntcs: vec![
                Ntc {
                    from_zone: "A".into(),
                    to_zone: "B".into(),
                    capacity: 50.0,
                },
                Ntc {
                    from_zone: "B".into(),
                    to_zone: "A".into(),
                    capacity: 50.0,
                },
            ],
            ..Dataset::default()
        };
        ds.demand
            .insert("n2".into(), BTreeMap::from([(0, 100.0)]));
        ds
    }

    /// Three nodes in one zone connected in a ring, all reactances 1.
    /// Line order is (n1-n2, n1-n3, n2-n3); n1 is the flagged slack.
    pub fn three_node_ring() -> Dataset {
        let mut ds = Dataset {
            zones: vec![Zone { id: "A".into() }],
            nodes: ["n1", "n2", "n3"]
                .iter()
                .enumerate()
                .map(|(i, id)| Node {
                    id: (*id).into(),
                    zone: "A".into(),
                    slack: i == 0,
                    lat: None,
                    lon: None,
                })
                .collect(),
            lines: vec![
                Line {
                    id: "l12".into(),
                    from: "n1".into(),
                    to: "n2".into(),
                    reactance: 1.0,
                    capacity: 200.0,
                    contingency: true,
                },
                Line {
                    id: "l13".into(),
                    from: "n1".into(),
                    to: "n3".into(),
                    reactance: 1.0,
                    capacity: 200.0,
                    contingency: true,
                },
                Line {
                    id: "l23".into(),
                    from: "n2".into(),
                    to: "n3".into(),
                    reactance: 1.0,
                    capacity: 200.0,
                    contingency: true,
                },
            ],
            plants: vec![
                Plant {
                    id: "g2".into(),
                    node: "n2".into(),
                    mc_el: 10.0,
                    g_max: 300.0,
                    h_max: 0.0,
                    heat_area: None,
                    eta: None,
                    storage_capacity: 0.0,
                    chp_ratio: None,
                    availability: None,
                },
                Plant {
                    id: "g1".into(),
                    node: "n1".into(),
                    mc_el: 40.0,
                    g_max: 300.0,
                    h_max: 0.0,
                    heat_area: None,
                    eta: None,
                    storage_capacity: 0.0,
                    chp_ratio: None,
                    availability: None,
                },
            ],
            ntcs: Vec::new(),
            ..Dataset::default()
        };
        ds.demand
            .insert("n1".into(), BTreeMap::from([(0, 100.0)]));
        ds
    }
}
