//! Options loading from JSON: defaults for missing keys, warnings for
//! unknown keys, and type errors that name the offending JSON path.

use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use flowmark_core::types::{GskStrategy, MarketType, Options};

#[derive(Debug, Error)]
pub enum OptionsError {
    #[error("options file '{0}' not found")]
    MissingFile(String),
    #[error("options file is not valid JSON: {0}")]
    BadJson(String),
    #[error("at {path}: expected {expected}, got {got}")]
    TypeMismatch {
        path: String,
        expected: &'static str,
        got: String,
    },
    #[error("at {path}: {message}")]
    BadValue { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct LoadedOptions {
    pub options: Options,
    pub warnings: Vec<String>,
}

fn kind(value: &Value) -> String {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
    .to_string()
}

fn as_f64(value: &Value, path: &str) -> Result<f64, OptionsError> {
    value.as_f64().ok_or_else(|| OptionsError::TypeMismatch {
        path: path.to_string(),
        expected: "number",
        got: kind(value),
    })
}

fn as_bool(value: &Value, path: &str) -> Result<bool, OptionsError> {
    value.as_bool().ok_or_else(|| OptionsError::TypeMismatch {
        path: path.to_string(),
        expected: "boolean",
        got: kind(value),
    })
}

fn as_str<'a>(value: &'a Value, path: &str) -> Result<&'a str, OptionsError> {
    value.as_str().ok_or_else(|| OptionsError::TypeMismatch {
        path: path.to_string(),
        expected: "string",
        got: kind(value),
    })
}

fn as_object<'a>(
    value: &'a Value,
    path: &str,
) -> Result<&'a serde_json::Map<String, Value>, OptionsError> {
    value.as_object().ok_or_else(|| OptionsError::TypeMismatch {
        path: path.to_string(),
        expected: "object",
        got: kind(value),
    })
}

/// Parse options from a JSON document.
///
/// Accepts either the bare options object or one wrapped in an
/// `"optimization"` key. Missing keys take documented defaults; unknown
/// keys produce warnings.
pub fn parse_options(raw: &str) -> Result<LoadedOptions, OptionsError> {
    let root: Value =
        serde_json::from_str(raw).map_err(|e| OptionsError::BadJson(e.to_string()))?;
    let mut warnings = Vec::new();

    // Unwrap an "optimization" envelope; other envelope keys are warned.
    let (body, prefix) = match root.as_object() {
        Some(map) if map.contains_key("optimization") => {
            for key in map.keys().filter(|k| *k != "optimization") {
                warnings.push(format!("ignoring unknown top-level key '{key}'"));
            }
            (as_object(&map["optimization"], "optimization")?, "optimization.")
        }
        Some(map) => (map, ""),
        None => {
            return Err(OptionsError::TypeMismatch {
                path: "$".into(),
                expected: "object",
                got: kind(&root),
            })
        }
    };

    let mut options = Options::default();
    for (key, value) in body {
        let path = format!("{prefix}{key}");
        match key.as_str() {
            "type" => {
                options.market_type = match as_str(value, &path)? {
                    "copper_plate" => MarketType::CopperPlate,
                    // A single-price-zone "economic dispatch" run is the
                    // copper-plate representation.
                    "dispatch" => MarketType::CopperPlate,
                    "nodal" => MarketType::Nodal,
                    "zonal_ntc" | "ntc" => MarketType::ZonalNtc,
                    "zonal_fbmc" | "fbmc" | "cbco_zonal" => MarketType::ZonalFbmc,
                    other => {
                        return Err(OptionsError::BadValue {
                            path,
                            message: format!("unknown market type '{other}'"),
                        })
                    }
                };
            }
            "model_horizon" => {
                let arr = value.as_array().ok_or_else(|| OptionsError::TypeMismatch {
                    path: path.clone(),
                    expected: "array of two integers",
                    got: kind(value),
                })?;
                if arr.len() != 2 {
                    return Err(OptionsError::BadValue {
                        path,
                        message: format!("expected two entries, got {}", arr.len()),
                    });
                }
                let lo = as_f64(&arr[0], &format!("{path}[0]"))? as usize;
                let hi = as_f64(&arr[1], &format!("{path}[1]"))? as usize;
                options.model_horizon = (lo, hi);
            }
            "redispatch" => {
                for (k, v) in as_object(value, &path)? {
                    let sub = format!("{path}.{k}");
                    match k.as_str() {
                        "include" => options.redispatch.include = as_bool(v, &sub)?,
                        "cost" => options.redispatch.cost = as_f64(v, &sub)?,
                        _ => warnings.push(format!("ignoring unknown key '{sub}'")),
                    }
                }
            }
            "contingency" => {
                for (k, v) in as_object(value, &path)? {
                    let sub = format!("{path}.{k}");
                    match k.as_str() {
                        "enabled" => options.contingency.enabled = as_bool(v, &sub)?,
                        "sensitivity_threshold" => {
                            options.contingency.sensitivity_threshold = as_f64(v, &sub)?
                        }
                        "groups" => {
                            let groups = v.as_array().ok_or_else(|| {
                                OptionsError::TypeMismatch {
                                    path: sub.clone(),
                                    expected: "array of arrays of line ids",
                                    got: kind(v),
                                }
                            })?;
                            options.contingency.groups = groups
                                .iter()
                                .enumerate()
                                .map(|(i, g)| {
                                    let gp = format!("{sub}[{i}]");
                                    g.as_array()
                                        .ok_or_else(|| OptionsError::TypeMismatch {
                                            path: gp.clone(),
                                            expected: "array of line ids",
                                            got: kind(g),
                                        })?
                                        .iter()
                                        .map(|id| Ok(as_str(id, &gp)?.to_string()))
                                        .collect()
                                })
                                .collect::<Result<_, OptionsError>>()?;
                        }
                        _ => warnings.push(format!("ignoring unknown key '{sub}'")),
                    }
                }
            }
            "gsk_strategy" => {
                options.gsk_strategy = match as_str(value, &path)? {
                    "flat" => GskStrategy::Flat,
                    "gmax" => GskStrategy::Gmax,
                    "basecase" => GskStrategy::Basecase,
                    other => {
                        return Err(OptionsError::BadValue {
                            path,
                            message: format!("unknown GSK strategy '{other}'"),
                        })
                    }
                };
            }
            "min_ram" => options.min_ram = as_f64(value, &path)?,
            "curtailment_cost" => options.curtailment_cost = as_f64(value, &path)?,
            "infeasibility_penalty" => options.infeasibility_penalty = as_f64(value, &path)?,
            _ => warnings.push(format!("ignoring unknown key '{path}'")),
        }
    }

    options
        .check()
        .map_err(|message| OptionsError::BadValue {
            path: prefix.trim_end_matches('.').to_string(),
            message,
        })?;
    Ok(LoadedOptions { options, warnings })
}

/// Load options from a JSON file.
pub fn load_options(path: &Path) -> Result<LoadedOptions, OptionsError> {
    if !path.exists() {
        return Err(OptionsError::MissingFile(path.display().to_string()));
    }
    parse_options(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_yields_defaults() {
        let loaded = parse_options("{}").unwrap();
        assert_eq!(loaded.options.market_type, MarketType::Nodal);
        assert_eq!(loaded.options.model_horizon, (0, 1));
        assert!(!loaded.options.redispatch.include);
        assert_eq!(loaded.options.redispatch.cost, 50.0);
        assert!(!loaded.options.contingency.enabled);
        assert_eq!(loaded.options.contingency.sensitivity_threshold, 0.05);
        assert_eq!(loaded.options.curtailment_cost, 1000.0);
        assert_eq!(loaded.options.infeasibility_penalty, 10000.0);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn dispatch_run_configuration_parses() {
        let raw = r#"{
            "optimization": {
                "type": "dispatch",
                "model_horizon": [0, 168],
                "redispatch": {"include": true, "cost": 50}
            }
        }"#;
        let loaded = parse_options(raw).unwrap();
        assert_eq!(loaded.options.market_type, MarketType::CopperPlate);
        assert_eq!(loaded.options.model_horizon, (0, 168));
        assert!(loaded.options.redispatch.include);
        assert_eq!(loaded.options.redispatch.cost, 50.0);
    }

    #[test]
    fn unknown_keys_warn_with_path() {
        let raw = r#"{"redispatch": {"include": true, "zonal": false}, "frobnicate": 1}"#;
        let loaded = parse_options(raw).unwrap();
        assert_eq!(loaded.warnings.len(), 2);
        assert!(loaded.warnings.iter().any(|w| w.contains("redispatch.zonal")));
        assert!(loaded.warnings.iter().any(|w| w.contains("frobnicate")));
    }

    #[test]
    fn type_mismatch_names_json_path() {
        let err = parse_options(r#"{"redispatch": {"cost": "fifty"}}"#).unwrap_err();
        match err {
            OptionsError::TypeMismatch { path, expected, .. } => {
                assert_eq!(path, "redispatch.cost");
                assert_eq!(expected, "number");
            }
            other => panic!("expected TypeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn empty_horizon_is_rejected() {
        let err = parse_options(r#"{"model_horizon": [5, 5]}"#).unwrap_err();
        assert!(matches!(err, OptionsError::BadValue { .. }));
    }

    #[test]
    fn contingency_groups_parse() {
        let raw = r#"{"contingency": {"enabled": true, "groups": [["l1", "l2"], ["l3"]]}}"#;
        let loaded = parse_options(raw).unwrap();
        assert!(loaded.options.contingency.enabled);
        assert_eq!(loaded.options.contingency.groups.len(), 2);
        assert_eq!(loaded.options.contingency.groups[0], vec!["l1", "l2"]);
    }
}
