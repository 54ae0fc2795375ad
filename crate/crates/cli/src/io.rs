use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mirfs::{BuiltinModel, Model, Observation, ParameterVector};
use serde_json::Value;

/// Invalid flags or input files; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

macro_rules! config_bail {
    ($($arg:tt)*) => {
        return Err(anyhow::Error::new($crate::io::ConfigError(format!($($arg)*))))
    };
}
pub(crate) use config_bail;

pub fn load_model(path: &Path) -> Result<BuiltinModel> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => config_bail!("cannot read model file {}: {e}", path.display()),
    };
    Ok(BuiltinModel::from_json(&text)?)
}

fn parse_number(s: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) => Ok(v),
        Err(_) => config_bail!("not a number: {s:?}"),
    }
}

fn theta_from_json(value: &Value, names: &[String]) -> Result<Vec<f64>> {
    let by_name = |obj: &serde_json::Map<String, Value>| -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| match obj.get(n).and_then(Value::as_f64) {
                Some(v) => Ok(v),
                None => config_bail!("theta file has no numeric entry for {n:?}"),
            })
            .collect()
    };
    match value {
        Value::Array(items) => items
            .iter()
            .map(|v| match v.as_f64() {
                Some(x) => Ok(x),
                None => config_bail!("theta array holds a non-number"),
            })
            .collect(),
        Value::Object(obj) => {
            // a fit report or a bare parameter vector
            if let Some(inner) = obj.get("theta_hat").or_else(|| obj.get("theta")) {
                return theta_from_json(inner, names);
            }
            if let Some(values) = obj.get("values") {
                return theta_from_json(values, names);
            }
            by_name(obj)
        }
        _ => config_bail!("theta file must hold an array or an object"),
    }
}

/// `0.1,0.2`, `a=0.1,b=0.2` or `@file.json`.
pub fn parse_theta(spec: &str, model: &BuiltinModel) -> Result<Vec<f64>> {
    let names = model.param_names();
    let theta = if let Some(path) = spec.strip_prefix('@') {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => config_bail!("cannot read theta file {path}: {e}"),
        };
        let value: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => config_bail!("theta file {path}: {e}"),
        };
        theta_from_json(&value, names)?
    } else if spec.contains('=') {
        let mut out = vec![f64::NAN; names.len()];
        for part in spec.split(',') {
            let Some((name, value)) = part.split_once('=') else {
                config_bail!("expected name=value, got {part:?}");
            };
            let Some(i) = names.iter().position(|n| n == name.trim()) else {
                config_bail!("unknown parameter {:?}", name.trim());
            };
            out[i] = parse_number(value)?;
        }
        if let Some(i) = out.iter().position(|v| v.is_nan()) {
            config_bail!("no value given for parameter {:?}", names[i]);
        }
        out
    } else {
        spec.split(',').map(parse_number).collect::<Result<Vec<_>>>()?
    };
    if theta.len() != names.len() {
        config_bail!("theta has {} values, the model has {} parameters", theta.len(), names.len());
    }
    Ok(theta)
}

/// Reads `obs_1 … obs_d` from a CSV with a header; other columns are ignored.
pub fn read_data(path: &Path, obs_dim: usize) -> Result<Vec<Observation>> {
    let mut reader = match csv::Reader::from_path(path) {
        Ok(r) => r,
        Err(e) => config_bail!("cannot open data file {}: {e}", path.display()),
    };
    let headers = reader.headers()?.clone();
    let cols: Vec<usize> = (1..=obs_dim)
        .map(|i| {
            let name = format!("obs_{i}");
            match headers.iter().position(|h| h.trim() == name) {
                Some(c) => Ok(c),
                None => config_bail!("data file {} has no column {name}", path.display()),
            }
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("data file {}", path.display()))?;
        let values = cols
            .iter()
            .map(|&c| parse_number(record.get(c).unwrap_or("")))
            .collect::<Result<Vec<_>>>()
            .with_context(|| format!("data row {}", line + 1))?;
        data.push(Observation(values));
    }
    if data.is_empty() {
        config_bail!("data file {} has no rows", path.display());
    }
    Ok(data)
}

pub fn path_csv(states: &[usize], observations: &[Observation]) -> Result<Vec<u8>> {
    let dim = observations.first().map_or(1, Observation::dim);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["index".to_string(), "state".to_string()];
    header.extend((1..=dim).map(|i| format!("obs_{i}")));
    w.write_record(&header)?;
    for (i, (s, o)) in states.iter().zip(observations).enumerate() {
        let mut row = vec![i.to_string(), s.to_string()];
        row.extend(o.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

fn write_json_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let _ = write!(out, "{:.16e}", n.as_f64().unwrap_or(f64::NAN));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_json_value(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            // serde_json's default map is ordered by key
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_json_value(item, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and floats at 17 significant digits.
pub fn to_json(value: &Value) -> String {
    let mut out = String::new();
    write_json_value(value, 0, &mut out);
    out.push('\n');
    out
}

pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

pub fn params_value(model: &BuiltinModel, theta: &[f64]) -> Value {
    serde_json::to_value(ParameterVector {
        names: model.param_names().to_vec(),
        values: theta.to_vec(),
    })
    .unwrap_or(Value::Null)
}

pub fn require_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!(ConfigError(format!("--{name} must be at least 1")));
    }
    Ok(())
}
