//! JSON containers for fields and maps.
//!
//! A field file reads
//! `{"grid": {"n", "x_count", "T", "t_min", "m"}, "name", "kind", "values"}`
//! with `values[level][tangential]` holding a number, a vector or a matrix
//! (array of rows) depending on `kind`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::changevar::{build_map, ChangeOfVariable, CompositeMap, MapCertificate};
use crate::error::{Error, Result};
use crate::fields::{Field, Grid, GridSpec, Kind};

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        key: key.into(),
        reason: reason.into(),
    }
}

pub fn field_to_json(f: &Field) -> Value {
    let g = f.grid();
    let values: Vec<Value> = (0..g.level_count())
        .map(|j| {
            Value::Array(
                (0..g.tangential_len())
                    .map(|i| {
                        let v = f.at(g.node(j, i));
                        match f.kind() {
                            Kind::Scalar => json!(v[0]),
                            Kind::Vector(_) => json!(v),
                            Kind::Matrix(d) => json!(v.chunks(d).collect::<Vec<_>>()),
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    json!({
        "grid": g.spec(),
        "name": f.name(),
        "kind": f.kind().label(),
        "values": values,
    })
}

fn number(v: &Value, key: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(key, "expected a finite number"))
}

pub fn field_from_json(v: &Value) -> Result<Field> {
    let obj = v.as_object().ok_or_else(|| invalid("$", "expected an object"))?;
    let grid_v = obj.get("grid").ok_or_else(|| invalid("grid", "missing"))?;
    let spec: GridSpec =
        serde_json::from_value(grid_v.clone()).map_err(|e| invalid("grid", e.to_string()))?;
    let grid = Grid::from_spec(&spec).map_err(|e| invalid("grid", e.to_string()))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("name", "expected a string"))?;
    let kind_label = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid("kind", "expected \"scalar\", \"vector\" or \"matrix\""))?;
    let levels = obj
        .get("values")
        .and_then(Value::as_array)
        .ok_or_else(|| invalid("values", "expected an array of levels"))?;
    if levels.len() != grid.level_count() {
        return Err(invalid(
            "values",
            format!("{} levels, grid has {}", levels.len(), grid.level_count()),
        ));
    }
    let first = levels
        .first()
        .and_then(Value::as_array)
        .and_then(|l| l.first())
        .ok_or_else(|| invalid("values[0][0]", "missing"))?;
    let kind = match kind_label {
        "scalar" => Kind::Scalar,
        "vector" => Kind::Vector(first.as_array().map(Vec::len).ok_or_else(|| invalid("values[0][0]", "expected an array"))?),
        "matrix" => Kind::Matrix(first.as_array().map(Vec::len).ok_or_else(|| invalid("values[0][0]", "expected an array of rows"))?),
        other => return Err(invalid("kind", format!("unknown kind `{other}`"))),
    };
    let mut values = Vec::with_capacity(grid.node_count() * kind.components());
    for (j, level) in levels.iter().enumerate() {
        let level = level
            .as_array()
            .ok_or_else(|| invalid(format!("values[{j}]"), "expected an array"))?;
        if level.len() != grid.tangential_len() {
            return Err(invalid(
                format!("values[{j}]"),
                format!("{} nodes, grid has {}", level.len(), grid.tangential_len()),
            ));
        }
        for (i, node) in level.iter().enumerate() {
            let key = format!("values[{j}][{i}]");
            match kind {
                Kind::Scalar => values.push(number(node, &key)?),
                Kind::Vector(len) => {
                    let arr = node.as_array().filter(|a| a.len() == len).ok_or_else(|| invalid(&key, format!("expected {len} numbers")))?;
                    for (c, x) in arr.iter().enumerate() {
                        values.push(number(x, &format!("{key}[{c}]"))?);
                    }
                }
                Kind::Matrix(d) => {
                    let rows = node.as_array().filter(|a| a.len() == d).ok_or_else(|| invalid(&key, format!("expected {d} rows")))?;
                    for (r, row) in rows.iter().enumerate() {
                        let row = row.as_array().filter(|a| a.len() == d).ok_or_else(|| invalid(format!("{key}[{r}]"), format!("expected {d} numbers")))?;
                        for (c, x) in row.iter().enumerate() {
                            values.push(number(x, &format!("{key}[{r}][{c}]"))?);
                        }
                    }
                }
            }
        }
    }
    Field::new(grid, kind, name, values)
}

pub fn read_field(path: &Path) -> Result<Field> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)?;
    field_from_json(&v)
}

pub fn write_field(path: &Path, f: &Field) -> Result<()> {
    write_json(path, &field_to_json(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapRecord {
    pub v: Value,
    pub h: Value,
    pub certificate: MapCertificate,
}

pub fn map_to_json(rho: &ChangeOfVariable) -> MapRecord {
    MapRecord {
        v: field_to_json(rho.v()),
        h: field_to_json(rho.h()),
        certificate: rho.certificate().clone(),
    }
}

/// Rebuilds the map and checks that the stored certificate is reproduced.
pub fn map_from_json(rec: &MapRecord) -> Result<ChangeOfVariable> {
    let v = field_from_json(&rec.v).map_err(|e| nest("v", e))?;
    let h = field_from_json(&rec.h).map_err(|e| nest("h", e))?;
    let rho = build_map(&v, &h, Some(rec.certificate.eps0))?;
    if rho.certificate().certified != rec.certificate.certified {
        return Err(invalid("certificate.certified", "does not match the rebuilt map"));
    }
    Ok(rho)
}

fn nest(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput { key, reason } => Error::InvalidInput {
            key: format!("{prefix}.{key}"),
            reason,
        },
        other => other,
    }
}

pub fn composite_to_json(phi: &CompositeMap) -> Vec<MapRecord> {
    phi.stages.iter().map(map_to_json).collect()
}
