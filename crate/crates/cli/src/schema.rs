//! JSON encoding of spaces, measures, plans, partitions, maps and classes.
//!
//! Masses are written as `"p/q"` strings. On input a JSON number is also
//! accepted and converted through its exact binary value, so `0.1` becomes
//! `3602879701896397/36028797018963968`; write `"1/10"` to mean one tenth.
//! Wherever a space is expected, either an inline space object or a
//! reference `"@name"` to a named space may appear.

use std::collections::BTreeMap;

use num::Signed;
use ot_core::disintegration::DisintegrationMap;
use ot_core::mass::{self, Mass};
use ot_core::{DiscreteMeasure, FiniteMetricSpace, MeasureOverMeasures, PointedEuclideanCloud, Space, TransportPlan};
use serde_json::{json, Map, Value};
use std::sync::Arc;

use crate::bundle::LoadError;

/// Entities already resolved, for `"@name"` lookups.
#[derive(Default)]
pub struct Scope<'a> {
    pub file: String,
    pub spaces: Option<&'a BTreeMap<String, Space>>,
    pub measures: Option<&'a BTreeMap<String, DiscreteMeasure>>,
}

impl Scope<'_> {
    pub fn err(&self, pointer: &str, message: impl Into<String>) -> LoadError {
        LoadError { file: self.file.clone(), pointer: pointer.to_string(), message: message.into() }
    }
}

/// A partition given by labels; the space may be bound later.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPartition {
    pub space: Option<Space>,
    pub classes: Vec<Vec<String>>,
}

fn field<'v>(v: &'v Value, key: &str, ptr: &str, scope: &Scope) -> Result<&'v Value, LoadError> {
    v.get(key).ok_or_else(|| scope.err(ptr, format!("missing field '{key}'")))
}

fn array<'v>(v: &'v Value, ptr: &str, scope: &Scope) -> Result<&'v Vec<Value>, LoadError> {
    v.as_array().ok_or_else(|| scope.err(ptr, "expected an array"))
}

fn number(v: &Value, ptr: &str, scope: &Scope) -> Result<f64, LoadError> {
    v.as_f64().ok_or_else(|| scope.err(ptr, "expected a number"))
}

fn reference<'v>(v: &'v Value) -> Option<&'v str> {
    v.as_str().and_then(|s| s.strip_prefix('@'))
}

pub fn parse_mass(v: &Value, ptr: &str, scope: &Scope) -> Result<Mass, LoadError> {
    match v {
        Value::String(s) => mass::parse(s).map_err(|e| scope.err(ptr, e.to_string())),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Ok(mass::from_int(i)),
            None => mass::from_f64(n.as_f64().unwrap_or(f64::NAN)).map_err(|e| scope.err(ptr, e.to_string())),
        },
        _ => Err(scope.err(ptr, "expected a mass (\"p/q\" string or number)")),
    }
}

pub fn parse_space(v: &Value, ptr: &str, scope: &Scope) -> Result<Space, LoadError> {
    if let Some(name) = reference(v) {
        return scope
            .spaces
            .and_then(|s| s.get(name))
            .cloned()
            .ok_or_else(|| scope.err(ptr, format!("unknown space '@{name}'")));
    }
    if let Some(points) = v.get("points") {
        let p = format!("{ptr}/points");
        let rows = array(points, &p, scope)?
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let pi = format!("{p}/{i}");
                array(row, &pi, scope)?
                    .iter()
                    .enumerate()
                    .map(|(k, c)| number(c, &format!("{pi}/{k}"), scope))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cloud = PointedEuclideanCloud::new(rows).map_err(|e| scope.err(&p, e.to_string()))?;
        return Ok(cloud.to_space());
    }
    let labels = array(field(v, "labels", ptr, scope)?, &format!("{ptr}/labels"), scope)?
        .iter()
        .enumerate()
        .map(|(i, l)| l.as_str().map(str::to_string).ok_or_else(|| scope.err(&format!("{ptr}/labels/{i}"), "expected a string")))
        .collect::<Result<Vec<_>, _>>()?;
    let dp = format!("{ptr}/dist");
    let dist = array(field(v, "dist", ptr, scope)?, &dp, scope)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let pi = format!("{dp}/{i}");
            array(row, &pi, scope)?.iter().enumerate().map(|(j, d)| number(d, &format!("{pi}/{j}"), scope)).collect()
        })
        .collect::<Result<Vec<Vec<f64>>, _>>()?;
    FiniteMetricSpace::new(labels, dist).map(Arc::new).map_err(|e| scope.err(ptr, e.to_string()))
}

/// Weights as a label-keyed object or as an array in label order.
pub fn parse_weights(v: &Value, space: &Space, ptr: &str, scope: &Scope) -> Result<Vec<Mass>, LoadError> {
    let mut w = vec![mass::zero(); space.len()];
    match v {
        Value::Object(entries) => {
            for (label, m) in entries {
                let p = format!("{ptr}/{}", escape(label));
                let i = space.index_of(label).ok_or_else(|| scope.err(&p, format!("unknown label '{label}'")))?;
                w[i] = parse_mass(m, &p, scope)?;
            }
        }
        Value::Array(items) => {
            if items.len() != space.len() {
                return Err(scope.err(ptr, format!("{} weights for a space of {} points", items.len(), space.len())));
            }
            for (i, m) in items.iter().enumerate() {
                w[i] = parse_mass(m, &format!("{ptr}/{i}"), scope)?;
            }
        }
        _ => return Err(scope.err(ptr, "expected an object or array of weights")),
    }
    if let Some(i) = w.iter().position(|m| m.is_negative()) {
        return Err(scope.err(&format!("{ptr}/{}", escape(space.label(i))), format!("negative mass {}", mass::format(&w[i]))));
    }
    Ok(w)
}

pub fn parse_measure(v: &Value, ptr: &str, scope: &Scope) -> Result<DiscreteMeasure, LoadError> {
    if let Some(name) = reference(v) {
        return scope
            .measures
            .and_then(|m| m.get(name))
            .cloned()
            .ok_or_else(|| scope.err(ptr, format!("unknown measure '@{name}'")));
    }
    let space = parse_space(field(v, "space", ptr, scope)?, &format!("{ptr}/space"), scope)?;
    let w = parse_weights(field(v, "weights", ptr, scope)?, &space, &format!("{ptr}/weights"), scope)?;
    DiscreteMeasure::new(space, w).map_err(|e| scope.err(ptr, e.to_string()))
}

pub fn parse_plan(v: &Value, ptr: &str, scope: &Scope) -> Result<TransportPlan, LoadError> {
    let rows = parse_space(field(v, "rows", ptr, scope)?, &format!("{ptr}/rows"), scope)?;
    let cols = parse_space(field(v, "cols", ptr, scope)?, &format!("{ptr}/cols"), scope)?;
    let mp = format!("{ptr}/mass");
    let items = array(field(v, "mass", ptr, scope)?, &mp, scope)?;
    if items.len() != rows.len() {
        return Err(scope.err(&mp, format!("{} rows for a space of {} points", items.len(), rows.len())));
    }
    let mut matrix = Vec::with_capacity(rows.len());
    for (i, row) in items.iter().enumerate() {
        let pi = format!("{mp}/{i}");
        let row = array(row, &pi, scope)?;
        if row.len() != cols.len() {
            return Err(scope.err(&pi, format!("{} entries for a space of {} points", row.len(), cols.len())));
        }
        let mut out = Vec::with_capacity(cols.len());
        for (j, m) in row.iter().enumerate() {
            let pj = format!("{pi}/{j}");
            let m = parse_mass(m, &pj, scope)?;
            if m.is_negative() {
                return Err(scope.err(&pj, format!("negative mass {}", mass::format(&m))));
            }
            out.push(m);
        }
        matrix.push(out);
    }
    TransportPlan::from_matrix(rows, cols, matrix).map_err(|e| scope.err(ptr, e.to_string()))
}

pub fn parse_partition(v: &Value, ptr: &str, scope: &Scope) -> Result<LabelPartition, LoadError> {
    let space = match v.get("space") {
        Some(s) => Some(parse_space(s, &format!("{ptr}/space"), scope)?),
        None => None,
    };
    let cp = format!("{ptr}/classes");
    let classes = array(field(v, "classes", ptr, scope)?, &cp, scope)?
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let pi = format!("{cp}/{i}");
            array(class, &pi, scope)?
                .iter()
                .enumerate()
                .map(|(j, l)| l.as_str().map(str::to_string).ok_or_else(|| scope.err(&format!("{pi}/{j}"), "expected a label")))
                .collect()
        })
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok(LabelPartition { space, classes })
}

/// `{"source", "target", "conditionals": {label: weights | null}}`;
/// labels left out have no conditional.
pub fn parse_map(v: &Value, ptr: &str, scope: &Scope) -> Result<DisintegrationMap, LoadError> {
    let source = parse_space(field(v, "source", ptr, scope)?, &format!("{ptr}/source"), scope)?;
    parse_conditionals(v, source, ptr, scope)
}

pub fn parse_conditionals(v: &Value, source: Space, ptr: &str, scope: &Scope) -> Result<DisintegrationMap, LoadError> {
    let target = parse_space(field(v, "target", ptr, scope)?, &format!("{ptr}/target"), scope)?;
    let cp = format!("{ptr}/conditionals");
    let entries = field(v, "conditionals", ptr, scope)?.as_object().ok_or_else(|| scope.err(&cp, "expected an object"))?;
    let mut conds = vec![None; source.len()];
    for (label, w) in entries {
        let p = format!("{cp}/{}", escape(label));
        let x = source.index_of(label).ok_or_else(|| scope.err(&p, format!("unknown label '{label}'")))?;
        if !w.is_null() {
            let w = parse_weights(w, &target, &p, scope)?;
            conds[x] = Some(DiscreteMeasure::new(target.clone(), w).map_err(|e| scope.err(&p, e.to_string()))?);
        }
    }
    DisintegrationMap::new(source, target, conds).map_err(|e| scope.err(ptr, e.to_string()))
}

pub fn parse_lambda(v: &Value, ptr: &str, scope: &Scope) -> Result<MeasureOverMeasures, LoadError> {
    let ap = format!("{ptr}/atoms");
    let atoms = array(field(v, "atoms", ptr, scope)?, &ap, scope)?
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let pi = format!("{ap}/{i}");
            let m = parse_measure(field(a, "measure", &pi, scope)?, &format!("{pi}/measure"), scope)?;
            let w = parse_mass(field(a, "weight", &pi, scope)?, &format!("{pi}/weight"), scope)?;
            Ok((m, w))
        })
        .collect::<Result<Vec<_>, LoadError>>()?;
    MeasureOverMeasures::new(atoms).map_err(|e| scope.err(ptr, e.to_string()))
}

/// RFC 6901 escaping of one pointer segment.
pub fn escape(segment: &str) -> String {
    segment.replace('~', "~0").replace('/', "~1")
}

pub fn mass_json(m: &Mass) -> Value {
    Value::String(mass::format(m))
}

pub fn space_json(s: &FiniteMetricSpace) -> Value {
    let default_labels = s.labels().iter().enumerate().all(|(i, l)| *l == format!("p{i}"));
    match s.coords() {
        Some(points) if default_labels => json!({ "points": points }),
        _ => json!({ "labels": s.labels(), "dist": s.dist_matrix() }),
    }
}

pub fn weights_json(space: &FiniteMetricSpace, w: &[Mass]) -> Value {
    let mut out = Map::new();
    for (i, m) in w.iter().enumerate() {
        out.insert(space.label(i).to_string(), mass_json(m));
    }
    Value::Object(out)
}

/// A measure with its space written by `space_ref`.
pub fn measure_json_with(m: &DiscreteMeasure, space_ref: Value) -> Value {
    json!({ "space": space_ref, "weights": weights_json(m.space(), m.weights()) })
}

pub fn measure_json(m: &DiscreteMeasure) -> Value {
    measure_json_with(m, space_json(m.space()))
}

pub fn plan_json_with(p: &TransportPlan, rows: Value, cols: Value) -> Value {
    let mass: Vec<Vec<Value>> = (0..p.num_rows()).map(|i| p.row(i).iter().map(mass_json).collect()).collect();
    json!({ "rows": rows, "cols": cols, "mass": mass })
}

pub fn plan_json(p: &TransportPlan) -> Value {
    plan_json_with(p, space_json(p.row_space()), space_json(p.col_space()))
}

pub fn conditionals_json(f: &DisintegrationMap) -> Value {
    let mut out = Map::new();
    for (x, c) in f.conditionals().iter().enumerate() {
        let v = c.as_ref().map_or(Value::Null, |c| weights_json(c.space(), c.weights()));
        out.insert(f.base().label(x).to_string(), v);
    }
    Value::Object(out)
}

pub fn map_json_with(f: &DisintegrationMap, source: Value, target: Value) -> Value {
    json!({ "source": source, "target": target, "conditionals": conditionals_json(f) })
}

pub fn lambda_json_with(l: &MeasureOverMeasures, space_ref: impl Fn(&Space) -> Value) -> Value {
    let atoms: Vec<Value> = l
        .atoms()
        .iter()
        .map(|(m, w)| json!({ "measure": measure_json_with(m, space_ref(m.space())), "weight": mass_json(w) }))
        .collect();
    json!({ "atoms": atoms })
}

pub fn lambda_json(l: &MeasureOverMeasures) -> Value {
    lambda_json_with(l, |s| space_json(s))
}

pub fn partition_json_with(p: &LabelPartition, space_ref: Option<Value>) -> Value {
    let mut out = Map::new();
    if let Some(s) = space_ref {
        out.insert("space".into(), s);
    }
    out.insert("classes".into(), json!(p.classes));
    Value::Object(out)
}
