//! Named entities loaded from one or more JSON files.
//!
//! A bundle file is an object with any of the sections `spaces`, `measures`,
//! `plans`, `partitions`, `maps`, `lambdas` (name → entity) and `config`.
//! Any other JSON object is read as a single entity named after the file
//! stem, its kind inferred from its fields. Spaces are resolved first, then
//! measures, plans, partitions, maps and measures over measures, so a
//! reference `"@name"` may point into any file of the same load.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ot_core::disintegration::DisintegrationMap;
use ot_core::measures::same_space;
use ot_core::{DiscreteMeasure, MeasureOverMeasures, Space, TransportPlan};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{self, LabelPartition, Scope};

/// A parse or validation failure, located by file and JSON pointer.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{file}#{pointer}: {message}")]
pub struct LoadError {
    pub file: String,
    pub pointer: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Kind {
    Space,
    Measure,
    Plan,
    Partition,
    Map,
    Lambda,
}

impl Kind {
    pub const ALL: [Kind; 6] = [Kind::Space, Kind::Measure, Kind::Plan, Kind::Partition, Kind::Map, Kind::Lambda];

    pub fn section(self) -> &'static str {
        match self {
            Kind::Space => "spaces",
            Kind::Measure => "measures",
            Kind::Plan => "plans",
            Kind::Partition => "partitions",
            Kind::Map => "maps",
            Kind::Lambda => "lambdas",
        }
    }

    fn infer(v: &Value) -> Option<Kind> {
        let has = |k: &str| v.get(k).is_some();
        if has("conditionals") {
            Some(Kind::Map)
        } else if has("atoms") {
            Some(Kind::Lambda)
        } else if has("mass") {
            Some(Kind::Plan)
        } else if has("classes") {
            Some(Kind::Partition)
        } else if has("weights") {
            Some(Kind::Measure)
        } else if has("points") || has("dist") {
            Some(Kind::Space)
        } else {
            None
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.section().trim_end_matches('s'))
    }
}

/// Optional settings carried by a bundle; command-line flags win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub depth_cap: Option<usize>,
    pub search_cap: Option<usize>,
}

impl Config {
    fn parse(v: &Value, scope: &Scope) -> Result<Self, LoadError> {
        let obj = v.as_object().ok_or_else(|| scope.err("/config", "expected an object"))?;
        let mut c = Config::default();
        for (k, x) in obj {
            let p = format!("/config/{}", schema::escape(k));
            let uint = || x.as_u64().ok_or_else(|| scope.err(&p, "expected a non-negative integer"));
            match k.as_str() {
                "tol" => c.tol = Some(x.as_f64().ok_or_else(|| scope.err(&p, "expected a number"))?),
                "seed" => c.seed = Some(uint()?),
                "depth" => c.depth = Some(uint()? as usize),
                "depth_cap" => c.depth_cap = Some(uint()? as usize),
                "search_cap" => c.search_cap = Some(uint()? as usize),
                _ => return Err(scope.err(&p, format!("unknown config key '{k}'"))),
            }
        }
        Ok(c)
    }

    fn overlay(&mut self, other: Config) {
        self.tol = other.tol.or(self.tol);
        self.seed = other.seed.or(self.seed);
        self.depth = other.depth.or(self.depth);
        self.depth_cap = other.depth_cap.or(self.depth_cap);
        self.search_cap = other.search_cap.or(self.search_cap);
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        if let Some(t) = self.tol {
            m.insert("tol".into(), json!(t));
        }
        if let Some(s) = self.seed {
            m.insert("seed".into(), json!(s));
        }
        if let Some(d) = self.depth {
            m.insert("depth".into(), json!(d));
        }
        if let Some(d) = self.depth_cap {
            m.insert("depth_cap".into(), json!(d));
        }
        if let Some(s) = self.search_cap {
            m.insert("search_cap".into(), json!(s));
        }
        Value::Object(m)
    }

    fn is_empty(&self) -> bool {
        *self == Config::default()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProblemBundle {
    pub spaces: BTreeMap<String, Space>,
    pub measures: BTreeMap<String, DiscreteMeasure>,
    pub plans: BTreeMap<String, TransportPlan>,
    pub partitions: BTreeMap<String, LabelPartition>,
    pub maps: BTreeMap<String, DisintegrationMap>,
    pub lambdas: BTreeMap<String, MeasureOverMeasures>,
    pub config: Config,
    origins: BTreeMap<(Kind, String), String>,
    sources: Vec<[u8; 32]>,
}

/// Entities and config only; where they were loaded from is ignored.
impl PartialEq for ProblemBundle {
    fn eq(&self, o: &Self) -> bool {
        self.spaces == o.spaces
            && self.measures == o.measures
            && self.plans == o.plans
            && self.partitions == o.partitions
            && self.maps == o.maps
            && self.lambdas == o.lambdas
            && self.config == o.config
    }
}

enum Entity {
    Space(Space),
    Measure(DiscreteMeasure),
    Plan(TransportPlan),
    Partition(LabelPartition),
    Map(DisintegrationMap),
    Lambda(MeasureOverMeasures),
}

struct Document {
    file: String,
    /// Section → name → (pointer, value).
    sections: BTreeMap<Kind, Vec<(String, String, Value)>>,
}

fn read_document(path: &str) -> Result<(Document, Option<Value>, [u8; 32]), LoadError> {
    let err = |pointer: &str, message: String| LoadError { file: path.to_string(), pointer: pointer.into(), message };
    let bytes = std::fs::read(path).map_err(|e| err("", e.to_string()))?;
    let digest: [u8; 32] = Sha256::digest(&bytes).into();
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| err("", format!("invalid JSON: {e}")))?;
    let obj = v.as_object().ok_or_else(|| err("", "expected a JSON object".into()))?;
    let mut doc = Document { file: path.to_string(), sections: BTreeMap::new() };
    let is_bundle = obj.keys().any(|k| k == "config" || Kind::ALL.iter().any(|kind| kind.section() == k));
    if !is_bundle {
        let kind = Kind::infer(&v).ok_or_else(|| err("", "cannot tell what kind of entity this file holds".into()))?;
        let stem = Path::new(path).file_stem().and_then(|s| s.to_str()).unwrap_or(path).to_string();
        doc.sections.insert(kind, vec![(stem, String::new(), v)]);
        return Ok((doc, None, digest));
    }
    let mut config = None;
    for (key, section) in obj {
        if key == "config" {
            config = Some(section.clone());
            continue;
        }
        let kind = *Kind::ALL
            .iter()
            .find(|k| k.section() == key)
            .ok_or_else(|| err(&format!("/{}", schema::escape(key)), format!("unknown section '{key}'")))?;
        let entries = section.as_object().ok_or_else(|| err(&format!("/{key}"), "expected an object of named entities".into()))?;
        let items = entries
            .iter()
            .map(|(name, e)| (name.clone(), format!("/{key}/{}", schema::escape(name)), e.clone()))
            .collect();
        doc.sections.insert(kind, items);
    }
    Ok((doc, config, digest))
}

/// Loads and validates every file; an empty list gives an empty bundle.
pub fn load_bundle<P: AsRef<str>>(paths: &[P]) -> Result<ProblemBundle, LoadError> {
    let mut b = ProblemBundle::default();
    let mut docs = Vec::with_capacity(paths.len());
    for p in paths {
        let (doc, config, digest) = read_document(p.as_ref())?;
        if let Some(c) = config {
            let scope = Scope { file: doc.file.clone(), ..Default::default() };
            b.config.overlay(Config::parse(&c, &scope)?);
        }
        b.sources.push(digest);
        docs.push(doc);
    }
    for kind in Kind::ALL {
        for doc in &docs {
            for (name, ptr, v) in doc.sections.get(&kind).into_iter().flatten() {
                b.insert(kind, name, ptr, v, &doc.file)?;
            }
        }
    }
    Ok(b)
}

impl ProblemBundle {
    fn insert(&mut self, kind: Kind, name: &str, ptr: &str, v: &Value, file: &str) -> Result<(), LoadError> {
        let entity = {
            let scope = Scope { file: file.to_string(), spaces: Some(&self.spaces), measures: Some(&self.measures) };
            if self.origins.contains_key(&(kind, name.to_string())) {
                return Err(scope.err(ptr, format!("duplicate {kind} '{name}'")));
            }
            match kind {
                Kind::Space => Entity::Space(schema::parse_space(v, ptr, &scope)?),
                Kind::Measure => Entity::Measure(schema::parse_measure(v, ptr, &scope)?),
                Kind::Plan => Entity::Plan(schema::parse_plan(v, ptr, &scope)?),
                Kind::Partition => Entity::Partition(schema::parse_partition(v, ptr, &scope)?),
                Kind::Map => Entity::Map(schema::parse_map(v, ptr, &scope)?),
                Kind::Lambda => Entity::Lambda(schema::parse_lambda(v, ptr, &scope)?),
            }
        };
        let name = name.to_string();
        match entity {
            Entity::Space(x) => self.spaces.insert(name.clone(), x).map(drop),
            Entity::Measure(x) => self.measures.insert(name.clone(), x).map(drop),
            Entity::Plan(x) => self.plans.insert(name.clone(), x).map(drop),
            Entity::Partition(x) => self.partitions.insert(name.clone(), x).map(drop),
            Entity::Map(x) => self.maps.insert(name.clone(), x).map(drop),
            Entity::Lambda(x) => self.lambdas.insert(name.clone(), x).map(drop),
        };
        self.origins.insert((kind, name), file.to_string());
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty() && self.config.is_empty()
    }

    /// SHA-256 of the input files' bytes, in load order.
    pub fn source_digests(&self) -> &[[u8; 32]] {
        &self.sources
    }

    /// Names of the entities of `kind` loaded from `file`.
    pub fn names_from(&self, kind: Kind, file: &str) -> Vec<&str> {
        self.origins.iter().filter(|((k, _), f)| *k == kind && f.as_str() == file).map(|((_, n), _)| n.as_str()).collect()
    }

    pub fn origin(&self, kind: Kind, name: &str) -> Option<&str> {
        self.origins.get(&(kind, name.to_string())).map(String::as_str)
    }

    fn space_ref(&self, s: &Space) -> Value {
        match self.spaces.iter().find(|(_, t)| same_space(s, t)) {
            Some((name, _)) => Value::String(format!("@{name}")),
            None => schema::space_json(s),
        }
    }

    /// Serialises the bundle; spaces equal to a named space are written as
    /// references to it.
    pub fn to_json(&self) -> Value {
        let mut out = Map::new();
        let mut section = |kind: Kind, entries: Map<String, Value>| {
            if !entries.is_empty() {
                out.insert(kind.section().into(), Value::Object(entries));
            }
        };
        section(Kind::Space, self.spaces.iter().map(|(n, s)| (n.clone(), schema::space_json(s))).collect());
        section(
            Kind::Measure,
            self.measures.iter().map(|(n, m)| (n.clone(), schema::measure_json_with(m, self.space_ref(m.space())))).collect(),
        );
        section(
            Kind::Plan,
            self.plans
                .iter()
                .map(|(n, p)| (n.clone(), schema::plan_json_with(p, self.space_ref(p.row_space()), self.space_ref(p.col_space()))))
                .collect(),
        );
        section(
            Kind::Partition,
            self.partitions
                .iter()
                .map(|(n, p)| (n.clone(), schema::partition_json_with(p, p.space.as_ref().map(|s| self.space_ref(s)))))
                .collect(),
        );
        section(
            Kind::Map,
            self.maps
                .iter()
                .map(|(n, f)| (n.clone(), schema::map_json_with(f, self.space_ref(f.base()), self.space_ref(f.target()))))
                .collect(),
        );
        section(
            Kind::Lambda,
            self.lambdas.iter().map(|(n, l)| (n.clone(), schema::lambda_json_with(l, |s| self.space_ref(s)))).collect(),
        );
        if !self.config.is_empty() {
            out.insert("config".into(), self.config.to_json());
        }
        Value::Object(out)
    }
}
