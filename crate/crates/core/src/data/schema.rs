use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute slack used for every bound, block-sum and integrality check.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Likert,
    #[serde(alias = "categorical")]
    CategoricalOneHot,
    Numeric,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub lower: f64,
    pub upper: f64,
    #[serde(default, rename = "block", skip_serializing_if = "Option::is_none")]
    pub one_hot_block: Option<String>,
    pub controllable: bool,
}

impl FeatureSpec {
    pub fn likert(name: &str, lower: i32, upper: i32, controllable: bool) -> Self {
        Self::new(name, FeatureKind::Likert, lower as f64, upper as f64, None, controllable)
    }

    pub fn binary(name: &str, controllable: bool) -> Self {
        Self::new(name, FeatureKind::Binary, 0.0, 1.0, None, controllable)
    }

    pub fn numeric(name: &str, lower: f64, upper: f64, controllable: bool) -> Self {
        Self::new(name, FeatureKind::Numeric, lower, upper, None, controllable)
    }

    pub fn one_hot(name: &str, block: &str, controllable: bool) -> Self {
        Self::new(
            name,
            FeatureKind::CategoricalOneHot,
            0.0,
            1.0,
            Some(block.to_string()),
            controllable,
        )
    }

    fn new(
        name: &str,
        kind: FeatureKind,
        lower: f64,
        upper: f64,
        block: Option<String>,
        controllable: bool,
    ) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind,
            lower,
            upper,
            one_hot_block: block,
            controllable,
        }
    }
}

/// On-disk form of a schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemaFile {
    outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id_column: Option<String>,
    features: Vec<RawFeature>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawFeature {
    name: String,
    kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block: Option<String>,
    #[serde(default)]
    controllable: bool,
}

/// Validated feature schema: measurement types, bounds, one-hot blocks and
/// the controllable/fixed split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct FeatureSchema {
    outcome: String,
    id_column: Option<String>,
    features: Vec<FeatureSpec>,
    blocks: Vec<(String, Vec<usize>)>,
}

impl TryFrom<SchemaFile> for FeatureSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        let mut features = Vec::with_capacity(file.features.len());
        for raw in file.features {
            let (default_lo, default_hi) = match raw.kind {
                FeatureKind::Binary | FeatureKind::CategoricalOneHot => (Some(0.0), Some(1.0)),
                _ => (None, None),
            };
            let lower = raw.lower.or(default_lo).ok_or_else(|| {
                Error::Schema(format!("feature `{}` needs a lower bound", raw.name))
            })?;
            let upper = raw.upper.or(default_hi).ok_or_else(|| {
                Error::Schema(format!("feature `{}` needs an upper bound", raw.name))
            })?;
            features.push(FeatureSpec {
                name: raw.name,
                kind: raw.kind,
                lower,
                upper,
                one_hot_block: raw.block,
                controllable: raw.controllable,
            });
        }
        FeatureSchema::new(file.outcome, features).map(|s| s.with_id_column(file.id_column))
    }
}

impl From<FeatureSchema> for SchemaFile {
    fn from(s: FeatureSchema) -> Self {
        SchemaFile {
            outcome: s.outcome,
            id_column: s.id_column,
            features: s
                .features
                .into_iter()
                .map(|f| RawFeature {
                    name: f.name,
                    kind: f.kind,
                    lower: Some(f.lower),
                    upper: Some(f.upper),
                    block: f.one_hot_block,
                    controllable: f.controllable,
                })
                .collect(),
        }
    }
}

impl FeatureSchema {
    pub fn new(outcome: impl Into<String>, features: Vec<FeatureSpec>) -> Result<Self> {
        let outcome = outcome.into();
        if features.len() < 2 {
            return Err(Error::Schema("at least two features are required".into()));
        }
        let mut seen = BTreeMap::new();
        for (j, f) in features.iter().enumerate() {
            if let Some(prev) = seen.insert(f.name.as_str(), j) {
                return Err(Error::Schema(format!(
                    "duplicate feature name `{}` at positions {prev} and {j}",
                    f.name
                )));
            }
            if f.name == outcome {
                return Err(Error::Schema(format!("feature `{}` shadows the outcome", f.name)));
            }
            if !(f.lower.is_finite() && f.upper.is_finite()) || f.lower >= f.upper {
                return Err(Error::Schema(format!(
                    "feature `{}` needs finite bounds with lower < upper",
                    f.name
                )));
            }
            if f.lower < 0.0 {
                return Err(Error::Schema(format!(
                    "feature `{}` has a negative lower bound; encoded data must be nonnegative",
                    f.name
                )));
            }
            match f.kind {
                FeatureKind::Likert => {
                    if f.lower.fract() != 0.0 || f.upper.fract() != 0.0 {
                        return Err(Error::Schema(format!(
                            "likert feature `{}` needs integer bounds",
                            f.name
                        )));
                    }
                }
                FeatureKind::Binary | FeatureKind::CategoricalOneHot => {
                    if f.lower != 0.0 || f.upper != 1.0 {
                        return Err(Error::Schema(format!(
                            "feature `{}` must have bounds [0, 1]",
                            f.name
                        )));
                    }
                }
                FeatureKind::Numeric => {}
            }
            match (f.kind, &f.one_hot_block) {
                (FeatureKind::CategoricalOneHot, None) => {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` has no one-hot block",
                        f.name
                    )))
                }
                (k, Some(_)) if k != FeatureKind::CategoricalOneHot => {
                    return Err(Error::Schema(format!(
                        "only categorical features may declare a block (`{}`)",
                        f.name
                    )))
                }
                _ => {}
            }
        }

        let mut by_block: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (j, f) in features.iter().enumerate() {
            if let Some(b) = &f.one_hot_block {
                by_block.entry(b.as_str()).or_default().push(j);
            }
        }
        let mut blocks = Vec::with_capacity(by_block.len());
        for (name, members) in by_block {
            if members.len() < 2 {
                return Err(Error::Schema(format!("one-hot block `{name}` has fewer than 2 features")));
            }
            let ctrl = features[members[0]].controllable;
            if members.iter().any(|&j| features[j].controllable != ctrl) {
                return Err(Error::Schema(format!(
                    "one-hot block `{name}` mixes controllable and fixed features"
                )));
            }
            blocks.push((name.to_string(), members));
        }
        // keep blocks in feature order
        blocks.sort_by_key(|(_, m)| m[0]);

        Ok(FeatureSchema {
            outcome,
            id_column: None,
            features,
            blocks,
        })
    }

    pub fn with_id_column(mut self, id_column: Option<String>) -> Self {
        self.id_column = id_column;
        self
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn outcome(&self) -> &str {
        &self.outcome
    }

    pub fn id_column(&self) -> Option<&str> {
        self.id_column.as_deref()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &FeatureSpec {
        &self.features[j]
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// One-hot blocks as `(block name, member feature indices)`.
    pub fn blocks(&self) -> &[(String, Vec<usize>)] {
        &self.blocks
    }

    fn indices_where(&self, pred: impl Fn(&FeatureSpec) -> bool) -> Vec<usize> {
        (0..self.features.len()).filter(|&j| pred(&self.features[j])).collect()
    }

    pub fn likert(&self) -> Vec<usize> {
        self.indices_where(|f| f.kind == FeatureKind::Likert)
    }

    pub fn categorical(&self) -> Vec<usize> {
        self.indices_where(|f| f.kind == FeatureKind::CategoricalOneHot)
    }

    /// Numeric features, binary ones included.
    pub fn numeric(&self) -> Vec<usize> {
        self.indices_where(|f| matches!(f.kind, FeatureKind::Numeric | FeatureKind::Binary))
    }

    pub fn binary(&self) -> Vec<usize> {
        self.indices_where(|f| f.kind == FeatureKind::Binary)
    }

    pub fn controllable(&self) -> Vec<usize> {
        self.indices_where(|f| f.controllable)
    }

    pub fn fixed(&self) -> Vec<usize> {
        self.indices_where(|f| !f.controllable)
    }

    /// Intervention support: controllable features outside one-hot blocks.
    pub fn levers(&self) -> Vec<usize> {
        self.indices_where(|f| f.controllable && f.kind != FeatureKind::CategoricalOneHot)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// Relaxed: Likert and binary values may be fractional within bounds.
    Optimize,
    /// Reported values: Likert must be integral, binary and one-hot in {0, 1}.
    Report,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NonFinite,
    BelowLower { bound: f64 },
    AboveUpper { bound: f64 },
    NotInteger,
    NotBinary,
    BlockSum { block: String, sum: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub feature: usize,
    pub name: String,
    pub value: f64,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::NonFinite => write!(f, "value {} is not finite", self.value),
            ViolationKind::BelowLower { bound } => {
                write!(f, "value {} below lower bound {bound}", self.value)
            }
            ViolationKind::AboveUpper { bound } => {
                write!(f, "value {} above upper bound {bound}", self.value)
            }
            ViolationKind::NotInteger => write!(f, "likert value {} is not an integer level", self.value),
            ViolationKind::NotBinary => write!(f, "value {} is not 0 or 1", self.value),
            ViolationKind::BlockSum { block, sum } => {
                write!(f, "one-hot block `{block}` sums to {sum}, expected 1")
            }
        }
    }
}

fn is_near_integer(v: f64) -> bool {
    (v - v.round()).abs() <= FEASIBILITY_TOL
}

/// Checks one encoded row against the schema. An empty result means the row
/// is feasible under `mode`.
pub fn validate_row(x: &[f64], schema: &FeatureSchema, mode: ValidationMode) -> Vec<Violation> {
    assert_eq!(x.len(), schema.len(), "row length must match the schema");
    let mut out = Vec::new();
    let mut push = |j: usize, kind: ViolationKind| {
        out.push(Violation {
            feature: j,
            name: schema.features[j].name.clone(),
            value: x[j],
            kind,
        })
    };

    for (j, f) in schema.features.iter().enumerate() {
        let v = x[j];
        if !v.is_finite() {
            push(j, ViolationKind::NonFinite);
            continue;
        }
        if v < f.lower - FEASIBILITY_TOL {
            push(j, ViolationKind::BelowLower { bound: f.lower });
        } else if v > f.upper + FEASIBILITY_TOL {
            push(j, ViolationKind::AboveUpper { bound: f.upper });
        }
        if mode == ValidationMode::Report {
            match f.kind {
                FeatureKind::Likert if !is_near_integer(v) => push(j, ViolationKind::NotInteger),
                FeatureKind::Binary | FeatureKind::CategoricalOneHot
                    if v.abs() > FEASIBILITY_TOL && (v - 1.0).abs() > FEASIBILITY_TOL =>
                {
                    push(j, ViolationKind::NotBinary)
                }
                _ => {}
            }
        }
    }

    for (name, members) in &schema.blocks {
        let sum: f64 = members.iter().map(|&j| x[j]).sum();
        if (sum - 1.0).abs() > FEASIBILITY_TOL {
            out.push(Violation {
                feature: members[0],
                name: schema.features[members[0]].name.clone(),
                value: sum,
                kind: ViolationKind::BlockSum {
                    block: name.clone(),
                    sum,
                },
            });
        }
    }
    out
}
