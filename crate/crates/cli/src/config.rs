//! JSON run configuration.
//!
//! Angles are in radians. Every field is optional; a missing chain
//! description means 16 cells with unit lengths and all parameters zero.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use qgraph_core::chain::{ChainConfig, ParamRule};
use qgraph_core::extensions::{BlockUnitary, QuasiDeltaParams};
use qgraph_core::graph::{CellWindow, ChainKind, GraphDocument, MetricGraph};
use qgraph_core::ThetaAssignment;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::CliError;

/// Inclusive cell range, written `"a..b"` or as a cell count `N` (`0..N-1`).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Cells(pub CellWindow);

impl Cells {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let window = if let Some((a, b)) = s.split_once("..") {
            let a: i64 = a.trim().parse().map_err(|_| format!("bad cell range start in {s:?}"))?;
            let b: i64 = b.trim().parse().map_err(|_| format!("bad cell range end in {s:?}"))?;
            CellWindow::new(a, b)
        } else {
            let n: i64 = s.parse().map_err(|_| format!("expected N or a..b, got {s:?}"))?;
            CellWindow::new(0, n - 1)
        };
        window.map(Cells).map_err(|e| e.to_string())
    }
}

impl fmt::Display for Cells {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.0.start, self.0.end)
    }
}

impl Default for Cells {
    fn default() -> Self {
        Cells(CellWindow { start: 0, end: 15 })
    }
}

impl Serialize for Cells {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Cells {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Range(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Cells::parse(&n.to_string()),
            Raw::Range(s) => Cells::parse(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// One value or a list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexParamsDoc {
    #[serde(default)]
    pub delta: f64,
    pub alphas: Vec<f64>,
}

impl VertexParamsDoc {
    fn build(&self, what: &str) -> Result<QuasiDeltaParams<f64>, CliError> {
        QuasiDeltaParams::new(self.delta, self.alphas.clone())
            .map_err(|e| CliError::Parse(format!("{what}: {e}")))
    }
}

/// Constant shift twist `(th^u, th^v)` on every cell.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaDoc {
    pub u: f64,
    pub v: f64,
}

/// Which transfer eigenvalue drives an eigenfunction candidate.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlochChoice {
    /// Unit-modulus multiplier with the larger argument.
    #[default]
    Positive,
    /// Unit-modulus multiplier with the smaller argument.
    Negative,
    /// Plain propagation from the seed.
    Off,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedDoc {
    /// `[re, im]` of the `e^{ikx}` amplitude on the first link.
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointInteractionDoc {
    pub alpha: f64,
    #[serde(default = "default_x_min")]
    pub x_min: f64,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
}

fn default_x_min() -> f64 {
    -5.0
}

fn default_x_max() -> f64 {
    5.0
}

fn default_length() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub cells: Cells,
    #[serde(default = "default_length")]
    pub l_u: f64,
    #[serde(default = "default_length")]
    pub l_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<[f64; 3]>,
    /// Per-cell parameters; a cell without an entry copies the nearest entry
    /// to its left (or the first entry).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cell_params: BTreeMap<i64, VertexParamsDoc>,
    /// Added to the phases of cell `i` as `i * alpha_drift`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_drift: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<OneOrMany>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_per_edge: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bloch: Option<BlochChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<SeedDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_interaction: Option<PointInteractionDoc>,
    /// A general graph for `block` and `validate`; vertex parameters are
    /// keyed by vertex id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphDocument>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vertex_params: BTreeMap<i64, VertexParamsDoc>,
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("{}").expect("empty config is valid")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub k: Vec<f64>,
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub samples: Option<usize>,
    pub m: Option<usize>,
    pub cells: Option<Cells>,
    pub points: Option<usize>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let path = e.path().to_string();
        let at = if path == "." { String::new() } else { format!(" at `{path}`") };
        CliError::Parse(format!("config error{at}: {inner}"))
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if !o.k.is_empty() {
            self.k = Some(if o.k.len() == 1 { OneOrMany::One(o.k[0]) } else { OneOrMany::Many(o.k.clone()) });
        }
        self.k_min = o.k_min.or(self.k_min);
        self.k_max = o.k_max.or(self.k_max);
        self.samples = o.samples.or(self.samples);
        self.m = o.m.or(self.m);
        self.points_per_edge = o.points.or(self.points_per_edge);
        if let Some(c) = o.cells {
            self.cells = c;
        }
        self.check()
    }

    /// Checks everything that does not need a computation.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Parse(m));
        if !(self.l_u > 0.0 && self.l_u.is_finite()) || !(self.l_v > 0.0 && self.l_v.is_finite()) {
            return bad(format!("lengths must be positive and finite (l_u={}, l_v={})", self.l_u, self.l_v));
        }
        if !self.cell_params.is_empty() && (self.delta.is_some() || self.alphas.is_some()) {
            return bad("give either delta/alphas or cell_params, not both".into());
        }
        for (i, p) in &self.cell_params {
            if p.alphas.len() != 3 {
                return bad(format!("cell_params.{i}: chain vertices take three alphas, got {}", p.alphas.len()));
            }
        }
        if let Some(k) = &self.k {
            if let Some(x) = k.values().iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return bad(format!("k must be positive, got {x}"));
            }
        }
        if let (Some(a), Some(b)) = (self.k_min, self.k_max) {
            if !(a > 0.0 && b > a) {
                return bad(format!("need 0 < k_min < k_max, got {a}, {b}"));
            }
        }
        if let Some(s) = self.samples {
            if s < 3 {
                return bad(format!("samples must be at least 3, got {s}"));
            }
        }
        if let Some(m) = self.m {
            if m < 2 {
                return bad(format!("m must be at least 2, got {m}"));
            }
        }
        if let Some(p) = self.points_per_edge {
            if p < 2 {
                return bad(format!("points_per_edge must be at least 2, got {p}"));
            }
        }
        self.chain().map(|_| ())
    }

    fn base_params(&self) -> VertexParamsDoc {
        VertexParamsDoc { delta: self.delta.unwrap_or(0.0), alphas: self.alphas.unwrap_or([0.0; 3]).to_vec() }
    }

    pub fn chain(&self) -> Result<ChainConfig<f64>, CliError> {
        let window = self.cells.0;
        let drift = self.alpha_drift.unwrap_or([0.0; 3]);
        let rule = if self.cell_params.is_empty() && drift == [0.0; 3] {
            ParamRule::Constant(self.base_params().build("chain parameters")?)
        } else {
            let listed = if self.cell_params.is_empty() {
                ParamRule::Constant(self.base_params().build("chain parameters")?)
            } else {
                let mut map = BTreeMap::new();
                for (&i, p) in &self.cell_params {
                    map.insert(i, p.build(&format!("cell_params.{i}"))?);
                }
                ParamRule::PerCell(map)
            };
            let mut map = BTreeMap::new();
            for i in window.cells() {
                let p = listed.get(i);
                let alphas = p.alphas().iter().zip(drift).map(|(a, d)| a + d * i as f64).collect();
                let q = QuasiDeltaParams::new(p.delta(), alphas)
                    .map_err(|e| CliError::Parse(format!("cell {i}: {e}")))?;
                map.insert(i, q);
            }
            ParamRule::PerCell(map)
        };
        ChainConfig::new(window, self.l_u, self.l_v, rule).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn theta(&self) -> Option<ThetaAssignment<f64>> {
        self.theta.map(|t| {
            let mut w = self.cells.0;
            w.end += 1;
            ThetaAssignment::constant(w, t.u, t.v)
        })
    }

    /// The general graph with its vertex blocks, when one is configured.
    pub fn general_graph(&self) -> Result<Option<(MetricGraph<f64>, BlockUnitary<f64>)>, CliError> {
        let Some(doc) = &self.graph else { return Ok(None) };
        let g = doc.to_graph::<f64>().map_err(|e| CliError::Parse(format!("graph: {e}")))?;
        let blocks = BlockUnitary::for_graph(&g, |id, _| {
            let p = self
                .vertex_params
                .get(&id)
                .ok_or_else(|| qgraph_core::Error::InvalidArgument(format!("no vertex_params for vertex {id}")))?;
            Ok(qgraph_core::build_quasi_delta_block(&QuasiDeltaParams::new(p.delta, p.alphas.clone())?))
        })
        .map_err(|e| CliError::Parse(format!("vertex_params: {e}")))?;
        Ok(Some((g, blocks)))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Key used in per-edge tables.
pub fn kind_label(kind: ChainKind) -> &'static str {
    match kind {
        ChainKind::U => "u",
        ChainKind::V => "v",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_forms() {
        assert_eq!(Cells::parse("16").unwrap().0, CellWindow { start: 0, end: 15 });
        assert_eq!(Cells::parse("-3..4").unwrap().0, CellWindow { start: -3, end: 4 });
        assert!(Cells::parse("5..2").is_err());
        assert!(Cells::parse("x").is_err());
    }

    #[test]
    fn empty_config_is_default_chain() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg.cells.0.len(), 16);
        assert!(cfg.chain().unwrap().is_vertex_independent());
    }

    #[test]
    fn unknown_field_names_the_path() {
        let err = parse_config(r#"{"seed": {"a": [1, 0], "c": 1}}"#).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn wrong_type_reports_line() {
        let err = parse_config("{\n  \"l_u\": \"one\"\n}").unwrap_err().to_string();
        assert!(err.contains("l_u") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn per_cell_entries_extend() {
        let cfg = parse_config(r#"{"cells": "0..5", "cell_params": {"2": {"alphas": [0.1, 0, 0]}, "4": {"alphas": [0.3, 0, 0]}}}"#)
            .unwrap();
        let c = cfg.chain().unwrap();
        assert_eq!(c.node_params(0).alphas()[0], 0.1);
        assert_eq!(c.node_params(3).alphas()[0], 0.1);
        assert_eq!(c.node_params(5).alphas()[0], 0.3);
    }

    #[test]
    fn conflicting_parameter_forms_rejected() {
        assert!(parse_config(r#"{"alphas": [0,0,0], "cell_params": {"0": {"alphas": [0,0,0]}}}"#).is_err());
        assert!(parse_config(r#"{"cell_params": {"0": {"alphas": [0,0]}}}"#).is_err());
        assert!(parse_config(r#"{"l_v": -1}"#).is_err());
        assert!(parse_config(r#"{"delta": 3.141592653589793}"#).is_err());
    }
}
