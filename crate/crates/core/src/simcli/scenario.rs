use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphkit::DiGraph;
use crate::numkit::{matrix_from_rows, matrix_to_rows, RealMatrix, RealVector, ToleranceConfig};
use crate::sysmodel::SystemModel;

pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_RHO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Proposed,
    Naive,
}

/// Initial node estimates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialEstimates {
    #[default]
    Zeros,
    /// Every node starts with zero error.
    Exact,
    /// One vector per node: `phî_i[0]` (length `r*`) in proposed mode, `x̂_i[0]` (length 1) in naive mode.
    Custom(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaiveParamsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// `weights[i][j] = w_ij`, node indices 0-based within the matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

/// On-disk scenario layout. Node numbers in `edges` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub sensors: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<TolerancesFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_params: Option<NaiveParamsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_estimates: Option<InitialEstimates>,
}

/// A validated problem instance together with its run settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: SystemModel,
    pub x0: RealVector,
    pub horizon: usize,
    pub rho: f64,
    pub tolerances: ToleranceConfig,
    pub mode: Mode,
    pub initial: InitialEstimates,
    pub naive: NaiveParamsFile,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub rank_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub rho: Option<f64>,
    pub horizon: Option<usize>,
    pub mode: Option<Mode>,
}

impl Scenario {
    pub fn new(model: SystemModel) -> Self {
        let n = model.n();
        Self {
            model,
            x0: RealVector::from_element(n, 1.0),
            horizon: DEFAULT_HORIZON,
            rho: DEFAULT_RHO,
            tolerances: ToleranceConfig::default(),
            mode: Mode::Proposed,
            initial: InitialEstimates::Zeros,
            naive: NaiveParamsFile::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, &Overrides::default())
    }

    pub fn load_with(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_with(&text, ov)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_with(text, &Overrides::default())
    }

    pub fn from_json_with(text: &str, ov: &Overrides) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::from_file(file, ov)
    }

    pub fn from_file(f: ScenarioFile, ov: &Overrides) -> Result<Self> {
        let n = f.n;
        let a = matrix_from_rows(&f.a, n)?;
        if a.nrows() != n {
            return Err(Error::Validation(format!(
                "A has {} rows, n = {n}",
                a.nrows()
            )));
        }
        let sensors = f
            .sensors
            .iter()
            .map(|rows| matrix_from_rows(rows, n))
            .collect::<Result<Vec<_>>>()?;
        let l = matrix_from_rows(&f.l, n)?;
        let node_count = sensors.len();
        let mut edges = Vec::with_capacity(f.edges.len());
        for &[from, to] in &f.edges {
            if from == 0 || to == 0 || from > node_count || to > node_count {
                return Err(Error::Validation(format!(
                    "edge [{from}, {to}] outside nodes 1..{node_count}"
                )));
            }
            edges.push((from - 1, to - 1));
        }
        let graph = DiGraph::new(node_count, &edges)?;

        let ft = f.tolerances.unwrap_or_default();
        let defaults = ToleranceConfig::default();
        let tolerances = ToleranceConfig {
            rank_tol: ov.rank_tol.or(ft.rank_tol).unwrap_or(defaults.rank_tol),
            stability_margin: ft.stability_margin.unwrap_or(defaults.stability_margin),
            residual_tol: ov
                .residual_tol
                .or(ft.residual_tol)
                .unwrap_or(defaults.residual_tol),
        };
        tolerances.validate()?;

        let model = SystemModel::validated(a, sensors, l, graph, &tolerances)?;
        if !model.graph.is_strongly_connected() {
            return Err(Error::Validation(
                "communication graph is not strongly connected".into(),
            ));
        }
        let x0 = match f.x0 {
            Some(v) if v.len() != n => {
                return Err(Error::Validation(format!(
                    "x0 has length {}, n = {n}",
                    v.len()
                )))
            }
            Some(v) => RealVector::from_vec(v),
            None => RealVector::from_element(n, 1.0),
        };
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("x0 contains non-finite entries".into()));
        }
        let horizon = ov.horizon.or(f.horizon).unwrap_or(DEFAULT_HORIZON);
        if horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        let rho = ov.rho.or(f.rho).unwrap_or(DEFAULT_RHO);
        if !(rho.is_finite() && (0.0..1.0).contains(&rho)) {
            return Err(Error::Validation(format!(
                "rho must lie in [0, 1), got {rho}"
            )));
        }
        Ok(Self {
            model,
            x0,
            horizon,
            rho,
            tolerances,
            mode: ov.mode.or(f.mode).unwrap_or_default(),
            initial: f.initial_estimates.unwrap_or_default(),
            naive: f.naive_params.unwrap_or_default(),
        })
    }

    pub fn to_file(&self) -> ScenarioFile {
        let m = &self.model;
        let d = ToleranceConfig::default();
        let t = &self.tolerances;
        ScenarioFile {
            n: m.n(),
            a: matrix_to_rows(&m.a),
            sensors: m.sensors.iter().map(matrix_to_rows).collect(),
            l: matrix_to_rows(&m.l),
            edges: m
                .graph
                .edges()
                .into_iter()
                .map(|(f, t)| [f + 1, t + 1])
                .collect(),
            x0: Some(self.x0.iter().copied().collect()),
            horizon: Some(self.horizon),
            rho: Some(self.rho),
            mode: Some(self.mode),
            tolerances: (*t != d).then_some(TolerancesFile {
                rank_tol: Some(t.rank_tol),
                stability_margin: Some(t.stability_margin),
                residual_tol: Some(t.residual_tol),
            }),
            naive_params: (self.naive != NaiveParamsFile::default()).then(|| self.naive.clone()),
            initial_estimates: (self.initial != InitialEstimates::Zeros)
                .then(|| self.initial.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub(crate) fn naive_weights(&self) -> Result<Option<RealMatrix>> {
        self.naive
            .weights
            .as_ref()
            .map(|w| matrix_from_rows(w, self.model.node_count()))
            .transpose()
    }
}
