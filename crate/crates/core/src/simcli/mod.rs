//! Scenario files, the analysis pipeline and plant/observer simulation.

mod scenario;
mod simulate;

pub use scenario::{
    InitialEstimates, Mode, NaiveParamsFile, Overrides, Scenario, ScenarioFile, TolerancesFile,
    DEFAULT_HORIZON, DEFAULT_RHO,
};
pub use simulate::{export_trace, run_simulate, write_trace, SimulationMethod, SimulationTrace};

use serde::Serialize;

use crate::decomp::{
    build_functional_decomposition, build_staircase, partition_c_d, FunctionalDecomposition,
};
use crate::error::{Error, Result};
use crate::leaderselect::{
    check_darouach, detectable_subspace_dim, enumerate_minimal_leader_sets,
    select_functional_leader_set, DarouachConditions, LeaderSelection, MinimalLeaderSet,
    SearchCaps,
};
use crate::numkit::matrix_to_rows;
use crate::observernet::{
    assemble_error_dynamics, design_observer, ErrorDynamics, ObserverNetwork,
};

/// Every design artifact for a feasible scenario.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub leaders: LeaderSelection,
    pub decomposition: FunctionalDecomposition,
    pub network: ObserverNetwork,
    pub error_dynamics: ErrorDynamics,
}

pub fn build_pipeline(s: &Scenario) -> Result<Pipeline> {
    let tol = &s.tolerances;
    let m = &s.model;
    let leaders = select_functional_leader_set(m, tol, &SearchCaps::default())?;
    let decomposition = build_functional_decomposition(m, &leaders, tol)?;
    let blocks = partition_c_d(&leaders, &decomposition.c_d);
    let staircase = build_staircase(&decomposition.a_d, &blocks, tol)?;
    let design = design_observer(&staircase, &m.graph, &leaders.s_star, s.rho, tol)?;
    let network = ObserverNetwork::new(staircase, design, leaders.s_star.clone(), m.node_count())?;
    let error_dynamics = assemble_error_dynamics(&network);
    Ok(Pipeline {
        leaders,
        decomposition,
        network,
        error_dynamics,
    })
}

/// A leader set as reported to users, with 1-based node and row numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeaderSetReport {
    pub nodes: Vec<usize>,
    /// `[node, row]` pairs.
    pub rows: Vec<[usize; 2]>,
    pub rank: usize,
}

impl From<&MinimalLeaderSet> for LeaderSetReport {
    fn from(s: &MinimalLeaderSet) -> Self {
        Self {
            nodes: s.nodes.iter().map(|i| i + 1).collect(),
            rows: s
                .selection
                .pairs()
                .iter()
                .map(|&(n, r)| [n + 1, r + 1])
                .collect(),
            rank: s.rank,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub darouach: DarouachConditions,
    pub minimal_leader_sets: Vec<LeaderSetReport>,
    pub feasible: bool,
}

pub fn run_check(s: &Scenario) -> CheckReport {
    let tol = &s.tolerances;
    let sets = enumerate_minimal_leader_sets(&s.model, tol, &SearchCaps::default());
    CheckReport {
        darouach: check_darouach(&s.model, tol),
        feasible: !sets.is_empty(),
        minimal_leader_sets: sets.iter().map(LeaderSetReport::from).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub leader_set: Vec<usize>,
    pub selected_rows: Vec<[usize; 2]>,
    pub c_star: Vec<Vec<f64>>,
    pub r_star: usize,
    pub order_bound_holds: bool,
    pub transform_condition: f64,
    pub substate_dims: Vec<usize>,
    pub unobservable_dim: usize,
    pub gains: Vec<Vec<Vec<f64>>>,
    pub spectral_radius: f64,
    pub converges: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub r: usize,
    pub nodes: usize,
    pub d: usize,
    pub rho: f64,
    pub darouach: DarouachConditions,
    pub minimal_leader_sets: Vec<LeaderSetReport>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Runs the full design pipeline. A missing leader set is reported in the
/// result rather than returned as an error.
pub fn run_analyze(s: &Scenario) -> Result<AnalysisReport> {
    let tol = &s.tolerances;
    let m = &s.model;
    let check = run_check(s);
    let d = detectable_subspace_dim(&m.a, &m.full_c(), tol);
    let mut report = AnalysisReport {
        n: m.n(),
        r: m.r(),
        nodes: m.node_count(),
        d,
        rho: s.rho,
        darouach: check.darouach,
        minimal_leader_sets: check.minimal_leader_sets,
        feasible: check.feasible,
        design: None,
        message: None,
    };
    match build_pipeline(s) {
        Ok(p) => {
            let st = &p.network.staircase;
            let r_star = p.leaders.r_star;
            report.design = Some(DesignReport {
                leader_set: p.leaders.s_star.iter().map(|i| i + 1).collect(),
                selected_rows: p
                    .leaders
                    .selection
                    .pairs()
                    .iter()
                    .map(|&(n, r)| [n + 1, r + 1])
                    .collect(),
                c_star: matrix_to_rows(&p.leaders.c_star),
                r_star,
                order_bound_holds: m.r() <= r_star && r_star <= d,
                transform_condition: p.decomposition.t_condition,
                substate_dims: st.dims.clone(),
                unobservable_dim: st.u,
                gains: p.network.design.gains.iter().map(matrix_to_rows).collect(),
                spectral_radius: p.error_dynamics.spectral_radius,
                converges: p.error_dynamics.spectral_radius < 1.0 - tol.stability_margin,
            });
        }
        Err(Error::NoFeasibleLeaderSet) => {
            report.message = Some("no feasible leader set".into());
        }
        Err(e) => return Err(e),
    }
    Ok(report)
}
