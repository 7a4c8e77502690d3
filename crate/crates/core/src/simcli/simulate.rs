use std::io::Write;
use std::path::Path;

use crate::decomp::reduced_measurements;
use crate::error::{Error, Result};
use crate::numkit::{RealMatrix, RealVector};
use crate::observernet::{
    assemble_naive_error_dynamics, naive_reference, network_step, NaiveParams, NodeEstimate,
};

use super::scenario::{InitialEstimates, Mode, Scenario};
use super::{build_pipeline, Pipeline};

/// How the observer network is stepped in proposed mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimulationMethod {
    /// Propagate the plant and, per node, the estimation error `ẑ_i - z`
    /// under the network update with zero innovation. Estimates are reported
    /// as truth plus error, so the error stays accurate even when the plant
    /// state grows far beyond the precision of its own magnitude.
    #[default]
    Deviation,
    /// Propagate raw estimates driven by the actual measurements.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub node_count: usize,
    /// `psi[k] = L x[k]`, `k = 0..=K`.
    pub psi: Vec<RealVector>,
    /// `psi_hat[k][i]`.
    pub psi_hat: Vec<Vec<RealVector>>,
    /// `err[k][i] = ‖ψ̂_i[k] - ψ[k]‖₂`.
    pub err: Vec<Vec<f64>>,
}

impl SimulationTrace {
    pub fn horizon(&self) -> usize {
        self.psi.len() - 1
    }

    /// Largest node error at step `k`.
    pub fn max_error_at(&self, k: usize) -> f64 {
        self.err[k].iter().copied().fold(0.0, f64::max)
    }

    pub fn final_max_error(&self) -> f64 {
        self.max_error_at(self.horizon())
    }

    fn push(&mut self, psi: RealVector, hats: Vec<RealVector>, errs: Vec<f64>) {
        self.psi.push(psi);
        self.psi_hat.push(hats);
        self.err.push(errs);
    }
}

pub fn run_simulate(s: &Scenario, method: SimulationMethod) -> Result<SimulationTrace> {
    match s.mode {
        Mode::Proposed => {
            let p = build_pipeline(s)?;
            simulate_proposed(s, &p, method)
        }
        Mode::Naive => simulate_naive(s),
    }
}

fn initial_estimates(s: &Scenario, p: &Pipeline, z0: &RealVector) -> Result<Vec<NodeEstimate>> {
    let st = &p.network.staircase;
    let nodes = s.model.node_count();
    Ok(match &s.initial {
        InitialEstimates::Zeros => vec![NodeEstimate::zeros(st); nodes],
        InitialEstimates::Exact => vec![NodeEstimate::from_z(st, z0); nodes],
        InitialEstimates::Custom(rows) => {
            if rows.len() != nodes || rows.iter().any(|r| r.len() != st.order()) {
                return Err(Error::Validation(format!(
                    "initial estimates need {nodes} vectors of length {}",
                    st.order()
                )));
            }
            rows.iter()
                .map(|r| {
                    NodeEstimate::from_z(st, &(&st.t_d_inv * RealVector::from_column_slice(r)))
                })
                .collect()
        }
    })
}

fn simulate_proposed(
    s: &Scenario,
    p: &Pipeline,
    method: SimulationMethod,
) -> Result<SimulationTrace> {
    let m = &s.model;
    let st = &p.network.staircase;
    let r = m.r();
    let nodes = m.node_count();
    let sigma = &p.decomposition.sigma;
    let psi_map: RealMatrix = st.t_d.rows(0, r).into_owned();

    let mut x = s.x0.clone();
    let z0 = &st.t_d_inv * (sigma * &x);
    let mut est = initial_estimates(s, p, &z0)?;
    if method == SimulationMethod::Deviation {
        for e in est.iter_mut() {
            *e = NodeEstimate::from_z(st, &(e.to_z() - &z0));
        }
    }
    let zero_y = p.network.zero_measurements();

    let mut trace = SimulationTrace {
        node_count: nodes,
        psi: Vec::with_capacity(s.horizon + 1),
        psi_hat: Vec::with_capacity(s.horizon + 1),
        err: Vec::with_capacity(s.horizon + 1),
    };
    for k in 0..=s.horizon {
        let psi = &m.l * &x;
        let (hats, errs) = match method {
            SimulationMethod::Deviation => est
                .iter()
                .map(|d| {
                    let dev = &psi_map * d.to_z();
                    (&psi + &dev, dev.norm())
                })
                .unzip(),
            SimulationMethod::Direct => est
                .iter()
                .map(|e| {
                    let hat = &psi_map * e.to_z();
                    let err = (&hat - &psi).norm();
                    (hat, err)
                })
                .unzip(),
        };
        trace.push(psi, hats, errs);
        if k == s.horizon {
            break;
        }
        est = match method {
            SimulationMethod::Deviation => network_step(&p.network, &est, &zero_y)?,
            SimulationMethod::Direct => {
                let y = reduced_measurements(&p.leaders, &x)?;
                network_step(&p.network, &est, &y)?
            }
        };
        x = &m.a * x;
    }
    Ok(trace)
}

/// Resolves naive-mode parameters, filling gaps with the reference `α`, the
/// first reference `β` and uniform neighborhood weights.
pub(crate) fn naive_params(s: &Scenario) -> Result<NaiveParams> {
    let m = &s.model;
    let reference = naive_reference(m, &s.tolerances).map_err(|e| match e {
        Error::DecompositionFailed(msg) => Error::ModeUnsupported(msg),
        other => other,
    })?;
    let beta0 = reference.beta.first().copied().unwrap_or(0.0);
    let mut p = NaiveParams::uniform(&m.graph, reference.alpha, beta0);
    if let Some(a) = &s.naive.alpha {
        p.alpha = a.clone();
    }
    if let Some(b) = &s.naive.beta {
        p.beta = b.clone();
    }
    if let Some(w) = s.naive_weights()? {
        p.weights = w;
    }
    p.validate(&m.graph, &s.tolerances)?;
    Ok(p)
}

fn simulate_naive(s: &Scenario) -> Result<SimulationTrace> {
    let m = &s.model;
    let params = naive_params(s)?;
    let system = assemble_naive_error_dynamics(m, &params, &s.tolerances)?;
    let nodes = m.node_count();
    let mut x = s.x0.clone();
    let mut est: Vec<f64> = match &s.initial {
        InitialEstimates::Zeros => vec![0.0; nodes],
        InitialEstimates::Exact => vec![(&m.l * &x)[0]; nodes],
        InitialEstimates::Custom(rows) => {
            if rows.len() != nodes || rows.iter().any(|r| r.len() != 1) {
                return Err(Error::Validation(format!(
                    "naive initial estimates need {nodes} vectors of length 1"
                )));
            }
            rows.iter().map(|r| r[0]).collect()
        }
    };
    let neighborhoods = (0..nodes)
        .map(|i| m.graph.neighborhood(i))
        .collect::<Result<Vec<_>>>()?;

    let mut trace = SimulationTrace {
        node_count: nodes,
        psi: Vec::with_capacity(s.horizon + 1),
        psi_hat: Vec::with_capacity(s.horizon + 1),
        err: Vec::with_capacity(s.horizon + 1),
    };
    for k in 0..=s.horizon {
        let psi = &m.l * &x;
        let hats = est
            .iter()
            .map(|&v| RealVector::from_element(1, v))
            .collect();
        let errs = est.iter().map(|&v| (v - psi[0]).abs()).collect();
        trace.push(psi, hats, errs);
        if k == s.horizon {
            break;
        }
        let y: Vec<f64> = (0..nodes)
            .map(|j| {
                if m.sensors[j].nrows() == 1 {
                    (m.sensors[j].row(0) * &x)[0]
                } else {
                    0.0
                }
            })
            .collect();
        est = (0..nodes)
            .map(|i| {
                let mix: f64 = neighborhoods[i]
                    .iter()
                    .map(|&j| system.m[(i, j)] * est[j])
                    .sum();
                let meas: f64 = neighborhoods[i].iter().map(|&j| y[j]).sum();
                mix + params.beta[i] * meas
            })
            .collect();
        x = &m.a * x;
    }
    Ok(trace)
}

/// Writes the trace as CSV: one row per `(k, node)`, `k` then node ascending,
/// nodes numbered from 1.
pub fn write_trace<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let r = trace.psi.first().map_or(0, |p| p.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((1..=r).map(|i| format!("psi_{i}")));
    header.push("node".into());
    header.extend((1..=r).map(|i| format!("psihat_{i}")));
    header.push("err_norm".into());
    w.write_record(&header)?;
    let num = |v: f64| format!("{v:.16e}");
    for (k, psi) in trace.psi.iter().enumerate() {
        for node in 0..trace.node_count {
            let mut rec = vec![k.to_string()];
            rec.extend(psi.iter().map(|&v| num(v)));
            rec.push((node + 1).to_string());
            rec.extend(trace.psi_hat[k][node].iter().map(|&v| num(v)));
            rec.push(num(trace.err[k][node]));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_trace(trace: &SimulationTrace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}
