//! Observer synthesis, per-node update laws and closed-loop error dynamics.
//!
//! Every node `i` keeps an estimate `ẑ^(j)_i` of each sub-state `j` of the
//! staircase coordinates plus an estimate `ẑ_iU` of the unobservable part.
//! The leader of sub-state `j` runs a Luenberger update on it; everyone else
//! copies the dynamics applied to its spanning-tree parent's estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::decomp::StaircaseDecomposition;
use crate::error::{Error, Result};
use crate::graphkit::{DiGraph, SpanningTree};
use crate::numkit::{
    eigenvalues, max_abs, numerical_rank, pseudo_inverse_with, vstack, RealMatrix, RealVector,
    ToleranceConfig,
};
use crate::sysmodel::SystemModel;

const GAIN_ATTEMPTS: u64 = 64;

/// Target closed-loop poles `rho (1 - k/o)`, `k = 0..o`.
pub fn target_poles(o: usize, rho: f64) -> Vec<f64> {
    (0..o).map(|k| rho * (1.0 - k as f64 / o as f64)).collect()
}

fn poly_of_matrix(a: &RealMatrix, roots: &[f64]) -> RealMatrix {
    let n = a.nrows();
    roots.iter().fold(RealMatrix::identity(n, n), |acc, &r| {
        acc * (a - RealMatrix::identity(n, n) * r)
    })
}

/// Single-output Ackermann gain `h` placing `eig(a - h c)` at `roots`.
fn ackermann(
    a: &RealMatrix,
    c: &RealMatrix,
    roots: &[f64],
    tol: &ToleranceConfig,
) -> Option<RealVector> {
    let o = a.nrows();
    let mut rows = Vec::with_capacity(o);
    let mut row = c.clone();
    for _ in 0..o {
        rows.push(row.clone());
        row = &row * a;
    }
    let obs = vstack(rows.iter(), o);
    if numerical_rank(&obs, tol) < o {
        return None;
    }
    let mut e = RealVector::zeros(o);
    e[o - 1] = 1.0;
    let q = obs.lu().solve(&e)?;
    Some(poly_of_matrix(a, roots) * q)
}

fn closed_loop_ok(acl: &RealMatrix, rho: f64, tol: &ToleranceConfig) -> bool {
    if !acl.iter().all(|v| v.is_finite()) {
        return false;
    }
    if rho == 0.0 {
        let o = acl.nrows();
        let scale = max_abs(acl).max(1.0).powi(o as i32);
        let mut p = RealMatrix::identity(o, o);
        for _ in 0..o {
            p = &p * acl;
        }
        return max_abs(&p) <= tol.residual_tol * scale;
    }
    match eigenvalues(acl) {
        Ok(ev) => ev.iter().map(|z| z.norm()).fold(0.0, f64::max) <= rho + tol.stability_margin,
        Err(_) => false,
    }
}

/// Observer gain `G` with `spectral_radius(a - G c) <= rho`.
///
/// The multi-output case is reduced to a single output: with a preliminary
/// feedback `F0` and mixing vector `g` making `(a - F0 c, gᵀ c)` observable,
/// `G = F0 + h gᵀ` where `h` is the Ackermann gain of the reduced pair.
pub fn design_gain(
    a: &RealMatrix,
    c: &RealMatrix,
    rho: f64,
    tol: &ToleranceConfig,
) -> Result<RealMatrix> {
    let o = a.nrows();
    let t = c.nrows();
    if !a.is_square() || c.ncols() != o {
        return Err(Error::DimensionMismatch(format!(
            "gain design for A {}x{} and C {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if !(rho.is_finite() && (0.0..1.0).contains(&rho)) {
        return Err(Error::Validation(format!(
            "rho must lie in [0, 1), got {rho}"
        )));
    }
    let zero = RealMatrix::zeros(o, t);
    if o == 0 {
        return Ok(zero);
    }
    if rho > 0.0 && closed_loop_ok(a, rho, tol) {
        return Ok(zero);
    }
    if t == 0 {
        return Err(Error::SynthesisFailed(
            "no measurements for an unstable block".into(),
        ));
    }

    let roots = target_poles(o, rho);
    let scale = max_abs(a).max(1.0) / max_abs(c).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a1e);
    let mut candidates: Vec<(RealMatrix, RealVector)> = (0..t)
        .map(|k| {
            (
                zero.clone(),
                RealVector::from_fn(t, |i, _| f64::from(i == k)),
            )
        })
        .collect();
    candidates.push((zero.clone(), RealVector::from_element(t, 1.0)));

    for attempt in 0..GAIN_ATTEMPTS + candidates.len() as u64 {
        let (f0, g) = match candidates.get(attempt as usize) {
            Some(c) => c.clone(),
            None => {
                let f0 = if attempt % 2 == 0 {
                    zero.clone()
                } else {
                    RealMatrix::from_fn(o, t, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
                };
                let g = RealVector::from_fn(t, |_, _| rng.sample::<f64, _>(StandardNormal));
                (f0, g)
            }
        };
        let a0 = a - &f0 * c;
        let c0 = RealMatrix::from_row_slice(1, o, (g.transpose() * c).as_slice());
        let Some(h) = ackermann(&a0, &c0, &roots, tol) else {
            continue;
        };
        let gain = f0 + &h * g.transpose();
        if closed_loop_ok(&(a - &gain * c), rho, tol) {
            return Ok(gain);
        }
    }
    Err(Error::SynthesisFailed(format!(
        "could not place {o} poles within radius {rho}"
    )))
}

/// One BFS spanning tree per leader plus its `N x N` weight table:
/// `w[i][parent(i)] = 1` for non-roots and `w[root][root] = 1`.
pub fn design_consensus_weights(
    g: &DiGraph,
    leaders: &[usize],
) -> Result<(Vec<SpanningTree>, Vec<RealMatrix>)> {
    if let Some(&first) = leaders.first() {
        if first < g.node_count() && !g.is_strongly_connected() {
            return Err(Error::NotStronglyConnected { root: first });
        }
    }
    let n = g.node_count();
    let mut trees = Vec::with_capacity(leaders.len());
    let mut weights = Vec::with_capacity(leaders.len());
    for &leader in leaders {
        let tree = g.spanning_tree_rooted_at(leader)?;
        let mut w = RealMatrix::zeros(n, n);
        for (i, p) in tree.parent.iter().enumerate() {
            w[(i, p.unwrap_or(i))] = 1.0;
        }
        trees.push(tree);
        weights.push(w);
    }
    Ok((trees, weights))
}

#[derive(Debug, Clone, Serialize)]
pub struct ObserverDesign {
    /// `G_j` for the leader of sub-state `j`.
    pub gains: Vec<RealMatrix>,
    #[serde(skip)]
    pub trees: Vec<SpanningTree>,
    /// `weights[j][(i, l)] = w^j_il`.
    pub weights: Vec<RealMatrix>,
    pub rho: f64,
}

pub fn design_observer(
    st: &StaircaseDecomposition,
    g: &DiGraph,
    leaders: &[usize],
    rho: f64,
    tol: &ToleranceConfig,
) -> Result<ObserverDesign> {
    if leaders.len() != st.leader_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} leaders for {} sub-states",
            leaders.len(),
            st.leader_count()
        )));
    }
    let gains = (0..st.leader_count())
        .map(|j| design_gain(&st.a_block(j, j), &st.c_block(j, j), rho, tol))
        .collect::<Result<Vec<_>>>()?;
    let (trees, weights) = design_consensus_weights(g, leaders)?;
    Ok(ObserverDesign {
        gains,
        trees,
        weights,
        rho,
    })
}

/// Estimates held by one node, in staircase coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    pub sub: Vec<RealVector>,
    pub unobs: RealVector,
}

impl NodeEstimate {
    pub fn zeros(st: &StaircaseDecomposition) -> Self {
        Self {
            sub: st.dims.iter().map(|&o| RealVector::zeros(o)).collect(),
            unobs: RealVector::zeros(st.u),
        }
    }

    /// Splits a full staircase vector `z` into sub-state blocks.
    pub fn from_z(st: &StaircaseDecomposition, z: &RealVector) -> Self {
        Self {
            sub: (0..st.leader_count())
                .map(|j| z.rows(st.offset(j), st.dims[j]).into_owned())
                .collect(),
            unobs: z.rows(st.unobservable_offset(), st.u).into_owned(),
        }
    }

    pub fn to_z(&self) -> RealVector {
        let parts: Vec<f64> = self
            .sub
            .iter()
            .chain(std::iter::once(&self.unobs))
            .flat_map(|v| v.iter().copied())
            .collect();
        RealVector::from_vec(parts)
    }

    pub fn phi_hat(&self, st: &StaircaseDecomposition) -> RealVector {
        &st.t_d * self.to_z()
    }

    /// `ψ̂ = [I_r 0] T_D ẑ`.
    pub fn psi_hat(&self, st: &StaircaseDecomposition, r: usize) -> RealVector {
        self.phi_hat(st).rows(0, r).into_owned()
    }

    fn matches(&self, st: &StaircaseDecomposition) -> bool {
        self.sub.len() == st.leader_count()
            && self.sub.iter().zip(&st.dims).all(|(v, &o)| v.len() == o)
            && self.unobs.len() == st.u
    }
}

/// Everything a synchronous round of the observer network needs.
#[derive(Debug, Clone)]
pub struct ObserverNetwork {
    pub staircase: StaircaseDecomposition,
    pub design: ObserverDesign,
    /// Leader node of each sub-state.
    pub leaders: Vec<usize>,
    node_count: usize,
    leader_of: Vec<Option<usize>>,
}

impl ObserverNetwork {
    pub fn new(
        staircase: StaircaseDecomposition,
        design: ObserverDesign,
        leaders: Vec<usize>,
        node_count: usize,
    ) -> Result<Self> {
        if leaders.len() != staircase.leader_count() || design.gains.len() != leaders.len() {
            return Err(Error::DimensionMismatch(
                "leader, gain and sub-state counts differ".into(),
            ));
        }
        let mut leader_of = vec![None; node_count];
        for (j, &node) in leaders.iter().enumerate() {
            if node >= node_count {
                return Err(Error::InvalidNode {
                    node,
                    count: node_count,
                });
            }
            leader_of[node] = Some(j);
        }
        Ok(Self {
            staircase,
            design,
            leaders,
            node_count,
            leader_of,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Sub-state led by `node`, if any.
    pub fn leader_of(&self, node: usize) -> Option<usize> {
        self.leader_of.get(node).copied().flatten()
    }

    /// Measurements that make every innovation vanish for the given estimates.
    pub fn zero_measurements(&self) -> Vec<RealVector> {
        self.staircase
            .c_bar
            .iter()
            .map(|c| RealVector::zeros(c.nrows()))
            .collect()
    }
}

/// Round-`k+1` estimate of node `i` from the round-`k` estimates of every node.
///
/// `y` is the reduced measurement of the sub-state this node leads, and is
/// ignored for nodes that lead nothing.
pub fn node_update(
    net: &ObserverNetwork,
    i: usize,
    prev: &[NodeEstimate],
    y: Option<&RealVector>,
) -> Result<NodeEstimate> {
    let st = &net.staircase;
    if prev.len() != net.node_count {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} nodes",
            prev.len(),
            net.node_count
        )));
    }
    if i >= net.node_count {
        return Err(Error::InvalidNode {
            node: i,
            count: net.node_count,
        });
    }
    if let Some(bad) = prev.iter().position(|e| !e.matches(st)) {
        return Err(Error::DimensionMismatch(format!(
            "estimate of node {} does not match the staircase dimensions",
            bad + 1
        )));
    }
    let own = &prev[i];
    let led = net.leader_of(i);
    let mut sub = Vec::with_capacity(st.leader_count());
    for j in 0..st.leader_count() {
        let a_jj = st.a_block(j, j);
        let mut next = if led == Some(j) {
            let c_bar = &st.c_bar[j];
            let y = y.ok_or_else(|| {
                Error::DimensionMismatch(format!("leader node {} needs its measurement", i + 1))
            })?;
            if y.len() != c_bar.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "measurement of length {}, expected {}",
                    y.len(),
                    c_bar.nrows()
                )));
            }
            let mut predicted = st.c_block(j, j) * &own.sub[j];
            for l in 0..j {
                predicted += st.c_block(j, l) * &own.sub[l];
            }
            &a_jj * &own.sub[j] + &net.design.gains[j] * (y - predicted)
        } else {
            let w = &net.design.weights[j];
            let mut mix = RealVector::zeros(st.dims[j]);
            for (l, est) in prev.iter().enumerate() {
                let wil = w[(i, l)];
                if wil != 0.0 {
                    mix.axpy(wil, &est.sub[j], 1.0);
                }
            }
            &a_jj * mix
        };
        for l in 0..j {
            next += st.a_block(j, l) * &own.sub[l];
        }
        sub.push(next);
    }
    let mut unobs = st.a_u() * &own.unobs;
    for (j, s) in own.sub.iter().enumerate() {
        unobs += st.a_u_coupling(j) * s;
    }
    Ok(NodeEstimate { sub, unobs })
}

/// One synchronous round over all nodes. `y[j]` is the measurement of the leader of sub-state `j`.
pub fn network_step(
    net: &ObserverNetwork,
    prev: &[NodeEstimate],
    y: &[RealVector],
) -> Result<Vec<NodeEstimate>> {
    if y.len() != net.leaders.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} measurements for {} leaders",
            y.len(),
            net.leaders.len()
        )));
    }
    (0..net.node_count)
        .map(|i| node_update(net, i, prev, net.leader_of(i).map(|j| &y[j])))
        .collect()
}

/// Position of one error coordinate in the stacked error vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ErrorCoord {
    pub node: usize,
    /// `None` for the unobservable sub-state.
    pub substate: Option<usize>,
    pub index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorDynamics {
    pub matrix: RealMatrix,
    pub spectral_radius: f64,
    pub layout: Vec<ErrorCoord>,
    /// `(start, len)` of the diagonal blocks.
    pub blocks: Vec<(usize, usize)>,
}

impl ErrorDynamics {
    /// Stacks per-node estimates (or errors) in layout order.
    pub fn pack(&self, est: &[NodeEstimate]) -> RealVector {
        RealVector::from_iterator(
            self.layout.len(),
            self.layout.iter().map(|c| match c.substate {
                Some(j) => est[c.node].sub[j][c.index],
                None => est[c.node].unobs[c.index],
            }),
        )
    }

    pub fn unpack(
        &self,
        st: &StaircaseDecomposition,
        node_count: usize,
        v: &RealVector,
    ) -> Vec<NodeEstimate> {
        let mut out = vec![NodeEstimate::zeros(st); node_count];
        for (c, &x) in self.layout.iter().zip(v.iter()) {
            match c.substate {
                Some(j) => out[c.node].sub[j][c.index] = x,
                None => out[c.node].unobs[c.index] = x,
            }
        }
        out
    }
}

fn radius_of(m: &RealMatrix) -> f64 {
    eigenvalues(m)
        .map(|ev| ev.iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

/// Closed-loop transition matrix of all estimation errors `ẑ - z`.
///
/// Coordinates are ordered sub-state by sub-state, with the nodes of each
/// sub-state in the topological order of its spanning tree, followed by the
/// unobservable estimates of every node. With tree weights the matrix is block
/// lower triangular and its spectral radius is taken blockwise.
pub fn assemble_error_dynamics(net: &ObserverNetwork) -> ErrorDynamics {
    let st = &net.staircase;
    let n_nodes = net.node_count;
    let mut layout = Vec::new();
    let mut blocks = Vec::new();
    let mut start = vec![vec![0usize; st.leader_count() + 1]; n_nodes];
    for j in 0..st.leader_count() {
        for &node in &net.design.trees[j].order {
            start[node][j] = layout.len();
            blocks.push((layout.len(), st.dims[j]));
            layout.extend((0..st.dims[j]).map(|index| ErrorCoord {
                node,
                substate: Some(j),
                index,
            }));
        }
    }
    let uj = st.leader_count();
    for node in 0..n_nodes {
        start[node][uj] = layout.len();
        blocks.push((layout.len(), st.u));
        layout.extend((0..st.u).map(|index| ErrorCoord {
            node,
            substate: None,
            index,
        }));
    }
    blocks.retain(|&(_, len)| len > 0);

    let dim = layout.len();
    let mut m = RealMatrix::zeros(dim, dim);
    let mut put = |r: usize, c: usize, block: &RealMatrix| {
        let mut v = m.view_mut((r, c), block.shape());
        v += block;
    };
    for i in 0..n_nodes {
        let led = net.leader_of(i);
        for j in 0..st.leader_count() {
            let row = start[i][j];
            let a_jj = st.a_block(j, j);
            if led == Some(j) {
                let g = &net.design.gains[j];
                put(row, row, &(&a_jj - g * st.c_block(j, j)));
                for l in 0..j {
                    put(row, start[i][l], &(st.a_block(j, l) - g * st.c_block(j, l)));
                }
            } else {
                let w = &net.design.weights[j];
                for l in 0..n_nodes {
                    if w[(i, l)] != 0.0 {
                        put(row, start[l][j], &(&a_jj * w[(i, l)]));
                    }
                }
                for l in 0..j {
                    put(row, start[i][l], &st.a_block(j, l));
                }
            }
        }
        let row = start[i][uj];
        put(row, row, &st.a_u());
        for j in 0..st.leader_count() {
            put(row, start[i][j], &st.a_u_coupling(j));
        }
    }

    let triangular = blocks.iter().all(|&(s, len)| {
        let right = s + len;
        right == dim
            || m.view((s, right), (len, dim - right))
                .iter()
                .all(|&x| x == 0.0)
    });
    let spectral_radius = if triangular {
        blocks
            .iter()
            .map(|&(s, len)| radius_of(&m.view((s, s), (len, len)).into_owned()))
            .fold(0.0, f64::max)
    } else {
        radius_of(&m)
    };
    ErrorDynamics {
        matrix: m,
        spectral_radius,
        layout,
        blocks,
    }
}

/// Parameters of the single-function observer
/// `x̂_i[k+1] = α_i Σ_{j∈N_i} w_ij x̂_j[k] + β_i Σ_{j∈N_i} y_j[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub weights: RealMatrix,
}

impl NaiveParams {
    /// Common `alpha` and `beta` at every node, uniform weights over each neighborhood.
    pub fn uniform(g: &DiGraph, alpha: f64, beta: f64) -> Self {
        let n = g.node_count();
        let mut weights = RealMatrix::zeros(n, n);
        for i in 0..n {
            let nb = g.neighborhood(i).expect("node in range");
            let w = 1.0 / nb.len() as f64;
            for j in nb {
                weights[(i, j)] = w;
            }
        }
        Self {
            alpha: vec![alpha; n],
            beta: vec![beta; n],
            weights,
        }
    }

    pub fn validate(&self, g: &DiGraph, tol: &ToleranceConfig) -> Result<()> {
        let n = g.node_count();
        if self.alpha.len() != n || self.beta.len() != n || self.weights.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "naive parameters must cover {n} nodes"
            )));
        }
        for i in 0..n {
            let nb = g.neighborhood(i)?;
            let mut sum = 0.0;
            for j in 0..n {
                let w = self.weights[(i, j)];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::Validation(format!(
                        "weight w_{}{} must be nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                if w != 0.0 && !nb.contains(&j) {
                    return Err(Error::Validation(format!(
                        "node {} puts weight on non-neighbor {}",
                        i + 1,
                        j + 1
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > tol.residual_tol {
                return Err(Error::Validation(format!(
                    "weights of node {} sum to {sum}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// `LA = αL + Σ_j β_j C_j` for a single function and single-row sensors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveReference {
    pub alpha: f64,
    /// Nodes with a measurement row, ascending.
    pub sensor_nodes: Vec<usize>,
    /// `β_j` for each entry of `sensor_nodes`.
    pub beta: Vec<f64>,
}

pub fn naive_reference(m: &SystemModel, tol: &ToleranceConfig) -> Result<NaiveReference> {
    if m.r() != 1 {
        return Err(Error::ModeUnsupported(format!(
            "naive observer estimates one function, model has {}",
            m.r()
        )));
    }
    if let Some(i) = m.sensors.iter().position(|c| c.nrows() > 1) {
        return Err(Error::ModeUnsupported(format!(
            "naive observer needs scalar measurements, node {} has {} rows",
            i + 1,
            m.sensors[i].nrows()
        )));
    }
    let sensor_nodes: Vec<usize> = (0..m.node_count())
        .filter(|&i| m.sensors[i].nrows() == 1)
        .collect();
    let basis = vstack(
        std::iter::once(&m.l).chain(sensor_nodes.iter().map(|&i| &m.sensors[i])),
        m.n(),
    );
    let la = &m.l * &m.a;
    let coef = &la * pseudo_inverse_with(&basis, tol);
    let residual = max_abs(&(&coef * &basis - &la));
    if !tol.negligible(residual, max_abs(&la)) {
        return Err(Error::DecompositionFailed(format!(
            "LA is not a combination of L and the measurements (residual {residual:e})"
        )));
    }
    Ok(NaiveReference {
        alpha: coef[(0, 0)],
        beta: (1..coef.ncols()).map(|k| coef[(0, k)]).collect(),
        sensor_nodes,
    })
}

/// `e[k+1] = M e[k] + B1 ψ[k] + B2 y[k]`, with `y` the stacked scalar measurements.
#[derive(Debug, Clone, Serialize)]
pub struct NaiveErrorSystem {
    pub m: RealMatrix,
    pub b1: RealMatrix,
    pub b2: RealMatrix,
    pub reference: NaiveReference,
}

pub fn assemble_naive_error_dynamics(
    model: &SystemModel,
    params: &NaiveParams,
    tol: &ToleranceConfig,
) -> Result<NaiveErrorSystem> {
    let reference = naive_reference(model, tol)?;
    params.validate(&model.graph, tol)?;
    let n = model.node_count();
    let m = RealMatrix::from_fn(n, n, |i, j| params.alpha[i] * params.weights[(i, j)]);
    let b1 = RealMatrix::from_fn(n, 1, |i, _| params.alpha[i] - reference.alpha);
    let mut b2 = RealMatrix::zeros(n, reference.sensor_nodes.len());
    for i in 0..n {
        let nb = model.graph.neighborhood(i)?;
        for (k, &s) in reference.sensor_nodes.iter().enumerate() {
            let own = if nb.contains(&s) { params.beta[i] } else { 0.0 };
            b2[(i, k)] = own - reference.beta[k];
        }
    }
    Ok(NaiveErrorSystem {
        m,
        b1,
        b2,
        reference,
    })
}
