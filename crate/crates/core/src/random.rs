//! Seeded random problem instances with a planted invariant subspace.
//!
//! The plant is `A = Qᵀ [[A_D, 0], [A_E, A_F]] Q` for a random orthogonal `Q`,
//! so the first `q` rows of `Q` span an `Aᵀ`-invariant subspace. `L` and some
//! sensor rows are drawn inside that subspace and the remaining sensor rows are
//! generic, which makes a good share of the draws feasible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::graphkit::DiGraph;
use crate::leaderselect::{select_functional_leader_set, LeaderSelection, SearchCaps};
use crate::numkit::{RealMatrix, ToleranceConfig};
use crate::sysmodel::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub max_n: usize,
    pub max_nodes: usize,
    pub max_rows: usize,
    /// Probability that a sensor row lies in the planted subspace.
    pub in_span: f64,
    /// Probability of each extra edge beyond the Hamiltonian cycle.
    pub edge_density: f64,
    /// Probability of planting stable modes that only generic sensor rows can see.
    pub hidden_stable: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_n: 8,
            max_nodes: 5,
            max_rows: 2,
            in_span: 0.6,
            edge_density: 0.3,
            hidden_stable: 0.4,
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> RealMatrix {
    gaussian(rng, n, n, 1.0).qr().q()
}

/// Strongly connected digraph: a random Hamiltonian cycle plus random extra edges.
pub fn random_digraph<R: Rng>(rng: &mut R, nodes: usize, density: f64) -> DiGraph {
    let mut perm: Vec<usize> = (0..nodes).collect();
    for i in (1..nodes).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut edges: Vec<(usize, usize)> = (0..nodes)
        .map(|k| (perm[k], perm[(k + 1) % nodes]))
        .collect();
    for from in 0..nodes {
        for to in 0..nodes {
            if from != to && rng.random_bool(density) {
                edges.push((from, to));
            }
        }
    }
    DiGraph::new(nodes, &edges).expect("generated edges are in range")
}

pub fn random_model<R: Rng>(rng: &mut R, shape: &InstanceShape) -> SystemModel {
    let n = rng.random_range(1..=shape.max_n);
    let nodes = rng.random_range(1..=shape.max_nodes);
    let q = rng.random_range(1..=n);
    let r = rng.random_range(1..=q);

    let orth = random_orthogonal(rng, n);
    let mut a_bar = RealMatrix::zeros(n, n);
    // Optionally split the planted block as [[A_1, 0], [A_21, A_2]] with A_2
    // stable and hidden from the in-span sensor rows.
    let hidden = if q > 1 && rng.random_bool(shape.hidden_stable) {
        rng.random_range(1..q)
    } else {
        0
    };
    let seen = q - hidden;
    let mut a_d = gaussian(rng, q, q, 1.1 / (q as f64).sqrt());
    if hidden > 0 {
        a_d.view_mut((0, seen), (seen, hidden)).fill(0.0);
        let mut stable = gaussian(rng, hidden, hidden, 1.0);
        let radius = crate::numkit::spectral_radius(&stable)
            .unwrap_or(1.0)
            .max(1e-3);
        stable *= rng.random_range(0.1..0.9) / radius;
        a_d.view_mut((seen, seen), (hidden, hidden))
            .copy_from(&stable);
    }
    a_bar.view_mut((0, 0), (q, q)).copy_from(&a_d);
    a_bar
        .view_mut((q, 0), (n - q, q))
        .copy_from(&gaussian(rng, n - q, q, 0.5));
    a_bar.view_mut((q, q), (n - q, n - q)).copy_from(&gaussian(
        rng,
        n - q,
        n - q,
        1.1 / ((n - q).max(1) as f64).sqrt(),
    ));
    let a = orth.transpose() * a_bar * &orth;

    let planted = orth.rows(0, q).into_owned();
    let l = gaussian(rng, r, q, 1.0) * &planted;
    let sensors = (0..nodes)
        .map(|_| {
            let rows = rng.random_range(0..=shape.max_rows);
            let mut c = RealMatrix::zeros(rows, n);
            for k in 0..rows {
                let row = if rng.random_bool(shape.in_span) {
                    let mut h = gaussian(rng, 1, q, 1.0);
                    h.columns_mut(seen, hidden).fill(0.0);
                    h * &planted
                } else {
                    gaussian(rng, 1, n, 1.0)
                };
                c.row_mut(k).copy_from(&row);
            }
            c
        })
        .collect();
    let graph = random_digraph(rng, nodes, shape.edge_density);
    SystemModel::new(a, sensors, l, graph)
}

/// Draws instances from `seed` until `count` of them admit a leader set.
pub fn feasible_instances(
    seed: u64,
    count: usize,
    shape: &InstanceShape,
    tol: &ToleranceConfig,
) -> Vec<(SystemModel, LeaderSelection)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let m = random_model(&mut rng, shape);
        if let Ok(ls) = select_functional_leader_set(&m, tol, &SearchCaps::default()) {
            out.push((m, ls));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_valid_and_reproducible() {
        let shape = InstanceShape::default();
        let tol = ToleranceConfig::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m1 = random_model(&mut r1, &shape);
            let m2 = random_model(&mut r2, &shape);
            assert_eq!(m1.a, m2.a);
            assert!(m1.validate(&tol).is_valid());
            assert!(m1.graph.is_strongly_connected());
            assert!(m1.n() <= 8 && m1.node_count() <= 5);
            assert!(m1.sensors.iter().all(|c| c.nrows() <= 2));
        }
    }
}
