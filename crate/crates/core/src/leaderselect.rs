//! Functional leader sets.
//!
//! A node set `S` is feasible when some row sub-matrix `C̄` of `C_S` makes the
//! row space of `[L; C̄]` invariant under `Aᵀ` and the reduced pair it induces
//! detectable. Minimal sets have no feasible proper subset; the functional
//! leader set is a minimal set whose best selection yields the smallest
//! `rank [L; C̄]`, which becomes the observer order `r*`.

use std::collections::HashMap;

use itertools::Itertools;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkit::{
    eigenvalues, greedy_independent_rows, numerical_rank, observable_subspace,
    orthonormal_nullspace_basis, pbh_detectable, pencil_rank_holds_outside_disk,
    pseudo_inverse_with, vstack, RealMatrix, ToleranceConfig,
};
use crate::sysmodel::{RowSelection, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DarouachConditions {
    pub rank_cond: bool,
    pub detect_cond: bool,
}

/// Centralized `r`-th order functional observer conditions for `(A, C, L)` with
/// the collective `C`.
pub fn check_darouach(m: &SystemModel, tol: &ToleranceConfig) -> DarouachConditions {
    let n = m.n();
    let c = m.full_c();
    let la = &m.l * &m.a;
    let ca = &c * &m.a;
    let rhs = vstack([&ca, &c, &m.l], n);
    let rhs_rank = numerical_rank(&rhs, tol);
    let rank_cond = numerical_rank(&vstack([&la, &ca, &c, &m.l], n), tol) == rhs_rank;

    // rank [sL - LA; CA; C] as the pencil s E - G.
    let e = vstack([&m.l, &RealMatrix::zeros(ca.nrows() + c.nrows(), n)], n);
    let g = vstack([&la, &(-&ca), &(-&c)], n);
    let extra = eigenvalues(&m.a).unwrap_or_default();
    let detect_cond = pencil_rank_holds_outside_disk(&e, &g, rhs_rank, &extra, tol);
    DarouachConditions {
        rank_cond,
        detect_cond,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityCertificate {
    pub node_set: Vec<usize>,
    pub selection: RowSelection,
    /// `rank [L; C̄_S]`.
    pub sigma_rank: usize,
    pub cond_rank_holds: bool,
    pub cond_detect_holds: bool,
}

impl FeasibilityCertificate {
    pub fn is_feasible(&self) -> bool {
        self.cond_rank_holds && self.cond_detect_holds
    }
}

/// `[L; C̃]` where `C̃` keeps the rows of `c_bar` independent of `L` and of each
/// other, picked greedily in row order.
pub fn sigma_basis(l: &RealMatrix, c_bar: &RealMatrix, tol: &ToleranceConfig) -> RealMatrix {
    let picked = greedy_independent_rows(l, c_bar, tol);
    let extra: Vec<RealMatrix> = picked
        .iter()
        .map(|&i| c_bar.rows(i, 1).into_owned())
        .collect();
    vstack(std::iter::once(l).chain(extra.iter()), l.ncols())
}

pub fn check_feasible(
    m: &SystemModel,
    set: &[usize],
    sel: &RowSelection,
    tol: &ToleranceConfig,
) -> Result<FeasibilityCertificate> {
    let c_bar = m.stacked_c(set, Some(sel))?;
    Ok(certify(m, set, sel, &c_bar, tol))
}

fn certify(
    m: &SystemModel,
    set: &[usize],
    sel: &RowSelection,
    c_bar: &RealMatrix,
    tol: &ToleranceConfig,
) -> FeasibilityCertificate {
    let n = m.n();
    let stacked = vstack([&m.l, c_bar], n);
    let sigma_rank = numerical_rank(&stacked, tol);
    let stacked_a = &stacked * &m.a;
    let cond_rank_holds = numerical_rank(&vstack([&stacked_a, &stacked], n), tol) == sigma_rank;

    let cond_detect_holds = if cond_rank_holds {
        // Equivalent PBH test on the reduced pair (A_D, C_D).
        let sigma = sigma_basis(&m.l, c_bar, tol);
        let sigma_pinv = pseudo_inverse_with(&sigma, tol);
        let a_d = &sigma * &m.a * &sigma_pinv;
        let c_d = c_bar * &sigma_pinv;
        pbh_detectable(&a_d, &c_d, tol).unwrap_or(false)
    } else {
        let e = vstack([&stacked, &RealMatrix::zeros(c_bar.nrows(), n)], n);
        let g = vstack([&stacked_a, &(-c_bar)], n);
        let extra = eigenvalues(&m.a).unwrap_or_default();
        pencil_rank_holds_outside_disk(&e, &g, sigma_rank, &extra, tol)
    };

    let mut node_set = set.to_vec();
    node_set.sort_unstable();
    node_set.dedup();
    FeasibilityCertificate {
        node_set,
        selection: sel.clone(),
        sigma_rank,
        cond_rank_holds,
        cond_detect_holds,
    }
}

/// Bounds on the brute-force leader-set search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchCaps {
    pub max_set_size: usize,
    pub max_selected_rows: usize,
}

impl Default for SearchCaps {
    fn default() -> Self {
        Self {
            max_set_size: usize::MAX,
            max_selected_rows: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MinimalLeaderSet {
    pub nodes: Vec<usize>,
    /// Selection achieving the lowest `rank [L; C̄]`.
    pub selection: RowSelection,
    pub rank: usize,
}

/// `(rank, row count, (node, row) list)`, compared lexicographically.
type SelectionKey = (usize, usize, Vec<(usize, usize)>);

fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0u64, |acc, &i| acc | (1 << i))
}

/// All minimal leader sets within `caps`, in order of increasing cardinality and
/// then lexicographic node order.
///
/// Among the satisfying selections of a minimal set the one with the lowest
/// rank is kept; ties go to fewer rows and then to the lexicographically
/// smallest `(node, row)` list.
pub fn enumerate_minimal_leader_sets(
    m: &SystemModel,
    tol: &ToleranceConfig,
    caps: &SearchCaps,
) -> Vec<MinimalLeaderSet> {
    let nodes = m.node_count();
    assert!(nodes <= 63, "leader-set search supports at most 63 nodes");
    let mut feasible: HashMap<u64, bool> = HashMap::new();
    let mut minimal = Vec::new();

    for size in 1..=nodes.min(caps.max_set_size) {
        for set in (0..nodes).combinations(size) {
            let mask = mask_of(&set);
            // Any feasible subset makes this set feasible with the same rows.
            let has_feasible_subset = set
                .iter()
                .any(|&v| size > 1 && feasible.get(&(mask & !(1 << v))).copied().unwrap_or(false));
            if has_feasible_subset {
                feasible.insert(mask, true);
                continue;
            }
            let best = best_selection_covering(m, &set, tol, caps);
            feasible.insert(mask, best.is_some());
            if let Some((selection, rank)) = best {
                minimal.push(MinimalLeaderSet {
                    nodes: set,
                    selection,
                    rank,
                });
            }
        }
    }
    minimal
}

/// Best satisfying selection among those using at least one row of every node in
/// `set`. Selections missing a node belong to a proper subset, which the caller
/// already knows to be infeasible.
fn best_selection_covering(
    m: &SystemModel,
    set: &[usize],
    tol: &ToleranceConfig,
    caps: &SearchCaps,
) -> Option<(RowSelection, usize)> {
    let pairs: Vec<(usize, usize)> = set
        .iter()
        .flat_map(|&node| (0..m.sensors[node].nrows()).map(move |r| (node, r)))
        .collect();
    if pairs.is_empty() || pairs.len() > 62 {
        return None;
    }
    let mut best: Option<(SelectionKey, RowSelection)> = None;
    for bits in 1u64..(1u64 << pairs.len()) {
        let count = bits.count_ones() as usize;
        if count > caps.max_selected_rows {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..pairs.len())
            .filter(|&b| bits & (1 << b) != 0)
            .map(|b| pairs[b])
            .collect();
        if !set
            .iter()
            .all(|&node| chosen.iter().any(|&(o, _)| o == node))
        {
            continue;
        }
        let sel = RowSelection::from_pairs(m.node_count(), &chosen);
        let c_bar = match m.stacked_c(set, Some(&sel)) {
            Ok(c) => c,
            Err(_) => continue,
        };
        // The rank is cheap; skip certification when it cannot beat the incumbent.
        let rank = numerical_rank(&vstack([&m.l, &c_bar], m.n()), tol);
        let key = (rank, count, chosen);
        if best.as_ref().is_some_and(|(k, _)| *k <= key) {
            continue;
        }
        if certify(m, set, &sel, &c_bar, tol).is_feasible() {
            best = Some((key, sel));
        }
    }
    best.map(|((rank, _, _), sel)| (sel, rank))
}

/// The chosen functional leader set `S*` with its characterizing `(C*, r*)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderSelection {
    /// Leader nodes in ascending order; sub-state `j` belongs to `s_star[j]`.
    pub s_star: Vec<usize>,
    pub selection: RowSelection,
    pub c_star: RealMatrix,
    /// Owning node of each row of `c_star`.
    pub row_owner: Vec<usize>,
    pub r_star: usize,
    /// `[L; C̃*]`, `r*` rows.
    pub sigma: RealMatrix,
}

impl LeaderSelection {
    /// Rows of `C*` owned by each leader, in `s_star` order.
    pub fn rows_of_leader(&self, leader_index: usize) -> Vec<usize> {
        let node = self.s_star[leader_index];
        (0..self.row_owner.len())
            .filter(|&k| self.row_owner[k] == node)
            .collect()
    }
}

pub fn select_functional_leader_set(
    m: &SystemModel,
    tol: &ToleranceConfig,
    caps: &SearchCaps,
) -> Result<LeaderSelection> {
    let sets = enumerate_minimal_leader_sets(m, tol, caps);
    let best = sets
        .iter()
        .min_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.nodes.cmp(&b.nodes)))
        .ok_or(Error::NoFeasibleLeaderSet)?;
    leader_selection_from(m, &best.nodes, &best.selection, tol)
}

/// Builds `(C*, Σ, r*)` for a given feasible set and selection.
pub fn leader_selection_from(
    m: &SystemModel,
    set: &[usize],
    sel: &RowSelection,
    tol: &ToleranceConfig,
) -> Result<LeaderSelection> {
    let (c_star, row_owner) = m.stacked_c_with_owners(set, Some(sel))?;
    let sigma = sigma_basis(&m.l, &c_star, tol);
    let mut s_star = set.to_vec();
    s_star.sort_unstable();
    s_star.dedup();
    Ok(LeaderSelection {
        s_star,
        selection: sel.clone(),
        r_star: sigma.nrows(),
        c_star,
        row_owner,
        sigma,
    })
}

/// Dimension of the detectable subspace of `(a, c)`: `n` minus the number of
/// unobservable modes (with algebraic multiplicity) of modulus at least
/// `1 - stability_margin`.
pub fn detectable_subspace_dim(a: &RealMatrix, c: &RealMatrix, tol: &ToleranceConfig) -> usize {
    let n = a.nrows();
    let obs = observable_subspace(a, c, tol);
    let unobs = orthonormal_nullspace_basis(&vstack([&obs], n), tol);
    if unobs.nrows() == 0 {
        return n;
    }
    let restricted = &unobs * a * unobs.transpose();
    let unstable = eigenvalues(&restricted)
        .unwrap_or_default()
        .iter()
        .filter(|z| z.norm() >= 1.0 - tol.stability_margin)
        .count();
    n - unstable
}
